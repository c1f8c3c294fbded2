"""Exception types shared across the package."""

from __future__ import annotations


class PrpoError(Exception):
    """Base class for all errors raised by this package."""


# dataset
class MissingColumnError(PrpoError):
    """A column referenced by the manifest does not exist in the CSV."""


class EmptyDatasetError(PrpoError):
    """Loading produced zero usable examples."""


class LabelParseFailureError(PrpoError):
    """A row's label does not conform to the manifest task.

    Carries the offending zero-based data row index.
    """

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class DegenerateSplitError(PrpoError):
    """A train/test split would leave one side empty."""


# permute
class ArityMismatchError(PrpoError):
    """Permutation length does not match the example's feature count."""


# serialize
class EmptyFeaturesError(PrpoError):
    """An example with zero features cannot be serialized."""


class ShotLabelMismatchError(PrpoError):
    """An in-context shot's label does not conform to the manifest."""


# reward / eval
class DegenerateRangeError(PrpoError):
    """Label range has min >= max, so errors cannot be normalized."""


class LengthMismatchError(PrpoError):
    """Paired sequences have different lengths."""


class CoverageMismatchError(PrpoError):
    """Methods being aggregated do not cover the same dataset set."""


# advantage
class GroupTooSmallError(PrpoError):
    """A reward group is too small for relative advantage estimation."""


class ShapeMismatchError(PrpoError):
    """Array shapes disagree where they must match."""


# policy
class UnknownTokenError(PrpoError):
    """A completion token is not part of the policy's answer vocabulary."""


# trainer / remote client
class NonFiniteLossError(PrpoError):
    """Training produced a NaN or infinite loss."""


class RemoteUnavailableError(PrpoError):
    """The rollout endpoint could not be reached after retries."""


class ProtocolViolationError(PrpoError):
    """The rollout server returned a payload that violates the protocol."""
