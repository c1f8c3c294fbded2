"""Label-preserving column permutations.

Each training example is expanded into m reorderings of its feature
columns. The identity ordering is always kept as the first variant so
the canonical serialization is among the prompts; the remaining m-1
orders are drawn uniformly without replacement whenever the symmetric
group is large enough, and with replacement otherwise.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass

from .dataset import TabularExample
from .errors import ArityMismatchError


@dataclass(frozen=True)
class Permutation:
    """A bijection on feature indices: output slot j takes input order[j]."""

    order: tuple[int, ...]

    def __post_init__(self):
        n = len(self.order)
        if sorted(self.order) != list(range(n)):
            raise ValueError(f"{self.order} is not a permutation of 0..{n - 1}")

    @property
    def n(self) -> int:
        return len(self.order)

    def is_identity(self) -> bool:
        return all(i == j for i, j in enumerate(self.order))

    def inverse(self) -> Permutation:
        inv = [0] * len(self.order)
        for j, i in enumerate(self.order):
            inv[i] = j
        return Permutation(tuple(inv))

    def compose(self, other: Permutation) -> Permutation:
        """Return the permutation equivalent to applying other, then self."""
        if len(self.order) != len(other.order):
            raise ArityMismatchError("cannot compose permutations of different arity")
        return Permutation(tuple(other.order[i] for i in self.order))


@dataclass(frozen=True)
class PermutationSet:
    perms: tuple[Permutation, ...]
    includes_identity: bool
    seed: int


def identity(n: int) -> Permutation:
    return Permutation(tuple(range(n)))


def sample_permutations(n: int, m: int, seed: int) -> PermutationSet:
    """Sample m feature orderings for an n-column example.

    The first member is always the identity. When n! >= m the members
    are pairwise distinct (uniform over the non-identity orders);
    otherwise repeats are allowed, degenerating to m identities at n=1.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")

    rng = random.Random(seed)
    perms: list[Permutation] = [identity(n)]
    needed = m - 1
    if needed == 0:
        return PermutationSet(tuple(perms), True, seed)

    size = math.factorial(n)
    if size >= m:
        if n <= 8:
            # small groups: enumerate and sample exactly
            pool = [
                Permutation(p)
                for p in itertools.permutations(range(n))
                if p != tuple(range(n))
            ]
            perms.extend(rng.sample(pool, needed))
        else:
            seen = {perms[0].order}
            while len(perms) < m:
                order = list(range(n))
                rng.shuffle(order)
                key = tuple(order)
                if key in seen:
                    continue
                seen.add(key)
                perms.append(Permutation(key))
    else:
        for _ in range(needed):
            order = list(range(n))
            rng.shuffle(order)
            perms.append(Permutation(tuple(order)))

    return PermutationSet(tuple(perms), True, seed)


def apply_permutation(example: TabularExample, perm: Permutation) -> TabularExample:
    """Reorder an example's features; the label never moves."""
    if perm.n != example.n_features:
        raise ArityMismatchError(
            f"permutation arity {perm.n} != feature count {example.n_features}"
        )
    features = tuple(example.features[i] for i in perm.order)
    return TabularExample(features, example.label, example.label_numeric)
