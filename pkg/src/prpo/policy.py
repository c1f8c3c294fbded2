"""Policy abstraction and desk-scale toy policies.

A policy samples completions for a prompt and can re-score token
sequences under either its live parameters or a frozen reference
snapshot. The built-in toys are categorical softmax heads over a fixed
answer vocabulary, conditioned on the prompt's row through additive
per-key logit vectors:

    z(prompt) = sum over active keys of logits[key]

Active keys are the row's (position, name, value) triples plus their
position-free (name, value) counterparts and a bias key. The
position-tagged keys make the conditional genuinely order-sensitive, so
permuted variants of a row are distinct conditioning contexts; the
position-free keys let learning transfer across orderings and rows.

Keys are realized lazily: an untouched key's vector is derived from the
policy seed and the key alone, so reference snapshots score contexts
first seen after the snapshot identically to the live parameters until
an update actually lands on them.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .dataset import CLASSIFICATION, TaskManifest
from .errors import UnknownTokenError
from .seeding import stable_seed
from .serialize import Prompt, PromptTemplate, default_template, target_row_pairs

THINK_BODY = "Compare the row's feature values against the patterns rewarded so far."

REGRESSION_BINS = 16


@dataclass
class Completion:
    """One sampled output with per-token log-probs under both policies."""

    text: str
    token_ids: list[int]
    logprobs_current: list[float]
    logprobs_reference: list[float]

    def __post_init__(self):
        n = len(self.token_ids)
        if n < 1:
            raise ValueError("completion must have at least one token")
        if len(self.logprobs_current) != n or len(self.logprobs_reference) != n:
            raise ValueError("token_ids and log-prob lists must have equal length")
        if any(lp > 0 for lp in self.logprobs_current + self.logprobs_reference):
            raise ValueError("log-probabilities must be <= 0")


@dataclass
class PolicyParams:
    """Additive logit table: context key -> vector over the answer vocabulary."""

    logits: dict[str, np.ndarray] = field(default_factory=dict)
    answer_vocab: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.answer_vocab:
            raise ValueError("answer_vocab must be nonempty")
        if len(set(self.answer_vocab)) != len(self.answer_vocab):
            raise ValueError("answer_vocab must be deduplicated")


@dataclass(frozen=True)
class ReferenceSnapshot:
    params: PolicyParams
    snapshot_step: int


class Policy(ABC):
    """Contract shared by toy policies and the remote rollout client."""

    @abstractmethod
    def rollout(
        self, prompt: Prompt, n: int, temperature: float = 1.0, seed: int = 0
    ) -> list[Completion]:
        """Sample n completions with per-token log-probs filled in."""

    @abstractmethod
    def logprob_tagged(self, prompt: Prompt, token_ids: list[int], tag: str) -> list[float]:
        """Re-score token_ids under the current or reference parameters."""


class ToyPolicy(Policy):
    """Categorical softmax policy over a closed answer vocabulary."""

    kind = "toy"

    def __init__(
        self,
        answer_vocab: tuple[str, ...],
        seed: int = 0,
        init_scale: float = 0.0,
        temperature: float = 1.0,
        template: PromptTemplate | None = None,
        freeze_positional: bool = False,
    ):
        if temperature <= 0:
            raise ValueError("temperature must be > 0")
        self.seed = seed
        self.init_scale = float(init_scale)
        self.temperature = float(temperature)
        self.template = template or default_template()
        # frozen positional keys keep their random offsets for the whole
        # run: the conditional stays order-sensitive, but learning flows
        # through the position-free keys that all orderings share
        self.freeze_positional = freeze_positional
        self.params = PolicyParams(logits={}, answer_vocab=tuple(answer_vocab))
        self.reference: ReferenceSnapshot | None = None
        self._key_cache: dict[str, list[str]] = {}

    # -- context encoding -------------------------------------------------

    def context_keys(self, prompt: Prompt) -> list[str]:
        cached = self._key_cache.get(prompt.text)
        if cached is not None:
            return cached
        pairs = target_row_pairs(prompt, self.template)
        keys = ["bias"]
        for i, (name, value) in enumerate(pairs):
            keys.append(f"pos{i}|{name}={value}")
            keys.append(f"any|{name}={value}")
        if len(self._key_cache) > 100_000:
            self._key_cache.clear()
        self._key_cache[prompt.text] = keys
        return keys

    def _init_vector(self, key: str) -> np.ndarray:
        size = len(self.params.answer_vocab)
        if self.init_scale > 0.0 and key.startswith("pos"):
            rng = np.random.Generator(np.random.PCG64(stable_seed(self.seed, "init", key)))
            return rng.normal(0.0, self.init_scale, size)
        return np.zeros(size)

    def _vector(self, params: PolicyParams, key: str) -> np.ndarray:
        vec = params.logits.get(key)
        return vec if vec is not None else self._init_vector(key)

    def _context_logits(self, params: PolicyParams, prompt: Prompt) -> np.ndarray:
        total = np.zeros(len(params.answer_vocab))
        for key in self.context_keys(prompt):
            total += self._vector(params, key)
        return total

    def _log_softmax(self, params: PolicyParams, prompt: Prompt) -> np.ndarray:
        z = self._context_logits(params, prompt) / self.temperature
        z = z - np.max(z)
        return z - np.log(np.sum(np.exp(z)))

    # -- Policy contract ---------------------------------------------------

    def rollout(
        self, prompt: Prompt, n: int, temperature: float = 1.0, seed: int = 0
    ) -> list[Completion]:
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if temperature != self.temperature:
            raise ValueError(
                f"rollout temperature {temperature} != policy temperature "
                f"{self.temperature}; construct the policy with the sampling "
                "temperature so re-scoring stays consistent"
            )
        logp = self._log_softmax(self.params, prompt)
        ref_params = self.reference.params if self.reference is not None else self.params
        ref_logp = self._log_softmax(ref_params, prompt)
        cumulative = np.cumsum(np.exp(logp))
        rng = np.random.Generator(np.random.PCG64(seed))
        draws = np.minimum(
            np.searchsorted(cumulative, rng.random(n), side="right"), len(logp) - 1
        )
        completions = []
        for token in draws:
            token = int(token)
            answer = self.params.answer_vocab[token]
            text = f"<think>{THINK_BODY}</think><answer>{answer}</answer>"
            completions.append(
                Completion(
                    text=text,
                    token_ids=[token],
                    logprobs_current=[float(logp[token])],
                    logprobs_reference=[float(ref_logp[token])],
                )
            )
        return completions

    def logprob_tagged(self, prompt: Prompt, token_ids: list[int], tag: str) -> list[float]:
        if tag == "current":
            params = self.params
        elif tag == "reference":
            params = self.reference.params if self.reference is not None else self.params
        else:
            raise ValueError(f"unknown params_tag {tag!r}")
        return self.logprob_under(params, prompt, token_ids)

    # -- parameter-explicit scoring and gradients --------------------------

    def logprob(self, completion: Completion, params: PolicyParams, prompt: Prompt) -> list[float]:
        return self.logprob_under(params, prompt, completion.token_ids)

    def logprob_under(
        self, params: PolicyParams, prompt: Prompt, token_ids: list[int]
    ) -> list[float]:
        logp = self._log_softmax(params, prompt)
        out = []
        for token in token_ids:
            if not 0 <= token < len(params.answer_vocab):
                raise UnknownTokenError(f"token id {token} outside vocabulary")
            out.append(float(logp[token]))
        return out

    def weighted_logprob_grad(
        self,
        completion: Completion,
        params: PolicyParams,
        prompt: Prompt,
        weights: list[float],
    ) -> dict[str, np.ndarray]:
        """Gradient of sum_t weights[t] * logprob_t with respect to the logits.

        Each active key receives the same vector because the context
        logits are an unweighted sum over keys.
        """
        if len(weights) != len(completion.token_ids):
            raise ValueError("one weight per token required")
        probs = np.exp(self._log_softmax(params, prompt))
        g = np.zeros_like(probs)
        for token, weight in zip(completion.token_ids, weights):
            if not 0 <= token < len(params.answer_vocab):
                raise UnknownTokenError(f"token id {token} outside vocabulary")
            onehot = np.zeros_like(probs)
            onehot[token] = 1.0
            g += weight * (onehot - probs) / self.temperature
        return {key: g.copy() for key in self.context_keys(prompt)}

    def grad_logprob(
        self, completion: Completion, params: PolicyParams, prompt: Prompt
    ) -> dict[str, np.ndarray]:
        """Gradient of the completion's total log-prob; onehot minus softmax."""
        return self.weighted_logprob_grad(
            completion, params, prompt, [1.0] * len(completion.token_ids)
        )

    # -- training support ---------------------------------------------------

    def snapshot(self, step: int = 0) -> ReferenceSnapshot:
        frozen = PolicyParams(
            logits={k: v.copy() for k, v in self.params.logits.items()},
            answer_vocab=self.params.answer_vocab,
        )
        return ReferenceSnapshot(params=frozen, snapshot_step=step)

    def refresh_reference(self, step: int = 0) -> ReferenceSnapshot:
        self.reference = self.snapshot(step)
        return self.reference

    def apply_gradient(self, grads: dict[str, np.ndarray], learning_rate: float) -> None:
        """One descent step on the supplied loss gradient."""
        for key, g in grads.items():
            if self.freeze_positional and key.startswith("pos"):
                continue
            vec = self._vector(self.params, key).copy()
            self.params.logits[key] = vec - learning_rate * g


def save_policy(path, policy: ToyPolicy) -> None:
    """Persist a toy policy's parameters and construction arguments as JSON."""
    import json
    from pathlib import Path

    payload = {
        "kind": policy.kind,
        "seed": policy.seed,
        "init_scale": policy.init_scale,
        "temperature": policy.temperature,
        "freeze_positional": policy.freeze_positional,
        "answer_vocab": list(policy.params.answer_vocab),
        "logits": {k: v.tolist() for k, v in policy.params.logits.items()},
    }
    if hasattr(policy, "bins"):
        payload["bins"] = policy.bins
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_policy(path, manifest: TaskManifest, template: PromptTemplate | None = None) -> ToyPolicy:
    """Rebuild a toy policy saved by save_policy."""
    import json
    from pathlib import Path

    data = json.loads(Path(path).read_text(encoding="utf-8"))
    kwargs = dict(
        seed=data["seed"],
        init_scale=data["init_scale"],
        temperature=data["temperature"],
        template=template,
        freeze_positional=data.get("freeze_positional", False),
    )
    if data["kind"] == "classifier":
        policy = ToyClassifierPolicy(manifest, **kwargs)
    elif data["kind"] == "regressor":
        policy = ToyRegressorPolicy(manifest, bins=data.get("bins", REGRESSION_BINS), **kwargs)
    else:
        raise ValueError(f"unknown policy kind {data['kind']!r}")
    if list(policy.params.answer_vocab) != data["answer_vocab"]:
        raise ValueError("saved answer_vocab does not match the manifest")
    policy.params.logits = {k: np.asarray(v, dtype=float) for k, v in data["logits"].items()}
    return policy


class ToyClassifierPolicy(ToyPolicy):
    """Softmax over the manifest's label vocabulary."""

    kind = "classifier"

    def __init__(self, manifest: TaskManifest, **kwargs):
        if manifest.task != CLASSIFICATION:
            raise ValueError("classifier policy needs a classification manifest")
        super().__init__(tuple(manifest.label_values), **kwargs)


class ToyRegressorPolicy(ToyPolicy):
    """Softmax over equal-width bins of the label range; answers are midpoints."""

    kind = "regressor"

    def __init__(self, manifest: TaskManifest, bins: int = REGRESSION_BINS, **kwargs):
        if manifest.label_range is None:
            raise ValueError("regressor policy needs a resolved label_range")
        lo, hi = manifest.label_range
        width = (hi - lo) / bins
        from .dataset import render_number

        vocab = tuple(render_number(lo + (b + 0.5) * width) for b in range(bins))
        super().__init__(vocab, **kwargs)
        self.bins = bins
