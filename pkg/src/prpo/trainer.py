"""Clipped policy-gradient trainer with two-level advantages.

One training step samples a batch of examples; each example is expanded
into m permutation variants, each variant serialized and rolled out G
times. Rule-based rewards become intra/inter advantages, and the policy
is updated by descending

    loss = -mean_tokens[ min(r * A, clip(r, 1-eps, 1+eps) * A) ]
           + beta_kl * mean_tokens[ exp(d) - d - 1 ],   d = logp_ref - logp_cur

where r is the per-token probability ratio against the frozen reference
policy and A is the completion's combined advantage, shared across its
tokens. The reference snapshot refreshes once per epoch.

GRPO mode is the m=1 special case with the plain group z-score; the
ablation harness pairs it against the two-level estimator at matched
rollout budget.

The remote rollout client speaks JSON over HTTP:

    POST /rollout  {prompt, n, temperature, seed}
        -> {completions: [{text, token_ids, logprobs}]}
    POST /logprob  {prompt, token_ids, params_tag}   # current | reference
        -> {logprobs}
"""

from __future__ import annotations

import math
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
import requests

from .advantage import SIGMA_FLOOR, AdvantageBundle, GroupRewards, estimate, grpo_advantages
from .dataset import (
    CLASSIFICATION,
    DatasetSplit,
    TabularExample,
    TaskManifest,
    resolve_label_range,
)
from .errors import (
    LengthMismatchError,
    NonFiniteLossError,
    ProtocolViolationError,
    RemoteUnavailableError,
    ShapeMismatchError,
)
from .permute import apply_permutation, sample_permutations
from .policy import Completion, Policy, PolicyParams, ToyPolicy
from .reward import RewardRecord, classification_reward, regression_reward
from .seeding import stable_seed
from .serialize import (
    ExtractedAnswer,
    Prompt,
    PromptTemplate,
    build_prompt,
    default_template,
    extract_answer,
    serialize_row,
)

MODE_PRPO = "prpo"
MODE_GRPO = "grpo"


@dataclass(frozen=True)
class TrainConfig:
    m: int = 4
    G: int = 5
    alpha: float = 0.1
    gamma: float = 0.9
    beta_kl: float = 0.001
    clip_eps: float = 0.2
    learning_rate: float = 1e-6
    batch_size: int = 128
    mini_batch: int = 32
    epochs: int = 30
    seed: int = 0
    mode: str = MODE_PRPO
    sigma_floor: float = SIGMA_FLOOR
    temperature: float = 1.0
    max_steps: int | None = None
    permutation_refresh: str = "run"  # "run" | "epoch"
    emit_baseline: bool = False
    jobs: int = 1

    def __post_init__(self):
        for name in ("m", "G", "batch_size", "mini_batch", "epochs", "jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if self.beta_kl < 0:
            raise ValueError(f"beta_kl must be >= 0, got {self.beta_kl}")
        if self.mode not in (MODE_PRPO, MODE_GRPO):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.permutation_refresh not in ("run", "epoch"):
            raise ValueError(f"unknown permutation_refresh {self.permutation_refresh!r}")
        if self.mode == MODE_GRPO and self.m != 1:
            object.__setattr__(self, "m", 1)


@dataclass(frozen=True)
class StepMetrics:
    step: int
    mean_reward: float
    loss: float
    kl: float
    clip_fraction: float
    nonzero_advantage_fraction: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RolloutGroup:
    """G completions for one permuted prompt, with answers and rewards."""

    prompt: Prompt
    completions: list[Completion]
    answers: list[ExtractedAnswer]
    rewards: list[RewardRecord]


def ppo_term(ratio: float, advantage: float, clip_eps: float) -> float:
    """min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)."""
    if ratio <= 0:
        raise ValueError(f"ratio must be > 0, got {ratio}")
    clipped = min(max(ratio, 1.0 - clip_eps), 1.0 + clip_eps)
    return min(ratio * advantage, clipped * advantage)


def kl_penalty(logp_current: list[float], logp_reference: list[float]) -> float:
    """Nonnegative per-token estimator exp(d) - d - 1, averaged over tokens."""
    if len(logp_current) != len(logp_reference):
        raise LengthMismatchError(
            f"{len(logp_current)} current vs {len(logp_reference)} reference log-probs"
        )
    total = 0.0
    for lp_cur, lp_ref in zip(logp_current, logp_reference):
        d = lp_ref - lp_cur
        total += math.exp(d) - d - 1.0
    return total / len(logp_current)


# -- loss -------------------------------------------------------------------


@dataclass
class LossFragment:
    """Per-block pieces that feed step metrics."""

    surrogate: float
    kl: float
    clipped_tokens: int
    total_tokens: int
    nonzero_advantages: int
    completions: int

    @property
    def clip_fraction(self) -> float:
        return self.clipped_tokens / self.total_tokens if self.total_tokens else 0.0


def _block_loss(
    groups: list[RolloutGroup],
    advantages: AdvantageBundle,
    config: TrainConfig,
    logp_current: list[list[list[float]]] | None = None,
) -> tuple[float, LossFragment]:
    """Loss over one example's m x G block.

    logp_current, when given, overrides the sampling-time log-probs with
    values recomputed under live parameters (shape mirrors the block).
    """
    combined = advantages.combined
    if combined.shape != (len(groups), len(groups[0].completions)):
        raise ShapeMismatchError(
            f"advantages shape {combined.shape} does not match "
            f"{len(groups)} groups of {len(groups[0].completions)}"
        )
    n_completions = 0
    surrogate_sum = 0.0
    kl_sum = 0.0
    clipped = 0
    total_tokens = 0
    nonzero = 0
    for k, group in enumerate(groups):
        for i, completion in enumerate(group.completions):
            advantage = float(combined[k, i])
            lp_cur = (
                logp_current[k][i] if logp_current is not None else completion.logprobs_current
            )
            lp_ref = completion.logprobs_reference
            if len(lp_cur) != len(lp_ref):
                raise LengthMismatchError("current/reference log-prob length mismatch")
            term_sum = 0.0
            kl_tok = 0.0
            for cur, ref in zip(lp_cur, lp_ref):
                ratio = _safe_exp(cur - ref)
                term_sum += ppo_term(ratio, advantage, config.clip_eps)
                d = ref - cur
                kl_tok += _safe_exp(d) - d - 1.0
                if not (1.0 - config.clip_eps) <= ratio <= (1.0 + config.clip_eps):
                    clipped += 1
                total_tokens += 1
            n_tok = len(lp_cur)
            surrogate_sum += term_sum / n_tok
            kl_sum += kl_tok / n_tok
            n_completions += 1
            if advantage != 0.0:
                nonzero += 1
    surrogate = surrogate_sum / n_completions
    kl = kl_sum / n_completions
    loss = -surrogate + config.beta_kl * kl
    fragment = LossFragment(
        surrogate=surrogate,
        kl=kl,
        clipped_tokens=clipped,
        total_tokens=total_tokens,
        nonzero_advantages=nonzero,
        completions=n_completions,
    )
    return loss, fragment


def prpo_loss(
    groups: list[RolloutGroup], advantages: AdvantageBundle, config: TrainConfig
) -> tuple[float, LossFragment]:
    """Loss from the log-probs stored on the completions."""
    return _block_loss(groups, advantages, config)


def prpo_loss_under(
    policy: ToyPolicy,
    params: PolicyParams,
    groups: list[RolloutGroup],
    advantages: AdvantageBundle,
    config: TrainConfig,
) -> tuple[float, LossFragment]:
    """Loss with current log-probs recomputed under arbitrary parameters."""
    logp = [
        [policy.logprob_under(params, g.prompt, c.token_ids) for c in g.completions]
        for g in groups
    ]
    return _block_loss(groups, advantages, config, logp_current=logp)


def prpo_grad(
    policy: ToyPolicy,
    params: PolicyParams,
    groups: list[RolloutGroup],
    advantages: AdvantageBundle,
    config: TrainConfig,
) -> tuple[float, LossFragment, dict[str, np.ndarray]]:
    """Analytic gradient of the block loss with respect to the policy logits.

    Per token, the surrogate contributes -A * r through the unclipped
    branch only (the clipped branch is constant in theta), and the KL
    estimator contributes beta * (1 - exp(d)).
    """
    combined = advantages.combined
    n_completions = sum(len(g.completions) for g in groups)
    grads: dict[str, np.ndarray] = {}
    loss, fragment = None, None
    surrogate_sum = 0.0
    kl_sum = 0.0
    clipped = 0
    total_tokens = 0
    nonzero = 0
    for k, group in enumerate(groups):
        for i, completion in enumerate(group.completions):
            advantage = float(combined[k, i])
            lp_cur = policy.logprob_under(params, group.prompt, completion.token_ids)
            lp_ref = completion.logprobs_reference
            n_tok = len(lp_cur)
            weights = []
            term_sum = 0.0
            kl_tok = 0.0
            for cur, ref in zip(lp_cur, lp_ref):
                ratio = _safe_exp(cur - ref)
                d = ref - cur
                unclipped = ratio * advantage <= _clip(ratio, config.clip_eps) * advantage
                term_sum += ppo_term(ratio, advantage, config.clip_eps)
                kl_tok += _safe_exp(d) - d - 1.0
                if not (1.0 - config.clip_eps) <= ratio <= (1.0 + config.clip_eps):
                    clipped += 1
                total_tokens += 1
                weight = 0.0
                if unclipped:
                    weight -= advantage * ratio
                weight += config.beta_kl * (1.0 - _safe_exp(d))
                weights.append(weight / (n_completions * n_tok))
            surrogate_sum += term_sum / n_tok
            kl_sum += kl_tok / n_tok
            if advantage != 0.0:
                nonzero += 1
            if any(w != 0.0 for w in weights):
                contribution = policy.weighted_logprob_grad(
                    completion, params, group.prompt, weights
                )
                for key, vec in contribution.items():
                    if key in grads:
                        grads[key] += vec
                    else:
                        grads[key] = vec
    surrogate = surrogate_sum / n_completions
    kl = kl_sum / n_completions
    loss = -surrogate + config.beta_kl * kl
    fragment = LossFragment(
        surrogate=surrogate,
        kl=kl,
        clipped_tokens=clipped,
        total_tokens=total_tokens,
        nonzero_advantages=nonzero,
        completions=n_completions,
    )
    return loss, fragment, grads


def _clip(ratio: float, eps: float) -> float:
    return min(max(ratio, 1.0 - eps), 1.0 + eps)


def _safe_exp(x: float) -> float:
    """exp with the argument capped below the float64 overflow point.

    Keeps runaway log-ratios representable (possibly astronomically
    large) instead of raising OverflowError; genuine NaNs pass through
    and are caught by the non-finite loss check.
    """
    if x > 709.0:
        x = 709.0
    elif x < -709.0:
        x = -709.0
    return math.exp(x)


# -- rollout collection -------------------------------------------------------


def score_completion(
    answer: ExtractedAnswer, example: TabularExample, manifest: TaskManifest
) -> RewardRecord:
    if manifest.task == CLASSIFICATION:
        return classification_reward(answer, example.label)
    y_true = (
        example.label_numeric if example.label_numeric is not None else float(example.label)
    )
    return regression_reward(answer, y_true, manifest.label_range)


def collect_example_block(
    policy: Policy,
    example: TabularExample,
    manifest: TaskManifest,
    template: PromptTemplate,
    config: TrainConfig,
    example_id: int,
    epoch: int = 0,
    prompt_cache: dict | None = None,
) -> tuple[list[RolloutGroup], AdvantageBundle]:
    """Permute, serialize, roll out, reward, and estimate advantages."""
    perm_epoch = epoch if config.permutation_refresh == "epoch" else 0
    cache_key = (example_id, perm_epoch)
    prompts = prompt_cache.get(cache_key) if prompt_cache is not None else None
    if prompts is None:
        perm_seed = stable_seed(config.seed, "perm", example_id, perm_epoch)
        perm_set = sample_permutations(example.n_features, config.m, perm_seed)
        prompts = []
        for k, perm in enumerate(perm_set.perms):
            permuted = apply_permutation(example, perm)
            prompts.append(
                build_prompt(
                    serialize_row(permuted, template),
                    manifest,
                    template,
                    example_id=example_id,
                    permutation_id=k,
                    n_features=example.n_features,
                )
            )
        if prompt_cache is not None:
            prompt_cache[cache_key] = prompts
    groups: list[RolloutGroup] = []
    for k, prompt in enumerate(prompts):
        rollout_seed = stable_seed(config.seed, "rollout", epoch, example_id, k)
        completions = policy.rollout(prompt, config.G, config.temperature, rollout_seed)
        answers = [extract_answer(c.text, manifest) for c in completions]
        rewards = [score_completion(a, example, manifest) for a in answers]
        groups.append(RolloutGroup(prompt, completions, answers, rewards))
    block = GroupRewards(
        np.array([[r.value for r in g.rewards] for g in groups], dtype=float)
    )
    if config.mode == MODE_GRPO:
        z = grpo_advantages(block.per_perm[0], config.sigma_floor)
        bundle = AdvantageBundle(
            intra=z[None, :],
            inter=z[None, :],
            combined=z[None, :],
            alpha=config.alpha,
            gamma=config.gamma,
            sigma_floor=config.sigma_floor,
        )
    else:
        bundle = estimate(block, config.alpha, config.gamma, config.sigma_floor)
    return groups, bundle


# -- training loop ------------------------------------------------------------


def _chunks(seq: list, size: int):
    for start in range(0, len(seq), size):
        yield seq[start : start + size]


def train(
    dataset: DatasetSplit,
    manifest: TaskManifest,
    config: TrainConfig,
    policy: ToyPolicy,
    template: PromptTemplate | None = None,
    metrics_sink=None,
    step_hook=None,
) -> tuple[PolicyParams, list[StepMetrics]]:
    """Run the full training loop; deterministic for a fixed config seed.

    metrics_sink, when given, receives each StepMetrics as soon as the
    step finishes (the CLI streams them to JSON lines). step_hook, when
    given, is called as step_hook(step, policy) after each emitted row;
    the ablation harness uses it for checkpoint evaluations.
    """
    if not dataset.train:
        raise ValueError("train split is empty")
    template = template or getattr(policy, "template", None) or default_template()
    manifest = resolve_label_range(manifest, dataset.train)
    examples = list(dataset.train)
    metrics: list[StepMetrics] = []
    # remote policies expose no gradients or local parameters; the loop then
    # only observes (rollouts, rewards, losses) without applying updates
    trainable = hasattr(policy, "apply_gradient")

    def emit(row: StepMetrics):
        metrics.append(row)
        if metrics_sink is not None:
            metrics_sink(row)
        if step_hook is not None:
            step_hook(row.step, policy)

    prompt_cache: dict = {}

    def collect_batch(batch_ids: list[int], epoch: int):
        def one(eid: int):
            return collect_example_block(
                policy, examples[eid], manifest, template, config, eid, epoch,
                prompt_cache=prompt_cache,
            )

        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                return list(pool.map(one, batch_ids))
        return [one(eid) for eid in batch_ids]

    if trainable:
        policy.refresh_reference(0)
    step = 0

    if config.emit_baseline:
        order = list(range(len(examples)))
        random.Random(stable_seed(config.seed, "order", 0)).shuffle(order)
        first = order[: config.batch_size]
        blocks = collect_batch(first, epoch=-1)
        loss_sum, reward_sum, reward_n = 0.0, 0.0, 0
        frags = []
        for groups, bundle in blocks:
            loss, fragment = prpo_loss(groups, bundle, config)
            loss_sum += loss
            frags.append(fragment)
            for g in groups:
                for r in g.rewards:
                    reward_sum += r.value
                    reward_n += 1
        emit(_step_row(0, reward_sum / reward_n, loss_sum / len(blocks), frags))

    done = False
    for epoch in range(config.epochs):
        if done:
            break
        if epoch > 0 and trainable:
            policy.refresh_reference(step)
        order = list(range(len(examples)))
        random.Random(stable_seed(config.seed, "order", epoch)).shuffle(order)
        for batch_ids in _chunks(order, config.batch_size):
            step += 1
            blocks = collect_batch(batch_ids, epoch)
            reward_sum, reward_n = 0.0, 0
            for groups, _ in blocks:
                for g in groups:
                    for r in g.rewards:
                        reward_sum += r.value
                        reward_n += 1
            mini_losses = []
            frags = []
            for mini in _chunks(blocks, config.mini_batch):
                grads_acc: dict[str, np.ndarray] = {}
                loss_acc = 0.0
                for groups, bundle in mini:
                    if trainable:
                        loss, fragment, grads = prpo_grad(
                            policy, policy.params, groups, bundle, config
                        )
                        scale = 1.0 / len(mini)
                        for key, vec in grads.items():
                            if key in grads_acc:
                                grads_acc[key] += scale * vec
                            else:
                                grads_acc[key] = scale * vec
                    else:
                        loss, fragment = prpo_loss(groups, bundle, config)
                    loss_acc += loss
                    frags.append(fragment)
                mini_loss = loss_acc / len(mini)
                if not math.isfinite(mini_loss):
                    raise NonFiniteLossError(
                        f"non-finite loss {mini_loss} at step {step} (epoch {epoch}); "
                        f"mean reward so far {reward_sum / max(reward_n, 1):.4f}"
                    )
                if trainable:
                    policy.apply_gradient(grads_acc, config.learning_rate)
                mini_losses.append(mini_loss)
            emit(
                _step_row(
                    step,
                    reward_sum / reward_n,
                    sum(mini_losses) / len(mini_losses),
                    frags,
                )
            )
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break
    return (policy.params if trainable else None), metrics


def _step_row(step: int, mean_reward: float, loss: float, frags: list[LossFragment]) -> StepMetrics:
    total_tokens = sum(f.total_tokens for f in frags)
    clipped = sum(f.clipped_tokens for f in frags)
    completions = sum(f.completions for f in frags)
    nonzero = sum(f.nonzero_advantages for f in frags)
    kl = sum(f.kl for f in frags) / len(frags)
    return StepMetrics(
        step=step,
        mean_reward=mean_reward,
        loss=loss,
        kl=kl,
        clip_fraction=clipped / total_tokens if total_tokens else 0.0,
        nonzero_advantage_fraction=nonzero / completions if completions else 0.0,
    )


# -- paired ablation harness ----------------------------------------------------


@dataclass(frozen=True)
class AblationResult:
    """One seed's paired comparison at matched rollout budget."""

    seed: int
    auc_prpo: float
    auc_grpo: float
    curves: dict  # mode -> list of (step, mean_reward) checkpoints

    @property
    def delta(self) -> float:
        return self.auc_prpo - self.auc_grpo


def curve_auc(points: list[tuple[int, float]]) -> float:
    """Trapezoidal area under (step, value) points, normalized by the span."""
    if len(points) < 2:
        return points[0][1] if points else 0.0
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += 0.5 * (y0 + y1) * (x1 - x0)
    return area / (points[-1][0] - points[0][0])


def checkpoint_mean_reward(
    policy: Policy,
    examples: list[TabularExample],
    manifest: TaskManifest,
    template: PromptTemplate,
    step: int,
    rollouts: int = 2,
) -> float:
    """Mean reward on the checkpoint's shared evaluation prompt set.

    Each example is re-serialized under a fresh ordering drawn from
    (step, example) alone, so paired runs at any mode or seed score
    against identical prompts with identical rollout seeds. Scoring on
    held-out orderings is what the column-order invariance prior claims
    to buy; a single fixed order would instead reward memorizing it.
    """
    total, count = 0.0, 0
    for i, example in enumerate(examples):
        perm = sample_permutations(
            example.n_features, 2, stable_seed("checkpoint-perm", step, i)
        ).perms[1]
        prompt = build_prompt(
            serialize_row(apply_permutation(example, perm), template),
            manifest,
            template,
            example_id=i,
            permutation_id=1,
            n_features=example.n_features,
        )
        for completion in policy.rollout(
            prompt, rollouts, 1.0, stable_seed("checkpoint-roll", step, i)
        ):
            answer = extract_answer(completion.text, manifest)
            total += score_completion(answer, example, manifest).value
            count += 1
    return total / count


def paired_ablation(
    examples: list[TabularExample] | tuple[TabularExample, ...],
    manifest: TaskManifest,
    template: PromptTemplate | None = None,
    seeds=range(5),
    steps: int = 200,
    cadence: int = 50,
    m: int = 4,
    G: int = 5,
    learning_rate: float = 4.0,
    batch_size: int = 16,
    init_scale: float = 1.5,
    jobs: int = 1,
    policy_factory=None,
) -> list[AblationResult]:
    """Train both estimators per seed at matched budget and compare AUCs.

    The two-level run uses m x G rollouts per example; the single-group
    baseline gets the same budget as one group of m*G. Checkpoint
    rewards are measured on the shared evaluation prompts every
    `cadence` steps, including step 0.
    """
    template = template or default_template()
    manifest = resolve_label_range(manifest, list(examples))
    dataset = DatasetSplit(train=tuple(examples), test=(), seed=0)

    def default_factory(seed: int):
        from .policy import ToyClassifierPolicy, ToyRegressorPolicy

        kwargs = dict(
            seed=seed, init_scale=init_scale, template=template, freeze_positional=True
        )
        if manifest.task == CLASSIFICATION:
            return ToyClassifierPolicy(manifest, **kwargs)
        return ToyRegressorPolicy(manifest, **kwargs)

    policy_factory = policy_factory or default_factory
    results = []
    for seed in seeds:
        curves: dict[str, list[tuple[int, float]]] = {}
        aucs: dict[str, float] = {}
        for mode in (MODE_PRPO, MODE_GRPO):
            config = TrainConfig(
                m=m if mode == MODE_PRPO else 1,
                G=G if mode == MODE_PRPO else m * G,
                mode=mode,
                batch_size=batch_size,
                mini_batch=batch_size,
                epochs=1_000_000,
                max_steps=steps,
                seed=seed,
                learning_rate=learning_rate,
                emit_baseline=True,
                jobs=jobs,
            )
            curve: list[tuple[int, float]] = []

            def hook(step: int, policy: Policy, curve=curve):
                if step % cadence == 0:
                    curve.append(
                        (step, checkpoint_mean_reward(policy, list(examples), manifest, template, step))
                    )

            policy = policy_factory(seed)
            train(dataset, manifest, config, policy, template=template, step_hook=hook)
            curves[mode] = curve
            aucs[mode] = curve_auc(curve)
        results.append(
            AblationResult(
                seed=seed,
                auc_prpo=aucs[MODE_PRPO],
                auc_grpo=aucs[MODE_GRPO],
                curves=curves,
            )
        )
    return results


# -- remote rollout client -----------------------------------------------------


class RemotePolicy(Policy):
    """Policy backed by an inference server speaking the rollout protocol."""

    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        retries: int = 3,
        backoff: float = 0.25,
        timeout: float = 10.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._session = session or requests.Session()

    def _post(self, path: str, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt > 0:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(
                    self.endpoint + path, json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = RuntimeError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProtocolViolationError(f"{path} returned HTTP {resp.status_code}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolViolationError(f"{path} returned invalid JSON: {exc}")
        raise RemoteUnavailableError(
            f"{self.endpoint}{path} unreachable after {self.retries} attempts: {last_error}"
        )

    def probe(self) -> None:
        """Raise RemoteUnavailableError unless the endpoint answers at all."""
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt > 0:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                self._session.get(self.endpoint + "/", timeout=self.timeout)
                return
            except requests.RequestException as exc:
                last_error = exc
        raise RemoteUnavailableError(
            f"{self.endpoint} unreachable after {self.retries} attempts: {last_error}"
        )

    @staticmethod
    def _check_logprobs(values, n_tokens: int, context: str) -> list[float]:
        if (
            not isinstance(values, list)
            or len(values) != n_tokens
            or not all(isinstance(v, (int, float)) for v in values)
        ):
            raise ProtocolViolationError(f"{context}: expected {n_tokens} numeric log-probs")
        if any(v > 0 for v in values):
            raise ProtocolViolationError(f"{context}: log-probs must be <= 0")
        return [float(v) for v in values]

    def rollout(
        self, prompt: Prompt, n: int, temperature: float = 1.0, seed: int = 0
    ) -> list[Completion]:
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        data = self._post(
            "/rollout",
            {"prompt": prompt.text, "n": n, "temperature": temperature, "seed": seed},
        )
        completions_raw = data.get("completions")
        if not isinstance(completions_raw, list) or len(completions_raw) != n:
            raise ProtocolViolationError(f"/rollout: expected {n} completions")
        out = []
        for idx, item in enumerate(completions_raw):
            if not isinstance(item, dict) or not isinstance(item.get("text"), str):
                raise ProtocolViolationError(f"/rollout completion {idx}: bad shape")
            token_ids = item.get("token_ids")
            if (
                not isinstance(token_ids, list)
                or not token_ids
                or not all(isinstance(t, int) for t in token_ids)
            ):
                raise ProtocolViolationError(f"/rollout completion {idx}: bad token_ids")
            logprobs = self._check_logprobs(
                item.get("logprobs"), len(token_ids), f"/rollout completion {idx}"
            )
            reference = self.logprob_tagged(prompt, token_ids, "reference")
            out.append(
                Completion(
                    text=item["text"],
                    token_ids=list(token_ids),
                    logprobs_current=logprobs,
                    logprobs_reference=reference,
                )
            )
        return out

    def logprob_tagged(self, prompt: Prompt, token_ids: list[int], tag: str) -> list[float]:
        data = self._post(
            "/logprob",
            {"prompt": prompt.text, "token_ids": list(token_ids), "params_tag": tag},
        )
        return self._check_logprobs(data.get("logprobs"), len(token_ids), "/logprob")


def remote_rollout_client(endpoint: str, **kwargs) -> RemotePolicy:
    """Build a Policy speaking the rollout protocol against `endpoint`."""
    return RemotePolicy(endpoint, **kwargs)
