"""Task metrics and cross-dataset aggregation.

Classification reports accuracy, regression reports normalized mean
absolute error. Aggregation over several methods produces per-method
means, average ranks (accuracy ranks descending, error ascending), and
pairwise win/tie/loss counts with ties below a small metric delta.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dataset import CLASSIFICATION, TabularExample, TaskManifest
from .errors import CoverageMismatchError, LengthMismatchError
from .policy import Policy
from .reward import nmae
from .seeding import stable_seed
from .serialize import (
    KIND_CLASS,
    KIND_NUMBER,
    ExtractedAnswer,
    PromptTemplate,
    build_prompt,
    extract_answer,
    serialize_row,
)

TIE_DELTA = 1e-4
HIGHER_BETTER = {"accuracy"}


@dataclass(frozen=True)
class EvalReport:
    dataset_id: str
    task: str
    metric_name: str  # "accuracy" | "nmae"
    value: float
    n_examples: int
    malformed_count: int


@dataclass(frozen=True)
class AggregateResult:
    mean_by_method: dict[str, float]
    mean_rank_by_method: dict[str, float]
    win_tie_loss: dict[tuple[str, str], tuple[int, int, int]]


def accuracy(predictions: list[ExtractedAnswer], labels: list[str]) -> float:
    """Fraction of case-folded exact matches; malformed counts as wrong."""
    if len(predictions) != len(labels):
        raise LengthMismatchError(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not predictions:
        raise LengthMismatchError("need at least one prediction")
    hits = 0
    for pred, label in zip(predictions, labels):
        if pred.kind != KIND_CLASS or pred.label is None:
            continue
        if pred.label.strip().casefold() == label.strip().casefold():
            hits += 1
    return hits / len(predictions)


def nmae_metric(
    predictions: list[ExtractedAnswer],
    labels: list[float],
    label_range: tuple[float, float],
) -> float:
    """Mean per-example nmae; malformed rows take the batch-worst error.

    Imputing the worst observed error (full range when nothing valid was
    observed) keeps non-answers from looking better than bad answers.
    """
    if len(predictions) != len(labels):
        raise LengthMismatchError(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not predictions:
        raise LengthMismatchError("need at least one prediction")
    per_example: list[float | None] = []
    for pred, label in zip(predictions, labels):
        if pred.kind == KIND_NUMBER and pred.value is not None:
            per_example.append(nmae(label, pred.value, label_range))
        else:
            per_example.append(None)
    observed = [e for e in per_example if e is not None]
    worst = max(observed) if observed else 1.0
    return sum(e if e is not None else worst for e in per_example) / len(per_example)


def evaluate_policy(
    policy: Policy,
    examples: list[TabularExample] | tuple[TabularExample, ...],
    manifest: TaskManifest,
    template: PromptTemplate,
    dataset_id: str = "dataset",
    seed: int = 0,
    temperature: float = 1.0,
    shots: list[tuple[TabularExample, str]] | tuple = (),
) -> tuple[EvalReport, list[ExtractedAnswer]]:
    """Sample one completion per example and score the extracted answers."""
    predictions: list[ExtractedAnswer] = []
    for i, example in enumerate(examples):
        prompt = build_prompt(
            serialize_row(example, template),
            manifest,
            template,
            shots=shots,
            example_id=i,
            n_features=example.n_features,
        )
        completion = policy.rollout(
            prompt, 1, temperature, stable_seed(seed, "eval", dataset_id, i)
        )[0]
        predictions.append(extract_answer(completion.text, manifest))
    malformed = sum(1 for p in predictions if p.kind not in (KIND_CLASS, KIND_NUMBER))
    if manifest.task == CLASSIFICATION:
        value = accuracy(predictions, [ex.label for ex in examples])
        metric_name = "accuracy"
    else:
        labels = [
            ex.label_numeric if ex.label_numeric is not None else float(ex.label)
            for ex in examples
        ]
        value = nmae_metric(predictions, labels, manifest.label_range)
        metric_name = "nmae"
    report = EvalReport(
        dataset_id=dataset_id,
        task=manifest.task,
        metric_name=metric_name,
        value=value,
        n_examples=len(examples),
        malformed_count=malformed,
    )
    return report, predictions


def _average_ranks(values: list[float], higher_better: bool) -> list[float]:
    """Rank 1 is best; exact ties share the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: -values[i] if higher_better else values[i])
    ranks = [0.0] * len(values)
    pos = 0
    while pos < len(order):
        end = pos
        while end + 1 < len(order) and values[order[end + 1]] == values[order[pos]]:
            end += 1
        mean_rank = (pos + end) / 2 + 1
        for j in range(pos, end + 1):
            ranks[order[j]] = mean_rank
        pos = end + 1
    return ranks


def aggregate(reports_by_method: dict[str, list[EvalReport]]) -> AggregateResult:
    """Per-method means, average ranks, and pairwise win/tie/loss counts."""
    methods = sorted(reports_by_method)
    if not methods:
        raise CoverageMismatchError("no methods to aggregate")
    tables = {
        method: {r.dataset_id: r for r in reports}
        for method, reports in reports_by_method.items()
    }
    datasets = sorted(tables[methods[0]])
    for method in methods:
        if sorted(tables[method]) != datasets:
            raise CoverageMismatchError(
                f"method {method!r} covers {sorted(tables[method])}, expected {datasets}"
            )

    mean_by_method = {
        method: sum(r.value for r in reports) / len(reports)
        for method, reports in reports_by_method.items()
    }

    rank_sums = {method: 0.0 for method in methods}
    wtl = {(a, b): [0, 0, 0] for a in methods for b in methods if a != b}
    for dataset_id in datasets:
        metric = tables[methods[0]][dataset_id].metric_name
        higher_better = metric in HIGHER_BETTER
        values = [tables[m][dataset_id].value for m in methods]
        for method, rank in zip(methods, _average_ranks(values, higher_better)):
            rank_sums[method] += rank
        for ia, a in enumerate(methods):
            for ib, b in enumerate(methods):
                if a == b:
                    continue
                delta = values[ia] - values[ib]
                if abs(delta) < TIE_DELTA:
                    wtl[(a, b)][1] += 1
                elif (delta > 0) == higher_better:
                    wtl[(a, b)][0] += 1
                else:
                    wtl[(a, b)][2] += 1

    mean_rank = {method: rank_sums[method] / len(datasets) for method in methods}
    return AggregateResult(
        mean_by_method=mean_by_method,
        mean_rank_by_method=mean_rank,
        win_tie_loss={pair: tuple(counts) for pair, counts in wtl.items()},
    )
