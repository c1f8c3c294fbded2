"""Synthetic desk-scale tasks for tests, demos, and the ablation harness."""

from __future__ import annotations

import csv
import random
from pathlib import Path

from .dataset import (
    CLASSIFICATION,
    REGRESSION,
    ColumnSpec,
    TabularExample,
    TaskManifest,
    render_number,
)


def make_separable_classification(
    rows: int = 200, features: int = 4, seed: int = 0, margin: float = 0.5
) -> tuple[list[TabularExample], TaskManifest, list[float]]:
    """Linearly separable two-class table; returns the separating weights too."""
    rng = random.Random(seed)
    weights = [rng.uniform(-1.0, 1.0) for _ in range(features)]
    names = [f"x{i}" for i in range(features)]
    examples = []
    while len(examples) < rows:
        values = [rng.gauss(0.0, 1.0) for _ in range(features)]
        score = sum(w * v for w, v in zip(weights, values))
        if abs(score) < margin:
            continue
        label = "pos" if score > 0 else "neg"
        rendered = tuple(
            (name, render_number(round(v, 2))) for name, v in zip(names, values)
        )
        examples.append(TabularExample(rendered, label))
    manifest = TaskManifest(
        task=CLASSIFICATION,
        question="Is the weighted score of this row positive or negative?",
        label_values=("pos", "neg"),
        columns=tuple(
            [ColumnSpec(n, "numeric", "feature") for n in names]
            + [ColumnSpec("label", "categorical", "label")]
        ),
    )
    return examples, manifest, weights


def make_permutation_task(
    rows: int = 128, classes: int = 16, noise_features: int = 3, seed: int = 0
) -> tuple[list[TabularExample], TaskManifest]:
    """Multi-class table whose label is carried by one categorical feature.

    The signal feature's value names the class outright, the remaining
    features are noise tokens. Rewards start sparse (one correct answer
    among `classes`), which is the regime where pooling rollouts across
    permutation variants pays off.
    """
    rng = random.Random(seed)
    labels = [f"c{i:02d}" for i in range(classes)]
    noise_pool = [f"n{i}" for i in range(8)]
    names = ["signal"] + [f"noise{j}" for j in range(noise_features)]
    examples = []
    for i in range(rows):
        label = labels[i % classes]
        values = [label] + [rng.choice(noise_pool) for _ in range(noise_features)]
        examples.append(TabularExample(tuple(zip(names, values)), label))
    rng.shuffle(examples)
    manifest = TaskManifest(
        task=CLASSIFICATION,
        question="Which class code does this row belong to?",
        label_values=tuple(labels),
        columns=tuple(
            [ColumnSpec(n, "categorical", "feature") for n in names]
            + [ColumnSpec("label", "categorical", "label")]
        ),
    )
    return examples, manifest


def make_regression_task(
    rows: int = 120, features: int = 3, seed: int = 0
) -> tuple[list[TabularExample], TaskManifest]:
    """Numeric table with a noisy linear target over [0, 100]."""
    rng = random.Random(seed)
    names = [f"x{i}" for i in range(features)]
    examples = []
    for _ in range(rows):
        values = [rng.uniform(0.0, 10.0) for _ in range(features)]
        target = sum(values) * 100.0 / (10.0 * features) + rng.gauss(0.0, 2.0)
        target = min(max(target, 0.0), 100.0)
        rendered = tuple(
            (name, render_number(round(v, 2))) for name, v in zip(names, values)
        )
        examples.append(
            TabularExample(rendered, render_number(round(target, 2)), round(target, 2))
        )
    manifest = TaskManifest(
        task=REGRESSION,
        question="What is the combined score of this row?",
        columns=tuple(
            [ColumnSpec(n, "numeric", "feature") for n in names]
            + [ColumnSpec("label", "numeric", "label")]
        ),
    )
    return examples, manifest


def write_dataset(
    examples: list[TabularExample],
    manifest: TaskManifest,
    csv_path: str | Path,
    manifest_path: str | Path,
) -> None:
    """Materialize examples + manifest as the CSV/JSON pair the CLI consumes."""
    import json

    feature_names = [c.name for c in manifest.feature_columns]
    label_name = manifest.label_column
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(feature_names + [label_name])
        for ex in examples:
            by_name = dict(ex.features)
            writer.writerow([by_name[n] for n in feature_names] + [ex.label])
    payload = {
        "task": manifest.task,
        "question": manifest.question,
        "columns": [
            {"name": c.name, "kind": c.kind, "role": c.role} for c in manifest.columns
        ],
    }
    if manifest.task == CLASSIFICATION:
        payload["label_values"] = list(manifest.label_values)
    if manifest.label_range is not None:
        payload["label_range"] = list(manifest.label_range)
    if manifest.answer_format_hint:
        payload["answer_format_hint"] = manifest.answer_format_hint
    Path(manifest_path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
