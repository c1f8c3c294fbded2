from __future__ import annotations

import pytest

from prpo.dataset import ColumnSpec, TaskManifest
from prpo.serialize import default_template


@pytest.fixture(scope="session")
def template():
    return default_template()


@pytest.fixture
def cls_manifest():
    return TaskManifest(
        task="classification",
        question="Will the client subscribe to a term deposit?",
        label_values=("yes", "no"),
        columns=(
            ColumnSpec("age", "numeric", "feature"),
            ColumnSpec("job", "categorical", "feature"),
            ColumnSpec("label", "categorical", "label"),
        ),
    )


@pytest.fixture
def reg_manifest():
    return TaskManifest(
        task="regression",
        question="What is the quality score?",
        label_range=(0.0, 100.0),
        columns=(
            ColumnSpec("x0", "numeric", "feature"),
            ColumnSpec("x1", "numeric", "feature"),
            ColumnSpec("label", "numeric", "label"),
        ),
    )
