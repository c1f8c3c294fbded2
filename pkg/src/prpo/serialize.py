"""Row-to-prompt serialization and answer extraction.

A row becomes one fixed-format sentence per feature ("The age is 38."),
concatenated in the row's current column order, followed by the task
question and an output-format instruction. Completions are expected to
carry their reasoning in a <think> block and the final prediction in an
<answer> block; `extract_answer` recovers and types that prediction.

The default template ships as versioned package data
(templates/default.json). The upstream wording it reconstructs is only
published as figures, so the exact system text here is a stand-in; what
matters for reproducible rewards is that it is fixed and versioned.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .dataset import CLASSIFICATION, TabularExample, TaskManifest
from .errors import EmptyFeaturesError, ShotLabelMismatchError

KIND_CLASS = "class_label"
KIND_NUMBER = "number"
KIND_MALFORMED = "malformed"


@dataclass(frozen=True)
class PromptTemplate:
    system_text: str
    sentence_pattern: str = "The {feature} is {value}."
    question_wrapper: str = "Question: {question}"
    think_tag: str = "think"
    answer_tag: str = "answer"

    def __post_init__(self):
        for slot in ("{feature}", "{value}"):
            if self.sentence_pattern.count(slot) != 1:
                raise ValueError(f"sentence_pattern must contain {slot} exactly once")
        if "{question}" not in self.question_wrapper:
            raise ValueError("question_wrapper must contain {question}")
        if not self.think_tag or not self.answer_tag:
            raise ValueError("tags must be nonempty")


@dataclass(frozen=True)
class Prompt:
    text: str
    n_features: int
    permutation_id: int = 0
    example_id: int = 0
    shots: int = 0


@dataclass(frozen=True)
class ExtractedAnswer:
    """The typed final prediction pulled out of a completion.

    well_formatted is True exactly when the completion contained one
    think block followed by one answer block. A classification answer
    that is well formatted but not in the manifest's label set keeps
    well_formatted=True with off_list=True; it is wrong, not malformed.
    """

    raw: str
    kind: str  # KIND_CLASS | KIND_NUMBER | KIND_MALFORMED
    label: str | None = None
    value: float | None = None
    well_formatted: bool = False
    off_list: bool = False


def default_template() -> PromptTemplate:
    data = json.loads(
        resources.files("prpo").joinpath("templates/default.json").read_text("utf-8")
    )
    return _template_from_dict(data)


def load_template(path: str | Path) -> PromptTemplate:
    return _template_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _template_from_dict(data: dict) -> PromptTemplate:
    return PromptTemplate(
        system_text=data["system_text"],
        sentence_pattern=data.get("sentence_pattern", "The {feature} is {value}."),
        question_wrapper=data.get("question_wrapper", "Question: {question}"),
        think_tag=data.get("think_tag", "think"),
        answer_tag=data.get("answer_tag", "answer"),
    )


def serialize_row(example: TabularExample, template: PromptTemplate) -> str:
    """One sentence per feature, in the example's current order."""
    if example.n_features == 0:
        raise EmptyFeaturesError("cannot serialize an example with no features")
    sentences = [
        template.sentence_pattern.format(feature=name, value=value)
        for name, value in example.features
    ]
    return " ".join(sentences)


def parse_feature_pairs(serialized: str, template: PromptTemplate) -> list[tuple[str, str]]:
    """Invert serialize_row on a single serialized line.

    Sentences are joined by single spaces, so the pattern's tail must be
    followed by whitespace or end of line; this keeps values containing
    the sentence terminator (e.g. decimals under a trailing '.') intact.
    """
    pattern = re.escape(template.sentence_pattern)
    pattern = pattern.replace(re.escape("{feature}"), "(.+?)")
    pattern = pattern.replace(re.escape("{value}"), "(.+?)")
    pattern += r"(?=\s|$)"
    return [(m.group(1), m.group(2)) for m in re.finditer(pattern, serialized)]


def _format_instruction(manifest: TaskManifest, template: PromptTemplate) -> str:
    think, answer = template.think_tag, template.answer_tag
    parts = [
        f"Work through your reasoning inside <{think}> </{think}> tags, "
        f"then give only your final answer inside <{answer}> </{answer}> tags."
    ]
    if manifest.task == CLASSIFICATION:
        parts.append("Answer with exactly one of: " + ", ".join(manifest.label_values) + ".")
    else:
        parts.append("Answer with a single number.")
    if manifest.answer_format_hint:
        parts.append(manifest.answer_format_hint)
    return " ".join(parts)


def build_prompt(
    serialized: str,
    manifest: TaskManifest,
    template: PromptTemplate,
    shots: list[tuple[TabularExample, str]] | tuple = (),
    *,
    example_id: int = 0,
    permutation_id: int = 0,
    n_features: int = 0,
) -> Prompt:
    """Assemble the full model input around one serialized target row.

    With k shots, k solved example blocks precede the target; zero shots
    reproduces the plain (serialized row, question) input. The target
    row always sits on the line directly above the question line.
    """
    lines = [template.system_text, ""]
    for shot_example, shot_label in shots:
        _check_shot_label(shot_label, manifest)
        lines.append(f"{serialize_row(shot_example, template)} Answer: {shot_label}")
    if shots:
        lines.append("")
    lines.append(serialized)
    lines.append(template.question_wrapper.format(question=manifest.question))
    lines.append(_format_instruction(manifest, template))
    return Prompt(
        text="\n".join(lines),
        n_features=n_features,
        permutation_id=permutation_id,
        example_id=example_id,
        shots=len(shots),
    )


def target_row_pairs(prompt: Prompt, template: PromptTemplate) -> list[tuple[str, str]]:
    """Recover the target row's ordered (name, value) pairs from a prompt."""
    lines = prompt.text.split("\n")
    wrapper_prefix = template.question_wrapper.split("{question}")[0]
    for i, line in enumerate(lines):
        if line.startswith(wrapper_prefix) and i > 0:
            return parse_feature_pairs(lines[i - 1], template)
    return []


def _check_shot_label(label: str, manifest: TaskManifest) -> None:
    if manifest.task == CLASSIFICATION:
        folded = label.strip().casefold()
        if folded not in {v.strip().casefold() for v in manifest.label_values}:
            raise ShotLabelMismatchError(f"shot label {label!r} not in manifest label_values")
    else:
        try:
            value = float(label)
        except ValueError:
            raise ShotLabelMismatchError(f"shot label {label!r} is not a number")
        if not math.isfinite(value):
            raise ShotLabelMismatchError(f"shot label {label!r} is not finite")


_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)


def extract_answer(completion: str, manifest: TaskManifest) -> ExtractedAnswer:
    """Pull the final prediction out of a completion.

    Malformed structure (missing or duplicated tag blocks, answer before
    think) is a value, not an error: downstream rewards map it to 0.0.
    """
    thinks = list(_THINK_RE.finditer(completion))
    answers = list(_ANSWER_RE.finditer(completion))
    well_formed = (
        len(thinks) == 1 and len(answers) == 1 and thinks[0].end() <= answers[0].start()
    )
    raw = answers[0].group(1).strip() if answers else ""
    if not well_formed:
        return ExtractedAnswer(raw=raw, kind=KIND_MALFORMED, well_formatted=False)

    if manifest.task == CLASSIFICATION:
        folded = raw.casefold()
        for value in manifest.label_values:
            if value.strip().casefold() == folded:
                return ExtractedAnswer(raw=raw, kind=KIND_CLASS, label=value, well_formatted=True)
        return ExtractedAnswer(
            raw=raw, kind=KIND_CLASS, label=raw, well_formatted=True, off_list=True
        )

    try:
        value = float(raw)
    except ValueError:
        return ExtractedAnswer(raw=raw, kind=KIND_MALFORMED, well_formatted=True)
    if not math.isfinite(value):
        return ExtractedAnswer(raw=raw, kind=KIND_MALFORMED, well_formatted=True)
    return ExtractedAnswer(raw=raw, kind=KIND_NUMBER, value=value, well_formatted=True)
