"""Shared data model: bilingual problems, prompting configurations, runs, results.

Everything here is an immutable value object; instances can be shared freely
between concurrent workers. Datasets are exchanged as UTF-8 JSONL, one item
per line.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

SUBSETS = (
    "GSM8K",
    "MATH",
    "OMNI_MATH",
    "MMMLU",
    "KSM-KMO",
    "KSM-KJMO",
    "KSM-CSAT",
    "KSM-KMS",
    "KSM-TQ",
    "custom",
)

CHOICE_LABELS = ("A", "B", "C", "D")

SOURCE_DIRECTIONS = ("ko_to_en", "en_to_ko")

VERDICTS = ("correct", "incorrect", "unparseable")


class DataModelError(ValueError):
    """Raised when a value object is constructed or parsed with invalid fields."""


def report_column(subset: str) -> str:
    """Report column a subset belongs to; the five KSM-* subsets share one column."""
    if subset.startswith("KSM-"):
        return "KSM"
    return subset


@dataclass(frozen=True)
class GoldAnswer:
    """Reference answer: either an exact rational or a multiple-choice option.

    Numeric values are exact rationals (integer pairs), never floats, so
    equivalence checks downstream are exact.
    """

    kind: str
    numeric_value: Fraction | None = None
    choice_label: str | None = None
    choice_text: str | None = None

    def __post_init__(self) -> None:
        if self.kind == "numeric":
            if self.numeric_value is None or self.choice_label is not None:
                raise DataModelError("numeric answer requires numeric_value only")
            if self.numeric_value.denominator == 0:
                raise DataModelError("numeric_value must be finite")
        elif self.kind == "choice":
            if self.numeric_value is not None or self.choice_label is None:
                raise DataModelError("choice answer requires choice_label only")
            if self.choice_label not in CHOICE_LABELS:
                raise DataModelError(f"choice_label must be one of {CHOICE_LABELS}")
            if not self.choice_text:
                raise DataModelError("choice answer requires choice_text")
        else:
            raise DataModelError(f"unknown answer kind: {self.kind!r}")

    @classmethod
    def numeric(cls, value: Fraction | int | str) -> GoldAnswer:
        return cls(kind="numeric", numeric_value=Fraction(value))

    @classmethod
    def choice(cls, label: str, text: str) -> GoldAnswer:
        return cls(kind="choice", choice_label=label, choice_text=text)

    def to_dict(self) -> dict:
        if self.kind == "numeric":
            return {"kind": "numeric", "numeric_value": str(self.numeric_value)}
        return {
            "kind": "choice",
            "choice_label": self.choice_label,
            "choice_text": self.choice_text,
        }

    @classmethod
    def from_dict(cls, data: dict) -> GoldAnswer:
        kind = data.get("kind")
        if kind == "numeric":
            try:
                value = Fraction(str(data["numeric_value"]))
            except (KeyError, ValueError, ZeroDivisionError) as exc:
                raise DataModelError(f"bad numeric_value: {data!r}") from exc
            return cls(kind="numeric", numeric_value=value)
        if kind == "choice":
            try:
                return cls(
                    kind="choice",
                    choice_label=data["choice_label"],
                    choice_text=data["choice_text"],
                )
            except KeyError as exc:
                raise DataModelError(f"bad choice answer: {data!r}") from exc
        raise DataModelError(f"unknown answer kind: {kind!r}")


@dataclass(frozen=True)
class BilingualProblem:
    """One benchmark item with parallel Korean/English question texts.

    ``source_direction`` records which side is the translation so that
    translation-artifact analyses can split results by origin.
    """

    id: str
    subset: str
    question_ko: str
    question_en: str
    answer: GoldAnswer
    source_direction: str

    def __post_init__(self) -> None:
        if not self.id:
            raise DataModelError("problem id must be non-empty")
        if self.subset not in SUBSETS:
            raise DataModelError(f"unknown subset: {self.subset!r}")
        if not self.question_ko or not self.question_en:
            raise DataModelError(f"problem {self.id}: both question texts required")
        if self.source_direction not in SOURCE_DIRECTIONS:
            raise DataModelError(f"unknown source_direction: {self.source_direction!r}")

    def question(self, language: str) -> str:
        if language == "ko":
            return self.question_ko
        if language == "en":
            return self.question_en
        raise DataModelError(f"unknown language: {language!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "subset": self.subset,
            "question_ko": self.question_ko,
            "question_en": self.question_en,
            "answer": self.answer.to_dict(),
            "source_direction": self.source_direction,
        }

    @classmethod
    def from_dict(cls, data: dict) -> BilingualProblem:
        try:
            return cls(
                id=data["id"],
                subset=data["subset"],
                question_ko=data["question_ko"],
                question_en=data["question_en"],
                answer=GoldAnswer.from_dict(data["answer"]),
                source_direction=data["source_direction"],
            )
        except KeyError as exc:
            raise DataModelError(f"missing problem field: {exc}") from exc


@dataclass(frozen=True)
class TokenUsage:
    """Input/output token counts for one backend call; additive across steps."""

    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise DataModelError("token counts must be non-negative")

    def __add__(self, other: TokenUsage) -> TokenUsage:
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens

    def to_dict(self) -> dict:
        return {"input_tokens": self.input_tokens, "output_tokens": self.output_tokens}

    @classmethod
    def from_dict(cls, data: dict) -> TokenUsage:
        return cls(int(data["input_tokens"]), int(data["output_tokens"]))


@dataclass(frozen=True)
class SamplingConfig:
    """Decoding parameters shared by every backend call of a run.

    The defaults deliberately keep temperature above zero: very low
    temperatures make models drift back to their preferred language,
    which defeats controlled reasoning-language experiments.
    """

    temperature: float = 0.7
    top_p: float = 0.95
    min_tokens: int = 8
    max_tokens: int = 2048
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise DataModelError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise DataModelError("top_p must be in (0, 1]")
        if not 0 < self.min_tokens <= self.max_tokens:
            raise DataModelError("need 0 < min_tokens <= max_tokens")

    def to_dict(self) -> dict:
        data = {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "min_tokens": self.min_tokens,
            "max_tokens": self.max_tokens,
        }
        if self.seed is not None:
            data["seed"] = self.seed
        return data

    @classmethod
    def from_dict(cls, data: dict) -> SamplingConfig:
        return cls(
            temperature=float(data.get("temperature", 0.7)),
            top_p=float(data.get("top_p", 0.95)),
            min_tokens=int(data.get("min_tokens", 8)),
            max_tokens=int(data.get("max_tokens", 2048)),
            seed=data.get("seed"),
        )


@dataclass(frozen=True)
class PromptingMode:
    """A cross-lingual configuration: question language x reasoning language x shape.

    Single-pass modes solve directly; multi-step modes chain translation and
    solving passes. Step names describe what each pass does.
    """

    name: str
    input_language: str
    reasoning_language: str
    steps: tuple[str, ...]

    @property
    def is_single_pass(self) -> bool:
        return len(self.steps) == 1


_MODES = {
    "K2K": PromptingMode("K2K", "ko", "ko", ("solve",)),
    "K2E": PromptingMode("K2E", "ko", "en", ("solve",)),
    "E2E": PromptingMode("E2E", "en", "en", ("solve",)),
    "TE2E": PromptingMode("TE2E", "ko", "en", ("translate_question", "solve")),
    "MSI": PromptingMode(
        "MSI", "ko", "en", ("translate_question", "solve", "translate_solution")
    ),
}


def mode_for(name: str) -> PromptingMode:
    """Return the canonical descriptor for a configuration name.

    The English-to-Korean pairing is deliberately absent: models do not
    reliably keep a Korean chain of thought over English input, so the
    configuration is not part of the supported matrix.
    """
    try:
        return _MODES[name.upper()]
    except KeyError:
        raise DataModelError(f"unknown prompting mode: {name!r}") from None


def mode_names() -> tuple[str, ...]:
    return tuple(_MODES)


@dataclass(frozen=True)
class InferenceRecord:
    """One model interaction inside a run.

    ``verdict`` is "unparseable" exactly when no answer could be extracted;
    translation steps therefore always carry "unparseable" and scoring
    aggregates per problem, preferring correct > incorrect > unparseable.
    """

    problem_id: str
    mode: str
    step_index: int
    prompt_text: str
    raw_output: str
    token_usage: TokenUsage
    extracted_answer: str | None = None
    verdict: str = "unparseable"
    error: str | None = None

    def __post_init__(self) -> None:
        mode = mode_for(self.mode)
        if not 0 <= self.step_index < len(mode.steps):
            raise DataModelError(
                f"step_index {self.step_index} out of range for mode {self.mode}"
            )
        if self.verdict not in VERDICTS:
            raise DataModelError(f"unknown verdict: {self.verdict!r}")
        if (self.verdict == "unparseable") != (self.extracted_answer is None):
            raise DataModelError(
                "verdict must be 'unparseable' exactly when extracted_answer is absent"
            )

    def to_dict(self) -> dict:
        data = {
            "problem_id": self.problem_id,
            "mode": self.mode,
            "step_index": self.step_index,
            "prompt_text": self.prompt_text,
            "raw_output": self.raw_output,
            "token_usage": self.token_usage.to_dict(),
            "extracted_answer": self.extracted_answer,
            "verdict": self.verdict,
        }
        if self.error is not None:
            data["error"] = self.error
        return data

    @classmethod
    def from_dict(cls, data: dict) -> InferenceRecord:
        return cls(
            problem_id=data["problem_id"],
            mode=data["mode"],
            step_index=int(data["step_index"]),
            prompt_text=data["prompt_text"],
            raw_output=data["raw_output"],
            token_usage=TokenUsage.from_dict(data["token_usage"]),
            extracted_answer=data.get("extracted_answer"),
            verdict=data["verdict"],
            error=data.get("error"),
        )


@dataclass(frozen=True)
class ValidationFinding:
    item_id: str
    code: str
    message: str


@dataclass
class ValidationReport:
    findings: list[ValidationFinding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, item_id: str, code: str, message: str) -> None:
        self.findings.append(ValidationFinding(item_id, code, message))


def validate_dataset(items: Sequence[BilingualProblem]) -> ValidationReport:
    """Report duplicate ids, empty fields, and answer-kind/subset mismatches.

    Report-only: a well-formed dataset yields zero findings. The ``custom``
    subset admits both answer kinds so externally shaped datasets can flow
    through unchanged; every other subset is choice for MMMLU and numeric
    otherwise.
    """
    report = ValidationReport()
    seen: set[str] = set()
    for item in items:
        if item.id in seen:
            report.add(item.id, "duplicate-id", f"id {item.id!r} appears more than once")
        seen.add(item.id)
        if not item.question_ko.strip():
            report.add(item.id, "empty-field", "question_ko is empty")
        if not item.question_en.strip():
            report.add(item.id, "empty-field", "question_en is empty")
        if item.subset == "MMMLU" and item.answer.kind != "choice":
            report.add(
                item.id,
                "kind-mismatch",
                "MMMLU items are multiple-choice but answer kind is "
                f"{item.answer.kind!r}",
            )
        elif item.subset not in ("MMMLU", "custom") and item.answer.kind != "numeric":
            report.add(
                item.id,
                "kind-mismatch",
                f"subset {item.subset} requires numeric answers, got "
                f"{item.answer.kind!r}",
            )
    return report


def dumps_problem(problem: BilingualProblem) -> str:
    return json.dumps(problem.to_dict(), ensure_ascii=False, sort_keys=True)


def loads_problem(line: str) -> BilingualProblem:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataModelError(f"malformed dataset line: {exc}") from exc
    return BilingualProblem.from_dict(data)


def load_dataset(path) -> list[BilingualProblem]:
    """Load a JSONL dataset file; blank lines are skipped."""
    items = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                items.append(loads_problem(line))
    return items


def save_dataset(items: Iterable[BilingualProblem], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for item in items:
            handle.write(dumps_problem(item) + "\n")


def dataset_hash(items: Sequence[BilingualProblem]) -> str:
    """Content hash of a dataset, independent of item order."""
    digest = hashlib.sha256()
    for line in sorted(dumps_problem(item) for item in items):
        digest.update(line.encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()
