"""Final-answer extraction from chain-of-thought output, and correctness scoring.

Solve prompts instruct models to declare the final answer inside a boxed
marker. Models often restate intermediate boxed values, so extraction takes
the last well-formed occurrence. Numeric comparison is exact rational
equality: gold answers are exact, so any tolerance would only admit false
positives. A consequence worth knowing: a truncated decimal like "0.333"
does not match 1/3.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .core import (
    CHOICE_LABELS,
    GoldAnswer,
    InferenceRecord,
    report_column,
)

BOXED_MARKER = "\\boxed"

_FRAC_RE = re.compile(r"([+-]?)\\frac\{([+-]?\d+)\}\{([+-]?\d+)\}\Z")
_SEPARATED_RE = re.compile(r"[+-]?\d{1,3}(?:,\d{3})+(?:\.\d*)?\Z")
_PLAIN_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)\Z")
_SLASH_RE = re.compile(r"([+-]?\d+)/([+-]?\d+)\Z")


@dataclass(frozen=True)
class ExtractedAnswer:
    """Answer pulled out of a model response.

    ``kind`` is "unparseable" when either no boxed marker was found
    (``raw_span`` is None) or the span normalized to neither a rational nor a
    choice label; the normalized fields are populated exactly otherwise.
    """

    raw_span: str | None
    kind: str
    numeric_value: Fraction | None = None
    choice_label: str | None = None

    @property
    def parseable(self) -> bool:
        return self.kind != "unparseable"


def _last_balanced_span(text: str) -> str | None:
    """Argument of the rightmost boxed marker with balanced braces.

    Walks marker occurrences from the right; a malformed occurrence
    (missing or unbalanced argument) falls back to the next one left.
    """
    end = len(text)
    while True:
        idx = text.rfind(BOXED_MARKER, 0, end)
        if idx < 0:
            return None
        pos = idx + len(BOXED_MARKER)
        while pos < len(text) and text[pos] in " \t":
            pos += 1
        if pos < len(text) and text[pos] == "{":
            depth = 0
            for j in range(pos, len(text)):
                ch = text[j]
                if ch == "{":
                    depth += 1
                elif ch == "}":
                    depth -= 1
                    if depth == 0:
                        return text[pos + 1 : j]
        end = idx

def normalize_numeric(raw: str) -> Fraction:
    """Parse a boxed span into an exact rational.

    Accepts an optional sign, integers, terminating decimals, thousands
    separators in digit-grouped form, simple ``\\frac{a}{b}``, and plain
    ``a/b``. Anything else raises ValueError for the caller to map to an
    unparseable answer.
    """
    token = raw.strip()
    if not token:
        raise ValueError("empty numeric span")
    match = _FRAC_RE.match(token)
    if match:
        sign, num, den = match.groups()
        if int(den) == 0:
            raise ValueError(f"zero denominator: {raw!r}")
        value = Fraction(int(num), int(den))
        return -value if sign == "-" else value
    match = _SLASH_RE.match(token)
    if match:
        num, den = match.groups()
        if int(den) == 0:
            raise ValueError(f"zero denominator: {raw!r}")
        return Fraction(int(num), int(den))
    if "," in token:
        if not _SEPARATED_RE.match(token):
            raise ValueError(f"bad digit grouping: {raw!r}")
        token = token.replace(",", "")
    if not _PLAIN_RE.match(token):
        raise ValueError(f"not a numeric span: {raw!r}")
    if token.endswith("."):
        token = token[:-1]
    return Fraction(token)


def _normalize_choice(raw: str) -> str | None:
    token = raw.strip()
    if len(token) >= 3 and token.startswith("(") and token.endswith(")"):
        token = token[1:-1].strip()
    if token in CHOICE_LABELS:
        return token
    return None


def extract_boxed(output: str) -> ExtractedAnswer:
    """Extract the declared final answer from a model output.

    Never raises on arbitrary input; an absent or unusable marker yields an
    unparseable answer value.
    """
    span = _last_balanced_span(output)
    if span is None:
        return ExtractedAnswer(raw_span=None, kind="unparseable")
    choice = _normalize_choice(span)
    if choice is not None:
        return ExtractedAnswer(raw_span=span, kind="choice", choice_label=choice)
    try:
        value = normalize_numeric(span)
    except ValueError:
        return ExtractedAnswer(raw_span=span, kind="unparseable")
    return ExtractedAnswer(raw_span=span, kind="numeric", numeric_value=value)


def _squash_ws(text: str) -> str:
    return " ".join(text.split())


def judge_correct(extracted: ExtractedAnswer, gold: GoldAnswer) -> str:
    """Verdict for an extracted answer against the gold answer.

    Numeric golds require exact rational equality. Choice golds accept either
    the matching letter or a span textually equal to the option's content
    after whitespace normalization, since datasets encode the gold as letter
    plus option text.
    """
    if extracted.raw_span is None:
        return "unparseable"
    if gold.kind == "numeric":
        if extracted.kind == "numeric" and extracted.numeric_value == gold.numeric_value:
            return "correct"
        return "incorrect"
    if extracted.kind == "choice" and extracted.choice_label == gold.choice_label:
        return "correct"
    if _squash_ws(extracted.raw_span) == _squash_ws(gold.choice_text or ""):
        return "correct"
    return "incorrect"


_VERDICT_RANK = {"correct": 0, "incorrect": 1, "unparseable": 2}


def problem_verdicts(records: Sequence[InferenceRecord]) -> dict[str, str]:
    """Collapse step records to one verdict per problem.

    Translation steps never carry correct/incorrect, so taking the best
    verdict across a problem's steps yields the solve step's verdict, or
    unparseable when the pipeline failed before solving.
    """
    verdicts: dict[str, str] = {}
    for record in records:
        current = verdicts.get(record.problem_id)
        if current is None or _VERDICT_RANK[record.verdict] < _VERDICT_RANK[current]:
            verdicts[record.problem_id] = record.verdict
    return verdicts


@dataclass(frozen=True)
class AccuracyReport:
    """Per-column percentages plus their unweighted mean."""

    columns: tuple[tuple[str, float], ...]
    overall: float
    correct: int
    total: int

    def as_dict(self) -> dict:
        return {
            "columns": {name: value for name, value in self.columns},
            "overall": self.overall,
            "correct": self.correct,
            "total": self.total,
        }


def accuracy(
    records: Sequence[InferenceRecord], subset_by_id: Mapping[str, str]
) -> AccuracyReport:
    """Aggregate records into per-column accuracy percentages.

    Columns follow the report layout: the KSM-* subsets share one KSM column
    and the overall figure is the unweighted mean of column percentages, not
    the item-weighted rate. Order of ``records`` does not matter.
    """
    if not records:
        raise ValueError("accuracy requires at least one record")
    verdicts = problem_verdicts(records)
    totals: dict[str, int] = {}
    corrects: dict[str, int] = {}
    for problem_id, verdict in verdicts.items():
        try:
            column = report_column(subset_by_id[problem_id])
        except KeyError:
            raise ValueError(f"no subset known for problem {problem_id!r}") from None
        totals[column] = totals.get(column, 0) + 1
        if verdict == "correct":
            corrects[column] = corrects.get(column, 0) + 1
    columns = tuple(
        (name, 100.0 * corrects.get(name, 0) / totals[name]) for name in sorted(totals)
    )
    overall = sum(value for _, value in columns) / len(columns)
    return AccuracyReport(
        columns=columns,
        overall=overall,
        correct=sum(corrects.values()),
        total=sum(totals.values()),
    )
