"""Plain-text and machine-readable report rendering.

Accuracy tables follow the benchmark layout: one column per present subset
group in the fixed order GSM8K, MATH, Omni-MATH, MMMLU, KSM (then any custom
groups), closed by the unweighted Avg. column, all at two decimals. Delta
views append the signed gain against a designated baseline in brackets.
"""

from __future__ import annotations

from typing import Mapping, Sequence

_COLUMN_ORDER = ("GSM8K", "MATH", "OMNI_MATH", "MMMLU", "KSM")
_COLUMN_LABELS = {"OMNI_MATH": "Omni-MATH"}


def ordered_columns(names: Sequence[str]) -> list[str]:
    known = [name for name in _COLUMN_ORDER if name in names]
    extra = sorted(name for name in names if name not in _COLUMN_ORDER)
    return known + extra


def column_label(name: str) -> str:
    return _COLUMN_LABELS.get(name, name)


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = []
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip())
    lines.append("  ".join("-" * widths[i] for i in range(len(headers))))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def render_accuracy_table(summaries: Sequence[Mapping]) -> str:
    """Rows of per-column percentages for one or more run summaries.

    Each summary needs ``label``, ``columns`` (group name -> percentage) and
    ``overall``.
    """
    present: list[str] = []
    for summary in summaries:
        for name in summary["columns"]:
            if name not in present:
                present.append(name)
    columns = ordered_columns(present)
    headers = ["Run"] + [column_label(c) for c in columns] + ["Avg."]
    rows = []
    for summary in summaries:
        row = [str(summary["label"])]
        for name in columns:
            value = summary["columns"].get(name)
            row.append("-" if value is None else f"{value:.2f}")
        row.append(f"{summary['overall']:.2f}")
        rows.append(row)
    return _format_table(headers, rows)


def render_delta_table(comparison: Mapping) -> str:
    """Baseline-anchored view: overall accuracy with bracketed signed deltas."""
    headers = ["Run", "Avg.", "Delta"]
    rows = [[str(comparison["baseline"]["label"]), f"{comparison['baseline']['overall']:.2f}", ""]]
    for entry in comparison["runs"]:
        rows.append(
            [
                str(entry["label"]),
                f"{entry['overall']:.2f}",
                f"({entry['delta']:+.2f})",
            ]
        )
    table = _format_table(headers, rows)
    return table + f"Average delta: {comparison['average_delta']:+.2f}\n"
