"""Evaluation runs: a dataset through a prompting configuration against a backend.

Items are dispatched concurrently up to the gateway's in-flight window; a
failed item never fails the run (an 8k-item run against a real API must
survive transient faults). Reports are persisted records-first so that
summaries can always be re-derived, including after verification rules
change. Record order is canonicalized by problem id, which together with the
scripted mock backend and an injected clock makes runs byte-identical across
repetitions.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from . import reporting
from .arena import token_consumption
from .core import (
    BilingualProblem,
    InferenceRecord,
    PromptingMode,
    SamplingConfig,
    TokenUsage,
    dataset_hash,
)
from .gateway import ChatRequest, GatewayClient, GatewayError
from .prompts import PromptLibrary, default_library
from .verification import AccuracyReport, accuracy, extract_boxed, judge_correct

logger = logging.getLogger(__name__)

Clock = Callable[[], str]


def utc_clock() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class RunError(RuntimeError):
    """Run-level failure: bad inputs or incompatible reports."""


@dataclass
class RunReport:
    """Everything a run produced: manifest, all records, derived summaries."""

    manifest: dict
    records: list[InferenceRecord]
    accuracy: AccuracyReport
    ledger: list[tuple[str, TokenUsage]]

    @property
    def dataset_hash(self) -> str:
        return self.manifest["dataset_hash"]

    @property
    def label(self) -> str:
        return self.manifest["mode"]

    @property
    def l_model(self) -> float:
        return token_consumption([usage for _, usage in self.ledger])

    def total_usage(self) -> TokenUsage:
        total = TokenUsage()
        for _, usage in self.ledger:
            total = total + usage
        return total

    def summary_dict(self) -> dict:
        total = self.total_usage()
        return {
            "label": self.label,
            "mode": self.manifest["mode"],
            "backend_id": self.manifest["backend_id"],
            "dataset_hash": self.dataset_hash,
            "columns": dict(self.accuracy.columns),
            "overall": self.accuracy.overall,
            "correct": self.accuracy.correct,
            "total": self.accuracy.total,
            "token_totals": total.to_dict(),
            "l_model": self.l_model,
        }

    def save(self, out_dir: Path | str) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "manifest.json", "w", encoding="utf-8") as handle:
            json.dump(self.manifest, handle, ensure_ascii=False, sort_keys=True, indent=1)
            handle.write("\n")
        with open(out / "records.jsonl", "w", encoding="utf-8") as handle:
            for record in self.records:
                handle.write(json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True))
                handle.write("\n")
        with open(out / "summary.json", "w", encoding="utf-8") as handle:
            json.dump(self.summary_dict(), handle, ensure_ascii=False, sort_keys=True, indent=1)
            handle.write("\n")
        with open(out / "summary.txt", "w", encoding="utf-8") as handle:
            handle.write(reporting.render_accuracy_table([self.summary_dict()]))

    @classmethod
    def load(cls, run_dir: Path | str) -> RunReport:
        """Rebuild a report from persisted records; summaries are re-derived."""
        run = Path(run_dir)
        with open(run / "manifest.json", "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
        records = []
        with open(run / "records.jsonl", "r", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    records.append(InferenceRecord.from_dict(json.loads(line)))
        return build_report(manifest, records, manifest["subset_by_id"])


def build_report(
    manifest: dict, records: list[InferenceRecord], subset_by_id: dict[str, str]
) -> RunReport:
    records = sorted(records, key=lambda r: (r.problem_id, r.step_index))
    per_problem: dict[str, TokenUsage] = {}
    for record in records:
        per_problem[record.problem_id] = (
            per_problem.get(record.problem_id, TokenUsage()) + record.token_usage
        )
    ledger = sorted(per_problem.items())
    return RunReport(
        manifest=manifest,
        records=records,
        accuracy=accuracy(records, subset_by_id),
        ledger=ledger,
    )


def _make_manifest(
    mode: PromptingMode,
    sampling: SamplingConfig,
    gateway: GatewayClient,
    problems: Sequence[BilingualProblem],
    clock: Clock,
) -> dict:
    return {
        "mode": mode.name,
        "sampling": sampling.to_dict(),
        "backend_id": gateway.backend_id,
        "dataset_hash": dataset_hash(problems),
        "items": len(problems),
        "timestamp": clock(),
        "subset_by_id": {p.id: p.subset for p in sorted(problems, key=lambda p: p.id)},
    }


def _complete(
    gateway: GatewayClient, prompt: str, sampling: SamplingConfig
) -> tuple[str, TokenUsage, str | None]:
    """One backend call; transport failure comes back as an error note."""
    request = ChatRequest.single(gateway.backend_id, prompt, sampling)
    try:
        response = gateway.complete(request)
        return response.text, response.usage, None
    except GatewayError as exc:
        return "", TokenUsage(), str(exc)


def _solve_record(
    problem: BilingualProblem,
    mode: PromptingMode,
    step_index: int,
    question_text: str,
    gateway: GatewayClient,
    sampling: SamplingConfig,
    library: PromptLibrary,
) -> InferenceRecord:
    template = "solve_en" if mode.reasoning_language == "en" else "solve_ko"
    prompt = library.render(template, {"question": question_text})
    text, usage, error = _complete(gateway, prompt, sampling)
    if error is not None:
        return InferenceRecord(
            problem_id=problem.id,
            mode=mode.name,
            step_index=step_index,
            prompt_text=prompt,
            raw_output=text,
            token_usage=usage,
            verdict="unparseable",
            error=error,
        )
    extracted = extract_boxed(text)
    if extracted.raw_span is None:
        verdict = "unparseable"
    else:
        verdict = judge_correct(extracted, problem.answer)
    return InferenceRecord(
        problem_id=problem.id,
        mode=mode.name,
        step_index=step_index,
        prompt_text=prompt,
        raw_output=text,
        token_usage=usage,
        extracted_answer=extracted.raw_span,
        verdict=verdict,
    )


def _run_items(
    problems: Sequence[BilingualProblem],
    worker: Callable[[BilingualProblem], list[InferenceRecord]],
    max_workers: int,
) -> list[InferenceRecord]:
    records: list[InferenceRecord] = []
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for item_records in pool.map(worker, problems):
            records.extend(item_records)
    return records


def run_eval(
    problems: Sequence[BilingualProblem],
    mode: PromptingMode,
    gateway: GatewayClient,
    sampling: SamplingConfig = SamplingConfig(),
    library: PromptLibrary | None = None,
    clock: Clock = utc_clock,
) -> RunReport:
    """Single-pass run: pick the question side, solve, extract, judge.

    Multi-step configurations have their own pipelines (run_te2e, run_msi).
    """
    if not mode.is_single_pass:
        raise RunError(f"run_eval handles single-pass modes only, got {mode.name}")
    if not problems:
        raise RunError("empty dataset")
    lib = library or default_library()

    def worker(problem: BilingualProblem) -> list[InferenceRecord]:
        question = problem.question(mode.input_language)
        return [_solve_record(problem, mode, 0, question, gateway, sampling, lib)]

    records = _run_items(problems, worker, gateway.max_in_flight)
    manifest = _make_manifest(mode, sampling, gateway, problems, clock)
    return build_report(manifest, records, manifest["subset_by_id"])


def run_te2e(
    problems: Sequence[BilingualProblem],
    gateway: GatewayClient,
    sampling: SamplingConfig = SamplingConfig(),
    library: PromptLibrary | None = None,
    clock: Clock = utc_clock,
    mode: PromptingMode | None = None,
) -> RunReport:
    """Two-pass run: few-shot translate the Korean question, then solve in English.

    A failed translation marks the item unparseable and skips the solve step;
    the token ledger still carries whatever the translation attempt cost.
    """
    from .core import mode_for

    te2e = mode or mode_for("TE2E")
    if not problems:
        raise RunError("empty dataset")
    lib = library or default_library()

    def worker(problem: BilingualProblem) -> list[InferenceRecord]:
        prompt = lib.render("te_translate", {"question": problem.question_ko})
        text, usage, error = _complete(gateway, prompt, sampling)
        translate_record = InferenceRecord(
            problem_id=problem.id,
            mode=te2e.name,
            step_index=0,
            prompt_text=prompt,
            raw_output=text,
            token_usage=usage,
            verdict="unparseable",
            error=error,
        )
        if error is not None:
            return [translate_record]
        solve = _solve_record(problem, te2e, 1, text.strip(), gateway, sampling, lib)
        return [translate_record, solve]

    records = _run_items(problems, worker, gateway.max_in_flight)
    manifest = _make_manifest(te2e, sampling, gateway, problems, clock)
    return build_report(manifest, records, manifest["subset_by_id"])


def compare_runs(reports: Sequence[RunReport]) -> dict:
    """Deltas of overall accuracy against the first (baseline) report.

    All reports must cover the identical dataset; the average-delta row
    follows the baseline-gain presentation of the accuracy tables.
    """
    if len(reports) < 2:
        raise RunError("need a baseline and at least one run to compare")
    baseline = reports[0]
    for report in reports[1:]:
        if report.dataset_hash != baseline.dataset_hash:
            raise RunError(
                "dataset hash mismatch: "
                f"{report.label} was not run on the baseline's dataset"
            )
    runs = []
    for report in reports[1:]:
        runs.append(
            {
                "label": report.label,
                "overall": report.accuracy.overall,
                "delta": report.accuracy.overall - baseline.accuracy.overall,
            }
        )
    average = sum(entry["delta"] for entry in runs) / len(runs)
    return {
        "baseline": {"label": baseline.label, "overall": baseline.accuracy.overall},
        "runs": runs,
        "average_delta": average,
    }
