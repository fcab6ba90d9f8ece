"""Three-step inference: translate the question, solve in English, translate back.

The back-translation is a user-facing artifact: correctness is judged on the
English solution's boxed answer, never on the Korean rendering, so mutating
step three can never change a verdict. The token ledger sums all three steps.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .core import (
    BilingualProblem,
    InferenceRecord,
    SamplingConfig,
    TokenUsage,
    mode_for,
)
from .gateway import GatewayClient
from .harness import RunError, RunReport, _complete, _make_manifest, build_report
from .prompts import PromptLibrary, default_library
from .verification import extract_boxed, judge_correct

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MsiTrace:
    """Per-problem step outputs: translation, English solution, Korean solution.

    A step failure truncates the outputs; the verdict is then unparseable.
    """

    problem_id: str
    step_outputs: tuple[str, ...]
    per_step_usage: tuple[TokenUsage, ...]
    final_verdict: str

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "step_outputs": list(self.step_outputs),
            "per_step_usage": [usage.to_dict() for usage in self.per_step_usage],
            "final_verdict": self.final_verdict,
        }


@dataclass
class MsiRunReport:
    report: RunReport
    traces: list[MsiTrace]


def run_msi(
    problems: Sequence[BilingualProblem],
    gateway: GatewayClient,
    sampling: SamplingConfig = SamplingConfig(),
    library: PromptLibrary | None = None,
    clock=None,
) -> MsiRunReport:
    """Run the three-step pipeline over a dataset.

    Steps for one item are strictly sequential; items run concurrently. A
    failed step stops the item's pipeline but not the run.
    """
    if not problems:
        raise RunError("empty dataset")
    from .harness import utc_clock

    mode = mode_for("MSI")
    lib = library or default_library()
    tick = clock or utc_clock

    def worker(problem: BilingualProblem) -> tuple[list[InferenceRecord], MsiTrace]:
        records: list[InferenceRecord] = []
        outputs: list[str] = []
        usages: list[TokenUsage] = []

        def step(index: int, prompt: str, extract: bool) -> str | None:
            text, usage, error = _complete(gateway, prompt, sampling)
            if error is not None:
                records.append(
                    InferenceRecord(
                        problem_id=problem.id,
                        mode=mode.name,
                        step_index=index,
                        prompt_text=prompt,
                        raw_output=text,
                        token_usage=usage,
                        verdict="unparseable",
                        error=error,
                    )
                )
                return None
            if extract:
                extracted = extract_boxed(text)
                if extracted.raw_span is None:
                    verdict = "unparseable"
                else:
                    verdict = judge_correct(extracted, problem.answer)
                records.append(
                    InferenceRecord(
                        problem_id=problem.id,
                        mode=mode.name,
                        step_index=index,
                        prompt_text=prompt,
                        raw_output=text,
                        token_usage=usage,
                        extracted_answer=extracted.raw_span,
                        verdict=verdict,
                    )
                )
            else:
                records.append(
                    InferenceRecord(
                        problem_id=problem.id,
                        mode=mode.name,
                        step_index=index,
                        prompt_text=prompt,
                        raw_output=text,
                        token_usage=usage,
                        verdict="unparseable",
                    )
                )
            outputs.append(text)
            usages.append(usage)
            return text

        translation = step(
            0, lib.render("te_translate", {"question": problem.question_ko}), False
        )
        verdict = "unparseable"
        if translation is not None:
            solution = step(
                1,
                lib.render("solve_en", {"question": translation.strip()}),
                True,
            )
            if solution is not None:
                verdict = records[-1].verdict
                step(2, lib.render("te2e2k_translate", {"solution": solution}), False)
        trace = MsiTrace(
            problem_id=problem.id,
            step_outputs=tuple(outputs),
            per_step_usage=tuple(usages),
            final_verdict=verdict,
        )
        return records, trace

    all_records: list[InferenceRecord] = []
    traces: list[MsiTrace] = []
    with ThreadPoolExecutor(max_workers=gateway.max_in_flight) as pool:
        for records, trace in pool.map(worker, problems):
            all_records.extend(records)
            traces.append(trace)
    traces.sort(key=lambda t: t.problem_id)
    manifest = _make_manifest(mode, sampling, gateway, problems, tick)
    report = build_report(manifest, all_records, manifest["subset_by_id"])
    return MsiRunReport(report=report, traces=traces)


def compare_msi_vs_single(msi_report: RunReport, single_report: RunReport) -> dict:
    """Accuracy pair, weighted token-cost pair, and the single/msi cost ratio."""
    if msi_report.dataset_hash != single_report.dataset_hash:
        raise RunError("reports cover different datasets")
    l_msi = msi_report.l_model
    l_single = single_report.l_model
    if l_msi == 0:
        raise RunError("degenerate comparison: multi-step token ledger is zero")
    return {
        "accuracy": {
            "msi": msi_report.accuracy.overall,
            "single": single_report.accuracy.overall,
        },
        "token_consumption": {"msi": l_msi, "single": l_single},
        "ratio_single_over_msi": l_single / l_msi,
    }
