"""Three-step pipeline: trace shape, ledger additivity, back-translation invariance."""

from __future__ import annotations

import pytest

from conftest import EXPECTED_COLUMNS, EXPECTED_OVERALL, FIXED_CLOCK, build_rules, make_gateway
from xlmath.core import TokenUsage, mode_for
from xlmath.harness import RunError, run_eval
from xlmath.msi import compare_msi_vs_single, run_msi
from xlmath.verification import problem_verdicts


class TestRunMsi:
    def test_three_steps_and_ledger_additivity(self, tmp_path, fixture_problems):
        gateway = make_gateway(tmp_path)
        result = run_msi(fixture_problems, gateway, clock=FIXED_CLOCK)
        assert len(result.traces) == len(fixture_problems)
        ledger = dict(result.report.ledger)
        for trace in result.traces:
            assert len(trace.step_outputs) == 3
            assert len(trace.per_step_usage) == 3
            total = TokenUsage()
            for usage in trace.per_step_usage:
                total = total + usage
            assert ledger[trace.problem_id] == total

    def test_hand_counted_accuracy_matches_te2e(self, tmp_path, fixture_problems):
        gateway = make_gateway(tmp_path)
        result = run_msi(fixture_problems, gateway, clock=FIXED_CLOCK)
        assert dict(result.report.accuracy.columns) == EXPECTED_COLUMNS["MSI"]
        assert result.report.accuracy.overall == EXPECTED_OVERALL["MSI"]

    def test_solver_failure_truncates_to_two_attempts(self, tmp_path, fixture_problems):
        rules = [
            rule
            for rule in build_rules()
            if not (
                "Problem g02 (TE)" in rule["contains"]
                and "Respond in English." in rule["contains"]
            )
        ]
        gateway = make_gateway(tmp_path, rules=rules)
        result = run_msi(fixture_problems, gateway, clock=FIXED_CLOCK)
        g02_records = [r for r in result.report.records if r.problem_id == "g02"]
        # translation succeeded, solve failed: two recorded attempts, no step 3
        assert [r.step_index for r in g02_records] == [0, 1]
        assert g02_records[1].error is not None
        trace = next(t for t in result.traces if t.problem_id == "g02")
        assert len(trace.step_outputs) == 1
        assert trace.final_verdict == "unparseable"

    def test_verdict_depends_only_on_solve_step(self, tmp_path, fixture_problems):
        baseline = run_msi(
            fixture_problems, make_gateway(tmp_path / "a"), clock=FIXED_CLOCK
        )
        mutated = run_msi(
            fixture_problems,
            make_gateway(tmp_path / "b", rules=build_rules(back_translation_variant=1)),
            clock=FIXED_CLOCK,
        )
        verdicts_a = problem_verdicts(baseline.report.records)
        verdicts_b = problem_verdicts(mutated.report.records)
        assert verdicts_a == verdicts_b
        traces_a = {t.problem_id: t.final_verdict for t in baseline.traces}
        traces_b = {t.problem_id: t.final_verdict for t in mutated.traces}
        assert traces_a == traces_b
        # the mutation really did change step-3 outputs
        changed = [
            (a.step_outputs[2], b.step_outputs[2])
            for a, b in zip(baseline.traces, mutated.traces)
        ]
        assert all(x != y for x, y in changed)

    def test_korean_back_translation_retained_in_trace(self, tmp_path, fixture_problems):
        gateway = make_gateway(tmp_path)
        result = run_msi(fixture_problems[:5], gateway, clock=FIXED_CLOCK)
        for trace in result.traces:
            assert "문제" in trace.step_outputs[2]


class TestCompareMsiVsSingle:
    def test_cost_ordering_and_ratio(self, tmp_path, fixture_problems):
        gateway_msi = make_gateway(tmp_path / "msi")
        gateway_single = make_gateway(tmp_path / "single")
        msi_result = run_msi(fixture_problems, gateway_msi, clock=FIXED_CLOCK)
        single = run_eval(
            fixture_problems, mode_for("K2K"), gateway_single, clock=FIXED_CLOCK
        )
        comparison = compare_msi_vs_single(msi_result.report, single)
        assert comparison["token_consumption"]["msi"] > comparison["token_consumption"]["single"]
        assert 0 < comparison["ratio_single_over_msi"] < 1
        assert comparison["accuracy"]["msi"] == EXPECTED_OVERALL["MSI"]

    def test_equal_ledgers_give_ratio_one(self, tmp_path, fixture_problems):
        gateway = make_gateway(tmp_path)
        report = run_eval(fixture_problems, mode_for("K2K"), gateway, clock=FIXED_CLOCK)
        comparison = compare_msi_vs_single(report, report)
        assert comparison["ratio_single_over_msi"] == 1.0

    def test_dataset_mismatch_rejected(self, tmp_path, fixture_problems):
        gateway = make_gateway(tmp_path)
        full = run_eval(fixture_problems, mode_for("K2K"), gateway, clock=FIXED_CLOCK)
        partial = run_eval(
            fixture_problems[:10], mode_for("K2K"), gateway, clock=FIXED_CLOCK
        )
        with pytest.raises(RunError):
            compare_msi_vs_single(full, partial)
