"""Shared fixtures: a 50-item bilingual dataset and a fully scripted mock backend.

The mock script is constructed so per-mode correctness is known by hand:
within each subset, items 0..c-1 answer with the gold boxed value and the
rest split between a wrong boxed value and an unboxed refusal. The expected
percentages asserted in tests are hand-derived literals, not recomputed from
this table.
"""

from __future__ import annotations

import pytest

from xlmath.core import BilingualProblem, GoldAnswer
from xlmath.gateway import GatewayClient, MockBackend, MockRewardBackend

SUBSET_PREFIX = {
    "GSM8K": "g",
    "MATH": "m",
    "OMNI_MATH": "o",
    "MMMLU": "u",
    "KSM-KMO": "k",
}

ITEMS_PER_SUBSET = 10

CHOICE_CYCLE = ("A", "B", "C", "D")

# items 0..c-1 of each subset are answered correctly in that mode
CORRECT_COUNTS = {
    "K2K": {"GSM8K": 5, "MATH": 4, "OMNI_MATH": 4, "MMMLU": 4, "KSM-KMO": 3},
    "K2E": {"GSM8K": 6, "MATH": 5, "OMNI_MATH": 4, "MMMLU": 4, "KSM-KMO": 3},
    "E2E": {"GSM8K": 9, "MATH": 8, "OMNI_MATH": 8, "MMMLU": 7, "KSM-KMO": 6},
    "TE2E": {"GSM8K": 7, "MATH": 6, "OMNI_MATH": 6, "MMMLU": 5, "KSM-KMO": 4},
}

# hand-counted: 100 * c / 10 per subset column, unweighted mean across columns
EXPECTED_COLUMNS = {
    "K2K": {"GSM8K": 50.0, "MATH": 40.0, "OMNI_MATH": 40.0, "MMMLU": 40.0, "KSM": 30.0},
    "K2E": {"GSM8K": 60.0, "MATH": 50.0, "OMNI_MATH": 40.0, "MMMLU": 40.0, "KSM": 30.0},
    "E2E": {"GSM8K": 90.0, "MATH": 80.0, "OMNI_MATH": 80.0, "MMMLU": 70.0, "KSM": 60.0},
    "TE2E": {"GSM8K": 70.0, "MATH": 60.0, "OMNI_MATH": 60.0, "MMMLU": 50.0, "KSM": 40.0},
    "MSI": {"GSM8K": 70.0, "MATH": 60.0, "OMNI_MATH": 60.0, "MMMLU": 50.0, "KSM": 40.0},
}

EXPECTED_OVERALL = {"K2K": 40.0, "K2E": 44.0, "E2E": 76.0, "TE2E": 56.0, "MSI": 56.0}

# deltas vs the K2K baseline: K2E +4, E2E +36, TE2E +16, MSI +16
EXPECTED_DELTAS = {"K2E": 4.0, "E2E": 36.0, "TE2E": 16.0, "MSI": 16.0}
EXPECTED_AVERAGE_DELTA = 18.0

FIXED_CLOCK = lambda: "2000-01-01T00:00:00Z"  # noqa: E731


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion."""
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        status = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\n[{status}] acceptance::{name} ({report.duration:.2f}s)")


def _tag(subset: str, i: int) -> str:
    return f"{SUBSET_PREFIX[subset]}{i:02d}"


def _gold_text(subset: str, i: int) -> str:
    return str(2 * i)


def build_problems() -> list[BilingualProblem]:
    problems = []
    for subset in SUBSET_PREFIX:
        for i in range(ITEMS_PER_SUBSET):
            tag = _tag(subset, i)
            if subset == "MMMLU":
                answer = GoldAnswer.choice(CHOICE_CYCLE[i % 4], _gold_text(subset, i))
                question_en = f"Problem {tag}: which option equals {i} + {i}?"
                question_ko = f"문제 {tag}: {i} + {i} 과 같은 선택지는?"
            else:
                answer = GoldAnswer.numeric(2 * i)
                question_en = f"Problem {tag}: what is {i} + {i}?"
                question_ko = f"문제 {tag}: {i} + {i} 은 무엇인가?"
            direction = "ko_to_en" if subset.startswith("KSM") else "en_to_ko"
            problems.append(
                BilingualProblem(
                    id=tag,
                    subset=subset,
                    question_ko=question_ko,
                    question_en=question_en,
                    answer=answer,
                    source_direction=direction,
                )
            )
    return problems


def _gold_boxed(subset: str, i: int) -> str:
    if subset == "MMMLU":
        return CHOICE_CYCLE[i % 4]
    return str(2 * i)


def _solve_response(subset: str, i: int, correct: bool, english: bool, te: bool) -> str:
    tag = _tag(subset, i)
    gold = _gold_boxed(subset, i)
    if te:
        prefix = f"For Problem {tag} (TE),"
        if correct:
            return f"{prefix} the answer is $\\boxed{{{gold}}}$."
        if i % 2 == 0:
            return f"{prefix} the answer is $\\boxed{{999999}}$."
        return f"{prefix} no final answer was reached."
    if english:
        if correct:
            return f"Working through it, the answer is $\\boxed{{{gold}}}$."
        if i % 2 == 0:
            return f"Working through it, the answer is $\\boxed{{999999}}$."
        return f"I could not finish solving {tag}."
    if correct:
        return f"계산하면 답은 $\\boxed{{{gold}}}$ 입니다."
    if i % 2 == 0:
        return f"계산하면 답은 $\\boxed{{999999}}$ 입니다."
    return f"{tag} 문제는 풀 수 없었습니다."


def build_rules(back_translation_variant: int = 0) -> list[dict]:
    """Ordered mock rules for every mode; first match wins.

    ``back_translation_variant`` alters only the third (Korean rendering)
    step of the multi-step pipeline, including its boxed value; verdicts must
    be invariant to it.
    """
    rules = []
    for subset in SUBSET_PREFIX:
        for i in range(ITEMS_PER_SUBSET):
            tag = _tag(subset, i)
            # question translation step (shared by TE2E and the 3-step pipeline)
            rules.append(
                {
                    "contains": [
                        "translate math problems provided in Korean",
                        f"문제 {tag}",
                    ],
                    "response": f"Problem {tag} (TE): what is {i} + {i}?",
                }
            )
            # back-translation step: echoes the solve step's boxed value
            te_correct = i < CORRECT_COUNTS["TE2E"][subset]
            if back_translation_variant == 0:
                if te_correct:
                    ko_box = _gold_boxed(subset, i)
                elif i % 2 == 0:
                    ko_box = "999999"
                else:
                    ko_box = None
                if ko_box is None:
                    back = f"문제 {tag} 답 없음 입니다."
                else:
                    back = f"문제 {tag}의 답은 $\\boxed{{{ko_box}}}$ 입니다."
            else:
                # entirely different text and boxed value
                back = f"전혀 다른 번역 {tag}: $\\boxed{{{i + 777}}}$ 끝."
            rules.append({"contains": [f"For Problem {tag}"], "response": back})
            # solve steps, most specific context first
            rules.append(
                {
                    "contains": [f"Problem {tag} (TE)", "Respond in English."],
                    "response": _solve_response(subset, i, te_correct, True, te=True),
                }
            )
            rules.append(
                {
                    "contains": [f"Problem {tag}:", "Respond in English."],
                    "response": _solve_response(
                        subset, i, i < CORRECT_COUNTS["E2E"][subset], True, te=False
                    ),
                }
            )
            rules.append(
                {
                    "contains": [f"문제 {tag}", "Respond in English."],
                    "response": _solve_response(
                        subset, i, i < CORRECT_COUNTS["K2E"][subset], True, te=False
                    ),
                }
            )
            rules.append(
                {
                    "contains": [f"문제 {tag}", "Respond in Korean."],
                    "response": _solve_response(
                        subset, i, i < CORRECT_COUNTS["K2K"][subset], False, te=False
                    ),
                }
            )
    return rules


@pytest.fixture(scope="session")
def fixture_problems() -> list[BilingualProblem]:
    return build_problems()


@pytest.fixture()
def mock_backend() -> MockBackend:
    return MockBackend(build_rules())


@pytest.fixture()
def gateway(mock_backend, tmp_path) -> GatewayClient:
    return GatewayClient(
        mock_backend, cache_dir=tmp_path / "cache", max_in_flight=4, backoff=0.0
    )


def make_gateway(
    tmp_path,
    rules: list[dict] | None = None,
    reward_rules: list[dict] | None = None,
    cache: bool = True,
    max_in_flight: int = 4,
) -> GatewayClient:
    backend = MockBackend(rules if rules is not None else build_rules())
    reward = MockRewardBackend(reward_rules) if reward_rules is not None else None
    return GatewayClient(
        backend,
        reward_backend=reward,
        cache_dir=(tmp_path / "cache") if cache else None,
        max_in_flight=max_in_flight,
        backoff=0.0,
    )
