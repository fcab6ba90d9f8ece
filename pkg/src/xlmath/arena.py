"""Pairwise judge comparisons, Elo ratings with bootstrap, and token-cost metrics.

Matches put two contestants' answers in front of a judge model with the slot
assignment randomized per question (seeded), which neutralizes position bias.
Verdicts are parsed from the last [[A]]/[[B]] marker and mapped back through
the slot swap, so ``win_a`` always refers to the named contestant. A judge
output without a marker is inconclusive; inconclusive matches are excluded
from ratings and win rates.

Ratings come from sequential Elo replay. Because match order matters, the
final ratings are bootstrapped: each iteration resamples the conclusive
matches with replacement, replays them in sampled order from the initial
rating, and the reported figures are the per-contestant median and central
95% interval over iterations.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DataModelError, SamplingConfig, TokenUsage
from .gateway import ChatRequest, GatewayClient, GatewayError
from .prompts import PromptLibrary, default_library

logger = logging.getLogger(__name__)

DEFAULT_K = 4.0
DEFAULT_INITIAL_RATING = 1000.0
OUTPUT_TOKEN_WEIGHT = 3


class ArenaError(ValueError):
    """Bad arena inputs: mismatched question sets or degenerate match logs."""


def expected_score(r_a: float, r_b: float) -> float:
    """Probability-like expected score of A against B; E(a,b) + E(b,a) = 1."""
    return 1.0 / (1.0 + 10.0 ** ((r_b - r_a) / 400.0))


def update_rating(rating: float, score: float, expected: float, k: float) -> float:
    """Post-match rating: r + k * (s - e) with s in {0, 1}."""
    return rating + k * (score - expected)


@dataclass(frozen=True)
class MatchResult:
    question_id: str
    contestant_a: str
    contestant_b: str
    swap_applied: bool
    verdict: str
    judge_raw: str

    def __post_init__(self) -> None:
        if self.verdict not in ("win_a", "win_b", "inconclusive"):
            raise DataModelError(f"unknown verdict: {self.verdict!r}")

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "contestant_a": self.contestant_a,
            "contestant_b": self.contestant_b,
            "swap_applied": self.swap_applied,
            "verdict": self.verdict,
            "judge_raw": self.judge_raw,
        }

    @classmethod
    def from_dict(cls, data: dict) -> MatchResult:
        return cls(
            question_id=data["question_id"],
            contestant_a=data["contestant_a"],
            contestant_b=data["contestant_b"],
            swap_applied=bool(data["swap_applied"]),
            verdict=data["verdict"],
            judge_raw=data["judge_raw"],
        )


@dataclass
class EloState:
    """Live ratings plus the ordered match log that produced them.

    Rating updates are exactly zero-sum by construction: one delta is
    computed and applied with opposite signs to the two contestants.
    """

    k_factor: float = DEFAULT_K
    initial_rating: float = DEFAULT_INITIAL_RATING
    ratings: dict[str, float] = field(default_factory=dict)
    match_log: list[MatchResult] = field(default_factory=list)

    def rating(self, contestant: str) -> float:
        return self.ratings.get(contestant, self.initial_rating)

    def record(self, match: MatchResult) -> float:
        """Apply a match and return the delta added to A (and subtracted from B).

        A single delta applied with opposite signs is what makes the update
        zero-sum; inconclusive matches apply nothing.
        """
        self.match_log.append(match)
        if match.verdict == "inconclusive":
            return 0.0
        r_a = self.ratings.setdefault(match.contestant_a, self.initial_rating)
        r_b = self.ratings.setdefault(match.contestant_b, self.initial_rating)
        e_a = expected_score(r_a, r_b)
        s_a = 1.0 if match.verdict == "win_a" else 0.0
        delta = self.k_factor * (s_a - e_a)
        self.ratings[match.contestant_a] = r_a + delta
        self.ratings[match.contestant_b] = r_b - delta
        return delta


@dataclass(frozen=True)
class TokenLedger:
    """Per-sample token usages with the weighted mean cost figure."""

    per_sample: tuple[TokenUsage, ...]

    @property
    def l_model(self) -> float:
        return token_consumption(self.per_sample)


def token_consumption(per_sample: Sequence[TokenUsage]) -> float:
    """Mean per-sample cost with output tokens weighted 3x.

    The weight reflects the higher serving cost of generated tokens in common
    provider price sheets.
    """
    if not per_sample:
        raise ArenaError("token consumption needs at least one sample")
    total = sum(
        usage.input_tokens + OUTPUT_TOKEN_WEIGHT * usage.output_tokens
        for usage in per_sample
    )
    return total / len(per_sample)


@dataclass(frozen=True)
class ArenaEntry:
    """One contestant answer to one question."""

    question_id: str
    question: str
    answer: str

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "question": self.question,
            "answer": self.answer,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ArenaEntry:
        return cls(data["question_id"], data["question"], data["answer"])


def parse_judge_verdict(text: str) -> str | None:
    """Slot letter from the last [[A]]/[[B]] marker, or None when absent."""
    pos_a = text.rfind("[[A]]")
    pos_b = text.rfind("[[B]]")
    if pos_a < 0 and pos_b < 0:
        return None
    return "A" if pos_a > pos_b else "B"


def run_matches(
    outputs_a: Sequence[ArenaEntry],
    outputs_b: Sequence[ArenaEntry],
    contestant_a: str,
    contestant_b: str,
    gateway: GatewayClient,
    rng_seed: int = 0,
    sampling: SamplingConfig = SamplingConfig(),
    library: PromptLibrary | None = None,
) -> list[MatchResult]:
    """Judge each question once with seeded slot randomization.

    Both output sets must cover the same question ids. A judge backend
    failure or an unmarked judge output yields an inconclusive match rather
    than aborting the tournament.
    """
    by_id_a = {entry.question_id: entry for entry in outputs_a}
    by_id_b = {entry.question_id: entry for entry in outputs_b}
    if set(by_id_a) != set(by_id_b):
        missing = sorted(set(by_id_a) ^ set(by_id_b))
        raise ArenaError(f"output sets cover different question ids: {missing[:5]}")
    if not by_id_a:
        raise ArenaError("no questions to judge")
    lib = library or default_library()
    question_ids = sorted(by_id_a)
    rng = np.random.default_rng(rng_seed)
    swaps = {qid: bool(rng.integers(0, 2)) for qid in question_ids}

    def judge(qid: str) -> MatchResult:
        entry_a, entry_b = by_id_a[qid], by_id_b[qid]
        swap = swaps[qid]
        messages = lib.render_judge_pair(entry_a.question, entry_a.answer, entry_b.answer, swap)
        request = ChatRequest(
            model_id=gateway.backend_id, messages=tuple(messages), sampling=sampling
        )
        try:
            response = gateway.complete(request)
        except GatewayError as exc:
            logger.warning("judge call failed for %s: %s", qid, exc)
            return MatchResult(qid, contestant_a, contestant_b, swap, "inconclusive", str(exc))
        slot = parse_judge_verdict(response.text)
        if slot is None:
            verdict = "inconclusive"
        elif (slot == "A") != swap:
            verdict = "win_a"
        else:
            verdict = "win_b"
        return MatchResult(qid, contestant_a, contestant_b, swap, verdict, response.text)

    with ThreadPoolExecutor(max_workers=gateway.max_in_flight) as pool:
        return list(pool.map(judge, question_ids))


def conclusive_matches(matches: Sequence[MatchResult]) -> list[MatchResult]:
    return [m for m in matches if m.verdict != "inconclusive"]


def replay_matches(
    matches: Sequence[MatchResult],
    k: float = DEFAULT_K,
    initial: float = DEFAULT_INITIAL_RATING,
) -> dict[str, float]:
    """Sequential Elo over a match sequence, in the given order."""
    state = EloState(k_factor=k, initial_rating=initial)
    for match in matches:
        state.record(match)
    return dict(state.ratings)


def resample_indices(rng_seed: int, iterations: int, n_matches: int) -> list[np.ndarray]:
    """Per-iteration with-replacement index draws, split off one root seed.

    Exposed so an external replay can reproduce the exact bootstrap sequences.
    """
    root = np.random.SeedSequence(rng_seed)
    children = root.spawn(iterations)
    return [
        np.random.default_rng(child).integers(0, n_matches, size=n_matches)
        for child in children
    ]


@dataclass(frozen=True)
class EloReport:
    ratings: dict
    iterations: int
    conclusive: int
    k: float
    initial: float
    iteration_ratings: tuple[dict[str, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            "ratings": self.ratings,
            "iterations": self.iterations,
            "conclusive": self.conclusive,
            "k": self.k,
            "initial": self.initial,
        }


def compute_elo(
    matches: Sequence[MatchResult],
    k: float = DEFAULT_K,
    initial: float = DEFAULT_INITIAL_RATING,
    bootstrap_iters: int = 1000,
    rng_seed: int = 0,
) -> EloReport:
    """Bootstrapped ratings: median and central 95% interval per contestant.

    Deterministic for a fixed seed. Contestants absent from an iteration's
    resample keep the initial rating in that iteration.
    """
    if bootstrap_iters < 1:
        raise ArenaError("bootstrap_iters must be >= 1")
    usable = conclusive_matches(matches)
    if not usable:
        raise ArenaError("no conclusive matches to rate")
    contestants = sorted(
        {m.contestant_a for m in usable} | {m.contestant_b for m in usable}
    )
    draws = resample_indices(rng_seed, bootstrap_iters, len(usable))
    finals = np.full((bootstrap_iters, len(contestants)), initial, dtype=np.float64)
    iteration_ratings = []
    for row, indices in enumerate(draws):
        ratings = replay_matches([usable[i] for i in indices], k=k, initial=initial)
        iteration_ratings.append(ratings)
        for col, name in enumerate(contestants):
            finals[row, col] = ratings.get(name, initial)
    summary = {}
    for col, name in enumerate(contestants):
        values = finals[:, col]
        summary[name] = {
            "median": float(np.median(values)),
            "low": float(np.percentile(values, 2.5)),
            "high": float(np.percentile(values, 97.5)),
        }
    return EloReport(
        ratings=summary,
        iterations=bootstrap_iters,
        conclusive=len(usable),
        k=k,
        initial=initial,
        iteration_ratings=tuple(iteration_ratings),
    )


def win_rate(matches: Sequence[MatchResult], contestant: str) -> float:
    """Percentage of conclusive matches involving the contestant that it won."""
    involved = [
        m
        for m in conclusive_matches(matches)
        if contestant in (m.contestant_a, m.contestant_b)
    ]
    if not involved:
        raise ArenaError(f"no conclusive matches involve {contestant!r}")
    wins = sum(
        1
        for m in involved
        if (m.verdict == "win_a" and m.contestant_a == contestant)
        or (m.verdict == "win_b" and m.contestant_b == contestant)
    )
    return 100.0 * wins / len(involved)
