"""Staged training-data generation: translate, score-filter, expand, emit.

Seeds are English question/solution pairs. Each survivor becomes a staged
example: Korean question, English understanding, English solution, Korean
solution, joined by sentinel separator strings at emission. Every drop is
accounted for: input count always equals emitted + discarded + skipped, and
each discard carries a reason. The pipeline is a pure function of its inputs,
so reruns produce byte-identical output files.

Separators are configurable sentinel strings rather than tokenizer entries,
which keeps the emitted file trainer-agnostic; a trainer may map them onto
real vocabulary tokens.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import DataModelError, SamplingConfig
from .gateway import ChatRequest, GatewayClient, GatewayError, RewardScoreRequest
from .prompts import PromptLibrary, default_library
from .verification import extract_boxed

logger = logging.getLogger(__name__)

_PIPELINE_SAMPLING = SamplingConfig()

SEED_ORIGINS = ("openmath_like", "numina_like", "custom")

DEFAULT_SEPARATORS = ("<|understanding|>", "<|solution|>", "<|translation|>")

STAGES = ("understanding", "solution_en", "solution_ko")

TRAINING_CONFIG = {
    "batch_size": 96,
    "learning_rate": 2e-5,
    "lr_scheduler": "cosine",
    "optimizer": "adamw",
    "max_length": 8192,
    "epochs": 3,
}


class DatagenError(ValueError):
    """Bad pipeline configuration or emission inputs."""


@dataclass(frozen=True)
class SeedSample:
    question_en: str
    solution_en: str
    origin: str = "custom"

    def __post_init__(self) -> None:
        if not self.question_en or not self.solution_en:
            raise DataModelError("seed sample needs non-empty question and solution")
        if self.origin not in SEED_ORIGINS:
            raise DataModelError(f"unknown seed origin: {self.origin!r}")


@dataclass(frozen=True)
class StagedTrainingExample:
    """One training sample; stages appear in understand, solve, translate order."""

    question_ko: str
    understanding_en: str
    solution_en: str
    solution_ko: str
    rm_score: float
    separators: tuple[str, str, str] = DEFAULT_SEPARATORS

    def __post_init__(self) -> None:
        for name in ("question_ko", "understanding_en", "solution_en", "solution_ko"):
            if not getattr(self, name):
                raise DataModelError(f"stage text {name} must be non-empty")

    def staged_text(self, stage_mask: Sequence[str] | None = None) -> str:
        """Emission string; a stage mask omits stages (and their separators)."""
        mask = set(STAGES if stage_mask is None else stage_mask)
        unknown = mask - set(STAGES)
        if unknown:
            raise DatagenError(f"unknown stages in mask: {sorted(unknown)}")
        sep1, sep2, sep3 = self.separators
        parts = [self.question_ko]
        if "understanding" in mask:
            parts += [sep1, self.understanding_en]
        if "solution_en" in mask:
            parts += [sep2, self.solution_en]
        if "solution_ko" in mask:
            parts += [sep3, self.solution_ko]
        return "".join(parts)


@dataclass(frozen=True)
class FilterPolicy:
    """Reward-score filter: keep the high tail or the low tail, optionally top-k."""

    high_threshold: float = 1.0
    low_threshold: float = 0.0
    keep: str = "high"
    top_k: int | None = None

    def __post_init__(self) -> None:
        if self.low_threshold > self.high_threshold:
            raise DataModelError("low_threshold must be <= high_threshold")
        if self.keep not in ("high", "low"):
            raise DataModelError("keep must be 'high' or 'low'")
        if self.top_k is not None and self.top_k < 1:
            raise DataModelError("top_k must be >= 1")

    def retains(self, score: float) -> bool:
        if self.keep == "high":
            return score > self.high_threshold
        return score < self.low_threshold


@dataclass(frozen=True)
class TranslatedPair:
    seed_index: int
    seed: SeedSample
    question_ko: str


@dataclass(frozen=True)
class ScoredPair:
    pair: TranslatedPair
    score: float


@dataclass(frozen=True)
class DiscardRecord:
    seed_index: int
    stage: str
    reason: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "seed_index": self.seed_index,
            "stage": self.stage,
            "reason": self.reason,
            "detail": self.detail,
        }


@dataclass
class DatagenResult:
    examples: list[StagedTrainingExample] = field(default_factory=list)
    discards: list[DiscardRecord] = field(default_factory=list)
    skips: list[DiscardRecord] = field(default_factory=list)

    def counts(self) -> dict:
        return {
            "emitted": len(self.examples),
            "discarded": len(self.discards),
            "skipped": len(self.skips),
        }


def load_seeds(path) -> list[SeedSample]:
    seeds = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            seeds.append(
                SeedSample(
                    question_en=data["question_en"],
                    solution_en=data["solution_en"],
                    origin=data.get("origin", "custom"),
                )
            )
    return seeds


def reservoir_sample(seeds: Iterable[SeedSample], k: int, rng_seed: int) -> list[SeedSample]:
    """Uniform k-sample in one pass; deterministic for a fixed seed.

    Works at any scale without holding the full stream, which is what makes
    subsampling a multi-million-seed corpus practical.
    """
    rng = random.Random(rng_seed)
    chosen: list[SeedSample] = []
    for index, seed in enumerate(seeds):
        if index < k:
            chosen.append(seed)
        else:
            j = rng.randint(0, index)
            if j < k:
                chosen[j] = seed
    return chosen


def validate_sample(
    original: str, generated: str, gateway: GatewayClient, library: PromptLibrary
) -> str:
    """KEEP/DISCARD verdict from the validator prompt; strict token parse.

    Anything other than an exact verdict token is treated as DISCARD: when
    the checker is unsure, the sample goes.
    """
    messages = library.render_messages(
        "sample_validator", {"original": original, "generated": generated}
    )
    request = ChatRequest(
        model_id=gateway.backend_id, messages=tuple(messages), sampling=_PIPELINE_SAMPLING
    )
    response = gateway.complete(request)
    verdict = response.text.strip()
    return "KEEP" if verdict == "KEEP" else "DISCARD"



def translate_questions(
    seeds: Sequence[SeedSample],
    gateway: GatewayClient,
    library: PromptLibrary | None = None,
    result: DatagenResult | None = None,
) -> list[TranslatedPair]:
    """Give every seed a Korean question; validator rejections are discards."""
    lib = library or default_library()
    sink = result if result is not None else DatagenResult()
    pairs = []
    for index, seed in enumerate(seeds):
        prompt = lib.render("translate_en_ko", {"question": seed.question_en})
        try:
            response = gateway.complete(
                ChatRequest.single(gateway.backend_id, prompt, _PIPELINE_SAMPLING)
            )
            question_ko = response.text.strip()
            if validate_sample(seed.question_en, question_ko, gateway, lib) == "DISCARD":
                sink.discards.append(
                    DiscardRecord(index, "translate_question", "validator_discard")
                )
                continue
        except GatewayError as exc:
            sink.skips.append(
                DiscardRecord(index, "translate_question", "backend_error", str(exc))
            )
            continue
        pairs.append(TranslatedPair(index, seed, question_ko))
    return pairs


def score_and_filter(
    pairs: Sequence[TranslatedPair],
    policy: FilterPolicy,
    gateway: GatewayClient,
    result: DatagenResult | None = None,
) -> list[ScoredPair]:
    """Score each pair with the reward backend, then apply the filter policy.

    keep=high retains scores above the high threshold, keep=low below the low
    threshold; top_k additionally keeps only the k highest among retained.
    """
    sink = result if result is not None else DatagenResult()
    scored: list[ScoredPair] = []
    for pair in pairs:
        try:
            score = gateway.reward_score(
                RewardScoreRequest(pair.question_ko, pair.seed.solution_en)
            )
        except GatewayError as exc:
            sink.skips.append(
                DiscardRecord(pair.seed_index, "reward_score", "backend_error", str(exc))
            )
            continue
        if policy.retains(score):
            scored.append(ScoredPair(pair, score))
        else:
            sink.discards.append(
                DiscardRecord(
                    pair.seed_index, "reward_score", "reward_filter", f"score={score}"
                )
            )
    if policy.top_k is not None and len(scored) > policy.top_k:
        ranked = sorted(scored, key=lambda s: (-s.score, s.pair.seed_index))
        kept = ranked[: policy.top_k]
        kept_ids = {entry.pair.seed_index for entry in kept}
        for entry in scored:
            if entry.pair.seed_index not in kept_ids:
                sink.discards.append(
                    DiscardRecord(
                        entry.pair.seed_index,
                        "reward_score",
                        "below_top_k",
                        f"score={entry.score}",
                    )
                )
        scored = [entry for entry in scored if entry.pair.seed_index in kept_ids]
    return scored


def generate_understanding(
    pair: TranslatedPair, gateway: GatewayClient, library: PromptLibrary | None = None
) -> str:
    """English breakdown of the Korean question, anchored on the gold solution.

    The prompt is a three-turn conversation: the gold solution sits in the
    assistant turn so the breakdown stays aligned with how the problem is
    actually solved, while the final instruction forbids revealing the answer.
    """
    lib = library or default_library()
    messages = lib.render_messages(
        "understanding_gen",
        {"question": pair.question_ko, "solution": pair.seed.solution_en},
    )
    response = gateway.complete(
        ChatRequest(
            model_id=gateway.backend_id, messages=tuple(messages), sampling=_PIPELINE_SAMPLING
        )
    )
    return response.text.strip()


def generate_korean_solution(
    pair: TranslatedPair,
    gateway: GatewayClient,
    library: PromptLibrary | None = None,
) -> tuple[str | None, str | None]:
    """Korean rendering of the English solution, or a discard reason.

    Besides the prompt-based validator, the boxed answer must survive the
    translation verbatim: a cheap machine check that catches silently mangled
    final answers.
    """
    lib = library or default_library()
    prompt = lib.render("translate_en_ko", {"question": pair.seed.solution_en})
    response = gateway.complete(
        ChatRequest.single(gateway.backend_id, prompt, _PIPELINE_SAMPLING)
    )
    solution_ko = response.text.strip()
    en_span = extract_boxed(pair.seed.solution_en).raw_span
    ko_span = extract_boxed(solution_ko).raw_span
    if en_span != ko_span:
        return None, f"boxed_mismatch: en={en_span!r} ko={ko_span!r}"
    if validate_sample(pair.seed.solution_en, solution_ko, gateway, lib) == "DISCARD":
        return None, "validator_discard"
    return solution_ko, None


def run_pipeline(
    seeds: Sequence[SeedSample],
    gateway: GatewayClient,
    policy: FilterPolicy,
    separators: tuple[str, str, str] = DEFAULT_SEPARATORS,
    library: PromptLibrary | None = None,
) -> DatagenResult:
    """Full pipeline over a seed list; every input ends up counted once."""
    lib = library or default_library()
    result = DatagenResult()
    pairs = translate_questions(seeds, gateway, lib, result)
    scored = score_and_filter(pairs, policy, gateway, result)
    for entry in scored:
        pair = entry.pair
        try:
            understanding = generate_understanding(pair, gateway, lib)
            solution_ko, reason = generate_korean_solution(pair, gateway, lib)
        except GatewayError as exc:
            result.skips.append(
                DiscardRecord(pair.seed_index, "stage_generation", "backend_error", str(exc))
            )
            continue
        if solution_ko is None:
            result.discards.append(
                DiscardRecord(pair.seed_index, "translate_solution", reason or "discard")
            )
            continue
        result.examples.append(
            StagedTrainingExample(
                question_ko=pair.question_ko,
                understanding_en=understanding,
                solution_en=pair.seed.solution_en,
                solution_ko=solution_ko,
                rm_score=entry.score,
                separators=separators,
            )
        )
    return result


def parse_staged_text(text: str, separators: tuple[str, str, str]) -> tuple[str, ...]:
    """Split an emitted string back into its stage segments."""
    segments = [text]
    for separator in separators:
        last = segments.pop()
        head, _, tail = last.partition(separator)
        segments += [head, tail]
    return tuple(segments)


def emit_training_file(
    examples: Sequence[StagedTrainingExample],
    separators: tuple[str, str, str],
    out_path: Path | str,
    stage_mask: Sequence[str] | None = None,
) -> dict:
    """Write the training file plus its manifest; returns the manifest dict.

    An example whose stage text contains a separator is rejected with a
    diagnostic instead of written, since it would corrupt stage boundaries on
    the way back in. The manifest carries the fine-tuning configuration block
    for downstream trainers.
    """
    if len(separators) != 3 or len(set(separators)) != 3 or not all(separators):
        raise DatagenError("separators must be three distinct non-empty strings")
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    rejected: list[dict] = []
    written = 0
    with open(out, "w", encoding="utf-8") as handle:
        for index, example in enumerate(examples):
            stages = {
                "question_ko": example.question_ko,
                "understanding": example.understanding_en,
                "solution_en": example.solution_en,
                "solution_ko": example.solution_ko,
            }
            collision = next(
                (
                    (stage, separator)
                    for stage, text in stages.items()
                    for separator in separators
                    if separator in text
                ),
                None,
            )
            if collision is not None:
                rejected.append(
                    {
                        "index": index,
                        "reason": "separator_in_stage",
                        "detail": f"separator {collision[1]!r} occurs in {collision[0]}",
                    }
                )
                continue
            staged = StagedTrainingExample(
                question_ko=example.question_ko,
                understanding_en=example.understanding_en,
                solution_en=example.solution_en,
                solution_ko=example.solution_ko,
                rm_score=example.rm_score,
                separators=tuple(separators),
            )
            line = {"text": staged.staged_text(stage_mask), "rm_score": example.rm_score}
            handle.write(json.dumps(line, ensure_ascii=False, sort_keys=True) + "\n")
            written += 1
    manifest = {
        "example_count": written,
        "rejected": rejected,
        "separators": list(separators),
        "stage_mask": list(stage_mask) if stage_mask is not None else list(STAGES),
        "training_config": dict(TRAINING_CONFIG),
    }
    manifest_path = out.with_name(out.name + ".manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, ensure_ascii=False, sort_keys=True, indent=1)
        handle.write("\n")
    return manifest


def write_discard_log(result: DatagenResult, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in result.discards:
            handle.write(json.dumps(dict(record.to_dict(), kind="discard"), ensure_ascii=False))
            handle.write("\n")
        for record in result.skips:
            handle.write(json.dumps(dict(record.to_dict(), kind="skip"), ensure_ascii=False))
            handle.write("\n")
