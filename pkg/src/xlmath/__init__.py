"""Bilingual math evaluation and cross-lingual pipeline toolkit.

Subpackages cover the shared data model, prompt template assets, the backend
gateway, answer verification, evaluation harness and multi-step pipelines,
staged training-data generation, judge-based Elo ranking, corpus
contamination scanning, and the human curation service.
"""

__version__ = "0.1.0"

from .core import (
    BilingualProblem,
    GoldAnswer,
    InferenceRecord,
    PromptingMode,
    SamplingConfig,
    TokenUsage,
    load_dataset,
    mode_for,
    save_dataset,
    validate_dataset,
)
from .verification import ExtractedAnswer, accuracy, extract_boxed, judge_correct

__all__ = [
    "BilingualProblem",
    "GoldAnswer",
    "InferenceRecord",
    "PromptingMode",
    "SamplingConfig",
    "TokenUsage",
    "ExtractedAnswer",
    "accuracy",
    "extract_boxed",
    "judge_correct",
    "load_dataset",
    "mode_for",
    "save_dataset",
    "validate_dataset",
    "__version__",
]
