"""Next-click prediction on app screens: data model, ingestion, synthetic corpora,
a hierarchical pointer model, reference predictors and ranking metrics."""

from .baselines import FrequencyRanker, LogisticRegressionRanker, NaiveBayesRanker, RandomRanker, RecencyRanker
from .data import SequenceSlice, SplitSpec, make_examples, split
from .embedding import FeatureFlags, Vocabulary
from .exceptions import NextClickError
from .metrics import MetricsReport, PredictionRecord, aggregate, evaluate_records, score_event
from .model import ClickModel, ModelConfig, PredictionResult
from .predictor import ClickPredictor
from .synth import OracleRanker, WorldConfig, generate_corpus
from .types import ClickEvent, ClickSequence, EventTime, PredictionRequest, Screen, UiElement

__version__ = "0.1.0"

__all__ = [
    "ClickEvent",
    "ClickModel",
    "ClickPredictor",
    "ClickSequence",
    "EventTime",
    "FeatureFlags",
    "FrequencyRanker",
    "LogisticRegressionRanker",
    "MetricsReport",
    "ModelConfig",
    "NaiveBayesRanker",
    "NextClickError",
    "OracleRanker",
    "PredictionRecord",
    "PredictionRequest",
    "PredictionResult",
    "RandomRanker",
    "RecencyRanker",
    "Screen",
    "SequenceSlice",
    "SplitSpec",
    "UiElement",
    "Vocabulary",
    "WorldConfig",
    "aggregate",
    "evaluate_records",
    "generate_corpus",
    "make_examples",
    "score_event",
    "split",
]
