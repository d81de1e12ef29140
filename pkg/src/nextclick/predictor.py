"""Estimator wrapper around the neural model: fit / predict / save / load."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import numpy as np
import torch
from sklearn.utils.validation import check_is_fitted

from .base import BaseRanker, check_fit_input
from .embedding import AppVocabulary, FeatureFlags, Vocabulary
from .exceptions import CheckpointFormatError, MissingCheckpointError
from .metrics import PredictionRecord
from .model import ClickModel, ModelConfig, PredictionResult
from .nn import load_checkpoint, save_checkpoint
from .nn.checkpoint import config_digest
from .training import TrainConfig, iter_predictions, train_model
from .types import PredictionRequest

MODEL_FILE = "model.ckpt"
VOCAB_FILE = "vocab.txt"
APPS_FILE = "apps.txt"
CURVE_FILE = "train_log.csv"

_MODEL_PARAMS = (
    "d_model", "screen_encoder_layers", "sequence_encoder_layers", "pointer_layers", "heads",
    "ffn_mult", "history_size", "dropout", "max_elements", "max_tokens", "context_width", "max_bucket",
)
_FLAG_PARAMS = ("use_text", "use_type", "use_position", "use_time", "use_app", "use_screen_encoder")
_TRAIN_PARAMS = (
    "batch_size", "segment_size", "base_lr", "warmup", "decay", "decay_steps", "max_steps",
    "eval_every", "patience", "valid_max_events", "grad_clip",
)


def training_vocabularies(slices, min_count: int = 1) -> tuple[Vocabulary, AppVocabulary]:
    """Word and app vocabularies from the training slices only (events before ``stop``)."""
    texts, apps = [], []
    for sl in slices:
        for event in sl.sequence.events[: sl.stop]:
            apps.append(event.app_id)
            texts.extend(e.text for e in event.screen.elements)
    return Vocabulary.from_texts(texts, min_count), AppVocabulary.from_apps(apps, min_count)


class ClickPredictor(BaseRanker):
    """Next-click predictor over the elements of the current screen.

    >>> model = ClickPredictor(max_steps=2000).fit(train, valid=valid)  # doctest: +SKIP
    >>> model.predict_proba(request)  # doctest: +SKIP
    """

    def __init__(
        self,
        d_model: int = 128,
        screen_encoder_layers: int = 2,
        sequence_encoder_layers: int = 2,
        pointer_layers: int = 2,
        heads: int = 4,
        ffn_mult: int = 4,
        history_size: int = 9,
        dropout: float = 0.1,
        max_elements: int = 64,
        max_tokens: int = 8,
        context_width: int = 32,
        max_bucket: int = 20,
        use_text: bool = True,
        use_type: bool = True,
        use_position: bool = True,
        use_time: bool = True,
        use_app: bool = True,
        use_screen_encoder: bool = True,
        batch_size: int = 128,
        segment_size: int = 100,
        base_lr: float = 1e-3,
        warmup: int = 1000,
        decay: float = 0.98,
        decay_steps: int = 1000,
        max_steps: int = 20_000,
        eval_every: int = 250,
        patience: int = 10,
        valid_max_events: int | None = 3000,
        grad_clip: float | None = None,
        min_count: int = 1,
        seed: int = 0,
        threads: int | None = 1,
        log_path: str | None = None,
    ):
        self.d_model = d_model
        self.screen_encoder_layers = screen_encoder_layers
        self.sequence_encoder_layers = sequence_encoder_layers
        self.pointer_layers = pointer_layers
        self.heads = heads
        self.ffn_mult = ffn_mult
        self.history_size = history_size
        self.dropout = dropout
        self.max_elements = max_elements
        self.max_tokens = max_tokens
        self.context_width = context_width
        self.max_bucket = max_bucket
        self.use_text = use_text
        self.use_type = use_type
        self.use_position = use_position
        self.use_time = use_time
        self.use_app = use_app
        self.use_screen_encoder = use_screen_encoder
        self.batch_size = batch_size
        self.segment_size = segment_size
        self.base_lr = base_lr
        self.warmup = warmup
        self.decay = decay
        self.decay_steps = decay_steps
        self.max_steps = max_steps
        self.eval_every = eval_every
        self.patience = patience
        self.valid_max_events = valid_max_events
        self.grad_clip = grad_clip
        self.min_count = min_count
        self.seed = seed
        self.threads = threads
        self.log_path = log_path

    def model_config(self) -> ModelConfig:
        flags = FeatureFlags(**{k: getattr(self, k) for k in _FLAG_PARAMS})
        return ModelConfig(**{k: getattr(self, k) for k in _MODEL_PARAMS}, flags=flags)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{k: getattr(self, k) for k in _TRAIN_PARAMS}, seed=self.seed)

    def _set_threads(self) -> None:
        if self.threads:
            torch.set_num_threads(int(self.threads))

    def fit(self, X, y=None, valid=None):
        slices = check_fit_input(X)
        config = self.model_config()
        self.train_config()  # validate before the expensive parts
        self._set_threads()
        self.vocab_, self.app_vocab_ = training_vocabularies(slices, self.min_count)
        self.model_ = ClickModel(config, self.vocab_, self.app_vocab_, seed=self.seed)
        result = train_model(self.model_, slices, valid, self.train_config(), self.log_path)
        self.curve_ = result.curve
        self.best_step_ = result.best_step
        self.best_valid_top1_ = result.best_valid_top1
        self.n_steps_ = result.steps
        self.optimizer_ = result.optimizer
        return self

    # --- inference ----------------------------------------------------------------

    def predict_proba(self, request: PredictionRequest, target_index: int | None = None) -> PredictionResult:
        check_is_fitted(self, "model_")
        return self.model_.predict(request, target_index)

    def rank(self, request: PredictionRequest, user_id: str | None = None) -> np.ndarray:
        return self.predict_proba(request).ranked_indices

    def predict_records(self, X, with_probabilities: bool = False, batch_size: int = 256) -> Iterator[PredictionRecord]:
        check_is_fitted(self, "model_")
        self._set_threads()
        return iter_predictions(self.model_, X, batch_size, with_probabilities=with_probabilities)

    # --- persistence --------------------------------------------------------------

    def _checkpoint_config(self) -> dict:
        params = {k: v for k, v in self.get_params().items() if k not in ("log_path", "threads")}
        return {
            "estimator": params,
            "vocab_size": len(self.vocab_),
            "n_apps": len(self.app_vocab_),
            "best_step": int(self.best_step_),
            "best_valid_top1": self.best_valid_top1_,
        }

    def save(self, directory) -> Path:
        check_is_fitted(self, "model_")
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        tensors = {f"param/{k}": v.detach() for k, v in self.model_.state_dict().items()}
        opt = getattr(self, "optimizer_", None)
        if opt is not None:
            tensors.update({f"adam_m/{k}": v for k, v in opt.exp_avg.items()})
            tensors.update({f"adam_v/{k}": v for k, v in opt.exp_avg_sq.items()})
        save_checkpoint(out / MODEL_FILE, tensors, self._checkpoint_config(), int(self.n_steps_))
        self.vocab_.save(out / VOCAB_FILE)
        self.app_vocab_.save(out / APPS_FILE)
        (out / "curve.json").write_text(json.dumps(self.curve_, indent=1))
        return out

    @classmethod
    def load(cls, directory) -> "ClickPredictor":
        d = Path(directory)
        if not (d / MODEL_FILE).exists():
            raise MissingCheckpointError(f"no checkpoint at {d / MODEL_FILE}")
        tensors, config, step = load_checkpoint(d / MODEL_FILE)
        est = cls(**config["estimator"])
        est.vocab_ = Vocabulary.load(d / VOCAB_FILE)
        est.app_vocab_ = AppVocabulary.load(d / APPS_FILE)
        if len(est.vocab_) != config["vocab_size"] or len(est.app_vocab_) != config["n_apps"]:
            raise CheckpointFormatError("vocabulary sidecars do not match the checkpoint")
        est.model_ = ClickModel(est.model_config(), est.vocab_, est.app_vocab_)
        state = {k[len("param/"):]: torch.from_numpy(v) for k, v in tensors.items() if k.startswith("param/")}
        est.model_.load_state_dict(state)
        est.model_.eval()
        est.n_steps_ = step
        est.best_step_ = config["best_step"]
        est.best_valid_top1_ = config["best_valid_top1"]
        curve = d / "curve.json"
        est.curve_ = json.loads(curve.read_text()) if curve.exists() else []
        return est

    def digest(self) -> str:
        return config_digest(self._checkpoint_config())
