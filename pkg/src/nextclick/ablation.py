"""Feature and history-size ablations of the neural model."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

from .exceptions import ConfigError, MissingCheckpointError
from .metrics import MetricsReport, evaluate_records
from .predictor import MODEL_FILE, ClickPredictor

log = logging.getLogger(__name__)

FEATURE_ABLATIONS = ("use_text", "use_type", "use_position", "use_time", "use_app", "use_screen_encoder")
HISTORY_SIZES = (0, 1, 3, 5, 9)


def ablation_variants(base: dict | None = None, history_sizes: Sequence[int] = HISTORY_SIZES) -> dict[str, dict]:
    """Estimator parameters per variant: one per disabled feature, one per history size."""
    base = dict(base or {})
    variants = {}
    for flag in FEATURE_ABLATIONS:
        variants["no_" + flag[len("use_"):]] = {**base, flag: False}
    for h in history_sizes:
        if h < 0:
            raise ConfigError("history sizes must be non-negative")
        variants[f"history_{h}"] = {**base, "history_size": int(h)}
    return variants


def train_ablations(train, valid, variants: dict[str, dict], out_dir, names: Sequence[str] | None = None) -> dict[str, Path]:
    """Train and save each selected variant under ``out_dir/<name>``."""
    out = {}
    for name in names or list(variants):
        if name not in variants:
            raise ConfigError(f"unknown ablation variant {name!r}")
        log.info("training ablation variant %s", name)
        est = ClickPredictor(**variants[name]).fit(train, valid=valid)
        out[name] = est.save(Path(out_dir) / name)
    return out


def run_ablations(test, checkpoints: dict[str, str | Path]) -> dict[str, MetricsReport]:
    """Evaluate each variant's checkpoint on ``test``; every checkpoint must exist."""
    missing = [name for name, path in checkpoints.items() if not (Path(path) / MODEL_FILE).exists()]
    if missing:
        raise MissingCheckpointError(f"missing checkpoints for variants: {', '.join(missing)}")
    reports = {}
    for name, path in checkpoints.items():
        est = ClickPredictor.load(path)
        reports[name] = evaluate_records(est.predict_records(test))
    return reports
