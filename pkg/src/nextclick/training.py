"""Training loop: batching, Adam with warm-up/decay, periodic validation, early stopping."""

from __future__ import annotations

import copy
import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch

from .data import TrainingExample, as_slices, make_examples
from .exceptions import ConfigError, DivergenceError, EmptyInputError
from .metrics import PredictionRecord, rank_scores
from .model import ClickModel
from .nn import Adam, WarmupExponentialDecay
from .types import PredictionRequest

log = logging.getLogger(__name__)

CURVE_FIELDS = ("step", "epoch", "lr", "train_loss", "valid_top1", "elapsed_s")


@dataclass
class TrainConfig:
    batch_size: int = 128
    segment_size: int = 100
    base_lr: float = 1e-3
    warmup: int = 1000
    decay: float = 0.98
    decay_steps: int = 1000
    max_steps: int = 20_000
    eval_every: int = 250
    patience: int = 10
    valid_max_events: int | None = 3000
    grad_clip: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_steps < 1 or self.eval_every < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_steps, eval_every and patience must be positive")
        if self.segment_size < 1:
            raise ConfigError("segment_size must be positive")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")

    def schedule(self) -> WarmupExponentialDecay:
        return WarmupExponentialDecay(self.base_lr, self.warmup, self.decay, self.decay_steps)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainResult:
    steps: int
    best_step: int
    best_valid_top1: float | None
    curve: list[dict] = field(default_factory=list)
    stopped_early: bool = False
    optimizer: Adam | None = None


def _target(ex: TrainingExample) -> int:
    return ex.sequence.events[ex.target].clicked_index


def epoch_batches(examples: Sequence[TrainingExample], batch_size: int, rng: np.random.Generator):
    """Shuffle whole segments, then cut the concatenation into batches.

    Keeping a segment's examples together lets one batch reuse the screens its
    overlapping history windows share.
    """
    groups: dict[tuple, list[TrainingExample]] = {}
    for ex in examples:
        groups.setdefault((id(ex.sequence), ex.segment), []).append(ex)
    order = rng.permutation(len(groups))
    keys = list(groups)
    flat = [ex for g in order for ex in groups[keys[g]]]
    for lo in range(0, len(flat), batch_size):
        yield flat[lo:lo + batch_size]


def iter_predictions(model: ClickModel, data, batch_size: int = 256, max_events: int | None = None,
                     with_probabilities: bool = False) -> Iterator[PredictionRecord]:
    """Score target events in order; ``max_events`` keeps the first N per slice order."""
    was_training = model.training
    model.eval()
    h = model.config.history_size
    pending: list[tuple] = []
    emitted = 0

    def flush():
        batch = model.featurizer.batch([p[1] for p in pending])
        with torch.no_grad():
            probs = model.batch_probabilities(batch)
        for (sl, _req, idx), pr in zip(pending, probs):
            events = sl.sequence.events
            yield PredictionRecord(
                user_id=sl.user_id,
                event_index=idx,
                target_index=events[idx].clicked_index,
                ranking=[int(i) for i in rank_scores(pr)],
                app_id=events[idx].app_id,
                prev_app_id=events[idx - 1].app_id if idx > 0 else None,
                probabilities=[float(p) for p in pr] if with_probabilities else None,
            )
        pending.clear()

    try:
        for sl in as_slices(data):
            for idx in sl.target_indices:
                if max_events is not None and emitted >= max_events:
                    break
                pending.append((sl, PredictionRequest.from_sequence(sl.sequence, idx, h), idx))
                emitted += 1
                if len(pending) >= batch_size:
                    yield from flush()
        if pending:
            yield from flush()
    finally:
        model.train(was_training)


def subsample_slices(data, max_events: int | None, seed: int = 0) -> list:
    """Deterministic evaluation subset: whole slices in a seeded order until ``max_events``."""
    slices = as_slices(data)
    if max_events is None:
        return slices
    out, total = [], 0
    for i in np.random.default_rng(seed).permutation(len(slices)):
        if total >= max_events:
            break
        out.append(slices[i])
        total += len(slices[i])
    return sorted(out, key=lambda s: s.user_id)


def top1_of(model: ClickModel, data, max_events: int | None = None) -> float:
    hits = n = 0
    for r in iter_predictions(model, data, max_events=max_events):
        hits += r.ranking[0] == r.target_index
        n += 1
    return hits / n if n else float("nan")


def train_model(model: ClickModel, train_data, valid_data=None, config: TrainConfig = TrainConfig(),
                log_path: str | Path | None = None, checkpoint_fn=None) -> TrainResult:
    """Minimize mean cross-entropy; keep the parameters with the best validation top-1.

    ``checkpoint_fn(model, optimizer, step)`` is called whenever a new best is found.
    """
    examples = list(make_examples(train_data, model.config.history_size, config.segment_size))
    if not examples:
        raise EmptyInputError("no training events")
    valid = subsample_slices(valid_data, config.valid_max_events, config.seed) if valid_data else None
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    optimizer = Adam(model.named_parameters(), config.schedule())
    model.train()
    curve: list[dict] = []
    best = (-math.inf, 0, copy.deepcopy(model.state_dict()))
    bad_evals = 0
    step = epoch = 0
    running, running_n = 0.0, 0
    t0 = time.perf_counter()
    stopped = False
    log_fh = open(log_path, "w", newline="") if log_path else None
    writer = csv.DictWriter(log_fh, fieldnames=CURVE_FIELDS) if log_fh else None
    if writer:
        writer.writeheader()
    try:
        while step < config.max_steps and not stopped:
            for chunk in epoch_batches(examples, config.batch_size, rng):
                batch = model.featurizer.batch([ex.request() for ex in chunk], [_target(ex) for ex in chunk])
                optimizer.zero_grad()
                loss = model.batch_loss(batch)
                value = float(loss.detach())
                if not math.isfinite(value):
                    raise DivergenceError(
                        f"loss became {value} at step {step + 1} (lr={config.schedule()(step + 1):.3g}); "
                        "try a lower base_lr or a longer warm-up"
                    )
                loss.backward()
                if config.grad_clip:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
                lr = optimizer.step()
                step += 1
                running += value
                running_n += 1
                last = step >= config.max_steps
                if step % config.eval_every == 0 or last:
                    row = {
                        "step": step,
                        "epoch": epoch,
                        "lr": lr,
                        "train_loss": running / running_n,
                        "valid_top1": top1_of(model, valid) if valid else float("nan"),
                        "elapsed_s": round(time.perf_counter() - t0, 3),
                    }
                    curve.append(row)
                    running, running_n = 0.0, 0
                    if writer:
                        writer.writerow(row)
                        log_fh.flush()
                    log.info("step %d loss %.4f valid_top1 %.4f", step, row["train_loss"], row["valid_top1"])
                    score = row["valid_top1"] if valid else -row["train_loss"]
                    if score > best[0]:
                        best = (score, step, copy.deepcopy(model.state_dict()))
                        bad_evals = 0
                        if checkpoint_fn is not None:
                            checkpoint_fn(model, optimizer, step)
                    else:
                        bad_evals += 1
                        if bad_evals >= config.patience:
                            stopped = True
                            break
                if last:
                    break
            epoch += 1
    finally:
        if log_fh:
            log_fh.close()
    model.load_state_dict(best[2])
    model.eval()
    best_valid = best[0] if valid else None
    return TrainResult(step, best[1], best_valid, curve, stopped, optimizer)
