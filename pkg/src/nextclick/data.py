"""Corpus splitting and training-example construction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import ConfigError, TooFewUsersError
from .types import ClickSequence, PredictionRequest


@dataclass(frozen=True)
class SequenceSlice:
    """Events ``[start, stop)`` of a sequence are prediction targets.

    Events before ``start`` remain available as history (and as personal
    click counts for the baselines) but are never targets.
    """

    sequence: ClickSequence
    start: int = 0
    stop: int | None = None

    def __post_init__(self):
        if self.stop is None:
            object.__setattr__(self, "stop", len(self.sequence.events))
        if not 0 <= self.start <= self.stop <= len(self.sequence.events):
            raise ConfigError("slice bounds outside the sequence")

    @property
    def user_id(self) -> str:
        return self.sequence.user_id

    @property
    def target_indices(self) -> range:
        return range(self.start, self.stop)

    def __len__(self) -> int:
        return self.stop - self.start


def as_slices(data) -> list[SequenceSlice]:
    """Accept a ClickSequence, a SequenceSlice, or an iterable of either."""
    if isinstance(data, (ClickSequence, SequenceSlice)):
        data = [data]
    out = []
    for item in data:
        if isinstance(item, SequenceSlice):
            out.append(item)
        elif isinstance(item, ClickSequence):
            out.append(SequenceSlice(item))
        else:
            raise TypeError(f"expected ClickSequence or SequenceSlice, got {type(item).__name__}")
    return out


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "by_user"
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("by_user", "by_time"):
            raise ConfigError(f"unknown split mode {self.mode!r}")
        if abs(sum(self.fractions) - 1.0) > 1e-9 or min(self.fractions) < 0:
            raise ConfigError("split fractions must be non-negative and sum to 1")


def split(corpus: Sequence[ClickSequence], spec: SplitSpec = SplitSpec()):
    """Return ``(train, valid, test)`` lists of :class:`SequenceSlice`."""
    f_train, f_valid, _ = spec.fractions
    if spec.mode == "by_user":
        if len(corpus) < 3:
            raise TooFewUsersError("splitting by user needs at least 3 users")
        order = np.random.default_rng(spec.seed).permutation(len(corpus))
        n_train = int(round(f_train * len(corpus)))
        n_valid = int(round(f_valid * len(corpus)))
        n_train = min(max(n_train, 1), len(corpus) - 2)
        n_valid = min(max(n_valid, 1), len(corpus) - n_train - 1)
        parts = (order[:n_train], order[n_train:n_train + n_valid], order[n_train + n_valid:])
        return tuple([SequenceSlice(corpus[i]) for i in sorted(idx)] for idx in parts)

    train, valid, test = [], [], []
    for seq in corpus:
        n = len(seq.events)
        a = int(np.floor(f_train * n))
        b = int(np.floor((f_train + f_valid) * n))
        train.append(SequenceSlice(seq, 0, a))
        valid.append(SequenceSlice(seq, a, b))
        test.append(SequenceSlice(seq, b, n))
    return train, valid, test


@dataclass(frozen=True)
class TrainingExample:
    sequence: ClickSequence
    target: int
    history_start: int
    history_stop: int
    segment: int

    @property
    def history_length(self) -> int:
        return self.history_stop - self.history_start

    def request(self) -> PredictionRequest:
        events = self.sequence.events
        target = events[self.target]
        return PredictionRequest(
            history=events[self.history_start:self.history_stop],
            current_screen=target.screen,
            current_time=target.time,
            current_app=target.app_id,
            history_size=max(self.history_length, 0),
        )


def history_window(sequence: ClickSequence, index: int, history_size: int) -> tuple[int, int]:
    """Indices ``[lo, hi)`` of the at most ``history_size`` events strictly before event ``index``."""
    events = sequence.events
    now = events[index].time.timestamp_ms
    hi = index
    while hi > 0 and events[hi - 1].time.timestamp_ms >= now:
        hi -= 1
    return max(0, hi - history_size), hi


def segments(n_events: int, segment: int = 100) -> list[range]:
    return [range(i, min(i + segment, n_events)) for i in range(0, n_events, segment)]


def make_examples(data, history_size: int = 9, segment: int = 100) -> Iterator[TrainingExample]:
    """One example per target event; history windows may reach into earlier segments."""
    if history_size < 0:
        raise ConfigError("history_size must be non-negative")
    for sl in as_slices(data):
        for seg_no, seg in enumerate(segments(len(sl), segment)):
            for offset in seg:
                idx = sl.start + offset
                lo, hi = history_window(sl.sequence, idx, history_size)
                yield TrainingExample(sl.sequence, idx, lo, hi, seg_no)


def iter_requests(data, history_size: int = 9) -> Iterator[tuple[SequenceSlice, int, PredictionRequest]]:
    for sl in as_slices(data):
        for idx in sl.target_indices:
            yield sl, idx, PredictionRequest.from_sequence(sl.sequence, idx, history_size)


def n_targets(data: Iterable[SequenceSlice]) -> int:
    return sum(len(s) for s in data)
