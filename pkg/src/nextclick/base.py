"""Estimator plumbing shared by the neural model and the baselines."""

from __future__ import annotations

from typing import Iterator

import numpy as np
from sklearn.base import BaseEstimator

from .data import as_slices, iter_requests
from .metrics import PredictionRecord, evaluate_records
from .types import PredictionRequest


class BaseRanker(BaseEstimator):
    """Ranks the candidate elements of the current screen.

    ``X`` is a ClickSequence, a SequenceSlice, or a list of either. Fitting
    uses every target event of the slices; prediction scores each target event
    given the events before it.
    """

    history_size = 9

    def fit(self, X, y=None):
        raise NotImplementedError

    def rank(self, request: PredictionRequest, user_id: str | None = None) -> np.ndarray:
        raise NotImplementedError

    def predict_records(self, X) -> Iterator[PredictionRecord]:
        for sl, idx, request in iter_requests(X, self.history_size):
            events = sl.sequence.events
            yield PredictionRecord(
                user_id=sl.user_id,
                event_index=idx,
                target_index=events[idx].clicked_index,
                ranking=[int(i) for i in self.rank(request, sl.user_id)],
                app_id=events[idx].app_id,
                prev_app_id=events[idx - 1].app_id if idx > 0 else None,
            )

    def predict(self, X) -> np.ndarray:
        """Top-1 element index for each target event."""
        return np.array([r.ranking[0] for r in self.predict_records(X)], dtype=int)

    def score(self, X, y=None) -> float:
        return evaluate_records(self.predict_records(X)).top1


def check_fit_input(X) -> list:
    slices = as_slices(X)
    if not any(len(s) for s in slices):
        from .exceptions import EmptyInputError

        raise EmptyInputError("no training events")
    return slices
