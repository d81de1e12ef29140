"""Reference predictors: recency, frequency (personal / global), pairwise LR and NB."""

from __future__ import annotations

import warnings
from collections import defaultdict
from typing import Iterator

import numpy as np
import scipy.sparse as sp
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import SGDClassifier
from sklearn.naive_bayes import BernoulliNB
from sklearn.utils.validation import check_is_fitted

from .base import BaseRanker, check_fit_input
from .data import as_slices
from .embedding import position_bins
from .exceptions import ConfigError
from .metrics import PredictionRecord, rank_scores
from .types import ELEMENT_TYPES, ClickEvent, EventTime, PredictionRequest, Screen, UiElement


def element_key(elem: UiElement) -> tuple:
    return (elem.text, elem.elem_type, elem.preorder_index)


class ClickCounter:
    """Per-user and pooled click counts keyed by (screen_hash, element_key)."""

    def __init__(self):
        self.personal: dict[str, dict[tuple, list]] = defaultdict(dict)
        self.pooled: dict[tuple, int] = defaultdict(int)

    def add(self, user_id: str, event: ClickEvent) -> None:
        key = (event.screen.screen_hash, element_key(event.clicked))
        entry = self.personal[user_id].get(key)
        if entry is None:
            self.personal[user_id][key] = [1, event.time.timestamp_ms]
        else:
            entry[0] += 1
            entry[1] = max(entry[1], event.time.timestamp_ms)
        self.pooled[key] += 1

    def add_events(self, user_id: str, events) -> "ClickCounter":
        for event in events:
            self.add(user_id, event)
        return self

    def counts(self, screen: Screen, user_id: str | None, scope: str = "personal") -> np.ndarray:
        h = screen.screen_hash
        if scope == "global":
            table = self.pooled
            return np.array([table.get((h, element_key(e)), 0) for e in screen.elements], dtype=float)
        if scope != "personal":
            raise ConfigError(f"unknown frequency scope {scope!r}")
        table = self.personal.get(user_id, {})
        return np.array([table.get((h, element_key(e)), (0, 0))[0] for e in screen.elements], dtype=float)

    def last_clicked(self, screen: Screen, user_id: str | None) -> np.ndarray:
        h = screen.screen_hash
        table = self.personal.get(user_id, {})
        out = np.full(len(screen.elements), -np.inf)
        for j, e in enumerate(screen.elements):
            entry = table.get((h, element_key(e)))
            if entry is not None:
                out[j] = entry[1]
        return out

    def is_consistent(self) -> bool:
        total: dict[tuple, int] = defaultdict(int)
        for table in self.personal.values():
            for key, (count, _) in table.items():
                if count < 0:
                    return False
                total[key] += count
        return dict(total) == {k: v for k, v in self.pooled.items() if v}


def recency_rank(request: PredictionRequest, counter: ClickCounter, user_id: str | None) -> np.ndarray:
    return rank_scores(counter.last_clicked(request.current_screen, user_id))


def frequency_rank(
    request: PredictionRequest, counter: ClickCounter, user_id: str | None, scope: str = "personal"
) -> np.ndarray:
    return rank_scores(counter.counts(request.current_screen, user_id, scope))


class _CounterRanker(BaseRanker):
    """Replays each evaluated sequence so personal counts only see the past."""

    history_size = 0

    def fit(self, X, y=None):
        self.counter_ = ClickCounter()
        for sl in check_fit_input(X):
            self.counter_.add_events(sl.user_id, sl.sequence.events[: sl.stop])
        return self

    def _rank_with(self, request, counter, user_id):
        raise NotImplementedError

    def rank(self, request, user_id=None):
        check_is_fitted(self, "counter_")
        return self._rank_with(request, self.counter_, user_id)

    def predict_records(self, X) -> Iterator[PredictionRecord]:
        check_is_fitted(self, "counter_")
        for sl in as_slices(X):
            events = sl.sequence.events
            own = ClickCounter().add_events(sl.user_id, events[: sl.start])
            own.pooled = self.counter_.pooled  # read-only during replay
            for idx in sl.target_indices:
                event = events[idx]
                request = PredictionRequest((), event.screen, event.time, event.app_id, history_size=0)
                ranking = self._rank_with(request, own, sl.user_id)
                yield PredictionRecord(
                    user_id=sl.user_id,
                    event_index=idx,
                    target_index=event.clicked_index,
                    ranking=[int(i) for i in ranking],
                    app_id=event.app_id,
                    prev_app_id=events[idx - 1].app_id if idx > 0 else None,
                )
                _add_personal(own, sl.user_id, event)


def _add_personal(counter: ClickCounter, user_id: str, event: ClickEvent) -> None:
    key = (event.screen.screen_hash, element_key(event.clicked))
    entry = counter.personal[user_id].get(key)
    if entry is None:
        counter.personal[user_id][key] = [1, event.time.timestamp_ms]
    else:
        entry[0] += 1
        entry[1] = max(entry[1], event.time.timestamp_ms)


class RecencyRanker(_CounterRanker):
    def _rank_with(self, request, counter, user_id):
        return recency_rank(request, counter, user_id)


class FrequencyRanker(_CounterRanker):
    def __init__(self, scope: str = "personal"):
        self.scope = scope

    def fit(self, X, y=None):
        if self.scope not in ("personal", "global"):
            raise ConfigError(f"unknown frequency scope {self.scope!r}")
        return super().fit(X, y)

    def _rank_with(self, request, counter, user_id):
        return frequency_rank(request, counter, user_id, self.scope)


class RandomRanker(BaseRanker):
    """Uniformly random permutation per event (reference point for ranking metrics)."""

    history_size = 0

    def __init__(self, seed: int = 0):
        self.seed = seed

    def fit(self, X=None, y=None):
        self.rng_ = np.random.default_rng(self.seed)
        return self

    def rank(self, request, user_id=None):
        if not hasattr(self, "rng_"):
            self.fit()
        return self.rng_.permutation(len(request.current_screen.elements))


# --- pairwise featurization -----------------------------------------------------


class PairwiseFeaturizer:
    """Sparse one-hot features of (previous clicked element, candidate element) pairs.

    Element blocks: text, type, left/top/right/bottom bins, day, hour, app. Each
    block reserves its last column for unseen or missing values.
    """

    def __init__(self, min_count: int = 1):
        self.min_count = min_count

    def fit(self, slices) -> "PairwiseFeaturizer":
        texts: dict[str, int] = defaultdict(int)
        apps: dict[str, int] = defaultdict(int)
        for sl in as_slices(slices):
            for event in sl.sequence.events[: sl.stop]:
                apps[event.app_id] += 1
                for e in event.screen.elements:
                    texts[e.text] += 1
        self.text_ids_ = {t: i for i, t in enumerate(sorted(t for t, c in texts.items() if c >= self.min_count))}
        self.app_ids_ = {a: i for i, a in enumerate(sorted(a for a, c in apps.items() if c >= self.min_count))}
        sizes = [len(self.text_ids_) + 1, len(ELEMENT_TYPES) + 1, 101, 101, 101, 101, 8, 25, len(self.app_ids_) + 1]
        self.element_sizes_ = sizes
        elem_width = sum(sizes)
        self.n_features_ = 2 * elem_width + 8 + 25
        self._elem_offsets = np.cumsum([0] + sizes[:-1])
        self._elem_width = elem_width
        self._type_ids = {t: i for i, t in enumerate(ELEMENT_TYPES)}
        return self

    def _element_columns(self, elem: UiElement | None, screen: Screen | None, time: EventTime | None, app):
        sizes = self.element_sizes_
        cols = [sizes[k] - 1 for k in range(len(sizes))]
        if elem is not None:
            cols[0] = self.text_ids_.get(elem.text, sizes[0] - 1)
            cols[1] = self._type_ids.get(elem.elem_type, sizes[1] - 1)
            cols[2:6] = position_bins(elem.bbox, screen.width, screen.height)
        if time is not None:
            cols[6], cols[7] = time.day_of_week, time.hour_of_day
        if app is not None:
            cols[8] = self.app_ids_.get(app, sizes[8] - 1)
        return self._elem_offsets + np.asarray(cols)

    def transform(self, request: PredictionRequest) -> sp.csr_matrix:
        if request.history:
            prev = request.history[-1]
            prev_cols = self._element_columns(prev.clicked, prev.screen, prev.time, prev.app_id)
        else:
            prev_cols = self._element_columns(None, None, None, None)
        time = request.current_time
        ctx_cols = np.array([time.day_of_week, 8 + time.hour_of_day]) + 2 * self._elem_width
        screen = request.current_screen
        rows = []
        for elem in screen.elements:
            cand = self._element_columns(elem, screen, time, request.current_app) + self._elem_width
            rows.append(np.concatenate([prev_cols, cand, ctx_cols]))
        cols = np.concatenate(rows)
        n = len(screen.elements)
        width = len(rows[0])
        indptr = np.arange(0, n * width + 1, width)
        data = np.ones(len(cols), dtype=np.float64)
        return sp.csr_matrix((data, cols, indptr), shape=(n, self.n_features_))


def lr_nb_train(X, y, model_kind: str = "lr", pos_weight: float = 5.0, seed: int = 0, batch_size: int = 50_000):
    """Fit LR (weighted log-loss SGD) or Bernoulli NB (add-one smoothing, batched)."""
    y = np.asarray(y)
    weights = np.where(y == 1, pos_weight, 1.0)
    if model_kind == "lr":
        model = SGDClassifier(loss="log_loss", alpha=1e-6, max_iter=30, tol=1e-5, random_state=seed)
        with warnings.catch_warnings():
            # The epoch cap is deliberate; late epochs barely move the ranking.
            warnings.simplefilter("ignore", ConvergenceWarning)
            model.fit(X, y, sample_weight=weights)
        return model
    if model_kind == "nb":
        model = BernoulliNB(alpha=1.0)
        for lo in range(0, X.shape[0], batch_size):
            hi = min(lo + batch_size, X.shape[0])
            model.partial_fit(X[lo:hi], y[lo:hi], classes=[0, 1], sample_weight=weights[lo:hi])
        return model
    raise ConfigError(f"unknown model kind {model_kind!r}")


def pair_scores(model, X) -> np.ndarray:
    if isinstance(model, BernoulliNB):
        return model.predict_log_proba(X)[:, 1]
    return model.decision_function(X)


class PairwiseRanker(BaseRanker):
    """Scores each candidate paired with the previously clicked element."""

    history_size = 1

    def __init__(self, kind: str = "lr", pos_weight: float = 5.0, max_train_events: int = 40_000, seed: int = 0):
        self.kind = kind
        self.pos_weight = pos_weight
        self.max_train_events = max_train_events
        self.seed = seed

    def fit(self, X, y=None):
        slices = check_fit_input(X)
        self.featurizer_ = PairwiseFeaturizer().fit(slices)
        pairs = [(sl, idx) for sl in slices for idx in sl.target_indices]
        rng = np.random.default_rng(self.seed)
        if len(pairs) > self.max_train_events:
            keep = np.sort(rng.choice(len(pairs), size=self.max_train_events, replace=False))
            pairs = [pairs[i] for i in keep]
        blocks, labels = [], []
        for sl, idx in pairs:
            request = PredictionRequest.from_sequence(sl.sequence, idx, 1)
            blocks.append(self.featurizer_.transform(request))
            y_evt = np.zeros(len(request.current_screen.elements), dtype=int)
            y_evt[sl.sequence.events[idx].clicked_index] = 1
            labels.append(y_evt)
        Xs = sp.vstack(blocks, format="csr")
        ys = np.concatenate(labels)
        order = rng.permutation(Xs.shape[0])
        self.model_ = lr_nb_train(Xs[order], ys[order], self.kind, self.pos_weight, self.seed)
        return self

    def rank(self, request, user_id=None):
        check_is_fitted(self, "model_")
        return rank_scores(pair_scores(self.model_, self.featurizer_.transform(request)))


def LogisticRegressionRanker(**kw) -> PairwiseRanker:
    return PairwiseRanker(kind="lr", **kw)


def NaiveBayesRanker(**kw) -> PairwiseRanker:
    return PairwiseRanker(kind="nb", **kw)
