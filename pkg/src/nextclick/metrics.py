"""Ranking metrics: top-K accuracy, absolute and relative ranking, breakdowns."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .exceptions import EmptyInputError, TargetMissingError

RANK_CONVENTION = "zero-based"


def rank_scores(scores) -> np.ndarray:
    """Indices by descending score; exact ties go to the lower index."""
    scores = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(len(scores)), -scores))


@dataclass
class PredictionRecord:
    """Per-event output shared by every predictor (neural model and baselines)."""

    user_id: str
    event_index: int
    target_index: int
    ranking: list[int]
    app_id: str = ""
    prev_app_id: str | None = None
    probabilities: list[float] | None = None

    @property
    def n_candidates(self) -> int:
        return len(self.ranking)

    def to_dict(self) -> dict:
        d = {
            "user_id": self.user_id,
            "event_index": self.event_index,
            "target_index": self.target_index,
            "target_rank": target_rank(self.ranking, self.target_index),
            "n_candidates": self.n_candidates,
            "app_id": self.app_id,
            "prev_app_id": self.prev_app_id,
            "ranking": [int(i) for i in self.ranking],
        }
        if self.probabilities is not None:
            d["probabilities"] = [round(float(p), 7) for p in self.probabilities]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRecord":
        return cls(
            user_id=d["user_id"],
            event_index=int(d["event_index"]),
            target_index=int(d["target_index"]),
            ranking=[int(i) for i in d["ranking"]],
            app_id=d.get("app_id", ""),
            prev_app_id=d.get("prev_app_id"),
            probabilities=d.get("probabilities"),
        )


def write_records(records: Iterable[PredictionRecord], fp: IO[str] | str | Path) -> None:
    if isinstance(fp, (str, Path)):
        with open(fp, "w", encoding="utf-8", newline="\n") as fh:
            write_records(records, fh)
        return
    for r in records:
        fp.write(json.dumps(r.to_dict(), separators=(",", ":")) + "\n")


def read_records(fp: IO[str] | str | Path) -> list[PredictionRecord]:
    if isinstance(fp, (str, Path)):
        with open(fp, encoding="utf-8") as fh:
            return read_records(fh)
    return [PredictionRecord.from_dict(json.loads(line)) for line in fp if line.strip()]


def target_rank(ranking: Sequence[int], target_index: int) -> int:
    for pos, idx in enumerate(ranking):
        if idx == target_index:
            return pos
    raise TargetMissingError(f"target {target_index} not among the ranked candidates")


def screen_size_bucket(n_candidates: int, width: int = 10) -> str:
    lo = (max(n_candidates, 1) - 1) // width * width + 1
    return f"{lo}-{lo + width - 1}"


@dataclass(frozen=True)
class EventOutcome:
    target_rank: int
    n_candidates: int
    app_id: str = ""
    cross_app: bool = False
    screen_size_bucket: str = ""
    spatial_rank: int | None = None

    def __post_init__(self):
        if not 0 <= self.target_rank < self.n_candidates:
            raise TargetMissingError("target rank outside candidate list")


def score_event(ranking: Sequence[int], target_index: int, app_id: str = "", prev_app_id: str | None = None) -> EventOutcome:
    n = len(ranking)
    return EventOutcome(
        target_rank=target_rank(ranking, target_index),
        n_candidates=n,
        app_id=app_id,
        cross_app=prev_app_id is not None and prev_app_id != app_id,
        screen_size_bucket=screen_size_bucket(n),
        # Spatial (switch-access) order is the preorder itself.
        spatial_rank=int(target_index),
    )


def outcome_of(record: PredictionRecord) -> EventOutcome:
    return score_event(record.ranking, record.target_index, record.app_id, record.prev_app_id)


@dataclass
class MetricsReport:
    n_events: int
    top1: float
    top3: float
    absolute_ranking: float
    relative_ranking: float
    breakdowns: dict[str, dict[str, "MetricsReport"]] = field(default_factory=dict)
    rank_convention: str = RANK_CONVENTION

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "breakdowns"}
        d["breakdowns"] = {
            dim: {key: sub.to_dict() for key, sub in groups.items()} for dim, groups in self.breakdowns.items()
        }
        return d

    def rows(self, name: str = "") -> list[dict]:
        def row(scope, group, rep):
            return {
                "model": name,
                "scope": scope,
                "group": group,
                "n_events": rep.n_events,
                "top1": f"{rep.top1:.4f}",
                "top3": f"{rep.top3:.4f}",
                "absolute_ranking": f"{rep.absolute_ranking:.4f}",
                "relative_ranking": f"{rep.relative_ranking:.4f}",
            }

        out = [row("all", "all", self)]
        for dim, groups in self.breakdowns.items():
            for key, sub in groups.items():
                out.append(row(dim, key, sub))
        return out


CSV_FIELDS = ["model", "scope", "group", "n_events", "top1", "top3", "absolute_ranking", "relative_ranking"]


def reports_to_csv(reports: dict[str, MetricsReport], fp: IO[str] | str | Path | None = None, breakdowns: bool = True):
    if fp is None:
        buf = io.StringIO()
        reports_to_csv(reports, buf, breakdowns)
        return buf.getvalue()
    if isinstance(fp, (str, Path)):
        with open(fp, "w", encoding="utf-8", newline="") as fh:
            return reports_to_csv(reports, fh, breakdowns)
    writer = csv.DictWriter(fp, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for name, rep in reports.items():
        rows = rep.rows(name) if breakdowns else rep.rows(name)[:1]
        writer.writerows(rows)
    return None


def _summary(ranks: np.ndarray, sizes: np.ndarray) -> MetricsReport:
    return MetricsReport(
        n_events=int(len(ranks)),
        top1=float(np.mean(ranks < 1)),
        top3=float(np.mean(ranks < 3)),
        absolute_ranking=float(np.mean(ranks)),
        relative_ranking=float(np.mean(ranks / sizes)),
    )


def _bucket_order(label: str) -> int:
    return int(label.split("-")[0])


def aggregate(outcomes: Iterable[EventOutcome]) -> MetricsReport:
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyInputError("no outcomes to aggregate")
    ranks = np.array([o.target_rank for o in outcomes], dtype=float)
    sizes = np.array([o.n_candidates for o in outcomes], dtype=float)
    report = _summary(ranks, sizes)

    def grouped(keys) -> dict[str, MetricsReport]:
        keys = np.asarray(keys, dtype=object)
        groups = {}
        for key in sorted(set(keys.tolist()), key=str):
            mask = keys == key
            groups[key] = _summary(ranks[mask], sizes[mask])
        return groups

    by_size = grouped([o.screen_size_bucket or screen_size_bucket(o.n_candidates) for o in outcomes])
    report.breakdowns["screen_size"] = dict(sorted(by_size.items(), key=lambda kv: _bucket_order(kv[0])))
    report.breakdowns["app"] = grouped([o.app_id for o in outcomes])
    report.breakdowns["transition"] = grouped(["cross_app" if o.cross_app else "in_app" for o in outcomes])
    return report


def evaluate_records(records: Iterable[PredictionRecord]) -> MetricsReport:
    return aggregate(outcome_of(r) for r in records)


def top1_for_sizes(outcomes: Sequence[EventOutcome], lo: int, hi: int | None) -> float:
    sel = [o for o in outcomes if o.n_candidates >= lo and (hi is None or o.n_candidates <= hi)]
    if not sel:
        raise EmptyInputError(f"no outcomes with screen size in [{lo}, {hi}]")
    return float(np.mean([o.target_rank == 0 for o in sel]))


def switch_access_steps(outcomes: Iterable[EventOutcome]) -> tuple[float, float]:
    """Mean 1-based traversal count under spatial order vs. under the model ranking."""
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyInputError("no outcomes")
    if any(o.spatial_rank is None for o in outcomes):
        raise TargetMissingError("outcomes lack a spatial rank")
    spatial = float(np.mean([o.spatial_rank + 1 for o in outcomes]))
    ranked = float(np.mean([o.target_rank + 1 for o in outcomes]))
    return spatial, ranked
