"""Domain model shared across the toolkit: elements, screens, events, sequences."""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .exceptions import EmptyScreenError, HistoryOutOfOrderError, ValidationError

OTHER = "OTHER"
MS_PER_MINUTE = 60_000
MS_PER_HOUR = 3_600_000
MS_PER_DAY = 86_400_000
DEFAULT_MAX_BUCKET = 20
DEFAULT_HISTORY_SIZE = 9


def load_type_registry(path: str | Path | None = None) -> tuple[str, ...]:
    """Read a type registry file (one class name per line, ``#`` comments).

    The result always ends with ``OTHER``.
    """
    if path is None:
        text = resources.files("nextclick").joinpath("element_types.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    names = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#") and line != OTHER:
            names.append(line)
    if len(set(names)) != len(names):
        raise ValidationError("duplicate names in type registry")
    return tuple(names) + (OTHER,)


ELEMENT_TYPES = load_type_registry()
TYPE_INDEX = {name: i for i, name in enumerate(ELEMENT_TYPES)}


@dataclass(frozen=True, slots=True)
class UiElement:
    text: str
    elem_type: str
    bbox: tuple[int, int, int, int]
    preorder_index: int

    def __post_init__(self):
        left, top, right, bottom = self.bbox
        if left > right or top > bottom:
            raise ValidationError(f"degenerate bbox {self.bbox}")
        if self.elem_type not in TYPE_INDEX:
            raise ValidationError(f"unknown element type {self.elem_type!r}")
        if self.preorder_index < 0:
            raise ValidationError("preorder_index must be non-negative")

    @property
    def type_id(self) -> int:
        return TYPE_INDEX[self.elem_type]


@dataclass(frozen=True)
class Screen:
    """Actionable elements of one rendered screen, in preorder."""

    elements: tuple[UiElement, ...]
    width: int
    height: int
    app_id: str = ""

    def __post_init__(self):
        if not isinstance(self.elements, tuple):
            object.__setattr__(self, "elements", tuple(self.elements))
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("screen dimensions must be positive")
        for i, elem in enumerate(self.elements):
            if elem.preorder_index != i:
                raise ValidationError("elements must be listed by ascending preorder_index from 0")

    def __len__(self) -> int:
        return len(self.elements)

    @functools.cached_property
    def screen_hash(self) -> str:
        from .ingest import screen_hash

        return screen_hash(self)


def derive_local_time(timestamp_ms: int, tz_offset_min: int) -> tuple[int, int]:
    """Return ``(hour_of_day, day_of_week)`` with Monday = 0."""
    local_ms = timestamp_ms + tz_offset_min * MS_PER_MINUTE
    hour = (local_ms // MS_PER_HOUR) % 24
    # 1970-01-01 was a Thursday.
    day = (local_ms // MS_PER_DAY + 3) % 7
    return int(hour), int(day)


def elapsed_bucket(v_seconds: float, max_bucket: int = DEFAULT_MAX_BUCKET) -> int:
    if v_seconds < 0:
        raise ValidationError("elapsed time must be non-negative")
    bucket = math.floor(math.log(max(v_seconds, 1.0)))
    return min(max(bucket, 0), max_bucket)


@dataclass(frozen=True, slots=True)
class EventTime:
    timestamp_ms: int
    tz_offset_min: int = 0

    @property
    def hour_of_day(self) -> int:
        return derive_local_time(self.timestamp_ms, self.tz_offset_min)[0]

    @property
    def day_of_week(self) -> int:
        return derive_local_time(self.timestamp_ms, self.tz_offset_min)[1]


@dataclass(frozen=True, slots=True)
class ClickEvent:
    screen: Screen
    clicked_index: int
    time: EventTime
    app_id: str

    def __post_init__(self):
        if not 0 <= self.clicked_index < len(self.screen.elements):
            raise ValidationError(
                f"clicked_index {self.clicked_index} outside screen of {len(self.screen.elements)}"
            )

    @property
    def clicked(self) -> UiElement:
        return self.screen.elements[self.clicked_index]


@dataclass(frozen=True)
class ClickSequence:
    user_id: str
    events: tuple[ClickEvent, ...] = ()

    def __post_init__(self):
        if not isinstance(self.events, tuple):
            object.__setattr__(self, "events", tuple(self.events))
        for prev, nxt in zip(self.events, self.events[1:]):
            if nxt.time.timestamp_ms < prev.time.timestamp_ms:
                raise HistoryOutOfOrderError(f"events of user {self.user_id} are not chronological")

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[ClickEvent]:
        return iter(self.events)


@dataclass(frozen=True)
class PredictionRequest:
    history: tuple[ClickEvent, ...]
    current_screen: Screen
    current_time: EventTime
    current_app: str
    history_size: int = field(default=DEFAULT_HISTORY_SIZE, compare=False)

    def __post_init__(self):
        if not isinstance(self.history, tuple):
            object.__setattr__(self, "history", tuple(self.history))
        if len(self.history) > self.history_size:
            object.__setattr__(self, "history", self.history[len(self.history) - self.history_size:])
        if not self.current_screen.elements:
            raise EmptyScreenError("current screen has no actionable elements")
        now = self.current_time.timestamp_ms
        for prev, nxt in zip(self.history, self.history[1:]):
            if nxt.time.timestamp_ms < prev.time.timestamp_ms:
                raise HistoryOutOfOrderError("history is not chronological")
        if self.history and self.history[-1].time.timestamp_ms >= now:
            raise HistoryOutOfOrderError("history must strictly precede the prediction time")

    @classmethod
    def from_sequence(cls, sequence: ClickSequence, index: int, history_size: int = DEFAULT_HISTORY_SIZE):
        """Request for predicting ``sequence.events[index]`` from its past."""
        target = sequence.events[index]
        now = target.time.timestamp_ms
        lo = index
        while lo > 0 and sequence.events[lo - 1].time.timestamp_ms >= now:
            lo -= 1
        start = max(0, lo - history_size)
        return cls(
            history=sequence.events[start:lo] if history_size > 0 else (),
            current_screen=target.screen,
            current_time=target.time,
            current_app=target.app_id,
            history_size=history_size,
        )


# --- canonical JSONL event log -------------------------------------------------


def event_to_record(user_id: str, event: ClickEvent) -> dict:
    screen = event.screen
    return {
        "user_id": user_id,
        "timestamp_ms": event.time.timestamp_ms,
        "tz_offset_min": event.time.tz_offset_min,
        "app_id": event.app_id,
        "clicked_index": event.clicked_index,
        "screen": {
            "width": screen.width,
            "height": screen.height,
            "elements": [
                {"text": e.text, "type": e.elem_type, "bbox": list(e.bbox)} for e in screen.elements
            ],
        },
    }


def screen_from_record(record: dict, app_id: str = "") -> Screen:
    elements = tuple(
        UiElement(
            text=e.get("text") or "",
            elem_type=e.get("type", OTHER) if e.get("type", OTHER) in TYPE_INDEX else OTHER,
            bbox=tuple(int(v) for v in e["bbox"]),
            preorder_index=i,
        )
        for i, e in enumerate(record["elements"])
    )
    return Screen(elements, int(record["width"]), int(record["height"]), app_id)


def event_from_record(record: dict, screen_cache: dict | None = None) -> tuple[str, ClickEvent]:
    app_id = record.get("app_id", "")
    if screen_cache is not None:
        key = (app_id, json.dumps(record["screen"], sort_keys=True, separators=(",", ":")))
        screen = screen_cache.get(key)
        if screen is None:
            screen = screen_cache[key] = screen_from_record(record["screen"], app_id)
    else:
        screen = screen_from_record(record["screen"], app_id)
    event = ClickEvent(
        screen=screen,
        clicked_index=int(record["clicked_index"]),
        time=EventTime(int(record["timestamp_ms"]), int(record.get("tz_offset_min", 0))),
        app_id=app_id,
    )
    return record["user_id"], event


def dumps_record(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(sequences: Iterable[ClickSequence], fp: IO[str] | str | Path) -> None:
    if isinstance(fp, (str, Path)):
        with open(fp, "w", encoding="utf-8", newline="\n") as fh:
            write_jsonl(sequences, fh)
        return
    for seq in sequences:
        for event in seq.events:
            fp.write(dumps_record(event_to_record(seq.user_id, event)))
            fp.write("\n")


def iter_records(fp: IO[str] | str | Path) -> Iterator[dict]:
    if isinstance(fp, (str, Path)):
        with open(fp, encoding="utf-8") as fh:
            yield from iter_records(fh)
        return
    for lineno, line in enumerate(fp, 1):
        line = line.strip()
        if not line:
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc


def read_jsonl(fp: IO[str] | str | Path) -> list[ClickSequence]:
    """Parse an event log into per-user sequences (users in first-seen order)."""
    cache: dict = {}
    by_user: dict[str, list[ClickEvent]] = {}
    for record in iter_records(fp):
        user_id, event = event_from_record(record, cache)
        by_user.setdefault(user_id, []).append(event)
    return [ClickSequence(user, tuple(events)) for user, events in by_user.items()]


def corpus_size(sequences: Sequence[ClickSequence]) -> int:
    return sum(len(s.events) for s in sequences)
