"""View-hierarchy ingestion: actionable filtering, text fallback, flattening, hashing."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .exceptions import EmptyScreenError, ValidationError
from .murmur import hash128_hex
from .text import split_words
from .types import (
    ELEMENT_TYPES,
    OTHER,
    ClickEvent,
    ClickSequence,
    EventTime,
    Screen,
    UiElement,
    write_jsonl,
)

log = logging.getLogger(__name__)


@dataclass
class VhNode:
    class_name: str = ""
    text: str | None = None
    content_desc: str | None = None
    resource_id: str | None = None
    clickable: bool = False
    visible: bool = True
    enabled: bool = True
    bbox: tuple[int, int, int, int] = (0, 0, 0, 0)
    children: list["VhNode"] = field(default_factory=list)

    @property
    def actionable(self) -> bool:
        return bool(self.clickable and self.visible and self.enabled)

    @classmethod
    def from_dict(cls, d: dict) -> "VhNode":
        # Iterative to survive very deep trees.
        root = cls._shallow(d)
        stack = [(root, d)]
        while stack:
            node, raw = stack.pop()
            for child_raw in raw.get("children") or ():
                child = cls._shallow(child_raw)
                node.children.append(child)
                stack.append((child, child_raw))
        return root

    @classmethod
    def _shallow(cls, d: dict) -> "VhNode":
        bbox = d.get("bbox") or d.get("bounds") or (0, 0, 0, 0)
        return cls(
            class_name=d.get("class_name") or d.get("class") or "",
            text=d.get("text"),
            content_desc=d.get("content_desc", d.get("content-desc")),
            resource_id=d.get("resource_id", d.get("resource-id")),
            clickable=bool(d.get("clickable", False)),
            visible=bool(d.get("visible", d.get("visible-to-user", True))),
            enabled=bool(d.get("enabled", True)),
            bbox=tuple(int(v) for v in bbox),
        )

    def iter_nodes(self) -> Iterator["VhNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


def extract_text(node: VhNode) -> str:
    if node.text:
        return node.text
    if node.content_desc:
        return node.content_desc
    if node.resource_id:
        name = node.resource_id.rsplit("/", 1)[-1]
        return " ".join(split_words(name))
    return ""


def map_class_name(class_name: str, registry: Iterable[str] = ELEMENT_TYPES) -> str:
    """Longest registry name that ``class_name`` ends with, else OTHER."""
    best = OTHER
    for name in registry:
        if name != OTHER and class_name.endswith(name) and (best == OTHER or len(name) > len(best)):
            best = name
    return best


def _normalized_bbox(bbox) -> tuple[int, int, int, int]:
    left, top, right, bottom = bbox
    return min(left, right), min(top, bottom), max(left, right), max(top, bottom)


def _spatial_key(node: VhNode):
    left, top, _, _ = _normalized_bbox(node.bbox)
    return (top, left)


def actionable_nodes(root: VhNode) -> list[VhNode]:
    """Actionable nodes in preorder, visiting siblings by (top, left)."""
    out = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.actionable:
            out.append(node)
        stack.extend(reversed(sorted(node.children, key=_spatial_key)))
    return out


def flatten_actionable(
    root: VhNode, width: int, height: int, app_id: str = "", registry: Iterable[str] = ELEMENT_TYPES
) -> Screen:
    if width <= 0 or height <= 0:
        raise ValidationError("screen dimensions must be positive")
    registry = tuple(registry)
    nodes = actionable_nodes(root)
    if not nodes:
        raise EmptyScreenError("no clickable, visible and enabled node in the hierarchy")
    elements = tuple(
        UiElement(
            text=extract_text(node),
            elem_type=map_class_name(node.class_name, registry),
            bbox=_normalized_bbox(node.bbox),
            preorder_index=i,
        )
        for i, node in enumerate(nodes)
    )
    return Screen(elements, width, height, app_id)


def screen_preimage(screen: Screen) -> str:
    return ";".join(
        f"{e.text}|{e.elem_type}|{e.bbox[0]},{e.bbox[1]},{e.bbox[2]},{e.bbox[3]}" for e in screen.elements
    )


def screen_hash(screen: Screen) -> str:
    """MurmurHash3 x64-128 (seed 0) of the canonical element string, as 32 hex digits."""
    if not screen.elements:
        raise EmptyScreenError("cannot hash an empty screen")
    return hash128_hex(screen_preimage(screen).encode("utf-8"))


# --- raw event logs -------------------------------------------------------------


def _resolve_path(root: VhNode, path) -> VhNode:
    node = root
    for i in path:
        node = node.children[int(i)]
    return node


def parse_raw_event(raw: dict) -> tuple[str, ClickEvent] | None:
    """Convert one raw logged event; returns None for non-click or unusable events.

    Raw schema: ``user_id, timestamp_ms, tz_offset_min, app_id, width, height,
    event_type ("click"), root (view-hierarchy tree), target_path`` where the
    path lists child indices (document order) from the root to the clicked node.
    """
    if raw.get("event_type", "click").lower() != "click":
        return None
    root = VhNode.from_dict(raw["root"])
    try:
        target = _resolve_path(root, raw.get("target_path", []))
    except (IndexError, ValueError):
        log.warning("dropping event: target_path does not resolve")
        return None
    nodes = actionable_nodes(root)
    index = next((i for i, n in enumerate(nodes) if n is target), None)
    if index is None:
        log.debug("dropping event: clicked node is not actionable")
        return None
    app_id = raw.get("app_id", "")
    screen = flatten_actionable(root, int(raw["width"]), int(raw["height"]), app_id)
    event = ClickEvent(
        screen=screen,
        clicked_index=index,
        time=EventTime(int(raw["timestamp_ms"]), int(raw.get("tz_offset_min", 0))),
        app_id=app_id,
    )
    return raw["user_id"], event


def _iter_raw_files(in_dir: Path) -> Iterator[dict]:
    for path in sorted(in_dir.rglob("*")):
        if path.suffix == ".jsonl":
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        yield json.loads(line)
        elif path.suffix == ".json":
            data = json.loads(path.read_text("utf-8"))
            yield from (data if isinstance(data, list) else [data])


def ingest_directory(in_dir: str | Path, out_file: str | Path) -> list[ClickSequence]:
    by_user: dict[str, list[ClickEvent]] = {}
    dropped = 0
    for raw in _iter_raw_files(Path(in_dir)):
        parsed = parse_raw_event(raw)
        if parsed is None:
            dropped += 1
            continue
        user_id, event = parsed
        by_user.setdefault(user_id, []).append(event)
    sequences = [
        ClickSequence(user, tuple(sorted(events, key=lambda e: e.time.timestamp_ms)))
        for user, events in sorted(by_user.items())
    ]
    write_jsonl(sequences, out_file)
    log.info("ingested %d events for %d users (%d dropped)", sum(map(len, sequences)), len(sequences), dropped)
    return sequences
