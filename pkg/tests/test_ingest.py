import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from nextclick import murmur
from nextclick.exceptions import EmptyScreenError
from nextclick.ingest import (
    VhNode,
    extract_text,
    flatten_actionable,
    ingest_directory,
    map_class_name,
    parse_raw_event,
    screen_hash,
    screen_preimage,
)
from nextclick.text import split_words
from nextclick.types import Screen, UiElement, read_jsonl

from conftest import make_screen

# Published MurmurHash3_x64_128 vectors (seed 0), digest = h1 then h2, little-endian.
KNOWN_VECTORS = {
    b"": "00000000000000000000000000000000",
    b"The quick brown fox jumps over the lazy dog": "6c1b07bc7bbc4be347939ac4a93c437a",
}
SEND_BUTTON_DIGEST = "7742b85089d44414483f94e320c1c8c1"


def node(cls="android.widget.Button", clickable=True, visible=True, enabled=True, bbox=(0, 0, 10, 10), children=(), **kw):
    return VhNode(class_name=cls, clickable=clickable, visible=visible, enabled=enabled, bbox=bbox,
                  children=list(children), **kw)


@pytest.mark.parametrize("data,digest", sorted(KNOWN_VECTORS.items()))
def test_murmur_known_vectors(data, digest):
    assert murmur.murmur3_x64_128_bytes(data).hex() == digest
    assert murmur.hash128_hex(data) == digest


def test_murmur_pure_port_matches_fast_path():
    rng = random.Random(5)
    for n in range(0, 70):
        data = bytes(rng.randrange(256) for _ in range(n))
        seed = rng.randrange(2**32)
        assert murmur.murmur3_x64_128_bytes(data, seed) == murmur.hash128_bytes(data, seed)


def test_screen_hash_golden_vector():
    screen = Screen((UiElement("Send", "Button", (0, 0, 10, 10), 0),), 100, 100)
    assert screen_preimage(screen) == "Send|Button|0,0,10,10"
    assert screen_hash(screen) == SEND_BUTTON_DIGEST
    assert murmur.murmur3_x64_128_bytes(b"Send|Button|0,0,10,10").hex() == SEND_BUTTON_DIGEST


def test_screen_hash_deterministic_and_sensitive():
    a = make_screen(["Send", "Cancel"])
    b = make_screen(["Send", "Cancel"])
    c = make_screen(["Send", "Cancel!"])
    assert screen_hash(a) == screen_hash(b) == a.screen_hash
    assert screen_hash(a) != screen_hash(c)


def test_screen_hash_multi_element_preimage():
    s = make_screen(["a", "b"], ["Button", "TextView"])
    assert screen_preimage(s) == "a|Button|0,0,500,80;b|TextView|0,100,500,180"


def test_screen_hash_no_collisions():
    rng = random.Random(11)
    preimages, hashes = set(), set()
    while len(preimages) < 10_000:
        n = rng.randint(1, 4)
        elems = tuple(UiElement(f"w{rng.randrange(10**6)}", "Button", (0, j, 5, j + 5), j) for j in range(n))
        screen = Screen(elems, 100, 100)
        if screen_preimage(screen) in preimages:
            continue
        preimages.add(screen_preimage(screen))
        hashes.add(screen_hash(screen))
    assert len(hashes) == len(preimages)


def test_screen_hash_empty_screen():
    with pytest.raises(EmptyScreenError):
        screen_hash(Screen((), 10, 10))


@pytest.mark.parametrize("text,expected", [
    ("Send Message", ["send", "message"]),
    ("", []),
    ("wifiSettings_2", ["wifi", "settings", "2"]),
    ("send_button", ["send", "button"]),
    ("HTTPServer", ["http", "server"]),
    ("  --  ", []),
])
def test_split_words(text, expected):
    assert split_words(text) == expected


def test_extract_text_fallbacks():
    assert extract_text(VhNode(text="Send", content_desc="Send button")) == "Send"
    assert extract_text(VhNode(text="", content_desc="Search")) == "Search"
    assert extract_text(VhNode(resource_id="com.app:id/send_button")) == "send button"
    assert extract_text(VhNode(resource_id="com.app:id/wifiSettings")) == "wifi settings"
    assert extract_text(VhNode()) == ""


def test_map_class_name():
    assert map_class_name("android.widget.Button") == "Button"
    assert map_class_name("android.widget.ImageButton") == "ImageButton"
    assert map_class_name("android.widget.CheckedTextView") == "CheckedTextView"
    assert map_class_name("com.example.Fancy") == "OTHER"


def test_flatten_single_actionable():
    root = node("android.widget.FrameLayout", clickable=False, bbox=(0, 0, 100, 100), children=[
        node(clickable=False), node(text="ok"), node("android.widget.TextView", clickable=False),
    ])
    screen = flatten_actionable(root, 100, 100)
    assert len(screen.elements) == 1
    assert screen.elements[0].preorder_index == 0 and screen.elements[0].text == "ok"


@pytest.mark.parametrize("flag", ["visible", "enabled", "clickable"])
def test_flatten_requires_all_three_attributes(flag):
    bad = node(text="bad", **{flag: False})
    root = node("android.widget.FrameLayout", clickable=False, children=[bad, node(text="good", bbox=(0, 20, 5, 25))])
    assert [e.text for e in flatten_actionable(root, 100, 100).elements] == ["good"]


def test_flatten_empty_screen():
    with pytest.raises(EmptyScreenError):
        flatten_actionable(node(clickable=False), 100, 100)


def preorder_oracle(n):
    out = []

    def visit(x):
        if x.clickable and x.visible and x.enabled:
            out.append(x)
        for child in sorted(x.children, key=lambda c: (c.bbox[1], c.bbox[0])):
            visit(child)

    visit(n)
    return out


def random_tree(rng, depth=0, counter=None):
    counter = counter if counter is not None else [0]
    counter[0] += 1
    top, left = rng.randrange(1000), rng.randrange(1000)
    kids = [random_tree(rng, depth + 1, counter) for _ in range(rng.randint(0, 3))] if depth < 3 else []
    return node(text=f"n{counter[0]}", clickable=rng.random() < 0.6, visible=rng.random() < 0.9,
                bbox=(left, top, left + 10, top + 10), children=kids)


def test_flatten_matches_recursive_oracle_fixture():
    # A fixed 10-node tree whose document order differs from the spatial order.
    leaves = [node(text=f"l{i}", bbox=(10 * (i % 2), 100 - 10 * i, 10 * (i % 2) + 5, 105 - 10 * i)) for i in range(6)]
    mid1 = node("android.widget.LinearLayout", text="m1", bbox=(0, 50, 100, 60), children=leaves[:3])
    mid2 = node("android.widget.LinearLayout", clickable=False, bbox=(0, 10, 100, 20), children=leaves[3:])
    root = node("android.widget.FrameLayout", text="root", bbox=(0, 0, 100, 100), children=[mid1, mid2, node(text="x", bbox=(0, 0, 1, 1))])
    got = [e.text for e in flatten_actionable(root, 100, 100).elements]
    assert got == [extract_text(n) for n in preorder_oracle(root)]
    assert got == ["root", "x", "l5", "l4", "l3", "m1", "l2", "l1", "l0"]


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_flatten_matches_recursive_oracle_random(seed):
    rng = random.Random(seed)
    root = random_tree(rng)
    expected = [extract_text(n) for n in preorder_oracle(root)]
    if not expected:
        with pytest.raises(EmptyScreenError):
            flatten_actionable(root, 1000, 1000)
        return
    screen = flatten_actionable(root, 1000, 1000)
    assert [e.text for e in screen.elements] == expected
    assert len(screen.elements) <= sum(1 for _ in root.iter_nodes())
    assert [e.preorder_index for e in screen.elements] == list(range(len(expected)))


def raw_event(user, ts, target_path, event_type="click"):
    return {
        "user_id": user, "timestamp_ms": ts, "tz_offset_min": 60, "app_id": "com.mail",
        "width": 1080, "height": 1920, "event_type": event_type, "target_path": target_path,
        "root": {"class": "android.widget.FrameLayout", "bounds": [0, 0, 1080, 1920], "children": [
            {"class": "android.widget.Button", "text": "Send", "clickable": True, "bounds": [0, 100, 200, 200]},
            {"class": "android.widget.ImageButton", "content-desc": "Attach", "clickable": True, "bounds": [0, 0, 200, 90]},
            {"class": "android.widget.TextView", "text": "label", "bounds": [0, 300, 200, 400]},
        ]},
    }


def test_parse_raw_event():
    user, event = parse_raw_event(raw_event("u1", 1000, [0]))
    assert user == "u1"
    assert [e.text for e in event.screen.elements] == ["Attach", "Send"]
    assert event.clicked_index == 1 and event.clicked.elem_type == "Button"
    assert event.time.tz_offset_min == 60
    assert parse_raw_event(raw_event("u1", 1000, [2])) is None  # not actionable
    assert parse_raw_event(raw_event("u1", 1000, [0], "swipe")) is None
    assert parse_raw_event(raw_event("u1", 1000, [7])) is None


def test_ingest_directory(tmp_path):
    raw = tmp_path / "raw"
    (raw / "sub").mkdir(parents=True)
    (raw / "a.json").write_text(json.dumps([raw_event("u2", 3000, [1]), raw_event("u1", 2000, [0])]))
    with open(raw / "sub" / "b.jsonl", "w") as fh:
        fh.write(json.dumps(raw_event("u1", 1000, [1])) + "\n")
        fh.write(json.dumps(raw_event("u1", 1500, [0], "scroll")) + "\n")
    out = tmp_path / "events.jsonl"
    seqs = ingest_directory(raw, out)
    assert [s.user_id for s in seqs] == ["u1", "u2"]
    assert [e.time.timestamp_ms for e in seqs[0].events] == [1000, 2000]
    assert read_jsonl(out) == seqs
