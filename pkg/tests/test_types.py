import datetime as dt
import io
import math

import pytest
from hypothesis import given, strategies as st

from nextclick.exceptions import EmptyScreenError, HistoryOutOfOrderError, ValidationError
from nextclick.types import (
    ELEMENT_TYPES,
    ClickEvent,
    ClickSequence,
    EventTime,
    PredictionRequest,
    Screen,
    UiElement,
    derive_local_time,
    elapsed_bucket,
    load_type_registry,
    read_jsonl,
    write_jsonl,
)

from conftest import T0, make_event, make_screen, make_sequence

WEEK_MS = 7 * 86_400_000


def calendar_oracle(ts_ms, tz_min):
    local = dt.datetime(1970, 1, 1, tzinfo=dt.timezone.utc) + dt.timedelta(milliseconds=ts_ms, minutes=tz_min)
    return local.hour, local.weekday()


def test_type_registry_has_24_names_plus_other():
    assert len(ELEMENT_TYPES) == 25
    assert ELEMENT_TYPES[-1] == "OTHER"
    assert {"Button", "TextView", "ImageView", "CheckBox", "TabWidget"} <= set(ELEMENT_TYPES)


def test_custom_registry(tmp_path):
    path = tmp_path / "types.txt"
    path.write_text("# comment\nFoo\nBar\n")
    assert load_type_registry(path) == ("Foo", "Bar", "OTHER")
    path.write_text("Foo\nFoo\n")
    with pytest.raises(ValidationError):
        load_type_registry(path)


def test_element_invariants():
    with pytest.raises(ValidationError):
        UiElement("x", "Button", (10, 0, 5, 5), 0)
    with pytest.raises(ValidationError):
        UiElement("x", "NotAType", (0, 0, 5, 5), 0)
    with pytest.raises(ValidationError):
        Screen((UiElement("x", "Button", (0, 0, 5, 5), 1),), 10, 10)


@pytest.mark.parametrize("ts,tz,expected", [(0, 0, (0, 3)), (0, -480, (16, 2))])
def test_derive_local_time_examples(ts, tz, expected):
    assert derive_local_time(ts, tz) == expected


def test_derive_local_time_calendar_value():
    # Frozen from the calendar oracle: 2020-09-13 12:26:40 UTC + 2 h is Sunday 14:26.
    assert derive_local_time(1_600_000_000_000, 120) == (14, 6)
    assert calendar_oracle(1_600_000_000_000, 120) == (14, 6)


@given(st.integers(min_value=0, max_value=4_000_000_000_000), st.integers(min_value=-720, max_value=840))
def test_derive_local_time_matches_calendar(ts, tz):
    assert derive_local_time(ts, tz) == calendar_oracle(ts, tz)


@given(st.integers(min_value=0, max_value=3_000_000_000_000), st.integers(min_value=-720, max_value=840),
       st.integers(min_value=-50, max_value=50))
def test_derive_local_time_weekly_periodic(ts, tz, k):
    if ts + k * WEEK_MS < 0:
        return
    assert derive_local_time(ts, tz) == derive_local_time(ts + k * WEEK_MS, tz)


def test_event_time_properties():
    t = EventTime(T0 + 3 * 3_600_000, 60)
    assert (t.hour_of_day, t.day_of_week) == (4, 0)


@pytest.mark.parametrize("v,expected", [(1.0, 0), (0.0, 0), (0.5, 0), (3600, 8), (604_800, 13), (1e30, 20)])
def test_elapsed_bucket(v, expected):
    assert elapsed_bucket(v) == expected


def test_elapsed_bucket_high_precision_oracle():
    import mpmath

    mpmath.mp.dps = 50
    for v in (2, 3, 7.389, 20.0855, 3600, 86_400, 31_536_000):
        assert elapsed_bucket(v) == min(int(mpmath.floor(mpmath.log(v))), 20)


def test_elapsed_bucket_rejects_negative():
    with pytest.raises(ValidationError):
        elapsed_bucket(-1)


@given(st.floats(min_value=0, max_value=1e12), st.floats(min_value=0, max_value=1e12))
def test_elapsed_bucket_monotone(a, b):
    lo, hi = sorted((a, b))
    assert elapsed_bucket(lo) <= elapsed_bucket(hi)


def test_click_event_index_checked():
    screen = make_screen(["a", "b"])
    with pytest.raises(ValidationError):
        ClickEvent(screen, 2, EventTime(T0), "app.a")
    assert make_event(screen, 1, T0).clicked.text == "b"


def test_sequence_must_be_chronological():
    s = make_screen(["a"])
    with pytest.raises(HistoryOutOfOrderError):
        ClickSequence("u", (make_event(s, 0, T0 + 10), make_event(s, 0, T0)))
    ClickSequence("u", (make_event(s, 0, T0), make_event(s, 0, T0)))


def test_prediction_request_validation():
    s = make_screen(["a", "b"])
    hist = tuple(make_event(s, 0, T0 + i * 1000) for i in range(12))
    req = PredictionRequest(hist, s, EventTime(T0 + 100_000), "app.a")
    assert len(req.history) == 9 and req.history[-1] is hist[-1]
    with pytest.raises(HistoryOutOfOrderError):
        PredictionRequest(hist, s, EventTime(T0 + 11_000), "app.a")
    with pytest.raises(EmptyScreenError):
        PredictionRequest((), Screen((), 10, 10), EventTime(T0), "app.a")


def test_request_from_sequence_excludes_same_timestamp():
    s = make_screen(["a", "b"])
    seq = ClickSequence("u", (make_event(s, 0, T0), make_event(s, 1, T0 + 5), make_event(s, 0, T0 + 5)))
    req = PredictionRequest.from_sequence(seq, 2, 9)
    assert len(req.history) == 1
    assert PredictionRequest.from_sequence(seq, 1, 0).history == ()


def test_jsonl_round_trip(small_corpus):
    buf = io.StringIO()
    write_jsonl(small_corpus, buf)
    buf.seek(0)
    back = read_jsonl(buf)
    assert back == small_corpus


@given(st.lists(st.tuples(st.text(max_size=12), st.sampled_from(ELEMENT_TYPES)), min_size=1, max_size=6),
       st.lists(st.integers(min_value=0, max_value=10_000), min_size=1, max_size=8),
       st.integers(min_value=-720, max_value=840))
def test_jsonl_round_trip_property(elems, gaps, tz):
    screen = make_screen([t for t, _ in elems], [k for _, k in elems])
    ts = T0
    events = []
    for i, g in enumerate(gaps):
        ts += g
        events.append(make_event(screen, i % len(elems), ts, tz=tz))
    seq = ClickSequence("user", tuple(events))
    buf = io.StringIO()
    write_jsonl([seq], buf)
    buf.seek(0)
    assert read_jsonl(buf) == [seq]
