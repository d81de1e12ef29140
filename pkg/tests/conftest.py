import pytest

from nextclick.synth import WorldConfig, generate_corpus
from nextclick.types import ClickEvent, ClickSequence, EventTime, Screen, UiElement

T0 = 1_704_067_200_000  # Monday 2024-01-01 00:00 UTC


def make_screen(texts, types=None, width=1080, height=1920, app_id="app.a"):
    types = types or ["Button"] * len(texts)
    elems = []
    for i, (text, kind) in enumerate(zip(texts, types)):
        top = 100 * i
        elems.append(UiElement(text, kind, (0, top, 500, top + 80), i))
    return Screen(tuple(elems), width, height, app_id)


def make_event(screen, clicked, ts_ms, app_id=None, tz=0):
    return ClickEvent(screen, clicked, EventTime(ts_ms, tz), app_id or screen.app_id)


def make_sequence(user, specs, start=T0, gap_ms=5000):
    """``specs`` is a list of (screen, clicked_index)."""
    events = [make_event(s, c, start + i * gap_ms) for i, (s, c) in enumerate(specs)]
    return ClickSequence(user, tuple(events))


@pytest.fixture(scope="session")
def small_world():
    cfg = WorldConfig(n_users=6, n_apps=6, screens_per_app=5, weeks=1, seed=3)
    return generate_corpus(cfg)


@pytest.fixture(scope="session")
def small_corpus(small_world):
    return [u.sequence for u in small_world[1]]
