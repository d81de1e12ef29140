"""Synthetic multi-user click corpora with a known click-generating process.

The world is a set of apps (Zipf popularity), each a small graph of screens.
Every screen carries a title element naming its *mode*; the remaining elements
get one or two words from the app's vocabulary. A user's click on a screen is
drawn from

    p = (1 - habit) * softmax(score) + habit * own_click_share

where ``score`` sums a shared per-word appeal (modulated by screen mode and by
hour-band/day-type), the persona's own per-word offsets, and a bonus for
elements sharing a word with the previously clicked element. ``own_click_share``
is the user's past click distribution on that screen. Because the process is
explicit, the exact conditional distribution of every simulated click is kept
as ground truth (``SimulatedUser.true_probs``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .types import ClickEvent, ClickSequence, EventTime, MS_PER_DAY, Screen, UiElement, write_jsonl

# 2024-01-01 00:00 UTC, a Monday.
EPOCH_MS = 1_704_067_200_000

DEFAULT_TYPE_WEIGHTS = {
    "Button": 0.24,
    "ImageButton": 0.12,
    "TextView": 0.18,
    "ImageView": 0.12,
    "CheckBox": 0.04,
    "Switch": 0.03,
    "ToggleButton": 0.02,
    "RadioButton": 0.02,
    "EditText": 0.04,
    "Spinner": 0.02,
    "View": 0.07,
    "LinearLayout": 0.04,
    "FrameLayout": 0.03,
    "CheckedTextView": 0.02,
    "OTHER": 0.01,
}

# Relative session intensity per local hour: quiet nights, heavier late afternoon and evening.
DEFAULT_HOUR_PROFILE = (
    0.3, 0.15, 0.1, 0.1, 0.1, 0.2, 0.5, 0.9, 1.1, 1.0, 1.0, 1.1,
    1.2, 1.1, 1.0, 1.1, 1.3, 1.5, 1.7, 1.9, 1.9, 1.7, 1.2, 0.7,
)

TZ_CHOICES = (-480, -420, -360, -300, -240, 0, 60, 120, 330, 480, 540)
_SYLLABLES = [c + v for c in "bdfgklmnprstvz" for v in "aeiou"]


@dataclass
class WorldConfig:
    n_apps: int = 40
    screens_per_app: int = 12
    n_users: int = 50
    weeks: int = 2
    elem_count_mean: float = 18.0
    elem_count_std: float = 12.0
    elem_count_min: int = 2
    elem_count_max: int = 64
    cross_app_rate: float = 0.26
    zipf_s: float = 1.2
    seed: int = 0
    n_words: int = 400
    app_vocab_size: int = 48
    n_modes: int = 6
    dynamic_screen_rate: float = 0.4
    dynamic_slot_rate: float = 0.35
    personal_screen_rate: float = 0.45
    appeal_scale: float = 4.0
    mode_scale: float = 1.5
    time_scale: float = 0.8
    persona_scale: float = 1.0
    intent_bonus: float = 5.5
    link_size_power: float = 1.0
    habit_range: tuple[float, float] = (0.1, 0.4)
    affinity_sigma: float = 2.0
    sessions_per_weekday: float = 5.0
    sessions_per_weekend_day: float = 3.5
    clicks_per_session: float = 14.0
    gap_median_s: float = 5.0
    gap_sigma: float = 1.0
    screen_width: int = 1080
    screen_height: int = 1920
    type_weights: dict = field(default_factory=lambda: dict(DEFAULT_TYPE_WEIGHTS))
    hour_profile: tuple = DEFAULT_HOUR_PROFILE

    def validate(self) -> "WorldConfig":
        for name in ("n_apps", "screens_per_app", "n_users", "weeks", "n_words", "app_vocab_size", "n_modes"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("cross_app_rate", "dynamic_screen_rate", "dynamic_slot_rate", "personal_screen_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.dynamic_screen_rate + self.personal_screen_rate > 1.0:
            raise ConfigError("dynamic_screen_rate + personal_screen_rate must not exceed 1")
        if self.link_size_power < 0:
            raise ConfigError("link_size_power must be non-negative")
        lo, hi = self.habit_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError("habit_range must lie in [0, 1]")
        if not 1 <= self.elem_count_min <= self.elem_count_max:
            raise ConfigError("invalid element count bounds")
        if self.elem_count_min < 2:
            raise ConfigError("screens need room for a title and one other element")
        if len(self.hour_profile) != 24:
            raise ConfigError("hour_profile needs 24 entries")
        if self.n_words < self.n_modes + 2:
            raise ConfigError("word bank too small")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "habit_range" in known:
            known["habit_range"] = tuple(known["habit_range"])
        if "hour_profile" in known:
            known["hour_profile"] = tuple(known["hour_profile"])
        return cls(**known).validate()


def context_index(hour: int, day: int) -> int:
    """Hour band (four 6-hour bands) crossed with weekday/weekend."""
    return (hour // 6) * 2 + (1 if day >= 5 else 0)


N_CONTEXTS = 8


@dataclass
class WorldScreen:
    screen_id: int
    app: int
    mode: int
    words: list[list[int]]  # word ids per slot
    types: list[str]
    bboxes: list[tuple[int, int, int, int]]
    dynamic_slots: list[int]
    personal_slots: list[int]
    same_app_targets: list[int]
    cross_app_targets: list[int | None]
    screen: Screen  # static rendering


class World:
    def __init__(self, config: WorldConfig):
        self.config = config.validate()
        cfg = self.config
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        self.words = _make_words(cfg.n_words, rng)
        self.mode_words = list(range(cfg.n_modes))
        content_words = np.arange(cfg.n_modes, cfg.n_words)

        ranks = np.arange(1, cfg.n_apps + 1, dtype=float)
        pop = ranks ** (-cfg.zipf_s)
        self.app_popularity = pop / pop.sum()
        self.app_ids = [f"app.{self.words[cfg.n_modes + i % (cfg.n_words - cfg.n_modes)]}{i}" for i in range(cfg.n_apps)]

        # Click-appeal tables over the word bank.
        self.word_appeal = rng.standard_normal(cfg.n_words)
        self.word_appeal[: cfg.n_modes] = -2.0
        self.mode_appeal = rng.standard_normal((cfg.n_modes, cfg.n_words))
        self.time_appeal = rng.standard_normal((N_CONTEXTS, cfg.n_words))
        type_names = list(cfg.type_weights)
        tw = np.array([cfg.type_weights[t] for t in type_names], dtype=float)
        tw /= tw.sum()
        self.type_bias = {t: 0.3 * b for t, b in zip(type_names, rng.standard_normal(len(type_names)))}

        word_pop = np.arange(1, len(content_words) + 1, dtype=float) ** -0.6
        word_pop /= word_pop.sum()
        self.app_vocab = []
        for _ in range(cfg.n_apps):
            size = min(cfg.app_vocab_size, len(content_words))
            self.app_vocab.append(rng.choice(content_words, size=size, replace=False, p=word_pop))

        self.screens: list[WorldScreen] = []
        self.app_screens: list[list[int]] = []
        for app in range(cfg.n_apps):
            ids = []
            for _ in range(cfg.screens_per_app):
                sid = len(self.screens)
                ids.append(sid)
                self.screens.append(self._make_screen(sid, app, rng, type_names, tw))
            self.app_screens.append(ids)

        # Richer screens are linked more often: link targets are weighted by
        # element_count ** link_size_power and each app opens on its largest screen.
        sizes = np.array([len(ws.words) for ws in self.screens], dtype=float)
        link_p = [sizes[ids] ** cfg.link_size_power for ids in self.app_screens]
        link_p = [w / w.sum() for w in link_p]
        self.entry_screens = [int(ids[int(np.argmax(sizes[ids]))]) for ids in self.app_screens]
        for ws in self.screens:
            n = len(ws.words)
            same = self.app_screens[ws.app]
            ws.same_app_targets = [int(t) for t in rng.choice(same, size=n, p=link_p[ws.app])]
            if cfg.n_apps > 1:
                others = np.delete(np.arange(cfg.n_apps), ws.app)
                p = self.app_popularity[others] / self.app_popularity[others].sum()
                apps = rng.choice(others, size=n, p=p)
                ws.cross_app_targets = [self.entry_screens[a] for a in apps]
            else:
                ws.cross_app_targets = [None] * n

        self._static_scores = [self._shared_scores(ws, ws.words) for ws in self.screens]

    # -- construction helpers ----------------------------------------------------

    def sample_element_count(self, rng: np.random.Generator) -> int:
        cfg = self.config
        n = int(round(rng.normal(cfg.elem_count_mean, cfg.elem_count_std)))
        return min(max(n, cfg.elem_count_min), cfg.elem_count_max)

    def _make_screen(self, sid, app, rng, type_names, type_probs) -> WorldScreen:
        cfg = self.config
        n = self.sample_element_count(rng)
        mode = int(rng.integers(cfg.n_modes))
        vocab = self.app_vocab[app]
        words = [[mode]]
        types = ["TextView"]
        for _ in range(n - 1):
            k = 1 if rng.random() < 0.6 else 2
            words.append([int(w) for w in rng.choice(vocab, size=k, replace=False)])
            types.append(type_names[rng.choice(len(type_names), p=type_probs)])
        bboxes = _layout(n, cfg.screen_width, cfg.screen_height, rng)
        dynamic, personal = [], []
        u = rng.random()
        if u < cfg.dynamic_screen_rate:
            dynamic = [i for i in range(1, n) if rng.random() < cfg.dynamic_slot_rate] or [n - 1]
        elif u < cfg.dynamic_screen_rate + cfg.personal_screen_rate:
            personal = [int(rng.integers(1, n))]
        screen = self._render(app, words, types, bboxes)
        return WorldScreen(sid, app, mode, words, types, bboxes, dynamic, personal, [], [], screen)

    def _render(self, app, words, types, bboxes) -> Screen:
        elements = tuple(
            UiElement(self.text_of(w), t, b, i) for i, (w, t, b) in enumerate(zip(words, types, bboxes))
        )
        return Screen(elements, self.config.screen_width, self.config.screen_height, self.app_ids[app])

    def text_of(self, word_ids) -> str:
        text = " ".join(self.words[w] for w in word_ids)
        return text[:1].upper() + text[1:]

    def _shared_scores(self, ws: WorldScreen, words, slots=None) -> np.ndarray:
        """(N_CONTEXTS, len(words)) click scores shared by all users."""
        cfg = self.config
        slots = range(len(words)) if slots is None else slots
        out = np.zeros((N_CONTEXTS, len(words)))
        for col, (j, wids) in enumerate(zip(slots, words)):
            w = np.asarray(wids)
            base = self.word_appeal[w].mean() + cfg.mode_scale * self.mode_appeal[ws.mode, w].mean()
            timed = cfg.time_scale * self.time_appeal[:, w].mean(axis=1)
            out[:, col] = cfg.appeal_scale * (base + timed) + self.type_bias.get(ws.types[j], 0.0)
        return out

    # -- per-visit model ---------------------------------------------------------

    def visit(self, sid: int, rng: np.random.Generator, persona: "UserPersona | None" = None):
        """Render one visit: returns (Screen, words per slot, shared scores)."""
        ws = self.screens[sid]
        changed: dict[int, list[int]] = {}
        if persona is not None and ws.personal_slots:
            changed.update(self.personal_words(persona, sid))
        vocab = self.app_vocab[ws.app]
        for j in ws.dynamic_slots:
            changed[j] = [int(w) for w in rng.choice(vocab, size=len(ws.words[j]), replace=False)]
        if not changed:
            return ws.screen, ws.words, self._static_scores[sid]
        words = list(ws.words)
        for j, w in changed.items():
            words[j] = w
        slots = sorted(changed)
        scores = self._static_scores[sid].copy()
        scores[:, slots] = self._shared_scores(ws, [words[j] for j in slots], slots)
        elements = list(ws.screen.elements)
        for j in slots:
            e = elements[j]
            elements[j] = UiElement(self.text_of(words[j]), e.elem_type, e.bbox, j)
        screen = ws.screen
        return Screen(tuple(elements), screen.width, screen.height, screen.app_id), words, scores

    def personal_words(self, persona: "UserPersona", sid: int) -> dict[int, list[int]]:
        """Per-user fixed texts of a screen's personal slots (e.g. account names)."""
        cached = persona.personal_words.get(sid)
        if cached is None:
            ws = self.screens[sid]
            rng = np.random.default_rng(np.random.SeedSequence([self.config.seed, 4, persona.seed, sid]))
            vocab = self.app_vocab[ws.app]
            cached = {
                j: [int(w) for w in rng.choice(vocab, size=len(ws.words[j]), replace=False)]
                for j in ws.personal_slots
            }
            persona.personal_words[sid] = cached
        return cached

    def describe(self) -> dict:
        return {
            "config": _jsonable(asdict(self.config)),
            "apps": self.app_ids,
            "screens": [
                {
                    "app": ws.app,
                    "mode": ws.mode,
                    "elements": [[e.text, e.elem_type, list(e.bbox)] for e in ws.screen.elements],
                    "dynamic_slots": ws.dynamic_slots,
                    "personal_slots": ws.personal_slots,
                    "same_app_targets": ws.same_app_targets,
                    "cross_app_targets": ws.cross_app_targets,
                }
                for ws in self.screens
            ],
        }


def _make_words(n: int, rng: np.random.Generator) -> list[str]:
    seen: set[str] = set()
    out = []
    while len(out) < n:
        k = int(rng.integers(2, 4))
        w = "".join(_SYLLABLES[i] for i in rng.integers(len(_SYLLABLES), size=k))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def _layout(n: int, width: int, height: int, rng: np.random.Generator) -> list[tuple[int, int, int, int]]:
    """Title bar on top, remaining elements in rows of one or two columns.

    Boxes come out in (top, left) reading order so preorder equals generation order.
    """
    boxes = [(0, 0, width, max(height // 16, 1))]
    rows = []
    i = 1
    while i < n:
        cols = 2 if (n - i >= 2 and rng.random() < 0.4) else 1
        rows.append(cols)
        i += cols
    top0 = boxes[0][3]
    row_h = max((height - top0) // max(len(rows), 1), 1)
    for r, cols in enumerate(rows):
        top = top0 + r * row_h
        col_w = width // cols
        for c in range(cols):
            boxes.append((c * col_w, top, (c + 1) * col_w if c + 1 < cols else width, top + row_h))
    return boxes


@dataclass
class UserPersona:
    user_id: str
    tz_offset_min: int
    app_affinity: np.ndarray
    word_offsets: np.ndarray
    habit: float
    activity: float = 1.0
    seed: int = 0
    # (screen_id, slot) -> extra logit for that element on that screen.
    screen_logit_overrides: dict = field(default_factory=dict)
    personal_words: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "tz_offset_min": self.tz_offset_min,
            "app_affinity": [round(float(x), 8) for x in self.app_affinity],
            "word_offsets": [round(float(x), 6) for x in self.word_offsets],
            "habit": round(float(self.habit), 8),
            "activity": round(float(self.activity), 8),
            "seed": self.seed,
            "screen_logit_overrides": [[s, j, v] for (s, j), v in sorted(self.screen_logit_overrides.items())],
        }


def make_persona(world: World, user_id: str, rng: np.random.Generator, seed: int = 0) -> UserPersona:
    cfg = world.config
    affinity = world.app_popularity * rng.lognormal(0.0, cfg.affinity_sigma, size=cfg.n_apps)
    lo, hi = cfg.habit_range
    return UserPersona(
        user_id=user_id,
        tz_offset_min=int(rng.choice(TZ_CHOICES)),
        app_affinity=affinity / affinity.sum(),
        word_offsets=cfg.persona_scale * rng.standard_normal(cfg.n_words),
        habit=float(rng.uniform(lo, hi)),
        activity=float(rng.lognormal(0.0, 0.25)),
        seed=seed,
    )


@dataclass
class SimulatedUser:
    persona: UserPersona
    sequence: ClickSequence
    true_probs: list[np.ndarray]
    screen_ids: list[int]


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max())
    return z / z.sum()


def click_distribution(
    world: World,
    persona: UserPersona,
    sid: int,
    words: list[list[int]],
    shared_scores: np.ndarray,
    ctx: int,
    prev_words: set[int] | None,
    habit_counts: np.ndarray | None,
) -> np.ndarray:
    """Exact probability of each slot being clicked on this visit."""
    cfg = world.config
    score = shared_scores[ctx].copy()
    for j, wids in enumerate(words):
        score[j] += persona.word_offsets[wids].mean()
        if prev_words and any(w in prev_words for w in wids):
            score[j] += cfg.intent_bonus
        if persona.screen_logit_overrides:
            score[j] += persona.screen_logit_overrides.get((sid, j), 0.0)
    p = _softmax(score)
    if habit_counts is not None and habit_counts.sum() > 0 and persona.habit > 0:
        p = (1.0 - persona.habit) * p + persona.habit * habit_counts / habit_counts.sum()
    return p


def _session_starts(world: World, persona: UserPersona, weeks: int, rng: np.random.Generator) -> list[int]:
    """Local-time session start offsets (ms since the local epoch midnight)."""
    cfg = world.config
    profile = np.asarray(cfg.hour_profile, dtype=float)
    profile = profile / profile.sum()
    starts = []
    for day in range(weeks * 7):
        weekend = day % 7 >= 5
        rate = (cfg.sessions_per_weekend_day if weekend else cfg.sessions_per_weekday) * persona.activity
        for _ in range(rng.poisson(rate)):
            hour = rng.choice(24, p=profile)
            starts.append(day * MS_PER_DAY + int(hour) * 3_600_000 + int(rng.integers(3_600_000)))
    return sorted(starts)


def simulate_user(world: World, persona: UserPersona, weeks: int, seed: int) -> SimulatedUser:
    cfg = world.config
    if weeks < 1:
        raise ConfigError("weeks must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2, seed]))
    tz_ms = persona.tz_offset_min * 60_000
    mu = math.log(cfg.gap_median_s)
    events: list[ClickEvent] = []
    probs: list[np.ndarray] = []
    sids: list[int] = []
    habit: dict[int, np.ndarray] = {}
    current_app = int(rng.choice(cfg.n_apps, p=persona.app_affinity))
    prev_words: set[int] | None = None
    last_ms = None
    for local_start in _session_starts(world, persona, weeks, rng):
        t = EPOCH_MS - tz_ms + local_start
        if last_ms is not None:
            t = max(t, last_ms + 60_000)
            if cfg.n_apps > 1 and rng.random() < cfg.cross_app_rate:
                aff = persona.app_affinity.copy()
                aff[current_app] = 0.0
                current_app = int(rng.choice(cfg.n_apps, p=aff / aff.sum()))
        sid = world.entry_screens[current_app]
        n_clicks = int(rng.geometric(1.0 / max(cfg.clicks_per_session, 1.0)))
        for k in range(n_clicks):
            if k > 0:
                gap_ms = int(1000 * rng.lognormal(mu, cfg.gap_sigma))
                t += max(gap_ms, 1)
            screen, words, shared = world.visit(sid, rng, persona)
            local = EventTime(t, persona.tz_offset_min)
            ctx = context_index(local.hour_of_day, local.day_of_week)
            p = click_distribution(world, persona, sid, words, shared, ctx, prev_words, habit.get(sid))
            j = int(rng.choice(len(p), p=p))
            events.append(ClickEvent(screen, j, local, world.app_ids[world.screens[sid].app]))
            probs.append(p)
            sids.append(sid)
            counts = habit.setdefault(sid, np.zeros(len(p)))
            counts[j] += 1.0
            prev_words = set(words[j])
            ws = world.screens[sid]
            if ws.cross_app_targets[j] is not None and rng.random() < cfg.cross_app_rate:
                sid = ws.cross_app_targets[j]
            else:
                sid = ws.same_app_targets[j]
            current_app = world.screens[sid].app
            last_ms = t
    return SimulatedUser(persona, ClickSequence(persona.user_id, tuple(events)), probs, sids)


def build_world(config: WorldConfig) -> World:
    return World(config)


def generate_corpus(config: WorldConfig) -> tuple[World, list[SimulatedUser]]:
    world = build_world(config)
    users = []
    for u in range(config.n_users):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3, u]))
        persona = make_persona(world, f"user{u:04d}", rng, seed=u)
        users.append(simulate_user(world, persona, config.weeks, seed=u))
    return world, users


def cross_app_fraction(sequences) -> float:
    pairs = cross = 0
    for seq in sequences:
        for a, b in zip(seq.events, seq.events[1:]):
            pairs += 1
            cross += a.app_id != b.app_id
    return cross / pairs if pairs else 0.0


def write_corpus(world: World, users: list[SimulatedUser], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl([u.sequence for u in users], out / "events.jsonl")
    truth = {
        "config": _jsonable(asdict(world.config)),
        "words": world.words,
        "apps": world.app_ids,
        "personas": [u.persona.to_dict() for u in users],
    }
    (out / "ground_truth.json").write_text(json.dumps(truth, sort_keys=True, indent=1) + "\n", "utf-8")
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


class OracleRanker:
    """Ranks by the generator's exact click distribution (the Bayes ceiling)."""

    def __init__(self, users: list[SimulatedUser]):
        self.users = users
        self._probs = {u.sequence.user_id: u.true_probs for u in users}

    def fit(self, X=None, y=None):
        return self

    def predict_records(self, X):
        from .data import as_slices
        from .metrics import PredictionRecord, rank_scores

        for sl in as_slices(X):
            probs = self._probs[sl.user_id]
            events = sl.sequence.events
            for idx in sl.target_indices:
                yield PredictionRecord(
                    user_id=sl.user_id,
                    event_index=idx,
                    target_index=events[idx].clicked_index,
                    ranking=[int(i) for i in rank_scores(probs[idx])],
                    app_id=events[idx].app_id,
                    prev_app_id=events[idx - 1].app_id if idx > 0 else None,
                    probabilities=[float(p) for p in probs[idx]],
                )
