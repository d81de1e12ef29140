import json

import numpy as np
import pytest
from scipy.stats import norm

from nextclick.baselines import FrequencyRanker
from nextclick.data import split
from nextclick.exceptions import ConfigError
from nextclick.metrics import evaluate_records
from nextclick.synth import (
    OracleRanker,
    World,
    WorldConfig,
    cross_app_fraction,
    generate_corpus,
    make_persona,
    simulate_user,
    write_corpus,
)
from nextclick.types import MS_PER_DAY


def clipped_rounded_normal_pmf(mean, std, lo, hi):
    ks = np.arange(lo, hi + 1)
    upper = norm.cdf(ks + 0.5, mean, std)
    lower = norm.cdf(ks - 0.5, mean, std)
    upper[-1], lower[0] = 1.0, 0.0
    return ks, upper - lower


def test_world_config_validation():
    with pytest.raises(ConfigError):
        World(WorldConfig(n_apps=0))
    with pytest.raises(ConfigError):
        World(WorldConfig(cross_app_rate=1.5))
    with pytest.raises(ConfigError):
        WorldConfig.from_dict({"n_users": -1})


def test_same_config_gives_identical_corpus(tmp_path):
    cfg = WorldConfig(n_users=4, n_apps=5, screens_per_app=4, weeks=1, seed=11)
    a = write_corpus(*generate_corpus(cfg), tmp_path / "a")
    b = write_corpus(*generate_corpus(cfg), tmp_path / "b")
    for name in ("events.jsonl", "ground_truth.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    other = write_corpus(*generate_corpus(WorldConfig(n_users=4, n_apps=5, screens_per_app=4, weeks=1, seed=12)), tmp_path / "c")
    assert (other / "events.jsonl").read_bytes() != (a / "events.jsonl").read_bytes()


def test_ground_truth_sidecar(tmp_path, small_world):
    out = write_corpus(*small_world, tmp_path)
    truth = json.loads((out / "ground_truth.json").read_text())
    assert len(truth["personas"]) == 6
    assert {"app_affinity", "habit", "word_offsets"} <= set(truth["personas"][0])
    assert all(0 <= p["habit"] <= 1 for p in truth["personas"])


def test_single_app_has_no_cross_app_transitions():
    world, users = generate_corpus(WorldConfig(n_apps=1, n_users=3, screens_per_app=6, weeks=1, seed=5))
    assert all(t is None for ws in world.screens for t in ws.cross_app_targets)
    assert cross_app_fraction([u.sequence for u in users]) == 0.0


def test_element_count_moments_match_clipped_normal():
    world = World(WorldConfig(n_apps=2, screens_per_app=2))
    rng = np.random.default_rng(0)
    counts = np.array([world.sample_element_count(rng) for _ in range(10_000)])
    ks, pmf = clipped_rounded_normal_pmf(18.0, 12.0, 2, 64)
    mean = float(ks @ pmf)
    std = float(np.sqrt(((ks - mean) ** 2) @ pmf))
    assert abs(counts.mean() - mean) < 4 * std / 100
    assert abs(counts.std() - std) < 0.4
    assert abs(counts.mean() - 18) <= 1 and abs(counts.std() - 12) <= 2
    assert counts.min() >= 2 and counts.max() <= 64


def test_generated_sequences_are_valid(small_world):
    world, users = small_world
    for u in users:
        times = [e.time.timestamp_ms for e in u.sequence.events]
        assert times == sorted(times)
        assert len(u.true_probs) == len(u.sequence.events)
        for e, p in zip(u.sequence.events, u.true_probs):
            assert len(p) == len(e.screen.elements)
            assert abs(p.sum() - 1) < 1e-9 and np.all(np.isfinite(p))


def test_overwhelming_logit_dominates_visits():
    world = World(WorldConfig(n_apps=1, screens_per_app=3, seed=2))
    persona = make_persona(world, "u", np.random.default_rng(0))
    for sid in range(3):
        persona.screen_logit_overrides[(sid, 1)] = 60.0
    user = simulate_user(world, persona, weeks=2, seed=0)
    clicked = [e.clicked_index for e in user.sequence.events]
    assert len(clicked) > 100
    assert np.mean(np.array(clicked) == 1) > 0.99


def test_simulation_spans_requested_weeks():
    world = World(WorldConfig(n_apps=3, screens_per_app=3, seed=4))
    persona = make_persona(world, "u", np.random.default_rng(1))
    seq = simulate_user(world, persona, weeks=4, seed=1).sequence
    span = seq.events[-1].time.timestamp_ms - seq.events[0].time.timestamp_ms
    assert 3 * 7 * MS_PER_DAY < span < 4 * 7 * MS_PER_DAY + MS_PER_DAY
    with pytest.raises(ConfigError):
        simulate_user(world, persona, weeks=0, seed=1)


def test_in_session_gaps_have_five_second_median(small_corpus):
    gaps = np.array([
        (b.time.timestamp_ms - a.time.timestamp_ms) / 1000
        for seq in small_corpus for a, b in zip(seq.events, seq.events[1:])
    ])
    in_session = gaps[gaps < 60]
    assert 4.0 < np.median(in_session) < 6.0


@pytest.fixture(scope="module")
def default_corpus():
    world, users = generate_corpus(WorldConfig())
    return world, users, split([u.sequence for u in users])


@pytest.mark.slow
def test_cross_app_fraction_on_100_users():
    _, users = generate_corpus(WorldConfig(n_users=100))
    assert abs(cross_app_fraction([u.sequence for u in users]) - 0.26) <= 0.03


def test_oracle_reaches_bayes_ceiling(default_corpus):
    _, users, (_, _, test) = default_corpus
    assert evaluate_records(OracleRanker(users).predict_records(test)).top1 >= 0.6


def test_personal_frequency_beats_global(default_corpus):
    _, _, (train, _, test) = default_corpus
    personal = evaluate_records(FrequencyRanker("personal").fit(train).predict_records(test)).top1
    pooled = evaluate_records(FrequencyRanker("global").fit(train).predict_records(test)).top1
    assert personal > pooled
