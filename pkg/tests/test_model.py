import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from nextclick.embedding import AppVocabulary, FeatureFlags, Vocabulary
from nextclick.exceptions import ConfigError, EmptyScreenError, HistoryOutOfOrderError, TargetMaskedError
from nextclick.model import ClickModel, ModelConfig, window_start
from nextclick.nn.gradcheck import check_gradients
from nextclick.types import EventTime, PredictionRequest, Screen, UiElement

from conftest import T0, make_event, make_screen

WORDS = ["send", "message", "open", "settings", "wifi", "alarm", "call", "back", "next", "play"]


def tiny_model(d=16, layers=1, heads=2, history=9, flags=FeatureFlags(), seed=0, dropout=0.0, pointer=2, max_elements=64):
    vocab = Vocabulary.from_texts(WORDS)
    apps = AppVocabulary.from_apps(["app.a", "app.b"])
    cfg = ModelConfig(d_model=d, screen_encoder_layers=layers, sequence_encoder_layers=layers, pointer_layers=pointer,
                      heads=heads, history_size=history, dropout=dropout, context_width=4, flags=flags,
                      max_elements=max_elements)
    return ClickModel(cfg, vocab, apps, seed=seed).eval()


def random_screen(rng, n, app="app.a"):
    texts = [" ".join(rng.choice(WORDS, size=rng.integers(0, 3))) for _ in range(n)]
    types = list(rng.choice(["Button", "TextView", "Switch", "ImageView"], size=n))
    elems = []
    for i, (t, k) in enumerate(zip(texts, types)):
        l, tp = int(rng.integers(0, 900)), int(rng.integers(0, 1800))
        elems.append(UiElement(t, k, (l, tp, l + int(rng.integers(1, 180)), tp + int(rng.integers(1, 120))), i))
    return Screen(tuple(elems), 1080, 1920, app)


def request_for(screen, history=(), ts=T0 + 3_600_000, app="app.a"):
    return PredictionRequest(tuple(history), screen, EventTime(ts), app)


def history_events(rng, n, end_ts=T0 + 3_000_000):
    return [make_event(random_screen(rng, int(rng.integers(1, 6))), 0, end_ts - (n - i) * 7000) for i in range(n)]


def test_model_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(d_model=10, heads=4)
    with pytest.raises(ConfigError):
        ModelConfig(history_size=-1)
    with pytest.raises(ConfigError):
        ModelConfig(pointer_layers=0)
    cfg = ModelConfig.from_dict(ModelConfig().to_dict())
    assert cfg == ModelConfig()


def test_encode_screen_shape():
    model = tiny_model(d=128, heads=4)
    screen = make_screen([f"w{i}" for i in range(7)])
    assert model.encode_screen(screen).shape == (7, 128)
    with pytest.raises(EmptyScreenError):
        model.encode_screen(Screen((), 10, 10))


def test_encode_screen_permutation_equivariance():
    rng = np.random.default_rng(1)
    model = tiny_model()
    screen = random_screen(rng, 8)
    perm = rng.permutation(8)
    permuted = Screen(tuple(UiElement(screen.elements[j].text, screen.elements[j].elem_type, screen.elements[j].bbox, i)
                            for i, j in enumerate(perm)), screen.width, screen.height, screen.app_id)
    with torch.no_grad():
        assert torch.allclose(model.encode_screen(screen)[perm], model.encode_screen(permuted), atol=1e-5)


def test_encode_screen_bypass_equals_embedder():
    model = tiny_model(flags=FeatureFlags(use_screen_encoder=False))
    screen = random_screen(np.random.default_rng(2), 5)
    f = model.featurizer.screen_features(screen, 0)
    want = model.elements(torch.from_numpy(f.tokens), torch.from_numpy(f.types), torch.from_numpy(f.bins), model.flags)
    assert torch.equal(model.encode_screen(screen), want)


def test_encode_history_null_row_and_shapes():
    model = tiny_model()
    rng = np.random.default_rng(3)
    now = EventTime(T0 + 3_600_000)
    assert model.encode_history([], now).shape == (1, 16)
    assert torch.equal(model.encode_history([], now)[0], model.null_history)
    assert model.encode_history(history_events(rng, 1), now).shape == (1, 16)
    assert model.encode_history(history_events(rng, 12), now).shape == (9, 16)
    h0 = tiny_model(history=0)
    assert h0.encode_history(history_events(rng, 3), now).shape == (1, 16)


def test_encode_history_order_checked():
    model = tiny_model()
    rng = np.random.default_rng(4)
    events = history_events(rng, 3)
    with pytest.raises(HistoryOutOfOrderError):
        model.encode_history(events[::-1], EventTime(T0 + 3_600_000))


def test_encode_history_matches_component_oracle():
    model = tiny_model()
    rng = np.random.default_rng(5)
    events = history_events(rng, 3)
    now = EventTime(T0 + 3_600_000)
    rows = []
    for ev in events:
        h = model.encode_screen(ev.screen)[ev.clicked_index]
        ctx = torch.cat([model.context.hour.weight[ev.time.hour_of_day], model.context.day.weight[ev.time.day_of_week],
                         model.context.app.weight[model.featurizer.app_vocab.id(ev.app_id)]])
        x = model.click_embed.proj.weight @ torch.cat([h, ctx]) + model.click_embed.proj.bias
        v = (now.timestamp_ms - ev.time.timestamp_ms) / 1000
        rows.append(x + model.elapsed.table.weight[int(math.floor(math.log(max(v, 1))))])
    want = model.sequence_encoder(torch.stack(rows)[None])[0]
    with torch.no_grad():
        assert torch.allclose(model.encode_history(events, now), want, atol=1e-5)


def manual_pointer_layer(layer, q, memory):
    a = layer.attn(q[None], memory)[0]
    u = F.layer_norm(q + a, (q.shape[-1],), layer.norm.weight, layer.norm.bias, layer.norm.eps)
    return u + F.gelu(u @ layer.dense.weight.T + layer.dense.bias)


def test_generate_pointer_matches_manual_layers():
    model = tiny_model(pointer=2)
    rng = np.random.default_rng(6)
    now = EventTime(T0 + 3_600_000)
    memory = model.encode_history(history_events(rng, 4), now)
    q = model.query_proj(torch.cat([model.context.hour.weight[now.hour_of_day], model.context.day.weight[now.day_of_week],
                                    model.context.app.weight[model.featurizer.app_vocab.id("app.b")]]))
    for layer in model.pointer:
        q = manual_pointer_layer(layer, q, memory)
    with torch.no_grad():
        got = model.generate_pointer(now, "app.b", memory)
        assert got.shape == (16,)
        assert torch.allclose(got, q, atol=1e-5)


def test_pointer_single_memory_row_attention():
    model = tiny_model(pointer=1)
    layer = model.pointer[0]
    mem = torch.randn(1, 16)
    q = torch.randn(16)
    attn = layer.attn(q[None], mem)[0]
    assert torch.allclose(attn, layer.attn.out_proj(layer.attn.v_proj(mem))[0], atol=1e-6)


def test_predict_single_element():
    model = tiny_model()
    res = model.predict(request_for(make_screen(["send"])), target_index=0)
    assert res.probabilities.tolist() == [1.0]
    assert res.target_rank == 0 and res.top1 == 0


def test_predict_probabilities_sum_to_one():
    model = tiny_model()
    rng = np.random.default_rng(7)
    for n in (1, 2, 5, 17, 40):
        res = model.predict(request_for(random_screen(rng, n), history_events(rng, 3)))
        assert abs(res.probabilities.sum() - 1) < 1e-6
        assert sorted(res.ranked_indices.tolist()) == list(range(n))
        assert res.probabilities[res.ranked_indices[0]] == res.probabilities.max()


def test_predict_equal_scores_rank_by_preorder():
    model = tiny_model()
    screen = Screen(tuple(UiElement("send", "Button", (0, 0, 10, 10), i) for i in range(4)), 1080, 1920, "app.a")
    res = model.predict(request_for(screen))
    assert np.allclose(res.probabilities, 0.25)
    assert res.ranked_indices.tolist() == [0, 1, 2, 3]


def test_prediction_identity_invariant_under_sibling_reordering():
    model = tiny_model(seed=3)
    rng = np.random.default_rng(8)
    hist = history_events(rng, 2)
    for _ in range(5):
        screen = random_screen(rng, 9)
        perm = rng.permutation(9)
        permuted = Screen(tuple(UiElement(screen.elements[j].text, screen.elements[j].elem_type, screen.elements[j].bbox, i)
                                for i, j in enumerate(perm)), 1080, 1920, "app.a")
        top = model.predict(request_for(screen, hist)).top1
        top_perm = model.predict(request_for(permuted, hist)).top1
        assert perm[top_perm] == top


def test_loss_values():
    model = tiny_model()
    screen = Screen(tuple(UiElement("send", "Button", (0, 0, 10, 10), i) for i in range(4)), 1080, 1920, "app.a")
    assert abs(model.loss(request_for(screen), 2).item() - math.log(4)) < 1e-6
    with pytest.raises(TargetMaskedError):
        model.loss(request_for(screen), 4)


def test_loss_saturated_correct_logit():
    model = tiny_model()
    screen = Screen((UiElement("send", "Button", (0, 0, 10, 10), 0), UiElement("wifi", "Switch", (0, 500, 10, 510), 1)),
                    1080, 1920, "app.a")
    with torch.no_grad():
        model.align.weight.mul_(0)
        lat = model.encode_screen(screen)
        q = model.generate_pointer(EventTime(T0 + 3_600_000), "app.a", model.null_history[None])
        direction = lat[0] - lat[1]
        model.align.weight.copy_(torch.outer(direction, q) * (1e4 / (q @ q) / (direction @ direction)))
    assert model.loss(request_for(screen), 0).item() < 1e-3


def test_truncation_keeps_target():
    assert window_start(50, 10, 64) == 0
    assert window_start(100, 10, 64) == 0
    assert window_start(100, 80, 64) == 17
    assert window_start(100, None, 64) == 0
    model = tiny_model(max_elements=8)
    rng = np.random.default_rng(9)
    screen = random_screen(rng, 20)
    loss = model.loss(request_for(screen), 15)
    assert torch.isfinite(loss)
    res = model.predict(request_for(screen))
    assert len(res.probabilities) == 20
    assert abs(res.probabilities.sum() - 1) < 1e-6
    assert np.all(res.probabilities[8:] == 0)


def test_history_size_zero_ignores_history():
    model = tiny_model(history=0)
    rng = np.random.default_rng(10)
    screen = random_screen(rng, 6)
    a = model.predict(request_for(screen, history_events(rng, 4))).probabilities
    b = model.predict(request_for(screen)).probabilities
    assert np.array_equal(a, b)


def test_time_and_app_flags_make_output_invariant():
    rng = np.random.default_rng(11)
    screen = random_screen(rng, 6)
    hist = history_events(rng, 3)
    m = tiny_model(flags=FeatureFlags(use_time=False))
    a = m.predict(request_for(screen, hist, ts=T0 + 3_600_000)).probabilities
    shifted = [make_event(e.screen, e.clicked_index, e.time.timestamp_ms + 5 * 3_600_000) for e in hist]
    b = m.predict(request_for(screen, shifted, ts=T0 + 3_600_000 + 7 * 3_600_000)).probabilities
    assert np.allclose(a, b, atol=1e-7)
    m = tiny_model(flags=FeatureFlags(use_app=False))
    a = m.predict(request_for(screen, hist, app="app.a")).probabilities
    b = m.predict(request_for(screen, hist, app="app.b")).probabilities
    assert np.allclose(a, b, atol=1e-7)


def test_batched_matches_single_requests():
    model = tiny_model()
    rng = np.random.default_rng(12)
    reqs = [request_for(random_screen(rng, int(n)), history_events(rng, int(h))) for n, h in zip(rng.integers(1, 30, 40), rng.integers(0, 10, 40))]
    with torch.no_grad():
        batched = model.batch_probabilities(model.featurizer.batch(reqs))
    for req, p in zip(reqs, batched):
        assert np.allclose(model.predict(req).probabilities, p, atol=1e-5)


def test_end_to_end_loss_gradient_check():
    torch.manual_seed(0)
    model = tiny_model(d=8, layers=1, heads=2, pointer=1).double()
    rng = np.random.default_rng(13)
    screen = random_screen(rng, 3)
    hist = history_events(rng, 2)
    batch = model.featurizer.batch([request_for(screen, hist)], [1])
    params = dict(model.named_parameters())
    errors = check_gradients(lambda: model.batch_loss(batch), params, max_entries=24)
    assert max(errors.values()) < 1e-4, sorted(errors.items(), key=lambda kv: -kv[1])[:3]
