"""Hierarchical pointer model: screen encoder, click-sequence encoder, pointer and alignment."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .embedding import (
    AppVocabulary,
    ClickEventEmbedder,
    ContextEmbedder,
    ElapsedEmbedding,
    ElementEmbedder,
    FeatureFlags,
    ScreenFeatures,
    Vocabulary,
    featurize_elements,
)
from .exceptions import ConfigError, EmptyScreenError, HistoryOutOfOrderError, TargetMaskedError
from .metrics import rank_scores
from .nn import MultiHeadAttention, TransformerEncoder, init_weights, masked_softmax, softmax_cross_entropy
from .types import ClickEvent, EventTime, PredictionRequest, Screen, elapsed_bucket


@dataclass
class ModelConfig:
    d_model: int = 128
    screen_encoder_layers: int = 2
    sequence_encoder_layers: int = 2
    pointer_layers: int = 2
    heads: int = 4
    ffn_mult: int = 4
    history_size: int = 9
    dropout: float = 0.1
    max_elements: int = 64
    max_tokens: int = 8
    context_width: int = 32
    max_bucket: int = 20
    flags: FeatureFlags = field(default_factory=FeatureFlags)

    def __post_init__(self):
        if isinstance(self.flags, dict):
            self.flags = FeatureFlags(**self.flags)
        self.validate()

    def validate(self) -> "ModelConfig":
        if self.d_model <= 0 or self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} must be positive and divisible by heads={self.heads}")
        if self.history_size < 0:
            raise ConfigError("history_size must be non-negative")
        if self.pointer_layers < 1:
            raise ConfigError("pointer_layers must be at least 1")
        if self.screen_encoder_layers < 0 or self.sequence_encoder_layers < 0:
            raise ConfigError("encoder layer counts must be non-negative")
        if self.max_elements < 1 or self.max_tokens < 1:
            raise ConfigError("max_elements and max_tokens must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["flags"] = self.flags.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class PredictionResult:
    probabilities: np.ndarray
    ranked_indices: np.ndarray
    target_rank: int | None = None

    @property
    def top1(self) -> int:
        return int(self.ranked_indices[0])


def window_start(n_elements: int, keep: int | None, max_elements: int) -> int:
    """First kept element when truncating to ``max_elements`` by preorder.

    Keeps the leading elements unless that would drop ``keep``; then the
    window slides just far enough to include it.
    """
    if n_elements <= max_elements or keep is None or keep < max_elements:
        return 0
    return keep - max_elements + 1


@dataclass
class ModelBatch:
    """Dense tensors for a batch of prediction items over a deduplicated screen table."""

    scr_tokens: torch.Tensor  # [S, L, T]
    scr_types: torch.Tensor  # [S, L]
    scr_bins: torch.Tensor  # [S, L, 4]
    scr_mask: torch.Tensor  # [S, L]
    cur_screen: torch.Tensor  # [B]
    cur_offset: np.ndarray  # [B] window start of the current screen
    cur_size: np.ndarray  # [B] full element count of the current screen
    cur_hour: torch.Tensor
    cur_day: torch.Tensor
    cur_app: torch.Tensor
    hist_screen: torch.Tensor  # [B, K]
    hist_clicked: torch.Tensor  # [B, K]
    hist_hour: torch.Tensor
    hist_day: torch.Tensor
    hist_app: torch.Tensor
    hist_bucket: torch.Tensor
    hist_mask: torch.Tensor  # [B, K]
    target: torch.Tensor | None = None  # [B] window-relative

    def __len__(self) -> int:
        return len(self.cur_screen)


class Featurizer:
    """Builds :class:`ModelBatch` objects; caches per-screen features by content hash."""

    def __init__(self, vocab: Vocabulary, app_vocab: AppVocabulary, config: ModelConfig):
        self.vocab = vocab
        self.app_vocab = app_vocab
        self.config = config
        self._cache: dict[tuple[str, int], ScreenFeatures] = {}

    def screen_features(self, screen: Screen, start: int) -> ScreenFeatures:
        key = (screen.screen_hash, start)
        feats = self._cache.get(key)
        if feats is None:
            elems = screen.elements[start:start + self.config.max_elements]
            feats = featurize_elements(elems, screen.width, screen.height, self.vocab, self.config.max_tokens)
            self._cache[key] = feats
        return feats

    def clear_cache(self) -> None:
        self._cache.clear()

    def batch(self, requests: Sequence[PredictionRequest], targets: Sequence[int | None] | None = None) -> ModelBatch:
        cfg = self.config
        targets = [None] * len(requests) if targets is None else list(targets)
        slots: dict[tuple[str, int], int] = {}
        table: list[ScreenFeatures] = []

        def slot(screen: Screen, keep: int | None) -> tuple[int, int]:
            start = window_start(len(screen.elements), keep, cfg.max_elements)
            key = (screen.screen_hash, start)
            idx = slots.get(key)
            if idx is None:
                idx = slots[key] = len(table)
                table.append(self.screen_features(screen, start))
            return idx, start

        use_history = cfg.history_size > 0
        k = max(1, max((len(r.history) for r in requests), default=0) if use_history else 1)
        b = len(requests)
        cur = np.zeros((b, 5), dtype=np.int64)  # screen, offset, hour, day, app
        sizes = np.zeros(b, dtype=np.int64)
        hist = np.zeros((6, b, k), dtype=np.int64)  # screen, clicked, hour, day, app, bucket
        hmask = np.zeros((b, k), dtype=bool)
        tgt = np.zeros(b, dtype=np.int64)
        for i, (req, target) in enumerate(zip(requests, targets)):
            screen = req.current_screen
            if not screen.elements:
                raise EmptyScreenError("current screen has no actionable elements")
            s_idx, start = slot(screen, target)
            t = req.current_time
            cur[i] = (s_idx, start, t.hour_of_day, t.day_of_week, self.app_vocab.encode_app(req.current_app))
            sizes[i] = len(screen.elements)
            if target is not None:
                tgt[i] = target - start
            if not use_history:
                continue
            now = t.timestamp_ms
            for j, ev in enumerate(req.history[-cfg.history_size:]):
                if ev.time.timestamp_ms >= now:
                    raise HistoryOutOfOrderError("history must strictly precede the prediction time")
                h_idx, h_start = slot(ev.screen, ev.clicked_index)
                v = (now - ev.time.timestamp_ms) / 1000.0
                hist[:, i, j] = (
                    h_idx,
                    ev.clicked_index - h_start,
                    ev.time.hour_of_day,
                    ev.time.day_of_week,
                    self.app_vocab.encode_app(ev.app_id),
                    elapsed_bucket(v, cfg.max_bucket),
                )
                hmask[i, j] = True

        n_max = max(len(f) for f in table)
        s = len(table)
        tokens = np.zeros((s, n_max, cfg.max_tokens), dtype=np.int64)
        types = np.zeros((s, n_max), dtype=np.int64)
        bins = np.zeros((s, n_max, 4), dtype=np.int64)
        smask = np.zeros((s, n_max), dtype=bool)
        for idx, f in enumerate(table):
            n = len(f)
            tokens[idx, :n], types[idx, :n], bins[idx, :n], smask[idx, :n] = f.tokens, f.types, f.bins, True
        as_t = torch.from_numpy
        has_targets = any(x is not None for x in targets)
        return ModelBatch(
            as_t(tokens), as_t(types), as_t(bins), as_t(smask),
            as_t(cur[:, 0].copy()), cur[:, 1].copy(), sizes,
            as_t(cur[:, 2].copy()), as_t(cur[:, 3].copy()), as_t(cur[:, 4].copy()),
            *(as_t(h.copy()) for h in hist), as_t(hmask),
            target=as_t(tgt) if has_targets else None,
        )


class PointerLayer(nn.Module):
    """u = LN(q + attn(q, history)); q' = u + GELU(dense(u))."""

    def __init__(self, d_model: int, heads: int, dropout: float = 0.0):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, heads, dropout)
        self.norm = nn.LayerNorm(d_model)
        self.dense = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, q: torch.Tensor, memory: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        a = self.attn(q.unsqueeze(-2), memory, mask).squeeze(-2)
        u = self.norm(q + self.dropout(a))
        return u + self.dropout(F.gelu(self.dense(u)))


class ClickModel(nn.Module):
    """Scores every element of the current screen as the next click."""

    SCREEN_CHUNK = 32

    def __init__(self, config: ModelConfig, vocab: Vocabulary, app_vocab: AppVocabulary, seed: int | None = None):
        super().__init__()
        config.validate()
        self.config = config
        self.flags = config.flags
        self.featurizer = Featurizer(vocab, app_vocab, config)
        d, heads, p = config.d_model, config.heads, config.dropout
        inner = config.ffn_mult * d
        self.elements = ElementEmbedder(len(vocab), d)
        self.context = ContextEmbedder(len(app_vocab), config.context_width)
        self.click_embed = ClickEventEmbedder(d, self.context.out_width)
        self.elapsed = ElapsedEmbedding(d, config.max_bucket)
        self.screen_encoder = TransformerEncoder(d, config.screen_encoder_layers, heads, inner, p)
        self.sequence_encoder = TransformerEncoder(d, config.sequence_encoder_layers, heads, inner, p)
        self.null_history = nn.Parameter(torch.zeros(d))
        self.query_proj = nn.Linear(self.context.out_width, d)
        self.pointer = nn.ModuleList(PointerLayer(d, heads, p) for _ in range(config.pointer_layers))
        self.align = nn.Linear(d, d, bias=False)
        self.dropout = nn.Dropout(p)
        if seed is not None:
            torch.manual_seed(seed)
        init_weights(self)
        nn.init.trunc_normal_(self.null_history, std=0.02, a=-0.04, b=0.04)

    # --- batched path -----------------------------------------------------------

    def _encode_chunk(self, tokens, types, bins, mask):
        x = self.elements(tokens, types, bins, self.flags)
        if not self.flags.use_screen_encoder:
            return x
        return self.screen_encoder(self.dropout(x), mask)

    def encode_screens(self, tokens, types, bins, mask) -> torch.Tensor:
        """Latents ``[S, L, d]`` for a table of screens; chunks by length to limit padding."""
        s, n_max = mask.shape
        if s <= self.SCREEN_CHUNK:
            return self._encode_chunk(tokens, types, bins, mask)
        lengths = mask.sum(-1)
        order = torch.argsort(lengths, stable=True)
        parts = []
        for lo in range(0, s, self.SCREEN_CHUNK):
            idx = order[lo:lo + self.SCREEN_CHUNK]
            n = int(lengths[idx].max())
            out = self._encode_chunk(tokens[idx, :n], types[idx, :n], bins[idx, :n], mask[idx, :n])
            parts.append(F.pad(out, (0, 0, 0, n_max - n)))
        inverse = torch.empty_like(order)
        inverse[order] = torch.arange(s)
        return torch.cat(parts)[inverse]

    def encode_history_batch(self, latents: torch.Tensor, batch: ModelBatch):
        """History latents ``[B, K, d]`` and mask; empty histories get the null row."""
        clicked = latents[batch.hist_screen, batch.hist_clicked]
        ctx = self.context(batch.hist_hour, batch.hist_day, batch.hist_app, self.flags)
        x = self.click_embed(clicked, ctx)
        if self.flags.use_time:
            x = x + self.elapsed(batch.hist_bucket)
        mask = batch.hist_mask
        empty = ~mask.any(-1)
        first = torch.zeros_like(mask)
        first[:, 0] = True
        mask = mask | (empty[:, None] & first)
        if mask.shape[-1] and bool((~empty).any()):
            enc = self.sequence_encoder(self.dropout(x), mask)
        else:
            enc = x
        null = self.null_history.to(enc.dtype).expand_as(enc)
        out = torch.where((empty[:, None] & first)[..., None], null, enc)
        return out, mask

    def pointer_query(self, hour, day, app, memory, mask) -> torch.Tensor:
        q = self.query_proj(self.context(hour, day, app, self.flags))
        for layer in self.pointer:
            q = layer(q, memory, mask)
        return q

    def forward(self, batch: ModelBatch) -> tuple[torch.Tensor, torch.Tensor]:
        latents = self.encode_screens(batch.scr_tokens, batch.scr_types, batch.scr_bins, batch.scr_mask)
        memory, mem_mask = self.encode_history_batch(latents, batch)
        q = self.pointer_query(batch.cur_hour, batch.cur_day, batch.cur_app, memory, mem_mask)
        current = latents[batch.cur_screen]
        logits = torch.einsum("bld,bd->bl", current, self.align(q))
        return logits, batch.scr_mask[batch.cur_screen]

    def batch_loss(self, batch: ModelBatch) -> torch.Tensor:
        if batch.target is None:
            raise TargetMaskedError("batch carries no targets")
        logits, mask = self(batch)
        return softmax_cross_entropy(logits, batch.target, mask)

    def batch_probabilities(self, batch: ModelBatch) -> list[np.ndarray]:
        """Per item, probabilities over the full current screen (truncated elements get 0)."""
        logits, mask = self(batch)
        probs = masked_softmax(logits, mask).detach().cpu().double().numpy()
        out = []
        for i in range(len(batch)):
            full = np.zeros(int(batch.cur_size[i]))
            start = int(batch.cur_offset[i])
            n = min(len(full) - start, probs.shape[1])
            full[start:start + n] = probs[i, :n]
            out.append(full)
        return out

    # --- single-request conveniences --------------------------------------------

    def encode_screen(self, screen: Screen, keep: int | None = None) -> torch.Tensor:
        """Contextual latents ``[|s|, d]`` of one screen (window of ``max_elements``)."""
        if not screen.elements:
            raise EmptyScreenError("screen has no actionable elements")
        start = window_start(len(screen.elements), keep, self.config.max_elements)
        f = self.featurizer.screen_features(screen, start)
        t = torch.from_numpy
        mask = torch.ones(1, len(f), dtype=torch.bool)
        return self._encode_chunk(t(f.tokens)[None], t(f.types)[None], t(f.bins)[None], mask)[0]

    def encode_history(self, history: Sequence[ClickEvent], prediction_time: EventTime) -> torch.Tensor:
        """``[n, d]`` event latents, or the ``[1, d]`` null row for an empty history."""
        history = tuple(history)[-self.config.history_size:] if self.config.history_size else ()
        for prev, nxt in zip(history, history[1:]):
            if nxt.time.timestamp_ms < prev.time.timestamp_ms:
                raise HistoryOutOfOrderError("history is not chronological")
        if not history:
            return self.null_history[None]
        placeholder = history[-1].screen
        req = PredictionRequest(history, placeholder, prediction_time, history[-1].app_id, len(history))
        batch = self.featurizer.batch([req])
        latents = self.encode_screens(batch.scr_tokens, batch.scr_types, batch.scr_bins, batch.scr_mask)
        memory, _ = self.encode_history_batch(latents, batch)
        return memory[0, : len(history)]

    def generate_pointer(self, current_time: EventTime, current_app: str, history_latents: torch.Tensor) -> torch.Tensor:
        app = torch.tensor([self.featurizer.app_vocab.encode_app(current_app)])
        hour = torch.tensor([current_time.hour_of_day])
        day = torch.tensor([current_time.day_of_week])
        mask = torch.ones(1, history_latents.shape[0], dtype=torch.bool)
        return self.pointer_query(hour, day, app, history_latents[None], mask)[0]

    def predict(self, request: PredictionRequest, target_index: int | None = None) -> PredictionResult:
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                probs = self.batch_probabilities(self.featurizer.batch([request]))[0]
        finally:
            self.train(was_training)
        ranked = rank_scores(probs)
        rank = None if target_index is None else int(np.flatnonzero(ranked == target_index)[0])
        return PredictionResult(probs, ranked, rank)

    def loss(self, request: PredictionRequest, target_index: int) -> torch.Tensor:
        n = len(request.current_screen.elements)
        if not 0 <= target_index < n:
            raise TargetMaskedError(f"target {target_index} outside screen of {n}")
        return self.batch_loss(self.featurizer.batch([request], [target_index]))
