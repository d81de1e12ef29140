"""Turning elements, events and context into model inputs."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import torch
from torch import nn

from .exceptions import ConfigError, ValidationError
from .nn.functional import embedding_lookup
from .text import split_words
from .types import ELEMENT_TYPES, DEFAULT_MAX_BUCKET, Screen, UiElement, elapsed_bucket

N_POSITION_BINS = 100
PAD, UNK, EMPTY = 0, 1, 2
RESERVED = ("<pad>", "<unk>", "<empty>")


def tokenize(text: str) -> list[str]:
    return split_words(text)


def position_bins(bbox, screen_w: int, screen_h: int) -> list[int]:
    """Coordinates scaled to integer bins in [0, 100): x by width, y by height."""
    if screen_w <= 0 or screen_h <= 0:
        raise ValidationError("screen dimensions must be positive")
    left, top, right, bottom = bbox
    out = []
    for value, extent in ((left, screen_w), (top, screen_h), (right, screen_w), (bottom, screen_h)):
        b = (N_POSITION_BINS * int(value)) // int(extent)
        out.append(min(max(b, 0), N_POSITION_BINS - 1))
    return out


class Vocabulary:
    """Token ids with PAD=0, UNK=1, EMPTY=2 reserved. Frozen once built."""

    def __init__(self, tokens: Iterable[str] = (), counts: dict | None = None, min_count: int = 1):
        self.min_count = min_count
        self.itos = list(RESERVED)
        self.counts = [0, 0, 0]
        counts = counts or {}
        for tok in tokens:
            if tok in RESERVED:
                continue
            self.itos.append(tok)
            self.counts.append(int(counts.get(tok, 0)))
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        self.frozen = True

    @classmethod
    def build(cls, tokens: Iterable[str], min_count: int = 1) -> "Vocabulary":
        counter = Counter(tokens)
        kept = sorted((t for t, c in counter.items() if c >= min_count), key=lambda t: (-counter[t], t))
        return cls(kept, counter, min_count)

    @classmethod
    def from_texts(cls, texts: Iterable[str], min_count: int = 1) -> "Vocabulary":
        return cls.build((tok for text in texts for tok in tokenize(text)), min_count)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def encode(self, text: str, max_tokens: int | None = None) -> list[int]:
        ids = [self.id(t) for t in tokenize(text)][:max_tokens] if text else []
        return ids or [EMPTY]

    def save(self, path) -> None:
        lines = [f"{tok}\t{i}\t{self.counts[i]}" for i, tok in enumerate(self.itos)]
        Path(path).write_text(f"#min_count\t{self.min_count}\n" + "\n".join(lines) + "\n", "utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens, counts, min_count = [], {}, 1
        for line in Path(path).read_text("utf-8").splitlines():
            if line.startswith("#min_count"):
                min_count = int(line.split("\t")[1])
                continue
            if not line:
                continue
            tok, idx, count = line.rsplit("\t", 2)
            if int(idx) != len(tokens):
                raise ValidationError("vocabulary file ids must be dense and ordered")
            tokens.append(tok)
            counts[tok] = int(count)
        vocab = cls(tokens[len(RESERVED):], counts, min_count)
        vocab.counts[: len(RESERVED)] = [counts.get(t, 0) for t in RESERVED]
        return vocab

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos and self.counts == other.counts


class AppVocabulary(Vocabulary):
    """Whole app ids as tokens (no splitting); unseen apps map to UNK."""

    @classmethod
    def from_apps(cls, apps: Iterable[str], min_count: int = 1) -> "AppVocabulary":
        return cls.build(apps, min_count)

    def encode_app(self, app_id: str) -> int:
        return self.id(app_id)


@dataclass(frozen=True)
class FeatureFlags:
    use_text: bool = True
    use_type: bool = True
    use_position: bool = True
    use_time: bool = True
    use_app: bool = True
    use_screen_encoder: bool = True

    def __post_init__(self):
        if not (self.use_text or self.use_type):
            raise ConfigError("at least one of use_text / use_type must be enabled")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScreenFeatures:
    tokens: np.ndarray  # [n, max_tokens] word ids, PAD padded
    types: np.ndarray  # [n]
    bins: np.ndarray  # [n, 4]

    def __len__(self) -> int:
        return len(self.types)


def featurize_elements(elements, screen_w, screen_h, vocab: Vocabulary, max_tokens: int = 8) -> ScreenFeatures:
    n = len(elements)
    tokens = np.zeros((n, max_tokens), dtype=np.int64)
    types = np.zeros(n, dtype=np.int64)
    bins = np.zeros((n, 4), dtype=np.int64)
    for j, e in enumerate(elements):
        ids = vocab.encode(e.text, max_tokens)
        tokens[j, : len(ids)] = ids
        types[j] = e.type_id
        bins[j] = position_bins(e.bbox, screen_w, screen_h)
    return ScreenFeatures(tokens, types, bins)


def featurize_screen(screen: Screen, vocab: Vocabulary, max_tokens: int = 8) -> ScreenFeatures:
    return featurize_elements(screen.elements, screen.width, screen.height, vocab, max_tokens)


class ElementEmbedder(nn.Module):
    """Element embedding = mean word vector + type vector + four coordinate vectors."""

    def __init__(self, n_words: int, d_model: int, n_types: int = len(ELEMENT_TYPES)):
        super().__init__()
        self.words = nn.Embedding(n_words, d_model)
        self.types = nn.Embedding(n_types, d_model)
        self.coords = nn.ModuleList(nn.Embedding(N_POSITION_BINS, d_model) for _ in range(4))

    def text_embedding(self, tokens: torch.Tensor) -> torch.Tensor:
        vecs = embedding_lookup(self.words.weight, tokens)
        valid = (tokens != PAD).to(vecs.dtype).unsqueeze(-1)
        return (vecs * valid).sum(-2) / valid.sum(-2).clamp_min(1.0)

    def content_embedding(self, tokens, types, flags: FeatureFlags) -> torch.Tensor:
        out = 0
        if flags.use_text:
            out = out + self.text_embedding(tokens)
        if flags.use_type:
            out = out + embedding_lookup(self.types.weight, types)
        return out

    def positional_embedding(self, bins: torch.Tensor) -> torch.Tensor:
        return sum(embedding_lookup(table.weight, bins[..., k]) for k, table in enumerate(self.coords))

    def forward(self, tokens, types, bins, flags: FeatureFlags) -> torch.Tensor:
        out = self.content_embedding(tokens, types, flags)
        if flags.use_position:
            out = out + self.positional_embedding(bins)
        return out


class ContextEmbedder(nn.Module):
    """Hour, day and app embeddings concatenated; disabled parts are zero blocks."""

    def __init__(self, n_apps: int, width: int = 32):
        super().__init__()
        self.width = width
        self.hour = nn.Embedding(24, width)
        self.day = nn.Embedding(7, width)
        self.app = nn.Embedding(n_apps, width)

    @property
    def out_width(self) -> int:
        return 3 * self.width

    def forward(self, hour, day, app, flags: FeatureFlags) -> torch.Tensor:
        parts = []
        for table, ids, on in ((self.hour, hour, flags.use_time), (self.day, day, flags.use_time), (self.app, app, flags.use_app)):
            vec = embedding_lookup(table.weight, ids)
            parts.append(vec if on else torch.zeros_like(vec))
        return torch.cat(parts, dim=-1)


class ClickEventEmbedder(nn.Module):
    """[clicked latent; hour; day; app] projected to d."""

    def __init__(self, d_model: int, context_width: int):
        super().__init__()
        self.proj = nn.Linear(d_model + context_width, d_model)

    def forward(self, h_clicked: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        return self.proj(torch.cat([h_clicked, context], dim=-1))


class ElapsedEmbedding(nn.Module):
    """Embedding of floor(ln(elapsed seconds)), clamped to ``max_bucket``."""

    def __init__(self, d_model: int, max_bucket: int = DEFAULT_MAX_BUCKET):
        super().__init__()
        self.max_bucket = max_bucket
        self.table = nn.Embedding(max_bucket + 1, d_model)

    def buckets(self, v_seconds) -> torch.Tensor:
        return torch.as_tensor([elapsed_bucket(float(v), self.max_bucket) for v in np.ravel(v_seconds)]).reshape(
            np.shape(v_seconds)
        )

    def forward(self, buckets: torch.Tensor) -> torch.Tensor:
        return embedding_lookup(self.table.weight, buckets)


def element_embedding_oracle(elem: UiElement, screen_w, screen_h, vocab, embedder: ElementEmbedder, flags) -> torch.Tensor:
    """Single-element reference path (used by tests and sanity checks)."""
    feats = featurize_elements([elem], screen_w, screen_h, vocab)
    return embedder(
        torch.as_tensor(feats.tokens), torch.as_tensor(feats.types), torch.as_tensor(feats.bins), flags
    )[0]
