from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from ..exceptions import ShapeMismatchError

INIT_STD = 0.02


def init_weights(module: nn.Module) -> None:
    """Truncated-normal(0.02) for linear and embedding weights; zero biases; unit layer-norm gains."""
    for m in module.modules():
        if isinstance(m, (nn.Linear, nn.Embedding)):
            nn.init.trunc_normal_(m.weight, std=INIT_STD, a=-2 * INIT_STD, b=2 * INIT_STD)
            if isinstance(m, nn.Linear) and m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.LayerNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention over ``heads`` subspaces plus an output projection.

    ``query`` is ``[..., q, d]``, ``memory`` is ``[..., m, d]`` and ``mask`` is a
    boolean ``[..., m]`` marking valid memory slots. Every query must see at
    least one valid slot.
    """

    def __init__(self, d_model: int, heads: int, dropout: float = 0.0):
        super().__init__()
        if d_model % heads:
            raise ShapeMismatchError(f"d_model={d_model} is not divisible by heads={heads}")
        self.d_model = d_model
        self.heads = heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        *lead, n, _ = x.shape
        return x.reshape(*lead, n, self.heads, self.d_model // self.heads).transpose(-2, -3)

    def forward(self, query: torch.Tensor, memory: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        if query.shape[-1] != self.d_model or memory.shape[-1] != self.d_model:
            raise ShapeMismatchError("attention inputs must have width d_model")
        if mask is not None and mask.shape != memory.shape[:-1]:
            raise ShapeMismatchError(f"mask shape {tuple(mask.shape)} does not match memory {tuple(memory.shape)}")
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(memory))
        v = self._split(self.v_proj(memory))
        scores = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1])
        if mask is not None:
            scores = scores.masked_fill(~mask[..., None, None, :], float("-inf"))
        weights = self.dropout(torch.softmax(scores, dim=-1))
        out = (weights @ v).transpose(-2, -3)
        return self.out_proj(out.reshape(*out.shape[:-2], self.d_model))


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_inner: int, dropout: float = 0.0):
        super().__init__()
        self.inner = nn.Linear(d_model, d_inner)
        self.outer = nn.Linear(d_inner, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.outer(self.dropout(F.gelu(self.inner(x))))


class EncoderLayer(nn.Module):
    """Post-norm block: x = LN(x + attn(x)); x = LN(x + ffn(x))."""

    def __init__(self, d_model: int, heads: int, d_inner: int, dropout: float = 0.0):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, heads, dropout)
        self.ffn = FeedForward(d_model, d_inner, dropout)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask=None):
        x = self.norm1(x + self.dropout(self.attn(x, x, mask)))
        return self.norm2(x + self.dropout(self.ffn(x)))


class TransformerEncoder(nn.Module):
    """Stack of encoder layers. No positional signal is added here."""

    def __init__(self, d_model: int, layers: int, heads: int, d_inner: int | None = None, dropout: float = 0.0):
        super().__init__()
        d_inner = 4 * d_model if d_inner is None else d_inner
        self.layers = nn.ModuleList(EncoderLayer(d_model, heads, d_inner, dropout) for _ in range(layers))

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        if x.shape[-2] < 1:
            raise ShapeMismatchError("encoder input needs at least one row")
        for layer in self.layers:
            x = layer(x, mask)
        return x
