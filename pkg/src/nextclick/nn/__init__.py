"""Neural building blocks on top of torch autograd."""

from .checkpoint import load_checkpoint, save_checkpoint
from .functional import embedding_lookup, masked_softmax, softmax_cross_entropy
from .layers import EncoderLayer, FeedForward, MultiHeadAttention, TransformerEncoder, init_weights
from .optim import Adam, WarmupExponentialDecay

__all__ = [
    "Adam",
    "EncoderLayer",
    "FeedForward",
    "MultiHeadAttention",
    "TransformerEncoder",
    "WarmupExponentialDecay",
    "embedding_lookup",
    "init_weights",
    "load_checkpoint",
    "masked_softmax",
    "save_checkpoint",
    "softmax_cross_entropy",
]
