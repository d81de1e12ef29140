"""Central-difference gradient checking for scalar-valued functions of tensors."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np
import torch


def central_difference(fn: Callable[[], torch.Tensor], tensor: torch.Tensor, eps: float = 1e-6,
                       indices: Iterable[int] | None = None) -> np.ndarray:
    """Numerical d fn / d tensor at the flat ``indices`` (all entries by default)."""
    flat = tensor.data.view(-1)
    idx = range(flat.numel()) if indices is None else list(indices)
    out = np.zeros(flat.numel())
    with torch.no_grad():
        for i in idx:
            orig = flat[i].item()
            flat[i] = orig + eps
            up = float(fn())
            flat[i] = orig - eps
            down = float(fn())
            flat[i] = orig
            out[i] = (up - down) / (2 * eps)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """max |a - n| / max(max|a|, max|n|, floor).

    The error is relative to the gradient's scale; ``floor`` keeps gradients that
    are structurally zero (e.g. attention key biases) from dividing by noise.
    """
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(fn: Callable[[], torch.Tensor], params: dict[str, torch.Tensor], eps: float = 1e-6,
                    max_entries: int | None = 64, seed: int = 0) -> dict[str, float]:
    """Relative error per tensor between autograd and central differences.

    At most ``max_entries`` randomly chosen entries are probed per tensor.
    """
    for p in params.values():
        p.grad = None
    loss = fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    errors = {}
    for name, p in params.items():
        n = p.numel()
        if max_entries is None or n <= max_entries:
            idx = np.arange(n)
        else:
            idx = np.sort(rng.choice(n, size=max_entries, replace=False))
        grad = torch.zeros_like(p) if p.grad is None else p.grad
        analytic = grad.detach().reshape(-1).cpu().numpy()[idx]
        numeric = central_difference(fn, p, eps, idx)[idx]
        errors[name] = relative_error(analytic, numeric)
    return errors
