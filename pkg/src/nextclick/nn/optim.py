from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class WarmupExponentialDecay:
    """lr(step) = base_lr * min(step / warmup, decay ** ((step - warmup) / decay_steps))."""

    base_lr: float = 1e-3
    warmup: int = 1000
    decay: float = 0.98
    decay_steps: int = 1000

    def __call__(self, step: int) -> float:
        if step < 1:
            raise ValueError("steps are counted from 1")
        decayed = self.decay ** ((step - self.warmup) / self.decay_steps)
        if self.warmup <= 0:
            return self.base_lr * decayed
        return self.base_lr * min(step / self.warmup, decayed)


class Adam:
    """Adam over named parameters; moment buffers are exposed for checkpointing."""

    def __init__(self, named_params, schedule=WarmupExponentialDecay(), betas=(0.9, 0.999), eps=1e-8):
        self.params: dict[str, torch.nn.Parameter] = dict(named_params)
        self.schedule = schedule
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.exp_avg = {n: torch.zeros_like(p) for n, p in self.params.items()}
        self.exp_avg_sq = {n: torch.zeros_like(p) for n, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    @torch.no_grad()
    def step(self) -> float:
        self.step_count += 1
        t = self.step_count
        lr = self.schedule(t)
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.exp_avg[name], self.exp_avg_sq[name]
            m.mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            denom = (v / bc2).sqrt_().add_(self.eps)
            p.addcdiv_(m, denom, value=-lr / bc1)
        return lr
