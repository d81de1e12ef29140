import torch
import torch.nn.functional as F

from ..exceptions import IndexOutOfRangeError, TargetMaskedError


def embedding_lookup(table: torch.Tensor, ids) -> torch.Tensor:
    """Row gather; the backward pass scatter-adds into the table rows."""
    ids = torch.as_tensor(ids, dtype=torch.long)
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= table.shape[0]):
        raise IndexOutOfRangeError(f"ids must lie in [0, {table.shape[0]})")
    return F.embedding(ids, table)


def masked_log_softmax(logits: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    if mask is not None:
        logits = logits.masked_fill(~mask, float("-inf"))
    return torch.log_softmax(logits, dim=-1)


def masked_softmax(logits: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    return masked_log_softmax(logits, mask).exp()


def softmax_cross_entropy(
    logits: torch.Tensor, target, mask: torch.Tensor | None = None, reduction: str = "mean"
) -> torch.Tensor:
    """-log p(target) under a softmax restricted to the valid (mask=True) slots.

    ``logits`` is ``[..., n]``; ``target`` has the leading shape.
    """
    target = torch.as_tensor(target, dtype=torch.long, device=logits.device)
    if mask is not None:
        hit = torch.gather(mask, -1, target.unsqueeze(-1)).squeeze(-1)
        if not bool(hit.all()):
            raise TargetMaskedError("target slot is masked out")
    logp = masked_log_softmax(logits, mask)
    nll = -torch.gather(logp, -1, target.unsqueeze(-1)).squeeze(-1)
    if reduction == "mean":
        return nll.mean()
    if reduction == "sum":
        return nll.sum()
    return nll
