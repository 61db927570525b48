"""Feasibility masks on logits and the masked cross-entropy loss."""
from __future__ import annotations

from typing import Iterable

import torch
from torch import Tensor

# stands in for -inf before the softmax; probabilities of masked labels are then clamped to exactly 0
NEG = -1e9


class MaskDesyncError(ValueError):
    """A training target is not admitted by its step's mask."""


def admissible_vector(mask: Iterable[int], accepting: bool, n_logits: int, eos: bool = True) -> Tensor:
    """Boolean row over labels + EOS (last index). EOS is admitted iff the state accepts.

    With ``eos=False`` the row covers labels only and ``accepting`` is ignored.
    """
    row = torch.zeros(n_logits, dtype=torch.bool)
    idx = list(mask)
    if idx:
        row[idx] = True
    if eos:
        row[n_logits - 1] = accepting
    if not row.any():
        raise ValueError("empty admissible set: no label and no termination allowed")
    return row


def apply_feasibility_mask(logits: Tensor, mask: Iterable[int], accepting: bool, eos: bool = True) -> Tensor:
    """Masked logits for one step. An accepting state with an empty mask admits only EOS."""
    admitted = admissible_vector(mask, accepting, logits.shape[-1], eos)
    return torch.where(admitted, logits, torch.full_like(logits, NEG))


def masked_log_softmax(logits: Tensor, admitted: Tensor) -> Tensor:
    return torch.log_softmax(torch.where(admitted, logits, torch.full_like(logits, NEG)), dim=-1)


def masked_softmax(logits: Tensor, admitted: Tensor) -> Tensor:
    probs = torch.softmax(torch.where(admitted, logits, torch.full_like(logits, NEG)), dim=-1)
    return torch.where(admitted, probs, torch.zeros_like(probs))


def masked_cross_entropy(logits: Tensor, targets: Tensor, masks: Tensor | None, use_mask: bool = True) -> Tensor:
    """Sum over steps of -log p(target), averaged over the batch.

    ``logits`` is (T, V) or (B, T, V); ``targets`` holds logit indices with -1
    at padded steps. Without ``use_mask`` the softmax runs over the full
    output vocabulary.
    """
    if logits.dim() == 2:
        logits, targets = logits[None], targets[None]
        masks = None if masks is None else masks[None]
    valid = targets >= 0
    safe = targets.clamp(min=0)
    if use_mask:
        if masks is None:
            raise ValueError("masked loss needs per-step masks")
        hit = masks.gather(-1, safe[..., None]).squeeze(-1)
        if bool((valid & ~hit).any()):
            b, t = torch.nonzero(valid & ~hit)[0].tolist()
            raise MaskDesyncError(f"target {int(targets[b, t])} at step {t} of row {b} is outside its mask")
        logp = masked_log_softmax(logits, masks)
    else:
        logp = torch.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, safe[..., None]).squeeze(-1)
    nll = torch.where(valid, nll, torch.zeros_like(nll))
    return nll.sum() / logits.shape[0]
