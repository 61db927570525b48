"""Reverse-mode gradients against central finite differences."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch


@dataclass
class GradCheckResult:
    max_rel_error: float
    coords: list
    analytic: np.ndarray
    numeric: np.ndarray


def relative_error(a: np.ndarray, n: np.ndarray, floor: float = 1e-7) -> np.ndarray:
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradient_check(
    loss_fn: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    epsilon: float = 1e-6,
    n_coords: int = 200,
    seed: int = 0,
    coords: list | None = None,
    floor: float = 1e-7,
) -> GradCheckResult:
    """Compare autograd to (f(x+e) - f(x-e)) / 2e on sampled coordinates.

    Coordinates are drawn uniformly over all entries of ``params``; pass
    ``coords`` as (tensor index, flat index) pairs to pin them. ``floor``
    bounds the denominator of the relative error for near-zero gradients.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-6, 1e-3]")
    params = list(params)
    for p in params:
        if p.dtype != torch.float64:
            raise TypeError("gradient checks need float64 tensors")
    if coords is None:
        sizes = np.array([p.numel() for p in params])
        rng = np.random.default_rng(seed)
        flat = rng.choice(sizes.sum(), size=min(n_coords, int(sizes.sum())), replace=False)
        bounds = np.cumsum(sizes)
        coords = []
        for f in sorted(flat):
            t = int(np.searchsorted(bounds, f, side="right"))
            coords.append((t, int(f - (bounds[t - 1] if t else 0))))

    frozen = [p for p in params if not p.requires_grad]
    for p in frozen:
        p.requires_grad_(True)
    try:
        grads = torch.autograd.grad(loss_fn(), params, allow_unused=True)
    finally:
        for p in frozen:
            p.requires_grad_(False)
    analytic = np.array([0.0 if grads[t] is None else float(grads[t].reshape(-1)[i]) for t, i in coords])

    numeric = np.empty(len(coords))
    with torch.no_grad():
        for k, (t, i) in enumerate(coords):
            view = params[t].view(-1)
            orig = float(view[i])
            view[i] = orig + epsilon
            up = float(loss_fn())
            view[i] = orig - epsilon
            down = float(loss_fn())
            view[i] = orig
            numeric[k] = (up - down) / (2 * epsilon)
    err = relative_error(analytic, numeric, floor)
    return GradCheckResult(float(err.max()) if len(err) else 0.0, coords, analytic, numeric)
