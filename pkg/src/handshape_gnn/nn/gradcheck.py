"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


class GradientCheckError(RuntimeError):
    """The function or its gradients produced non-finite values."""


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-6,
    max_coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients of a scalar function against central differences.

    `f` must be deterministic (no fresh dropout masks between calls) and close
    over `params`. Returns the maximum over checked coordinates of
    |analytic - numerical| / max(1, |analytic|). By default every coordinate
    of every parameter is checked; `max_coords_per_param` limits each
    parameter to a seeded random subset, which keeps large models affordable.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    if max_coords_per_param is not None and rng is None:
        raise ValueError("coordinate subsampling requires an rng")

    for p in params:
        p.zero_grad()
    out = f()
    if out.data.size != 1:
        raise ValueError(f"grad_check requires a scalar function, got shape {out.shape}")
    if not np.isfinite(out.data):
        raise GradientCheckError("function value is non-finite")
    out.backward()
    analytic = []
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise GradientCheckError("analytic gradient is non-finite")
        analytic.append(g.copy())

    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        count = flat.size
        if max_coords_per_param is not None and count > max_coords_per_param:
            coords = rng.choice(count, size=max_coords_per_param, replace=False)
        else:
            coords = range(count)
        ga = g.reshape(-1)
        for idx in coords:
            saved = flat[idx]
            flat[idx] = saved + eps
            hi = float(f().data)
            flat[idx] = saved - eps
            lo = float(f().data)
            flat[idx] = saved
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise GradientCheckError(f"non-finite value while perturbing coordinate {idx}")
            numeric = (hi - lo) / (2.0 * eps)
            err = abs(ga[idx] - numeric) / max(1.0, abs(ga[idx]))
            if err > worst:
                worst = err
    return worst
