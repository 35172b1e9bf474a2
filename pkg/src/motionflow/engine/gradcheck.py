"""Finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NonDeterministic
from .tensor import Tensor, no_grad


def grad_check(f: Callable[[], Tensor], xs: Tensor | Sequence[Tensor],
               h: float = 1e-4, coords: int | None = None,
               seed: int = 0) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    f is a zero-argument closure returning a scalar Tensor; it must read the
    current .data of every tensor in xs on each call. With coords=None every
    element is checked; otherwise `coords` elements per tensor are sampled
    with the given seed. Error per element is |g_ad - g_fd| / (|g_fd| + 1e-8).
    """
    if isinstance(xs, Tensor):
        xs = [xs]
    out1 = f()
    with no_grad():
        out2 = f()
    if not np.array_equal(out1.data, out2.data):
        raise NonDeterministic("two forward passes disagree")

    saved = [x.grad for x in xs]
    for x in xs:
        x.grad = None
    out1.backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in xs]
    for x, g in zip(xs, saved):
        x.grad = g

    rng = np.random.default_rng(seed)
    worst = 0.0
    for x, g_ad in zip(xs, analytic):
        flat = x.data.reshape(-1)
        n = flat.size
        if coords is None or coords >= n:
            idxs = np.arange(n)
        else:
            idxs = rng.choice(n, size=coords, replace=False)
        for i in idxs:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                f_plus = float(f().data)
                flat[i] = orig - h
                f_minus = float(f().data)
            flat[i] = orig
            g_fd = (f_plus - f_minus) / (2.0 * h)
            err = abs(float(g_ad.reshape(-1)[i]) - g_fd) / (abs(g_fd) + 1e-8)
            worst = max(worst, err)
    return worst
