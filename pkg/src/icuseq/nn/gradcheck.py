"""Finite-difference verification of tape gradients.

Run in float64: central differences have O(eps^2) truncation error, so a
correct backward rule lands many orders of magnitude below the tolerances
used in the tests.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad


def grad_check(scalar_fn, params: list[Tensor], eps: float = 1e-5) -> float:
    """Compare tape gradients of ``scalar_fn()`` against central differences.

    ``scalar_fn`` must be a deterministic closure over ``params`` returning a
    scalar Tensor. Returns the max elementwise relative error, with the
    denominator floored at 1 so near-zero gradients are compared absolutely.
    """
    for p in params:
        p.grad = None
    out = scalar_fn()
    out.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    max_err = 0.0
    with no_grad():
        for p, g in zip(params, analytic):
            flat = p.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = float(scalar_fn().data)
                flat[i] = orig - eps
                f_minus = float(scalar_fn().data)
                flat[i] = orig
                fd = (f_plus - f_minus) / (2.0 * eps)
                err = abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1.0)
                if err > max_err:
                    max_err = err
    for p in params:
        p.grad = None
    return max_err
