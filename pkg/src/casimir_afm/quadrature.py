"""Batched adaptive Gauss-Legendre quadrature.

Many independent 1-D integrals (one per Matsubara index, say) are refined
together: every panel of every integral is evaluated in one vectorised call
to the integrand, so Python overhead does not scale with the batch size.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError

_RULES = {}


def _rule(order):
    if order not in _RULES:
        x, w = np.polynomial.legendre.leggauss(order)
        _RULES[order] = (x, w)
    return _RULES[order]


def _gauss(f, owner, a, b, order):
    x, w = _rule(order)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    vals = f(owner, nodes)
    return half * (vals @ w)


def integrate_batch(f, a, b, breakpoints=None, rtol=1e-9, atol=0.0, order=12, max_rounds=48):
    """Integrate ``f`` over ``[a[i], b[i]]`` for every i in the batch.

    ``f(owner, u)`` receives an integer array ``owner`` of shape (P,) naming
    the integral each row belongs to and nodes ``u`` of shape (P, order); it
    returns integrand values of the same shape.

    ``breakpoints`` are offsets from ``a`` used for the initial panelling
    (clipped to each interval).  A panel is accepted when the difference
    between its one-panel and two-half-panel estimates falls below its
    share of ``rtol * |I| + atol``.

    Returns the array of integrals; raises ConvergenceError if panels remain
    unresolved after ``max_rounds`` bisections.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    if breakpoints is None:
        breakpoints = [0.0]
    offsets = np.unique(np.concatenate([[0.0], np.asarray(breakpoints, dtype=float)]))

    edges = a[:, None] + offsets[None, :]
    edges = np.minimum(edges, b[:, None])
    edges = np.concatenate([edges, b[:, None]], axis=1)
    lo = edges[:, :-1].ravel()
    hi = edges[:, 1:].ravel()
    owner = np.repeat(np.arange(n), offsets.size)
    keep = hi > lo
    lo, hi, owner = lo[keep], hi[keep], owner[keep]

    width_total = np.where(b > a, b - a, 1.0)
    coarse = _gauss(f, owner, lo, hi, order)
    result = np.zeros(n)
    estimate = np.zeros(n)
    np.add.at(estimate, owner, coarse)

    for _ in range(max_rounds):
        if lo.size == 0:
            return result
        mid = 0.5 * (lo + hi)
        left = _gauss(f, owner, lo, mid, order)
        right = _gauss(f, owner, mid, hi, order)
        fine = left + right
        err = np.abs(fine - coarse)
        tol = (rtol * np.abs(estimate[owner]) + atol) * (hi - lo) / width_total[owner]
        done = (err <= tol) | (err <= 64 * np.finfo(float).eps * np.abs(fine))
        np.add.at(result, owner[done], fine[done])
        # refine the global estimate with the better local values
        np.add.at(estimate, owner, fine - coarse)

        todo = ~done
        lo_t, mid_t, hi_t, own_t = lo[todo], mid[todo], hi[todo], owner[todo]
        lo = np.concatenate([lo_t, mid_t])
        hi = np.concatenate([mid_t, hi_t])
        owner = np.concatenate([own_t, own_t])
        coarse = np.concatenate([left[todo], right[todo]])
        order_idx = np.lexsort((lo, owner))
        lo, hi, owner, coarse = lo[order_idx], hi[order_idx], owner[order_idx], coarse[order_idx]

    if lo.size == 0:
        return result
    raise ConvergenceError(
        "adaptive quadrature did not converge",
        diagnostics={
            "unresolved_panels": int(lo.size),
            "integrals_affected": np.unique(owner).tolist()[:20],
            "smallest_panel": float(np.min(hi - lo)),
        },
    )
