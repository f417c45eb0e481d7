"""Thin wrappers over QUADPACK that turn silent failures into exceptions."""
from __future__ import annotations

import warnings

import numpy as np
from scipy import integrate

from .errors import QuadratureError


def quad(f, a, b, *, epsabs=1e-13, epsrel=1e-10, limit=400, points=None,
         weight=None, wvar=None):
    """Adaptive 1-D quadrature; raises :class:`QuadratureError` on ``ier > 0``.

    Breakpoints outside ``(a, b)`` are dropped so callers can pass a
    generic list.
    """
    if b <= a:
        return 0.0, 0.0
    kwargs = dict(epsabs=epsabs, epsrel=epsrel, limit=limit)
    if weight is not None:
        kwargs.update(weight=weight, wvar=wvar)
    elif points is not None:
        pts = sorted({float(p) for p in points if a < p < b})
        if pts and np.isfinite(b):
            kwargs["points"] = pts
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, **kwargs)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature on [{a}, {b}] failed: {exc}") from None
    if not np.isfinite(val):
        raise QuadratureError(f"quadrature on [{a}, {b}] returned {val}")
    return val, err


def quad_pieces(f, edges, **kwargs):
    """Sum of :func:`quad` over consecutive ``edges``; returns (value, error)."""
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = quad(f, lo, hi, **kwargs)
        total += v
        err += e
    return total, err


def geometric_edges(lo, hi, first, ratio=4.0):
    """Edges ``lo, lo+first, lo+first*ratio, ...`` capped at ``hi``.

    Used to resolve integrands whose structure lives on a small scale
    ``first`` near ``lo``.
    """
    edges = [lo]
    step = first
    while lo + step < hi:
        edges.append(lo + step)
        step *= ratio
    edges.append(hi)
    return edges
