"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The numba path is used unless ``PAM_DISABLE_NUMBA`` is set to a truthy
value or numba is not importable. :func:`set_backend` switches at run
time (the benchmark and the backend-equivalence tests use it). Both
paths must agree to rounding; ``tests/test_backends.py`` enforces it.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("PAM_DISABLE_NUMBA", "").strip().lower()
_backend = "numpy" if (numba is None or _FLAG in ("1", "true", "yes", "on")) else "numba"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not installed")
    _backend = name


if numba is not None:
    njit = numba.njit(cache=True, nogil=True)
else:  # pragma: no cover
    def njit(fn):
        return fn


# ---------------------------------------------------------------------------
# barycentric projection: rows[i, k] = sum_q wq[i, q] * L_k(sq[i, q])

@njit
def _bary_project_nb(wq, sq, nodes, bary):
    m, nq = wq.shape
    n = nodes.shape[0]
    out = np.zeros((m, n))
    tmp = np.empty(n)
    for i in range(m):
        for q in range(nq):
            s = sq[i, q]
            w = wq[i, q]
            if w == 0.0:
                continue
            hit = -1
            den = 0.0
            for k in range(n):
                d = s - nodes[k]
                if d == 0.0:
                    hit = k
                    break
                tmp[k] = bary[k] / d
                den += tmp[k]
            if hit >= 0:
                out[i, hit] += w
                continue
            scale = w / den
            for k in range(n):
                out[i, k] += tmp[k] * scale
    return out


def _bary_project_np(wq, sq, nodes, bary, chunk=16):
    m, nq = wq.shape
    n = nodes.shape[0]
    out = np.zeros((m, n))
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        d = sq[lo:hi, :, None] - nodes[None, None, :]
        exact = d == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t = bary / d
        t[exact.any(axis=2)] = 0.0
        t = np.where(exact, 1.0, t)
        den = t.sum(axis=2, keepdims=True)
        lag = t / den
        out[lo:hi] = np.einsum("iq,iqk->ik", wq[lo:hi], lag)
    return out


def bary_project(wq, sq, nodes, bary):
    """Integrate the barycentric interpolant basis against weights ``wq``.

    ``wq`` and ``sq`` are ``(targets, quad_nodes)``; returns
    ``(targets, len(nodes))``.
    """
    args = (np.ascontiguousarray(wq, dtype=float), np.ascontiguousarray(sq, dtype=float),
            np.ascontiguousarray(nodes, dtype=float), np.ascontiguousarray(bary, dtype=float))
    if _backend == "numba":
        return _bary_project_nb(*args)
    return _bary_project_np(*args)


# ---------------------------------------------------------------------------
# angular spectral sum for the second chaos:
#   out[p] = sum_i w[i] * (qplus**-alpha + qminus**-alpha)
#   q(+/-) = a1*(1-u) + a2*u + b*(1 +/- 2 sqrt(u(1-u)))

@njit
def _angular_sum_nb(a1, a2, b, one_m_u, u, plus, minus, w, alpha):
    n = a1.shape[0]
    out = np.empty(n)
    for p in range(n):
        acc = 0.0
        x1 = a1[p]
        x2 = a2[p]
        y = b[p]
        for i in range(w.shape[0]):
            base = x1 * one_m_u[i] + x2 * u[i]
            qp = base + y * plus[i]
            qm = base + y * minus[i]
            acc += w[i] * (qp ** (-alpha) + qm ** (-alpha))
        out[p] = acc
    return out


def _angular_sum_np(a1, a2, b, one_m_u, u, plus, minus, w, alpha, chunk=4096):
    n = a1.shape[0]
    out = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        base = a1[lo:hi, None] * one_m_u[None, :] + a2[lo:hi, None] * u[None, :]
        qp = base + b[lo:hi, None] * plus[None, :]
        qm = base + b[lo:hi, None] * minus[None, :]
        out[lo:hi] = (qp ** (-alpha) + qm ** (-alpha)) @ w
    return out


def angular_sum(a1, a2, b, rule, alpha):
    """Evaluate the angular rule ``(u, plus, minus, w)`` at many ``(a1, a2, b)``."""
    u, plus, minus, w = rule
    args = tuple(np.ascontiguousarray(x, dtype=float)
                 for x in (a1, a2, b, 1.0 - u, u, plus, minus, w))
    if _backend == "numba":
        return _angular_sum_nb(*args, float(alpha))
    return _angular_sum_np(*args, float(alpha))


# ---------------------------------------------------------------------------
# causal cell scan for the second-chaos time coefficients:
#   S[m, c, j] = sum_{c1 < c} V[c1, j] * int_{cell c1} exp(-A_m (l_c - s)) ds

@njit
def _causal_scan_nb(V, decay, inject):
    nc, nj = V.shape
    nm = decay.shape[0]
    out = np.zeros((nm, nc, nj))
    for m in range(nm):
        for c in range(1, nc):
            for j in range(nj):
                out[m, c, j] = decay[m] * out[m, c - 1, j] + inject[m] * V[c - 1, j]
    return out


def _causal_scan_np(V, decay, inject):
    nc, nj = V.shape
    out = np.zeros((decay.shape[0], nc, nj))
    for c in range(1, nc):
        out[:, c, :] = decay[:, None] * out[:, c - 1, :] + inject[:, None] * V[c - 1][None, :]
    return out


def causal_scan(V, decay, inject):
    """Accumulate exponentially damped cell contributions, one row per rate."""
    args = (np.ascontiguousarray(V, dtype=float), np.ascontiguousarray(decay, dtype=float),
            np.ascontiguousarray(inject, dtype=float))
    if _backend == "numba":
        return _causal_scan_nb(*args)
    return _causal_scan_np(*args)
