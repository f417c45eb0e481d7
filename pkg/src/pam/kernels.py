"""The kernel chain k, h_n and the generating series H, H-tilde.

``h_n(t) = int_0^t h_{n-1}(s) k(t - s) ds`` is evaluated by product
integration in the graded variable ``s = t**(1 - a)``, with ``a`` the
power of the ``k`` singularity at 0. In that variable every ``h_n`` is
smooth (a monomial for the Riesz family), so a single Chebyshev
interpolant on ``[0, T**(1-a)]`` carries the whole chain. The weakly
singular factor and the endpoint power introduced by the grading are
absorbed into a Gauss-Jacobi rule, which makes the convolution exact up
to rounding for polynomial ``h_{n-1}``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _kernels
from ._quadrature import quad
from .errors import ConfigError, SeriesTruncationError
from .spectral_models import (DEFAULT_QUAD, INF, QuadratureSpec, SpatialSpectralModel,
                              radial_integral)

N_MAX_LIMIT = 200


def k_eval(model: SpatialSpectralModel, t):
    """``k(t) = int exp(-t |xi|^2) mu(dxi)`` in closed form, ``t > 0``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ConfigError("k(t) is defined for t > 0 only")
    out = model.k(t_arr)
    return float(out) if out.ndim == 0 else out


def k_quadrature(model: SpatialSpectralModel, t: float, quad_spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Same quantity as :func:`k_eval`, by radial quadrature."""
    if t <= 0:
        raise ConfigError("k(t) is defined for t > 0 only")
    return radial_integral(model, lambda r: math.exp(-t * r * r), quad_spec)


# ---------------------------------------------------------------------------
# graded Chebyshev machinery

def _cheb_nodes(n, upper):
    x = np.cos(np.pi * np.arange(n) / (n - 1))[::-1]
    nodes = 0.5 * upper * (1.0 + x)
    bary = (-1.0) ** np.arange(n)
    bary[0] *= 0.5
    bary[-1] *= 0.5
    return nodes, bary


@dataclass(frozen=True)
class _ConvolutionRule:
    model: SpatialSpectralModel
    nodes: np.ndarray
    bary: np.ndarray
    grading: float
    x: np.ndarray
    w: np.ndarray

    @classmethod
    def build(cls, model, horizon, n_nodes, n_quad):
        a = model.k_exponent
        grading = 1.0 / (1.0 - a)
        nodes, bary = _cheb_nodes(n_nodes, horizon ** (1.0 - a))
        x, w = special.roots_jacobi(n_quad, -a, grading - 1.0)
        return cls(model, nodes, bary, grading, x, w)

    def rows(self, s_targets):
        """Weights mapping node values of h_{n-1} to h_n at graded targets."""
        a = self.model.k_exponent
        q = self.grading
        s_t = np.asarray(s_targets, dtype=float)[:, None]
        x = self.x[None, :]
        one_minus_r = 0.5 * (1.0 - x)
        ratio = -np.expm1(q * np.log1p(-one_minus_r)) / one_minus_r
        u = s_t ** q * ratio * one_minus_r
        with np.errstate(divide="ignore", invalid="ignore"):
            kreg = self.model.k_regular(np.where(u > 0, u, 1.0))
        wq = q * 2.0 ** (a - q) * s_t * self.w[None, :] * kreg * ratio ** (-a)
        wq = np.where(s_t > 0, wq, 0.0)
        sq = s_t * 0.5 * (1.0 + x) + np.zeros_like(wq)
        return _kernels.bary_project(wq, sq, self.nodes, self.bary)


@dataclass(frozen=True)
class KernelTable:
    """``k`` and ``h_0..h_N`` on the uniform grid ``t_i = i T / n_grid``.

    Immutable once built. :meth:`h_at` evaluates the chain at any
    ``0 <= t <= T`` to the same accuracy as the grid values.
    """

    model: SpatialSpectralModel
    horizon: float
    n_max: int
    grid: np.ndarray
    k_values: np.ndarray
    h_values: np.ndarray
    quad: QuadratureSpec
    _rule: _ConvolutionRule = field(repr=False)
    _h_nodes: np.ndarray = field(repr=False)

    @property
    def n_grid(self) -> int:
        return self.grid.shape[0]

    def h_at(self, t: float) -> np.ndarray:
        """``[h_0(t), ..., h_N(t)]``."""
        if not 0.0 <= t <= self.horizon * (1 + 1e-12):
            raise ConfigError(f"t={t} outside [0, {self.horizon}]")
        out = np.empty(self.n_max + 1)
        out[0] = 1.0
        if t == 0:
            out[1:] = 0.0
            return out
        row = self._rule.rows([t ** (1.0 - self.model.k_exponent)])[0]
        out[1:] = self._h_nodes[:-1] @ row
        return out

    def to_csv(self, fh=None, n_max: int | None = None) -> str:
        """CSV with header ``t,k,h1,...,hN`` and 17 significant digits.

        ``n_max`` limits the exported orders (default: all).
        """
        n_out = self.n_max if n_max is None else min(int(n_max), self.n_max)
        buf = io.StringIO()
        cols = ["t", "k"] + [f"h{n}" for n in range(1, n_out + 1)]
        buf.write(",".join(cols) + "\n")
        for i, t in enumerate(self.grid):
            vals = [t, self.k_values[i]] + list(self.h_values[1:n_out + 1, i])
            buf.write(",".join(f"{v:.17g}" for v in vals) + "\n")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def h_n_table(model: SpatialSpectralModel, n_max: int = 20, horizon: float = 1.0,
              n_grid: int = 512, quad_spec: QuadratureSpec = DEFAULT_QUAD) -> KernelTable:
    """Tabulate ``k`` and ``h_0..h_{n_max}`` on ``(0, horizon]``."""
    if int(n_max) != n_max or n_max < 1:
        raise ConfigError(f"n_max must be a positive integer, got {n_max}")
    if n_max > N_MAX_LIMIT:
        raise ConfigError(f"n_max={n_max} exceeds the supported limit {N_MAX_LIMIT}")
    if n_grid < 1:
        raise ConfigError("the time grid must contain at least one point")
    if not horizon > 0:
        raise ConfigError("horizon must be positive")
    n_nodes = max(quad_spec.node_count, n_max + 24)
    rule = _ConvolutionRule.build(model, horizon, n_nodes, n_nodes // 2 + 48)

    w_nodes = rule.rows(rule.nodes)
    grid = horizon * np.arange(1, n_grid + 1) / n_grid
    w_grid = rule.rows(grid ** (1.0 - model.k_exponent))

    h_nodes = np.empty((n_max + 1, n_nodes))
    h_grid = np.empty((n_max + 1, n_grid))
    h_nodes[0] = 1.0
    h_grid[0] = 1.0
    for n in range(1, n_max + 1):
        h_nodes[n] = w_nodes @ h_nodes[n - 1]
        h_grid[n] = w_grid @ h_nodes[n - 1]
    k_vals = model.k(grid)
    for arr in (grid, k_vals, h_grid, h_nodes):
        arr.setflags(write=False)
    return KernelTable(model, float(horizon), int(n_max), grid, k_vals, h_grid, quad_spec,
                       rule, h_nodes)


def h_n_closed_form(model: SpatialSpectralModel, n: int, t):
    """Riesz closed form ``(c Gamma(1-a))**n t**(n(1-a)) / Gamma(n(1-a)+1)``."""
    a = model.k_exponent
    c = model.k_constant
    t = np.asarray(t, dtype=float)
    lg = n * math.log(c * math.gamma(1 - a)) - math.lgamma(n * (1 - a) + 1)
    with np.errstate(divide="ignore"):
        return np.exp(lg + n * (1 - a) * np.log(t)) if n else np.ones_like(t)


# ---------------------------------------------------------------------------
# generating series

@dataclass(frozen=True)
class SeriesValue:
    """Truncated series value with its truncation index and tail bound."""

    value: float
    truncation_index: int
    tail_bound: float

    def __float__(self):
        return self.value


def _sum_series(terms: np.ndarray, tol: float) -> SeriesValue:
    total = 0.0
    for n, term in enumerate(terms):
        total += term
        if n >= 3 and term <= tol * total:
            prev = terms[n - 3:n + 1]
            if np.all(prev[:-1] > 0):
                ratios = prev[1:] / prev[:-1]
                if np.all(ratios < 0.5):
                    r = ratios[-1]
                    return SeriesValue(float(total), n, float(term * r / (1.0 - r)))
            elif np.all(prev[1:] <= tol * total):
                # terms have fallen below the table's rounding floor
                return SeriesValue(float(total), n, float(tol * total))
    raise SeriesTruncationError(
        f"series terms still above tolerance after {len(terms) - 1} orders "
        f"(last term {terms[-1]:.3e}, partial sum {total:.6e}); build the table with a larger n_max")


def big_H(table: KernelTable, t: float, gamma: float, tol: float = 1e-13) -> SeriesValue:
    """``H(t; gamma) = sum_n gamma**n h_n(t)``.

    ``tol`` bounds the last retained term relative to the partial sum;
    truncation also requires the last three term ratios below 1/2.
    """
    if gamma < 0:
        raise ConfigError("gamma must be non-negative")
    if gamma == 0 or t == 0:
        return SeriesValue(1.0, 0, 0.0)
    h = table.h_at(t)
    terms = gamma ** np.arange(h.shape[0]) * h
    return _sum_series(terms, tol)


def big_H_tilde(table: KernelTable, t: float, gamma: float, tol: float = 1e-13) -> SeriesValue:
    """``H~(t; gamma) = sum_n sqrt(gamma**n h_n(t))``."""
    if gamma < 0:
        raise ConfigError("gamma must be non-negative")
    if gamma == 0 or t == 0:
        return SeriesValue(1.0, 0, 0.0)
    h = table.h_at(t)
    terms = np.sqrt(gamma ** np.arange(h.shape[0]) * np.maximum(h, 0.0))
    return _sum_series(terms, tol)


# ---------------------------------------------------------------------------
# integrals of k

def cond_k_integral(model: SpatialSpectralModel, eta: float,
                    quad_spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``int_0^1 k(s) s**(eta-1) ds``; ``inf`` iff ``eta <= alpha/2``."""
    if not 0.0 < eta < 1.0:
        raise ConfigError(f"eta must lie in (0, 1), got {eta}")
    a = model.k_exponent
    if eta <= a:
        return INF
    val, _ = quad(lambda s: float(model.k_regular(s)), 0.0, 1.0, weight="alg",
                  wvar=(eta - 1.0 - a, 0.0), epsabs=quad_spec.abs_tol, epsrel=quad_spec.rel_tol)
    return val


def rho(model: SpatialSpectralModel, t: float, theta: float,
        quad_spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``rho_t = int_0^t s**(-theta) k(s) ds``; finite iff ``theta < 1 - alpha/2``."""
    if t < 0:
        raise ConfigError("rho needs t >= 0")
    a = model.k_exponent
    if theta + a >= 1.0:
        return INF
    if t == 0:
        return 0.0
    val, _ = quad(lambda s: float(model.k_regular(s)), 0.0, t, weight="alg",
                  wvar=(-theta - a, 0.0), epsabs=quad_spec.abs_tol, epsrel=quad_spec.rel_tol)
    return val
