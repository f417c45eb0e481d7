"""Noise covariance models and the integrability conditions on them.

The spatial covariance enters only through its spectral measure ``mu``,
taken with density ``|xi|**(alpha - d)`` and no dimensional constant.
The temporal covariance is ``gamma(t) = |t|**(-beta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._quadrature import quad
from .errors import ConfigError

INF = math.inf


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and node counts shared by the quadrature routines.

    ``singularity_split`` sets the power substitution
    ``r = u**(1/(1 - singularity_split))`` used on ``[0, 1]`` for radial
    integrals; it is raised automatically when the transformed integrand
    would otherwise stay unbounded.
    """

    node_count: int = 128
    abs_tol: float = 1e-13
    rel_tol: float = 1e-10
    singularity_split: float = 0.75

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 8:
            raise ConfigError(f"node_count must be an integer >= 8, got {self.node_count}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ConfigError("quadrature tolerances must be positive")
        if not 0.0 < self.singularity_split < 1.0:
            raise ConfigError("singularity_split must lie in (0, 1)")


DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True)
class SpatialSpectralModel:
    """Riesz-type spatial noise: ``mu(dxi) = |xi|**(alpha - d) dxi``.

    Requires ``0 < alpha < 2`` (Dalang) and ``alpha <= d``. ``alpha = d``
    is spatial white noise.
    """

    dim: int
    alpha: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if not (0.0 < self.alpha < 2.0):
            raise ConfigError(f"alpha must lie in (0, 2) for Dalang's condition, got {self.alpha}")
        if self.alpha > self.dim:
            raise ConfigError(
                f"alpha={self.alpha} exceeds d={self.dim}; the spatial covariance "
                "would not be locally integrable")

    @property
    def sphere_area(self) -> float:
        """Surface area of the unit sphere in R^d."""
        return 2.0 * math.pi ** (self.dim / 2) / math.gamma(self.dim / 2)

    @property
    def k_exponent(self) -> float:
        """Power ``a`` in ``k(t) = c t**(-a)``; equals ``alpha / 2``."""
        return self.alpha / 2.0

    @property
    def k_constant(self) -> float:
        """``c = pi**(d/2) Gamma(alpha/2) / Gamma(d/2)``, the radial Gaussian moment."""
        return math.pi ** (self.dim / 2) * math.gamma(self.alpha / 2) / math.gamma(self.dim / 2)

    def density(self, xi):
        """Spectral density at ``|xi|`` (``inf`` at the origin when alpha < d)."""
        r = np.abs(np.asarray(xi, dtype=float))
        with np.errstate(divide="ignore"):
            return r ** (self.alpha - self.dim)

    def radial_mass(self, lo, hi):
        """Mass of ``mu`` on the shell ``lo <= |xi| <= hi``."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return self.sphere_area * (hi ** self.alpha - lo ** self.alpha) / self.alpha

    def k(self, t):
        """Closed form ``k(t) = int exp(-t |xi|^2) mu(dxi)``."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.k_constant * t ** (-self.k_exponent)

    def k_regular(self, u):
        """``k(u) * u**a``; constant for the Riesz family."""
        return np.full_like(np.asarray(u, dtype=float), self.k_constant)


@dataclass(frozen=True)
class TemporalCovarianceModel:
    """``gamma(t) = |t|**(-beta)`` with ``0 < beta < 1``."""

    beta: float

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta}")

    def gamma(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        with np.errstate(divide="ignore"):
            return t ** (-self.beta)

    def antiderivative(self, x):
        """Odd antiderivative ``sign(x) |x|**(1-beta) / (1-beta)`` of gamma."""
        x = np.asarray(x, dtype=float)
        return np.sign(x) * np.abs(x) ** (1.0 - self.beta) / (1.0 - self.beta)

    def second_antiderivative(self, x):
        """Even function whose second derivative is gamma."""
        x = np.abs(np.asarray(x, dtype=float))
        b = self.beta
        return x ** (2.0 - b) / ((1.0 - b) * (2.0 - b))

    def capital(self, t):
        """``Gamma_t = 2 int_0^t gamma(s) ds``."""
        t = np.asarray(t, dtype=float)
        return 2.0 * t ** (1.0 - self.beta) / (1.0 - self.beta)


def gamma_eval(model: TemporalCovarianceModel, t: float) -> float:
    """Temporal covariance at lag ``t``; ``inf`` at ``t = 0``."""
    if t == 0:
        return INF
    return float(model.gamma(t))


def gamma_capital(model: TemporalCovarianceModel, t: float) -> float:
    if t < 0:
        raise ConfigError(f"Gamma_t needs t >= 0, got {t}")
    return float(model.capital(t))


def radial_integral(model: SpatialSpectralModel, f, quad_spec: QuadratureSpec = DEFAULT_QUAD,
                    tail_decay: float | None = None) -> float:
    """``int f(|xi|) mu(dxi)`` reduced to the half line.

    ``f`` takes a float radius. ``tail_decay``, when given, is the power
    ``p`` with ``f(r) ~ r**-p`` at infinity; it selects a substitution
    that keeps the tail integrand bounded. Without it the tail is left to
    QUADPACK's infinite-range rule.
    """
    a = model.alpha
    p = max(1.0 / (1.0 - quad_spec.singularity_split), 1.0 / a)
    kw = dict(epsabs=quad_spec.abs_tol, epsrel=quad_spec.rel_tol)

    def head(u):
        return f(u ** p) * p * u ** (p * a - 1.0)

    total, _ = quad(head, 0.0, 1.0, **kw)
    if tail_decay is None:
        tail, _ = quad(lambda r: f(r) * r ** (a - 1.0), 1.0, INF, **kw)
    else:
        excess = tail_decay - a
        if excess <= 0:
            return INF
        p2 = max(1.0, 1.0 / excess)

        def tail_fn(v):
            if v == 0.0:
                return 0.0
            r = v ** (-p2)
            return f(r) * r ** (a - 1.0) * p2 * v ** (-p2 - 1.0)

        tail, _ = quad(tail_fn, 0.0, 1.0, **kw)
    return model.sphere_area * (total + tail)


def dalang_integral(model: SpatialSpectralModel, quad_spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``int (1 + |xi|^2)**-1 mu(dxi)``; ``inf`` when the tail test fails."""
    if model.alpha >= 2.0:
        return INF
    return radial_integral(model, lambda r: 1.0 / (1.0 + r * r), quad_spec, tail_decay=2.0)


def holder_integral(model: SpatialSpectralModel, eta: float,
                    quad_spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``int (1 + |xi|^2)**-eta mu(dxi)``; finite iff ``2 eta > alpha``."""
    if not 0.0 < eta < 1.0:
        raise ConfigError(f"eta must lie in (0, 1), got {eta}")
    if 2.0 * eta <= model.alpha:
        return INF
    return radial_integral(model, lambda r: (1.0 + r * r) ** (-eta), quad_spec,
                           tail_decay=2.0 * eta)


def minimal_eta(model: SpatialSpectralModel) -> float:
    """Infimum of admissible Hölder-condition exponents, ``alpha / 2``."""
    return model.alpha / 2.0


def dalang_closed_form(model: SpatialSpectralModel) -> float:
    """Beta-function value of the Dalang integral (cross-check for the quadrature)."""
    a = model.alpha
    return model.sphere_area * math.pi / (2.0 * math.sin(math.pi * a / 2.0))


def holder_closed_form(model: SpatialSpectralModel, eta: float) -> float:
    a = model.alpha
    if 2.0 * eta <= a:
        return INF
    return model.sphere_area * 0.5 * special.beta(a / 2.0, eta - a / 2.0)
