"""Second moments of the first two chaos terms and the moment bounds.

Every gamma-weighted double time integral met here has the form
``int_0^a int_0^b gamma(r - s) F((a - r + b - s) / 2) dr ds``. In the
coordinates ``sigma = (a - r + b - s) / 2`` and ``w = r - s`` the inner
``w``-integral of ``|w|**-beta`` is available in closed form, which
leaves a 1-D integral in ``sigma`` with the diagonal singularity of
gamma already integrated out exactly.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.stats import qmc

from . import _kernels
from ._quadrature import geometric_edges, quad_pieces
from .errors import ConfigError, UnsupportedError
from .kernels import KernelTable, big_H, big_H_tilde, rho
from .spectral_models import (DEFAULT_QUAD, QuadratureSpec, SpatialSpectralModel,
                              TemporalCovarianceModel)


@dataclass(frozen=True)
class MomentEstimate:
    """A computed moment with its error estimate.

    ``stderr`` is the QMC standard error for randomized estimates and the
    quadrature error estimate otherwise.
    """

    value: float
    stderr: float
    method: str

    def __float__(self):
        return self.value


def _qkw(quad_spec):
    return dict(epsabs=quad_spec.abs_tol, epsrel=quad_spec.rel_tol)


def _window(tmodel, sigma, t):
    """``int |w|**-beta dw`` over ``|w| <= 2 min(sigma, t - sigma)``."""
    return float(tmodel.capital(2.0 * max(0.0, min(sigma, t - sigma))))


def _kw_integral(smodel, tmodel, t, fn, scale, quad_spec):
    """``int_0^t fn(sigma) Gamma_{2 min(sigma, t - sigma)} d sigma``.

    ``scale`` is the length on which ``fn`` varies near 0.
    """
    if t <= 0:
        return 0.0, 0.0
    half = 0.5 * t
    edges = geometric_edges(0.0, half, min(scale, half) if scale > 0 else half)
    edges.append(t)
    return quad_pieces(lambda s: fn(s) * _window(tmodel, s, t), edges, **_qkw(quad_spec))


# ---------------------------------------------------------------------------
# first chaos

def j1_covariance(smodel: SpatialSpectralModel, tmodel: TemporalCovarianceModel,
                  a: float, b: float, quad_spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``E[J_1(a, x) J_1(b, x)]`` for ``a, b >= 0``."""
    if a < 0 or b < 0:
        raise ConfigError("times must be non-negative")
    a, b = min(a, b), max(a, b)
    if a == 0:
        return 0.0
    g1 = tmodel.antiderivative

    def fn(sig):
        p = a + b - 2.0 * sig
        hi = min(2.0 * a - p, p)
        lo = max(-p, p - 2.0 * b)
        if hi <= lo:
            return 0.0
        return float(smodel.k(sig)) * float(g1(hi) - g1(lo))

    edges = sorted({0.0, 0.5 * (b - a), 0.5 * b, 0.5 * (a + b)})
    val, _ = quad_pieces(fn, edges, **_qkw(quad_spec))
    return val


def _alpha1(smodel, tmodel, t, quad_spec):
    return _kw_integral(smodel, tmodel, t, lambda s: float(smodel.k(s)), t, quad_spec)


def _k_second_difference(smodel, sig, h):
    """``k(sig) - 2 k(sig + h/2) + k(sig + h)`` without cancellation."""
    a = smodel.k_exponent
    d1 = math.expm1(-a * math.log1p(h / sig))
    d2 = math.expm1(-a * math.log1p(0.5 * h / sig))
    return float(smodel.k(sig)) * (d1 - 2.0 * d2)


def _k_back_difference(smodel, sig, h):
    """``k(sig) - k(sig - h/2)``, negative, for ``sig > h/2``."""
    a = smodel.k_exponent
    return -float(smodel.k(sig)) * math.expm1(-a * math.log1p(-0.5 * h / sig))


def j1_time_increment(smodel: SpatialSpectralModel, tmodel: TemporalCovarianceModel,
                      t: float, t_prime: float,
                      quad_spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``E|J_1(t', x) - J_1(t, x)|^2`` for ``0 <= t <= t'``.

    Split at ``t``: noise before ``t`` (propagator difference, part A)
    and noise in ``[t, t']`` (fresh part B). ``E|B|^2 = alpha_1(h)`` by
    stationarity, and the A-A and A-B terms each reduce to one integral.
    """
    if not 0.0 <= t <= t_prime:
        raise ConfigError(f"need 0 <= t <= t', got t={t}, t'={t_prime}")
    h = t_prime - t
    if h == 0:
        return 0.0
    if t == 0:
        return _alpha1(smodel, tmodel, h, quad_spec)[0]
    kw = _qkw(quad_spec)
    aa, _ = _kw_integral(smodel, tmodel, t, lambda s: _k_second_difference(smodel, s, h),
                         h, quad_spec)

    g1 = tmodel.antiderivative

    def ab_fn(sig):
        w_hi = min(2.0 * sig, 2.0 * (t_prime - sig))
        w_lo = 2.0 * abs(sig - h)
        if w_hi <= w_lo:
            return 0.0
        return _k_back_difference(smodel, sig, h) * float(g1(w_hi) - g1(w_lo))

    lo, hi = 0.5 * h, 0.5 * (t_prime + h)
    edges = [lo] + [e for e in geometric_edges(h, 0.5 * t_prime, h) if e > lo]
    if edges[-1] < hi:
        edges.append(hi)
    edges = sorted(set(e for e in edges if lo <= e <= hi))
    ab, _ = quad_pieces(ab_fn, edges, **kw)
    bb = _alpha1(smodel, tmodel, h, quad_spec)[0]
    return max(aa + 2.0 * ab + bb, 0.0)


def _one_minus_kummer(a, b, x):
    """``1 - 1F1(a; b; -x)`` for ``x >= 0``, series for small ``x``."""
    if x < 1.0:
        term = 1.0
        total = 0.0
        n = 0
        while True:
            term *= (a + n) / (b + n) * (-x) / (n + 1)
            total -= term
            n += 1
            if abs(term) <= 1e-17 * abs(total):
                return total
    return 1.0 - float(special.hyp1f1(a, b, -x))


def space_structure(smodel: SpatialSpectralModel, u: float, z) -> float:
    """``S(u; z) = int |1 - exp(-i xi.z)|^2 exp(-u |xi|^2) mu(dxi)``."""
    r2 = float(np.sum(np.square(z)))
    if r2 == 0:
        return 0.0
    x = r2 / (4.0 * u)
    return 2.0 * float(smodel.k(u)) * _one_minus_kummer(smodel.k_exponent, smodel.dim / 2.0, x)


def j1_space_increment(smodel: SpatialSpectralModel, tmodel: TemporalCovarianceModel,
                       t: float, z, quad_spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``E|J_1(t, x + z) - J_1(t, x)|^2``; ``z`` is a scalar or a length-d vector."""
    if t <= 0:
        raise ConfigError("space increments need t > 0")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape[0] not in (1, smodel.dim):
        raise ConfigError(f"z must be a scalar or have {smodel.dim} components")
    r2 = float(np.sum(z * z))
    if r2 == 0:
        return 0.0
    val, _ = _kw_integral(smodel, tmodel, t, lambda s: space_structure(smodel, s, z),
                          r2 / 64.0, quad_spec)
    return val


# ---------------------------------------------------------------------------
# second chaos, d = 1

def _gauss_pieces(edges, n):
    x, w = np.polynomial.legendre.leggauss(n)
    lo, hi = np.asarray(edges[:-1]), np.asarray(edges[1:])
    mid, rad = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return (mid[:, None] + rad[:, None] * x).ravel(), (rad[:, None] * w).ravel()


def angular_rule(alpha: float, n_end: int = 8, levels: int = 40, n_mid: int = 6):
    """Nodes for ``int_0^1 (u(1-u))**(alpha/2-1) F(u) du`` in the spectral factor.

    Returns ``(u, plus, minus, w)`` with ``plus, minus = 1 +/- 2 sqrt(u(1-u))``
    and the endpoint weight folded into ``w``. ``F`` can have a boundary
    layer at ``u = 0`` or ``1`` (one of ``a1, a2`` much smaller than the
    other) and the minus branch a sharp peak at ``u = 1/2``, so both are
    refined geometrically. The innermost endpoint piece uses Gauss-Jacobi
    for the ``u**(alpha/2-1)`` weight.
    """
    c = alpha / 2.0 - 1.0
    tiny = 0.25 * 2.0 ** -levels
    xj, wj = special.roots_jacobi(n_end, 0.0, c)
    u_in = 0.5 * tiny * (1.0 + xj)
    w_in = (0.5 * tiny) ** (c + 1.0) * wj * (1.0 - u_in) ** c

    ends = 0.25 * 2.0 ** -np.arange(levels, -1, -1.0)
    mids = 0.5 - 0.25 * 2.0 ** -np.arange(0.0, levels + 1)
    u_geo, w_geo = _gauss_pieces(np.concatenate([ends, mids[1:], [0.5]]), n_mid)
    w_geo = w_geo * (u_geo * (1.0 - u_geo)) ** c

    u_half = np.concatenate([u_in, u_geo])
    w_half = np.concatenate([w_in, w_geo])
    u = np.concatenate([u_half, 1.0 - u_half])
    w = np.concatenate([w_half, w_half])
    one_m = 1.0 - u
    root = np.sqrt(u * one_m)
    plus = 1.0 + 2.0 * root
    minus = (one_m - u) ** 2 / (np.sqrt(one_m) + np.sqrt(u)) ** 2
    return u, plus, minus, w


def spectral_factor(a1, a2, b, alpha: float, rule=None):
    """``int int mu(dxi1) mu(dxi2) exp(-a1 xi1^2 - a2 xi2^2 - b (xi1+xi2)^2)`` in d = 1."""
    if rule is None:
        rule = angular_rule(alpha)
    a1 = np.atleast_1d(np.asarray(a1, dtype=float))
    a2 = np.atleast_1d(np.asarray(a2, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a1, a2, b = np.broadcast_arrays(a1, a2, b)
    return 0.5 * math.gamma(alpha) * _kernels.angular_sum(a1.ravel(), a2.ravel(), b.ravel(),
                                                          rule, alpha)


def _pair_sample(tmodel, t, u_abs, u_sign, u_pos):
    """Map uniforms to ``(r, s)`` in ``[0,t]^2`` with density proportional to gamma(r - s)."""
    b = tmodel.beta
    w = t * u_abs ** (1.0 / (1.0 - b))
    lo = u_pos * (t - w)
    pos = u_sign < 0.5
    r = np.where(pos, lo + w, lo)
    s = np.where(pos, lo, lo + w)
    weight = 2.0 * t ** (1.0 - b) / (1.0 - b) * (t - w)
    return r, s, weight


def _alpha2_integrand(smodel, tmodel, t, pts, rule):
    t1, s1, w1 = _pair_sample(tmodel, t, pts[:, 0], pts[:, 1], pts[:, 2])
    t2, s2, w2 = _pair_sample(tmodel, t, pts[:, 3], pts[:, 4], pts[:, 5])
    tl = t1 < t2
    sl = s1 < s2
    lt = np.where(tl, t2, t1)
    ls = np.where(sl, s2, s1)
    b = 0.5 * ((t - lt) + (t - ls))
    dt = 0.5 * np.abs(t2 - t1)
    ds = 0.5 * np.abs(s2 - s1)
    # leg 1 carries xi1 when it is the earlier time on its side
    a1 = np.where(tl, dt, 0.0) + np.where(sl, ds, 0.0)
    a2 = np.where(tl, 0.0, dt) + np.where(sl, 0.0, ds)
    phi = spectral_factor(a1, a2, b, smodel.alpha, rule)
    return w1 * w2 * phi


def _alpha2_qmc(smodel, tmodel, t, qmc_points, replications, seed, workers):
    if smodel.dim != 1:
        raise UnsupportedError("the second-chaos moment is implemented for d = 1 only")
    m = int(round(math.log2(qmc_points)))
    if 2 ** m != qmc_points:
        raise ConfigError("qmc_points must be a power of two")
    rule = angular_rule(smodel.alpha)

    def one(rep):
        ss = np.random.SeedSequence([seed, rep])
        pts = qmc.Sobol(6, scramble=True, seed=np.random.default_rng(ss)).random_base2(m)
        pts = np.clip(pts, 1e-300, 1.0 - 1e-16)
        return float(np.mean(_alpha2_integrand(smodel, tmodel, t, pts, rule)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            vals = list(ex.map(one, range(replications)))
    else:
        vals = [one(r) for r in range(replications)]
    vals = np.asarray(vals)
    return MomentEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replications)),
                          "rqmc")


def alpha_n_exact(smodel: SpatialSpectralModel, tmodel: TemporalCovarianceModel, n: int,
                  t: float, quad_spec: QuadratureSpec = DEFAULT_QUAD, *,
                  qmc_points: int = 2 ** 14, replications: int = 8, seed: int = 0,
                  workers: int = 1) -> MomentEstimate:
    """``alpha_n(t) = (n!)^2 ||f~_n(., t, x)||^2`` for ``n`` in {0, 1, 2}.

    ``n = 1`` is deterministic quadrature. ``n = 2`` (d = 1 only) is a
    randomized Sobol estimate over the four time variables, with the two
    ``gamma`` factors importance-sampled and the spectral double integral
    done by a deterministic angular rule. ``replications`` scrambles with
    seeds derived from ``(seed, replication)`` give the standard error;
    the result does not depend on ``workers``.
    """
    if t < 0:
        raise ConfigError("t must be non-negative")
    if n == 0:
        return MomentEstimate(1.0, 0.0, "exact")
    if n > 2 or n < 0:
        raise UnsupportedError(f"exact moments are available for n <= 2 only, got n={n}")
    if t == 0:
        return MomentEstimate(0.0, 0.0, "exact")
    if n == 1:
        val, err = _alpha1(smodel, tmodel, t, quad_spec)
        return MomentEstimate(val, err, "quadrature")
    if replications < 2:
        raise ConfigError("need at least two QMC replications for a standard error")
    return _alpha2_qmc(smodel, tmodel, t, qmc_points, replications, seed, workers)


# ---------------------------------------------------------------------------
# bounds

def alpha_n_bound(table: KernelTable, tmodel: TemporalCovarianceModel, n: int, t: float) -> float:
    """``Gamma_t**n n! h_n(t)``."""
    if n < 0 or n > table.n_max:
        raise ConfigError(f"order {n} outside 0..{table.n_max}")
    if n == 0:
        return 1.0
    return float(tmodel.capital(t)) ** n * math.factorial(n) * float(table.h_at(t)[n])


def second_moment_bound(table: KernelTable, tmodel: TemporalCovarianceModel, t: float) -> float:
    """``H(t; Gamma_t)``, dominating ``E|u(t, x)|^2``."""
    return big_H(table, t, float(tmodel.capital(t))).value


def p_moment_bound(table: KernelTable, tmodel: TemporalCovarianceModel, t: float,
                   p: float) -> float:
    """``H~(t; (p-1) Gamma_t)``, dominating ``||u(t, x)||_p``."""
    if p < 2:
        raise ConfigError("p must be >= 2")
    return big_H_tilde(table, t, (p - 1.0) * float(tmodel.capital(t))).value


def c_theta(theta: float) -> float:
    """``(2 theta / e)**theta``: sup of ``x**(2 theta) exp(-x^2/2)``."""
    return (2.0 * theta / math.e) ** theta


def k_theta(theta: float) -> float:
    """``4**(1 - theta)``: sup of ``2 (1 - cos x) / |x|**(2 theta)``."""
    return 4.0 ** (1.0 - theta)


@dataclass(frozen=True)
class IncrementBound:
    """Pieces of the first-chaos time-increment bound."""

    fresh: float
    propagated: float

    @property
    def total(self) -> float:
        return 2.0 * (self.fresh + self.propagated)


def j1_time_increment_bound(smodel: SpatialSpectralModel, tmodel: TemporalCovarianceModel,
                            t: float, h: float, eta: float,
                            quad_spec: QuadratureSpec = DEFAULT_QUAD) -> IncrementBound:
    """Upper bound for ``E|J_1(t + h) - J_1(t)|^2`` with ``theta = 1 - eta``.

    ``propagated`` bounds the noise before ``t`` through the propagator
    difference estimate, ``fresh`` the noise in ``[t, t + h]``.
    """
    theta = 1.0 - eta
    if eta <= smodel.k_exponent:
        raise ConfigError("eta must exceed alpha/2")
    g = lambda s: float(tmodel.capital(s))
    prop = g(t) * 2.0 ** -theta * c_theta(theta) * h ** theta * 2.0 ** (1.0 - theta) \
        * rho(smodel, 0.5 * t, theta, quad_spec)
    fresh = g(t + h) * h ** theta * rho(smodel, h, theta, quad_spec)
    return IncrementBound(fresh=fresh, propagated=prop)


@dataclass(frozen=True)
class HolderConstants:
    """Prefactors for ``||u(t+h) - u(t)||_p <= sqrt(2) (time_a + time_b) h**(theta/2)``
    and ``||u(t, x+z) - u(t, x)||_p <= space |z|**theta`` on ``[0, T]``."""

    time_a: float
    time_b: float
    space: float
    theta: float

    def as_tuple(self):
        return self.time_a, self.time_b, self.space


def holder_constants(smodel: SpatialSpectralModel, tmodel: TemporalCovarianceModel,
                     table: KernelTable, horizon: float, p: float, eta: float,
                     quad_spec: QuadratureSpec = DEFAULT_QUAD) -> HolderConstants:
    """Explicit Hölder prefactors assembled from Gamma, rho and H~."""
    if eta <= smodel.k_exponent or eta >= 1.0:
        raise ConfigError(f"eta must lie in (alpha/2, 1), got {eta}")
    if p < 2:
        raise ConfigError("p must be >= 2")
    theta = 1.0 - eta
    gam = (p - 1.0) * float(tmodel.capital(horizon))
    ht = big_H_tilde(table, horizon, gam).value
    rho_half = rho(smodel, 0.5 * horizon, theta, quad_spec)
    rho_full = rho(smodel, horizon, theta, quad_spec)
    ct = c_theta(theta)
    time_a = math.sqrt(2.0 ** (1.0 - 2.0 * theta) * ct) * math.sqrt(gam * rho_half) * ht
    time_b = math.sqrt(rho_full) * math.sqrt(gam) * ht
    space = math.sqrt(k_theta(theta) * ct * 2.0 ** (1.0 - theta)) * math.sqrt(gam * rho_half) * ht
    return HolderConstants(time_a, time_b, space, theta)


# ---------------------------------------------------------------------------
# report

@dataclass
class MomentReport:
    """Rows of ``(kind, n, t, lag, value, stderr, bound)``."""

    rows: list = field(default_factory=list)

    COLUMNS = ("kind", "n", "t", "lag", "value", "stderr", "bound")

    def add(self, kind, n, t, lag, value, stderr, bound):
        self.rows.append((str(kind), int(n), float(t), float(lag), float(value),
                          float(stderr), float(bound)))

    def violations(self):
        """Rows whose value exceeds the bound by more than 3 stderr."""
        return [r for r in self.rows if r[4] > r[6] + 3.0 * r[5]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.COLUMNS) + "\n")
        for kind, n, t, lag, val, err, bound in self.rows:
            nums = ",".join(f"{v:.17g}" for v in (t, lag, val, err, bound))
            buf.write(f"{kind},{n},{nums}\n")
        return buf.getvalue()
