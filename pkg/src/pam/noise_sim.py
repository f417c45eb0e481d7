"""Finite-rank synthesis of the noise and sampling of ``u_2 = 1 + J_1 + J_2``.

The noise on ``[0, T] x [0, L)`` (d = 1, periodic in space) is

    W'(s, y) = sum_a zeta_a sqrt(lambda_j w_m) e_j(s) trig_ch(xi_m y),

with ``a = (j, m, ch)``, ``(lambda_j, e_j)`` the leading eigenpairs of the
temporal covariance operator discretized on piecewise-constant cells, and
``w_m`` lattice weights for the spectral density on ``xi_m = 2 pi m / L``.
``J_1`` is linear in ``zeta`` and ``J_2 = zeta' C zeta - tr C`` with a
coefficient matrix ``C`` computed exactly for the piecewise-constant
basis, so both have closed-form variances under the basis. Their gap to
the continuum moments is the basis-truncation deficit.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

from . import _kernels
from .errors import ConfigError, MemoryBudgetError, UnsupportedError
from .spectral_models import SpatialSpectralModel, TemporalCovarianceModel

DEFAULT_MEMORY_BUDGET = 2 ** 30
REPLICATE_CHUNK = 256


# ---------------------------------------------------------------------------
# divided differences of exp

def _phi1(z):
    """``expm1(z) / z`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def exp_dd1(x, y):
    """``(e^x - e^y) / (x - y)``, continuous across ``x = y``."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return np.exp(y) * _phi1(x - y)


def exp_dd2(x, y, z):
    """Second divided difference of ``exp`` at three points.

    Close points use a Taylor series about their mean, spread-out points
    the ordinary recursion (no harmful cancellation once the outer gap
    exceeds 1).
    """
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    lo = np.minimum(np.minimum(x, y), z)
    hi = np.maximum(np.maximum(x, y), z)
    mid = x + y + z - lo - hi
    out = np.empty(x.shape)
    near = (hi - lo) < 1.0

    if np.any(near):
        c = (lo[near] + mid[near] + hi[near]) / 3.0
        y0, y1, y2 = lo[near] - c, mid[near] - c, hi[near] - c
        h0 = np.ones_like(c)
        h01 = np.ones_like(c)
        h012 = np.ones_like(c)
        total = h012 / 2.0
        fact = 2.0
        for n in range(1, 30):
            h0 = h0 * y0
            h01 = h01 * y1 + h0
            h012 = h012 * y2 + h01
            fact *= n + 2
            total = total + h012 / fact
        out[near] = np.exp(c) * total
    far = ~near
    if np.any(far):
        a, b, d = lo[far], mid[far], hi[far]
        out[far] = (exp_dd1(b, d) - exp_dd1(a, b)) / (d - a)
    return out


# ---------------------------------------------------------------------------
# basis

def cell_covariance(tmodel: TemporalCovarianceModel, n_cells: int, width: float) -> np.ndarray:
    """Mean of ``gamma(r - s)`` over pairs of cells; symmetric Toeplitz."""
    lag = np.arange(n_cells, dtype=float)
    f2 = tmodel.second_antiderivative
    col = (f2(lag + 1.0) - 2.0 * f2(lag) + f2(lag - 1.0)) * width ** (-tmodel.beta)
    return linalg.toeplitz(col)


def lattice_weights(smodel: SpatialSpectralModel, spacing: float, n_freq: int) -> np.ndarray:
    """Weights ``w_0..w_M`` with ``sum_m w_m F(m spacing) ~ int F d mu`` for even smooth F.

    Point values ``2 spacing xi_m**(alpha-1)`` plus zeta-function endpoint
    corrections that remove the ``F(0)`` and ``F''(0)`` terms of the
    generalized Euler-Maclaurin error. For ``alpha = 1`` this is the
    trapezoidal rule with a halved ``w_0``.
    """
    a = smodel.alpha
    m = np.arange(n_freq + 1, dtype=float)
    w = np.empty(n_freq + 1)
    w[1:] = 2.0 * spacing * (m[1:] * spacing) ** (a - 1.0)
    corr = -2.0 * float(special.zeta(-1.0 - a)) * spacing ** a
    w[0] = -2.0 * float(special.zeta(1.0 - a)) * spacing ** a - corr
    if n_freq >= 1:
        w[1] += corr
    else:
        w[0] += corr
    return w


@dataclass(frozen=True)
class NoiseBasis:
    """Finite-rank noise on ``[0, T] x [0, L)``.

    ``eigvals`` are the ``J`` leading eigenvalues of the discretized
    temporal covariance operator, ``eigvecs`` the matching orthonormal
    cell vectors (``e_j = eigvecs[:, j] / sqrt(cell_width)``).
    ``operator_trace`` is ``cell_width * trace`` of the cell covariance and
    ``eigval_sum`` the sum of all its eigenvalues (Parseval check).
    """

    smodel: SpatialSpectralModel
    tmodel: TemporalCovarianceModel
    horizon: float
    length: float
    n_time: int
    n_freq: int
    n_cells: int
    eigvals: np.ndarray
    eigvecs: np.ndarray
    freqs: np.ndarray
    weights: np.ndarray
    operator_trace: float
    eigval_sum: float
    min_eigval: float
    clipped: int

    @property
    def cell_width(self) -> float:
        return self.horizon / self.n_cells

    @property
    def n_modes(self) -> int:
        """Spatial channels: cosine for every frequency, sine for ``m >= 1``."""
        return 2 * self.n_freq + 1

    @property
    def size(self) -> int:
        return self.n_time * self.n_modes

    def mode_table(self):
        """``(m, is_sine)`` for each spatial channel, in basis order."""
        m = np.concatenate([[0], np.repeat(np.arange(1, self.n_freq + 1), 2)])
        sine = np.concatenate([[False], np.tile([False, True], self.n_freq)])
        return m, sine

    def manifest(self) -> dict:
        return {"horizon": self.horizon, "length": self.length, "J": self.n_time,
                "M": self.n_freq, "n_cells": self.n_cells, "clipped_eigenvalues": self.clipped}


def build_noise_basis(smodel: SpatialSpectralModel, tmodel: TemporalCovarianceModel,
                      horizon: float, length: float | None = None, n_time: int = 32,
                      n_freq: int = 64, n_cells: int | None = None,
                      neg_tol: float = 1e-10) -> NoiseBasis:
    """Temporal Nyström eigenpairs times a spatial frequency lattice.

    ``length`` defaults to ``16 sqrt(T)``; ``n_cells`` to ``4 n_time``.
    """
    if smodel.dim != 1:
        raise UnsupportedError("noise synthesis is implemented for d = 1 only")
    if not horizon > 0:
        raise ConfigError("horizon must be positive")
    if length is None:
        length = 16.0 * math.sqrt(horizon)
    if not length > 0:
        raise ConfigError("domain length must be positive")
    if n_time < 1 or n_freq < 1:
        raise ConfigError("J and M must be >= 1")
    if n_cells is None:
        n_cells = 4 * n_time
    if n_cells < n_time:
        raise ConfigError("n_cells must be at least J")
    width = horizon / n_cells
    cov = cell_covariance(tmodel, n_cells, width)
    vals, vecs = linalg.eigh(cov)
    trace = float(np.trace(cov))
    if vals[0] < -neg_tol * trace:
        raise ConfigError(f"cell covariance has eigenvalue {vals[0]:.3e} below -tol*trace; "
                          "the discretization is not positive semidefinite")
    clipped = int(np.sum(vals < 0))
    vals = np.maximum(vals, 0.0)
    order = np.argsort(vals, kind="stable")[::-1][:n_time]
    lam = vals[order] * width
    vecs = vecs[:, order]
    # fix the eigenvector sign so that outputs do not depend on LAPACK's choice
    flip = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(n_time)])
    vecs = vecs * np.where(flip == 0, 1.0, flip)
    spacing = 2.0 * math.pi / length
    freqs = spacing * np.arange(n_freq + 1)
    weights = lattice_weights(smodel, spacing, n_freq)
    for arr in (lam, vecs, freqs, weights):
        arr.setflags(write=False)
    return NoiseBasis(smodel, tmodel, float(horizon), float(length), int(n_time), int(n_freq),
                      int(n_cells), lam, vecs, freqs, weights, width * trace,
                      float(np.sum(vals)) * width, float(vals.min()) * width, clipped)


# ---------------------------------------------------------------------------
# coefficients

def _cell_geometry(basis: NoiseBasis, t: float):
    if not 0.0 <= t <= basis.horizon * (1 + 1e-12):
        raise ConfigError(f"t={t} outside [0, {basis.horizon}]")
    left = basis.cell_width * np.arange(basis.n_cells)
    span = np.clip(t - left, 0.0, basis.cell_width)
    return span, left + span


def time_factors(basis: NoiseBasis, t: float) -> np.ndarray:
    """``q[m, j] = int_0^t exp(-(t - s) xi_m^2 / 2) e_j(s) ds``."""
    span, right = _cell_geometry(basis, t)
    rate = 0.5 * basis.freqs ** 2
    cell = np.exp(-rate[:, None] * (t - right)[None, :]) * span[None, :] \
        * _phi1(-rate[:, None] * span[None, :])
    return cell @ basis.eigvecs / math.sqrt(basis.cell_width)


def j1_coefficients(basis: NoiseBasis, t: float, x: float) -> np.ndarray:
    """Vector ``c`` with ``J_1(t, x) = c . zeta`` (basis order ``mode * J + j``)."""
    q = time_factors(basis, t)
    m, sine = basis.mode_table()
    arg = basis.freqs[m] * x
    trig = np.where(sine, np.sin(arg), np.cos(arg))
    amp = np.sqrt(basis.weights[m])[:, None] * np.sqrt(basis.eigvals)[None, :]
    return (trig[:, None] * amp * q[m]).ravel()


def j1_basis_variance(basis: NoiseBasis, t: float) -> float:
    """``Var J_1(t, x)`` under the basis (independent of ``x``)."""
    q = time_factors(basis, t)
    return float(np.sum(basis.weights[:, None] * basis.eigvals[None, :] * q ** 2))


def _ordered_time_blocks(basis: NoiseBasis, t: float) -> np.ndarray:
    """``T[m, k, j, j'] = int_{s1 < s2 < t} e_j(s1) e_j'(s2)
    exp(-(s2 - s1) xi_m^2/2) exp(-(t - s2) (k spacing)^2/2)``."""
    span, right = _cell_geometry(basis, t)
    width = basis.cell_width
    spacing = basis.freqs[1] if basis.n_freq else 2.0 * math.pi / basis.length
    inner = 0.5 * basis.freqs ** 2
    outer = 0.5 * (spacing * np.arange(2 * basis.n_freq + 1)) ** 2
    V = basis.eigvecs

    decay = np.exp(-inner * width)
    inject = width * _phi1(-inner * width)
    S = _kernels.causal_scan(V, decay, inject)

    a_ = inner[:, None, None]
    b_ = outer[None, :, None]
    lag = np.exp(-b_ * (t - right)[None, None, :])
    L = span[None, None, :]
    E2 = L * exp_dd1(-b_ * L, -a_ * L) * lag
    D = L * L * exp_dd2(-b_ * L, -a_ * L, np.zeros_like(L)) * lag

    nt = basis.n_time
    VV = (V[:, :, None] * V[:, None, :]).reshape(basis.n_cells, nt * nt)
    out = np.empty((inner.shape[0], outer.shape[0], nt, nt))
    for m in range(inner.shape[0]):
        SV = (S[m][:, :, None] * V[:, None, :]).reshape(basis.n_cells, nt * nt)
        out[m] = ((E2[m] @ SV + D[m] @ VV) / width).reshape(-1, nt, nt)
    return out


def j2_coefficients(basis: NoiseBasis, t: float, x: float,
                    memory_budget: int = DEFAULT_MEMORY_BUDGET) -> np.ndarray:
    """Matrix ``C`` with ``J_2(t, x) = zeta' C zeta - tr C``.

    Rows index the earlier time leg.
    """
    n = basis.size
    need = 8 * n * n * 3 + 8 * (basis.n_freq + 1) * (2 * basis.n_freq + 1) * basis.n_time ** 2
    if need > memory_budget:
        raise MemoryBudgetError(
            f"second-chaos coefficients need about {need / 2**20:.0f} MiB, over the "
            f"{memory_budget / 2**20:.0f} MiB budget; reduce J or M")
    T = _ordered_time_blocks(basis, t)
    m, sine = basis.mode_table()
    spacing = basis.freqs[1]
    mi, mj = m[:, None], m[None, :]
    si, sj = sine[:, None], sine[None, :]
    minus = (mi - mj) * spacing * x
    plus = (mi + mj) * spacing * x
    cm, cp = np.cos(minus), np.cos(plus)
    sm, sp = np.sin(minus), np.sin(plus)
    f_minus = np.where(si == sj, cm, np.where(si, sm, -sm))
    f_plus = np.where(si == sj, np.where(si, -cp, cp), sp)
    blocks = f_minus[:, :, None, None] * T[mi, np.abs(mi - mj)] \
        + f_plus[:, :, None, None] * T[mi, mi + mj]
    amp_mode = np.sqrt(basis.weights[m])
    amp = 0.5 * (amp_mode[:, None] * amp_mode[None, :])[:, :, None, None] \
        * np.sqrt(np.outer(basis.eigvals, basis.eigvals))[None, None, :, :]
    C = (blocks * amp).transpose(0, 2, 1, 3).reshape(n, n)
    return C


def j2_basis_variance(C: np.ndarray) -> float:
    """``Var(zeta' C zeta - tr C) = 2 ||sym C||_F^2``."""
    sym = 0.5 * (C + C.T)
    return 2.0 * float(np.sum(sym * sym))


# ---------------------------------------------------------------------------
# sampling

@dataclass(frozen=True)
class ChaosSampleConfig:
    """Replicates, chaos order and evaluation points ``(t, x)``."""

    master_seed: int
    replicates: int
    chaos_order: int
    points: tuple
    workers: int = 1

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.chaos_order not in (1, 2):
            raise ConfigError("chaos_order must be 1 or 2")
        if not self.points:
            raise ConfigError("at least one evaluation point is required")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def check_points(self, basis: NoiseBasis):
        for t, x in self.points:
            if not (0.0 <= t <= basis.horizon and 0.0 <= x <= basis.length):
                raise ConfigError(f"point ({t}, {x}) outside [0, T] x [0, L]")


def _draws(seed: int, lo: int, hi: int, size: int) -> np.ndarray:
    out = np.empty((hi - lo, size))
    for i, rep in enumerate(range(lo, hi)):
        out[i] = np.random.default_rng([int(seed), rep]).standard_normal(size)
    return out


def _run_chunks(config: ChaosSampleConfig, fn):
    """Apply ``fn(lo, hi)`` to fixed replicate chunks; concatenate in order."""
    bounds = [(lo, min(lo + REPLICATE_CHUNK, config.replicates))
              for lo in range(0, config.replicates, REPLICATE_CHUNK)]
    if config.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as ex:
            parts = list(ex.map(lambda b: fn(*b), bounds))
    else:
        parts = [fn(*b) for b in bounds]
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class ChaosSamples:
    """Per-replicate chaos values, shape ``(replicates, points)``."""

    points: tuple
    j1: np.ndarray
    j2: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def u(self) -> np.ndarray:
        out = 1.0 + self.j1
        if self.j2 is not None:
            out = out + self.j2
        return out

    def to_csv(self) -> str:
        """Rows ``replicate,t,x,u_value`` in replicate-major order."""
        buf = io.StringIO()
        buf.write("replicate,t,x,u_value\n")
        u = self.u
        for r in range(u.shape[0]):
            for k, (t, x) in enumerate(self.points):
                buf.write(f"{r},{t:.17g},{x:.17g},{u[r, k]:.17g}\n")
        return buf.getvalue()


def sample_j1(basis: NoiseBasis, config: ChaosSampleConfig) -> np.ndarray:
    """``J_1`` at each point for each replicate, shape ``(replicates, points)``."""
    config.check_points(basis)
    coef = np.stack([j1_coefficients(basis, t, x) for t, x in config.points], axis=1)
    return _run_chunks(config, lambda lo, hi: _draws(config.master_seed, lo, hi, basis.size) @ coef)


def sample_u_truncated(basis: NoiseBasis, config: ChaosSampleConfig,
                       memory_budget: int = DEFAULT_MEMORY_BUDGET) -> ChaosSamples:
    """``u_N = 1 + J_1 (+ J_2)`` from one shared set of Gaussian draws.

    The second chaos is the Wick quadratic form ``zeta' C zeta - tr C``.
    """
    config.check_points(basis)
    pts = tuple((float(t), float(x)) for t, x in config.points)
    c1 = np.stack([j1_coefficients(basis, t, x) for t, x in pts], axis=1)
    mats = []
    if config.chaos_order == 2:
        mats = [j2_coefficients(basis, t, x, memory_budget) for t, x in pts]
        traces = np.array([np.trace(C) for C in mats])

    def chunk(lo, hi):
        z = _draws(config.master_seed, lo, hi, basis.size)
        out = np.empty((hi - lo, 2, len(pts)))
        out[:, 0, :] = z @ c1
        if mats:
            for k, C in enumerate(mats):
                out[:, 1, k] = np.einsum("ri,ri->r", z @ C, z) - traces[k]
        return out

    res = _run_chunks(config, chunk)
    meta = {"master_seed": int(config.master_seed), "replicates": int(config.replicates),
            "chaos_order": int(config.chaos_order), **basis.manifest()}
    return ChaosSamples(pts, res[:, 0, :], res[:, 1, :] if mats else None, meta)


def mc_moment(samples, p: int):
    """Empirical ``E|u|^p`` with its jackknife standard error.

    For a sample mean the delete-one jackknife error equals
    ``std(ddof=1) / sqrt(n)``, which is what is returned.
    """
    if p not in (2, 4):
        raise ConfigError("p must be 2 or 4")
    v = np.abs(np.asarray(samples, dtype=float)) ** p
    n = v.shape[0]
    if n < 2:
        raise ConfigError("need at least two samples")
    return float(v.mean(axis=0)) if v.ndim == 1 else v.mean(axis=0), \
        (float(v.std(ddof=1) / math.sqrt(n)) if v.ndim == 1 else v.std(axis=0, ddof=1) / math.sqrt(n))
