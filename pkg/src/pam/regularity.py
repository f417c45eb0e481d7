"""Checks of the sup-over-shifts kernel estimates, the elementary
inequalities behind them, and log-log fits of increment moments.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from ._quadrature import quad, quad_pieces
from .chaos_moments import c_theta, k_theta
from .errors import ConfigError
from .spectral_models import DEFAULT_QUAD, QuadratureSpec, SpatialSpectralModel, minimal_eta


# ---------------------------------------------------------------------------
# shifted spectral integrals

def _shell_kernel(model, rho, shift):
    """``int_{S^{d-1}} |rho w - shift|**(alpha - d) dw`` for ``shift > 0``."""
    a, d = model.alpha, model.dim
    if rho == shift:
        return 0.0  # integrable singularity; a single point carries no mass
    if d == 1:
        with np.errstate(divide="ignore"):
            return abs(rho - shift) ** (a - 1.0) + (rho + shift) ** (a - 1.0)
    if d == 2:
        # int_0^{2 pi} (A - B cos phi)**nu = 2 pi (rho+shift)**(2 nu) 2F1(-nu, 1/2; 1; x)
        y = ((rho - shift) / (rho + shift)) ** 2  # 1 - x, exact
        return 2.0 * math.pi * (rho + shift) ** (a - 2.0) * _hyp_near_one(1.0 - a / 2.0, y)
    # d == 3: (2 pi / (rho shift)) int_{|rho-shift|}^{rho+shift} u**(a-2) du
    big, small = max(rho, shift), min(rho, shift)
    u = small / big
    if a == 1.0:
        diff = math.log1p(u) - math.log1p(-u) if u < 1 else math.inf
    else:
        diff = big ** (a - 1.0) * (math.expm1((a - 1.0) * math.log1p(u))
                                   - math.expm1((a - 1.0) * math.log1p(-u))) / (a - 1.0) \
            if u < 1 else math.inf
    return 2.0 * math.pi * diff / (rho * shift)


def _hyp_near_one(p, y):
    """``2F1(p, 1/2; 1; 1 - y)`` for ``0 < y <= 1``, accurate as ``y -> 0``."""
    if p == 0.5:
        return 2.0 / math.pi * float(special.ellipkm1(y))
    if y >= 0.25:
        return float(special.hyp2f1(p, 0.5, 1.0, 1.0 - y))
    # connection formula around x = 1
    g = special.gamma
    s = 0.5 - p
    t1 = g(s) / (g(1.0 - p) * g(0.5)) * special.hyp2f1(p, 0.5, 1.0 - s, y)
    t2 = y ** s * g(-s) / (g(p) * g(0.5)) * special.hyp2f1(1.0 - p, 0.5, 1.0 + s, y)
    return float(t1 + t2)


def shifted_integral(model: SpatialSpectralModel, f, shift: float, scale: float,
                     quad_spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``int f(|xi + eta|) mu(dxi)`` for radial ``f`` and ``|eta| = shift``.

    ``f`` must be negligible beyond ``shift + 40 * scale``.
    """
    kw = dict(epsabs=quad_spec.abs_tol, epsrel=quad_spec.rel_tol)
    a, d = model.alpha, model.dim
    top = shift + 40.0 * scale
    if shift == 0.0:
        head, _ = quad(f, 0.0, min(scale, top), weight="alg", wvar=(a - 1.0, 0.0), **kw)
        rest, _ = quad(lambda r: f(r) * r ** (a - 1.0), min(scale, top), top, **kw)
        return model.sphere_area * (head + rest)
    edges = sorted({0.0, 0.5 * shift, shift, 1.5 * shift, 2.0 * shift, shift + scale, top})
    val, _ = quad_pieces(lambda r: f(r) * r ** (d - 1) * _shell_kernel(model, r, shift), edges, **kw)
    return val


def shifted_gaussian(model: SpatialSpectralModel, s: float, shift: float,
                     quad_spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``int exp(-s |xi + eta|^2) mu(dxi)``."""
    return shifted_integral(model, lambda r: math.exp(-s * r * r), shift, 1.0 / math.sqrt(s),
                            quad_spec)


def default_shifts(t: float):
    """Shift magnitudes used for the sup audits (0 first)."""
    return [0.0] + [c / math.sqrt(t) for c in (0.05, 0.2, 0.5, 1.0, 2.0, 5.0)]


# ---------------------------------------------------------------------------
# reports

@dataclass
class CheckReport:
    """Verdict with per-case rows ``(label, lhs, rhs, ratio)``."""

    name: str
    passed: bool
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return max((r[3] for r in self.rows), default=0.0)

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "max_ratio": self.max_ratio,
                "rows": [list(r) for r in self.rows], "notes": list(self.notes)}


def verify_shift_sup(model: SpatialSpectralModel, t: float, shifts=None,
                     quad_spec: QuadratureSpec = DEFAULT_QUAD, rel_tol: float = 1e-6) -> CheckReport:
    """Check ``int exp(-t |xi + eta|^2) mu(dxi) <= k(t)`` over a shift grid."""
    if t <= 0:
        raise ConfigError("t must be positive")
    shifts = default_shifts(t) if shifts is None else list(shifts)
    if 0.0 not in shifts:
        shifts = [0.0] + shifts
    k = float(model.k(t))
    rep = CheckReport("shift_sup", True)
    vals = []
    for s in shifts:
        v = shifted_gaussian(model, t, abs(s), quad_spec)
        vals.append(v)
        rep.rows.append((f"shift={s:.6g}", v, k, v / k))
    if max(vals) > k * (1.0 + rel_tol):
        rep.passed = False
    if int(np.argmax(vals)) != shifts.index(0.0) and max(vals) > vals[shifts.index(0.0)] * (1 + rel_tol):
        rep.passed = False
        rep.notes.append("maximum not attained at zero shift")
    return rep


def _eta_grid(model, etas):
    eta_star = minimal_eta(model)
    if etas is None:
        etas = [eta_star + 0.05, 0.5, 0.9]
    out = [e for e in etas if eta_star < e < 1.0]
    if not out:
        raise ConfigError("no eta in the grid exceeds alpha/2")
    return out


def verify_time_smoothing_bound(model: SpatialSpectralModel, t: float, h, etas=None, shifts=None,
                       quad_spec: QuadratureSpec = DEFAULT_QUAD, slack_limit: float = 1.0) -> CheckReport:
    """``sup_eta int |FG(t+h) - FG(t)|^2(xi + eta) mu(dxi) <= 2^-theta C_theta h^theta t^-theta k(t/2)``.

    ``h`` may be a scalar or a list. The sup is taken over a finite shift
    grid; missing the true sup can only lower the left side.
    """
    if t <= 0:
        raise ConfigError("t must be positive")
    hs = np.atleast_1d(np.asarray(h, dtype=float))
    if np.any(hs <= 0):
        raise ConfigError("h must be positive")
    shifts = default_shifts(t) if shifts is None else list(shifts)
    k_half = float(model.k(0.5 * t))
    rep = CheckReport("time_smoothing_bound", True, notes=["sup approximated on a finite shift grid"])
    for hh in hs:
        f = lambda r, hh=hh: math.exp(-t * r * r) * math.expm1(-0.5 * hh * r * r) ** 2
        lhs = max(shifted_integral(model, f, abs(s), 1.0 / math.sqrt(t), quad_spec) for s in shifts)
        for eta in _eta_grid(model, etas):
            th = 1.0 - eta
            rhs = 2.0 ** -th * c_theta(th) * hh ** th * t ** -th * k_half
            ratio = lhs / rhs
            rep.rows.append((f"t={t:.6g},h={hh:.6g},eta={eta:.6g}", lhs, rhs, ratio))
            if not ratio < slack_limit:
                rep.passed = False
    return rep


def _space_lhs(model, t, z, shift, quad_spec):
    """``int 2(1 - cos((xi + eta) z)) exp(-t (xi + eta)^2) |xi|**(alpha-1) dxi`` in d = 1."""
    a = model.alpha
    kw = dict(epsabs=quad_spec.abs_tol, epsrel=quad_spec.rel_tol)
    half = 40.0 / math.sqrt(t)

    def f(zeta):
        s = math.sin(0.5 * zeta * z)
        return 4.0 * s * s * math.exp(-t * zeta * zeta) * abs(zeta - shift) ** (a - 1.0)

    edges = sorted({-half, 0.0, shift, half} | ({shift - 1.0, shift + 1.0}))
    edges = [e for e in edges if -half <= e <= max(half, shift + 1.0)]
    val, _ = quad_pieces(f, edges, **kw)
    return val


def verify_space_smoothing_bound(model: SpatialSpectralModel, t: float, z, etas=None, shifts=None,
                        quad_spec: QuadratureSpec = DEFAULT_QUAD, slack_limit: float = 1.0) -> CheckReport:
    """``sup_eta int |1 - e^{-i(xi+eta).z}|^2 |FG(t)(xi+eta)|^2 mu(dxi) <= K_theta C_theta |z|^{2 theta} t^-theta k(t/2)``.

    Shifts are scanned in d = 1 (both signs). In d = 2, 3 only the zero
    shift is evaluated, in closed form.
    """
    from .chaos_moments import space_structure

    if t <= 0:
        raise ConfigError("t must be positive")
    zs = np.atleast_1d(np.asarray(z, dtype=float))
    shifts = default_shifts(t) if shifts is None else list(shifts)
    k_half = float(model.k(0.5 * t))
    rep = CheckReport("space_smoothing_bound", True, notes=["sup approximated on a finite shift grid"])
    if model.dim > 1:
        rep.notes.append("d > 1: zero shift only")
    for zz in zs:
        zz = abs(float(zz))
        if model.dim == 1:
            cand = [_space_lhs(model, t, zz, sgn * s, quad_spec) for s in shifts for sgn in (1.0, -1.0)]
            lhs = max(cand)
        else:
            # S(u; z) integrates exp(-u |xi|^2), here u = t
            lhs = space_structure(model, t, zz)
        for eta in _eta_grid(model, etas):
            th = 1.0 - eta
            rhs = k_theta(th) * c_theta(th) * zz ** (2.0 * th) * t ** -th * k_half
            ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
            rep.rows.append((f"t={t:.6g},z={zz:.6g},eta={eta:.6g}", lhs, rhs, ratio))
            if zz > 0 and not ratio < slack_limit:
                rep.passed = False
    return rep


# ---------------------------------------------------------------------------
# elementary inequalities

@dataclass
class InequalityReport:
    """Violation counts per inequality; the squared cosine form is informative only."""

    samples: int
    seed: int
    violations: dict
    min_slack: dict
    passed: bool

    def to_dict(self):
        return asdict(self)


def _rel_slack_log(log_lhs, log_rhs):
    """``1 - lhs/rhs`` from logs (``-inf`` logs are fine)."""
    with np.errstate(invalid="ignore"):
        d = log_lhs - log_rhs
    d = np.where(np.isneginf(log_lhs), -np.inf, d)
    return -np.expm1(d)


def verify_scalar_inequalities(sample_count: int = 10 ** 6, seed: int = 0,
                               tol: float = 1e-12) -> InequalityReport:
    """Fuzz the elementary inequalities over random ``x >= 0, A > 0, theta in (0, 1)``.

    (i)   ``(1 - e^-x)^2 <= min(x, 1)``
    (ii)  ``e^{-A x^2} x^{2 theta} <= (2 theta/e)^theta A^-theta e^{-A x^2 / 2}``
    (iii) ``e^{-A x^2} x^2 <= (2/e) A^-1 e^{-A x^2 / 2}``
    (iv)  ``2 (1 - cos x) <= 4^{1-theta} |x|^{2 theta}``
    plus the squared variant ``2 (1 - cos x)^2`` against ``4^{1-theta}`` and
    ``2 * 4^{1-theta}`` (recorded, not part of the verdict).
    Comparisons are made in log form where products can underflow.
    """
    rng = np.random.default_rng(seed)
    n = int(sample_count)
    x = 10.0 ** rng.uniform(-8, 3, n)
    x[: max(1, n // 1000)] = 0.0
    A = 10.0 ** rng.uniform(-4, 4, n)
    th = rng.uniform(1e-6, 1.0 - 1e-6, n)
    # include the stationary points of (ii) and (iii)
    m = n // 10
    x[-m:] = np.sqrt(2.0 * th[-m:] / A[-m:])
    x[-2 * m:-m] = np.sqrt(2.0 / A[-2 * m:-m])

    with np.errstate(divide="ignore"):
        lx = np.log(x)
    one_m = -np.expm1(-x)
    s = {}
    with np.errstate(invalid="ignore"):
        s["i"] = np.where(x == 0, 0.0, 1.0 - one_m ** 2 / np.minimum(x, 1.0))
    s["ii"] = _rel_slack_log(-A * x * x + 2.0 * th * lx,
                             th * np.log(2.0 * th / math.e) - th * np.log(A) - 0.5 * A * x * x)
    s["iii"] = _rel_slack_log(-A * x * x + 2.0 * lx, math.log(2.0 / math.e) - np.log(A) - 0.5 * A * x * x)
    one_cos = 2.0 * np.sin(0.5 * x) ** 2
    with np.errstate(divide="ignore"):
        l_iv = np.log(2.0 * one_cos)
        l_sq = np.log(2.0 * one_cos ** 2)
    rhs_iv = (1.0 - th) * math.log(4.0) + 2.0 * th * lx
    s["iv"] = np.where(x == 0, 0.0, _rel_slack_log(l_iv, rhs_iv))
    s["squared_K"] = np.where(x == 0, 0.0, _rel_slack_log(l_sq, rhs_iv))
    s["squared_2K"] = np.where(x == 0, 0.0, _rel_slack_log(l_sq, rhs_iv + math.log(2.0)))

    viol = {k: int(np.sum(v < -tol)) for k, v in s.items()}
    slack = {k: float(np.min(v)) for k, v in s.items()}
    passed = all(viol[k] == 0 for k in ("i", "ii", "iii", "iv"))
    return InequalityReport(n, int(seed), viol, slack, passed)


# ---------------------------------------------------------------------------
# exponent fitting

@dataclass
class RegularityReport:
    """Log-log fit of an increment second moment against the lag."""

    direction: str
    t0: float
    x0: float
    lags: list
    moments: list
    slope: float
    intercept: float
    residual: float
    theory_exponent: float
    scaling_exponent: float | None
    margin: float
    proximity: float
    lower_bound_ok: bool
    close_to_theory: bool
    verdict: str

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("lag,moment,fit\n")
        for lag, mom in zip(self.lags, self.moments):
            fit = math.exp(self.intercept + self.slope * math.log(lag))
            buf.write(f"{lag:.17g},{mom:.17g},{fit:.17g}\n")
        return buf.getvalue()


def fit_holder_exponent(moment_fn, direction: str, t0: float, lag_grid, theory_exponent: float,
                        x0: float = 0.0, margin: float = 0.05, proximity: float = 0.15,
                        scaling_exponent: float | None = None) -> RegularityReport:
    """Fit ``log E|increment|^2`` against ``log lag`` on the smallest 2/3 of the lags.

    ``moment_fn(lag)`` returns the second moment. The lags must form a
    strictly decreasing geometric sequence of length >= 6. The verdict is
    PASS when ``slope >= theory_exponent - margin``; closeness within
    ``proximity`` is reported separately.
    """
    if direction not in ("time", "space"):
        raise ConfigError("direction must be 'time' or 'space'")
    lags = np.asarray(lag_grid, dtype=float)
    if lags.ndim != 1 or lags.size < 6:
        raise ConfigError("need at least 6 lags")
    if np.any(lags <= 0) or np.any(np.diff(lags) >= 0):
        raise ConfigError("lags must be positive and strictly decreasing")
    ratios = lags[1:] / lags[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ConfigError("lags must form a geometric sequence")
    moments = np.array([float(moment_fn(h)) for h in lags])
    if np.any(moments <= 0) or not np.all(np.isfinite(moments)):
        raise ConfigError("moments must be positive and finite for a log-log fit")
    n_fit = int(math.ceil(2 * lags.size / 3))
    lx = np.log(lags[-n_fit:])
    ly = np.log(moments[-n_fit:])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (intercept + slope * lx)) ** 2)))
    ok = bool(slope >= theory_exponent - margin)
    close = bool(abs(slope - theory_exponent) <= proximity)
    return RegularityReport(direction, float(t0), float(x0), lags.tolist(), moments.tolist(),
                            float(slope), float(intercept), resid, float(theory_exponent),
                            scaling_exponent, float(margin), float(proximity), ok, close,
                            "PASS" if ok else "FAIL")


def theory_exponents(model: SpatialSpectralModel) -> dict:
    """Second-moment exponents at the minimal eta: ``1 - eta*`` (time), ``2 (1 - eta*)`` (space)."""
    e = minimal_eta(model)
    return {"eta_star": e, "time": 1.0 - e, "space": 2.0 * (1.0 - e),
            "theta1_max": (1.0 - e) / 2.0, "theta2_max": 1.0 - e}


def scaling_exponents(model: SpatialSpectralModel, beta: float) -> dict:
    """Small-lag exponents of the first-chaos increments for the Riesz pair.

    ``alpha_1(t)`` is homogeneous of degree ``2 - alpha/2 - beta``; time
    increments inherit that power and space increments twice it, capped at
    2 by smoothness (log corrections at the cap).
    """
    g = 2.0 - model.alpha / 2.0 - beta
    return {"time": min(g, 2.0), "space": min(2.0 * g, 2.0)}
