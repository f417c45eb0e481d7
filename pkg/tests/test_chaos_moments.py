import math

import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from oracle_values import ORACLES
from pam import chaos_moments as cm
from pam import kernels as kn
from pam import noise_sim as ns
from pam import regularity as rg
from pam import spectral_models as sp
from pam.errors import ConfigError, UnsupportedError

SM = sp.SpatialSpectralModel(1, 0.5)
TM = sp.TemporalCovarianceModel(0.5)


@pytest.fixture(scope="module")
def table():
    return kn.h_n_table(SM, 120, 1.0, 32)


# ---------------------------------------------------------------------------
# first chaos

@pytest.mark.parametrize("key", sorted(ORACLES["alpha1"]))
def test_alpha1_matches_2d_oracle(key):
    d, alpha, beta, t = key
    est = cm.alpha_n_exact(sp.SpatialSpectralModel(d, alpha), sp.TemporalCovarianceModel(beta), 1, t)
    assert est.method == "quadrature"
    assert est.value == pytest.approx(ORACLES["alpha1"][key], rel=1e-9)


def test_alpha_trivial_orders():
    assert cm.alpha_n_exact(SM, TM, 0, 0.7).value == 1.0
    assert cm.alpha_n_exact(SM, TM, 1, 0.0).value == 0.0
    assert cm.alpha_n_exact(SM, TM, 1, 1e-12).value < 1e-6
    with pytest.raises(UnsupportedError):
        cm.alpha_n_exact(SM, TM, 3, 1.0)
    with pytest.raises(UnsupportedError):
        cm.alpha_n_exact(sp.SpatialSpectralModel(2, 1.0), TM, 2, 1.0)


def test_alpha1_homogeneity():
    # alpha_1(t) scales as t^(2 - alpha/2 - beta) for the Riesz pair
    a, b = cm.alpha_n_exact(SM, TM, 1, 0.3).value, cm.alpha_n_exact(SM, TM, 1, 0.6).value
    assert b / a == pytest.approx(2.0 ** 1.25, rel=1e-9)


def test_covariance_diagonal_is_alpha1():
    for t in (0.25, 1.0):
        assert cm.j1_covariance(SM, TM, t, t) == pytest.approx(cm.alpha_n_exact(SM, TM, 1, t).value,
                                                               rel=1e-9)
    assert cm.j1_covariance(SM, TM, 0.0, 1.0) == 0.0
    assert cm.j1_covariance(SM, TM, 0.3, 0.9) == pytest.approx(cm.j1_covariance(SM, TM, 0.9, 0.3))


@pytest.mark.parametrize("key", sorted(ORACLES["time_increment"]))
def test_time_increment_matches_2d_oracle(key):
    _, _, _, t, tp = key
    assert cm.j1_time_increment(SM, TM, t, tp) == pytest.approx(ORACLES["time_increment"][key], rel=1e-8)


@pytest.mark.parametrize("t, h", [(1.0, 0.25), (0.5, 0.01), (0.25, 1e-3)])
def test_time_increment_matches_covariance_route(t, h):
    direct = cm.j1_time_increment(SM, TM, t, t + h)
    cov = (cm.j1_covariance(SM, TM, t, t) + cm.j1_covariance(SM, TM, t + h, t + h)
           - 2 * cm.j1_covariance(SM, TM, t, t + h))
    # the covariance route loses digits to cancellation as h shrinks
    assert direct == pytest.approx(cov, rel=1e-9 / h)


def test_time_increment_trivial():
    assert cm.j1_time_increment(SM, TM, 0.7, 0.7) == 0.0
    assert cm.j1_time_increment(SM, TM, 0.0, 0.6) == pytest.approx(cm.alpha_n_exact(SM, TM, 1, 0.6).value)
    with pytest.raises(ConfigError):
        cm.j1_time_increment(SM, TM, 1.0, 0.5)


@pytest.mark.parametrize("alpha, beta", [(0.5, 0.5), (1.0, 0.25)])
def test_time_increment_lag_ratio(alpha, beta):
    sm, tm = sp.SpatialSpectralModel(1, alpha), sp.TemporalCovarianceModel(beta)
    expo = rg.scaling_exponents(sm, beta)["time"]
    for h in (2.0 ** -8, 2.0 ** -10):
        r = cm.j1_time_increment(sm, tm, 1.0, 1.0 + h) / cm.j1_time_increment(sm, tm, 1.0, 1.0 + h / 4)
        slope = math.log(r) / math.log(4.0)
        assert slope == pytest.approx(expo, abs=0.05)
        assert slope >= rg.theory_exponents(sm)["time"] - 0.05


@pytest.mark.parametrize("key", sorted(ORACLES["space_increment"]))
def test_space_increment_matches_oracle(key):
    _, _, t, z = key
    assert cm.j1_space_increment(SM, TM, t, z) == pytest.approx(ORACLES["space_increment"][key], rel=1e-8)


def test_space_increment_isotropy_and_zero():
    sm = sp.SpatialSpectralModel(2, 1.0)
    a = cm.j1_space_increment(sm, TM, 1.0, [0.3, 0.0])
    b = cm.j1_space_increment(sm, TM, 1.0, [0.3 / math.sqrt(2), 0.3 / math.sqrt(2)])
    assert a == pytest.approx(b, rel=1e-12)
    assert cm.j1_space_increment(sm, TM, 1.0, [0.0, 0.0]) == 0.0
    with pytest.raises(ConfigError):
        cm.j1_space_increment(sm, TM, 1.0, [0.1, 0.1, 0.1])


def test_space_increment_small_z_slope():
    expo = rg.scaling_exponents(SM, 0.5)["space"]
    z = 2.0 ** -8
    r = cm.j1_space_increment(SM, TM, 1.0, z) / cm.j1_space_increment(SM, TM, 1.0, z / 4)
    assert math.log(r) / math.log(4.0) == pytest.approx(expo, abs=0.05)


def test_space_structure_large_z_limit():
    # |1 - e^{i xi z}|^2 averages to 2 as z grows, with an algebraic
    # correction from the low-frequency mass: 1F1(a; b; -x) ~ Gamma(b)/Gamma(b-a) x^-a
    u, z = 0.5, 1e4
    x = z * z / (4 * u)
    lead = 1.0 - math.gamma(0.5) / math.gamma(0.25) * x ** -0.25
    assert cm.space_structure(SM, u, z) == pytest.approx(2.0 * float(SM.k(u)) * lead, rel=1e-6)


# ---------------------------------------------------------------------------
# second chaos

@pytest.mark.parametrize("key", sorted(ORACLES.get("spectral_factor", {})))
def test_spectral_factor_matches_2d_oracle(key):
    alpha, a1, a2, b = key
    got = float(cm.spectral_factor(a1, a2, b, alpha)[0])
    assert got == pytest.approx(ORACLES["spectral_factor"][key], rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(a1=st.floats(1e-3, 10.0), a2=st.floats(1e-3, 10.0), b=st.floats(0.0, 50.0))
def test_spectral_factor_alpha1_closed_form(a1, a2, b):
    got = float(cm.spectral_factor(a1, a2, b, 1.0)[0])
    assert got == pytest.approx(math.pi / math.sqrt(a1 * a2 + b * (a1 + a2)), rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(a1=st.floats(1e-2, 5.0), a2=st.floats(1e-2, 5.0), b=st.floats(0.0, 20.0))
def test_spectral_factor_symmetric(a1, a2, b):
    x = cm.spectral_factor(a1, a2, b, 0.5)[0]
    y = cm.spectral_factor(a2, a1, b, 0.5)[0]
    assert x == pytest.approx(y, rel=1e-8)


def test_alpha2_deterministic_and_worker_free():
    a = cm.alpha_n_exact(SM, TM, 2, 0.5, qmc_points=1024, replications=4, seed=5)
    b = cm.alpha_n_exact(SM, TM, 2, 0.5, qmc_points=1024, replications=4, seed=5, workers=3)
    c = cm.alpha_n_exact(SM, TM, 2, 0.5, qmc_points=1024, replications=4, seed=6)
    assert a == b
    assert a.value != c.value
    assert a.method == "rqmc" and a.stderr > 0
    with pytest.raises(ConfigError):
        cm.alpha_n_exact(SM, TM, 2, 0.5, replications=1)


@pytest.mark.slow
def test_alpha2_agrees_with_basis_quadratic_form():
    # two independent routes to alpha_2(1)/2: randomized QMC over the
    # chaos kernel, and the exact variance of the basis quadratic form
    est = cm.alpha_n_exact(SM, TM, 2, 1.0, seed=1)
    basis = ns.build_noise_basis(SM, TM, 1.0, None, 16, 32)
    var = ns.j2_basis_variance(ns.j2_coefficients(basis, 1.0, 0.0))
    assert var < est.value / 2 + 3 * est.stderr
    assert var == pytest.approx(est.value / 2, rel=0.01)


# ---------------------------------------------------------------------------
# bounds

def test_alpha_bound_forms(table):
    assert cm.alpha_n_bound(table, TM, 0, 0.5) == 1.0
    t = 0.5
    expected = float(TM.capital(t)) * float(kn.h_n_closed_form(SM, 1, t))
    assert cm.alpha_n_bound(table, TM, 1, t) == pytest.approx(expected, rel=1e-10)
    with pytest.raises(ConfigError):
        cm.alpha_n_bound(table, TM, 200, t)


@pytest.mark.parametrize("t", [0.1, 0.25, 0.5, 1.0])
def test_alpha1_dominated(table, t):
    assert cm.alpha_n_exact(SM, TM, 1, t).value <= cm.alpha_n_bound(table, TM, 1, t)


def test_moment_bounds(table):
    assert cm.second_moment_bound(table, TM, 1e-12) == pytest.approx(1.0, abs=1e-4)
    assert cm.p_moment_bound(table, TM, 1e-12, 2) == pytest.approx(1.0, abs=1e-2)
    vals = [cm.second_moment_bound(table, TM, t) for t in (0.25, 0.5, 1.0)]
    assert vals == sorted(vals)
    t = 0.5
    assert cm.p_moment_bound(table, TM, t, 2) == kn.big_H_tilde(table, t, float(TM.capital(t))).value
    assert cm.p_moment_bound(table, TM, t, 4) >= cm.p_moment_bound(table, TM, t, 2)
    partial = 1 + cm.alpha_n_exact(SM, TM, 1, t).value
    assert partial <= cm.second_moment_bound(table, TM, t)
    with pytest.raises(ConfigError):
        cm.p_moment_bound(table, TM, t, 1.5)


@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
def test_increment_bound_chain(t):
    for k in (4, 8, 12):
        h = 2.0 ** -k
        b = cm.j1_time_increment_bound(SM, TM, t, h, 0.5)
        assert b.total == 2 * (b.fresh + b.propagated)
        assert cm.j1_time_increment(SM, TM, t, t + h) <= b.total
    with pytest.raises(ConfigError):
        cm.j1_time_increment_bound(SM, TM, t, 0.1, 0.2)


def test_holder_constants(table):
    c = cm.holder_constants(SM, TM, table, 1.0, 2, 0.3)
    assert all(math.isfinite(v) and v > 0 for v in c.as_tuple())
    assert c.theta == pytest.approx(0.7)
    c4 = cm.holder_constants(SM, TM, table, 1.0, 4, 0.3)
    assert all(x <= y for x, y in zip(c.as_tuple(), c4.as_tuple()))
    c_half = cm.holder_constants(SM, TM, table, 0.5, 2, 0.3)
    assert all(x <= y for x, y in zip(c_half.as_tuple(), c.as_tuple()))
    with pytest.raises(ConfigError):
        cm.holder_constants(SM, TM, table, 1.0, 2, 0.2)


def test_moment_report():
    rep = cm.MomentReport()
    rep.add("alpha", 1, 0.5, 0.0, 1.0, 0.1, 2.0)
    rep.add("alpha", 2, 0.5, 0.0, 2.2, 0.1, 2.0)
    rep.add("alpha", 2, 1.0, 0.0, 2.4, 0.1, 2.0)
    assert len(rep.violations()) == 1
    lines = rep.to_csv().splitlines()
    assert lines[0] == "kind,n,t,lag,value,stderr,bound"
    assert lines[1] == "alpha,1,0.5,0,1,0.10000000000000001,2"


def test_one_minus_kummer_small_argument():
    # series branch and the scipy branch must agree where they meet
    for x in (0.5, 0.999, 1.0, 1.001, 2.0):
        lo = cm._one_minus_kummer(0.25, 0.5, x)
        assert lo == pytest.approx(1.0 - float(special.hyp1f1(0.25, 0.5, -x)), rel=1e-12)
    assert cm._one_minus_kummer(0.25, 0.5, 1e-20) == pytest.approx(0.5e-20, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0.05, 1.0), s=st.floats(0.05, 1.0))
def test_covariance_cauchy_schwarz(t, s):
    c = cm.j1_covariance(SM, TM, t, s)
    assert c * c <= cm.j1_covariance(SM, TM, t, t) * cm.j1_covariance(SM, TM, s, s) * (1 + 1e-9)
    assert c >= 0
