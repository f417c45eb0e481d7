import math

import pytest
from hypothesis import given, settings, strategies as st

from oracle_values import ORACLES
from pam import chaos_moments as cm
from pam import regularity as rg
from pam import spectral_models as sp
from pam.errors import ConfigError


@pytest.mark.parametrize("key", sorted(ORACLES["shifted_gaussian"]))
def test_shifted_gaussian_matches_kummer(key):
    d, alpha, t, shift = key
    model = sp.SpatialSpectralModel(d, alpha)
    got = rg.shifted_gaussian(model, t, shift)
    assert got == pytest.approx(ORACLES["shifted_gaussian"][key], rel=1e-9)


@pytest.mark.parametrize("d, alpha", [(1, 0.5), (2, 1.0), (3, 0.8)])
def test_shifted_gaussian_zero_and_far(d, alpha):
    model = sp.SpatialSpectralModel(d, alpha)
    t = 0.7
    k = float(model.k(t))
    assert rg.shifted_gaussian(model, t, 0.0) == pytest.approx(k, rel=1e-9)
    # decentering decays only algebraically: 1F1(a; b; -x) ~ Gamma(b)/Gamma(b-a) x^-a
    far = rg.shifted_gaussian(model, t, 10.0 / math.sqrt(t))
    a, b = (d - alpha) / 2, d / 2
    assert far / k == pytest.approx(math.gamma(b) / math.gamma(b - a) * 100.0 ** -a, rel=0.02)
    assert far < 0.5 * k


def test_shift_sign_symmetry_d1():
    model = sp.SpatialSpectralModel(1, 0.5)
    a = rg._space_lhs(model, 1.0, 0.3, 0.8, sp.DEFAULT_QUAD)
    b = rg._space_lhs(model, 1.0, 0.3, -0.8, sp.DEFAULT_QUAD)
    assert a == pytest.approx(b, rel=1e-9)


@pytest.mark.parametrize("d, alpha", [(1, 0.5), (1, 1.0), (2, 1.5), (3, 0.8)])
@pytest.mark.parametrize("t", [0.25, 1.0])
def test_shift_sup_max_at_zero(d, alpha, t):
    rep = rg.verify_shift_sup(sp.SpatialSpectralModel(d, alpha), t)
    assert rep.passed
    assert rep.rows[0][3] == pytest.approx(1.0, rel=1e-9)


def test_smoothing_bound_time_example():
    # t = h = 1, theta = 0.5, d = 1, alpha = 0.5
    rep = rg.verify_time_smoothing_bound(sp.SpatialSpectralModel(1, 0.5), 1.0, [1.0], etas=[0.5])
    assert rep.passed and rep.max_ratio < 1.0


def test_smoothing_bound_time_lhs_over_h_theta_bounded():
    model = sp.SpatialSpectralModel(1, 0.5)
    hs = [2.0 ** -k for k in range(2, 11)]
    rep = rg.verify_time_smoothing_bound(model, 1.0, hs, etas=[0.5])
    scaled = [r[1] / h ** 0.5 for r, h in zip(rep.rows, hs)]
    # the ratio decays once h is small (lhs ~ h^2)
    assert max(scaled) == pytest.approx(scaled[0], rel=0.5)
    assert scaled[-1] < scaled[0]


def test_smoothing_bound_space_example():
    rep = rg.verify_space_smoothing_bound(sp.SpatialSpectralModel(1, 0.5), 1.0, [0.1], etas=[0.5])
    assert rep.passed and 0.0 < rep.max_ratio < 1.0


def test_smoothing_bound_space_zero_lag_boundary():
    rep = rg.verify_space_smoothing_bound(sp.SpatialSpectralModel(1, 0.5), 1.0, [0.0], etas=[0.5])
    assert rep.rows[0][1] == 0.0 and rep.rows[0][2] == 0.0
    assert rep.passed


@pytest.mark.parametrize("d, alpha", [(2, 1.0), (3, 0.8)])
def test_smoothing_bound_space_higher_dim_zero_shift(d, alpha):
    rep = rg.verify_space_smoothing_bound(sp.SpatialSpectralModel(d, alpha), 1.0, [0.1, 0.5], etas=[0.5, 0.9])
    assert rep.passed
    assert any("zero shift" in n for n in rep.notes)


def test_slack_limit_zero_fails():
    rep = rg.verify_time_smoothing_bound(sp.SpatialSpectralModel(1, 0.5), 1.0, [0.5], slack_limit=0.0)
    assert not rep.passed


def test_constants():
    assert cm.c_theta(1.0) == pytest.approx(2.0 / math.e)
    assert cm.k_theta(1.0) == 1.0
    # (ii) is an equality at the stationary point x^2 = 2 theta / A
    th, A = 0.3, 2.5
    x = math.sqrt(2 * th / A)
    lhs = math.exp(-A * x * x) * x ** (2 * th)
    rhs = cm.c_theta(th) * A ** -th * math.exp(-A * x * x / 2)
    assert lhs == pytest.approx(rhs, rel=1e-14)


def test_scalar_inequalities_small():
    rep = rg.verify_scalar_inequalities(20000, seed=3)
    assert rep.passed
    assert all(rep.violations[k] == 0 for k in ("i", "ii", "iii", "iv", "squared_2K"))
    # the squared form with K_theta alone does fail
    assert rep.violations["squared_K"] > 0


def test_scalar_inequalities_reproducible():
    a = rg.verify_scalar_inequalities(5000, seed=11).to_dict()
    b = rg.verify_scalar_inequalities(5000, seed=11).to_dict()
    assert a == b


# ---------------------------------------------------------------------------
# exponent fitting

LAGS = [2.0 ** -4 * 0.5 ** k for k in range(9)]


def test_fit_exact_power():
    rep = rg.fit_holder_exponent(lambda h: 3.0 * h ** 0.8, "time", 1.0, LAGS, 0.75)
    assert rep.slope == pytest.approx(0.8, abs=1e-12)
    assert rep.verdict == "PASS" and rep.close_to_theory
    assert rep.to_csv().startswith("lag,moment,fit\n")


def test_fit_flat_data_fails():
    rep = rg.fit_holder_exponent(lambda h: 2.0, "space", 1.0, LAGS, 1.5)
    assert rep.slope == pytest.approx(0.0, abs=1e-12)
    assert rep.verdict == "FAIL"


@pytest.mark.parametrize("lags", [LAGS[:5], LAGS[::-1], [1, 0.5, 0.2, 0.1, 0.05, 0.01]])
def test_fit_rejects_bad_grids(lags):
    with pytest.raises(ConfigError):
        rg.fit_holder_exponent(lambda h: h, "time", 1.0, lags, 1.0)


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(1e-6, 1e6), power=st.floats(0.1, 2.5))
def test_fit_slope_scale_invariant(scale, power):
    base = rg.fit_holder_exponent(lambda h: h ** power * (1 + h), "time", 1.0, LAGS, 1.0)
    scaled = rg.fit_holder_exponent(lambda h: scale * h ** power * (1 + h), "time", 1.0, LAGS, 1.0)
    assert scaled.slope == pytest.approx(base.slope, abs=1e-6)


def test_theory_exponents_examples():
    th = rg.theory_exponents(sp.SpatialSpectralModel(1, 0.5))
    assert th["time"] == 0.75 and th["space"] == 1.5
    assert th["theta1_max"] == 0.375 and th["theta2_max"] == 0.75


@pytest.mark.parametrize("alpha, beta", [(0.5, 0.5), (1.0, 0.25)])
def test_increment_slopes_match_scaling(alpha, beta):
    sm, tm = sp.SpatialSpectralModel(1, alpha), sp.TemporalCovarianceModel(beta)
    sc = rg.scaling_exponents(sm, beta)
    th = rg.theory_exponents(sm)
    fit = rg.fit_holder_exponent(lambda h: cm.j1_time_increment(sm, tm, 1.0, 1.0 + h), "time", 1.0,
                                 LAGS, th["time"], scaling_exponent=sc["time"])
    assert fit.verdict == "PASS"
    assert fit.slope == pytest.approx(sc["time"], abs=0.05)
