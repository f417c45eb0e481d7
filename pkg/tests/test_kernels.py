import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracle_values import ORACLES
from pam import kernels as kn
from pam import spectral_models as sp
from pam.errors import ConfigError, SeriesTruncationError


@pytest.fixture(scope="module")
def table_d1():
    return kn.h_n_table(sp.SpatialSpectralModel(1, 0.5), 120, 1.0, 64)


@pytest.fixture(scope="module")
def table_d1_alpha1():
    return kn.h_n_table(sp.SpatialSpectralModel(1, 1.0), 160, 1.0, 16)


@pytest.mark.parametrize("key", sorted(ORACLES["k"]))
def test_k_quadrature_matches_oracle(key):
    d, alpha, t = key
    got = kn.k_quadrature(sp.SpatialSpectralModel(d, alpha), t)
    assert got == pytest.approx(ORACLES["k"][key], rel=1e-9)


def test_k_eval_rejects_nonpositive():
    m = sp.SpatialSpectralModel(1, 0.5)
    with pytest.raises(ConfigError):
        kn.k_eval(m, 0.0)
    with pytest.raises(ConfigError):
        kn.k_quadrature(m, -1.0)
    np.testing.assert_allclose(kn.k_eval(m, [1.0, 4.0]), [ORACLES["k"][(1, 0.5, 1.0)],
                                                          ORACLES["k"][(1, 0.5, 4.0)]], rtol=1e-14)


@pytest.mark.parametrize("d, alpha", [(1, 0.5), (2, 1.5)])
def test_h_table_matches_closed_form(d, alpha):
    table = kn.h_n_table(sp.SpatialSpectralModel(d, alpha), 8, 4.0, 16)
    for t in (0.25, 1.0, 4.0):
        h = table.h_at(t)
        for n in range(1, 6):
            assert h[n] == pytest.approx(ORACLES["h"][(d, alpha, n, t)], rel=1e-10), (t, n)


def test_h_closed_form_matches_oracle():
    for (d, alpha, n, t), ref in ORACLES["h"].items():
        got = float(kn.h_n_closed_form(sp.SpatialSpectralModel(d, alpha), n, t))
        assert got == pytest.approx(ref, rel=1e-13)


def test_h1_is_antiderivative_of_k():
    m = sp.SpatialSpectralModel(1, 0.5)
    t = 0.7
    expected = m.k_constant * t ** 0.75 / 0.75
    assert float(kn.h_n_closed_form(m, 1, t)) == pytest.approx(expected, rel=1e-14)


def test_h_grid_values_and_zero(table_d1):
    ref = kn.h_n_closed_form(table_d1.model, 3, table_d1.grid)
    np.testing.assert_allclose(table_d1.h_values[3], ref, rtol=1e-9)
    h0 = table_d1.h_at(0.0)
    assert h0[0] == 1.0 and np.all(h0[1:] == 0.0)
    assert table_d1.h_at(1e-9)[1] < 1e-5


def test_table_is_immutable(table_d1):
    with pytest.raises(ValueError):
        table_d1.h_values[1, 0] = 0.0


def test_table_rejects_bad_args():
    m = sp.SpatialSpectralModel(1, 0.5)
    with pytest.raises(ConfigError):
        kn.h_n_table(m, 0)
    with pytest.raises(ConfigError):
        kn.h_n_table(m, kn.N_MAX_LIMIT + 1)
    with pytest.raises(ConfigError):
        kn.h_n_table(m, 5, 1.0, 0)
    with pytest.raises(ConfigError):
        kn.h_n_table(m, 5, 1.0, 8).h_at(2.0)


def test_csv_header_and_precision(table_d1):
    text = table_d1.to_csv(n_max=4)
    lines = text.splitlines()
    assert lines[0] == "t,k,h1,h2,h3,h4"
    assert len(lines) == 1 + table_d1.n_grid
    vals = [float(v) for v in lines[-1].split(",")]
    assert vals[0] == 1.0
    assert vals[1] == float(table_d1.k_values[-1])
    assert vals[2] == float(table_d1.h_values[1, -1])


@pytest.mark.parametrize("key", [k for k in sorted(ORACLES["H"]) if k[1] == 0.5])
def test_big_H_matches_series(table_d1, key):
    _, _, t, g = key
    val = kn.big_H(table_d1, t, g)
    assert val.value == pytest.approx(ORACLES["H"][key], rel=1e-10)
    assert 0 <= val.tail_bound <= 1e-12 * val.value
    assert val.truncation_index < table_d1.n_max


@pytest.mark.parametrize("key", [k for k in sorted(ORACLES["H"]) if k[1] == 1.0])
def test_big_H_alpha1(table_d1_alpha1, key):
    _, _, t, g = key
    assert kn.big_H(table_d1_alpha1, t, g).value == pytest.approx(ORACLES["H"][key], rel=1e-9)


@pytest.mark.parametrize("key", sorted(ORACLES["H_tilde"]))
def test_big_H_tilde_matches_series(table_d1, key):
    # square roots lift high orders that sit at the table's absolute rounding
    # floor (about 1e-16 of sup h_n on [0, T]); measured worst case is 9e-10
    _, _, t, g = key
    assert kn.big_H_tilde(table_d1, t, g).value == pytest.approx(ORACLES["H_tilde"][key], rel=1e-8)


def test_series_trivial_values(table_d1):
    assert kn.big_H(table_d1, 0.5, 0.0).value == 1.0
    assert kn.big_H_tilde(table_d1, 0.5, 0.0).value == 1.0
    assert kn.big_H(table_d1, 0.0, 3.0).value == 1.0
    with pytest.raises(ConfigError):
        kn.big_H(table_d1, 0.5, -1.0)


def test_series_truncation_error():
    small = kn.h_n_table(sp.SpatialSpectralModel(1, 0.5), 4, 1.0, 8)
    with pytest.raises(SeriesTruncationError):
        kn.big_H(small, 1.0, 2.0)


@settings(max_examples=30, deadline=None)
@given(t1=st.floats(0.05, 1.0), t2=st.floats(0.05, 1.0), g1=st.floats(0.1, 2.0), g2=st.floats(0.1, 2.0))
def test_series_monotone_and_norm_inequality(table_d1, t1, t2, g1, g2):
    (ta, tb), (ga, gb) = sorted((t1, t2)), sorted((g1, g2))
    H = lambda t, g: kn.big_H(table_d1, t, g).value
    Ht = lambda t, g: kn.big_H_tilde(table_d1, t, g).value
    assert H(ta, ga) <= H(tb, gb) * (1 + 1e-12)
    assert Ht(ta, ga) <= Ht(tb, gb) * (1 + 1e-12)
    assert Ht(tb, gb) >= math.sqrt(H(tb, gb)) * (1 - 1e-12)


@settings(max_examples=30, deadline=None)
@given(t=st.floats(1e-3, 1.0))
def test_h_n_positive_and_increasing_in_t(table_d1, t):
    h = table_d1.h_at(t)
    h2 = table_d1.h_at(min(1.0, 1.1 * t))
    assert np.all(h[1:6] > 0)
    assert np.all(h2[1:6] >= h[1:6] * (1 - 1e-10))


def test_cond_k_integral():
    m = sp.SpatialSpectralModel(1, 0.5)
    v = kn.cond_k_integral(m, 0.5)
    assert v == pytest.approx(m.k_constant / 0.25, rel=1e-10)
    assert kn.cond_k_integral(m, 0.25) == math.inf
    assert kn.cond_k_integral(m, 0.2) == math.inf


@pytest.mark.parametrize("d, alpha", [(1, 0.5), (2, 1.5), (3, 0.8)])
def test_cond_k_finiteness_agrees_with_holder(d, alpha):
    m = sp.SpatialSpectralModel(d, alpha)
    for i in range(20):
        eta = (i + 0.5) / 20
        assert math.isfinite(kn.cond_k_integral(m, eta)) == math.isfinite(sp.holder_integral(m, eta))


def test_rho():
    m = sp.SpatialSpectralModel(1, 1.0)
    # c t^{1-theta-a} / (1-theta-a) with c = sqrt(pi), theta = 0.25, a = 0.5
    assert kn.rho(m, 1.0, 0.25) == pytest.approx(math.sqrt(math.pi) / 0.25, rel=1e-10)
    assert kn.rho(m, 0.0, 0.25) == 0.0
    assert kn.rho(m, 1e-12, 0.25) < 1e-2
    assert kn.rho(m, 0.5, 0.25) < kn.rho(m, 1.0, 0.25)
    assert kn.rho(m, 1.0, 0.5) == math.inf
