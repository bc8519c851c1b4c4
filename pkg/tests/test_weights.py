import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from degenhyp.errors import DomainError
from degenhyp.weights import (DegeneracySpec, bracket, bracket_k, cutoffs,
                              degeneracy, order_shift_weight, smooth_cutoff,
                              weight_pair, weight_time_derivatives)

CUT = smooth_cutoff()

# Fixed-cutoff equivalence bands, recorded once for the shipped transition
# function (label "exp-transition") and asserted ever since.  Any admissible
# cutoff changes these constants.
BANDS = {
    1: {"g": (0.45, 1.001), "h": (0.999, 2.2)},
    2: {"g": (0.45, 1.001), "h": (0.999, 2.1)},
}


def sweep_grid(spec, nt=60, nxi=80, xi_max=1e4):
    t = np.concatenate(([0.0], np.geomspace(1e-4, spec.T, nt)))[:, None]
    xi = np.geomspace(1.0, xi_max, nxi)[None, :]
    return t, xi


def test_degeneracy_values():
    spec = DegeneracySpec(l_star=1, T=1.0)
    d = degeneracy(spec, 1.0)
    assert d["lambda"] == 1.0 and d["Lambda"] == 0.5
    spec2 = DegeneracySpec(l_star=2, T=1.0)
    d0 = degeneracy(spec2, 0.0)
    assert d0["lambda"] == 0.0 and d0["Lambda"] == 0.0
    d1 = degeneracy(spec2, 1.0)
    assert d1["lambda"] == 1.0 and d1["Lambda"] == pytest.approx(1.0 / 3.0, abs=0)
    assert spec2.beta_star * (spec2.l_star + 1) == 1.0


def test_degeneracy_domain_error():
    spec = DegeneracySpec(l_star=1, T=1.0)
    with pytest.raises(DomainError):
        degeneracy(spec, -0.1)
    with pytest.raises(DomainError):
        degeneracy(spec, 1.5)
    with pytest.raises(DomainError):
        DegeneracySpec(l_star=0)
    with pytest.raises(DomainError):
        DegeneracySpec(l_star=1, T=-1.0)


@pytest.mark.parametrize("l_star", [1, 2, 3])
def test_primitive_matches_quadrature(l_star):
    spec = DegeneracySpec(l_star=l_star, T=1.0)
    for t in [0.2, 0.7, 1.0]:
        val, _ = quad(lambda s: spec.lam(s), 0.0, t, epsabs=1e-14, epsrel=1e-14)
        assert abs(val - spec.Lam(t)) < 1e-12


def test_cutoff_support_and_monotonicity():
    s = np.linspace(-1.0, 2.0, 2001)
    chi = CUT(s)
    assert np.all(chi[s <= 0.5] == 0.0)
    assert np.all(chi[s >= 1.0] == 1.0)
    assert np.all(np.diff(chi) >= -1e-15)
    assert np.all((chi >= 0.0) & (chi <= 1.0))


def test_cutoff_derivative_matches_fd():
    s = np.linspace(0.51, 0.99, 97)
    h = 1e-6
    fd = (CUT(s + h) - CUT(s - h)) / (2 * h)
    assert np.abs(fd - CUT.derivative(s)).max() < 1e-6
    # derivatives vanish outside the transition
    assert CUT.derivative(0.4) == 0.0 and CUT.derivative(1.3) == 0.0


def test_cutoffs_edge_cases(spec1):
    c = cutoffs(spec1, CUT, 0.0, 1e6)
    assert c["chi_plus"] == 0.0 and c["chi_minus"] == 1.0
    c = cutoffs(spec1, CUT, 1.0, 10.0)  # Lam(1)<10> = 5.02 >= 1
    assert c["chi_plus"] == 1.0


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0.0, 1.0), xi=st.floats(-1e6, 1e6))
def test_cutoff_partition_of_unity(t, xi):
    spec = DegeneracySpec(l_star=1, T=1.0)
    c = cutoffs(spec, CUT, t, xi)
    assert c["chi_plus"] + c["chi_minus"] == pytest.approx(1.0, abs=1e-15)
    assert 0.0 <= c["chi_plus"] <= 1.0


def test_weight_pair_at_zero_time(spec1):
    w = weight_pair(spec1, CUT, 0.0, 10.0)
    expect = bracket(10.0) ** spec1.beta_star
    assert w.g == pytest.approx(expect, rel=1e-15)
    assert w.h == pytest.approx(expect, rel=1e-15)


def test_weight_pair_pure_region(spec1):
    t, xi = 1.0, 100.0
    assert spec1.Lam(t) * bracket(xi) >= 1.0
    w = weight_pair(spec1, CUT, t, xi)
    assert w.g == pytest.approx(spec1.lam(t) * bracket(xi), rel=1e-15)
    assert w.h == pytest.approx(1.0 / t, rel=1e-15)
    assert w.g_bar == spec1.lam(t) * bracket(xi) + bracket(xi) ** spec1.beta_star
    assert w.h_bar == pytest.approx(1.0 / (t + bracket(xi) ** -spec1.beta_star), rel=1e-15)


@pytest.mark.parametrize("l_star", [1, 2])
def test_equivalence_band_fixture(l_star):
    spec = DegeneracySpec(l_star=l_star, T=1.0)
    lo_g, hi_g = BANDS[l_star]["g"]
    lo_h, hi_h = BANDS[l_star]["h"]
    for nt, nxi in [(60, 80), (120, 160)]:  # refinement leaves the band valid
        t, xi = sweep_grid(spec, nt, nxi)
        w = weight_pair(spec, CUT, t, xi)
        rg = w.g / w.g_bar
        rh = w.h / w.h_bar
        assert lo_g <= rg.min() and rg.max() <= hi_g, (rg.min(), rg.max())
        assert lo_h <= rh.min() and rh.max() <= hi_h, (rh.min(), rh.max())


@pytest.mark.parametrize("l_star", [1, 2])
def test_product_laws(l_star):
    spec = DegeneracySpec(l_star=l_star, T=1.0)
    t, xi = sweep_grid(spec)
    w = weight_pair(spec, CUT, t, xi)
    prod1 = w.g_bar * w.h_bar**l_star / bracket(xi)
    prod2 = w.g_bar / w.h_bar / (1.0 + spec.Lam(t) * bracket(xi))
    assert 0.2 < prod1.min() and prod1.max() < 5.0
    assert 0.2 < prod2.min() and prod2.max() < 5.0


def test_weight_time_derivatives_match_fd(spec1):
    t = np.concatenate((np.geomspace(1e-3, 1.0 - 1e-3, 40),))[:, None]
    xi = np.geomspace(1.0, 1e3, 30)[None, :]
    w_hi = weight_pair(spec1, CUT, t + 1e-7, xi)
    w_lo = weight_pair(spec1, CUT, t - 1e-7, xi)
    dg_fd = (w_hi.g - w_lo.g) / 2e-7
    dh_fd = (w_hi.h - w_lo.h) / 2e-7
    dg, dh = weight_time_derivatives(spec1, CUT, t, xi)
    scale_g = np.abs(dg).max()
    assert np.abs(dg - dg_fd).max() < 1e-5 * max(scale_g, 1.0)
    assert np.abs(dh - dh_fd).max() < 1e-4 * max(np.abs(dh).max(), 1.0)


def test_order_shift_weight_values(spec1):
    K = 1.0
    # t = 0: bracket power
    val = order_shift_weight(spec1, CUT, K, 2.0, 0.0, 0.3, 50.0)
    assert val == pytest.approx(bracket_k(50.0, K) ** (spec1.beta_star * 2.0 * spec1.l_star), rel=1e-14)
    # delta == 0: identically one
    t = np.linspace(0.0, 1.0, 11)[:, None]
    xi = np.geomspace(1.0, 100.0, 7)[None, :]
    vals = order_shift_weight(spec1, CUT, K, lambda x: 0.0, t, 0.0, xi)
    assert np.abs(vals - 1.0).max() == 0.0
    # deep interior: pure power of 1/t
    v = order_shift_weight(spec1, CUT, K, 1.5, 0.9, 0.0, 200.0)
    assert v == pytest.approx(0.9 ** (-1.5 * spec1.l_star), rel=1e-14)
    with pytest.raises(DomainError):
        order_shift_weight(spec1, CUT, -1.0, 1.0, 0.5, 0.0, 10.0)


def test_order_shift_derivative_identity(spec1):
    # d_t(Theta)/Theta + delta l chi_plus^2 / t is controlled by
    # hbar / (1 + Lam <xi>) on grids (constant delta).
    K, delta = 1.0, 1.3
    t = np.geomspace(1e-3, 1.0 - 1e-3, 120)[:, None]
    xi = np.geomspace(1.0, 1e4, 60)[None, :]
    h = 1e-7 * (t + 1e-2)
    th = lambda tt: order_shift_weight(spec1, CUT, K, delta, tt, 0.0, xi)
    dtheta = (th(t + h) - th(t - h)) / (2 * h)
    brk = bracket_k(xi, K)
    chi_plus = CUT(spec1.Lam(t) * brk)
    lhs = dtheta / th(t) + delta * spec1.l_star * chi_plus**2 / t
    w = weight_pair(spec1, CUT, t, xi)
    bound = w.h_bar / (1.0 + spec1.Lam(t) * bracket(xi))
    ratio = np.abs(lhs) / bound
    assert ratio.max() < 50.0  # finite constant, spikes only in the transition


@settings(max_examples=50, deadline=None)
@given(t=st.floats(1e-4, 1.0), xi=st.floats(1.0, 1e5), l_star=st.integers(1, 3))
def test_weights_positive_and_banded(t, xi, l_star):
    spec = DegeneracySpec(l_star=l_star, T=1.0)
    w = weight_pair(spec, CUT, t, xi)
    assert w.g > 0 and w.h > 0 and w.g_bar > 0 and w.h_bar > 0
    assert 0.2 < w.g / w.g_bar <= 1.001
    assert 0.999 <= w.h / w.h_bar < 3.0
