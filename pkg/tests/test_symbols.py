import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degenhyp.errors import DataError, DomainError
from degenhyp.symbols import (SymbolOrders, adjoint_leading, compose_leading,
                              ellipticity_margin, estimate_constants,
                              from_system_data, identity_symbol,
                              make_symbol_grid, principal_symbols,
                              scalar_structured, time_derivative_leading,
                              weight_power_symbol)
from degenhyp.weights import DegeneracySpec, bracket, smooth_cutoff

SPEC = DegeneracySpec(l_star=1, T=1.0)
CUT = smooth_cutoff()


def rand_points(rng, n, t_min=0.05):
    for _ in range(n):
        yield (rng.uniform(t_min, 1.0), rng.normal(),
               rng.uniform(1.0, 300.0) * rng.choice([-1.0, 1.0]))


# ---------------------------------------------------------------------------
# principal parts
# ---------------------------------------------------------------------------

def test_weight_power_principal_parts():
    _, sym = weight_power_symbol(SPEC, CUT, 1.0, 1.0)
    rng = np.random.default_rng(0)
    for t, x, xi in rand_points(rng, 20):
        pp = principal_symbols(sym, t, x, xi)
        expect = t ** -1.0 * (t**2 * abs(xi)) ** 1.0
        assert pp.principal.item() == pytest.approx(expect, rel=1e-13)
        assert pp.secondary.item() == 0.0


def test_weight_power_general_orders():
    _, sym = weight_power_symbol(SPEC, CUT, 2.0, 1.0)
    pp = principal_symbols(sym, 0.5, 0.0, 12.0)
    assert pp.principal.item() == pytest.approx(0.5**-1 * (0.5**2 * 12.0) ** 2, rel=1e-13)


def test_principal_at_zero_time():
    # m(l+1) > eta: zero limit
    _, sym = weight_power_symbol(SPEC, CUT, 1.0, 1.0)
    assert principal_symbols(sym, 0.0, 0.0, 5.0).principal.item() == 0.0
    # m(l+1) == eta: the top part survives
    _, sym2 = weight_power_symbol(SPEC, CUT, 1.0, 2.0)
    assert principal_symbols(sym2, 0.0, 0.0, 5.0).principal.item() == pytest.approx(5.0)
    # m(l+1) < eta: rejected
    _, sym3 = weight_power_symbol(SPEC, CUT, 0.0, 1.0)
    with pytest.raises(DomainError):
        principal_symbols(sym3, 0.0, 0.0, 5.0)
    with pytest.raises(DomainError):
        principal_symbols(sym, 0.5, 0.0, 0.0)


def test_model_system_display():
    # the 2x2 model system: principal t|xi| [[0,1],[1,0]],
    # secondary -i [[1,0],[b,0]] with b = (4k+1) sgn xi
    k = 1.0
    A0 = lambda t, x, s: np.array([[0, 1], [1, 0]], dtype=complex)
    A1 = lambda x, s: np.array([[1, 0], [(4 * k + 1) * s, 0]], dtype=complex)
    sym = from_system_data(SPEC, 2, A0, A1)
    rng = np.random.default_rng(1)
    for t, x, xi in rand_points(rng, 10):
        pp = principal_symbols(sym, t, x, xi)
        b = (4 * k + 1) * np.sign(xi)
        assert np.abs(pp.principal - t * abs(xi) * np.array([[0, 1], [1, 0]])).max() < 1e-12 * t * abs(xi)
        assert np.abs(pp.secondary - (-1j) * np.array([[1, 0], [b, 0]])).max() == 0.0


def test_differential_symbol_example():
    # a = sum_{|alpha| <= 2} a_alpha(t,x) t^((alpha(l+1)-2)^+) xi^alpha has
    # principal sum_{|alpha|=2} a_alpha (t^l xi)^2 at orders (2, 2)
    a2 = lambda t, x: 1.0 + 0.5 * np.sin(x) + 0.25 * t
    a1 = lambda t, x: 2.0 - np.cos(x)
    sym = scalar_structured(
        SPEC, 2.0, 2.0,
        a0=lambda t, x, z: a2(t, x) * z**2,
        a1=lambda t, x, z: a1(t, x) * z,
    )
    rng = np.random.default_rng(2)
    for t, x, xi in rand_points(rng, 10):
        pp = principal_symbols(sym, t, x, xi)
        assert pp.principal.item() == pytest.approx(a2(t, x) * (t**SPEC.l_star * xi) ** 2, rel=1e-12)
        assert pp.secondary.item() == pytest.approx(a1(0.0, x) * xi, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(s=st.sampled_from([2.0, 10.0]), t=st.floats(0.0, 1.0),
       x=st.floats(-3.0, 3.0), zeta=st.floats(0.5, 100.0),
       sign=st.sampled_from([-1.0, 1.0]))
def test_homogeneity(s, t, x, zeta, sign):
    _, sym = weight_power_symbol(SPEC, CUT, 1.0, 1.0)
    z = sign * zeta
    lhs = sym.a0(t, x, s * z)
    rhs = s**1.0 * np.asarray(sym.a0(t, x, z))
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()


# ---------------------------------------------------------------------------
# leading calculus
# ---------------------------------------------------------------------------

def test_compose_identity():
    k = 0.5
    A0 = lambda t, x, s: np.array([[0, 1], [1, 0]], dtype=complex)
    A1 = lambda x, s: np.array([[1, 0], [(4 * k + 1) * s, 0]], dtype=complex)
    sym = from_system_data(SPEC, 2, A0, A1)
    comp = compose_leading(sym, identity_symbol(SPEC, 2))
    rng = np.random.default_rng(3)
    for t, x, xi in rand_points(rng, 10):
        pa = principal_symbols(sym, t, x, xi)
        pc = principal_symbols(comp, t, x, xi)
        assert np.abs(pa.principal - pc.principal).max() < 1e-13 * (1 + np.abs(pa.principal).max())
        assert np.abs(pa.secondary - pc.secondary).max() < 1e-13


def test_compose_product_identities():
    rng = np.random.default_rng(4)
    A0a = lambda t, x, s: np.array([[0, 1], [1, 0]], dtype=complex) * (1 + 0.2 * np.sin(x))
    A1a = lambda x, s: np.array([[1, 0.3j], [2 * s, 0]], dtype=complex)
    A0b = lambda t, x, s: np.array([[1, 0.5], [0.5, -1]], dtype=complex) * (1 + 0.1 * t)
    A1b = lambda x, s: np.array([[0, s], [1, 0.7]], dtype=complex) * np.cos(x)
    a = from_system_data(SPEC, 2, A0a, A1a)
    b = from_system_data(SPEC, 2, A0b, A1b)
    ab = compose_leading(a, b)
    assert ab.orders.m == 2.0 and ab.orders.eta == 2.0
    assert ab.remainder_budget == (1.0, 0.0)
    for t, x, xi in rand_points(rng, 50):
        pa, pb = principal_symbols(a, t, x, xi), principal_symbols(b, t, x, xi)
        pab = principal_symbols(ab, t, x, xi)
        scale = max(1.0, np.abs(pab.principal).max())
        assert np.abs(pab.principal - pa.principal @ pb.principal).max() < 1e-12 * scale
        cross = pa.secondary_top @ pb.secondary + pa.secondary @ pb.secondary_top
        assert np.abs(pab.secondary - cross).max() < 1e-12 * max(1.0, np.abs(cross).max())


def test_compose_size_mismatch():
    a = identity_symbol(SPEC, 2)
    b = identity_symbol(SPEC, 3)
    with pytest.raises(DomainError):
        compose_leading(a, b)


def test_adjoint_exact():
    A0 = lambda t, x, s: np.array([[0, 1 + 1j * t], [1, 0]], dtype=complex)
    A1 = lambda x, s: np.array([[1j, x], [2 * s, 0.5]], dtype=complex)
    sym = from_system_data(SPEC, 2, A0, A1)
    adj = adjoint_leading(sym)
    rng = np.random.default_rng(5)
    for t, x, xi in rand_points(rng, 10):
        pa, pj = principal_symbols(sym, t, x, xi), principal_symbols(adj, t, x, xi)
        assert np.array_equal(pj.principal, pa.principal.conj().T)
        assert np.array_equal(pj.secondary, pa.secondary.conj().T)


def test_time_derivative_leading_top_identity():
    # For eta = (l+1) m the top part of D_t a vanishes (one order drops out).
    _, sym = weight_power_symbol(SPEC, CUT, 1.0, 2.0)
    dsym = time_derivative_leading(sym)
    assert dsym.orders.eta == 3.0
    for xi in [3.0, -20.0, 111.0]:
        top = principal_symbols(dsym, 0.3, 0.0, xi).secondary_top
        assert np.abs(top).max() < 1e-12 * abs(xi)
    # general order: top(D_t a) = -i (m(l+1) - eta) top(a)
    _, sym2 = weight_power_symbol(SPEC, CUT, 1.0, 1.0)
    d2 = time_derivative_leading(sym2)
    pp = principal_symbols(d2, 0.2, 0.0, 7.0)
    assert pp.secondary_top.item() == pytest.approx(-1j * (2 - 1) * 7.0, rel=1e-10)


# ---------------------------------------------------------------------------
# membership estimates
# ---------------------------------------------------------------------------

GRID = make_symbol_grid(SPEC)


@pytest.mark.parametrize("m,eta", [(1.0, 1.0), (0.0, 1.0), (1.0, 0.0)])
def test_estimate_weight_powers_pass(m, eta):
    full, _ = weight_power_symbol(SPEC, CUT, m, eta)
    rep = estimate_constants(full, SymbolOrders(m, eta), GRID, (2, 1, 2), spec=SPEC)
    assert rep.passed, [(e.j, e.alpha, e.beta, e.constant, e.refined_constant)
                        for e in rep.entries if not e.passed]
    assert all(np.isfinite(e.constant) for e in rep.entries)


def test_estimate_lambda_bracket_fails():
    a = lambda t, x, xi: SPEC.lam(t) * bracket(xi) + 0.0 * x
    rep = estimate_constants(a, SymbolOrders(0.0, 0.0), GRID, (1, 0, 1), spec=SPEC)
    assert not rep.passed
    e000 = [e for e in rep.entries if (e.j, e.alpha, e.beta) == (0, 0, 0)][0]
    assert e000.refined_constant > 1.5 * e000.constant  # grows with the grid


def test_estimate_chi_minus_decay():
    chim = lambda t, x, xi: 1.0 - CUT(SPEC.Lam(t) * bracket(xi)) + 0.0 * x
    rep = estimate_constants(chim, SymbolOrders(-1.0, 0.0), GRID, (2, 1, 2), spec=SPEC)
    assert rep.passed
    # the bracket-power variant sits one eta higher; at (-1, 0) it must fail
    chim_b = lambda t, x, xi: (1.0 - CUT(SPEC.Lam(t) * bracket(xi))) * bracket(xi) ** SPEC.beta_star + 0.0 * x
    assert estimate_constants(chim_b, SymbolOrders(-1.0, 1.0), GRID, (2, 1, 2), spec=SPEC).passed
    assert not estimate_constants(chim_b, SymbolOrders(-1.0, 0.0), GRID, (0, 0, 0), spec=SPEC).passed


def test_estimate_union_bound_for_time_derivative():
    # d_t (g h^l) with eta = (l+1) m lands in the union of (m, eta) and
    # (m-1, eta+1); the two weight scales mix slowly, so the base grid needs
    # a long frequency range before the constant stabilizes.
    full, _ = weight_power_symbol(SPEC, CUT, 1.0, 2.0)

    def dta(t, x, xi):
        h = 1e-4 * (t + bracket(xi) ** -SPEC.beta_star)
        return (full(t + h, x, xi) - full(t - h, x, xi)) / (2 * h)

    grid = make_symbol_grid(SPEC, xi_max=4096.0, nxi=14)
    rep = estimate_constants(dta, SymbolOrders(1.0, 2.0), grid, (0, 1, 1), spec=SPEC,
                             order_pairs=[(0.0, 3.0), (1.0, 2.0)])
    assert rep.passed
    # as a plain (1, 2) symbol the same derivative fails
    rep2 = estimate_constants(dta, SymbolOrders(1.0, 2.0), grid, (0, 0, 0), spec=SPEC)
    assert not rep2.passed


def test_estimate_nonfinite_data_error():
    bad = lambda t, x, xi: np.where(bracket(xi) > 100.0, np.inf, 1.0) + 0.0 * (t + x)
    with pytest.raises(DataError):
        estimate_constants(bad, SymbolOrders(0.0, 0.0), GRID, (0, 0, 0), spec=SPEC)


def test_estimate_report_csv(tmp_path):
    full, _ = weight_power_symbol(SPEC, CUT, 1.0, 1.0)
    rep = estimate_constants(full, SymbolOrders(1.0, 1.0), GRID, (1, 0, 1), spec=SPEC)
    path = tmp_path / "report.csv"
    rep.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "j,alpha,beta,C,verdict"
    assert len(lines) == 1 + len(rep.entries)
    assert all(line.split(",")[-1] in ("pass", "fail") for line in lines[1:])


# ---------------------------------------------------------------------------
# ellipticity
# ---------------------------------------------------------------------------

def test_ellipticity_of_g():
    full, _ = weight_power_symbol(SPEC, CUT, 1.0, 1.0)
    out = ellipticity_margin(full, SymbolOrders(1.0, 1.0), GRID, spec=SPEC)
    assert out["passed"]
    # the margin is the weights-module band floor for g/gbar
    assert 0.9 * 0.45 < out["c1"] < 1.1 * 1.0


def test_ellipticity_zero_symbol_fails():
    out = ellipticity_margin(lambda t, x, xi: 0.0 * (t + x + xi), SymbolOrders(0.0, 0.0),
                             GRID, spec=SPEC)
    assert out["c1"] == 0.0 and not out["passed"]


def test_ellipticity_vandermonde():
    mat = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex)

    def a(t, x, xi):
        shape = np.broadcast_shapes(np.shape(t), np.shape(x), np.shape(xi))
        return np.broadcast_to(mat, shape + (2, 2))

    out = ellipticity_margin(a, SymbolOrders(0.0, 0.0), GRID, spec=SPEC, size=2)
    assert out["c1"] == pytest.approx(2.0, rel=1e-12)
