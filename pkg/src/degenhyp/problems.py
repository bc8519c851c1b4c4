"""Named problem constructors shared by the CLI, tests, and scripts.

Each constructor bundles the spectral realization of a Cauchy problem with
its analysis-side objects (scalar operator / first-order system) and, where
known, the predicted loss bound, so experiments never hand-encode matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .reduction import ScalarOperator, companion_system
from .solver import SeparableSymbol, Term, qi_exact
from .systems import FirstOrderSystem
from .weights import (Cutoff, DegeneracySpec, _weights_raw, bracket,
                      smooth_cutoff, weight_time_derivatives)

__all__ = ["Problem", "qi", "wave", "transport", "differential_system",
           "reduced_qi", "hermitian_test", "diverging_test", "builtin"]


@dataclass(frozen=True)
class Problem:
    """A solvable problem plus its analysis handles and predictions."""

    name: str
    params: dict
    spec: DegeneracySpec
    system: SeparableSymbol
    initial_state: Callable  # (phi_hat, grid) -> (N, n_modes)
    extract: Callable        # (traj, index) -> spectral field for decay fits
    predicted: dict = field(default_factory=dict)
    oracle: Optional[Callable] = None  # (phi_hat, t, xi) -> u_hat
    operator: Optional[ScalarOperator] = None
    first_order: Optional[FirstOrderSystem] = None
    cutoff: Cutoff = field(default_factory=smooth_cutoff)


def _basis(n, i, j):
    E = np.zeros((n, n), dtype=complex)
    E[i, j] = 1.0
    return E


def _second_order_terms(spec: DegeneracySpec, cut: Cutoff, b0: float) -> SeparableSymbol:
    """Exact first-order reduction of u_tt - t^(2l) u_xx - b0 u_x = 0.

    With U = (g(t,D) u, D_t u):

        D_t U1 = (D_t g / g) U1 + g U2
        D_t U2 = (t^(2l) xi^2 - i b0 xi) / g * U1
    """
    l = spec.l_star

    def g_of(t, xi):
        return _weights_raw(spec, cut, t, xi).g

    def m11(t, xi):
        dg, _ = weight_time_derivatives(spec, cut, t, xi)
        return -1j * dg / g_of(t, xi)

    def m21(t, xi):
        return (t ** (2 * l) * xi**2 - 1j * b0 * xi) / g_of(t, xi)

    terms = (
        Term(multiplier=m11, coeff_x=_basis(2, 0, 0), label="dtg/g"),
        Term(multiplier=lambda t, xi: g_of(t, xi) + 0j * xi, coeff_x=_basis(2, 0, 1), label="g"),
        Term(multiplier=m21, coeff_x=_basis(2, 1, 0), label="(t^2l xi^2 - i b0 xi)/g"),
    )
    return SeparableSymbol(n_components=2, terms=terms, label=f"second-order b0={b0:g} l={l}")


def _second_order_initial(spec: DegeneracySpec, cut: Cutoff):
    def initial_state(phi_hat, grid):
        U0 = np.zeros((2, grid.n_modes), dtype=complex)
        U0[0] = _weights_raw(spec, cut, 0.0, grid.xi).g * phi_hat
        return U0
    return initial_state


def _second_order_extract(spec: DegeneracySpec, cut: Cutoff):
    def extract(traj, index):
        t = float(traj.times[index])
        return traj.states[index, 0] / _weights_raw(spec, cut, t, traj.grid.xi).g
    return extract


def _form_a_terms(spec: DegeneracySpec, cut: Cutoff, k: float) -> SeparableSymbol:
    """The 2x2 model system split into principal / singular / remainder parts.

    A = chi_plus ( t|xi| [[0,1],[1,0]] - i t^-1 [[1,0],[b,0]] ) + A2 with
    b = (4k+1) sgn xi and A2 the exact difference to the reduction form; eps
    softens t^-1 to (t+eps)^-1 and damps A2 by (t+<xi>^-b)/(t+<xi>^-b+eps).
    """
    if spec.l_star != 1:
        raise ValueError("the model family is the l_star = 1 case")
    b0 = 4.0 * k + 1.0

    def chi_plus(t, xi):
        return cut(spec.Lam(t) * bracket(xi))

    def g_of(t, xi):
        return _weights_raw(spec, cut, t, xi).g

    def inv_t(t, xi, eps):
        cp = chi_plus(t, xi)
        if eps > 0.0:
            return cp / (t + eps)
        return np.divide(cp, t, out=np.zeros_like(cp), where=cp > 0.0)

    def damp(t, xi, eps):
        r = t + bracket(xi) ** (-spec.beta_star)
        return r / (r + eps)

    def principal(t, xi):
        return chi_plus(t, xi) * t * np.abs(xi) + 0j

    def sing_11(eps):
        return lambda t, xi: -1j * inv_t(t, xi, eps)

    def sing_21(eps):
        return lambda t, xi: -1j * b0 * np.sign(xi) * inv_t(t, xi, eps)

    def exact_11(t, xi):
        dg, _ = weight_time_derivatives(spec, cut, t, xi)
        return -1j * dg / g_of(t, xi)

    def exact_12(t, xi):
        return g_of(t, xi) + 0j * xi

    def exact_21(t, xi):
        return (t**2 * xi**2 - 1j * b0 * xi) / g_of(t, xi)

    def remainder(exact, *form_parts):
        def base(t, xi):
            out = exact(t, xi)
            for part in form_parts:
                out = out - part(t, xi)
            return out

        def with_eps(eps):
            return lambda t, xi: damp(t, xi, eps) * base(t, xi)

        return base, with_eps

    rem11, rem11_eps = remainder(exact_11, sing_11(0.0))
    rem12, rem12_eps = remainder(exact_12, principal)
    rem21, rem21_eps = remainder(exact_21, principal, sing_21(0.0))

    terms = (
        Term(multiplier=principal, coeff_x=np.array([[0, 1], [1, 0]], dtype=complex), label="principal"),
        Term(multiplier=sing_11(0.0), multiplier_eps=sing_11, coeff_x=_basis(2, 0, 0), label="singular-11"),
        Term(multiplier=sing_21(0.0), multiplier_eps=sing_21, coeff_x=_basis(2, 1, 0), label="singular-21"),
        Term(multiplier=rem11, multiplier_eps=rem11_eps, coeff_x=_basis(2, 0, 0), label="remainder-11"),
        Term(multiplier=rem12, multiplier_eps=rem12_eps, coeff_x=_basis(2, 0, 1), label="remainder-12"),
        Term(multiplier=rem21, multiplier_eps=rem21_eps, coeff_x=_basis(2, 1, 0), label="remainder-21"),
    )
    return SeparableSymbol(n_components=2, terms=terms, label=f"model system k={k:g} (split form)")


def qi(k: float, T: float = 1.0, split_form: bool = False) -> Problem:
    """The model problem u_tt - t^2 u_xx - (4k+1) u_x = 0, u_t(0) = 0.

    Closed-form bound: delta = 2 max(k, -k-1/2), loss = |k+1/4| - 1/4.  For
    nonnegative integer k the explicit polynomial solution is attached as an
    oracle.  ``split_form`` selects the principal/singular/remainder split of
    the same symbol, which supports the eps-regularization.
    """
    spec = DegeneracySpec(l_star=1, T=T)
    cut = smooth_cutoff()
    b0 = 4.0 * k + 1.0
    system = _form_a_terms(spec, cut, k) if split_form else _second_order_terms(spec, cut, b0)
    operator = ScalarOperator(m=2, spec=spec, coeffs={(0, 2): -1.0, (0, 1): 1j * b0})
    fo = companion_system(operator)
    fo = FirstOrderSystem(N=fo.N, spec=spec, A0=fo.A0, A1=fo.A1, roots=fo.roots,
                          separable=_form_a_terms(spec, cut, k), cutoff=cut)
    delta_scalar = 2.0 * max(k, -k - 0.5)
    oracle = None
    if float(k).is_integer() and k >= 0:
        oracle = lambda phi_hat, t, xi: qi_exact(int(k), phi_hat, t, xi)
    return Problem(
        name="qi", params={"k": k}, spec=spec, system=system,
        initial_state=_second_order_initial(spec, cut),
        extract=_second_order_extract(spec, cut),
        predicted={"delta": delta_scalar, "loss": abs(k + 0.25) - 0.25,
                   "delta_system": delta_scalar + 1.0},
        oracle=oracle, operator=operator, first_order=fo, cutoff=cut,
    )


def wave(l_star: int = 1, T: float = 1.0) -> Problem:
    """Pure degenerate wave u_tt - t^(2l) u_xx = 0 (no lower-order term).

    The closed form gives delta = -1/2 (quotient -1/2 at both roots), i.e. a
    gain of beta l / 2 rather than a loss.
    """
    spec = DegeneracySpec(l_star=l_star, T=T)
    cut = smooth_cutoff()
    operator = ScalarOperator(m=2, spec=spec, coeffs={(0, 2): -1.0})
    return Problem(
        name="wave", params={"l_star": l_star}, spec=spec,
        system=_second_order_terms(spec, cut, 0.0),
        initial_state=_second_order_initial(spec, cut),
        extract=_second_order_extract(spec, cut),
        predicted={"delta": -0.5, "loss": -0.5 * spec.beta_star * spec.l_star},
        operator=operator, first_order=companion_system(operator), cutoff=cut,
    )


def transport(a: float = 1.0, variation: float = 0.0, l_star: int = 1, T: float = 1.0) -> Problem:
    """Scalar transport D_t u = t^l c(x) D_x u with c(x) = a (1 + variation cos x)."""
    spec = DegeneracySpec(l_star=l_star, T=T)
    cut = smooth_cutoff()

    def c_of(x):
        return a * (1.0 + variation * np.cos(x))

    if variation == 0.0:
        terms = (Term(multiplier=lambda t, xi: spec.lam(t) * xi * a + 0j, label="a t^l xi"),)
    else:
        terms = (Term(multiplier=lambda t, xi: spec.lam(t) * xi + 0j,
                      coeff_x=lambda x: np.asarray(c_of(x), dtype=complex).reshape(-1, 1, 1),
                      label="t^l c(x) xi"),)
    system = SeparableSymbol(n_components=1, terms=terms, label=f"transport a={a:g}")
    operator = ScalarOperator(m=1, spec=spec,
                              coeffs={(0, 1): (lambda t, x: -c_of(x))})
    fo = FirstOrderSystem(
        N=1, spec=spec,
        A0=lambda t, x, xi_hat: np.array([[c_of(x) * xi_hat]], dtype=complex),
        A1=lambda x, xi_hat: np.zeros((1, 1), dtype=complex),
        roots=(((lambda t, x, xi_hat: c_of(x) * xi_hat), 1),),
        separable=system, cutoff=cut,
    )
    return Problem(
        name="transport", params={"a": a, "variation": variation, "l_star": l_star},
        spec=spec, system=system,
        initial_state=lambda phi_hat, grid: phi_hat.reshape(1, -1).astype(complex),
        extract=lambda traj, index: traj.states[index, 0],
        predicted={"delta": 0.0, "loss": 0.0},
        operator=operator, first_order=fo, cutoff=cut,
    )


def differential_system(coupling: float = 1.0, variation: float = 0.3,
                        l_star: int = 1, T: float = 1.0) -> Problem:
    """Coupled 2x2 differential system D_t U = t^l c(x) M D_x U, M = [[0,1],[1,0]].

    No lower-order term can appear in such a system, so the loss is zero.
    """
    spec = DegeneracySpec(l_star=l_star, T=T)
    cut = smooth_cutoff()
    M = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)

    def c_of(x):
        return coupling * (1.0 + variation * np.cos(x))

    def coeff_x(x):
        return c_of(x)[:, None, None] * M[None, :, :]

    terms = (Term(multiplier=lambda t, xi: spec.lam(t) * xi + 0j, coeff_x=coeff_x,
                  label="t^l c(x) xi M"),)
    system = SeparableSymbol(n_components=2, terms=terms, label="differential 2x2")

    def initial_state(phi_hat, grid):
        U0 = np.zeros((2, grid.n_modes), dtype=complex)
        U0[0] = phi_hat
        return U0

    fo = FirstOrderSystem(
        N=2, spec=spec,
        A0=lambda t, x, xi_hat: c_of(np.asarray(x)) * xi_hat * M,
        A1=lambda x, xi_hat: np.zeros((2, 2), dtype=complex),
        roots=(((lambda t, x, xi_hat: c_of(np.asarray(x)) * xi_hat), 1),
               ((lambda t, x, xi_hat: -c_of(np.asarray(x)) * xi_hat), 1)),
        separable=system, cutoff=cut,
    )
    return Problem(
        name="differential", params={"coupling": coupling, "variation": variation,
                                     "l_star": l_star},
        spec=spec, system=system, initial_state=initial_state,
        extract=lambda traj, index: traj.states[index],
        predicted={"delta": 0.0, "loss": 0.0},
        first_order=fo, cutoff=cut,
    )


def reduced_qi(k: float = 1.0, T: float = 1.0) -> Problem:
    """Post-reduction diagonal form of the model system with Re A1' <= 0.

    D_t U = chi_plus ( t|xi| diag(-1,1) - i (t+eps)^-1 A1'(xi) ) U where
    A1' = (1/2) diag(1-b, 1+b) - delta, b = (4k+1) sgn xi,
    delta = (1 + |4k+1|)/2, so both diagonal entries are <= 0.
    """
    spec = DegeneracySpec(l_star=1, T=T)
    cut = smooth_cutoff()
    b0 = 4.0 * k + 1.0
    delta = 0.5 * (1.0 + abs(b0))

    def chi_plus(t, xi):
        return cut(spec.Lam(t) * bracket(xi))

    def inv_t(t, xi, eps):
        cp = chi_plus(t, xi)
        if eps > 0.0:
            return cp / (t + eps)
        return np.divide(cp, t, out=np.zeros_like(cp), where=cp > 0.0)

    def principal(t, xi):
        return chi_plus(t, xi) * t * np.abs(xi) + 0j

    def sing(sign):
        def factory(eps):
            def out(t, xi):
                b = b0 * np.sign(xi)
                entry = 0.5 * (1.0 + sign * b) - delta
                return -1j * entry * inv_t(t, xi, eps)
            return out
        return factory

    terms = (
        Term(multiplier=principal, coeff_x=np.diag([-1.0, 1.0]).astype(complex), label="principal"),
        Term(multiplier=sing(-1)(0.0), multiplier_eps=sing(-1), coeff_x=_basis(2, 0, 0), label="a1-11"),
        Term(multiplier=sing(+1)(0.0), multiplier_eps=sing(+1), coeff_x=_basis(2, 1, 1), label="a1-22"),
    )
    system = SeparableSymbol(n_components=2, terms=terms, label=f"reduced model k={k:g}")

    def initial_state(phi_hat, grid):
        U0 = np.empty((2, grid.n_modes), dtype=complex)
        U0[0] = phi_hat
        U0[1] = phi_hat
        return U0

    return Problem(
        name="reduced-qi", params={"k": k}, spec=spec, system=system,
        initial_state=initial_state,
        extract=lambda traj, index: traj.states[index],
        predicted={"max_ratio_bound": 1.0}, cutoff=cut,
    )


def hermitian_test(T: float = 1.0) -> Problem:
    """Skew test system D_t U = t xi [[0,1],[1,0]] U: unitary mode-wise flow."""
    spec = DegeneracySpec(l_star=1, T=T)
    M = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    terms = (Term(multiplier=lambda t, xi: t * xi + 0j, coeff_x=M, label="t xi M"),)
    system = SeparableSymbol(n_components=2, terms=terms, label="hermitian multiplier")

    def initial_state(phi_hat, grid):
        U0 = np.empty((2, grid.n_modes), dtype=complex)
        U0[0] = phi_hat
        U0[1] = -phi_hat
        return U0

    return Problem(
        name="hermitian-test", params={}, spec=spec, system=system,
        initial_state=initial_state,
        extract=lambda traj, index: traj.states[index],
        predicted={"max_ratio": 1.0},
    )


def diverging_test(rate: float = 1e4, T: float = 1.0) -> Problem:
    """Deliberately exploding scalar system used to exercise failure paths."""
    spec = DegeneracySpec(l_star=1, T=T)
    terms = (Term(multiplier=lambda t, xi: -1j * rate * np.ones_like(np.asarray(xi, dtype=complex)),
                  label="blowup"),)
    system = SeparableSymbol(n_components=1, terms=terms, label="diverging")
    return Problem(
        name="diverging-test", params={"rate": rate}, spec=spec, system=system,
        initial_state=lambda phi_hat, grid: phi_hat.reshape(1, -1).astype(complex),
        extract=lambda traj, index: traj.states[index, 0],
    )


_BUILTINS = {
    "qi": qi,
    "wave": wave,
    "transport": transport,
    "differential": differential_system,
    "reduced-qi": reduced_qi,
    "hermitian-test": hermitian_test,
    "diverging-test": diverging_test,
}


def builtin(name: str, **params) -> Problem:
    """Look up a named constructor; raises KeyError for unknown names."""
    if name not in _BUILTINS:
        raise KeyError(f"unknown builtin problem {name!r}; known: {sorted(_BUILTINS)}")
    return _BUILTINS[name](**params)
