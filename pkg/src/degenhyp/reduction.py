"""Higher-order scalar operators with degeneracy-adapted lower-order structure.

An operator of order m in the class considered here is

    L = D_t^m + sum_{j+|a| <= m, j < m} c_{ja}(t,x) t^((j + (l+1)|a| - m)^+) D_t^j D_x^a,

strictly hyperbolic for t > 0.  Two reduced symbols carry everything needed
for the loss of regularity (1-D: a = alpha is a plain integer, xi^ = +-1):

    p_j(t,x,xi^) = c_{j,m-j}(t,x) xi^^(m-j)          (monic polynomial p of degree m)
    q_j(x,xi^)   = (i/l) c_{j,m-j-1}(0,x) xi^^(m-j-1)  (degree <= m-2)

The companion first-order system has A0 = companion(p) and
A1 = diag(m-1, ..., 1, 0) with last row (-q_0, ..., -q_{m-2}, 0); its
Vandermonde symmetrizer admits the closed row formula with denominator
p'(mu_h), and the loss bound has the closed form

    delta(x) = max_h sup_xi^ ( -( (tau/2) p'' + Re q ) / p' ) at tau = mu_h(0,x,xi^),

which the Sylvester pipeline on the companion system must reproduce up to the
exact shift m - 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConstantMultiplicityError, DataError, DomainError
from .systems import (DeltaBound, FirstOrderSystem, delta_bound_system,
                      symmetrizer_from_roots)
from .weights import DegeneracySpec

__all__ = [
    "ScalarOperator",
    "ReducedSymbols",
    "reduced_symbols",
    "companion_system",
    "vandermonde_symmetrizer",
    "delta_bound_scalar",
    "cross_validate",
    "data_space_orders",
]


def _as_coeff(value) -> Callable:
    if callable(value):
        return value
    const = complex(value)
    return lambda t, x: const


@dataclass(frozen=True)
class ScalarOperator:
    """Order-m operator given by its coefficient table {(j, alpha): c_ja}.

    The D_t^m coefficient is fixed to 1 and not stored.  Degeneracy exponents
    t^((j + (l+1) alpha - m)^+) are implied by the indices, never stored.
    """

    m: int
    spec: DegeneracySpec
    coeffs: dict
    declared_roots: Optional[tuple] = None
    gap_tol: float = 1e-6

    def __post_init__(self):
        if self.m < 1:
            raise DomainError("operator order must be >= 1")
        norm = {}
        for (j, alpha), val in self.coeffs.items():
            if j + alpha > self.m or j >= self.m or alpha < 0 or j < 0:
                raise DomainError(f"index (j={j}, alpha={alpha}) out of range for order {self.m}")
            norm[(int(j), int(alpha))] = _as_coeff(val)
        object.__setattr__(self, "coeffs", norm)

    def levi_exponent(self, j: int, alpha: int) -> int:
        return max(j + (self.spec.l_star + 1) * alpha - self.m, 0)


@dataclass(frozen=True)
class ReducedSymbols:
    """p (monic, degree m, t-dependent coefficients) and q (degree <= m-2)."""

    m: int
    x: float
    xi_hat: float
    p_of_t: Callable  # t -> ndarray (m,) low-order coefficients p_0..p_{m-1}
    q: np.ndarray     # (m-1,) coefficients q_0..q_{m-2} (empty for m = 1)

    def p_poly(self, t=0.0) -> np.ndarray:
        """Full monic coefficient vector (p_0, ..., p_{m-1}, 1)."""
        return np.concatenate([np.asarray(self.p_of_t(t), dtype=complex), [1.0]])

    def roots(self, t=0.0) -> np.ndarray:
        return np.linalg.eigvals(_companion_matrix(np.asarray(self.p_of_t(t), dtype=complex)))

    def q_value(self, tau) -> complex:
        return complex(np.polyval(self.q[::-1], tau)) if len(self.q) else 0.0


def _companion_matrix(low_coeffs: np.ndarray) -> np.ndarray:
    m = len(low_coeffs)
    A = np.zeros((m, m), dtype=complex)
    for i in range(m - 1):
        A[i, i + 1] = 1.0
    A[m - 1, :] = -np.asarray(low_coeffs, dtype=complex)
    return A


def _sorted_real_roots(low_coeffs: np.ndarray, gap_tol: float) -> np.ndarray:
    vals = np.linalg.eigvals(_companion_matrix(low_coeffs))
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.max(np.abs(vals.imag)) > 1e-8 * scale:
        raise ConstantMultiplicityError(
            f"complex characteristic roots {vals}: not strictly hyperbolic")
    mus = np.sort(vals.real)
    if len(mus) > 1 and np.min(np.diff(mus)) < gap_tol * scale:
        raise ConstantMultiplicityError(f"characteristic roots {mus} violate the gap condition")
    return mus


def reduced_symbols(op: ScalarOperator, x: float, xi_hat: float) -> ReducedSymbols:
    """Assemble p and q at a base point; checks strict hyperbolicity at t = 0."""
    if abs(abs(xi_hat) - 1.0) > 1e-12:
        raise DomainError("xi_hat must be a unit direction (+-1)")
    m, l = op.m, op.spec.l_star

    def p_of_t(t):
        out = np.zeros(m, dtype=complex)
        for j in range(m):
            fn = op.coeffs.get((j, m - j))
            if fn is not None:
                out[j] = fn(t, x) * xi_hat ** (m - j)
        return out

    q = np.zeros(max(m - 1, 0), dtype=complex)
    for j in range(m - 1):
        fn = op.coeffs.get((j, m - j - 1))
        if fn is not None:
            q[j] = (1j / l) * fn(0.0, x) * xi_hat ** (m - j - 1)

    rs = ReducedSymbols(m=m, x=float(x), xi_hat=float(xi_hat), p_of_t=p_of_t, q=q)
    mus = _sorted_real_roots(p_of_t(0.0), op.gap_tol)
    if op.declared_roots is not None:
        declared = np.sort([float(np.real(mu(0.0, x, xi_hat))) for mu in op.declared_roots])
        if np.max(np.abs(declared - mus)) > 1e-8:
            raise ConstantMultiplicityError(
                f"assembled roots {mus} disagree with declared roots {declared}")
    return rs


def companion_system(op: ScalarOperator) -> FirstOrderSystem:
    """First-order m x m system equivalent to the operator.

    A0 is the companion matrix of p; A1 is diag(m-1, ..., 1, 0) with last row
    (-q_0, ..., -q_{m-2}, 0).  Roots are p's (sorted ascending), simple.
    """
    m = op.m

    def A0(t, x, xi_hat):
        return _companion_matrix(reduced_symbols(op, x, xi_hat).p_of_t(t))

    def A1(x, xi_hat):
        rs = reduced_symbols(op, x, xi_hat)
        A = np.diag(np.arange(m - 1, -1, -1).astype(complex))
        if m > 1:
            A[m - 1, :m - 1] = -rs.q
        return A

    def root_fn(h):
        def mu(t, x, xi_hat):
            rs = reduced_symbols(op, x, xi_hat)
            return _sorted_real_roots(rs.p_of_t(t), op.gap_tol)[h]
        return mu

    return FirstOrderSystem(
        N=m, spec=op.spec, A0=A0, A1=A1,
        roots=tuple((root_fn(h), 1) for h in range(m)),
    )


def _pprime(p_full: np.ndarray, tau: complex) -> complex:
    # p_full = (p_0, ..., p_m) with p_m = 1
    dcoef = np.array([i * p_full[i] for i in range(1, len(p_full))])
    return complex(np.polyval(dcoef[::-1], tau))


def _ppp(p_full: np.ndarray, tau: complex) -> complex:
    dd = np.array([i * (i - 1) * p_full[i] for i in range(2, len(p_full))])
    return complex(np.polyval(dd[::-1], tau)) if len(dd) else 0.0


def vandermonde_symmetrizer(roots: Sequence[float], p_low: Sequence[complex]) -> dict:
    """Closed-form symmetrizer of a companion matrix with simple roots.

    M0^-1 is the Vandermonde matrix in the roots; M0 is computed row-wise by

        (M0)_{h,j} = (mu_h^(m-j) + p_{m-1} mu_h^(m-j-1) + ... + p_j) / p'(mu_h)

    (1-indexed j), i.e. Horner suffixes of p divided by p'(mu_h).
    """
    mu = np.asarray(roots, dtype=complex)
    m = len(mu)
    p_full = np.concatenate([np.asarray(p_low, dtype=complex), [1.0]])
    if len(p_full) != m + 1:
        raise DomainError("coefficient count does not match root count")
    M0_inv = np.vander(mu, m, increasing=True).T
    M0 = np.zeros((m, m), dtype=complex)
    for h in range(m):
        dp = _pprime(p_full, mu[h])
        if abs(dp) < 1e-10 * max(1.0, np.abs(mu).max() ** (m - 1)):
            raise ConstantMultiplicityError(f"root {mu[h]:g} nearly degenerate: |p'| = {abs(dp):.2e}")
        # Horner suffix: s_m = 1, s_{i-1} = s_i * mu + p_{i-1}; column j gets s_j.
        s = 1.0 + 0.0j
        suffix = [s]
        for i in range(m, 0, -1):
            s = s * mu[h] + p_full[i - 1]
            suffix.append(s)
        # suffix[k] = p_m mu^k-ish partial; column j (0-based) needs sum_{i=j+1}^m p_i mu^{i-j-1}
        for j in range(m):
            M0[h, j] = suffix[m - j - 1] / dp
    resid = np.abs(M0 @ M0_inv - np.eye(m)).max()
    if resid > 1e-10:
        raise DataError(f"Vandermonde inversion residual {resid:.2e} exceeds 1e-10")
    return {"M0": M0, "M0_inv": M0_inv}


def delta_bound_scalar(op: ScalarOperator, x_grid, xi_samples=(1.0, -1.0)) -> DeltaBound:
    """Closed-form loss bound: quotient -((tau/2) p'' + Re q)/p' at the roots."""
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    m = op.m
    delta = np.empty(len(x_grid))
    argmax_block = np.zeros(len(x_grid), dtype=int)
    argmax_xi = np.zeros(len(x_grid))
    diags = np.full((len(x_grid), m), -np.inf)
    for ix, x in enumerate(x_grid):
        best = -np.inf
        for xi_hat in xi_samples:
            rs = reduced_symbols(op, x, xi_hat)
            p_low = rs.p_of_t(0.0)
            if np.max(np.abs(p_low.imag)) > 1e-10 * max(1.0, np.abs(p_low).max()):
                raise DataError("reduced principal polynomial has complex coefficients")
            p_full = np.concatenate([p_low.real.astype(complex), [1.0]])
            mus = _sorted_real_roots(p_low, op.gap_tol)
            for h, tau in enumerate(mus):
                dp = _pprime(p_full, tau).real
                if abs(dp) < 1e-10 * max(1.0, np.abs(mus).max() ** (m - 1)):
                    raise ConstantMultiplicityError(f"degenerate root {tau:g}: |p'| too small")
                quotient = -((tau / 2.0) * _ppp(p_full, tau).real + rs.q_value(tau).real) / dp
                diags[ix, h] = max(diags[ix, h], quotient)
                if quotient > best:
                    best = quotient
                    argmax_block[ix] = h
                    argmax_xi[ix] = xi_hat
        delta[ix] = best
    loss = op.spec.beta_star * delta * op.spec.l_star
    meta = {"l_star": op.spec.l_star, "beta_star": op.spec.beta_star, "m": m,
            "xi_samples": list(map(float, xi_samples)),
            "note": "closed form, tight on samples"}
    return DeltaBound(x=x_grid, delta=delta, loss=loss, argmax_block=argmax_block,
                      argmax_xi=argmax_xi, block_diagnostics=diags, meta=meta)


def data_space_orders(op: ScalarOperator, delta: float, s: float = 0.0) -> np.ndarray:
    """Sobolev orders of admissible Cauchy data (u_0, ..., u_{m-1})."""
    beta, l, m = op.spec.beta_star, op.spec.l_star, op.m
    j = np.arange(m)
    return s + m - j * beta - 1.0 + beta * delta * l


def cross_validate(op: ScalarOperator, x_grid, xi_samples=(1.0, -1.0)) -> dict:
    """Sylvester pipeline on the companion system vs. the closed form.

    The diagonal of M0 A1 M0^-1 equals (m-1) + quotient at each root, so the
    two deltas must differ by exactly m - 1 pointwise.
    """
    comp = companion_system(op)
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    samples = [(0.0, x, xi) for x in x_grid for xi in xi_samples]
    pair = symmetrizer_from_roots(comp, samples, gap_tol=op.gap_tol)
    db_sys = delta_bound_system(comp, pair, x_grid, xi_samples, gap_tol=op.gap_tol)
    db_sca = delta_bound_scalar(op, x_grid, xi_samples)
    disc = np.abs(db_sys.delta - db_sca.delta - (op.m - 1))
    return {
        "max_discrepancy": float(disc.max()),
        "delta_system": db_sys,
        "delta_scalar": db_sca,
    }
