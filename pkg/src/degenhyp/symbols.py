"""Structured matrix symbols with "one and a half" principal parts.

A structured symbol of bi-order (m, eta) is, modulo declared remainders,

    a(t,x,xi) = chi_plus(t,xi) t^(-eta) [ a0(t,x,t^(l+1) xi) + a1(t,x,t^(l+1) xi) ]

with a0 positively homogeneous of degree m in the frequency slot and a1 of
degree m-1.  The two leading parts

    principal(t,x,xi)   = t^(-eta) a0(t,x,t^(l+1) xi)
    secondary(x,xi)     = a1(0,x,xi)          (carries the loss of regularity)
    secondary_top(x,xi) = a0(0,x,xi)

obey an exact product calculus, realized here pointwise.  The module also
verifies membership estimates

    |d_t^j d_x^alpha d_xi^beta a| <= C gbar^m hbar^(eta-m+j) <xi>^(-beta)

numerically by central differences on refinable grids; the verdict is
stability of the best constant under refinement, not a fixed threshold.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DataError, DomainError
from .weights import Cutoff, DegeneracySpec, _weights_raw, bracket, smooth_cutoff

__all__ = [
    "SymbolOrders",
    "StructuredSymbol",
    "PrincipalParts",
    "SymbolGrid",
    "EstimateEntry",
    "EstimateReport",
    "make_symbol_grid",
    "principal_symbols",
    "estimate_constants",
    "compose_leading",
    "adjoint_leading",
    "inverse_leading",
    "time_derivative_leading",
    "ellipticity_margin",
    "weight_power_symbol",
    "identity_symbol",
    "scalar_structured",
    "from_system_data",
]


@dataclass(frozen=True)
class SymbolOrders:
    """Bi-order (m, eta): m is the gbar exponent, eta - m the hbar exponent.

    ``log_power`` switches on the enlarged classes whose estimates carry an
    extra (1 + |log hbar|)^(log_power + |alpha|) factor; ``None`` means the
    plain class without any logarithmic allowance.
    """

    m: float
    eta: float
    log_power: Optional[int] = None

    def __add__(self, other: "SymbolOrders") -> "SymbolOrders":
        lp = None
        if self.log_power is not None or other.log_power is not None:
            lp = (self.log_power or 0) + (other.log_power or 0)
        return SymbolOrders(self.m + other.m, self.eta + other.eta, lp)


def _as_matrix_fn(fn, size):
    """Normalize a scalar-valued callable to return (size, size) arrays."""
    if size == 1:
        def wrapped(t, x, z):
            v = np.asarray(fn(t, x, z), dtype=complex)
            return v.reshape(1, 1) if v.shape == () else v
        return wrapped
    return fn


@dataclass(frozen=True)
class StructuredSymbol:
    """Matrix symbol with declared orders and leading decomposition (a0, a1).

    a0(t,x,zeta) must be positively homogeneous of degree m in zeta, a1 of
    degree m-1; zeta is a scalar frequency (1-D calculus).  ``a2`` is an
    optional remainder callable; its declared order pair is bookkeeping only.
    """

    size: int
    spec: DegeneracySpec
    orders: SymbolOrders
    a0: Callable  # (t, x, zeta) -> (N, N) complex
    a1: Callable
    a2: Optional[Callable] = None
    remainder_budget: Optional[tuple] = None
    cutoff: Cutoff = field(default_factory=smooth_cutoff)

    def full(self, t, x, xi):
        """Evaluate the defining representation (plus a2 if present)."""
        t = np.asarray(t, dtype=float)
        xi = np.asarray(xi, dtype=float)
        chi_plus = self.cutoff(self.spec.Lam(t) * bracket(xi))
        eta = self.orders.eta
        mask = chi_plus > 0.0
        pref = chi_plus * np.where(mask, np.where(mask, t, 1.0) ** (-eta), 0.0)
        # zeta stays bounded away from 0 on the support of chi_plus; clamp the
        # masked points so homogeneous parts of negative degree stay finite.
        zeta = np.where(mask, t ** (self.spec.l_star + 1) * xi, 1.0)
        val = pref * (self.a0(t, x, zeta) + self.a1(t, x, zeta))
        if self.a2 is not None:
            val = val + self.a2(t, x, xi)
        return val


@dataclass(frozen=True)
class PrincipalParts:
    principal: np.ndarray
    secondary: np.ndarray
    secondary_top: np.ndarray


def principal_symbols(sym: StructuredSymbol, t, x, xi) -> PrincipalParts:
    """Evaluate the leading parts at a point.

    principal at t = 0 is taken as the homogeneity limit: zero when
    m(l+1) > eta, a0(0,x,xi) when equal, and rejected otherwise.
    """
    if np.any(np.asarray(xi) == 0.0):
        raise DomainError("principal symbols are defined for xi != 0 only")
    l1 = sym.spec.l_star + 1
    m, eta = sym.orders.m, sym.orders.eta
    t = float(t)
    if t > 0.0:
        principal = t ** (-eta) * np.asarray(sym.a0(t, x, t**l1 * np.asarray(xi)), dtype=complex)
    else:
        power = l1 * m - eta
        if power > 0:
            principal = np.zeros((sym.size, sym.size), dtype=complex)
        elif power == 0:
            principal = np.asarray(sym.a0(0.0, x, xi), dtype=complex)
        else:
            raise DomainError("principal symbol unbounded at t = 0 (m(l+1) < eta)")
    secondary = np.asarray(sym.a1(0.0, x, xi), dtype=complex)
    secondary_top = np.asarray(sym.a0(0.0, x, xi), dtype=complex)
    return PrincipalParts(principal, secondary, secondary_top)


def _mat_product(fa, fb, na, nb):
    if na == nb:
        return lambda t, x, z: np.asarray(fa(t, x, z)) @ np.asarray(fb(t, x, z))
    if na == 1:
        return lambda t, x, z: complex(np.asarray(fa(t, x, z)).reshape(-1)[0]) * np.asarray(fb(t, x, z))
    if nb == 1:
        return lambda t, x, z: np.asarray(fa(t, x, z)) * complex(np.asarray(fb(t, x, z)).reshape(-1)[0])
    raise DomainError(f"incompatible symbol sizes {na} and {nb}")


def compose_leading(a: StructuredSymbol, b: StructuredSymbol) -> StructuredSymbol:
    """Leading-order composition: products of the leading parts.

        c0 = a0 b0,   c1 = a0 b1 + a1 b0,   orders added.

    The dropped remainder lives one unit lower in m and (l+1) lower in eta;
    that budget is recorded, never computed.
    """
    if a.size != b.size and 1 not in (a.size, b.size):
        raise DomainError(f"incompatible symbol sizes {a.size} and {b.size}")
    size = max(a.size, b.size)
    c0 = _mat_product(a.a0, b.a0, a.size, b.size)
    t1 = _mat_product(a.a0, b.a1, a.size, b.size)
    t2 = _mat_product(a.a1, b.a0, a.size, b.size)
    c1 = lambda t, x, z: t1(t, x, z) + t2(t, x, z)
    orders = a.orders + b.orders
    budget = (orders.m - 1, orders.eta - (a.spec.l_star + 1))
    return StructuredSymbol(size=size, spec=a.spec, orders=orders, a0=c0, a1=c1,
                            remainder_budget=budget, cutoff=a.cutoff)


def adjoint_leading(a: StructuredSymbol) -> StructuredSymbol:
    """Pointwise conjugate transpose; leading parts conjugate exactly."""
    return replace(
        a,
        a0=lambda t, x, z: np.asarray(a.a0(t, x, z)).conj().T,
        a1=lambda t, x, z: np.asarray(a.a1(t, x, z)).conj().T,
        a2=None,
    )


def inverse_leading(a: StructuredSymbol) -> StructuredSymbol:
    """Leading parametrix: c0 = a0^-1, c1 = -a0^-1 a1 a0^-1, orders negated."""
    inv0 = lambda t, x, z: np.linalg.inv(np.asarray(a.a0(t, x, z), dtype=complex).reshape(a.size, a.size))
    def c1(t, x, z):
        i0 = inv0(t, x, z)
        return -i0 @ np.asarray(a.a1(t, x, z), dtype=complex).reshape(a.size, a.size) @ i0
    orders = SymbolOrders(-a.orders.m, -a.orders.eta, a.orders.log_power)
    return replace(a, a0=inv0, a1=c1, a2=None, orders=orders)


def time_derivative_leading(a: StructuredSymbol, dt_rel: float = 1e-6) -> StructuredSymbol:
    """Leading parts of D_t a (one eta higher).

    Differentiating t^(-eta) a_j(t,x,t^(l+1) xi) in t and using Euler's
    identity for a degree-d homogeneous part gives

        a_j'(t,x,zeta) = -i [ ((l+1) d - eta) a_j(t,x,zeta) + t d_t a_j(t,x,zeta) ],

    d = m for a0 and d = m - 1 for a1.  d_t of the coefficient slot is taken
    by central differences (exact zero for t-independent parts).
    """
    l1 = a.spec.l_star + 1
    m, eta = a.orders.m, a.orders.eta

    def deriv(fn, d):
        def out(t, x, z):
            h = dt_rel * (1.0 + np.abs(np.asarray(t, dtype=float)))
            dfn = (np.asarray(fn(t + h, x, z), dtype=complex) - np.asarray(fn(t - h, x, z), dtype=complex)) / (2 * h)
            return -1j * ((l1 * d - eta) * np.asarray(fn(t, x, z), dtype=complex) + t * dfn)
        return out

    return replace(a, a0=deriv(a.a0, m), a1=deriv(a.a1, m - 1), a2=None,
                   orders=SymbolOrders(m, eta + 1, a.orders.log_power))


# ---------------------------------------------------------------------------
# Ready-made structured symbols
# ---------------------------------------------------------------------------

def scalar_structured(spec: DegeneracySpec, m: float, eta: float, a0, a1=None,
                      cutoff: Optional[Cutoff] = None) -> StructuredSymbol:
    """Wrap scalar-valued leading parts into a 1x1 structured symbol."""
    zero = lambda t, x, z: np.zeros((1, 1), dtype=complex)
    return StructuredSymbol(
        size=1, spec=spec, orders=SymbolOrders(m, eta),
        a0=_as_matrix_fn(a0, 1), a1=_as_matrix_fn(a1, 1) if a1 is not None else zero,
        cutoff=cutoff or smooth_cutoff(),
    )


def weight_power_symbol(spec: DegeneracySpec, cut: Cutoff, m: float, eta: float):
    """g^m h^(eta-m) as (full callable, structured symbol).

    Leading parts: a0 = |zeta|^m, a1 = 0, so the principal part is
    t^(-eta) (t^(l+1) |xi|)^m and the secondary part vanishes.
    """
    def full(t, x, xi):
        w = _weights_raw(spec, cut, t, xi)
        return w.g**m * w.h ** (eta - m)

    structured = scalar_structured(spec, m, eta, lambda t, x, z: np.abs(z) ** m, cutoff=cut)
    return full, structured


def identity_symbol(spec: DegeneracySpec, size: int) -> StructuredSymbol:
    eye = lambda t, x, z: np.eye(size, dtype=complex)
    zero = lambda t, x, z: np.zeros((size, size), dtype=complex)
    return StructuredSymbol(size=size, spec=spec, orders=SymbolOrders(0.0, 0.0), a0=eye, a1=zero)


def from_system_data(spec: DegeneracySpec, size: int, A0, A1,
                     cutoff: Optional[Cutoff] = None) -> StructuredSymbol:
    """Structured symbol of a first-order system in standard form.

    The system symbol chi_plus (lam(t)|xi| A0(t,x,xi^) - i l t^-1 A1(x,xi^))
    has orders (1,1) with a0 = |zeta| A0(t,x,sgn zeta) and
    a1 = -i l A1(x,sgn zeta), hence principal = lam(t)|xi| A0 and
    secondary = -i l A1(x,xi^).
    """
    l = spec.l_star
    a0 = lambda t, x, z: np.abs(z) * np.asarray(A0(t, x, np.sign(z)), dtype=complex)
    a1 = lambda t, x, z: -1j * l * np.asarray(A1(x, np.sign(z)), dtype=complex)
    return StructuredSymbol(size=size, spec=spec, orders=SymbolOrders(1.0, 1.0),
                            a0=a0, a1=a1, cutoff=cutoff or smooth_cutoff())


# ---------------------------------------------------------------------------
# Estimate verification on grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolGrid:
    """Product grid for estimate sweeps; |xi| >= 1 is always excised."""

    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    params: Optional[dict] = None

    def refine(self) -> "SymbolGrid":
        """Double every density and extend the frequency range one octave."""
        if self.params is not None:
            p = dict(self.params)
            return make_symbol_grid(
                p["spec"], nt=2 * p["nt"], nx=2 * p["nx"], nxi=2 * p["nxi"],
                xi_max=2 * p["xi_max"], t_min=p["t_min"] / 2, x_span=p["x_span"],
                n_trans=2 * p["n_trans"])
        t_pos = self.t[self.t > 0]
        t_new = np.concatenate(([0.0], np.geomspace(t_pos.min() / 2, self.t.max(), 2 * t_pos.size)))
        x_new = np.linspace(self.x.min(), self.x.max(), 2 * self.x.size)
        xi_new = np.geomspace(self.xi.min(), 2 * self.xi.max(), 2 * self.xi.size)
        return SymbolGrid(t=t_new, x=x_new, xi=xi_new)

    def describe(self) -> str:
        return (f"t[{self.t.min():g},{self.t.max():g}]x{self.t.size} "
                f"x[{self.x.min():g},{self.x.max():g}]x{self.x.size} "
                f"xi[{self.xi.min():g},{self.xi.max():g}]x{self.xi.size}")

    def mesh(self):
        return (self.t[:, None, None], self.x[None, :, None], self.xi[None, None, :])


def make_symbol_grid(spec: DegeneracySpec, nt: int = 16, nx: int = 5, nxi: int = 12,
                     xi_max: float = 256.0, t_min: float = 1e-4, x_span: float = 2.0,
                     n_trans: int = 12) -> SymbolGrid:
    """Default sweep grid: geometric in t toward 0, log-spaced in |xi| >= 1.

    Derivatives of cutoff-bearing symbols spike inside the transition window
    Lam(t)<xi> in [1/2, 1]; for every grid frequency, t-points covering that
    window are added so the sup is resolved stably under refinement.
    """
    xi = np.geomspace(1.0, xi_max, nxi)
    t = [np.array([0.0]), np.geomspace(t_min, spec.T, nt)]
    s_vals = np.linspace(0.52, 0.995, n_trans)
    for br in bracket(xi):
        t_tr = (s_vals / (spec.beta_star * br)) ** (1.0 / (spec.l_star + 1))
        t.append(t_tr[(t_tr > 0) & (t_tr <= spec.T)])
    t = np.unique(np.concatenate(t))
    x = np.linspace(-x_span, x_span, nx)
    params = dict(spec=spec, nt=nt, nx=nx, nxi=nxi, xi_max=xi_max, t_min=t_min,
                  x_span=x_span, n_trans=n_trans)
    return SymbolGrid(t=t, x=x, xi=xi, params=params)


@dataclass(frozen=True)
class EstimateEntry:
    j: int
    alpha: int
    beta: int
    constant: float
    refined_constant: float
    passed: bool


@dataclass(frozen=True)
class EstimateReport:
    entries: tuple
    passed: bool
    grid: str
    notes: str = ""

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["j", "alpha", "beta", "C", "verdict"])
            for e in self.entries:
                writer.writerow([e.j, e.alpha, e.beta, repr(e.constant), "pass" if e.passed else "fail"])


def _abs_reduce(values, grid_ndim=3):
    """|.| with any trailing matrix axes folded by max."""
    a = np.abs(np.asarray(values))
    while a.ndim > grid_ndim:
        a = a.max(axis=-1)
    return a


def _fd_derivative(a, order_jab, tm, xm, xim, spec):
    """Central-difference d_t^j d_x^alpha d_xi^beta a on the mesh.

    Steps follow the anisotropic geometry: h_t = 1e-3 (t + <xi>^-beta),
    h_x = 1e-3, h_xi = 1e-3 <xi>, so difference quotients stay O(weight).
    """
    j, al, be = order_jab
    br = bracket(xim)
    h_t = 1e-3 * (tm + br ** (-spec.beta_star))
    h_x = 1e-3
    h_xi = 1e-3 * br
    # Nested accumulation: differences along each axis cancel exactly in
    # floating point whenever the symbol does not depend on that variable.
    total = 0.0
    for it in range(j + 1):
        ct = (-1) ** it * math.comb(j, it)
        dt = (j / 2.0 - it) * h_t
        sub_x = 0.0
        for ix in range(al + 1):
            cx = (-1) ** ix * math.comb(al, ix)
            dx = (al / 2.0 - ix) * h_x
            sub_xi = 0.0
            for iq in range(be + 1):
                cq = (-1) ** iq * math.comb(be, iq)
                dxi = (be / 2.0 - iq) * h_xi
                sub_xi = sub_xi + cq * np.asarray(a(tm + dt, xm + dx, xim + dxi), dtype=complex)
            sub_x = sub_x + cx * sub_xi
        total = total + ct * sub_x
    denom = np.ones_like(br)
    if j:
        denom = denom * h_t**j
    if al:
        denom = denom * h_x**al
    if be:
        denom = denom * h_xi**be
    return total / denom


def _estimate_pass(a, grid, spec, order_pairs, log_power, order_jab):
    tm, xm, xim = grid.mesh()
    deriv = _abs_reduce(_fd_derivative(a, order_jab, tm, xm, xim, spec))
    if not np.all(np.isfinite(deriv)):
        loc = np.unravel_index(int(np.argmax(~np.isfinite(deriv))), deriv.shape)
        raise DataError(
            f"non-finite symbol derivative {order_jab} at "
            f"(t={grid.t[loc[0]]:g}, x={grid.x[loc[1]]:g}, xi={grid.xi[loc[2]]:g})")
    j, al, be = order_jab
    w = _weights_raw(spec, smooth_cutoff(), tm, xim)
    br = bracket(xim)
    weight = 0.0
    for m, eta in order_pairs:
        weight = weight + w.g_bar**m * w.h_bar ** (eta - m + j)
    weight = weight * br ** (-be)
    if log_power is not None:
        weight = weight * (1.0 + np.abs(np.log(hbar))) ** (log_power + al)
    ratio = deriv / weight
    return float(ratio.max())


def estimate_constants(a, orders: SymbolOrders, grid: SymbolGrid,
                       max_orders=(2, 2, 2), *, spec: DegeneracySpec,
                       order_pairs: Optional[Sequence[tuple]] = None,
                       growth_tol: float = 0.10) -> EstimateReport:
    """Best constants C_{j,alpha,beta} of the membership estimates on a grid.

    ``a(t, x, xi)`` must vectorize over broadcast arrays.  A multi-index
    passes when its constant grows by less than ``growth_tol`` under one grid
    refinement (density doubled, frequency range extended an octave); a fixed
    threshold would be meaningless since the classes only assert existence of
    constants.  ``order_pairs`` allows a union bound over several (m, eta).
    """
    pairs = list(order_pairs) if order_pairs is not None else [(orders.m, orders.eta)]
    fine = grid.refine()
    entries = []
    J, A, B = max_orders
    for j in range(J + 1):
        for al in range(A + 1):
            for be in range(B + 1):
                c0 = _estimate_pass(a, grid, spec, pairs, orders.log_power, (j, al, be))
                c1 = _estimate_pass(a, fine, spec, pairs, orders.log_power, (j, al, be))
                ok = c1 <= (1.0 + growth_tol) * c0 + 1e-14
                entries.append(EstimateEntry(j, al, be, c0, c1, ok))
    return EstimateReport(
        entries=tuple(entries),
        passed=all(e.passed for e in entries),
        grid=grid.describe(),
        notes=f"order_pairs={pairs} log_power={orders.log_power}",
    )


def ellipticity_margin(a, orders: SymbolOrders, grid: SymbolGrid, *,
                       spec: DegeneracySpec, size: int = 1, tol: float = 1e-8):
    """inf over the grid of |det a| / (gbar^m hbar^(eta-m))^N."""
    tm, xm, xim = grid.mesh()
    vals = np.asarray(a(tm, xm, xim), dtype=complex)
    if vals.ndim > 3:
        det = np.abs(np.linalg.det(vals))
    else:
        det = np.abs(vals)
    w = _weights_raw(spec, smooth_cutoff(), tm, xim)
    weight = (w.g_bar**orders.m * w.h_bar ** (orders.eta - orders.m)) ** size
    c1 = float((det / weight).min())
    return {"c1": c1, "passed": c1 > tol}
