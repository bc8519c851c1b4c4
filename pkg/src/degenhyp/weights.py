"""Degeneracy parameters, smooth cutoff, and the anisotropic weight symbols.

Everything downstream is built on a single degeneracy profile lam(t) = t^l
(integer l >= 1) with primitive Lam(t) = t^(l+1)/(l+1) and critical exponent
beta = 1/(l+1), together with two equivalent pairs of weights on [0,T] x R_xi:

    g(t,xi)  = chi_minus <xi>^beta + chi_plus lam(t) <xi>
    h(t,xi)  = chi_minus <xi>^beta + chi_plus / t
    gbar     = lam(t) <xi> + <xi>^beta
    hbar     = 1 / (t + <xi>^-beta)

where chi_plus = chi(Lam(t)<xi>) switches from 0 to 1 as Lam(t)<xi> crosses
[1/2, 1], chi_minus = 1 - chi_plus, and <xi> = (1 + |xi|^2)^(1/2) throughout.
All evaluations are pure, scalar in |xi|, and vectorize over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError

__all__ = [
    "DegeneracySpec",
    "Cutoff",
    "WeightValues",
    "smooth_cutoff",
    "bracket",
    "degeneracy",
    "cutoffs",
    "weight_pair",
    "order_shift_weight",
]


def bracket(xi):
    """Japanese bracket <xi> = (1 + |xi|^2)^(1/2), elementwise."""
    xi = np.asarray(xi, dtype=float)
    return np.sqrt(1.0 + xi * xi)


def bracket_k(xi, K):
    """Shifted bracket <xi>_K = (K^2 + |xi|^2)^(1/2)."""
    xi = np.asarray(xi, dtype=float)
    return np.sqrt(K * K + xi * xi)


@dataclass(frozen=True)
class DegeneracySpec:
    """Degeneracy profile lam(t) = t^l_star on the horizon [0, T].

    beta_star = 1/(l_star + 1) is derived, never stored independently, so
    beta_star * (l_star + 1) == 1 holds exactly.
    """

    l_star: int
    T: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.l_star, (int, np.integer)) and self.l_star >= 1):
            raise DomainError(f"l_star must be an integer >= 1, got {self.l_star!r}")
        if not self.T > 0:
            raise DomainError(f"time horizon must be positive, got {self.T!r}")

    @property
    def beta_star(self) -> float:
        return 1.0 / (self.l_star + 1)

    def lam(self, t):
        """Degeneracy factor t^l_star (smooth continuation for t slightly < 0)."""
        t = np.asarray(t, dtype=float)
        return t**self.l_star

    def Lam(self, t):
        """Primitive of lam: beta_star * t^(l_star+1), exact antiderivative."""
        t = np.asarray(t, dtype=float)
        return self.beta_star * t ** (self.l_star + 1)

    def check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.T):
            raise DomainError(f"time outside [0, {self.T}]")
        return t


def _psi(u):
    # 1 / (1 + exp(1/u - 1/(1-u))) on (0,1), extended by 0 / 1 outside.
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 1.0, 1.0, 0.0)
    interior = (u > 0.0) & (u < 1.0)
    ui = np.where(interior, u, 0.5)
    z = np.clip(1.0 / ui - 1.0 / (1.0 - ui), -700.0, 700.0)
    return np.where(interior, 1.0 / (1.0 + np.exp(z)), out)


def _psi_prime(u):
    # psi'(u) = -z'(u) sig(z)(1 - sig(z)) with sig(z) = 1/(1+e^z); the product
    # form avoids overflow of e^z near the interval ends.
    u = np.asarray(u, dtype=float)
    interior = (u > 0.0) & (u < 1.0)
    ui = np.where(interior, u, 0.5)
    z = np.clip(1.0 / ui - 1.0 / (1.0 - ui), -700.0, 700.0)
    sig = 1.0 / (1.0 + np.exp(z))
    dz = -1.0 / ui**2 - 1.0 / (1.0 - ui) ** 2
    return np.where(interior, -dz * sig * (1.0 - sig), 0.0)


@dataclass(frozen=True)
class Cutoff:
    """Monotone C^inf transition: chi(s) = 0 for s <= 1/2, 1 for s >= 1.

    ``derivative`` is the exact chi'; ``j_max`` records up to which order
    finite-difference derivative probes of chi are considered trustworthy.
    """

    evaluation: Callable = field(default=None)
    derivative: Callable = field(default=None)
    j_max: int = 4
    label: str = "exp-transition"

    def __post_init__(self):
        if self.evaluation is None:
            object.__setattr__(self, "evaluation", lambda s: _psi(2.0 * np.asarray(s, dtype=float) - 1.0))
        if self.derivative is None:
            object.__setattr__(self, "derivative", lambda s: 2.0 * _psi_prime(2.0 * np.asarray(s, dtype=float) - 1.0))

    def __call__(self, s):
        return self.evaluation(s)


def smooth_cutoff(j_max: int = 4) -> Cutoff:
    """The default C^inf cutoff chi(s) = psi(2s - 1), psi an exp transition."""
    return Cutoff(j_max=j_max)


@dataclass(frozen=True)
class WeightValues:
    """The four weights at a point (or grid) of (t, xi)."""

    g: np.ndarray
    h: np.ndarray
    g_bar: np.ndarray
    h_bar: np.ndarray


def degeneracy(spec: DegeneracySpec, t):
    """Evaluate lam(t) = t^l_star and its primitive Lam(t) on [0, T]."""
    t = spec.check_time(t)
    return {"lambda": spec.lam(t), "Lambda": spec.Lam(t)}


def cutoffs(spec: DegeneracySpec, cut: Cutoff, t, xi):
    """chi_plus = chi(Lam(t)<xi>) and its complement chi_minus = 1 - chi_plus."""
    t = spec.check_time(t)
    chi_plus = cut(spec.Lam(t) * bracket(xi))
    return {"chi_plus": chi_plus, "chi_minus": 1.0 - chi_plus}


def _weights_raw(spec: DegeneracySpec, cut: Cutoff, t, xi) -> WeightValues:
    # No domain check: estimate probes may step slightly outside [0, T].
    t = np.asarray(t, dtype=float)
    br = bracket(xi)
    chi_plus = cut(spec.Lam(t) * br)
    chi_minus = 1.0 - chi_plus
    br_beta = br**spec.beta_star
    g = chi_minus * br_beta + chi_plus * spec.lam(t) * br
    # chi_plus vanishes identically near t = 0 for each fixed xi, so the
    # 1/t factor is only evaluated where it is finite.
    tb, cpb = np.broadcast_arrays(t, chi_plus)
    inv_t = np.divide(1.0, tb, out=np.zeros(tb.shape), where=cpb > 0.0)
    h = chi_minus * br_beta + chi_plus * inv_t
    g_bar = spec.lam(t) * br + br_beta
    h_bar = 1.0 / (t + br ** (-spec.beta_star))
    return WeightValues(g=g, h=h, g_bar=g_bar, h_bar=h_bar)


def weight_pair(spec: DegeneracySpec, cut: Cutoff, t, xi) -> WeightValues:
    """All four weights g, h, gbar, hbar at (t, xi); t must lie in [0, T]."""
    spec.check_time(t)
    return _weights_raw(spec, cut, t, xi)


def weight_time_derivatives(spec: DegeneracySpec, cut: Cutoff, t, xi):
    """Exact d_t g and d_t h (chain rule through the cutoff).

        d_t g = chi'(Lam<xi>) lam<xi> (lam<xi> - <xi>^beta) + chi_plus l t^(l-1) <xi>
        d_t h = chi'(Lam<xi>) lam<xi> (1/t - <xi>^beta)     - chi_plus / t^2

    The 1/t factors are only evaluated where the corresponding cutoff factor
    is nonzero, which forces t > 0.
    """
    t = np.asarray(t, dtype=float)
    br = bracket(xi)
    s = spec.Lam(t) * br
    chi_plus = cut(s)
    chi_p = cut.derivative(s)
    lam_br = spec.lam(t) * br
    br_beta = br**spec.beta_star
    l = spec.l_star
    tb, cpb = np.broadcast_arrays(t, chi_plus + chi_p)
    inv_t = np.divide(1.0, tb, out=np.zeros(tb.shape), where=cpb > 0.0)
    dg = chi_p * lam_br * (lam_br - br_beta) + chi_plus * l * t ** (l - 1) * br
    dh = chi_p * lam_br * (inv_t - br_beta) - chi_plus * inv_t**2
    return dg, dh


def order_shift_weight(spec: DegeneracySpec, cut: Cutoff, K: float, delta, t, x, xi):
    """Weight realizing a Sobolev-order shift of delta(x) * l_star * beta_star.

    Value:  chi_K_minus <xi>_K^(beta delta(x) l)  +  chi_K_plus t^(-delta(x) l),
    with <xi>_K = (K^2 + |xi|^2)^(1/2) and chi_K_plus = chi(Lam(t) <xi>_K).
    ``delta`` may be a constant or a callable of x.
    """
    if not K > 0:
        raise DomainError(f"K must be positive, got {K!r}")
    t = spec.check_time(t)
    dl = (delta(x) if callable(delta) else delta) * spec.l_star
    dl = np.asarray(dl, dtype=float)
    brk = bracket_k(xi, K)
    chi_plus = cut(spec.Lam(t) * brk)
    chi_minus = 1.0 - chi_plus
    tb, dlb, cpb = np.broadcast_arrays(t, dl, chi_plus)
    t_pow = np.ones_like(cpb)
    mask = cpb > 0.0
    # t > 0 wherever chi_plus > 0, so t^(-dl) is finite there.
    t_pow[mask] = tb[mask] ** (-dlb[mask])
    return chi_minus * brk ** (spec.beta_star * dl) + chi_plus * t_pow
