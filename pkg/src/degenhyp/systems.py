"""First-order N x N systems: symmetrizers, block diagonalization, loss bound.

For a system symbol chi_plus (lam(t)|xi| A0(t,x,xi^) - i l t^-1 A1(x,xi^))
whose characteristic roots mu_h keep constant multiplicities N_h and stay
uniformly separated, a symmetrizer M0 (rows = left eigenvectors of A0) turns
the principal part into B0 = diag(mu_h I_{N_h}).  The loss of regularity is
then read off the conjugated lower-order part B1 = M0 A1 M0^-1: a matrix P1
with zero diagonal blocks solving the entrywise Sylvester equations kills all
off-diagonal blocks of B1 while leaving the diagonal blocks untouched, and

    delta(x) = max_j sup_xi^ lambda_max( Re B1_jj(x, xi^) ),
    loss(x)  = beta_star * delta(x) * l_star.

Raising the order of the Sobolev scale doubles the system; the doubled system
has the same principal and secondary symbols, block-diagonally repeated, so
the loss bound is inherited.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (ConstantMultiplicityError, DisjointSpectraError,
                     SymmetrizabilityError, UnsupportedStructureError)
from .solver import SeparableSymbol
from .symbols import (StructuredSymbol, SymbolOrders, compose_leading,
                      from_system_data, inverse_leading, scalar_structured,
                      time_derivative_leading, weight_power_symbol)
from .weights import Cutoff, DegeneracySpec, smooth_cutoff

__all__ = [
    "FirstOrderSystem",
    "SymmetrizerPair",
    "ConjugatedPair",
    "DeltaBound",
    "symmetrizer_from_roots",
    "conjugated_pair",
    "solve_sylvester_small",
    "sylvester_block_offdiag",
    "delta_bound_system",
    "strict_hyperbolic_delta",
    "order_raised_system",
]


def herm(Q):
    """Hermitian part (Q + Q*) / 2."""
    Q = np.asarray(Q, dtype=complex)
    return 0.5 * (Q + Q.conj().T)


@dataclass(frozen=True)
class FirstOrderSystem:
    """System data: principal matrix A0, lower-order A1, declared roots.

    ``roots`` lists (mu_h, N_h) with mu_h a callable (t, x, xi_hat) -> real
    and sum N_h = N.  ``separable`` optionally carries a finite tensor-sum
    realization of the full symbol for spectral solving and order raising.
    """

    N: int
    spec: DegeneracySpec
    A0: Callable  # (t, x, xi_hat) -> (N, N) complex
    A1: Callable  # (x, xi_hat) -> (N, N) complex
    roots: tuple
    A2: Optional[Callable] = None
    A2_orders: Optional[tuple] = None
    separable: Optional[SeparableSymbol] = None
    cutoff: Cutoff = field(default_factory=smooth_cutoff)

    def __post_init__(self):
        if sum(n for _, n in self.roots) != self.N:
            raise ConstantMultiplicityError(
                f"root multiplicities {[n for _, n in self.roots]} do not sum to N={self.N}")

    def root_values(self, t, x, xi_hat):
        return np.array([float(np.real(mu(t, x, xi_hat))) for mu, _ in self.roots])

    def multiplicities(self):
        return [n for _, n in self.roots]

    def structured_symbol(self) -> StructuredSymbol:
        return from_system_data(self.spec, self.N, self.A0, self.A1, cutoff=self.cutoff)


def _check_gaps(mus, gap_tol):
    scale = max(1.0, float(np.max(np.abs(mus))))
    for i in range(len(mus)):
        for j in range(i + 1, len(mus)):
            if abs(mus[i] - mus[j]) < gap_tol * scale:
                raise ConstantMultiplicityError(
                    f"root gap |{mus[i]:g} - {mus[j]:g}| below {gap_tol:g} * {scale:g}")


class EigSymmetrizer:
    """Left-eigenvector symmetrizer with a deterministic branch choice.

    Rows are left eigenvectors of A0 grouped in declared root order, scaled so
    the largest-modulus component is 1; across consecutive evaluations, rows
    inside a degenerate block are permuted for maximal overlap with the
    previous sample, picking one smooth branch along a grid traversal.
    """

    def __init__(self, system: FirstOrderSystem, gap_tol: float = 1e-6, residual_tol: float = 1e-8):
        self.system = system
        self.gap_tol = gap_tol
        self.residual_tol = residual_tol
        self._prev_rows = None

    def __call__(self, t, x, xi_hat):
        sys = self.system
        A0v = np.asarray(sys.A0(t, x, xi_hat), dtype=complex)
        mus = sys.root_values(t, x, xi_hat)
        _check_gaps(mus, self.gap_tol)
        vals, vecs = np.linalg.eig(A0v.T)  # columns: transposed left eigenvectors
        scale = max(1.0, float(np.max(np.abs(mus))))
        assigned = {h: [] for h in range(len(mus))}
        for i, v in enumerate(vals):
            h = int(np.argmin(np.abs(mus - v)))
            assigned[h].append(i)
        rows = []
        for h, (_, n_h) in enumerate(sys.roots):
            idx = assigned[h]
            if len(idx) != n_h:
                raise ConstantMultiplicityError(
                    f"root {mus[h]:g} received {len(idx)} eigenvalues, declared multiplicity {n_h}")
            if np.max(np.abs(vals[idx] - mus[h])) > 1e-6 * scale:
                raise SymmetrizabilityError(
                    f"computed eigenvalues {vals[idx]} far from declared root {mus[h]:g}")
            block = vecs[:, idx].T
            sv = np.linalg.svd(block, compute_uv=False)
            if sv[-1] < 1e-8 * sv[0]:
                raise SymmetrizabilityError(
                    f"defective eigenspace at root {mus[h]:g}: A0 not diagonalizable")
            if self._prev_rows is not None and n_h > 1:
                block = self._match_previous(block, self._prev_rows[sum(sys.multiplicities()[:h]):][:n_h])
            block = block / np.abs(block).max(axis=1, keepdims=True)
            for r in block:
                r = r / r[np.argmax(np.abs(r))]
                rows.append(r)
        M0 = np.array(rows)
        if abs(np.linalg.det(M0)) < 1e-12:
            raise SymmetrizabilityError("singular symmetrizer candidate")
        D = M0 @ A0v @ np.linalg.inv(M0)
        target = np.diag(np.repeat(mus, sys.multiplicities())).astype(complex)
        if np.linalg.norm(D - target) > self.residual_tol * scale:
            raise SymmetrizabilityError(
                f"conjugation residual {np.linalg.norm(D - target):.2e} exceeds {self.residual_tol:g}")
        self._prev_rows = M0
        return M0

    @staticmethod
    def _match_previous(block, prev):
        overlap = np.abs(block @ prev.conj().T)
        order, used = [], set()
        for col in range(prev.shape[0]):
            cand = [(overlap[r, col], r) for r in range(block.shape[0]) if r not in used]
            r_best = max(cand)[1]
            order.append(r_best)
            used.add(r_best)
        return block[order]


@dataclass(frozen=True)
class SymmetrizerPair:
    """(M0, optional M1): M0(t,x,xi^) diagonalizes A0, M1 feeds the commutator."""

    M0: Callable
    M1: Optional[Callable] = None


def symmetrizer_from_roots(sys: FirstOrderSystem, samples: Sequence[tuple],
                           gap_tol: float = 1e-6) -> SymmetrizerPair:
    """Eigenvector symmetrizer validated on the given (t, x, xi_hat) samples."""
    m0 = EigSymmetrizer(sys, gap_tol=gap_tol)
    for (t, x, xi_hat) in samples:
        m0(t, x, xi_hat)
    return SymmetrizerPair(M0=m0)


@dataclass(frozen=True)
class ConjugatedPair:
    B0: np.ndarray
    B1: np.ndarray
    effective: np.ndarray


def conjugated_pair(sys: FirstOrderSystem, pair: SymmetrizerPair, x, xi_hat) -> ConjugatedPair:
    """B0, B1 and the Hermitian part entering the loss-bound inequality.

        B0 = (M0 A0 M0^-1)(0,x,xi^),   B1 = (M0 A1 M0^-1)(0,x,xi^),
        effective = Re( B1 + [M1 M0^-1, B0] ),  Re Q = (Q + Q*)/2.
    """
    M0 = np.asarray(pair.M0(0.0, x, xi_hat), dtype=complex)
    try:
        M0inv = np.linalg.inv(M0)
    except np.linalg.LinAlgError as exc:
        raise SymmetrizabilityError("singular M0") from exc
    B0 = M0 @ np.asarray(sys.A0(0.0, x, xi_hat), dtype=complex) @ M0inv
    B1 = M0 @ np.asarray(sys.A1(x, xi_hat), dtype=complex) @ M0inv
    eff = B1
    if pair.M1 is not None:
        P = np.asarray(pair.M1(x, xi_hat), dtype=complex) @ M0inv
        eff = B1 + P @ B0 - B0 @ P
    return ConjugatedPair(B0=B0, B1=B1, effective=herm(eff))


def solve_sylvester_small(E, F, G):
    """Solve T F - E T = G by Kronecker vectorization (small dense blocks)."""
    E = np.atleast_2d(np.asarray(E, dtype=complex))
    F = np.atleast_2d(np.asarray(F, dtype=complex))
    G = np.atleast_2d(np.asarray(G, dtype=complex))
    M, Nn = E.shape[0], F.shape[0]
    K = np.kron(F.T, np.eye(M)) - np.kron(np.eye(Nn), E)
    ev_e, ev_f = np.linalg.eigvals(E), np.linalg.eigvals(F)
    if np.min(np.abs(ev_e[:, None] - ev_f[None, :])) < 1e-12 * max(1.0, np.abs(ev_e).max(), np.abs(ev_f).max()):
        raise DisjointSpectraError("coincident block spectra: Sylvester map is singular")
    vec = np.linalg.solve(K, G.reshape(M * Nn, order="F"))
    return vec.reshape(M, Nn, order="F")


def sylvester_block_offdiag(b0_blocks: Sequence, B1: np.ndarray) -> np.ndarray:
    """P1 with zero diagonal blocks killing the off-diagonal blocks of B1.

    ``b0_blocks`` lists (mu_j, N_j); the block equations
    B1_jk + P1_jk (mu_k I) - (mu_j I) P1_jk = 0 reduce to entrywise divides
    P1_jk = B1_jk / (mu_j - mu_k).  Matrix-valued blocks fall back to the
    Kronecker solve.
    """
    blocks = list(b0_blocks)
    sizes = [int(b[1]) if isinstance(b, tuple) else np.atleast_2d(b).shape[0] for b in blocks]
    off = np.cumsum([0] + sizes)
    B1 = np.asarray(B1, dtype=complex)
    if B1.shape != (off[-1], off[-1]):
        raise ValueError(f"B1 shape {B1.shape} does not match blocks {sizes}")
    P1 = np.zeros_like(B1)
    for j in range(len(blocks)):
        for k in range(len(blocks)):
            if j == k:
                continue
            G = B1[off[j]:off[j + 1], off[k]:off[k + 1]]
            if isinstance(blocks[j], tuple) and isinstance(blocks[k], tuple):
                mu_j, mu_k = complex(blocks[j][0]), complex(blocks[k][0])
                if abs(mu_j - mu_k) < 1e-12 * max(1.0, abs(mu_j), abs(mu_k)):
                    raise DisjointSpectraError(f"blocks {j} and {k} share eigenvalue {mu_j:g}")
                P1[off[j]:off[j + 1], off[k]:off[k + 1]] = G / (mu_j - mu_k)
            else:
                E = blocks[j] if not isinstance(blocks[j], tuple) else blocks[j][0] * np.eye(sizes[j])
                F = blocks[k] if not isinstance(blocks[k], tuple) else blocks[k][0] * np.eye(sizes[k])
                P1[off[j]:off[j + 1], off[k]:off[k + 1]] = solve_sylvester_small(E, F, -G)
    return P1


def _block_slices(sizes):
    off = np.cumsum([0] + list(sizes))
    return [slice(off[i], off[i + 1]) for i in range(len(sizes))]


@dataclass
class DeltaBound:
    """Per-x loss bound with the attaining block / direction recorded."""

    x: np.ndarray
    delta: np.ndarray
    loss: np.ndarray
    argmax_block: np.ndarray
    argmax_xi: np.ndarray
    block_diagnostics: np.ndarray  # (nx, n_blocks) max eigenvalue over xi^
    meta: dict

    def to_csv(self, path):
        import json

        def plain(obj):
            if isinstance(obj, (np.floating, np.integer)):
                return obj.item()
            if isinstance(obj, np.ndarray):
                return obj.tolist()
            return str(obj)

        with open(path, "w", newline="") as fh:
            if self.meta:
                fh.write("# " + json.dumps(self.meta, sort_keys=True, default=plain) + "\n")
            writer = csv.writer(fh)
            writer.writerow(["x", "delta", "loss", "argmax_block", "argmax_xi"])
            for i in range(len(self.x)):
                writer.writerow([repr(float(self.x[i])), repr(float(self.delta[i])),
                                 repr(float(self.loss[i])), int(self.argmax_block[i]),
                                 repr(float(self.argmax_xi[i]))])


def delta_bound_system(sys: FirstOrderSystem, pair: SymmetrizerPair, x_grid,
                       xi_samples=(1.0, -1.0), gap_tol: float = 1e-6,
                       residual_tol: float = 1e-10) -> DeltaBound:
    """Tight loss bound on the sample set via block diagonalization.

    At each (x, xi^): conjugate by M0, eliminate the off-diagonal blocks of B1
    through the Sylvester choice with zero diagonal blocks (verified against
    ``residual_tol``), then take the largest eigenvalue of Re B1_jj.
    """
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    sizes = sys.multiplicities()
    slices = _block_slices(sizes)
    n_blocks = len(sizes)
    delta = np.empty(len(x_grid))
    argmax_block = np.zeros(len(x_grid), dtype=int)
    argmax_xi = np.zeros(len(x_grid))
    diags = np.full((len(x_grid), n_blocks), -np.inf)
    for ix, x in enumerate(x_grid):
        best = -np.inf
        for xi_hat in xi_samples:
            mus = sys.root_values(0.0, x, xi_hat)
            _check_gaps(mus, gap_tol)
            cp = conjugated_pair(sys, pair, x, xi_hat)
            blocks = [(mus[j], sizes[j]) for j in range(n_blocks)]
            P1 = sylvester_block_offdiag(blocks, cp.B1)
            B0 = np.diag(np.repeat(mus, sizes)).astype(complex)
            D = cp.B1 + P1 @ B0 - B0 @ P1
            for j in range(n_blocks):
                for k in range(n_blocks):
                    blk = D[slices[j], slices[k]]
                    if j != k and np.linalg.norm(blk) > residual_tol:
                        raise DisjointSpectraError(
                            f"off-diagonal residual {np.linalg.norm(blk):.2e} at x={x:g}")
                eig_max = float(np.linalg.eigvalsh(herm(D[slices[j], slices[j]])).max())
                diags[ix, j] = max(diags[ix, j], eig_max)
                if eig_max > best:
                    best = eig_max
                    argmax_block[ix] = j
                    argmax_xi[ix] = xi_hat
        delta[ix] = best
    loss = sys.spec.beta_star * delta * sys.spec.l_star
    meta = {"l_star": sys.spec.l_star, "beta_star": sys.spec.beta_star,
            "xi_samples": list(map(float, xi_samples)), "N": sys.N,
            "multiplicities": sizes, "note": "tight on samples"}
    return DeltaBound(x=x_grid, delta=delta, loss=loss, argmax_block=argmax_block,
                      argmax_xi=argmax_xi, block_diagnostics=diags, meta=meta)


def strict_hyperbolic_delta(sys: FirstOrderSystem, pair: SymmetrizerPair, x_grid,
                            xi_samples=(1.0, -1.0)) -> np.ndarray:
    """All-simple-roots shortcut: max_j sup_xi^ Re (M0 A1 M0^-1)_jj."""
    if any(n != 1 for n in sys.multiplicities()):
        raise ConstantMultiplicityError("shortcut applies to simple roots only")
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    out = np.empty(len(x_grid))
    for ix, x in enumerate(x_grid):
        out[ix] = max(
            float(np.real(np.diag(conjugated_pair(sys, pair, x, xi_hat).B1)).max())
            for xi_hat in xi_samples)
    return out


# ---------------------------------------------------------------------------
# Order raising (system doubling)
# ---------------------------------------------------------------------------

def _embed_block(fn, size, corner):
    """Lift an (N,N)-valued callable into a (2N,2N) block at the given corner."""
    r, c = corner

    def out(*args):
        big = np.zeros((2 * size, 2 * size), dtype=complex)
        big[r * size:(r + 1) * size, c * size:(c + 1) * size] = np.asarray(fn(*args), dtype=complex)
        return big

    return out


def _block2_structured(spec, size, s00: StructuredSymbol, s10: StructuredSymbol,
                       s11: StructuredSymbol) -> StructuredSymbol:
    """Assemble [[A00, 0], [A10, A11]] at the leading-symbol level.

    A10 sits one order lower (its orders are (m-1, eta)); its top part enters
    the secondary symbol of the doubled system.
    """
    m, eta = s00.orders.m, s00.orders.eta

    def a0(t, x, z):
        big = np.zeros((2 * size, 2 * size), dtype=complex)
        big[:size, :size] = np.asarray(s00.a0(t, x, z), dtype=complex)
        big[size:, size:] = np.asarray(s11.a0(t, x, z), dtype=complex)
        return big

    def a1(t, x, z):
        big = np.zeros((2 * size, 2 * size), dtype=complex)
        big[:size, :size] = np.asarray(s00.a1(t, x, z), dtype=complex)
        big[size:, size:] = np.asarray(s11.a1(t, x, z), dtype=complex)
        big[size:, :size] = np.asarray(s10.a0(t, x, z), dtype=complex)
        return big

    return StructuredSymbol(size=2 * size, spec=spec, orders=SymbolOrders(m, eta), a0=a0, a1=a1)


def _add_lower_order(A: StructuredSymbol, s: StructuredSymbol) -> StructuredSymbol:
    """A + s where s has orders (m-1, eta): s's top joins A's secondary part."""
    if not (np.isclose(s.orders.m, A.orders.m - 1) and np.isclose(s.orders.eta, A.orders.eta)):
        raise UnsupportedStructureError("summand must sit exactly one order below")

    def a1(t, x, z):
        sv = np.asarray(s.a0(t, x, z), dtype=complex)
        if sv.shape != (A.size, A.size):
            sv = complex(sv.reshape(-1)[0]) * np.eye(A.size)
        return np.asarray(A.a1(t, x, z), dtype=complex) + sv

    return StructuredSymbol(size=A.size, spec=A.spec, orders=A.orders, a0=A.a0, a1=a1,
                            cutoff=A.cutoff)


def order_raised_system(sys: FirstOrderSystem) -> FirstOrderSystem:
    """Double the system so one extra Sobolev order rides on the base estimate.

    The doubled symbol is [[A00, 0], [A10, A11]] with

        A00 = g h^l A (g h^l)^-1 + (D_t g) g^-1 + l (D_t h) h^-1,
        A10 = [h^l (D_t A) + l (D_t h) h^(l-1) A] (g h^l)^-1,
        A11 = h^l A h^-l,

    realized at leading order in the multiplier algebra.  Its principal and
    secondary symbols are block-diagonal copies of the input's: the scalar
    logarithmic derivatives contribute -i l + i l = 0 to the secondary part,
    and the two summands of A10's top part cancel.  Requires a separable
    realization of the input symbol.
    """
    if sys.separable is None:
        raise UnsupportedStructureError("order raising requires a separable symbol realization")
    spec, cut, N = sys.spec, sys.cutoff, sys.N
    l = spec.l_star

    A_struct = sys.structured_symbol()
    _, g_s = weight_power_symbol(spec, cut, 1.0, 1.0)
    _, h_s = weight_power_symbol(spec, cut, 0.0, 1.0)
    _, gh_l = weight_power_symbol(spec, cut, 1.0, 1.0 + l)      # g h^l
    _, h_pow_l = weight_power_symbol(spec, cut, 0.0, float(l))  # h^l
    _, h_pow_lm1 = weight_power_symbol(spec, cut, 0.0, float(l - 1))
    gh_l_inv = inverse_leading(gh_l)

    # (D_t g) g^-1 and l (D_t h) h^-1, derived through the symbol algebra.
    dlog_g = compose_leading(time_derivative_leading(g_s), inverse_leading(g_s))
    dlog_h = compose_leading(time_derivative_leading(h_s), inverse_leading(h_s))
    scalar_shift = scalar_structured(
        spec, 0.0, 1.0,
        lambda t, x, z: dlog_g.a0(t, x, z).reshape(-1)[0] + l * dlog_h.a0(t, x, z).reshape(-1)[0],
        cutoff=cut)

    A00 = _add_lower_order(compose_leading(compose_leading(gh_l, A_struct), gh_l_inv), scalar_shift)
    A11 = compose_leading(compose_leading(h_pow_l, A_struct), inverse_leading(h_pow_l))
    A10 = compose_leading(
        compose_leading(h_pow_l, time_derivative_leading(A_struct)), gh_l_inv)
    dh_term = compose_leading(compose_leading(dlog_h, h_pow_lm1), compose_leading(h_s, A_struct))
    # l (D_t h) h^(l-1) A (g h^l)^-1 == l (D_t h) h^-1 A g^-1 in the multiplier algebra
    lower = compose_leading(dh_term, gh_l_inv)
    A10_full = StructuredSymbol(
        size=N, spec=spec, orders=A10.orders,
        a0=lambda t, x, z: np.asarray(A10.a0(t, x, z)) + l * np.asarray(lower.a0(t, x, z)),
        a1=lambda t, x, z: np.asarray(A10.a1(t, x, z)) + l * np.asarray(lower.a1(t, x, z)),
        cutoff=cut)

    def A0_r(t, x, xi_hat):
        block = np.asarray(sys.A0(t, x, xi_hat), dtype=complex)
        big = np.zeros((2 * N, 2 * N), dtype=complex)
        big[:N, :N] = block
        big[N:, N:] = block
        return big

    def A1_r(x, xi_hat):
        block = np.asarray(sys.A1(x, xi_hat), dtype=complex)
        big = np.zeros((2 * N, 2 * N), dtype=complex)
        big[:N, :N] = block
        big[N:, N:] = block
        return big

    raised = FirstOrderSystem(
        N=2 * N, spec=spec,
        A0=A0_r, A1=A1_r,
        roots=tuple((mu, 2 * n) for mu, n in sys.roots),
        separable=sys.separable.order_raised(spec, cut),
        cutoff=cut,
    )
    object.__setattr__(raised, "_structured_override", _block2_structured(spec, N, A00, A10_full, A11))
    return raised


def raised_structured_symbol(raised: FirstOrderSystem) -> StructuredSymbol:
    """Structured symbol of a doubled system, assembled from its pieces."""
    sym = getattr(raised, "_structured_override", None)
    if sym is None:
        raise UnsupportedStructureError("system was not produced by order_raised_system")
    return sym
