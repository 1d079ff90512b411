"""Moments of the input-tailored frequency representations.

For a driven system ``(E, A, G, b)`` of dimension ``M`` the first three
representations are::

    W1(s) = (sE - A)^{-1} b
    W2(s) = (sE - A)^{-1} G (sE(x)E - circ2_E A)^{-1} b(x)b
    W3(s) = 2 (sE - A)^{-1} G (sE^(x)2 - circ2_E A)^{-1} (G(x)E) (sE^(x)3 - circ3_E A)^{-1} b^(x)3

Moments are the Taylor coefficients about ``s0`` produced by the recursions
below; ``m_i`` are the state-space moments and ``mhat_i`` (``mhathat_i``)
the auxiliary second (third) level quantities, kept in factored form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .kron_core import LowRankSymFactor, QuadMap, as_csr, circled, kron
from .lyap_lowrank import (
    LyapProblem,
    solve_block_triangular,
    LyapunovError,
    Tucker3,
    _projected_sylv3,
    solve,
    solve3,
)
from .qb_model import DrivenSystem

__all__ = [
    "DENSE_REP_CAP",
    "MAX_ORDER",
    "MomentSet",
    "ShiftedOperator",
    "dense_rep_w2",
    "dense_rep_w3",
    "eval_W",
    "linear_moments",
    "shifted_tensor_check",
    "w2_moments",
    "w2_moments_B0",
    "w3_moments",
]

DENSE_REP_CAP = 4096
MAX_ORDER = 5
ORDER3_CAP = 512


class SingularShiftError(ValueError):
    pass


class ShiftedOperator:
    """Sparse LU of ``A_{s0} = -s0 E + A``."""

    def __init__(self, E, A, s0):
        self.E, self.A = as_csr(E), as_csr(A)
        self.s0 = s0
        K = (self.A - s0 * self.E).tocsc()
        K = K.astype(complex) if np.iscomplexobj(s0) and np.imag(s0) != 0 else K.astype(float)
        try:
            self._lu = spla.splu(K)
        except RuntimeError as exc:
            raise SingularShiftError(f"shifted matrix A - s0 E is singular at s0 = {s0}") from exc
        d = np.abs(self._lu.U.diagonal())
        if d.size and d.min() <= 1e-14 * max(d.max(), 1e-300):
            raise SingularShiftError(f"shifted matrix A - s0 E is numerically singular at s0 = {s0}")

    def solve(self, rhs):
        rhs = np.asarray(rhs)
        if np.iscomplexobj(rhs) and not np.iscomplexobj(self._lu.L.data):
            return self._lu.solve(rhs.real) + 1j * self._lu.solve(rhs.imag)
        return self._lu.solve(rhs)


def _check_order(L):
    if L < 1:
        raise ValueError("number of moments must be at least 1")
    if L > MAX_ORDER:
        raise ValueError(
            f"L = {L} exceeds {MAX_ORDER}; match moments at several frequencies instead of "
            "high-order moments at one frequency"
        )


def linear_moments(E, A, Bvec, s0, L: int) -> list:
    """``k_0 = -A_{s0}^{-1} B``, ``k_i = A_{s0}^{-1} E k_{i-1}``."""
    if L < 1:
        raise ValueError("number of moments must be at least 1")
    op = ShiftedOperator(E, A, s0)
    B = Bvec.toarray() if sp.issparse(Bvec) else np.asarray(Bvec, dtype=float)
    k = -op.solve(B)
    out = [k]
    for _ in range(L - 1):
        k = op.solve(op.E @ k)
        out.append(k)
    return out


@dataclass
class MomentSet:
    s0: float
    L: int
    m: list
    mhat: list
    mhathat: list | None = None
    residuals: list = field(default_factory=list)

    def dump(self, path=None) -> str:
        lines = [f"# moments at s0 = {self.s0!r}, L = {self.L}"]
        for i, v in enumerate(self.m):
            lines.append(f"m[{i}]")
            lines.extend(f"{x:.17g}" for x in np.ravel(v))
        for i, X in enumerate(self.mhat):
            lines.append(f"mhat[{i}] rank={X.rank} residual={self.residuals[i] if i < len(self.residuals) else float('nan'):.3e}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _lyap(E, A, F, K, tol, where, split=None):
    prob = LyapProblem(E, A, LowRankSymFactor(F, core=K) if K is not None else LowRankSymFactor(F), tol=tol)
    res = solve(prob) if split is None else solve_block_triangular(prob, split)
    if not res.converged:
        raise LyapunovError(f"{where}: low-rank solve stopped at residual {res.residual:.3e} > {tol:.1e}")
    return res


def _w2_recursion(Dsys: DrivenSystem, F, K, s0, L, lyap_tol):
    _check_order(L)
    E, A, G = Dsys.Ec, Dsys.Ac, Dsys.Gc
    op = ShiftedOperator(E, A, s0)
    A_half = (A - 0.5 * s0 * E).tocsr()
    m, mhat, resid = [], [], []
    rhs_F, rhs_K = F, K
    prev = None
    for i in range(L):
        if i > 0:
            X = mhat[-1]
            rhs_F, rhs_K = np.asarray(E @ X.Z), -X.core
        res = _lyap(E, A_half, rhs_F, rhs_K, lyap_tol, f"mhat[{i}] at s0={s0}", Dsys.N)
        X = res.X
        mhat.append(X)
        resid.append(res.residual)
        src = -G.apply_core(X.Z, X.core)
        if prev is not None:
            src = src + E @ prev
        prev = op.solve(src)
        m.append(prev)
    return MomentSet(s0, L, m, mhat, None, resid)


def w2_moments(Dsys: DrivenSystem, s0: float, L: int, lyap_tol: float = 1e-8) -> MomentSet:
    """Second-order input-tailored moments with factored ``mhat_i``."""
    if np.iscomplexobj(s0):
        raise ValueError("only real expansion points are supported")
    b = np.asarray(Dsys.b, dtype=float).reshape(-1, 1)
    return _w2_recursion(Dsys, b, np.eye(1), float(s0), L, lyap_tol)


def w2_moments_B0(Dsys: DrivenSystem, B0, s0: float, L: int, lyap_tol: float = 1e-8) -> dict:
    """Matrix-parametrised initial states ``w(0) = B0 r``.

    Returns ``{(a, c): MomentSet}`` for the column pairs of ``B0 (x) B0``;
    the moments for ``b = B0 r`` are ``sum_ac r_a r_c m^{(a,c)}``.
    """
    B0 = np.asarray(B0, dtype=float)
    out = {}
    for a in range(B0.shape[1]):
        for c in range(B0.shape[1]):
            if a == c:
                F, K = B0[:, [a]], np.eye(1)
            else:
                F, K = B0[:, [a, c]], np.array([[0.0, 1.0], [0.0, 0.0]])
            out[(a, c)] = _w2_recursion(Dsys, F, K, float(s0), L, lyap_tol)
    return out


def _g_times_tucker(G: QuadMap, T3: Tucker3) -> np.ndarray:
    """Columns ``P[:, c] = sum_ab core[a, b, c] G (u_a (x) u_b)``."""
    U, core = T3.U, T3.core
    k = U.shape[1]
    P = np.zeros((G.rows, k))
    for c in range(k):
        P[:, c] = G.apply_core(U, core[:, :, c])
    return P


def w3_moments(Dsys: DrivenSystem, s0: float, L: int, lyap_tol: float = 1e-8) -> MomentSet:
    """Third-order moments; ``mhathat_i`` kept as Tucker tensors."""
    _check_order(L)
    if np.iscomplexobj(s0):
        raise ValueError("only real expansion points are supported")
    s0 = float(s0)
    E, A, G = Dsys.Ec, Dsys.Ac, Dsys.Gc
    M = Dsys.M
    if M > ORDER3_CAP:
        raise ValueError(f"order-3 moments limited to M <= {ORDER3_CAP}, got {M}")
    op = ShiftedOperator(E, A, s0)
    A_half = (A - 0.5 * s0 * E).tocsr()
    A_third = (A - s0 / 3.0 * E).tocsr()
    b = np.asarray(Dsys.b, dtype=float).reshape(-1, 1)
    rhs3 = Tucker3(b, np.ones((1, 1, 1)))
    m, mhat, mhh, resid = [], [], [], []
    prev_m = None
    for i in range(L):
        if i > 0:
            prev3 = mhh[-1]
            rhs3 = Tucker3(np.asarray(E @ prev3.U), -prev3.core)
        T3, r3, ok = solve3(E, A_third, rhs3, tol=lyap_tol)
        if not ok:
            raise LyapunovError(f"mhathat[{i}] at s0={s0}: residual {r3:.3e} > {lyap_tol:.1e}")
        mhh.append(T3)
        # circ2 A_half X + F K F^T = 0 with F K F^T = -E Xprev E^T + P (E U)^T
        P = _g_times_tucker(G, T3)
        EU = np.asarray(E @ T3.U)
        k3 = T3.U.shape[1]
        blocks_F = [P, EU]
        cores = [np.block([[np.zeros((k3, k3)), np.eye(k3)], [np.zeros((k3, 2 * k3))]])]
        if i > 0:
            X = mhat[-1]
            blocks_F.insert(0, np.asarray(E @ X.Z))
            cores.insert(0, -X.core)
        F = np.hstack(blocks_F)
        K = la.block_diag(*cores)
        res = _lyap(E, A_half, F, K, lyap_tol, f"mhat[{i}] at s0={s0}", Dsys.N)
        X = res.X
        mhat.append(X)
        resid.append(res.residual)
        src = -2.0 * G.apply_core(X.Z, X.core)
        if prev_m is not None:
            src = src + E @ prev_m
        prev_m = op.solve(src)
        m.append(prev_m)
    return MomentSet(s0, L, m, mhat, mhh, resid)


# ---------------------------------------------------------------------------
# dense unrolled representations (oracle scale)
# ---------------------------------------------------------------------------

def dense_rep_w2(Dsys: DrivenSystem):
    """``(E2, A2, b2, C2)`` with ``W2(s) = C2 (s E2 - A2)^{-1} b2``."""
    M = Dsys.M
    if M * M > DENSE_REP_CAP:
        raise ValueError(f"dense W2 representation limited to M^2 <= {DENSE_REP_CAP}")
    E, A = Dsys.Ec.toarray(), Dsys.Ac.toarray()
    G = Dsys.Gc.flat.toarray()
    E2 = la.block_diag(E, np.kron(E, E))
    A2 = np.block([[A, G], [np.zeros((M * M, M)), circled(2, E, A).toarray()]])
    b = Dsys.b
    b2 = np.concatenate([np.zeros(M), np.kron(b, b)])
    C2 = np.hstack([np.eye(M), np.zeros((M, M * M))])
    return E2, A2, b2, C2


def dense_rep_w3(Dsys: DrivenSystem):
    """``(E3, A3, b3, C3)`` with ``W3(s) = C3 (s E3 - A3)^{-1} b3``."""
    M = Dsys.M
    if M ** 3 > DENSE_REP_CAP:
        raise ValueError(f"dense W3 representation limited to M^3 <= {DENSE_REP_CAP}")
    E, A = Dsys.Ec.toarray(), Dsys.Ac.toarray()
    G = Dsys.Gc.flat.toarray()
    M2, M3 = M * M, M ** 3
    E3 = la.block_diag(E, np.kron(E, E), np.kron(np.kron(E, E), E))
    A3 = np.zeros((M + M2 + M3,) * 2)
    A3[:M, :M] = A
    A3[:M, M:M + M2] = 2.0 * G
    A3[M:M + M2, M:M + M2] = circled(2, E, A).toarray()
    A3[M:M + M2, M + M2:] = kron(G, E).toarray()
    A3[M + M2:, M + M2:] = circled(3, E, A).toarray()
    b = Dsys.b
    b3 = np.concatenate([np.zeros(M + M2), np.kron(np.kron(b, b), b)])
    C3 = np.hstack([np.eye(M), np.zeros((M, M2 + M3))])
    return E3, A3, b3, C3


# ---------------------------------------------------------------------------
# pointwise evaluation
# ---------------------------------------------------------------------------

_DENSE_EVAL = 200


def _resolvent(E, A, s, rhs):
    return ShiftedOperator(E, A, s).solve(-np.asarray(rhs))


def eval_W(Dsys: DrivenSystem, order: int, s) -> np.ndarray:
    """``W_order(s)`` by a cascade of solves, never forming Kronecker matrices."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    E, A, G, b = Dsys.Ec, Dsys.Ac, Dsys.Gc, np.asarray(Dsys.b, dtype=float)
    M = Dsys.M
    if order == 1:
        return _resolvent(E, A, s, b)
    if M > _DENSE_EVAL:
        ms = (w2_moments if order == 2 else w3_moments)(Dsys, s, 1, lyap_tol=1e-12)
        return ms.m[0]
    # dense Bartels-Stewart on the standard form; (sE(x)E - circ2 A) = -circ2_E (A - s/2 E)
    Ed = E.toarray()
    At = la.solve(Ed, (A - 0.5 * s * E).toarray())
    bt = la.solve(Ed, b)
    if order == 2:
        X = la.solve_continuous_lyapunov(At, -np.outer(bt, bt))
        return _resolvent(E, A, s, G.apply_core(np.eye(M), X))
    A3t = la.solve(Ed, (A - s / 3.0 * E).toarray())
    Y = _projected_sylv3(A3t, np.einsum("i,j,k->ijk", bt, bt, bt))
    P = _g_times_tucker(G, Tucker3(np.eye(M), Y))
    R = P @ Ed.T  # (G(x)E) y3 in matrix form
    X = la.solve_continuous_lyapunov(At, -la.solve(Ed, la.solve(Ed, R).T).T)
    return _resolvent(E, A, s, 2.0 * G.apply_core(np.eye(M), X))


def shifted_tensor_check(E, A, s0, i: int, atol: float = 1e-12) -> bool:
    """Check ``circ^i_E (A - s0/i E) == -s0 E^(x)i + circ^i_E A`` entrywise."""
    if i not in (2, 3):
        raise ValueError("i must be 2 or 3")
    E, A = as_csr(E), as_csr(A)
    lhs = circled(i, E, A - (s0 / i) * E)
    Ek = E
    for _ in range(i - 1):
        Ek = kron(Ek, E)
    rhs = -s0 * Ek + circled(i, E, A)
    diff = (lhs - rhs)
    return bool(diff.nnz == 0 or abs(diff).max() <= atol)
