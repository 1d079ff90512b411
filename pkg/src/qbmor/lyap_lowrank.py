"""Low-rank solver for Kronecker-sum equations with a sparse pencil.

Order two (matrix form)::

    A X E^T + E X A^T + F K F^T = 0

and order three (Tucker form)::

    (A(x)E(x)E + E(x)A(x)E + E(x)E(x)A) x + (F(x)F(x)F) c = 0

Both are solved by Galerkin projection onto a rational Krylov space of
``Ã = E^{-1} A``. New directions are ``(Ã - sI)^{-1}`` applied to the
dominant residual directions, with poles picked adaptively from the mirrored
Ritz values.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import ConvexHull, QhullError

from .kron_core import LowRankSymFactor, as_csr

log = logging.getLogger(__name__)

__all__ = [
    "LyapProblem",
    "LyapResult",
    "LyapunovError",
    "Tucker3",
    "chain_rhs",
    "solve",
    "solve3",
    "solve_block_triangular",
]


class LyapunovError(RuntimeError):
    """Breakdown or non-convergence of the low-rank solver."""


@dataclass
class LyapProblem:
    E: object
    Ashift: object
    rhs: LowRankSymFactor
    tol: float = 1e-8
    max_rank: int = 200
    max_iters: int = 100


@dataclass
class LyapResult:
    X: LowRankSymFactor
    residual: float
    converged: bool
    history: list = field(default_factory=list)
    basis_dim: int = 0

    def __iter__(self):
        yield self.X
        yield self.residual


@dataclass
class Tucker3:
    """Third-order tensor ``core x_1 U x_2 U x_3 U`` (row-major vectorised)."""

    U: np.ndarray
    core: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.U.shape[0])

    def to_vec(self) -> np.ndarray:
        if self.dim > 64:
            raise ValueError("refusing to form an M^3 vector for M > 64")
        T = np.einsum("abc,ia,jb,kc->ijk", self.core, self.U, self.U, self.U)
        return T.ravel()

    def mapped(self, M) -> "Tucker3":
        return Tucker3(np.asarray(M @ self.U), self.core)


def chain_rhs(E, X: LowRankSymFactor) -> LowRankSymFactor:
    """``(E (x) E)`` applied to a factored second-order object."""
    E = as_csr(E)
    if E.shape[1] != X.dim:
        raise ValueError(f"dimension mismatch: E is {E.shape}, factor has dim {X.dim}")
    return X.mapped(E)


# ---------------------------------------------------------------------------
# rational Krylov space
# ---------------------------------------------------------------------------

def _is_identity(E: sp.csr_matrix) -> bool:
    n = E.shape[0]
    return E.shape == (n, n) and E.nnz == n and abs(E - sp.identity(n)).max() == 0


class _RationalSpace:
    """Orthonormal basis ``V`` with cached ``Ã V`` and ``T = V^T Ã V``."""

    def __init__(self, E, A):
        self.E = as_csr(E)
        self.A = as_csr(A)
        self.n = self.A.shape[0]
        self.E_eye = _is_identity(self.E)
        self._E_lu = None if self.E_eye else spla.splu(self.E.tocsc())
        self._lus: dict = {}
        self.V = np.zeros((self.n, 0))
        self.AV = np.zeros((self.n, 0))
        self.T = np.zeros((0, 0))
        self.shifts: list = []

    def Einv(self, X):
        return X if self.E_eye else self._E_lu.solve(np.asarray(X))

    def apply(self, X):
        return self.Einv(self.A @ X)

    def _shifted_solve(self, s, X):
        key = complex(s)
        lu = self._lus.get(key)
        if lu is None:
            K = (self.A - s * self.E).tocsc()
            if np.iscomplexobj(s) and s.imag != 0:
                K = K.astype(complex)
            else:
                K = K.astype(float)
            try:
                lu = spla.splu(K)
            except RuntimeError as exc:
                raise LyapunovError(f"shifted pencil singular at pole {s}") from exc
            if len(self._lus) > 8:
                self._lus.pop(next(iter(self._lus)))
            self._lus[key] = lu
        EX = self.E @ X
        if np.iscomplexobj(lu.L.data) and not np.iscomplexobj(EX):
            EX = EX.astype(complex)
        return lu.solve(EX)

    def extend(self, W) -> int:
        """Orthogonalise ``W`` against ``V`` (two passes) and append; returns added count."""
        W = np.asarray(W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        added = []
        for col in W.T:
            nrm0 = np.linalg.norm(col)
            if nrm0 == 0 or not np.isfinite(nrm0):
                continue
            w = col / nrm0
            Q = np.column_stack([self.V] + added) if added else self.V
            for _ in range(2):
                w = w - Q @ (Q.T @ w)
            nrm = np.linalg.norm(w)
            if nrm > 1e-10:
                added.append(w / nrm)
        if not added:
            return 0
        Wn = np.column_stack(added)
        AWn = self.apply(Wn)
        k = self.V.shape[1]
        T = np.zeros((k + Wn.shape[1],) * 2)
        T[:k, :k] = self.T
        T[:k, k:] = self.V.T @ AWn
        T[k:, :k] = Wn.T @ self.AV
        T[k:, k:] = Wn.T @ AWn
        self.V = np.hstack([self.V, Wn])
        self.AV = np.hstack([self.AV, AWn])
        self.T = T
        return Wn.shape[1]

    def expand(self, directions, s) -> int:
        W = self._shifted_solve(s, directions)
        self.shifts.append(s)
        if np.iscomplexobj(W):
            W = np.hstack([W.real, W.imag])
        return self.extend(W)

    def outer(self) -> np.ndarray:
        """``(I - V V^T) Ã V``; its column space carries the residual."""
        return self.AV - self.V @ self.T


def _spectral_bounds(space: _RationalSpace):
    """Rough estimates of the extreme eigenvalue magnitudes of ``Ã``."""
    n = space.n
    if n <= 300:
        Ad = space.A.toarray()
        lam = la.eigvals(Ad) if space.E_eye else la.eigvals(Ad, space.E.toarray())
        lam = lam[np.isfinite(lam)]
        if lam.size == 0:
            return 1.0, 1.0
        mags = np.abs(lam)
        return max(mags.min(), 1e-8 * mags.max(), 1e-12), max(mags.max(), 1e-12)
    op = spla.LinearOperator((n, n), matvec=lambda x: space.apply(x), dtype=float)
    try:
        big = abs(spla.eigs(op, k=1, which="LM", tol=1e-2, maxiter=400, return_eigenvectors=False)[0])
    except (spla.ArpackNoConvergence, spla.ArpackError):
        big = spla.onenormest(space.A) if space.E_eye else 1e3
    try:
        lu = spla.splu(space.A.tocsc())
        inv = spla.LinearOperator((n, n), matvec=lambda x: lu.solve(space.E @ x), dtype=float)
        small = 1.0 / abs(spla.eigs(inv, k=1, which="LM", tol=1e-2, maxiter=400, return_eigenvectors=False)[0])
    except (RuntimeError, spla.ArpackNoConvergence, spla.ArpackError):
        small = big * 1e-6
    return max(small, 1e-12), max(big, small)


def _next_pole(space: _RationalSpace, smin: float, smax: float):
    ritz = la.eigvals(space.T)
    mirror = np.abs(ritz.real) - 1j * ritz.imag
    pts = np.concatenate([mirror, [smin, smax]])
    scale = max(np.abs(pts).max(), 1e-300)
    if np.all(np.abs(pts.imag) <= 1e-8 * scale):
        lo, hi = pts.real.min(), pts.real.max()
        cand = np.geomspace(max(lo, 1e-14), hi, 200) if lo > 0 else np.linspace(lo, hi, 200)
        cand = cand.astype(complex)
    else:
        xy = np.column_stack([pts.real, pts.imag])
        try:
            hull = ConvexHull(xy)
            edges = [(pts[a], pts[b]) for a, b in hull.simplices]
        except (QhullError, ValueError):
            order = np.argsort(pts.real)
            edges = list(zip(pts[order][:-1], pts[order][1:]))
        t = np.linspace(0.0, 1.0, 21)
        cand = np.concatenate([a + t * (b - a) for a, b in edges])
    poles = []
    for s in space.shifts:
        poles.append(s)
        if np.iscomplexobj(s) and s.imag != 0:
            poles.append(np.conj(s))
    poles = np.asarray(poles, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.log(np.abs(cand[:, None] - poles[None, :]) + 1e-300).sum(axis=1) if poles.size else 0.0
        # Ritz values of a non-normal pencil may leak into the right half-plane;
        # reflect them so a candidate pole can never coincide with one
        stable = -np.abs(ritz.real) + 1j * ritz.imag
        den = np.log(np.abs(cand[:, None] - stable[None, :]) + 1e-300).sum(axis=1)
    score = np.asarray(num - den, dtype=float)
    near = np.abs(cand[:, None] - ritz[None, :]).min(axis=1) <= 1e-6 * np.abs(cand)
    score[near | ~np.isfinite(score)] = -np.inf
    if not np.any(np.isfinite(score)):
        return float(max(smin, 1e-12))
    s = cand[int(np.argmax(score))]
    if abs(s.imag) <= 1e-8 * max(abs(s), 1e-300):
        return float(s.real)
    return complex(s)


def _residual_directions(R, block: int) -> np.ndarray:
    """Dominant left singular vectors of the residual factor ``R``."""
    U, svals, _ = la.svd(R, full_matrices=False)
    if svals.size == 0 or svals[0] == 0:
        return U[:, :0]
    keep = min(block, int(np.sum(svals > 1e-3 * svals[0])))
    return U[:, : max(keep, 1)]


# ---------------------------------------------------------------------------
# order two
# ---------------------------------------------------------------------------

def _factored_norm(F, K) -> float:
    if F.shape[1] == 0:
        return 0.0
    _, R = la.qr(F, mode="economic")
    return float(np.linalg.norm(R @ K @ R.T))


def _projected_lyap(T, C):
    lam = la.eigvals(T)
    gap = np.abs(lam[:, None] + lam[None, :]).min()
    if gap <= 1e-13 * max(np.abs(lam).max(), 1.0):
        raise LyapunovError(
            "projected Lyapunov operator is singular (Ritz values sum to zero); "
            "the shifted pencil does not admit a unique solution"
        )
    return la.solve_continuous_lyapunov(T, -C)


def true_residual(E, A, X: LowRankSymFactor, F, K) -> float:
    """Backward-error residual of ``A X E^T + E X A^T + F K F^T``.

    The Frobenius norm of the residual is divided by
    ``||F K F^T|| + 2 ||A X E^T||``, which is invariant under rescaling of the
    pencil and of the right-hand side separately.
    """
    E, A = as_csr(E), as_csr(A)
    Z, C = X.Z, X.core
    k, r = Z.shape[1], F.shape[1]
    U = np.hstack([A @ Z, E @ Z, F])
    core = np.zeros((2 * k + r,) * 2)
    core[:k, k:2 * k] = C
    core[k:2 * k, :k] = C
    core[2 * k:, 2 * k:] = K
    _, R = la.qr(U, mode="economic")
    ref = _factored_norm(F, K)
    if k:
        _, Ra = la.qr(U[:, :k], mode="economic")
        _, Re = la.qr(U[:, k:2 * k], mode="economic")
        ref += 2.0 * float(np.linalg.norm(Ra @ C @ Re.T))
    res = float(np.linalg.norm(R @ core @ R.T))
    return res / ref if ref > 0 else res


def _scale(T, P, Y, C) -> float:
    """``||C|| + 2 ||Ã V Y V^T||`` from projected quantities."""
    AY = np.sqrt(np.linalg.norm(T @ Y) ** 2 + np.linalg.norm(P @ Y) ** 2)
    return max(np.linalg.norm(C) + 2.0 * AY, 1e-300)


def _truncate(Y, T, C, P, tol, max_rank, symmetric):
    """Compress ``Y`` keeping the standard-form residual at most ``tol``."""
    def resid(Yt):
        inner = T @ Yt + Yt @ T.T + C
        return np.sqrt(np.linalg.norm(inner) ** 2 + np.linalg.norm(P @ Yt) ** 2
                       + np.linalg.norm(P @ Yt.T) ** 2) / _scale(T, P, Yt, C)

    if symmetric:
        w, Q = la.eigh(0.5 * (Y + Y.T))
        order = np.argsort(-np.abs(w))
        w, Q = w[order], Q[:, order]
        top = np.abs(w[0]) if w.size else 0.0
        for thr in (tol, tol * 1e-2, tol * 1e-4, 0.0):
            keep = int(np.sum(np.abs(w) > thr * top)) if top > 0 else 0
            keep = min(keep, max_rank)
            Yt = (Q[:, :keep] * w[:keep]) @ Q[:, :keep].T
            if resid(Yt) <= tol or thr == 0.0:
                return Q[:, :keep], w[:keep], None
        return Q, w, None
    U, svals, Wt = la.svd(Y)
    top = svals[0] if svals.size else 0.0
    for thr in (tol, tol * 1e-2, tol * 1e-4, 0.0):
        keep = int(np.sum(svals > thr * top)) if top > 0 else 0
        keep = min(keep, max_rank)
        Yt = (U[:, :keep] * svals[:keep]) @ Wt[:keep]
        if resid(Yt) <= tol or thr == 0.0:
            break
    basis = np.hstack([U[:, :keep], Wt[:keep].T])
    core = np.zeros((2 * keep, 2 * keep))
    core[:keep, keep:] = np.diag(svals[:keep])
    return basis, None, core


def solve(p: LyapProblem, warm_basis=None) -> LyapResult:
    """Solve ``A X E^T + E X A^T + R = 0`` for a factored right-hand side ``R``.

    ``p.rhs`` holds ``R = Z K Z^T``. The result ``X`` is returned in the same
    factored form. On non-convergence the best iterate is returned with
    ``converged=False``.
    """
    E, A = as_csr(p.E), as_csr(p.Ashift)
    n = A.shape[0]
    if p.rhs.dim != n or E.shape != A.shape:
        raise ValueError(f"dimension mismatch: pencil {A.shape}, rhs dim {p.rhs.dim}")
    F, K = np.asarray(p.rhs.Z, dtype=float), p.rhs.core
    if F.shape[1] == 0 or _factored_norm(F, K) == 0.0:
        return LyapResult(LowRankSymFactor.zeros(n), 0.0, True, [0.0], 0)
    symmetric = p.rhs.symmetric or np.allclose(K, K.T, rtol=0, atol=1e-14 * np.abs(K).max())

    space = _RationalSpace(E, A)
    Ft = space.Einv(F)
    space.extend(Ft)
    if warm_basis is not None:
        space.extend(warm_basis)
    block = max(1, min(F.shape[1], 8))
    smin, smax = _spectral_bounds(space)
    history: list = []
    best = (np.inf, None)
    tol_inner = p.tol
    for it in range(p.max_iters + 1):
        Fh = space.V.T @ Ft
        C = Fh @ K @ Fh.T
        Y = _projected_lyap(space.T, C)
        P = space.outer()
        PY = P @ Y
        res = np.sqrt(np.linalg.norm(PY) ** 2 + np.linalg.norm(P @ Y.T) ** 2) / _scale(space.T, P, Y, C)
        if res < best[0]:
            best = (res, Y, space.V.copy(), space.T.copy(), C, P)
        history.append(best[0])
        if res <= tol_inner:
            X = _finish(best, p, symmetric)
            true = true_residual(E, A, X, F, K)
            if true <= p.tol or space.E_eye:
                return LyapResult(X, true, True, history, space.V.shape[1])
            tol_inner = tol_inner * max(p.tol / true, 1e-3)
        if it == p.max_iters or space.V.shape[1] >= n:
            break
        dirs = _residual_directions(np.hstack([PY, P @ Y.T]), block)
        s = _next_pole(space, smin, smax)
        if space.expand(dirs, s) == 0 and space.expand(dirs, float(abs(s))) == 0:
            break
    X = _finish(best, p, symmetric)
    true = true_residual(E, A, X, F, K)
    conv = true <= p.tol
    if not conv:
        log.warning("low-rank Lyapunov solve stopped at residual %.3e (tol %.1e)", true, p.tol)
    return LyapResult(X, true, conv, history, space.V.shape[1])


def _compress(Z, core, rel=1e-14) -> LowRankSymFactor:
    """Re-factor ``Z core Z^T`` (symmetric core) with orthonormal columns."""
    if Z.shape[1] == 0:
        return LowRankSymFactor(Z)
    Q, R = la.qr(Z, mode="economic")
    w, U = la.eigh(R @ (0.5 * (core + core.T)) @ R.T)
    keep = np.abs(w) > rel * max(np.abs(w).max(), 1e-300)
    return LowRankSymFactor(Q @ U[:, keep], w[keep])


def solve_block_triangular(p: LyapProblem, split: int) -> LyapResult:
    """Solve for a block upper-triangular pencil with a small trailing block.

    Requires ``A[split:, :split] = 0``, ``E`` block diagonal with identity
    trailing block and a symmetric rhs core. The coupling is removed by the
    change of variables ``x~ = x - Pi z`` with ``Axx Pi + Axz = Ex Pi Azz``;
    the decoupled leading block is solved by :func:`solve`, the trailing and
    mixed blocks by dense and shifted sparse solves. Falls back to
    :func:`solve` when the trailing block is not safely diagonalisable.
    """
    E, A = as_csr(p.E), as_csr(p.Ashift)
    n = A.shape[0]
    q = n - split
    F, K = np.asarray(p.rhs.Z, dtype=float), p.rhs.core
    if q <= 0 or split <= 0 or F.shape[1] == 0:
        return solve(p)
    if A[split:, :split].nnz or E[split:, :split].nnz or E[:split, split:].nnz \
            or not _is_identity(E[split:, split:].tocsr()) or not np.allclose(K, K.T):
        return solve(p)
    Axx, Axz = A[:split, :split].tocsr(), A[:split, split:].toarray()
    Azz, Ex = A[split:, split:].toarray(), E[:split, :split].tocsr()
    lam, Qz = la.eig(Azz)
    if np.linalg.cond(Qz) > 1e8:
        log.info("trailing block not safely diagonalisable; using the generic solver")
        return solve(p)
    Qi = la.inv(Qz)

    def real(M):
        if np.abs(M.imag).max(initial=0.0) > 1e-8 * max(np.abs(M).max(initial=0.0), 1e-300):
            raise LyapunovError("complex residue in block-triangular solve")
        return M.real

    try:
        # Axx Pi - Ex Pi Azz = -Axz, solved column-wise for Pi Qz
        rhs = -Axz @ Qz
        Pi = real(np.column_stack([_shift_solve(Axx, Ex, -mu, rhs[:, j]) for j, mu in enumerate(lam)]) @ Qi)
        Fx = F[:split] - Pi @ F[split:]
        Fz = F[split:]
        Xzz = la.solve_continuous_lyapunov(Azz, -(Fz @ K @ Fz.T))
        # Axx Y + Ex Y Azz^T = -Fx K Fz^T  with  Azz^T = Qi^T diag(lam) Qz^T
        Rt = -(Fx @ K @ Fz.T) @ Qi.T
        Y = real(np.column_stack([_shift_solve(Axx, Ex, mu, Rt[:, j]) for j, mu in enumerate(lam)]) @ Qz.T)
    except (LyapunovError, RuntimeError):
        return solve(p)
    sub_tol, history, sub = p.tol * 1e-1, [], None
    for _ in range(3):
        if _factored_norm(Fx, K) == 0.0:
            Xl = LowRankSymFactor.zeros(split)
        else:
            sub = solve(LyapProblem(Ex, Axx, LowRankSymFactor(Fx, core=K), sub_tol, p.max_rank, p.max_iters))
            Xl = sub.X
            history += list(sub.history)
        Xt = _assemble_blocks(Xl, Y, Xzz, Pi)
        true = true_residual(E, A, Xt, F, K)
        history.append(true)
        if true <= p.tol or sub is None or sub_tol <= 1e-14:
            break
        sub_tol = max(sub_tol * 0.5 * p.tol / true, 1e-14)
    if true > p.tol:
        # near-resonant trailing block (ill-conditioned Pi): try the coupled solve
        log.info("block-triangular path reached %.3e; retrying with the generic solver", true)
        alt = solve(p)
        if alt.residual < true:
            return alt
        log.warning("block-triangular Lyapunov solve stopped at residual %.3e (tol %.1e)", true, p.tol)
    return LyapResult(Xt, true, true <= p.tol, history, (sub.basis_dim if sub else 0) + q)


def _assemble_blocks(Xl: LowRankSymFactor, Xxz, Xzz, Pi) -> LowRankSymFactor:
    """Factor of ``T^{-1} [[Xl, Xxz], [Xxz^T, Xzz]] T^{-T}``, ``T^{-1} = [[I, Pi], [0, I]]``."""
    split, q = Xxz.shape
    Zx, Kx = Xl.Z, Xl.core
    k = Zx.shape[1]
    Z = np.zeros((split + q, k + 2 * q))
    Z[:split, :k] = Zx
    Z[:split, k:k + q] = Xxz
    Z[split:, k + q:] = np.eye(q)
    Z[:split] += Pi @ Z[split:]
    core = np.zeros((k + 2 * q,) * 2)
    core[:k, :k] = Kx
    core[k:k + q, k + q:] = np.eye(q)
    core[k + q:, k:k + q] = np.eye(q)
    core[k + q:, k + q:] = 0.5 * (Xzz + Xzz.T)
    return _compress(Z, core)


def _shift_solve(Axx, Ex, mu, rhs):
    K = (Axx + mu * Ex).tocsc()
    K = K.astype(complex) if np.iscomplexobj(mu) else K.astype(float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spla.MatrixRankWarning)
        out = spla.spsolve(K, rhs.astype(K.dtype))
    if not np.all(np.isfinite(out)):
        # resonance between the blocks: the Sylvester equation is singular
        raise LyapunovError(f"singular shifted solve at mu = {mu}")
    return out


def _finish(best, p: LyapProblem, symmetric: bool) -> LowRankSymFactor:
    _, Y, V, T, C, P = best
    Q, w, core = _truncate(Y, T, C, P, p.tol, p.max_rank, symmetric)
    if core is None:
        return LowRankSymFactor(V @ Q, w)
    return LowRankSymFactor(V @ Q, core=core)


# ---------------------------------------------------------------------------
# order three
# ---------------------------------------------------------------------------

def _mode(Y, C_mat, n):
    """Multiply mode ``n`` of a 3-tensor by the matrix ``C_mat``."""
    if n == 0:
        return np.einsum("ia,abc->ibc", C_mat, Y)
    if n == 1:
        return np.einsum("jb,abc->ajc", C_mat, Y)
    return np.einsum("kc,abc->abk", C_mat, Y)


def _projected_sylv3(T, C):
    lam, Q = la.eig(T)
    gap = np.abs(lam[:, None, None] + lam[None, :, None] + lam[None, None, :]).min()
    if gap <= 1e-13 * max(np.abs(lam).max(), 1.0):
        raise LyapunovError("projected order-3 operator is singular")
    Qi = la.inv(Q)
    Ct = C.astype(complex)
    for n in range(3):
        Ct = _mode(Ct, Qi, n)
    Yt = -Ct / (lam[:, None, None] + lam[None, :, None] + lam[None, None, :])
    for n in range(3):
        Yt = _mode(Yt, Q, n)
    return Yt.real


def _unfold(Y, n):
    return np.moveaxis(Y, n, 0).reshape(Y.shape[n], -1)


def solve3(E, Ashift, rhs: Tucker3, tol: float = 1e-8, max_iters: int = 100,
           max_dim: int = 512) -> tuple:
    """Solve the order-3 Kronecker-sum equation; returns ``(Tucker3, residual, converged)``.

    The residual is relative and measured in the standard form ``Ã = E^{-1}A``.
    """
    E, A = as_csr(E), as_csr(Ashift)
    n = A.shape[0]
    if n > max_dim:
        raise ValueError(f"order-3 solve limited to dimension <= {max_dim}, got {n}")
    F = np.asarray(rhs.U, dtype=float)
    if F.shape[0] != n:
        raise ValueError("dimension mismatch in order-3 rhs")
    if F.shape[1] == 0 or not np.any(rhs.core):
        return Tucker3(np.zeros((n, 0)), np.zeros((0, 0, 0))), 0.0, True
    space = _RationalSpace(E, A)
    Ft = space.Einv(F)
    space.extend(Ft)
    block = max(1, min(F.shape[1], 8))
    smin, smax = _spectral_bounds(space)
    best = (np.inf, None, None)
    for it in range(max_iters + 1):
        Fh = space.V.T @ Ft
        C = rhs.core
        for m in range(3):
            C = _mode(C, Fh, m)
        ref = max(np.linalg.norm(C), 1e-300)
        Y = _projected_sylv3(space.T, C)
        P = space.outer()
        parts = [P @ _unfold(Y, m) for m in range(3)]
        res = np.sqrt(sum(np.linalg.norm(x) ** 2 for x in parts)) / ref
        if res < best[0]:
            best = (res, Y, space.V.copy())
        if res <= tol or it == max_iters or space.V.shape[1] >= n:
            break
        dirs = _residual_directions(np.hstack(parts), block)
        s = _next_pole(space, smin, smax)
        if space.expand(dirs, s) == 0 and space.expand(dirs, float(abs(s))) == 0:
            break
    res, Y, V = best
    return Tucker3(V, Y), float(res), bool(res <= tol)
