"""Reducers: input-tailored approximate moment matching and the baselines
(one-sided multi-moment matching, its input-weighted variant, POD) plus the
IRKA frequency heuristic."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .kron_core import as_csr
from .moments import ShiftedOperator, _w2_recursion, linear_moments
from .qb_model import (
    DrivenSystem,
    QBSystem,
    SignalGenerator,
    assemble_driven,
    assemble_driven_extended,
    assemble_input_weighted,
    galerkin_project,
)

log = logging.getLogger(__name__)

__all__ = [
    "AssmConfig",
    "DEFLATION_TOL",
    "MULTM_DEFLATION_TOL",
    "ReductionBasis",
    "assm_reduce",
    "assm_x2_bases",
    "irka_frequencies",
    "krylov_basis",
    "multm_iw_reduce",
    "multm_reduce",
    "orthonormalize",
    "pod_reduce",
]

DEFLATION_TOL = 1e-10
# the multi-moment chains of diffusive models are nearly collinear; a looser
# cut drops vectors that are still well above round-off
MULTM_DEFLATION_TOL = 1e-12
DEFAULT_LYAP_TOL = 1e-8


@dataclass
class ReductionBasis:
    V: np.ndarray
    provenance: list
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.V.shape[1])

    def orthogonality_error(self) -> float:
        if self.n == 0:
            return 0.0
        return float(np.abs(self.V.T @ self.V - np.eye(self.n)).max())


@dataclass
class AssmConfig:
    freqs_w2: tuple = ()
    orders_w2: tuple = ()
    freqs_w1: tuple = ()
    orders_w1: tuple = ()
    lowrank_tol: float = 1e-3
    # relative, so it must not follow lowrank_tol (absolute): that would break
    # invariance of the basis under input scaling
    lyap_tol: float = DEFAULT_LYAP_TOL

    def __post_init__(self):
        self.freqs_w2 = tuple(float(s) for s in self.freqs_w2)
        self.freqs_w1 = tuple(float(s) for s in self.freqs_w1)
        self.orders_w2 = _broadcast_orders(self.orders_w2, self.freqs_w2, "orders_w2")
        self.orders_w1 = _broadcast_orders(self.orders_w1, self.freqs_w1, "orders_w1")
        for name, fr in (("freqs_w2", self.freqs_w2), ("freqs_w1", self.freqs_w1)):
            if len(set(fr)) != len(fr):
                raise ValueError(f"{name} contains duplicate frequencies")
        if self.lowrank_tol <= 0 or not 0 < self.lyap_tol < np.inf:
            raise ValueError("tolerances must be positive")


def _broadcast_orders(orders, freqs, name):
    if isinstance(orders, (int, np.integer)):
        orders = (int(orders),) * len(freqs)
    orders = tuple(int(o) for o in orders)
    if len(orders) != len(freqs):
        raise ValueError(f"{name} needs one order per frequency")
    if any(o < 1 for o in orders):
        raise ValueError(f"{name}: all orders must be >= 1")
    return orders


def orthonormalize(blocks, tags=None, against=None, tol: float = DEFLATION_TOL):
    """Modified Gram-Schmidt with one re-orthogonalisation pass and deflation.

    ``blocks`` is a list of matrices (or vectors); ``tags`` holds one tag per
    column. Columns whose remainder falls below ``tol`` times their original
    norm are dropped. Returns ``(Q, kept_tags, n_deflated)``.
    """
    cols, ctags = [], []
    for bi, B in enumerate(blocks):
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        for k in range(B.shape[1]):
            cols.append(B[:, k])
            ctags.append(None if tags is None else tags[len(ctags)])
    if not cols and against is None:
        return np.zeros((0, 0)), [], 0
    n = cols[0].size if cols else against.shape[0]
    Q = np.zeros((n, 0)) if against is None else np.asarray(against, dtype=float)
    n_fixed = Q.shape[1]
    out, out_tags, dropped = [], [], 0
    for c, tg in zip(cols, ctags):
        nrm0 = np.linalg.norm(c)
        if nrm0 == 0 or not np.isfinite(nrm0):
            dropped += 1
            continue
        w = c / nrm0
        for _ in range(2):
            for q in (Q.T if n_fixed else ()):
                w = w - (q @ w) * q
            for q in out:
                w = w - (q @ w) * q
        nrm = np.linalg.norm(w)
        if nrm <= tol:
            dropped += 1
            continue
        out.append(w / nrm)
        out_tags.append(tg)
    V = np.column_stack(out) if out else np.zeros((n, 0))
    return V, out_tags, dropped


# ---------------------------------------------------------------------------
# linear Krylov part
# ---------------------------------------------------------------------------

def _input_block(S: QBSystem) -> np.ndarray:
    B = S.B.toarray()
    if S.Bp is not None and S.Bp.nnz:
        B = np.hstack([B, S.Bp.toarray()])
    return B


def krylov_basis(S: QBSystem, freqs, orders) -> ReductionBasis:
    """Orthonormal basis of the union of ``K_L(A_s^{-1} E, A_s^{-1} B)``."""
    freqs = [float(s) for s in freqs]
    orders = _broadcast_orders(orders, freqs, "orders")
    blocks, tags = [], []
    B = _input_block(S)
    for s, L in zip(freqs, orders):
        ks = linear_moments(S.E, S.A, B, s, L)
        for i, k in enumerate(ks):
            blocks.append(k)
            tags += [f"w1-moment({s:g},{i})"] * k.shape[1]
    V, kept, dropped = orthonormalize(blocks, tags) if blocks else (np.zeros((S.N, 0)), [], 0)
    return ReductionBasis(V, kept, {"deflated": dropped})


# ---------------------------------------------------------------------------
# input-tailored part
# ---------------------------------------------------------------------------

def _w2_for_freq(Dsys: DrivenSystem, s, L, lyap_tol):
    b = np.asarray(Dsys.b, dtype=float).reshape(-1, 1)
    ms = _w2_recursion(Dsys, b, np.eye(1), s, L, lyap_tol)
    N = Dsys.N
    Z, ztags = [], []
    for i, X in enumerate(ms.mhat):
        if X.rank == 0:
            continue
        if X.symmetric:
            F = X.Z * np.sqrt(np.abs(X.weights))
        else:  # general core: symmetric-part square-root factor
            w, Q = la.eigh(0.5 * (X.core + X.core.T))
            F = X.Z @ (Q * np.sqrt(np.abs(w)))
        Z.append(F[:N])
        ztags += [f"w2-lowrank({s:g},{i},{k})" for k in range(F.shape[1])]
    M = [np.asarray(m)[:N] for m in ms.m]
    return M, Z, ztags, ms


def assm_x2_bases(Dsys: DrivenSystem, cfg: AssmConfig, V_perp=None, jobs: int = 1):
    """Bases ``(Va, Vb)`` targeting the second-order input-tailored moments.

    ``Va`` spans the projected moments ``Px m_i``; ``Vb`` collects the left
    singular vectors of ``P_perp Z`` with singular value above the absolute
    threshold ``cfg.lowrank_tol``.
    """
    N = Dsys.N
    V_perp = np.zeros((N, 0)) if V_perp is None else np.asarray(V_perp, dtype=float)
    items = list(zip(cfg.freqs_w2, cfg.orders_w2))
    run = lambda it: _w2_for_freq(Dsys, it[0], it[1], cfg.lyap_tol)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run, items))
    else:
        results = [run(it) for it in items]
    mblocks, mtags, zblocks = [], [], []
    moment_sets = []
    for (s, L), (M, Z, ztags, ms) in zip(items, results):
        for i, m in enumerate(M):
            mblocks.append(m)
            mtags.append(f"w2-moment({s:g},{i})")
        zblocks += Z
        moment_sets.append(ms)
    Va, va_tags, _ = orthonormalize(mblocks, mtags) if mblocks else (np.zeros((N, 0)), [], 0)
    if Va.shape[0] == 0:
        Va = np.zeros((N, 0))
    Zmat = np.hstack(zblocks) if zblocks else np.zeros((N, 0))
    Q, _, _ = orthonormalize([Va, V_perp]) if (Va.shape[1] + V_perp.shape[1]) else (np.zeros((N, 0)), [], 0)
    Pz = Zmat - Q @ (Q.T @ Zmat) if Q.shape[1] else Zmat
    if Pz.shape[1]:
        U, svals, _ = la.svd(Pz, full_matrices=False)
        keep = int(np.sum(svals > cfg.lowrank_tol))
        Vb = U[:, :keep]
    else:
        svals, Vb = np.zeros(0), np.zeros((N, 0))
    info = {
        "singular_values": svals,
        "lyap_residuals": [r for ms in moment_sets for r in ms.residuals],
        "mhat_ranks": [X.rank for ms in moment_sets for X in ms.mhat],
        "va_tags": va_tags,
        "moment_sets": moment_sets,
    }
    return Va, Vb, info


def assm_reduce(S: QBSystem, T: SignalGenerator, cfg: AssmConfig, jobs: int = 1):
    """Input-tailored approximate moment matching; returns ``(basis, reduced system)``."""
    V1 = krylov_basis(S, cfg.freqs_w1, cfg.orders_w1) if cfg.freqs_w1 else ReductionBasis(np.zeros((S.N, 0)), [])
    if cfg.freqs_w2:
        Dsys = assemble_driven_extended(S, T) if S.extended else assemble_driven(S, T)
        Va, Vb, info = assm_x2_bases(Dsys, cfg, V1.V, jobs=jobs)
    else:
        Va, Vb, info = np.zeros((S.N, 0)), np.zeros((S.N, 0)), {}
    tags = list(info.get("va_tags", [])) + [f"w2-lowrank(sv{k})" for k in range(Vb.shape[1])] + list(V1.provenance)
    V, kept, dropped = orthonormalize([Va, Vb, V1.V], tags)
    info = dict(info)
    info.update({"n_a": Va.shape[1], "n_b": Vb.shape[1], "n_1": V1.n, "deflated": dropped,
                 "lowrank_tol": cfg.lowrank_tol, "lyap_tol": cfg.lyap_tol, "threshold": "absolute"})
    basis = ReductionBasis(V, kept, info)
    return basis, galerkin_project(S, V)


# ---------------------------------------------------------------------------
# multi-moment matching baseline
# ---------------------------------------------------------------------------

def _chain(op: ShiftedOperator, start, depth):
    out = []
    w = op.solve(start)
    out.append(w)
    for _ in range(depth - 1):
        w = op.solve(op.E @ w)
        out.append(w)
    return out


def multm_reduce(S: QBSystem, freqs, q1, q2, jobs: int = 1,
                 deflation_tol: float = MULTM_DEFLATION_TOL) -> ReductionBasis:
    """One-sided multi-moment matching at the diagonal pairs ``(σ, σ)``.

    Level one spans ``K_{q1}(A_σ^{-1}E, A_σ^{-1}B)`` with vectors ``v_1..v_{q1}``.
    Level two adds, with ``A_{2σ}``, the chains of depth ``q2 - i - j + 2``
    started at ``A_{2σ}^{-1} G(v_i (x) v_j + v_j (x) v_i)`` for ``i >= j``,
    ``i + j <= q2 + 1``, and chains of depth ``q2 - i + 1`` started at
    ``A_{2σ}^{-1} D(v_i (x) I_p)``.
    """
    freqs = [float(s) for s in freqs]
    q1s = _broadcast_orders(q1, freqs, "q1")
    q2s = _broadcast_orders(q2, freqs, "q2")
    for a, b in zip(q1s, q2s):
        if a < b:
            raise ValueError("multi-moment matching needs q1 >= q2")
    B = _input_block(S)

    def per_freq(item):
        s, a, b = item
        vs = linear_moments(S.E, S.A, B, s, a)
        blocks, tags = [], []
        for i, v in enumerate(vs):
            blocks.append(v)
            tags += [f"multm({s:g},lin,{i})"] * v.shape[1]
        op2 = ShiftedOperator(S.E, S.A, 2.0 * s)
        vcols = [v[:, c] for v in vs for c in range(v.shape[1])]
        nv = len(vcols)
        for i in range(nv):
            for j in range(i + 1):
                if (i + 1) + (j + 1) > b + 1:
                    continue
                g = S.G.apply(vcols[i], vcols[j])
                if i != j:
                    g = g + S.G.apply(vcols[j], vcols[i])
                depth = b - (i + 1) - (j + 1) + 2
                for d, w in enumerate(_chain(op2, g, depth)):
                    blocks.append(w)
                    tags.append(f"multm({s:g},G,{i},{j},{d})")
        if not S.D.is_zero():
            for i in range(min(b, nv)):
                Dv = S.D.partial_right(vcols[i]).toarray()
                depth = b - (i + 1) + 1
                for d, w in enumerate(_chain(op2, Dv, depth)):
                    blocks.append(w)
                    tags += [f"multm({s:g},D,{i},{d})"] * w.shape[1]
        return blocks, tags

    items = list(zip(freqs, q1s, q2s))
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(per_freq, items))
    else:
        results = [per_freq(it) for it in items]
    blocks = [b for r in results for b in r[0]]
    tags = [t for r in results for t in r[1]]
    V, kept, dropped = orthonormalize(blocks, tags, tol=deflation_tol)
    return ReductionBasis(V, kept, {"deflated": dropped, "q1": q1s, "q2": q2s})


def multm_iw_reduce(S: QBSystem, F: SignalGenerator, freqs, q1, q2, jobs: int = 1) -> ReductionBasis:
    """Multi-moment matching on the input-weighted system, then extraction of
    the state block of the extended basis."""
    Sw = assemble_input_weighted(S, F).as_qbsystem()
    ext = multm_reduce(Sw, freqs, q1, q2, jobs=jobs)
    V, kept, dropped = orthonormalize([ext.V[: S.N]], ext.provenance)
    info = {"extended_n": ext.n, "deflated": dropped + ext.info.get("deflated", 0), "extended_basis": ext.V}
    return ReductionBasis(V, kept, info)


# ---------------------------------------------------------------------------
# POD
# ---------------------------------------------------------------------------

def pod_reduce(snapshots, n: int, blocks=None) -> ReductionBasis:
    """Leading left singular vectors of the snapshot matrix.

    ``blocks`` is an optional list of ``(rows, n_b)`` pairs partitioning the
    state; each block gets its own POD basis and the result is block diagonal.
    """
    X = np.asarray(snapshots, dtype=float)
    if X.shape[1] < n:
        raise ValueError(f"need at least n={n} snapshots, got {X.shape[1]}")
    if blocks is None:
        parts = [(X.shape[0], n)]
    else:
        parts = [(int(r), int(k)) for r, k in blocks]
        if sum(r for r, _ in parts) != X.shape[0]:
            raise ValueError("block row sizes must add up to the state dimension")
        if sum(k for _, k in parts) != n:
            raise ValueError("block basis sizes must add up to n")
    V = np.zeros((X.shape[0], 0))
    tags, sv_all = [], []
    off = 0
    for bi, (r, k) in enumerate(parts):
        U, svals, _ = la.svd(X[off:off + r], full_matrices=False)
        rank = int(np.sum(svals > DEFLATION_TOL * (svals[0] if svals.size else 0.0))) if svals.size else 0
        if rank < k:
            warnings.warn(f"POD block {bi}: numerical rank {rank} < requested {k}; deflating", RuntimeWarning)
            k = rank
        Vb = np.zeros((X.shape[0], k))
        Vb[off:off + r] = U[:, :k]
        V = np.hstack([V, Vb])
        tags += [f"pod({bi},{j})" for j in range(k)]
        sv_all.append(svals)
        off += r
    return ReductionBasis(V, tags, {"singular_values": sv_all})


# ---------------------------------------------------------------------------
# IRKA shift heuristic
# ---------------------------------------------------------------------------

def _solve_shift(E, A, s, rhs, transpose=False):
    K = (s * E - A)
    K = K.T if transpose else K
    K = K.tocsc().astype(complex if np.iscomplexobj(s) else float)
    return spla.spsolve(K, rhs.astype(K.dtype))


def _real_basis(cols):
    out = []
    for c in cols:
        out.append(c.real)
        if np.abs(c.imag).max() > 1e-14 * np.abs(c).max():
            out.append(c.imag)
    Q, _ = la.qr(np.column_stack(out), mode="economic")
    return Q


def irka_frequencies(S: QBSystem, count: int, r: int | None = None, tol: float = 1e-4,
                     max_iters: int = 50, seed: int = 0):
    """Real IRKA shifts of the linear part ``(E, A, B, C)``, ascending.

    IRKA runs with reduced order ``r`` (default ``count``) from log-spaced
    initial shifts in ``[1e-1, 1e3]``; the converged shifts are the mirrored
    reduced poles.
    """
    r = count if r is None else r
    E, A = S.E, S.A
    b = S.B.toarray()[:, 0]
    c = S.C.toarray()[0]
    shifts = np.logspace(-1, 3, r).astype(complex)
    converged, it = False, 0
    for it in range(1, max_iters + 1):
        uniq = []
        for s in shifts:
            if s.imag >= 0 or not any(abs(np.conj(s) - u) < 1e-12 * abs(s) for u in uniq):
                if not any(abs(s - u) < 1e-12 * max(abs(s), 1.0) for u in uniq):
                    uniq.append(s)
        Vc = [_solve_shift(E, A, s, b) for s in uniq if s.imag >= 0]
        Wc = [_solve_shift(E, A, s, c, transpose=True) for s in uniq if s.imag >= 0]
        V, W = _real_basis(Vc), _real_basis(Wc)
        k = min(V.shape[1], W.shape[1])
        V, W = V[:, :k], W[:, :k]
        Er, Ar = W.T @ (E @ V), W.T @ (A @ V)
        poles = la.eigvals(Ar, Er)
        new = np.sort_complex(-poles)
        old = np.sort_complex(shifts)
        if new.size == old.size:
            change = np.max(np.abs(new - old) / np.maximum(np.abs(old), 1e-14))
        else:
            change = np.inf
        shifts = new
        if change < tol:
            converged = True
            break
    if not converged:
        log.warning("IRKA stopped after %d iterations without reaching tolerance %.1e", it, tol)
    real = np.sort(shifts[np.abs(shifts.imag) <= 1e-8 * np.abs(shifts)].real)
    real = real[real > 0]
    if real.size < count:
        warnings.warn(f"IRKA produced only {real.size} real shifts (requested {count})", RuntimeWarning)
    return [float(x) for x in real[:count]]
