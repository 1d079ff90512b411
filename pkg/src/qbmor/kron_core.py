"""Sparse Kronecker kernels: products, symmetric Kronecker sums, block
permutations and the coordinate-stored quadratic map ``QuadMap``.

Sparse matrices are plain :mod:`scipy.sparse` CSR matrices. Vectorisation of
an ``M x M`` matrix ``X`` is row-major (``X.ravel()``), so that
``a (x) b == (a b^T).ravel()`` and ``(P (x) Q) X.ravel() == (P X Q^T).ravel()``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DENSE_ORACLE_CAP",
    "LowRankSymFactor",
    "QuadMap",
    "apply_quad",
    "as_csr",
    "circled",
    "kron",
    "perm_block",
    "project_quad",
]

# Dense fallbacks (oracles) refuse to run above this dimension.
DENSE_ORACLE_CAP = 64

_INDEX_LIMIT = np.iinfo(np.int64).max


def as_csr(M) -> sp.csr_matrix:
    """Canonical CSR copy of a dense array, sparse matrix or scalar."""
    if np.isscalar(M):
        M = np.array([[M]], dtype=float)
    if sp.issparse(M):
        out = sp.csr_matrix(M, dtype=float)
    else:
        M = np.asarray(M, dtype=float)
        if M.ndim == 1:
            M = M.reshape(-1, 1)
        out = sp.csr_matrix(M)
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def kron(A, B) -> sp.csr_matrix:
    """Kronecker product of two sparse (or dense) matrices."""
    A, B = as_csr(A), as_csr(B)
    rows = int(A.shape[0]) * int(B.shape[0])
    cols = int(A.shape[1]) * int(B.shape[1])
    if rows > _INDEX_LIMIT or cols > _INDEX_LIMIT:
        raise OverflowError(f"Kronecker product of shape {rows}x{cols} exceeds the index space")
    return as_csr(sp.kron(A, B, format="csr"))


def circled(order: int, P, Q) -> sp.csr_matrix:
    """Symmetric Kronecker sum placing ``Q`` once in every slot among copies of ``P``.

    ``circled(2, P, Q) = Q (x) P + P (x) Q`` and
    ``circled(3, P, Q) = Q(x)P(x)P + P(x)Q(x)P + P(x)P(x)Q``.
    """
    if order not in (2, 3):
        raise ValueError(f"order must be 2 or 3, got {order}")
    P, Q = as_csr(P), as_csr(Q)
    if P.shape != Q.shape or P.shape[0] != P.shape[1]:
        raise ValueError(f"circled needs square matrices of equal size, got {P.shape} and {Q.shape}")
    out = None
    for slot in range(order):
        term = None
        for pos in range(order):
            f = Q if pos == slot else P
            term = f if term is None else sp.kron(term, f, format="csr")
        out = term if out is None else out + term
    return as_csr(out)


def perm_block(m_dim: int, k_dim: int) -> sp.csr_matrix:
    """Block-interleaving permutation ``[I_M (x) [I_M; 0], I_M (x) [0; I_K]]``.

    For ``P`` of size ``M x M`` and a ``2 x 2`` block matrix with blocks of
    sizes ``M`` and ``K``, ``M^T (P (x) [[A, B], [C, D]]) M`` equals the block
    matrix ``[[P(x)A, P(x)B], [P(x)C, P(x)D]]``.
    """
    if m_dim < 1 or k_dim < 1:
        raise ValueError("block dimensions must be positive")
    top = sp.vstack([sp.identity(m_dim), sp.csr_matrix((k_dim, m_dim))])
    bottom = sp.vstack([sp.csr_matrix((m_dim, k_dim)), sp.identity(k_dim)])
    eye = sp.identity(m_dim)
    return as_csr(sp.hstack([sp.kron(eye, top), sp.kron(eye, bottom)]))


class QuadMap:
    """Quadratic map ``(u, v) -> G (u (x) v)`` stored as coordinates.

    Entry ``(i, j, k, g)`` contributes ``g * u[j] * v[k]`` to output row ``i``.
    Duplicate coordinates are summed on construction and explicit zeros
    dropped, so two maps with the same action compare equal.
    """

    __slots__ = ("rows", "left", "right", "row", "j", "k", "val", "_flat")

    def __init__(self, rows, left, right, row=(), j=(), k=(), val=()):
        self.rows, self.left, self.right = int(rows), int(left), int(right)
        row = np.asarray(row, dtype=np.int64).ravel()
        j = np.asarray(j, dtype=np.int64).ravel()
        k = np.asarray(k, dtype=np.int64).ravel()
        val = np.asarray(val, dtype=float).ravel()
        if not (row.size == j.size == k.size == val.size):
            raise ValueError("coordinate arrays must have equal length")
        if row.size:
            if row.min() < 0 or row.max() >= self.rows:
                raise IndexError("row index out of range")
            if j.min() < 0 or j.max() >= self.left or k.min() < 0 or k.max() >= self.right:
                raise IndexError("column index out of range")
        flat = sp.csr_matrix(
            (val, (row, j * self.right + k)), shape=(self.rows, self.left * self.right)
        )
        flat.sum_duplicates()
        flat.eliminate_zeros()
        flat.sort_indices()
        self._flat = flat
        coo = flat.tocoo()
        self.row = coo.row.astype(np.int64)
        self.j, self.k = np.divmod(coo.col.astype(np.int64), self.right)
        self.val = coo.data.copy()

    # construction helpers -------------------------------------------------
    @classmethod
    def zeros(cls, rows, left, right=None):
        return cls(rows, left, left if right is None else right)

    @classmethod
    def from_dense(cls, G, left=None, right=None):
        """From a flat ``rows x (left*right)`` matrix or a ``rows x left x right`` array."""
        G = G.toarray() if sp.issparse(G) else np.asarray(G, dtype=float)
        if G.ndim == 2:
            if left is None:
                left = int(round(np.sqrt(G.shape[1])))
            right = G.shape[1] // left if right is None else right
            G = G.reshape(G.shape[0], left, right)
        i, j, k = np.nonzero(G)
        return cls(G.shape[0], G.shape[1], G.shape[2], i, j, k, G[i, j, k])

    @classmethod
    def from_flat(cls, flat, left, right):
        coo = sp.coo_matrix(flat)
        j, k = np.divmod(coo.col.astype(np.int64), right)
        return cls(coo.shape[0], left, right, coo.row, j, k, coo.data)

    # views ----------------------------------------------------------------
    @property
    def nnz(self) -> int:
        return int(self.val.size)

    @property
    def shape(self):
        return (self.rows, self.left, self.right)

    @property
    def flat(self) -> sp.csr_matrix:
        """The equivalent ``rows x (left*right)`` sparse matrix."""
        return self._flat

    def is_zero(self) -> bool:
        return self.nnz == 0

    def to_dense(self) -> np.ndarray:
        if max(self.rows, self.left, self.right) > DENSE_ORACLE_CAP:
            raise ValueError("dense QuadMap oracle limited to dimension <= %d" % DENSE_ORACLE_CAP)
        return self._flat.toarray()

    def __eq__(self, other):
        if not isinstance(other, QuadMap) or self.shape != other.shape:
            return NotImplemented
        return (self._flat != other._flat).nnz == 0

    def __repr__(self):
        return f"QuadMap(rows={self.rows}, left={self.left}, right={self.right}, nnz={self.nnz})"

    # algebra ----------------------------------------------------------------
    def __add__(self, other: "QuadMap") -> "QuadMap":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return QuadMap(
            self.rows, self.left, self.right,
            np.concatenate([self.row, other.row]), np.concatenate([self.j, other.j]),
            np.concatenate([self.k, other.k]), np.concatenate([self.val, other.val]),
        )

    def scaled(self, alpha: float) -> "QuadMap":
        return QuadMap(self.rows, self.left, self.right, self.row, self.j, self.k, alpha * self.val)

    def left_mul(self, M) -> "QuadMap":
        """``M G`` for a (sparse or dense) matrix ``M`` with ``rows`` columns."""
        flat = as_csr(M) @ self._flat
        return QuadMap.from_flat(flat, self.left, self.right)

    def apply(self, u, v=None) -> np.ndarray:
        """``G (u (x) v)``; ``u``/``v`` may hold several columns (paired columnwise)."""
        v = u if v is None else v
        u, v = np.asarray(u), np.asarray(v)
        if u.shape[0] != self.left or v.shape[0] != self.right:
            raise ValueError(
                f"dimension mismatch: map takes ({self.left}, {self.right}), got ({u.shape[0]}, {v.shape[0]})"
            )
        prod = u[self.j] * v[self.k]
        if prod.ndim == 1:
            dtype = np.result_type(prod, self.val)
            out = np.zeros(self.rows, dtype=dtype)
            np.add.at(out, self.row, self.val * prod)
            return out
        S = self._row_scatter()
        return np.asarray(S @ prod)

    def apply_core(self, U, core, V=None) -> np.ndarray:
        """``G vec(U core V^T) = sum_ab core[a, b] G (u_a (x) v_b)``."""
        V = U if V is None else V
        U, V, core = np.asarray(U), np.asarray(V), np.asarray(core)
        if U.shape[0] != self.left or V.shape[0] != self.right:
            raise ValueError("dimension mismatch in apply_core")
        if self.nnz == 0:
            return np.zeros(self.rows, dtype=np.result_type(U, V, core))
        terms = np.einsum("ea,ab,eb->e", U[self.j], core, V[self.k])
        out = np.zeros(self.rows, dtype=terms.dtype)
        np.add.at(out, self.row, self.val * terms)
        return out

    def jacobian(self, x) -> sp.csr_matrix:
        """Derivative of ``x -> G (x (x) x)``: ``G (I (x) x + x (x) I)``."""
        x = np.asarray(x)
        data = np.concatenate([self.val * x[self.k], self.val * x[self.j]])
        rows = np.concatenate([self.row, self.row])
        cols = np.concatenate([self.j, self.k])
        return sp.csr_matrix((data, (rows, cols)), shape=(self.rows, self.left))

    def partial_left(self, v) -> sp.csr_matrix:
        """Matrix ``G (I (x) v)`` acting on the left factor."""
        v = np.asarray(v)
        return sp.csr_matrix(
            (self.val * v[self.k], (self.row, self.j)), shape=(self.rows, self.left)
        )

    def partial_right(self, u) -> sp.csr_matrix:
        """Matrix ``G (u (x) I)`` acting on the right factor."""
        u = np.asarray(u)
        return sp.csr_matrix(
            (self.val * u[self.j], (self.row, self.k)), shape=(self.rows, self.right)
        )

    def _row_scatter(self) -> sp.csr_matrix:
        n = self.nnz
        return sp.csr_matrix((self.val, (self.row, np.arange(n))), shape=(self.rows, n))

    # text I/O ---------------------------------------------------------------
    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"%%QuadMap {self.rows} {self.left} {self.right} {self.nnz}\n")
            for i, j, k, g in zip(self.row, self.j, self.k, self.val):
                fh.write(f"{i + 1} {j + 1} {k + 1} {float(g)!r}\n")

    @classmethod
    def read(cls, path) -> "QuadMap":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or not lines[0].startswith("%%QuadMap"):
            raise ValueError(f"{path}:1: missing '%%QuadMap rows left right nnz' header")
        try:
            rows, left, right, nnz = (int(t) for t in lines[0].split()[1:5])
        except ValueError as exc:
            raise ValueError(f"{path}:1: malformed header") from exc
        body = [(n, ln) for n, ln in enumerate(lines[1:], start=2) if ln.strip() and not ln.startswith("%")]
        if len(body) != nnz:
            raise ValueError(f"{path}: header announces {nnz} entries, found {len(body)}")
        data = np.empty((nnz, 4))
        for idx, (n, ln) in enumerate(body):
            parts = ln.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{n}: expected 4 columns, got {len(parts)}")
            try:
                data[idx] = [float(p) for p in parts]
            except ValueError as exc:
                raise ValueError(f"{path}:{n}: {exc}") from exc
        ijk = data[:, :3].astype(np.int64) - 1
        return cls(rows, left, right, ijk[:, 0], ijk[:, 1], ijk[:, 2], data[:, 3])


class LowRankSymFactor:
    """Factored second-order object ``sum_ab K[a, b] z_a (x) z_b``.

    The common symmetric case stores a diagonal core as ``weights``; a full
    ``core`` may be passed for the nonsymmetric objects of the third-order
    recursion. As a matrix the object is ``Z K Z^T``.
    """

    __slots__ = ("Z", "weights", "_core")

    def __init__(self, Z, weights=None, core=None):
        Z = np.asarray(Z)
        if Z.ndim == 1:
            Z = Z.reshape(-1, 1)
        self.Z = Z
        k = Z.shape[1]
        if core is not None:
            core = np.asarray(core)
            if core.shape != (k, k):
                raise ValueError(f"core must be {k}x{k}, got {core.shape}")
            self._core = core
            self.weights = None
        else:
            w = np.ones(k) if weights is None else np.asarray(weights, dtype=float).ravel()
            if w.size != k:
                raise ValueError(f"{k} columns but {w.size} weights")
            self.weights = w
            self._core = None

    @classmethod
    def zeros(cls, dim: int) -> "LowRankSymFactor":
        return cls(np.zeros((dim, 0)))

    @property
    def dim(self) -> int:
        return int(self.Z.shape[0])

    @property
    def rank(self) -> int:
        return int(self.Z.shape[1])

    @property
    def symmetric(self) -> bool:
        return self._core is None

    @property
    def core(self) -> np.ndarray:
        return np.diag(self.weights) if self._core is None else self._core

    def columns(self) -> list:
        return [self.Z[:, k] for k in range(self.rank)]

    def to_matrix(self) -> np.ndarray:
        return (self.Z @ self.core) @ self.Z.T

    def to_vec(self) -> np.ndarray:
        """The represented vector in ``R^{M^2}`` (row-major vectorisation)."""
        if self.dim > 4096:
            raise ValueError("refusing to form an M^2 vector for M > 4096")
        return self.to_matrix().ravel()

    def mapped(self, M) -> "LowRankSymFactor":
        """``(M (x) M)`` applied to the represented object."""
        Z = np.asarray(M @ self.Z)
        return LowRankSymFactor(Z, self.weights, self._core)

    def scaled(self, alpha: float) -> "LowRankSymFactor":
        if self._core is None:
            return LowRankSymFactor(self.Z, alpha * self.weights)
        return LowRankSymFactor(self.Z, core=alpha * self._core)

    def __repr__(self):
        kind = "sym" if self.symmetric else "general"
        return f"LowRankSymFactor(dim={self.dim}, rank={self.rank}, {kind})"


def apply_quad(G: QuadMap, u, v=None) -> np.ndarray:
    """``G (u (x) v)`` without forming the Kronecker vector."""
    return G.apply(np.atleast_1d(u), None if v is None else np.atleast_1d(v))


def project_quad(G: QuadMap, Vl, Vr, Vr2=None) -> QuadMap:
    """``Vl^T G (Vr (x) Vr2)`` as a (dense-coordinate) QuadMap.

    ``Vr2`` defaults to ``Vr``. The Kronecker product ``Vr (x) Vr2`` is never
    formed; the cost is ``O(nnz * n_l * n_r * n_r2)``.
    """
    Vl = np.atleast_2d(np.asarray(Vl, dtype=float))
    Vr = np.atleast_2d(np.asarray(Vr, dtype=float))
    Vr2 = Vr if Vr2 is None else np.atleast_2d(np.asarray(Vr2, dtype=float))
    if Vl.shape[0] != G.rows or Vr.shape[0] != G.left or Vr2.shape[0] != G.right:
        raise ValueError(
            f"projection bases have {Vl.shape[0]}, {Vr.shape[0]}, {Vr2.shape[0]} rows; "
            f"map has shape {G.shape}"
        )
    nl, nr, nr2 = Vl.shape[1], Vr.shape[1], Vr2.shape[1]
    if G.nnz == 0:
        return QuadMap(nl, nr, nr2)
    # chunk over nonzeros to bound the temporary nnz x nr x nr2 block
    out = np.zeros((nl, nr, nr2))
    step = max(1, int(2e7 // max(1, nr * nr2)))
    for s in range(0, G.nnz, step):
        sl = slice(s, s + step)
        left = Vl[G.row[sl]] * G.val[sl, None]
        pair = Vr[G.j[sl], :, None] * Vr2[G.k[sl], None, :]
        out += np.tensordot(left, pair, axes=(0, 0))
    return QuadMap.from_dense(out)
