"""Quadratic-bilinear systems, signal generators and the driven systems
obtained by feeding one into the other.

A QB system reads::

    E x' = A x + G (x (x) x) + D (x (x) u) + B u [+ Gu (u (x) u) + Bp u']
       y = C x,   x(0) = x0

and a signal generator::

    z' = Az z + Gz (z (x) z) [+ Bz uF],   u = Cz z,   z(0) = z0
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .kron_core import QuadMap, as_csr, project_quad

__all__ = [
    "DrivenSystem",
    "InputWeightedSystem",
    "QBSystem",
    "SignalGenerator",
    "assemble_driven",
    "assemble_driven_extended",
    "assemble_input_weighted",
    "extend_generator_derivative",
    "galerkin_project",
    "project_driven",
    "superpose_generators",
]


def _vec(v, n=None, name="vector"):
    v = np.asarray(v, dtype=float).ravel()
    if n is not None and v.size != n:
        raise ValueError(f"{name} has length {v.size}, expected {n}")
    return v


def _check_shape(M, shape, name):
    if M.shape != shape:
        raise ValueError(f"{name} has shape {M.shape}, expected {shape}")


@dataclass(eq=False)
class QBSystem:
    E: sp.csr_matrix
    A: sp.csr_matrix
    G: QuadMap
    D: QuadMap
    B: sp.csr_matrix
    C: sp.csr_matrix
    x0: np.ndarray
    Gu: QuadMap | None = None
    Bp: sp.csr_matrix | None = None
    name: str = ""

    def __post_init__(self):
        self.E, self.A = as_csr(self.E), as_csr(self.A)
        self.B, self.C = as_csr(self.B), as_csr(self.C)
        N, p = self.A.shape[0], self.B.shape[1]
        _check_shape(self.A, (N, N), "A")
        _check_shape(self.E, (N, N), "E")
        _check_shape(self.B, (N, p), "B")
        if self.C.shape[1] != N:
            raise ValueError(f"C has {self.C.shape[1]} columns, expected {N}")
        if self.G.shape != (N, N, N):
            raise ValueError(f"G has shape {self.G.shape}, expected {(N, N, N)}")
        if self.D.shape != (N, N, p):
            raise ValueError(f"D has shape {self.D.shape}, expected {(N, N, p)}")
        self.x0 = _vec(self.x0, N, "x0")
        if self.Gu is not None and self.Gu.shape != (N, p, p):
            raise ValueError(f"Gu has shape {self.Gu.shape}, expected {(N, p, p)}")
        if self.Bp is not None:
            self.Bp = as_csr(self.Bp)
            _check_shape(self.Bp, (N, p), "Bp")
        try:
            lu = spla.splu(self.E.tocsc())
        except RuntimeError as exc:
            raise ValueError("E is singular") from exc
        if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
            raise ValueError("E is singular")

    @property
    def N(self) -> int:
        return int(self.A.shape[0])

    @property
    def p(self) -> int:
        return int(self.B.shape[1])

    @property
    def m(self) -> int:
        return int(self.C.shape[0])

    @property
    def extended(self) -> bool:
        has_gu = self.Gu is not None and not self.Gu.is_zero()
        has_bp = self.Bp is not None and self.Bp.nnz > 0
        return has_gu or has_bp

    def Gu_or_zero(self) -> QuadMap:
        return self.Gu if self.Gu is not None else QuadMap(self.N, self.p, self.p)

    def Bp_or_zero(self) -> sp.csr_matrix:
        return self.Bp if self.Bp is not None else sp.csr_matrix((self.N, self.p))

    def rhs(self, x, u, udot=None) -> np.ndarray:
        """Right-hand side ``A x + G x(x)x + D x(x)u + B u (+ Gu u(x)u + Bp u')``."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        f = self.A @ x + self.G.apply(x) + self.D.apply(x, u) + self.B @ u
        if self.Gu is not None:
            f = f + self.Gu.apply(u)
        if self.Bp is not None and udot is not None:
            f = f + self.Bp @ np.atleast_1d(udot)
        return f

    def jacobian(self, x, u) -> sp.csr_matrix:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return (self.A + self.G.jacobian(x) + self.D.partial_left(u)).tocsr()

    def with_x0(self, x0) -> "QBSystem":
        return QBSystem(self.E, self.A, self.G, self.D, self.B, self.C, x0, self.Gu, self.Bp, self.name)


@dataclass(eq=False)
class SignalGenerator:
    Az: sp.csr_matrix
    Gz: QuadMap
    Cz: sp.csr_matrix
    z0: np.ndarray
    Bz: sp.csr_matrix | None = None
    name: str = ""

    def __post_init__(self):
        self.Az, self.Cz = as_csr(self.Az), as_csr(self.Cz)
        q = self.Az.shape[0]
        _check_shape(self.Az, (q, q), "Az")
        if self.Cz.shape[1] != q:
            raise ValueError(f"Cz has {self.Cz.shape[1]} columns, expected {q}")
        if self.Gz.shape != (q, q, q):
            raise ValueError(f"Gz has shape {self.Gz.shape}, expected {(q, q, q)}")
        self.z0 = _vec(self.z0, q, "z0")
        if self.Bz is not None:
            self.Bz = as_csr(self.Bz)
            if self.Bz.shape[0] != q:
                raise ValueError(f"Bz has {self.Bz.shape[0]} rows, expected {q}")

    @property
    def q(self) -> int:
        return int(self.Az.shape[0])

    @property
    def p(self) -> int:
        return int(self.Cz.shape[0])

    @property
    def is_linear(self) -> bool:
        return self.Gz.is_zero()

    def rhs(self, z, uF=None) -> np.ndarray:
        f = self.Az @ z + self.Gz.apply(z)
        if uF is not None and self.Bz is not None:
            f = f + self.Bz @ np.atleast_1d(uF)
        return f

    def jacobian(self, z) -> sp.csr_matrix:
        return (self.Az + self.Gz.jacobian(z)).tocsr()

    def output(self, z) -> np.ndarray:
        return self.Cz @ z

    def scaled(self, alpha: float) -> "SignalGenerator":
        """Generator of ``alpha * u``: only ``z0`` changes when ``Gz = 0``.

        For quadratic generators the state is rescaled, ``z -> alpha z``,
        which turns ``Gz`` into ``Gz / alpha`` and ``Cz`` into ``Cz / alpha``
        while the output gets multiplied by ``alpha``.
        """
        if self.is_linear:
            return SignalGenerator(self.Az, self.Gz, self.Cz, alpha * self.z0, self.Bz, self.name)
        return SignalGenerator(self.Az, self.Gz.scaled(1.0 / alpha), self.Cz, alpha * self.z0,
                               None if self.Bz is None else alpha * self.Bz, self.name)


@dataclass(eq=False)
class DrivenSystem:
    """Autonomous system ``Ec w' = Ac w + Gc (w (x) w)``, ``w(0) = b``; ``x = w[:N]``."""

    Ec: sp.csr_matrix
    Ac: sp.csr_matrix
    Gc: QuadMap
    b: np.ndarray
    N: int

    @property
    def M(self) -> int:
        return int(self.Ac.shape[0])

    @property
    def Px(self) -> sp.csr_matrix:
        return sp.eye(self.N, self.M, format="csr")

    def rhs(self, w) -> np.ndarray:
        return self.Ac @ w + self.Gc.apply(w)

    def jacobian(self, w) -> sp.csr_matrix:
        return (self.Ac + self.Gc.jacobian(w)).tocsr()


@dataclass(eq=False)
class InputWeightedSystem:
    """``Ec w' = Ac w + Gc (w (x) w) + Bc uF``, ``w(0) = 0``."""

    Ec: sp.csr_matrix
    Ac: sp.csr_matrix
    Gc: QuadMap
    Bc: sp.csr_matrix
    N: int

    @property
    def M(self) -> int:
        return int(self.Ac.shape[0])

    @property
    def Px(self) -> sp.csr_matrix:
        return sp.eye(self.N, self.M, format="csr")

    def as_qbsystem(self, C=None) -> QBSystem:
        """View as a QB system with linear input map (``D = 0``)."""
        M, pF = self.M, self.Bc.shape[1]
        Cc = self.Px if C is None else sp.hstack([as_csr(C), sp.csr_matrix((C.shape[0], M - self.N))])
        return QBSystem(self.Ec, self.Ac, self.Gc, QuadMap(M, M, pF), self.Bc, Cc, np.zeros(M))


def _blkdiag_eye(E, q):
    return sp.block_diag([E, sp.identity(q)], format="csr")


def _shift(G: QuadMap, rows, left, right, dr=0, dj=0, dk=0) -> QuadMap:
    return QuadMap(rows, left, right, G.row + dr, G.j + dj, G.k + dk, G.val)


def _coupled_quadratic(S: QBSystem, T: SignalGenerator, extended: bool) -> QuadMap:
    N, q, p = S.N, T.q, S.p
    M = N + q
    Cz = T.Cz
    parts = [_shift(S.G, M, M, M)]
    # D (x (x) Cz z) -> coefficient on x_j z_m, kept in the (x, z) slots only
    Dxz = QuadMap.from_flat(S.D.flat @ sp.kron(sp.identity(N), Cz), N, q)
    parts.append(_shift(Dxz, M, M, M, dk=N))
    if extended:
        zz = QuadMap.from_flat(S.Gu_or_zero().flat @ sp.kron(Cz, Cz), q, q)
        zz = zz + T.Gz.left_mul(S.Bp_or_zero() @ Cz)
        parts.append(_shift(zz, M, M, M, dj=N, dk=N))
    parts.append(_shift(T.Gz, M, M, M, dr=N, dj=N, dk=N))
    out = parts[0]
    for g in parts[1:]:
        out = out + g
    return out


def _check_pair(S: QBSystem, T: SignalGenerator):
    if T.p != S.p:
        raise ValueError(f"generator output dimension {T.p} does not match system input dimension {S.p}")


def assemble_driven(S: QBSystem, T: SignalGenerator) -> DrivenSystem:
    """Substitute ``u = Cz z`` into ``S`` and stack the states ``[x; z]``."""
    _check_pair(S, T)
    if S.extended:
        raise ValueError("system has Gu/Bp terms; use assemble_driven_extended")
    N, q = S.N, T.q
    Ec = _blkdiag_eye(S.E, q)
    Ac = sp.bmat([[S.A, S.B @ T.Cz], [None, T.Az]], format="csr")
    Gc = _coupled_quadratic(S, T, extended=False)
    return DrivenSystem(as_csr(Ec), as_csr(Ac), Gc, np.concatenate([S.x0, T.z0]), N)


def assemble_driven_extended(S: QBSystem, T: SignalGenerator) -> DrivenSystem:
    """Driven system for the quadratic-input and input-derivative variant."""
    _check_pair(S, T)
    N, q = S.N, T.q
    Bp = S.Bp_or_zero()
    Ec = _blkdiag_eye(S.E, q)
    upper = S.B @ T.Cz + Bp @ T.Cz @ T.Az
    Ac = sp.bmat([[S.A, upper], [sp.csr_matrix((q, N)), T.Az]], format="csr")
    Gc = _coupled_quadratic(S, T, extended=True)
    return DrivenSystem(as_csr(Ec), as_csr(Ac), Gc, np.concatenate([S.x0, T.z0]), N)


def assemble_input_weighted(S: QBSystem, F: SignalGenerator) -> InputWeightedSystem:
    """Plant ``S`` behind the input filter ``F`` (which must carry ``Bz``)."""
    if F.Bz is None:
        raise ValueError("input-weighting generator needs an input matrix Bz")
    D = assemble_driven_extended(S, F)
    Bc = sp.vstack([S.Bp_or_zero() @ F.Cz @ F.Bz, F.Bz], format="csr")
    return InputWeightedSystem(D.Ec, D.Ac, D.Gc, as_csr(Bc), S.N)


def extend_generator_derivative(T: SignalGenerator, max_derivative: int) -> SignalGenerator:
    """Generator whose output stacks ``u`` and time derivatives of ``u``.

    Linear generators get output rows ``Cz Az^i`` for ``i <= max_derivative``.
    Quadratic generators are augmented with ``z1 = z'`` and return ``[u; u']``;
    a second derivative then enters through ``Bp`` acting on ``d/dt [u; u']``.
    """
    if max_derivative < 0:
        raise ValueError("max_derivative must be non-negative")
    if max_derivative == 0:
        return T
    if T.is_linear:
        rows, R = [T.Cz], T.Cz
        for _ in range(max_derivative):
            R = R @ T.Az
            rows.append(R)
        return SignalGenerator(T.Az, T.Gz, sp.vstack(rows), T.z0, None, T.name)
    if max_derivative > 2:
        raise ValueError("derivative extension of quadratic generators is limited to order 2")
    q = T.q
    Az = sp.block_diag([T.Az, T.Az], format="csr")
    G = T.Gz
    parts = [
        _shift(G, 2 * q, 2 * q, 2 * q),
        _shift(G, 2 * q, 2 * q, 2 * q, dr=q, dj=q),
        _shift(G, 2 * q, 2 * q, 2 * q, dr=q, dk=q),
    ]
    Gz = parts[0] + parts[1] + parts[2]
    Cz = sp.block_diag([T.Cz, T.Cz], format="csr")
    z1 = T.Az @ T.z0 + T.Gz.apply(T.z0)
    return SignalGenerator(Az, Gz, Cz, np.concatenate([T.z0, z1]), None, T.name)


def superpose_generators(gens) -> SignalGenerator:
    """Block-diagonal stacking with summed outputs ``u = sum_i Cz_i z_i``."""
    gens = list(gens)
    if not gens:
        raise ValueError("need at least one generator")
    p = gens[0].p
    if any(g.p != p for g in gens):
        raise ValueError("all generators must have the same output dimension")
    if len(gens) == 1:
        return gens[0]
    q = sum(g.q for g in gens)
    Az = sp.block_diag([g.Az for g in gens], format="csr")
    Cz = sp.hstack([g.Cz for g in gens], format="csr")
    z0 = np.concatenate([g.z0 for g in gens])
    off, parts = 0, []
    for g in gens:
        parts.append(_shift(g.Gz, q, q, q, off, off, off))
        off += g.q
    Gz = parts[0]
    for g in parts[1:]:
        Gz = Gz + g
    Bz = None
    if all(g.Bz is not None for g in gens):
        Bz = sp.vstack([g.Bz for g in gens], format="csr")
    return SignalGenerator(Az, Gz, Cz, z0, Bz)


def _check_orthonormal(V, tol=1e-10):
    V = np.asarray(V, dtype=float)
    if V.ndim != 2:
        raise ValueError("basis must be a matrix")
    dev = np.abs(V.T @ V - np.eye(V.shape[1])).max() if V.shape[1] else 0.0
    if dev > tol:
        raise ValueError(f"basis is not orthonormal (Gram deviation {dev:.2e})")
    return V


def galerkin_project(S: QBSystem, V) -> QBSystem:
    """One-sided projection ``x ~ V xr`` of every block of ``S``."""
    V = _check_orthonormal(V)
    if V.shape[0] != S.N:
        raise ValueError(f"basis has {V.shape[0]} rows, system has N={S.N}")
    Ip = np.eye(S.p)
    Er = V.T @ (S.E @ V)
    Ar = V.T @ (S.A @ V)
    Gr = project_quad(S.G, V, V)
    Dr = project_quad(S.D, V, V, Ip)
    Br = V.T @ S.B.toarray()
    Cr = S.C @ V
    Gu = None if S.Gu is None else project_quad(S.Gu, V, Ip, Ip)
    Bp = None if S.Bp is None else V.T @ S.Bp.toarray()
    return QBSystem(Er, Ar, Gr, Dr, Br, Cr, V.T @ S.x0, Gu, Bp, S.name + "_r" if S.name else "")


def project_driven(Dsys: DrivenSystem, W, N: int | None = None) -> DrivenSystem:
    """Galerkin projection of a driven system by an orthonormal ``W``."""
    W = _check_orthonormal(W)
    return DrivenSystem(
        as_csr(W.T @ (Dsys.Ec @ W)),
        as_csr(W.T @ (Dsys.Ac @ W)),
        project_quad(Dsys.Gc, W, W),
        W.T @ Dsys.b,
        Dsys.N if N is None else N,
    )
