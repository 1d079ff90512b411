"""Benchmark systems: viscous Burgers (advective and conservative
discretisation), Chafee-Infante with quadratic recast, and the nonlinear
RC ladder, together with their input signal generators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .kron_core import QuadMap
from .qb_model import QBSystem, SignalGenerator, superpose_generators

__all__ = [
    "BenchmarkSpec",
    "DEFAULT_HORIZON",
    "build",
    "burgers",
    "burgers_case_generator",
    "burgers_case_input",
    "chafee",
    "chafee_case_generator",
    "chafee_case_input",
    "oscillator",
    "rc_case_generator",
    "rc_case_input",
    "rc_ladder",
    "rc_ladder_reference",
]

DEFAULT_HORIZON = {"burgers_adv": 10.0, "burgers_cons": 10.0, "chafee": 3.0, "rc_ladder": 2.0}

# (amplitude, angular frequency / pi, kind) of the four oscillation terms
_OSC_TERMS = ((1.0, 1.3, "cos"), (-1.0, 5.4, "cos"), (-1.0, 0.6, "sin"), (1.2, 3.1, "sin"))


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    size: int
    case: int = 1
    nu: float = 0.01
    diode_law: str = "shifted"

    def __post_init__(self):
        if self.name not in DEFAULT_HORIZON:
            raise ValueError(f"unknown benchmark {self.name!r}; choose from {sorted(DEFAULT_HORIZON)}")
        if self.size < 4 and not (self.name == "rc_ladder" and self.size >= 3):
            raise ValueError(f"benchmark size must be at least 4, got {self.size}")
        if self.case not in (1, 2):
            raise ValueError(f"input case must be 1 or 2, got {self.case}")

    @property
    def horizon(self) -> float:
        return DEFAULT_HORIZON[self.name]


def build(spec: BenchmarkSpec):
    """``(QBSystem, SignalGenerator)`` for a benchmark spec."""
    if spec.name.startswith("burgers"):
        form = "advective" if spec.name == "burgers_adv" else "conservative"
        return burgers(spec.size, spec.nu, form), burgers_case_generator(spec.case)
    if spec.name == "chafee":
        return chafee(spec.size), chafee_case_generator(spec.case)
    return rc_ladder(spec.size, spec.diode_law), rc_case_generator(spec.case)


# ---------------------------------------------------------------------------
# Burgers
# ---------------------------------------------------------------------------

def _neumann_laplacian(n: int, h: float) -> sp.csr_matrix:
    """Second difference with ``v_0`` eliminated and ``v_{n+1} = v_n``."""
    main = -2.0 * np.ones(n)
    main[-1] = -1.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def burgers(N: int, nu: float = 0.01, form: str = "advective") -> QBSystem:
    """Central differences on ``h = 1/(N+2)`` with ``v_0 = u`` and ``v_{N+1} = v_N``."""
    if N < 4:
        raise ValueError("Burgers needs N >= 4")
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    if form not in ("advective", "conservative"):
        raise ValueError(f"form must be 'advective' or 'conservative', got {form!r}")
    h = 1.0 / (N + 2)
    A = nu * _neumann_laplacian(N, h)
    B = sp.csr_matrix(([nu / h**2], ([0], [0])), shape=(N, 1))
    C = sp.csr_matrix(([1.0], ([0], [N - 1])), shape=(1, N))
    i = np.arange(N)
    rows, js, ks, vals = [], [], [], []
    Gu = None
    if form == "advective":
        # -v_i (v_{i+1} - v_{i-1}) / (2h); v_{N+1} -> v_N, v_0 -> u (bilinear)
        right = np.minimum(i + 1, N - 1)
        rows += [i, i[1:]]
        js += [i, i[1:]]
        ks += [right, i[1:] - 1]
        vals += [np.full(N, -0.5 / h), np.full(N - 1, 0.5 / h)]
        D = QuadMap(N, N, 1, [0], [0], [0], [0.5 / h])
    else:
        # -(v_{i+1}^2 - v_{i-1}^2) / (4h); v_0^2 = u^2 enters through Gu
        right = np.minimum(i + 1, N - 1)
        rows += [i, i[1:]]
        js += [right, i[1:] - 1]
        ks += [right, i[1:] - 1]
        vals += [np.full(N, -0.25 / h), np.full(N - 1, 0.25 / h)]
        D = QuadMap(N, N, 1)
        Gu = QuadMap(N, 1, 1, [0], [0], [0], [0.25 / h])
    G = QuadMap(N, N, N, np.concatenate(rows), np.concatenate(js), np.concatenate(ks), np.concatenate(vals))
    name = f"burgers_{'adv' if form == 'advective' else 'cons'}"
    return QBSystem(sp.identity(N, format="csr"), A, G, D, B, C, np.zeros(N), Gu, None, name)


def oscillator(amplitude: float, omega: float, kind: str) -> SignalGenerator:
    """Two-state generator of ``amplitude * sin/cos(omega t)``."""
    Az = omega * np.array([[0.0, 1.0], [-1.0, 0.0]])
    z0 = [0.0, amplitude] if kind == "sin" else [amplitude, 0.0]
    return SignalGenerator(Az, QuadMap(2, 2, 2), [[1.0, 0.0]], z0)


def _oscillation_generator(scale: float) -> SignalGenerator:
    return superpose_generators(oscillator(scale * a, f * np.pi, kind) for a, f, kind in _OSC_TERMS)


def _oscillation_input(scale: float):
    def u(t):
        t = np.asarray(t, dtype=float)
        out = sum(a * (np.cos(f * np.pi * t) if k == "cos" else np.sin(f * np.pi * t)) for a, f, k in _OSC_TERMS)
        return scale * out

    def du(t):
        t = np.asarray(t, dtype=float)
        out = sum(a * f * np.pi * (-np.sin(f * np.pi * t) if k == "cos" else np.cos(f * np.pi * t))
                  for a, f, k in _OSC_TERMS)
        return scale * out

    return u, du


def burgers_case_generator(case: int) -> SignalGenerator:
    if case == 1:
        g = _oscillation_generator(0.5)
        g.name = "burgers_case1"
        return g
    if case == 2:
        Gz = QuadMap(2, 2, 2, [0], [0], [0], [-0.5])
        return SignalGenerator(np.diag([-2.0, -1.0]), Gz, [[-0.5, 2.0]], [4.0, 1.0], name="burgers_case2")
    raise ValueError(f"unknown input case {case}")


def burgers_case_input(case: int):
    """Closed-form ``(u, du/dt)`` of the Burgers input cases."""
    if case == 1:
        return _oscillation_input(0.5)
    if case == 2:
        u = lambda t: 1.0 / (0.5 - np.exp(2.0 * np.asarray(t))) + 2.0 * np.exp(-np.asarray(t))
        du = lambda t: (2.0 * np.exp(2.0 * np.asarray(t)) / (0.5 - np.exp(2.0 * np.asarray(t))) ** 2
                        - 2.0 * np.exp(-np.asarray(t)))
        return u, du
    raise ValueError(f"unknown input case {case}")


# ---------------------------------------------------------------------------
# Chafee-Infante
# ---------------------------------------------------------------------------

CHAFEE_ALPHA = {1: 1.0, 2: 0.125}


def chafee(Ntilde: int) -> QBSystem:
    """State ``[v; w]`` with ``w = v^2``; ``v_0 = u``, ``v_{n+1} = v_n``, ``h = 1/(n+2)``."""
    n = Ntilde
    if n < 4:
        raise ValueError("Chafee-Infante needs Ntilde >= 4")
    h = 1.0 / (n + 2)
    N = 2 * n
    L = _neumann_laplacian(n, h)
    A = sp.block_diag([L + sp.identity(n), sp.csr_matrix((n, n))], format="csr")
    B = sp.csr_matrix(([1.0 / h**2], ([0], [0])), shape=(N, 1))
    C = sp.csr_matrix(([1.0], ([0], [n - 1])), shape=(1, N))
    i = np.arange(n)
    rows, js, ks, vals = [], [], [], []

    def add(r, j, k, v):
        rows.append(np.atleast_1d(r)); js.append(np.atleast_1d(j)); ks.append(np.atleast_1d(k))
        vals.append(np.broadcast_to(np.asarray(v, dtype=float), np.atleast_1d(r).shape))

    add(i, i, n + i, -1.0)                 # -v_i w_i
    add(n + i, n + i, n + i, -2.0)         # -2 w_i^2
    Lc = L.tocoo()                          # 2 v_i (L v)_i
    add(n + Lc.row, Lc.row, Lc.col, 2.0 * Lc.data)
    add(n + i, i, i, 2.0)                  # 2 v_i^2
    G = QuadMap(N, N, N, np.concatenate(rows), np.concatenate(js), np.concatenate(ks), np.concatenate(vals))
    D = QuadMap(N, N, 1, [n], [0], [0], [2.0 / h**2])  # 2 v_1 u / h^2
    return QBSystem(sp.identity(N, format="csr"), A, G, D, B, C, np.zeros(N), None, None, "chafee")


def chafee_case_generator(case: int) -> SignalGenerator:
    if case not in CHAFEE_ALPHA:
        raise ValueError(f"unknown input case {case}")
    g = _oscillation_generator(CHAFEE_ALPHA[case])
    g.name = f"chafee_case{case}"
    return g


def chafee_case_input(case: int):
    return _oscillation_input(CHAFEE_ALPHA[case])


# ---------------------------------------------------------------------------
# RC ladder
# ---------------------------------------------------------------------------

def _rc_chain(n: int) -> tuple:
    """``M0`` and ``b0`` with ``x' = M0 (x + g) + b0 u`` in the difference variables."""
    P = sp.lil_matrix((n, n))
    P[0, 0], P[0, 1] = -1.0, -1.0
    for k in range(1, n - 1):
        P[k, k], P[k, k + 1] = 1.0, -1.0
    P[n - 1, n - 1] = 1.0
    T = sp.lil_matrix((n, n))
    T[0, 0] = 1.0
    for k in range(1, n):
        T[k, k - 1], T[k, k] = 1.0, -1.0
    T = T.tocsr()
    M0 = (T @ P.tocsr()).tocsr()
    b0 = np.asarray(T[:, 0].toarray()).ravel()
    return M0, b0


def rc_ladder(Ntilde: int, diode_law: str = "shifted") -> QBSystem:
    """Quadratic-bilinear recast with states ``[x; a]``, ``a_i = g(x_i)``.

    ``diode_law='shifted'`` uses ``g(v) = exp(40 v) - 1`` (zero equilibrium);
    ``'printed'`` uses ``g(v) = exp(40 v - 1)``.
    """
    n = Ntilde
    if n < 3:
        raise ValueError("RC ladder needs Ntilde >= 3")
    if diode_law not in ("shifted", "printed"):
        raise ValueError(f"diode_law must be 'shifted' or 'printed', got {diode_law!r}")
    N = 2 * n
    M0, b0 = _rc_chain(n)
    # x' = M0 x + M0 a + b0 u
    # shifted: a' = 40 (a + 1) x'; printed: a' = 40 a x'
    top = sp.hstack([M0, M0])
    lin_a = 40.0 * top if diode_law == "shifted" else sp.csr_matrix((n, N))
    A = sp.vstack([top, lin_a], format="csr")
    B = np.concatenate([b0, 40.0 * b0 if diode_law == "shifted" else np.zeros(n)]).reshape(-1, 1)
    Mc = top.tocoo()
    G = QuadMap(N, N, N, n + Mc.row, n + Mc.row, Mc.col, 40.0 * Mc.data)
    nzb = np.flatnonzero(b0)
    D = QuadMap(N, N, 1, n + nzb, n + nzb, np.zeros_like(nzb), 40.0 * b0[nzb])
    C = sp.csr_matrix(([1.0], ([0], [0])), shape=(1, N))
    x0 = np.zeros(N)
    if diode_law == "printed":
        x0[n:] = np.exp(-1.0)
    return QBSystem(sp.identity(N, format="csr"), A, G, D, B, C, x0, None, None, f"rc_ladder_{diode_law}")


def rc_ladder_reference(Ntilde: int, diode_law: str = "shifted"):
    """Right-hand side and Jacobian of the original node-voltage equations."""
    n = Ntilde
    if diode_law == "shifted":
        g = lambda v: np.expm1(40.0 * v)
        dg = lambda v: 40.0 * np.exp(40.0 * v)
    else:
        g = lambda v: np.exp(40.0 * v - 1.0)
        dg = lambda v: 40.0 * np.exp(40.0 * v - 1.0)

    def rhs(v, u):
        f = np.empty(n)
        d = v[:-1] - v[1:]
        f[0] = -2 * v[0] + v[1] - g(v[0]) - g(d[0]) + u
        f[1:-1] = -2 * v[1:-1] + v[:-2] + v[2:] + g(d[:-1]) - g(d[1:])
        f[-1] = -v[-1] + v[-2] + g(d[-1])
        return f

    def jac(v, u):
        J = np.zeros((n, n))
        d = v[:-1] - v[1:]
        gd = dg(d)
        J[0, 0] = -2 - dg(v[0]) - gd[0]
        J[0, 1] = 1 + gd[0]
        for k in range(1, n - 1):
            J[k, k - 1] = 1 + gd[k - 1]
            J[k, k] = -2 - gd[k - 1] - gd[k]
            J[k, k + 1] = 1 + gd[k]
        J[-1, -2] = 1 + gd[-1]
        J[-1, -1] = -1 - gd[-1]
        return J

    return rhs, jac


def rc_case_generator(case: int) -> SignalGenerator:
    if case == 1:
        return SignalGenerator([[-1.0]], QuadMap(1, 1, 1), [[1.0]], [1.0], name="rc_case1")
    if case == 2:
        w = 10.0 * np.pi
        Az = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, w], [0.0, -w, 0.0]])
        return SignalGenerator(Az, QuadMap(3, 3, 3), [[1.0, 0.0, 1.0]], [1.0, 0.0, 1.0], name="rc_case2")
    raise ValueError(f"unknown input case {case}")


def rc_case_input(case: int):
    if case == 1:
        return (lambda t: np.exp(-np.asarray(t))), (lambda t: -np.exp(-np.asarray(t)))
    if case == 2:
        w = 10.0 * np.pi
        return (lambda t: 1.0 + np.cos(w * np.asarray(t))), (lambda t: -w * np.sin(w * np.asarray(t)))
    raise ValueError(f"unknown input case {case}")
