"""Stiff time integration of QB and driven systems, error metrics and
trajectory CSV files."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .kron_core import as_csr
from .qb_model import DrivenSystem, QBSystem, SignalGenerator

__all__ = [
    "IntegratorConfig",
    "SimulationError",
    "Trajectory",
    "integrate",
    "integrate_generator",
    "output_error",
    "read_trajectory",
    "write_trajectory",
]


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float = 1.0
    abs_tol: float = 1e-8
    rel_tol: float = 1e-6
    max_step: float = np.inf
    output_grid: int = 300
    method: str = "BDF"

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("integrator tolerances must be positive")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.output_grid < 2:
            raise ValueError("output grid needs at least two points")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.output_grid)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.states.shape[1] != self.times.size or self.outputs.shape[1] != self.times.size:
            raise ValueError("trajectory column counts differ from the number of time points")


class _MassInverse:
    """Applies ``E^{-1}`` (skipped when ``E = I``)."""

    def __init__(self, E):
        E = as_csr(E)
        n = E.shape[0]
        self.eye = E.nnz == n and abs(E - sp.identity(n)).max() == 0
        if not self.eye:
            self.dense = n <= 2000
            self.Einv = np.linalg.inv(E.toarray()) if self.dense else None
            self.lu = None if self.dense else spla.splu(E.tocsc())

    def vec(self, f):
        if self.eye:
            return f
        return self.Einv @ f if self.dense else self.lu.solve(f)

    def mat(self, J):
        if self.eye:
            return J
        if not self.dense:
            raise SimulationError("Jacobian with non-identity E limited to n <= 2000")
        return self.Einv @ (J.toarray() if sp.issparse(J) else J)


def _dense_if_small(J, n):
    if n <= 200:
        return J.toarray() if sp.issparse(J) else np.asarray(J)
    return J


def _run(f, jac, x0, cfg: IntegratorConfig):
    grid = cfg.grid
    n = x0.size

    def fun(t, x):
        out = f(t, x)
        if not np.all(np.isfinite(out)):
            raise SimulationError(f"non-finite right-hand side at t = {t:.6g}")
        return out

    try:
        extra = {"jac": lambda t, x: _dense_if_small(jac(t, x), n)} if cfg.method in ("BDF", "Radau", "LSODA") else {}
        sol = solve_ivp(
            fun, (0.0, cfg.t_end), x0, method=cfg.method, t_eval=grid,
            atol=cfg.abs_tol, rtol=cfg.rel_tol, max_step=cfg.max_step, **extra,
        )
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        if isinstance(exc, SimulationError):
            raise
        raise SimulationError(f"integration failed: {exc}") from exc
    if sol.status != 0:
        t_fail = sol.t[-1] if sol.t.size else 0.0
        raise SimulationError(f"integration aborted near t = {t_fail:.6g}: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise SimulationError("non-finite state in trajectory")
    return sol.t, sol.y


def integrate(system, cfg: IntegratorConfig, u=None, udot=None, C=None) -> Trajectory:
    """Integrate a :class:`QBSystem` driven by ``u(t)`` or an autonomous
    :class:`DrivenSystem`.

    ``u`` and ``udot`` are callables returning arrays of length ``p``; ``udot``
    is required when the system carries ``Bp``.
    """
    if isinstance(system, DrivenSystem):
        Minv = _MassInverse(system.Ec)
        f = lambda t, w: Minv.vec(system.rhs(w))
        jac = lambda t, w: Minv.mat(system.jacobian(w))
        t, W = _run(f, jac, np.asarray(system.b, dtype=float), cfg)
        X = W[: system.N]
        Y = X if C is None else as_csr(C) @ X
        return Trajectory(t, W, np.asarray(Y))
    if not isinstance(system, QBSystem):
        raise TypeError(f"cannot integrate {type(system).__name__}")
    S = system
    if u is None:
        u = lambda t: np.zeros(S.p)
    if S.Bp is not None and S.Bp.nnz > 0 and udot is None:
        raise ValueError("system has an input-derivative term; pass udot")
    Minv = _MassInverse(S.E)
    f = lambda t, x: Minv.vec(S.rhs(x, u(t), None if udot is None else udot(t)))
    jac = lambda t, x: Minv.mat(S.jacobian(x, u(t)))
    t, X = _run(f, jac, S.x0, cfg)
    return Trajectory(t, X, np.asarray(S.C @ X))


def integrate_generator(T: SignalGenerator, cfg: IntegratorConfig) -> Trajectory:
    f = lambda t, z: T.rhs(z)
    jac = lambda t, z: T.jacobian(z)
    t, Z = _run(f, jac, T.z0, cfg)
    return Trajectory(t, Z, np.asarray(T.Cz @ Z))


def output_error(full: Trajectory, reduced: Trajectory):
    """``(|y - y_r|, max abs error, max abs error / max |y|)`` on a shared grid."""
    if full.times.shape != reduced.times.shape or not np.allclose(full.times, reduced.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories are sampled on different grids")
    if full.outputs.shape != reduced.outputs.shape:
        raise ValueError("output dimensions differ")
    err = np.abs(full.outputs - reduced.outputs)
    emax = float(err.max()) if err.size else 0.0
    scale = float(np.abs(full.outputs).max()) if full.outputs.size else 0.0
    return err, emax, (emax / scale if scale > 0 else emax)


def write_trajectory(path, traj: Trajectory, with_states: bool = False) -> None:
    m = traj.outputs.shape[0]
    header = ["t"] + [f"y{i + 1}" for i in range(m)]
    cols = [traj.times[None, :], traj.outputs]
    if with_states:
        header += [f"x{i + 1}" for i in range(traj.states.shape[0])]
        cols.append(traj.states)
    data = np.vstack(cols).T
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([f"{v:.17e}" for v in row])


def read_trajectory(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t":
        raise ValueError(f"{path}:1: expected header starting with 't'")
    header = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed number ({exc})") from exc
    ny = sum(1 for h in header if h.startswith("y"))
    t = data[:, 0]
    Y = data[:, 1:1 + ny].T
    X = data[:, 1 + ny:].T if data.shape[1] > 1 + ny else np.zeros((0, t.size))
    return Trajectory(t, X, Y)
