"""Desk-scale reduction-quality experiments shared by the scripts and the
acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as la

from .bench import (
    burgers,
    burgers_case_generator,
    burgers_case_input,
    chafee,
    chafee_case_generator,
    rc_case_generator,
    rc_case_input,
    rc_ladder,
)
from .qb_model import galerkin_project
from .reduction import AssmConfig, assm_reduce, multm_reduce
from .simulate import IntegratorConfig, integrate, output_error

__all__ = ["DeskResult", "burgers_desk", "burgers_forms", "chafee_case_angles", "rc_ordering"]

BURGERS_FREQS = (0.03, 0.22)
CHAFEE_FREQS = (1.5, 21.5, 48.3)


@dataclass
class DeskResult:
    n: int
    max_error: float
    times: np.ndarray
    error: np.ndarray


def _compare(S, basis_V, u, du, cfg):
    full = integrate(S, cfg, u=lambda t: np.atleast_1d(u(t)), udot=lambda t: np.atleast_1d(du(t)))
    Sr = galerkin_project(S, basis_V)
    red = integrate(Sr, cfg, u=lambda t: np.atleast_1d(u(t)), udot=lambda t: np.atleast_1d(du(t)))
    return full, red


def burgers_desk(N: int = 400, tol: float = 4e-4, t_end: float = 10.0, form: str = "advective",
                 integrator: IntegratorConfig | None = None):
    """AssM on Burgers Case 1; returns ``(DeskResult, full, reduced)`` trajectories."""
    S, T = burgers(N, form=form), burgers_case_generator(1)
    cfg = AssmConfig(BURGERS_FREQS, 2, BURGERS_FREQS, 3, tol)
    basis, _ = assm_reduce(S, T, cfg)
    icfg = integrator or IntegratorConfig(t_end=t_end)
    u, du = burgers_case_input(1)
    full, red = _compare(S, basis.V, u, du, icfg)
    err, emax, _ = output_error(full, red)
    return DeskResult(basis.n, emax, full.times, err.max(axis=0)), full, red


def burgers_forms(N: int = 400, tol: float = 4e-4, t_end: float = 10.0):
    """Advective AssM vs conservative AssM-q (quadratic input term).

    Returns a dict with the reduced-output gap, both reduction errors, the
    full-model gap between the two discretisations and the integrator floor,
    measured as the change of the advective reduced output when both
    integrator tolerances are tightened a hundredfold.
    """
    icfg = IntegratorConfig(t_end=t_end)
    adv, adv_full, adv_red = burgers_desk(N, tol, t_end, "advective", icfg)
    con, con_full, con_red = burgers_desk(N, tol, t_end, "conservative", icfg)
    tight = replace(icfg, abs_tol=icfg.abs_tol / 100, rel_tol=icfg.rel_tol / 100)
    _, _, adv_red_tight = burgers_desk(N, tol, t_end, "advective", tight)
    return {
        "n_adv": adv.n,
        "n_cons": con.n,
        "reduced_gap": float(np.abs(adv_red.outputs - con_red.outputs).max()),
        "full_gap": float(np.abs(adv_full.outputs - con_full.outputs).max()),
        "error_adv": adv.max_error,
        "error_cons": con.max_error,
        "integrator_floor": float(np.abs(adv_red.outputs - adv_red_tight.outputs).max()),
    }


def rc_ordering(Ntilde: int = 100, t_end: float = 2.0):
    """Max output errors of AssM and MultM on the RC ladder, Case 1."""
    S, T = rc_ladder(Ntilde), rc_case_generator(1)
    assm, _ = assm_reduce(S, T, AssmConfig((1.0,), 2, (1.0,), 3, 6e-4))
    multm = multm_reduce(S, [1.0], 5, 2)
    u, du = rc_case_input(1)
    cfg = IntegratorConfig(t_end=t_end)
    out = {}
    for name, V in (("assm", assm.V), ("multm", multm.V)):
        full, red = _compare(S, V, u, du, cfg)
        out[name] = {"n": int(V.shape[1]), "max_error": output_error(full, red)[1]}
    return out


def chafee_case_angles(Ntilde: int = 100, tols=(1e-3, 1e-4)):
    """Largest principal angle between the Case 1 and Case 2 AssM bases."""
    S = chafee(Ntilde)
    bases = []
    for case, tol in zip((1, 2), tols):
        cfg = AssmConfig(CHAFEE_FREQS, 2, CHAFEE_FREQS, 1, tol)
        bases.append(assm_reduce(S, chafee_case_generator(case), cfg)[0].V)
    a, b = bases
    angle = float(np.max(la.subspace_angles(a, b))) if a.shape[1] == b.shape[1] else float(np.pi / 2)
    return {"n_case1": a.shape[1], "n_case2": b.shape[1], "max_angle": angle}
