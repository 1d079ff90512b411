import os

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, settings

from qbmor.kron_core import QuadMap
from qbmor.qb_model import DrivenSystem, QBSystem, SignalGenerator

settings.register_profile(
    "qbmor",
    max_examples=int(os.environ.get("QBMOR_HYPOTHESIS_EXAMPLES", "25")),
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("qbmor")


# acceptance criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale benchmark runs (set QBMOR_FULL=1)")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split("(")[0]), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:6s} {'PASS' if ok else 'FAIL'}  {detail}")


def stable_pencil(rng, n, coupling=0.3, mass=0.1):
    """``(E, A)`` with ``E`` near identity and ``E^{-1}A`` comfortably stable."""
    E = np.eye(n) + mass * rng.standard_normal((n, n)) / np.sqrt(n)
    A = -np.diag(1.0 + rng.random(n)) * 2.0 + coupling * rng.standard_normal((n, n)) / np.sqrt(n)
    return E, A


def rand_quad(rng, rows, left, right, scale=0.5, density=1.0):
    G = scale * rng.standard_normal((rows, left, right))
    if density < 1.0:
        G *= rng.random(G.shape) < density
    return QuadMap.from_dense(G)


def rand_system(rng, N, p=1, m=1, extended=False, x0=True) -> QBSystem:
    E, A = stable_pencil(rng, N)
    return QBSystem(
        E, A, rand_quad(rng, N, N, N), rand_quad(rng, N, N, p, 0.3),
        rng.standard_normal((N, p)), rng.standard_normal((m, N)),
        0.3 * rng.standard_normal(N) if x0 else np.zeros(N),
        rand_quad(rng, N, p, p, 0.3) if extended else None,
        0.3 * rng.standard_normal((N, p)) if extended else None,
    )


def rand_generator(rng, q, p=1, quadratic=True) -> SignalGenerator:
    Az = -np.diag(0.5 + rng.random(q)) + 0.2 * rng.standard_normal((q, q))
    Gz = rand_quad(rng, q, q, q, 0.2) if quadratic else QuadMap(q, q, q)
    return SignalGenerator(Az, Gz, rng.standard_normal((p, q)), 0.5 * rng.standard_normal(q))


def rand_driven(rng, M, N=None) -> DrivenSystem:
    E, A = stable_pencil(rng, M)
    return DrivenSystem(sp.csr_matrix(E), sp.csr_matrix(A), rand_quad(rng, M, M, M),
                        rng.standard_normal(M), M if N is None else N)


def orthonormal(rng, n, k):
    Q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return Q


def scalar_driven() -> DrivenSystem:
    """E = 1, A = -1, G = 1, b = 1."""
    return DrivenSystem(sp.csr_matrix([[1.0]]), sp.csr_matrix([[-1.0]]), QuadMap.from_dense(np.ones((1, 1, 1))),
                        np.array([1.0]), 1)


def scalar_pair():
    """QB system and generator whose driven system is the scalar fixture padded with a dead z."""
    S = QBSystem([[1.0]], [[-1.0]], QuadMap.from_dense(np.ones((1, 1, 1))), QuadMap(1, 1, 1),
                 [[0.0]], [[1.0]], [1.0], name="scalar")
    T = SignalGenerator([[-1.0]], QuadMap(1, 1, 1), [[1.0]], [0.0], name="zero")
    return S, T


def max_angle(U, V):
    import scipy.linalg as la
    return float(np.max(la.subspace_angles(U, V))) if U.shape[1] else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
