import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from qbmor.bench import burgers, burgers_case_generator, chafee, chafee_case_generator, rc_case_generator, rc_ladder
from qbmor.kron_core import QuadMap
from qbmor.moments import dense_rep_w2, linear_moments
from qbmor.qb_model import QBSystem, SignalGenerator, assemble_driven, galerkin_project, project_driven
from qbmor.reduction import (
    AssmConfig,
    ReductionBasis,
    assm_reduce,
    assm_x2_bases,
    irka_frequencies,
    krylov_basis,
    multm_iw_reduce,
    multm_reduce,
    orthonormalize,
    pod_reduce,
)
from qbmor.simulate import IntegratorConfig, integrate

from .conftest import max_angle, orthonormal, rand_driven, rand_generator, rand_system, scalar_driven

seeds = st.integers(0, 2**32 - 1)


def in_span(V, x):
    x = np.ravel(x)
    return np.linalg.norm(x - V @ (V.T @ x)) / max(np.linalg.norm(x), 1e-300)


def linear_only(S: QBSystem) -> QBSystem:
    return QBSystem(S.E, S.A, QuadMap(S.N, S.N, S.N), QuadMap(S.N, S.N, S.p), S.B, S.C, S.x0)


# -- orthonormalize -------------------------------------------------------------

def test_orthonormalize_deflates_dependent_columns(rng):
    a = rng.standard_normal(5)
    V, tags, dropped = orthonormalize([a, 2 * a, np.zeros(5)], tags=["a", "b", "c"])
    assert V.shape == (5, 1) and tags == ["a"] and dropped == 2


def test_orthonormalize_against_fixed_block(rng):
    Q = orthonormal(rng, 6, 2)
    V, _, dropped = orthonormalize([Q[:, 0] + Q[:, 1], rng.standard_normal(6)], against=Q)
    assert dropped == 1 and V.shape[1] == 1
    assert np.abs(Q.T @ V).max() <= 1e-14


@given(seeds, st.integers(1, 12), st.integers(1, 8))
def test_orthonormalize_spans_input(seed, n, k):
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, k))
    V, _, dropped = orthonormalize([X])
    assert V.shape[1] == min(n, k) and dropped == k - min(n, k)
    assert np.abs(V.T @ V - np.eye(V.shape[1])).max() <= 1e-13
    assert all(in_span(V, X[:, j]) <= 1e-10 for j in range(k))


# -- Krylov -----------------------------------------------------------------------

def test_krylov_single_column():
    S = QBSystem(np.eye(3), -np.diag([1.0, 2.0, 3.0]), QuadMap(3, 3, 3), QuadMap(3, 3, 1),
                 [[1.0], [0.0], [0.0]], [[1.0, 0.0, 0.0]], np.zeros(3))
    b = krylov_basis(S, [0.5], 4)
    assert b.n == 1 and b.info["deflated"] == 3
    assert abs(abs(b.V[0, 0]) - 1.0) <= 1e-15


def test_krylov_duplicate_shift_adds_nothing(rng):
    S = rand_system(rng, 8)
    a = krylov_basis(S, [0.3], 3)
    b = krylov_basis(S, [0.3, 0.3], [3, 3])
    assert a.n == b.n == 3 and b.info["deflated"] == 3


@given(seeds, st.integers(4, 12), st.integers(1, 3))
def test_krylov_galerkin_matches_linear_moments(seed, N, L):
    r = np.random.default_rng(seed)
    S = rand_system(r, N)
    s0 = float(r.uniform(0.0, 1.0))
    V = krylov_basis(S, [s0], L).V
    Sr = galerkin_project(S, V)
    full = linear_moments(S.E, S.A, S.B, s0, L)
    red = linear_moments(Sr.E, Sr.A, Sr.B, s0, L)
    for k, kr in zip(full, red):
        assert np.linalg.norm(k - V @ kr) <= 1e-8 * np.linalg.norm(k)


# -- second-order bases -------------------------------------------------------

def test_dense_rep_commutes_with_projection(rng):
    D = rand_driven(rng, 6)
    W = orthonormal(rng, 6, 3)
    E, A, b, C = dense_rep_w2(D)
    Er, Ar, br, Cr = dense_rep_w2(project_driven(D, W))
    P = np.block([[W, np.zeros((6, 9))], [np.zeros((36, 3)), np.kron(W, W)]])
    assert np.abs(Er - P.T @ E @ P).max() <= 1e-12
    assert np.abs(Ar - P.T @ A @ P).max() <= 1e-12
    assert np.abs(br - P.T @ b).max() <= 1e-12


def test_zero_quadratic_gives_empty_va(rng):
    """Without coupling the output-side moments vanish; the state moments do not."""
    from qbmor.qb_model import DrivenSystem
    D = rand_driven(rng, 5)
    D = DrivenSystem(D.Ec, D.Ac, QuadMap(5, 5, 5), D.b, 5)
    Va, Vb, info = assm_x2_bases(D, AssmConfig((0.2,), 1, lowrank_tol=1e-12, lyap_tol=1e-12))
    assert Va.shape == (5, 0)
    E, A = D.Ec.toarray(), (D.Ac - 0.1 * D.Ec).toarray()
    K = np.kron(A, E) + np.kron(E, A)
    X = np.linalg.solve(K, -np.kron(D.b, D.b)).reshape(5, 5)
    U, sv, _ = np.linalg.svd(X)
    dominant = U[:, sv > 1e-6 * sv[0]]
    assert 1 <= dominant.shape[1] <= Vb.shape[1]
    assert all(in_span(Vb, dominant[:, j]) <= 1e-6 for j in range(dominant.shape[1]))


def test_zero_quadratic_and_zero_state_gives_empty_bases(rng):
    from qbmor.qb_model import DrivenSystem
    D = rand_driven(rng, 5)
    D = DrivenSystem(D.Ec, D.Ac, QuadMap(5, 5, 5), np.zeros(5), 5)
    Va, Vb, _ = assm_x2_bases(D, AssmConfig((0.2,), 2))
    assert Va.shape == (5, 0) and Vb.shape == (5, 0)


def test_scalar_va_spans_one():
    Va, Vb, info = assm_x2_bases(scalar_driven(), AssmConfig((0.0,), 2, lyap_tol=1e-14))
    assert Va.shape == (1, 1) and abs(abs(Va[0, 0]) - 1.0) <= 1e-15
    assert Vb.shape == (1, 0)
    assert info["moment_sets"][0].m[0][0] == pytest.approx(0.5, abs=1e-12)
    assert info["moment_sets"][0].m[1][0] == pytest.approx(-0.75, abs=1e-12)


def test_burgers_n50_approximation_space():
    """Projection residuals of the dense-oracle moments onto the bases."""
    S, T = burgers(50), burgers_case_generator(1)
    D = assemble_driven(S, T)
    cfg = AssmConfig((0.03, 0.22), 2, (0.03, 0.22), 3, 1e-3)
    V1 = krylov_basis(S, cfg.freqs_w1, cfg.orders_w1).V
    Va, Vb, _ = assm_x2_bases(D, cfg, V1)
    V, _, _ = orthonormalize([Va, Vb, V1])
    M, N, n = D.M, S.N, V.shape[1]
    W = np.zeros((M, n + M - N))
    W[:N, :n] = V
    W[N:, n:] = np.eye(M - N)
    E2, A2, b2, C2 = dense_rep_w2(D)
    for s in cfg.freqs_w2:
        for k in linear_moments(E2, A2, b2.reshape(-1, 1), s, 2):
            k = k.ravel()
            assert in_span(V, (C2 @ k)[:N]) <= 0.1
            X = k[M:].reshape(M, M)
            assert np.linalg.norm(X - W @ (W.T @ X @ W) @ W.T) / np.linalg.norm(X) <= 0.3


def test_assm_without_w2_is_krylov(rng):
    S, T = rand_system(rng, 10), rand_generator(rng, 2)
    basis, _ = assm_reduce(S, T, AssmConfig(freqs_w1=(0.1, 0.7), orders_w1=2))
    ref = krylov_basis(S, (0.1, 0.7), 2)
    assert basis.n == ref.n and max_angle(basis.V, ref.V) <= 1e-10
    assert basis.info["n_a"] == basis.info["n_b"] == 0


@given(seeds, st.integers(6, 14))
def test_assm_bases_are_orthonormal(seed, N):
    r = np.random.default_rng(seed)
    S, T = rand_system(r, N), rand_generator(r, 2)
    basis, Sr = assm_reduce(S, T, AssmConfig((0.2,), 2, (0.5,), 2, 1e-2))
    assert basis.orthogonality_error() <= 1e-12
    assert Sr.N == basis.n == len(basis.provenance)
    assert basis.n == basis.info["n_a"] + basis.info["n_b"] + basis.info["n_1"] - basis.info["deflated"]


def test_assm_input_scaling_invariance(rng):
    # zero initial state and linear generator: every second-order moment is
    # quadratic in the input amplitude
    S, T = rand_system(rng, 12, x0=False), rand_generator(rng, 2, quadratic=False)
    tol = 1e-2
    a, _ = assm_reduce(S, T, AssmConfig((0.2, 0.9), 2, (0.4,), 2, tol))
    for alpha in (1e-2, 10.0):
        b, _ = assm_reduce(S, T.scaled(alpha), AssmConfig((0.2, 0.9), 2, (0.4,), 2, tol * alpha))
        assert b.n == a.n
        assert max_angle(a.V, b.V) <= 1e-8


def test_rc50_dimension_window():
    S, T = rc_ladder(50), rc_case_generator(1)
    basis, _ = assm_reduce(S, T, AssmConfig((1.0,), 2, (1.0,), 3, 6e-4))
    assert 4 <= basis.n <= 11


# -- multi-moment matching ---------------------------------------------------------

@given(seeds, st.integers(4, 10), st.integers(1, 3))
def test_multm_linear_is_krylov(seed, N, q1):
    r = np.random.default_rng(seed)
    S = linear_only(rand_system(r, N))
    a = multm_reduce(S, [0.4], q1, 1)
    b = krylov_basis(S, [0.4], q1)
    assert a.n == b.n and max_angle(a.V, b.V) <= 1e-8


def test_multm_scalar():
    S = QBSystem([[1.0]], [[-1.0]], QuadMap.from_dense(np.ones((1, 1, 1))), QuadMap(1, 1, 1),
                 [[1.0]], [[1.0]], [0.0])
    b = multm_reduce(S, [0.0], 1, 1)
    assert b.V.shape == (1, 1) and abs(abs(b.V[0, 0]) - 1.0) <= 1e-15


def test_multm_order_guard(rng):
    with pytest.raises(ValueError):
        multm_reduce(rand_system(rng, 4), [0.1], 1, 2)


def test_multm_contains_second_level(rng):
    S = rand_system(rng, 12)
    S = QBSystem(S.E, S.A, S.G, QuadMap(12, 12, 1), S.B, S.C, S.x0)
    V = multm_reduce(S, [0.3], 2, 1).V
    v0 = linear_moments(S.E, S.A, S.B, 0.3, 1)[0][:, 0]
    w = np.linalg.solve(0.6 * S.E.toarray() - S.A.toarray(), S.G.apply(v0, v0))
    assert in_span(V, w) <= 1e-10


def test_multm_iw_identity_weight_on_linear_system(rng):
    S = linear_only(rand_system(rng, 9))
    F = SignalGenerator([[-1.0]], QuadMap(1, 1, 1), [[1.0]], [0.0], Bz=[[1.0]])
    iw = multm_iw_reduce(S, F, [0.5], 2, 1)
    # the filter adds 1/(s+1) to the input path; moments of the cascade stay in
    # the span of the plain Krylov space of one higher order
    ref = krylov_basis(S, [0.5], 3)
    assert all(in_span(ref.V, iw.V[:, j]) <= 1e-8 for j in range(iw.n))
    assert iw.orthogonality_error() <= 1e-12


def test_multm_iw_extraction_property(rng):
    S = rand_system(rng, 8)
    S = QBSystem(S.E, S.A, S.G, QuadMap(8, 8, 1), S.B, S.C, S.x0)
    F = SignalGenerator([[-1.0]], QuadMap(1, 1, 1), [[1.0]], [0.0], Bz=[[1.0]])
    iw = multm_iw_reduce(S, F, [0.3, 1.1], 2, 2)
    ext = iw.info["extended_basis"]
    assert iw.info["extended_n"] == ext.shape[1]
    assert all(in_span(iw.V, ext[:8, j]) <= 1e-10 for j in range(ext.shape[1]))


# -- POD ----------------------------------------------------------------------

def test_pod_repeated_snapshot():
    e1 = np.eye(4)[:, 0]
    b = pod_reduce(np.column_stack([e1, e1, e1]), 1)
    assert abs(abs(b.V[0, 0]) - 1.0) <= 1e-15 and np.abs(b.V[1:]).max() == 0.0


def test_pod_orthogonal_columns():
    X = np.diag([3.0, 1.0, 2.0])
    V = pod_reduce(X, 2).V
    assert max_angle(V, np.eye(3)[:, [0, 2]]) <= 1e-14


def test_pod_rank_deflation_warns():
    e1 = np.eye(3)[:, :1]
    with pytest.warns(RuntimeWarning):
        b = pod_reduce(np.hstack([e1, e1]), 2)
    assert b.n == 1


def test_pod_guards():
    with pytest.raises(ValueError):
        pod_reduce(np.ones((3, 1)), 2)
    with pytest.raises(ValueError):
        pod_reduce(np.ones((4, 4)), 2, blocks=[(2, 1), (1, 1)])


def test_pod_chafee_blockwise():
    S, T = chafee(100), chafee_case_generator(1)
    Dsys = assemble_driven(S, T)
    traj = integrate(Dsys, IntegratorConfig(t_end=3.0, output_grid=300))
    X = traj.states[: S.N]
    blk = pod_reduce(X, 12, blocks=[(100, 6), (100, 6)])
    plain = pod_reduce(X, 12)
    for b in (blk, plain):
        assert b.n == 12 and b.orthogonality_error() <= 1e-12
    assert np.abs(blk.V[:100, 6:]).max() == 0.0 and np.abs(blk.V[100:, :6]).max() == 0.0
    assert max_angle(blk.V, plain.V) > 1e-6


# -- IRKA -----------------------------------------------------------------------

def test_irka_scalar():
    S = QBSystem([[1.0]], [[-2.0]], QuadMap(1, 1, 1), QuadMap(1, 1, 1), [[1.0]], [[1.0]], [0.0])
    assert irka_frequencies(S, 1) == [pytest.approx(2.0, rel=1e-10)]


def test_irka_tridiagonal_real_positive():
    n = 30
    A = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) * n
    B = np.zeros((n, 1))
    B[0] = 1.0
    S = QBSystem(sp.identity(n), A, QuadMap(n, n, n), QuadMap(n, n, 1), B, B.T, np.zeros(n))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        shifts = irka_frequencies(S, 3)
    assert len(shifts) == 3 and all(s > 0 for s in shifts)
    assert shifts == sorted(shifts)


def test_reduction_basis_properties():
    b = ReductionBasis(np.zeros((3, 0)), [])
    assert b.n == 0 and b.orthogonality_error() == 0.0


def test_irka_rc_ladder_reference_shifts():
    shifts = irka_frequencies(rc_ladder(500), 4)
    for s, ref in zip(shifts, (1.2, 8.8, 37.7, 108.2)):
        assert abs(s - ref) <= 0.2 * ref


# -- projection error and full-scale dimension ------------------------------------

@given(seeds, st.integers(2, 8), st.integers(1, 7))
def test_projection_error_identity(seed, N, n):
    r = np.random.default_rng(seed)
    n = min(n, N - 1)
    S = linear_only(rand_system(r, N))
    V = orthonormal(r, N, n)
    Sr = galerkin_project(S, V)
    X = linear_moments(S.E, S.A, S.B, 0.0, 1)[0]
    Xr = linear_moments(Sr.E, Sr.A, Sr.B, 0.0, 1)[0]
    # with s0 = 0 the moment solves (-A) X = B; E and Er enter only for higher orders
    A, Ar = -S.A.toarray(), -(Sr.A.toarray() if sp.issparse(Sr.A) else np.asarray(Sr.A))
    I = np.eye(N)
    rhs = (I - V @ np.linalg.solve(Ar, V.T @ A)) @ (I - V @ V.T) @ X
    assert np.abs((X - V @ Xr) - rhs).max() <= 1e-12


def test_burgers_full_scale_dimension():
    """Reference parameters at N = 4000 give n = 16."""
    S, T = burgers(4000), burgers_case_generator(1)
    basis, _ = assm_reduce(S, T, AssmConfig((0.03, 0.22), 2, (0.03, 0.22), 3, 1e-3))
    assert basis.n == 16
