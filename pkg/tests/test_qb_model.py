import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from qbmor import bench
from qbmor.kron_core import QuadMap
from qbmor.qb_model import (
    QBSystem,
    SignalGenerator,
    assemble_driven,
    assemble_driven_extended,
    assemble_input_weighted,
    extend_generator_derivative,
    galerkin_project,
    project_driven,
    superpose_generators,
)
from qbmor.simulate import IntegratorConfig, integrate, integrate_generator

from .conftest import orthonormal, rand_generator, rand_quad, rand_system

seeds = st.integers(0, 2**32 - 1)
TIGHT = IntegratorConfig(t_end=1.0, abs_tol=1e-12, rel_tol=1e-11, output_grid=41)


def d(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def scalar_example():
    S = QBSystem([[1.0]], [[-1.0]], QuadMap.from_dense(np.ones((1, 1, 1))),
                 QuadMap.from_dense(5 * np.ones((1, 1, 1))), [[2.0]], [[1.0]], [0.3])
    T = SignalGenerator([[-3.0]], QuadMap(1, 1, 1), [[1.0]], [0.7])
    return S, T


def test_driven_scalar_substitution():
    S, T = scalar_example()
    D = assemble_driven(S, T)
    for x, z in [(0.3, 0.7), (-1.2, 2.0)]:
        w = np.array([x, z])
        expect = [-x + x * x + 5 * x * z + 2 * z, -3 * z]
        assert np.allclose(D.rhs(w), expect, atol=1e-14)
    assert np.array_equal(D.b, [0.3, 0.7])


def test_driven_linear_blocks(rng):
    N, q = 3, 2
    S = rand_system(rng, N)
    S = QBSystem(S.E, S.A, QuadMap(N, N, N), QuadMap(N, N, 1), S.B, S.C, S.x0)
    T = rand_generator(rng, q, quadratic=False)
    D = assemble_driven(S, T)
    ref = np.block([[d(S.A), d(S.B) @ d(T.Cz)], [np.zeros((q, N)), d(T.Az)]])
    assert np.allclose(d(D.Ac), ref)
    assert D.Gc.is_zero()


def test_driven_dimensions_and_px(rng):
    S, T = rand_system(rng, 4), rand_generator(rng, 3)
    D = assemble_driven(S, T)
    assert D.M == 7 and D.N == 4
    w = rng.standard_normal(7)
    assert np.array_equal(D.Px @ w, w[:4])


def _u_closed_form(T):
    Az, Cz = d(T.Az), d(T.Cz)
    return lambda t: Cz @ la.expm(Az * t) @ T.z0


def test_driven_cosimulation(rng):
    S, T = rand_system(rng, 3), rand_generator(rng, 2, quadratic=False)
    joint = integrate(assemble_driven(S, T), TIGHT, C=S.C)
    split = integrate(S, TIGHT, u=_u_closed_form(T))
    assert np.abs(joint.states[:3] - split.states).max() <= 1e-8


def test_extended_reduces_to_plain(rng):
    S, T = rand_system(rng, 3), rand_generator(rng, 2)
    a, b = assemble_driven(S, T), assemble_driven_extended(S, T)
    assert np.array_equal(d(a.Ac), d(b.Ac)) and a.Gc == b.Gc and np.array_equal(d(a.Ec), d(b.Ec))


def test_extended_scalar_derivative_entry():
    S = QBSystem([[1.0]], [[-1.0]], QuadMap(1, 1, 1), QuadMap(1, 1, 1), [[0.0]], [[1.0]], [0.0], Bp=[[1.0]])
    T = SignalGenerator([[-3.0]], QuadMap(1, 1, 1), [[1.0]], [1.0])
    D = assemble_driven_extended(S, T)
    assert d(D.Ac)[0, 1] == -3.0
    with pytest.raises(ValueError):
        assemble_driven(S, T)


def test_extended_cosimulation(rng):
    S, T = rand_system(rng, 3, extended=True), rand_generator(rng, 2, quadratic=False)
    u = _u_closed_form(T)
    Az, Cz = d(T.Az), d(T.Cz)
    udot = lambda t: Cz @ Az @ la.expm(Az * t) @ T.z0
    joint = integrate(assemble_driven_extended(S, T), TIGHT)
    split = integrate(S, TIGHT, u=u, udot=udot)
    assert np.abs(joint.states[:3] - split.states).max() <= 1e-8


def test_burgers_forms_agree_at_n50():
    """Both discretizations driven by Case 1 on the [0, 3] window."""
    cfg = IntegratorConfig(t_end=3.0)
    ys = []
    for name in ("burgers_adv", "burgers_cons"):
        S, T = bench.build(bench.BenchmarkSpec(name, 50, 1))
        D = assemble_driven_extended(S, T) if S.extended else assemble_driven(S, T)
        ys.append(integrate(D, cfg, C=S.C).outputs)
    assert np.abs(ys[0] - ys[1]).max() <= 1e-3


# -- generator derivative extension -------------------------------------------

def test_derivative_linear_scalar():
    T = SignalGenerator([[-1.0]], QuadMap(1, 1, 1), [[1.0]], [1.0])
    X = extend_generator_derivative(T, 1)
    assert np.array_equal(d(X.Cz), [[1.0], [-1.0]])
    tr = integrate_generator(X, IntegratorConfig(t_end=1.0, abs_tol=1e-12, rel_tol=1e-10))
    assert np.allclose(tr.outputs[1], -np.exp(-tr.times), atol=1e-8)


def test_derivative_linear_order_two(rng):
    T = rand_generator(rng, 3, quadratic=False)
    X = extend_generator_derivative(T, 2)
    Cz, Az = d(T.Cz), d(T.Az)
    assert np.allclose(d(X.Cz), np.vstack([Cz, Cz @ Az, Cz @ Az @ Az]))


def test_derivative_quadratic_burgers_case2():
    T = bench.burgers_case_generator(2)
    X = extend_generator_derivative(T, 1)
    assert np.allclose(X.z0[T.q:], d(T.Az) @ T.z0 + T.Gz.apply(T.z0))
    cfg = IntegratorConfig(t_end=1.0, abs_tol=1e-12, rel_tol=1e-10, output_grid=2001)
    tr = integrate_generator(X, cfg)
    z, z1 = tr.states[:T.q], tr.states[T.q:]
    fd = np.gradient(z, tr.times, axis=1, edge_order=2)
    assert np.abs(fd - z1).max() <= 1e-4
    with pytest.raises(ValueError):
        extend_generator_derivative(T, 3)


# -- input weighting ------------------------------------------------------------

def weight_filter():
    return SignalGenerator([[-1.0]], QuadMap(1, 1, 1), [[1.0]], [0.0], Bz=[[1.0]])


def test_weighted_plain_input_block(rng):
    S = rand_system(rng, 3)
    W = assemble_input_weighted(S, weight_filter())
    assert W.M == 4
    assert np.array_equal(d(W.Bc), [[0.0], [0.0], [0.0], [1.0]])
    Q = W.as_qbsystem()
    assert Q.N == 4 and Q.D.is_zero() and not Q.extended


def test_weighted_cosimulation(rng):
    S = rand_system(rng, 3, x0=False)
    F = weight_filter()
    uF = lambda t: np.array([np.sin(3 * t) + 0.5])
    W = assemble_input_weighted(S, F).as_qbsystem()
    ext = integrate(W, TIGHT, u=uF)
    # filter state, then plant
    filt = QBSystem([[1.0]], [[-1.0]], QuadMap(1, 1, 1), QuadMap(1, 1, 1), [[1.0]], [[1.0]], [0.0])
    zf = integrate(filt, IntegratorConfig(t_end=1.0, abs_tol=1e-13, rel_tol=1e-12, output_grid=4001), u=uF)
    u = lambda t: np.array([np.interp(t, zf.times, zf.outputs[0])])
    plant = integrate(S, TIGHT, u=u)
    assert np.abs(ext.states[:3] - plant.states).max() <= 1e-7


def test_weighted_needs_bz(rng):
    with pytest.raises(ValueError):
        assemble_input_weighted(rand_system(rng, 2), rand_generator(rng, 1))


# -- projection -----------------------------------------------------------------

def test_galerkin_identity_and_unit(rng):
    S = rand_system(rng, 4)
    R = galerkin_project(S, np.eye(4))
    for name in ("E", "A", "B", "C"):
        assert np.allclose(d(getattr(R, name)), d(getattr(S, name)))
    assert R.G == S.G or np.allclose(R.G.to_dense(), S.G.to_dense())
    e1 = np.eye(4)[:, :1]
    r = galerkin_project(S, e1)
    assert r.N == 1
    assert r.A[0, 0] == pytest.approx(S.A[0, 0]) and r.G.to_dense()[0, 0] == pytest.approx(S.G.to_dense()[0, 0])


def test_galerkin_dense_formulas(rng):
    S = rand_system(rng, 5, extended=True)
    V = orthonormal(rng, 5, 2)
    R = galerkin_project(S, V)
    I1 = np.eye(1)
    assert np.allclose(d(R.A), V.T @ d(S.A) @ V, atol=1e-13)
    assert np.allclose(d(R.E), V.T @ d(S.E) @ V, atol=1e-13)
    assert np.allclose(R.G.flat.toarray(), V.T @ S.G.flat.toarray() @ np.kron(V, V), atol=1e-13)
    assert np.allclose(R.D.flat.toarray(), V.T @ S.D.flat.toarray() @ np.kron(V, I1), atol=1e-13)
    assert np.allclose(d(R.B), V.T @ d(S.B)) and np.allclose(d(R.C), d(S.C) @ V)
    assert np.allclose(R.Gu.flat.toarray(), V.T @ S.Gu.flat.toarray(), atol=1e-13)
    assert np.allclose(R.x0, V.T @ S.x0)


def test_galerkin_rejects_non_orthonormal(rng):
    with pytest.raises(ValueError):
        galerkin_project(rand_system(rng, 3), 2 * np.eye(3)[:, :2])


@given(seeds, st.integers(1, 8), st.integers(1, 3), st.integers(1, 4), st.booleans())
def test_commuting_diagram(seed, N, q, n, extended):
    r = np.random.default_rng(seed)
    n = min(n, N)
    S, T = rand_system(r, N, extended=extended), rand_generator(r, q)
    V = orthonormal(r, N, n)
    asm = assemble_driven_extended if extended else assemble_driven
    left = asm(galerkin_project(S, V), T)
    W = la.block_diag(V, np.eye(q))
    right = project_driven(asm(S, T), W, n)
    assert np.abs(d(left.Ec) - d(right.Ec)).max() <= 1e-12
    assert np.abs(d(left.Ac) - d(right.Ac)).max() <= 1e-12
    assert np.abs(left.Gc.flat.toarray() - right.Gc.flat.toarray()).max() <= 1e-12
    assert np.abs(left.b - right.b).max() <= 1e-12


# -- superposition ----------------------------------------------------------------

def test_superpose_single_unchanged(rng):
    T = rand_generator(rng, 2)
    assert superpose_generators([T]) is T


def test_superpose_exponential_and_cosine():
    lam, w = -0.5, 2.0
    g1 = SignalGenerator([[lam]], QuadMap(1, 1, 1), [[1.0]], [1.5])
    g2 = bench.oscillator(0.8, w, "cos")
    T = superpose_generators([g1, g2])
    assert T.q == 3
    tr = integrate_generator(T, IntegratorConfig(t_end=2.0, abs_tol=1e-12, rel_tol=1e-11))
    ref = 1.5 * np.exp(lam * tr.times) + 0.8 * np.cos(w * tr.times)
    assert np.abs(tr.outputs[0] - ref).max() <= 1e-8


def test_superpose_burgers_case1_closed_form():
    T = bench.burgers_case_generator(1)
    assert T.q == 8 and T.is_linear
    u = bench.burgers_case_input(1)
    t = np.linspace(0, 3, 61)
    Az, Cz = d(T.Az), d(T.Cz)
    exact = np.array([(Cz @ la.expm(Az * s) @ T.z0)[0] for s in t])
    uu = u[0](t) if isinstance(u, tuple) else u(t)
    assert np.abs(exact - uu).max() <= 1e-9


def test_system_shape_validation(rng):
    with pytest.raises(ValueError):
        QBSystem(np.eye(2), np.eye(3), QuadMap(3, 3, 3), QuadMap(3, 3, 1), np.ones((3, 1)), np.ones((1, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        QBSystem(np.zeros((2, 2)), -np.eye(2), QuadMap(2, 2, 2), QuadMap(2, 2, 1), np.ones((2, 1)),
                 np.ones((1, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        assemble_driven(rand_system(rng, 2, p=2), rand_generator(rng, 1))
