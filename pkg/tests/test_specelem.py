import numpy as np
import pytest

from ratprop import specelem as se


def test_chebyshev_grid_differentiation():
    x, D, w = se.chebyshev_grid(16)
    assert np.all(np.diff(x) > 0)
    assert np.max(np.abs(D @ np.ones(16))) < 1e-13
    assert np.max(np.abs(D @ x - 1)) < 1e-12
    assert np.max(np.abs(D @ np.cos(np.pi * x / 2) + np.pi / 2 * np.sin(np.pi * x / 2))) < 1e-10
    # Clenshaw-Curtis integrates x^4 exactly on [-1, 1]
    assert abs(w @ x**4 - 0.4) < 1e-14
    with pytest.raises(ValueError):
        se.chebyshev_grid(3)


def test_mesh_counts():
    m = se.build_mesh(2, 2, 4)
    # periodic: each element contributes (p-1)^2 unique nodes
    assert m.N == 2 * 2 * 3 * 3
    assert np.allclose(m.multiplicity()[m.node_kind() == se.CORNER], 4)
    assert np.allclose(m.multiplicity()[m.node_kind() == se.EDGE], 2)
    m = se.build_mesh(4, 4, 6)
    assert m.N == (4 * 5) ** 2
    seen = np.zeros(m.N, int)
    for _, _, g in m.elements():
        np.add.at(seen, g.ravel(), 1)
    np.testing.assert_array_equal(seen, m.multiplicity())
    assert abs(m.weights.sum() - 1.0) < 1e-13
    with pytest.raises(ValueError):
        se.build_mesh(1, 4, 8)


def test_assemble_constant(mesh6):
    B = se.assemble(mesh6, se.OperatorSpec(1.0))
    r = B @ np.ones(mesh6.N)
    interior = B.row_kind == se.INTERIOR
    np.testing.assert_allclose(r[interior], -1.0, atol=1e-12)
    assert np.max(np.abs(r[~interior])) < 1e-10


def test_assemble_sine(mesh6):
    sig = 0.7 + 0.2j
    B = se.assemble(mesh6, se.OperatorSpec(sig))
    u = np.sin(2 * np.pi * mesh6.x) * np.sin(2 * np.pi * mesh6.y)
    r = B @ u
    interior = B.row_kind == se.INTERIOR
    assert np.max(np.abs(r[interior] - (-8 * np.pi**2 - sig) * u[interior])) < 1e-8
    assert np.max(np.abs(r[~interior])) < 1e-8
    nnz = np.diff(B.matrix.indptr)
    assert nnz.max() <= 2 * mesh6.p**2 + 4 * mesh6.p


@pytest.mark.parametrize("k", [(1, 0), (2, 3), (6, 6), (-5, 4)])
def test_fourier_mode_eigenvalue(mesh6, k):
    B = se.assemble(mesh6, se.OperatorSpec(0.0))
    u = np.exp(2j * np.pi * (k[0] * mesh6.x + k[1] * mesh6.y))
    lam = -4 * np.pi**2 * (k[0] ** 2 + k[1] ** 2)
    interior = B.row_kind == se.INTERIOR
    r = B @ u
    assert np.max(np.abs(r[interior] - lam * u[interior])) <= 1e-7 * abs(lam)


def test_gradient_and_divergence(mesh6):
    assert np.max(np.abs(np.concatenate(se.gradient(np.ones(mesh6.N), mesh6)))) < 1e-11
    u = np.sin(2 * np.pi * mesh6.x) * np.sin(2 * np.pi * mesh6.y)
    gx, gy = se.gradient(u, mesh6)
    lap = se.divergence(gx, gy, mesh6)
    assert np.max(np.abs(lap + 8 * np.pi**2 * u)) < 1e-8
    for k in [(1, 2), (6, -3), (0, 6)]:
        e = np.exp(2j * np.pi * (k[0] * mesh6.x + k[1] * mesh6.y))
        ex, ey = se.gradient(se.GridFunction(mesh6, e))
        scale = 2 * np.pi * max(abs(k[0]), abs(k[1]))
        assert np.max(np.abs(ex - 2j * np.pi * k[0] * e)) < 1e-8 * scale
        assert np.max(np.abs(ey - 2j * np.pi * k[1] * e)) < 1e-8 * scale


def test_averaged_derivative_has_imaginary_spectrum():
    m = se.build_mesh(4, 4, 10)
    Gx, _ = se.derivative_matrices(m)
    ev = np.linalg.eigvals(Gx[: m.Nx, : m.Nx].toarray())
    assert np.max(np.abs(ev.real)) < 1e-9 * np.max(np.abs(ev))


def test_factor_solve_consistency(mesh6, rng):
    B = se.assemble(mesh6, se.OperatorSpec(-300.0 + 40j))
    F = se.factor(B)
    for _ in range(20):
        f = rng.standard_normal(mesh6.N) + 1j * rng.standard_normal(mesh6.N)
        x = se.solve(F, f)
        assert np.max(np.abs(B @ x - f)) <= 1e-10 * np.max(np.abs(f))
    assert np.all(se.solve(F, np.zeros(mesh6.N)) == 0)


@pytest.mark.parametrize("method", ["condensed", "sparse"])
def test_small_mesh_matches_dense(method, rng):
    m = se.build_mesh(3, 3, 8)
    B = se.assemble(m, se.OperatorSpec(5.0 - 12j))
    f = rng.standard_normal(m.N)
    x = se.solve(se.factor(B, method), f)
    ref = np.linalg.solve(B.matrix.toarray(), f)
    assert np.max(np.abs(x - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_manufactured_solution_and_convergence():
    sig = 3.0 + 1.0j
    errs = {}
    for p in (8, 16):
        m = se.build_mesh(6, 6, p)
        u = np.sin(2 * np.pi * m.x) * np.cos(4 * np.pi * m.y)
        f = (-20 * np.pi**2 - sig) * u
        x = se.solve(se.factor(se.assemble(m, se.OperatorSpec(sig))), se.prepare_rhs(m, f))
        errs[p] = np.max(np.abs(x - u))
    assert errs[16] < 1e-8
    assert errs[8] / errs[16] >= 1e3


def test_solve_is_deterministic(mesh4, rng):
    F = se.factor(se.assemble(mesh4, se.OperatorSpec(2.0 + 9j)))
    f = rng.standard_normal(mesh4.N)
    first = se.solve(F, f)
    for _ in range(100):
        assert np.array_equal(se.solve(F, f), first)


def test_singular_shift_detected():
    # sigma = -4 pi^2 is an eigenvalue of the periodic Laplacian
    m = se.build_mesh(2, 2, 8)
    with pytest.raises(se.SingularShiftError):
        se.factor(se.assemble(m, se.OperatorSpec(0.0)))


def test_variable_shift_and_validation(mesh4):
    sig = 1.0 + mesh4.x
    B = se.assemble(mesh4, se.OperatorSpec(sig))
    assert np.allclose(B.shift, sig)
    with pytest.raises(ValueError):
        se.OperatorSpec(np.full(mesh4.N, np.nan)).shift_values(mesh4)
    with pytest.raises(ValueError):
        se.solve(se.factor(B), np.zeros(3))


def test_factorization_arrays_roundtrip(mesh4, rng):
    F = se.factor(se.assemble(mesh4, se.OperatorSpec(4.0 - 30j)))
    G = se.factorization_from_arrays(se.factorization_arrays(F), mesh4)
    f = rng.standard_normal(mesh4.N)
    assert np.max(np.abs(se.solve(F, f) - se.solve(G, f))) < 1e-12 * np.max(np.abs(se.solve(F, f)))


def test_dump_coo(tmp_path):
    m = se.build_mesh(2, 2, 4)
    B = se.assemble(m, se.OperatorSpec(1.0 + 1j))
    path = tmp_path / "b.txt"
    se.dump_coo(B, path)
    data = np.loadtxt(path)
    assert data.shape == (B.matrix.nnz, 4)
    rows, cols = data[:, 0].astype(int), data[:, 1].astype(int)
    np.testing.assert_array_equal(B.matrix.toarray()[rows, cols], data[:, 2] + 1j * data[:, 3])
