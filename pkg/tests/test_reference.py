import numpy as np
import pytest

from ratprop import models as md
from ratprop import reference as rf
from ratprop import specelem as se


@pytest.fixture(scope="module")
def rsw_case(mesh6):
    model = md.make_model("rsw")
    s0 = md.random_smooth_state("rsw", mesh6, np.random.default_rng(5), kmax=3)
    return model, s0


def test_symbol_eigenvalues_are_imaginary():
    ref = rf.FourierReference(16, md.ModelParams(f=1.3, c=0.8))
    # eigenvectors of a Hermitian matrix come back orthonormal
    assert ref.condition < 1 + 1e-10
    k = np.fft.fftfreq(16, 1 / 16)
    k1, k2 = np.meshgrid(k, k)
    S = md.rsw_symbol(k1.ravel()[37], k2.ravel()[37], md.ModelParams(f=1.3, c=0.8))
    ev = np.linalg.eigvals(S)
    assert np.max(np.abs(ev.real)) < 1e-12 * max(1, np.abs(ev).max())
    np.testing.assert_allclose(np.sort(ev.imag), np.sort(ref.omega[37]), atol=1e-12)


def test_exact_identity_semigroup_norm(rsw_case):
    model, s0 = rsw_case
    p = model.params
    assert rf.linf_error(rf.rsw_exact(s0, 0.0, p), s0) < 1e-12
    a = rf.rsw_exact(rf.rsw_exact(s0, 0.3, p), 0.45, p)
    b = rf.rsw_exact(s0, 0.75, p)
    assert rf.linf_error(a, b) < 1e-10
    assert abs(rf.l2_norm(b) - rf.l2_norm(s0)) < 1e-10 * rf.l2_norm(s0)


def test_exact_single_mode(mesh6):
    p = md.ModelParams(f=0.5, c=1.0)
    k = (2, -1)
    amp = np.array([0.2, 1.0, -0.6])
    e = np.exp(2j * np.pi * (k[0] * mesh6.x + k[1] * mesh6.y))
    s = md.RSWState(np.outer(amp, e), mesh6)
    from scipy.linalg import expm

    want = np.outer(expm(0.37 * md.rsw_symbol(*k, p)) @ amp, e)
    assert rf.linf_error(rf.rsw_exact(s, 0.37, p), want) < 1e-12


def test_aliasing_warning(mesh4):
    rough = md.RSWState(np.tile((-1.0) ** np.arange(mesh4.N), (3, 1)), mesh4)
    with pytest.warns(RuntimeWarning):
        rf.rsw_exact(rough, 0.1, md.ModelParams())


def test_rk4_fourth_order(rsw_case):
    model, s0 = rsw_case
    T = 0.1
    exact = rf.rsw_exact(s0, T, model.params)
    e1 = rf.linf_error(rf.rk4_evolve(model, s0, T, 1e-3), exact)
    e2 = rf.linf_error(rf.rk4_evolve(model, s0, T, 5e-4), exact)
    assert 16 * 0.8 <= e1 / e2 <= 16 * 1.2


def test_rk4_blowup_detected(rsw_case):
    model, s0 = rsw_case
    with pytest.raises(rf.NumericalFailure):
        rf.rk4_evolve(model, s0, 0.5, 0.05)
    with pytest.raises(ValueError):
        rf.rk4_evolve(model, s0, 0.1, 0.03)


def test_chebyshev_matches_exact(rsw_case):
    model, s0 = rsw_case
    rho = rf.spectral_radius(model, s0.mesh)
    T = 0.05
    u = rf.chebyshev_evolve(model, s0, T, 1e-3, degree=12, rho=rho)
    assert rf.linf_error(u, rf.rsw_exact(s0, T, model.params)) < 1e-10
    coarse, fine, est = rf.chebyshev_self_reference(model, s0, T, 2e-3, rho=rho)
    true = rf.linf_error(coarse, rf.rsw_exact(s0, T, model.params))
    assert est <= 10 * max(true, 1e-13) and true <= 10 * max(est, 1e-13)


def test_chebyshev_degree_one_is_first_order(mesh4):
    model = md.make_model("rsw")
    s0 = md.random_smooth_state("rsw", mesh4, np.random.default_rng(2), kmax=1)
    T = 0.02
    exact = rf.rsw_exact(s0, T, model.params)
    rho = rf.spectral_radius(model, mesh4)
    e1 = rf.linf_error(rf.chebyshev_evolve(model, s0, T, T / 200, 1, rho, tail_tol=1.0), exact)
    e2 = rf.linf_error(rf.chebyshev_evolve(model, s0, T, T / 400, 1, rho, tail_tol=1.0), exact)
    assert 1.6 <= e1 / e2 <= 2.4


def test_chebyshev_tail_failure(rsw_case):
    model, s0 = rsw_case
    with pytest.raises(rf.NumericalFailure, match="rho"):
        rf.chebyshev_evolve(model, s0, 0.1, 0.1, degree=12)


def test_spectral_radius_bounds_resolved_modes(mesh4):
    model = md.make_model("rsw")
    rho = rf.spectral_radius(model, mesh4)
    kmax = (mesh4.p - 1) * mesh4.nx / 4
    assert rho >= 2 * np.pi * kmax


def test_metrics():
    m = se.build_mesh(2, 2, 4)
    s = md.RSWState(np.ones((3, m.N)), m)
    assert rf.linf_error(s, s) == 0
    assert abs(rf.l2_norm(s) - np.sqrt(3.0)) < 1e-13
    a = np.array([1.0, -2.0, 0.5])
    b = np.array([0.5, -2.0, 3.0])
    assert rf.linf_error(a, b) == 2.5
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, y, z = rng.standard_normal((3, 9))
        assert rf.linf_error(x, z) <= rf.linf_error(x, y) + rf.linf_error(y, z) + 1e-15


def test_series_csv_roundtrip(tmp_path):
    path = tmp_path / "s.csv"
    rf.write_series(path, [(1, 1.5e-10, 0.7, 2.25), (2, 3e-10, 0.7, 4.5)])
    text = path.read_text().splitlines()
    assert text[0] == "step_or_dt,linf,l2,wall_seconds"
    assert text[1] == "1,1.5000000000e-10,7.0000000000e-01,2.2500000000e+00"
    back = rf.read_series(path)
    np.testing.assert_allclose(back[:, 1], [1.5e-10, 3e-10])
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        rf.read_series(path)


def test_grid_transfer_exact_for_trig(mesh6):
    n = rf.default_grid(mesh6)
    u = np.cos(2 * np.pi * (3 * mesh6.x - 2 * mesh6.y))
    U = np.fft.fft2(rf.to_uniform(mesh6, u, n))
    back = rf.from_uniform_fft(mesh6, U)
    assert np.max(np.abs(back - u)) < 1e-10
    k1, k2 = rf.fourier_content(mesh6, u)
    assert set(zip(k1.astype(int), k2.astype(int))) == {(3, -2), (-3, 2)}
