import math

import mpmath as mp
import numpy as np
import pytest

from ratprop import ratkit as rk


def test_table_matches_gaussian():
    gr = rk.gaussian_rational_table()
    x = np.linspace(-50, 50, 20001)
    assert np.max(np.abs(gr(x) - rk.psi(x))) < 1e-12
    # symmetrizing must not cost accuracy
    assert np.max(np.abs(gr.symmetrized()(x) - rk.psi(x))) < 1e-12


def test_psi_hat_is_transform_of_psi():
    # int psi_h(x) e^{-2 pi i xi x} dx by the trapezoid rule on a wide grid
    h, xi = 0.3, 0.7
    x = np.linspace(-40, 40, 40001)
    val = np.trapezoid(rk.psi(x, h) * np.exp(-2j * np.pi * xi * x), x)
    assert abs(val - rk.psi_hat(xi, h)) < 1e-12


@pytest.mark.parametrize("t", [1.0, 0.5, -0.3, 0.0])
def test_gaussian_sum_reproduces_exp(t):
    gs = rk.gaussian_coeffs_exp(0.2, 40, t)
    x = np.linspace(-gs.valid_half_width, gs.valid_half_width, 3001)
    err = np.abs(gs(x) - gs.target_values(x))
    bound = rk.gaussian_sum_error_bound(0.2, 40, t, x)
    assert np.all(err <= 1.5 * bound + 1e-14)
    assert err.max() < 1e-10


def test_gaussian_coeffs_validation():
    with pytest.raises(ValueError):
        rk.gaussian_coeffs_exp(0.7, 10, 1.0)
    with pytest.raises(ValueError):
        rk.gaussian_coeffs_exp(0.2, 10, 1.5)
    with pytest.raises(ValueError):
        rk.gaussian_coeffs_phi(3, 1.0, 10)


def test_phi_function_series_branch():
    z = np.array([1e-4j, 5e-3 + 1e-3j, 0.02j])
    for j in (1, 2):
        ref = np.array([complex(rk.phi_function(j, np.array([w]))[0]) for w in z])
        mp.mp.dps = 40
        exact = []
        for w in z:
            w = mp.mpc(w.real, w.imag)
            exact.append(complex((mp.exp(w) - 1) / w if j == 1 else (mp.exp(w) - 1 - w) / w**2))
        assert np.max(np.abs(ref - np.array(exact))) < 4e-15


def test_phi_gaussian_sums():
    x = np.linspace(-100, 100, 5001)
    for j in (1, 2):
        gs = rk.gaussian_coeffs_phi(j, 1.0, 120)
        assert np.max(np.abs(gs(x) - gs.target_values(x))) < 1e-12


def test_compose_rational_pole_structure():
    gs = rk.gaussian_coeffs_exp(0.2, 30, 1.0)
    R = rk.compose_rational(gs)
    assert R.n_poles == 2 * (2 * (30 + 11) + 1)
    assert np.all(np.abs(R.poles.real) > 0)
    assert R.check_invariants()
    y = np.linspace(-R.half_interval, R.half_interval, 4001)
    assert np.max(np.abs(R(y) - np.exp(1j * y))) < 1e-10


def test_exp_approx_counts_and_error():
    R = rk.build_exp_approx(56 * math.pi, 1e-10)
    # one factorization per class of alpha^2 up to conjugation
    assert abs(R.shift_classes - 172) <= 0.05 * 172
    assert R.meta["measured_error"] <= 1e-10
    y = rk.sample_points(R.half_interval, 32, rk.TWO_PI, far=False)
    assert np.max(np.abs(R(y) - np.exp(1j * y))) <= 1e-10


def test_exp_approx_rejects_bad_delta():
    with pytest.raises(ValueError):
        rk.build_exp_approx(50.0, 1e-16)
    with pytest.raises(ValueError):
        rk.build_exp_approx(-1.0, 1e-10)


def test_shift_classes_merge_conjugate_squares():
    p = np.array([1 + 2j, 1 - 2j, -1 + 2j, -1 - 2j, 3 + 1j])
    classes = rk.shift_classes(p)
    sizes = sorted(len(c[0]) for c in classes)
    assert sizes == [1, 4]
    for idx, conj in classes:
        sq = p[idx] ** 2
        np.testing.assert_allclose(np.where(conj, np.conj(sq), sq), sq[0])


def test_exp_coeffs_like_shares_poles():
    R = rk.build_exp_approx(40.0, 1e-10)
    y = np.linspace(-40, 40, 4001)
    for t in (0.25, 0.5, 1.0):
        Rt = rk.exp_coeffs_like(R, t)
        np.testing.assert_array_equal(Rt.poles, R.poles)
        assert np.max(np.abs(Rt(y) - np.exp(1j * t * y))) < 1e-10


def test_phi_coeffs_like():
    R = rk.build_exp_approx(40.0, 1e-10)
    y = np.linspace(-40, 40, 4001)
    for j in (1, 2):
        P = rk.phi_coeffs_like(R, j)
        assert np.max(np.abs(P(y) - rk.phi_function(j, 1j * y))) < 1e-9


def test_filter_bounds():
    A = 20.0
    R, S, prod = rk.build_filtered_exp(A, 1e-10)
    y = np.linspace(-10 * A, 10 * A, 2 * 10**5)
    assert np.max(np.abs(S(y))) <= 1 + 1e-10
    yp = rk.sample_points(S.passband_half_width * rk.TWO_PI, 32, rk.TWO_PI, far=False)
    assert np.max(np.abs(S(yp) - 1)) <= 1e-9
    assert rk.max_modulus(prod, A, 10**5) <= 1 + 1e-10
    yy = rk.sample_points(A, 32, rk.TWO_PI, far=False)
    assert np.max(np.abs(prod(yy) - np.exp(1j * yy))) <= 1e-10


def test_product_rational_matches_pointwise_product():
    R = rk.build_exp_approx(15.0, 1e-8)
    S = rk.build_filter(2.0, 1e-8, R)
    P = rk.product_rational(S, R)
    y = np.linspace(-60, 60, 997)
    np.testing.assert_allclose(P(y), S(y) * R(y), atol=1e-12)
    assert P.n_poles == R.n_poles + S.inner.n_poles


def test_product_rational_collision():
    R = rk.build_exp_approx(15.0, 1e-8)
    with pytest.raises(rk.PoleCollisionError):
        rk.product_rational(R, R)


def test_dumps_loads_roundtrip():
    R = rk.build_exp_approx(20.0, 1e-8)
    Q = rk.loads(rk.dumps(R))
    np.testing.assert_array_equal(Q.poles, R.poles)
    np.testing.assert_array_equal(Q.residues, R.residues)
    assert Q.meta["M"] == R.meta["M"] and Q.meta["h"] == R.meta["h"]
    assert rk.dumps(Q) == rk.dumps(R)


def test_loads_missing_header():
    with pytest.raises(ValueError):
        rk.loads("target = exp\npole_re pole_im residue_re residue_im\n1 2 3 4\n")
