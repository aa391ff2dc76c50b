"""Comparator engines and error metrics.

* ``FourierReference`` / ``rsw_exact``: exact propagation of constant
  coefficient RSW data through the Fourier symbol.  Nodal data is moved to a
  uniform grid by element-local Chebyshev interpolation and the result is
  summed back at the nodes as a trigonometric polynomial.
* ``rk4_evolve``: classical Runge-Kutta on ``u' = L u``.
* ``chebyshev_evolve``: Chebyshev expansion of ``exp(dt L)`` on a skew
  spectrum with Bessel coefficients.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import jv

from . import specelem as se

log = logging.getLogger(__name__)

CSV_HEADER = ("step_or_dt", "linf", "l2", "wall_seconds")


class NumericalFailure(RuntimeError):
    """Blow-up or non-convergence in a comparator."""


# ------------------------------------------------------------ grid transfer


def _axis_interp(mesh, axis, targets):
    """``(len(targets), Nx)`` matrix interpolating nodal lines at ``targets``."""
    n_el = mesh.nx if axis == 0 else mesh.ny
    total = mesh.Nx if axis == 0 else mesh.Ny
    t = np.asarray(targets, dtype=float) % 1.0
    e = np.minimum((t * n_el).astype(int), n_el - 1)
    xi = 2.0 * (t * n_el - e) - 1.0
    out = np.zeros((len(t), total))
    for k in range(n_el):
        sel = np.flatnonzero(e == k)
        if sel.size == 0:
            continue
        K = se.barycentric_matrix(mesh.ref_nodes, xi[sel])
        cols = mesh.line_index(k, np.arange(mesh.p), axis)
        np.add.at(out, (sel[:, None], cols[None, :]), K)
    return out


def to_uniform(mesh, values, n):
    """Sample nodal ``values`` on the ``n x n`` grid ``(j/n, i/n)``; rows index y."""
    u = np.arange(n) / n
    Ix = _axis_interp(mesh, 0, u)
    Iy = _axis_interp(mesh, 1, u)
    V = np.asarray(values).reshape(mesh.Ny, mesh.Nx)
    return Iy @ V @ Ix.T


def from_uniform_fft(mesh, coeffs):
    """Evaluate the trigonometric polynomial with ``np.fft.fft2`` coefficients at the nodes."""
    n = coeffs.shape[0]
    k = np.fft.fftfreq(n, 1.0 / n)
    Ex = np.exp(2j * np.pi * np.outer(mesh.xlines, k))
    Ey = np.exp(2j * np.pi * np.outer(mesh.ylines, k))
    return (Ey @ (coeffs / (n * n)) @ Ex.T).ravel()


def default_grid(mesh):
    n = max(mesh.Nx, mesh.Ny)
    return n + (n % 2)


# -------------------------------------------------------------- FFT exact


@dataclass
class FourierReference:
    """Per-mode eigendecomposition of the constant-coefficient RSW symbol.

    ``i * symbol`` is Hermitian, so ``eigh`` gives orthonormal eigenvectors
    and the symbol eigenvalues ``-i mu`` are imaginary by construction.
    """

    n: int
    params: object
    omega: np.ndarray = field(init=False, repr=False)
    vectors: np.ndarray = field(init=False, repr=False)
    condition: float = field(init=False)

    def __post_init__(self):
        from .models import rsw_symbol

        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        k1, k2 = np.meshgrid(k, k)  # rows index k_y
        S = np.stack([rsw_symbol(a, b, self.params) for a, b in zip(k1.ravel(), k2.ravel())])
        skew = np.max(np.abs(S + np.conj(np.swapaxes(S, 1, 2))))
        if skew > 1e-12 * max(1.0, np.abs(S).max()):
            raise ValueError("symbol is not skew-Hermitian; the FFT reference needs constant f and c")
        mu, V = np.linalg.eigh(1j * S)
        self.omega = -mu  # eigenvalues of the symbol are i * omega
        self.vectors = V
        self.condition = float(np.max(np.linalg.cond(V)))
        log.debug("Fourier reference n=%d, eigenvector condition %.3g", self.n, self.condition)

    @property
    def max_frequency(self):
        return float(np.abs(self.omega).max())

    def apply_coeffs(self, U, g):
        """``g(i omega)`` applied mode by mode; ``U`` has shape ``(3, n, n)``."""
        flat = U.reshape(3, -1).T  # (modes, 3)
        V = self.vectors
        c = np.einsum("mji,mj->mi", np.conj(V), flat)
        c *= g(1j * self.omega)
        out = np.einsum("mij,mj->mi", V, c)
        return out.T.reshape(U.shape)

    def propagate_coeffs(self, U, t):
        return self.apply_coeffs(U, lambda z: np.exp(t * z))


def _aliasing_check(U, tol=1e-10):
    n = U.shape[-1]
    k = np.abs(np.fft.fftfreq(n, 1.0 / n))
    top = (k[None, :] > 0.9 * n / 2) | (k[:, None] > 0.9 * n / 2)
    energy = np.sum(np.abs(U) ** 2)
    frac = np.sum(np.abs(U[..., top]) ** 2) / max(energy, 1e-300)
    if frac > tol:
        warnings.warn(f"reference grid may alias: {frac:.2e} of the energy sits in the top 10% of modes",
                      RuntimeWarning, stacklevel=3)
    return frac


def rsw_exact(s0, t, params, n=None, ref=None):
    """Exact RSW solution at time ``t`` for constant ``f`` and ``c``."""
    return rsw_function(s0, lambda z: np.exp(t * z), params, n, ref)


def rsw_function(s0, g, params, n=None, ref=None):
    """``g(L) s0`` for constant-coefficient RSW, with ``g`` acting on the symbol eigenvalues."""
    mesh = s0.mesh
    n = n or (ref.n if ref is not None else default_grid(mesh))
    ref = ref if ref is not None and ref.n == n else FourierReference(n, params)
    U = np.stack([np.fft.fft2(to_uniform(mesh, comp, n)) for comp in s0.data])
    _aliasing_check(U)
    Ut = ref.apply_coeffs(U, g)
    out = np.stack([from_uniform_fft(mesh, c) for c in Ut])
    if np.isrealobj(s0.data):
        out = out.real
    return s0.with_data(out)


def fourier_content(mesh, values, n=None, rel_tol=1e-10):
    """Wavenumbers ``(k1, k2)`` whose uniform-grid coefficients exceed ``rel_tol`` of the peak."""
    n = n or default_grid(mesh)
    U = np.fft.fft2(to_uniform(mesh, values, n))
    a = np.abs(U)
    k = np.fft.fftfreq(n, 1.0 / n)
    sel = a > rel_tol * max(a.max(), 1e-300)
    k1, k2 = np.meshgrid(k, k)
    return k1[sel], k2[sel]


# ------------------------------------------------------------- time steppers


def _monitor(u, scale, limit, where):
    m = float(np.max(np.abs(u)))
    if not np.isfinite(m) or m > limit * scale:
        raise NumericalFailure(f"{where}: solution norm {m:.3e} exceeds {limit:g} x initial; dt too large")


def _nsteps(T, dt):
    n = int(round(T / dt))
    if n < 0 or abs(n * dt - T) > 1e-9 * max(abs(T), 1.0):
        raise ValueError(f"dt={dt} does not divide T={T}")
    return n


def rk4_evolve(model, s0, T, dt, blowup=1e3):
    """Classical RK4 with ``T/dt`` steps; raises ``NumericalFailure`` on blow-up."""
    n = _nsteps(T, dt)
    L = model.forward
    u = s0.copy()
    scale = max(float(np.max(np.abs(s0.data))), 1e-300)
    for i in range(n):
        k1 = L(u)
        k2 = L(u + (0.5 * dt) * k1)
        k3 = L(u + (0.5 * dt) * k2)
        k4 = L(u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if i % 16 == 15 or i == n - 1:
            _monitor(u.data, scale, blowup, f"rk4 step {i + 1}")
    return u


def spectral_radius(model, mesh, iters=60, rng=None, safety=1.1):
    """Estimate ``max |lambda(L)|`` by power iteration on ``-L^2``."""
    rng = rng or np.random.default_rng(0)
    u = model.make_state(rng.standard_normal((3, mesh.N)), mesh)
    est = 0.0
    for _ in range(iters):
        nu = np.linalg.norm(u.data)
        u = u * (1.0 / nu)
        w = model.forward(model.forward(u))
        est = math.sqrt(max(np.linalg.norm(w.data), 0.0))
        u = w
    return safety * est


def chebyshev_coefficients(a, degree):
    """``exp(a x)`` for ``x`` on a skew spectrum in ``i[-1, 1]``: ``J_0(a), 2 J_k(a)``."""
    k = np.arange(degree + 1)
    c = 2.0 * jv(k, a)
    c[0] = jv(0, a)
    return c


def chebyshev_evolve(model, s0, T, dt, degree=12, rho=None, tail_tol=1e-6):
    """Chebyshev propagator applied ``T/dt`` times.

    With ``X = L / rho`` (spectrum in ``i[-1, 1]``) and ``a = dt rho``,
    ``exp(a X) = J_0(a) + 2 sum_k J_k(a) Q_k`` where ``Q_0 = u``,
    ``Q_1 = X u`` and ``Q_{k+1} = 2 X Q_k + Q_{k-1}`` (the ``i^k`` factors of
    the usual expansion are absorbed so everything stays real).
    """
    n = _nsteps(T, dt)
    mesh = s0.mesh
    rho = spectral_radius(model, mesh) if rho is None else float(rho)
    a = dt * rho
    tail = 2.0 * float(np.sum(np.abs(jv(np.arange(degree + 1, degree + 40), a))))
    if tail > tail_tol:
        raise NumericalFailure(
            f"Chebyshev tail {tail:.2e} too large: dt*rho = {a:.3g} (rho ~ {rho:.4g}) for degree {degree}"
        )
    coef = chebyshev_coefficients(a, degree)
    scale = max(float(np.max(np.abs(s0.data))), 1e-300)
    u = s0.copy()
    inv = 1.0 / rho
    for i in range(n):
        q0 = u
        acc = coef[0] * q0
        if degree >= 1:
            q1 = model.forward(q0) * inv
            acc = acc + coef[1] * q1
            for k in range(2, degree + 1):
                q0, q1 = q1, model.forward(q1) * (2.0 * inv) + q0
                acc = acc + coef[k] * q1
        u = acc
        if i % 16 == 15 or i == n - 1:
            _monitor(u.data, scale, 1e3, f"chebyshev step {i + 1}")
    return u


def chebyshev_self_reference(model, s0, T, dt, degree=12, rho=None):
    """Runs at ``dt`` and ``dt/2``; returns both and their L-infinity difference."""
    rho = spectral_radius(model, s0.mesh) if rho is None else rho
    coarse = chebyshev_evolve(model, s0, T, dt, degree, rho)
    fine = chebyshev_evolve(model, s0, T, dt / 2, degree, rho)
    return coarse, fine, linf_error(coarse, fine)


# ------------------------------------------------------------------ metrics


def _data(s):
    # plain arrays also carry a ``.data`` attribute (a memoryview)
    if isinstance(s, np.ndarray) or not hasattr(s, "data"):
        return np.asarray(s)
    return s.data


def linf_error(a, b):
    """Max absolute difference over all components and nodes."""
    return float(np.max(np.abs(_data(a) - _data(b))))


def l2_norm(s, weights=None):
    """Discrete L2 norm with the mesh quadrature weights, summed over components."""
    d = _data(s)
    w = s.mesh.weights if weights is None else np.asarray(weights)
    return float(np.sqrt(np.sum(w * np.sum(np.abs(np.atleast_2d(d)) ** 2, axis=0))))


def write_series(path, rows):
    """CSV with columns ``step_or_dt, linf, l2, wall_seconds``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def read_series(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return np.array([[float(v) for v in row] for row in rd]).reshape(-1, 4)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10e}"


class Stopwatch:
    def __init__(self):
        self.t0 = time.perf_counter()

    def __call__(self):
        return time.perf_counter() - self.t0
