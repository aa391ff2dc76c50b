"""Rotating shallow water and first-order variable-speed wave systems.

Both systems are written as ``u_t = L u`` with ``L`` skew-adjoint.  Their
resolvents ``(L - beta)^{-1}`` reduce to one scalar shifted-Laplacian solve:

* RSW (``g = H = 1``, wave speed ``c``):  ``L(v, eta) = (-f J v + c grad eta, c div v)``
  and ``(Delta - (beta^2 + f^2)/c^2) eta = (beta^2 + f^2)/(c^2 beta) (eta0 + c div(A v0))``
  with ``A = [[beta, -f], [f, beta]] / (beta^2 + f^2)``, then ``v = A (c grad eta - v0)``.
* wave:  ``L(w, z, v) = (v_x, v_y, kappa (w_x + z_y))`` and
  ``(Delta - beta^2/kappa) v = beta v0/kappa + w0_x + z0_y``, then
  ``w = (v_x - w0)/beta``, ``z = (v_y - z0)/beta``.

States are stored as ``(3, N)`` arrays.  Resolvents of ``tau L - alpha`` use
``(tau L - alpha)^{-1} = (1/tau) (L - alpha/tau)^{-1}``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import specelem as se


class _State:
    names = ()

    def __init__(self, data, mesh):
        data = np.asarray(data)
        if data.shape != (3, mesh.N):
            raise ValueError(f"state must have shape (3, {mesh.N}), got {data.shape}")
        self.data = data
        self.mesh = mesh

    def __getattr__(self, name):
        names = type(self).names
        if name in names:
            return self.data[names.index(name)]
        raise AttributeError(name)

    def grid(self, name):
        return se.GridFunction(self.mesh, self.data[type(self).names.index(name)])

    def copy(self):
        return type(self)(self.data.copy(), self.mesh)

    def with_data(self, data):
        return type(self)(data, self.mesh)

    def __add__(self, other):
        return self.with_data(self.data + other.data)

    def __sub__(self, other):
        return self.with_data(self.data - other.data)

    def __mul__(self, a):
        return self.with_data(a * self.data)

    __rmul__ = __mul__

    def __repr__(self):
        return f"{type(self).__name__}(N={self.mesh.N}, dtype={self.data.dtype})"


class RSWState(_State):
    names = ("v1", "v2", "eta")


class WaveState(_State):
    names = ("w", "z", "v")


@dataclass(frozen=True)
class ModelParams:
    """``f`` Coriolis frequency, ``c`` gravity-wave speed, ``kappa`` a callable ``(x, y) -> kappa``."""

    f: float = 1.0
    c: float = 1.0
    kappa: object = None
    name: str = ""

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")

    def kappa_values(self, mesh):
        if self.kappa is None:
            return np.ones(mesh.N)
        k = np.asarray(self.kappa(mesh.x, mesh.y), dtype=float) * np.ones(mesh.N)
        if not np.all(k > 0):
            raise ValueError("kappa must be positive at every node")
        return k


def variable_kappa(x, y):
    return np.sqrt((3 + np.sin(4 * np.pi * x)) / 4) * np.sqrt((3 + np.sin(4 * np.pi * y)) / 4)


# ------------------------------------------------------------------ RSW


def rsw_forward(s, params):
    m = s.mesh
    v1, v2, eta = s.data
    f, c = params.f, params.c
    ex, ey = se.gradient(eta, m)
    out = np.stack([-f * v2 + c * ex, f * v1 + c * ey, c * se.divergence(v1, v2, m)])
    return RSWState(out, m)


def rsw_shift(beta, params):
    return (beta * beta + params.f**2) / params.c**2


def _check_beta(beta):
    if abs(beta.real) <= 1e-14 * max(1.0, abs(beta)):
        raise ValueError(f"shift {beta} lies on the imaginary axis (spectrum of L)")


def rsw_resolvent_factor(alpha, tau, params, mesh, method="auto"):
    beta = complex(alpha) / tau
    _check_beta(beta)
    return se.factor(se.assemble(mesh, se.OperatorSpec(rsw_shift(beta, params))), method)


def rsw_resolvent_apply(fact, alpha, tau, params, s0, conjugate=False):
    """``(tau L - alpha)^{-1} s0``.  ``conjugate`` uses ``fact`` built for ``conj(alpha)^2``."""
    m = s0.mesh
    beta = complex(alpha) / tau
    f, c = params.f, params.c
    d = beta * beta + f * f
    v1, v2, eta0 = s0.data
    a1 = (beta * v1 - f * v2) / d
    a2 = (f * v1 + beta * v2) / d
    rhs = d / (c * c * beta) * (eta0 + c * se.divergence(a1, a2, m))
    eta = _shifted_solve(fact, m, rhs, conjugate)
    ex, ey = se.gradient(eta, m)
    g1, g2 = c * ex - v1, c * ey - v2
    w1 = (beta * g1 - f * g2) / d
    w2 = (f * g1 + beta * g2) / d
    return RSWState(np.stack([w1, w2, eta]) / tau, m)


def _shifted_solve(fact, mesh, rhs, conjugate=False):
    b = se.prepare_rhs(mesh, rhs)
    if conjugate:
        return np.conj(se.solve(fact, np.conj(b)))
    return se.solve(fact, b)


def rsw_symbol(k1, k2, params):
    """3x3 symbol of the RSW operator for the mode ``exp(2 pi i (k1 x + k2 y))``."""
    f, c = params.f, params.c
    q1, q2 = 2j * np.pi * k1, 2j * np.pi * k2
    return np.array([[0, -f, c * q1], [f, 0, c * q2], [c * q1, c * q2, 0]], dtype=complex)


# ------------------------------------------------------------------ wave


def wave_forward(s, params, kappa=None):
    m = s.mesh
    w, z, v = s.data
    kap = params.kappa_values(m) if kappa is None else kappa
    vx, vy = se.gradient(v, m)
    return WaveState(np.stack([vx, vy, kap * se.divergence(w, z, m)]), m)


def wave_shift(beta, params, mesh):
    return beta * beta / params.kappa_values(mesh)


def wave_resolvent_factor(alpha, tau, params, mesh, method="auto"):
    beta = complex(alpha) / tau
    _check_beta(beta)
    return se.factor(se.assemble(mesh, se.OperatorSpec(wave_shift(beta, params, mesh))), method)


def wave_resolvent_apply(fact, alpha, tau, params, s0, conjugate=False, kappa=None):
    m = s0.mesh
    beta = complex(alpha) / tau
    kap = params.kappa_values(m) if kappa is None else kappa
    w0, z0, v0 = s0.data
    rhs = beta * v0 / kap + se.divergence(w0, z0, m)
    v = _shifted_solve(fact, m, rhs, conjugate)
    vx, vy = se.gradient(v, m)
    return WaveState(np.stack([(vx - w0) / beta, (vy - z0) / beta, v]) / tau, m)


def wave_symbol(k1, k2, kappa=1.0):
    q1, q2 = 2j * np.pi * k1, 2j * np.pi * k2
    return np.array([[0, 0, q1], [0, 0, q2], [kappa * q1, kappa * q2, 0]], dtype=complex)


def wave_state_from_potential(u, mesh, ut=None):
    """``(w, z, v) = (u_x, u_y, u_t)``."""
    ux, uy = se.gradient(u, mesh)
    v = np.zeros(mesh.N) if ut is None else np.asarray(ut)
    return WaveState(np.stack([ux, uy, v]), mesh)


def _poisson_factor(mesh):
    cached = getattr(mesh, "_poisson_cache", None)
    if cached is not None:
        return cached
    B = se.assemble(mesh, se.OperatorSpec(0.0))
    pde = (B.row_kind == se.INTERIOR).astype(float)
    w = mesh.weights
    # bordered system: multiplier on the PDE rows, zero-mean constraint
    K = sp.bmat([[B.matrix, sp.csr_matrix(pde[:, None])], [sp.csr_matrix(w[None, :]), None]]).tocsr()
    F = se.factor(K.astype(complex), method="colamd")
    object.__setattr__(mesh, "_poisson_cache", (F, w))
    return F, w


def wave_recover_u(s, mesh=None, tol=1e-8):
    """Zero-mean ``u`` with ``Delta u = w_x + z_y``."""
    mesh = mesh or s.mesh
    w, z, _ = s.data
    rhs = se.divergence(w, z, mesh)
    F, wts = _poisson_factor(mesh)
    mean = np.dot(wts, rhs) / wts.sum()
    scale = max(np.max(np.abs(rhs)), 1e-300)
    rhs = rhs - mean
    b = np.concatenate([se.prepare_rhs(mesh, rhs), [0.0]])
    sol = se.solve(F, b)
    u, lam = sol[:-1], sol[-1]
    if abs(mean) > tol * scale or abs(lam) > tol * scale:
        warnings.warn(
            f"compatibility defect in potential recovery (mean {abs(mean):.2e}, multiplier {abs(lam):.2e})",
            RuntimeWarning,
            stacklevel=2,
        )
    return u.real if np.isrealobj(w) and np.isrealobj(z) else u


# ---------------------------------------------------------------- models


@dataclass(frozen=True)
class Model:
    """Bundle of forward/resolvent callables used by the evolution driver."""

    name: str
    params: ModelParams
    state_type: type = field(repr=False, default=RSWState)

    def forward(self, s):
        if self.name == "rsw":
            return rsw_forward(s, self.params)
        return wave_forward(s, self.params)

    def shift(self, beta, mesh):
        if self.name == "rsw":
            return rsw_shift(beta, self.params)
        return wave_shift(beta, self.params, mesh)

    def factor(self, alpha, tau, mesh, method="auto"):
        if self.name == "rsw":
            return rsw_resolvent_factor(alpha, tau, self.params, mesh, method)
        return wave_resolvent_factor(alpha, tau, self.params, mesh, method)

    def resolvent(self, fact, alpha, tau, s0, conjugate=False):
        if self.name == "rsw":
            return rsw_resolvent_apply(fact, alpha, tau, self.params, s0, conjugate)
        return wave_resolvent_apply(fact, alpha, tau, self.params, s0, conjugate)

    def symbol(self, k1, k2):
        if self.name == "rsw":
            return rsw_symbol(k1, k2, self.params)
        return wave_symbol(k1, k2)

    def make_state(self, data, mesh):
        return self.state_type(data, mesh)

    def inner(self, a, b):
        """Energy inner product; the wave velocity block is weighted by ``1/kappa``."""
        w = a.mesh.weights
        if self.name == "rsw":
            return np.sum(w * np.sum(a.data * np.conj(b.data), axis=0))
        kap = self.params.kappa_values(a.mesh)
        d = a.data * np.conj(b.data)
        return np.sum(w * (d[0] + d[1] + d[2] / kap))


KAPPA_PRESETS = {"variable-kappa": variable_kappa, "unit": None}


def model_descriptor(model):
    """JSON-friendly identity of a model (the kappa callable is named by its preset)."""
    p = model.params
    return {"name": model.name, "f": float(p.f), "c": float(p.c), "kappa": p.name or None}


def model_from_descriptor(desc):
    kap = desc.get("kappa")
    if kap is not None and kap not in KAPPA_PRESETS:
        raise ValueError(f"unknown kappa preset {kap!r}")
    params = ModelParams(desc["f"], desc["c"], KAPPA_PRESETS.get(kap), kap or "")
    return make_model(desc["name"], params)


def make_model(name, params=None):
    if name == "rsw":
        return Model("rsw", params or ModelParams(f=1.0, c=1.0), RSWState)
    if name == "wave":
        return Model("wave", params or ModelParams(kappa=variable_kappa, name="variable-kappa"), WaveState)
    raise ValueError(f"unknown model {name!r}")


# -------------------------------------------------------- initial data


def _rsw_test1(x, y):
    eta = np.sin(6 * np.pi * x) * np.cos(4 * np.pi * y) - 0.2 * np.cos(4 * np.pi * x) * np.sin(2 * np.pi * y)
    v1 = np.cos(6 * np.pi * x) * np.cos(4 * np.pi * y) - 4 * np.sin(6 * np.pi * x) * np.sin(4 * np.pi * y)
    v2 = np.cos(6 * np.pi * x) * np.cos(6 * np.pi * y)
    return v1, v2, eta


def _rsw_test2(x, y):
    return _rsw_test1(2 * x, 2 * y)


def _rsw_test3(x, y):
    v1, v2, _ = _rsw_test1(x, y)
    eta = np.exp(-100 * ((x - 0.5) ** 2 + (y - 0.5) ** 2))
    return v1, v2, eta


def wave_potential(x, y):
    return np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y) + np.sin(4 * np.pi * x) * np.sin(4 * np.pi * y)


def _wave_gradient(x, y):
    ux = 2 * np.pi * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y) + 4 * np.pi * np.cos(4 * np.pi * x) * np.sin(4 * np.pi * y)
    uy = 2 * np.pi * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y) + 4 * np.pi * np.sin(4 * np.pi * x) * np.cos(4 * np.pi * y)
    return ux, uy, np.zeros_like(x)


INITIAL_CONDITIONS = {
    "rsw-test1": ("rsw", _rsw_test1),
    "rsw-test2": ("rsw", _rsw_test2),
    "rsw-gaussian": ("rsw", _rsw_test3),
    "wave-test": ("wave", _wave_gradient),
}


def initial_state(preset, mesh):
    """Sample a named initial condition on ``mesh``."""
    try:
        kind, func = INITIAL_CONDITIONS[preset]
    except KeyError:
        raise ValueError(f"unknown initial condition {preset!r}; choose from {sorted(INITIAL_CONDITIONS)}")
    data = np.stack([np.asarray(a, dtype=float) * np.ones(mesh.N) for a in func(mesh.x, mesh.y)])
    return (RSWState if kind == "rsw" else WaveState)(data, mesh)


def load_state(path, mesh, kind):
    """Nodal data file: three columns (one per component), ``N`` rows."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape != (mesh.N, 3):
        raise ValueError(f"{path}: expected {mesh.N} rows of 3 values, got {data.shape}")
    return (RSWState if kind == "rsw" else WaveState)(data.T.copy(), mesh)


def random_smooth_state(kind, mesh, rng, kmax=4):
    """Random real trigonometric polynomial state with wavenumbers ``|k_i| <= kmax``."""
    comps = []
    for _ in range(3):
        f = np.zeros(mesh.N)
        for k1 in range(-kmax, kmax + 1):
            for k2 in range(-kmax, kmax + 1):
                a, b = rng.standard_normal(2) / (1 + k1 * k1 + k2 * k2)
                ph = 2 * math.pi * (k1 * mesh.x + k2 * mesh.y)
                f += a * np.cos(ph) + b * np.sin(ph)
        comps.append(f)
    return (RSWState if kind == "rsw" else WaveState)(np.stack(comps), mesh)
