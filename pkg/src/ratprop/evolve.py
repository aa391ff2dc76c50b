"""Precomputed rational evolution operators.

``precompute`` turns a rational approximation ``sum_m c_m / (iy - alpha_m)``
of ``exp(iy)`` into a set of factored shifted-Laplacian systems so that

    exp(tau L) s  ~  sum_m c_m (tau L - alpha_m)^{-1} s.

For real ``s`` the resolvent at ``conj(alpha)`` is the conjugate of the one at
``alpha``, so only poles with ``Im alpha >= 0`` are solved.  Poles whose
squares coincide up to conjugation share one factorization, because both
models reduce ``(tau L - alpha)^{-1}`` to an elliptic problem in ``alpha^2``.

Contributions are always accumulated in ascending pole index, whatever the
execution schedule, so results are bit-identical across runs and worker
counts.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import erfcinv

from . import models as md
from . import ratkit as rk
from . import specelem as se

FORMAT_VERSION = 1
FILTER_MODES = ("product_filter", "laplacian_projector", "none")
IMAG_TOL = 1e-8
# projector window: passband half width (in the 2 pi scaled variable) and spacing
PROJECTOR_PASSBAND = 8.0
PROJECTOR_H = 0.5
PROJECTOR_MARGIN = 1.25


class InstabilityError(RuntimeError):
    """Output of a step picked up an imaginary part above tolerance."""


class PoleFactorizationError(se.SingularShiftError):
    def __init__(self, message, shift=None, pole_index=None):
        super().__init__(message, shift)
        self.pole_index = pole_index


class OperatorFileError(RuntimeError):
    """Persisted operator is missing, stale or corrupted."""

    def __init__(self, message, pole_index=None):
        super().__init__(message)
        self.pole_index = pole_index


@dataclass
class SolveCounter:
    solves: int = 0
    applications: int = 0


@dataclass
class LaplacianProjector:
    """Rational filter ``S`` applied to ``k0 (-Delta)``.

    With ``y = k0 lambda`` and ``(i y - a)^{-1} = (i/k0) (Delta - sigma)^{-1}``
    where ``sigma = i a / k0``, the filter is a sum of shifted-Laplacian
    solves.  Poles ``a`` and ``-conj(a)`` give conjugate shifts and share a
    factorization.
    """

    mesh: se.Mesh
    k0: float
    filt: rk.FilterRational
    sigma: np.ndarray
    classes: list
    factors: list
    counter: SolveCounter = field(default_factory=SolveCounter)

    @property
    def n_solves(self):
        return len(self.classes)

    def apply_scalar(self, u):
        u = np.asarray(u, dtype=float)
        c = self.filt.inner.residues
        acc = np.zeros(self.mesh.N, dtype=complex)
        contrib = [None] * len(self.sigma)
        for (members, conj), F in zip(self.classes, self.factors):
            x = se.solve(F, se.prepare_rhs(self.mesh, u))
            self.counter.solves += 1
            for m, cj in zip(members, conj):
                contrib[m] = np.conj(x) if cj else x
        for n in range(len(self.sigma)):
            acc += c[n] * contrib[n]
        acc *= 1j / self.k0
        _check_real(acc, u, "projector")
        return acc.real

    def apply(self, s):
        self.counter.applications += 1
        return s.with_data(np.stack([self.apply_scalar(comp) for comp in s.data]))

    @property
    def nbytes(self):
        return sum(F.nbytes for F in self.factors)


def laplacian_projector_build(mesh, k0, filt):
    """Factor ``Delta - sigma_j`` for every conjugate class of filter poles."""
    if not all(mesh.periodic):
        raise ValueError("the Laplacian projector needs a periodic mesh")
    if not k0 > 0:
        raise ValueError("k0 must be positive")
    a = filt.inner.poles
    if np.any(np.abs(a.real) < 1e-12 * np.abs(a)):
        raise rk.PoleCollisionError("filter pole on the imaginary axis collides with the Laplacian spectrum")
    sigma = 1j * a / k0
    key = sigma.real + 1j * np.abs(sigma.imag)
    classes, factors = [], []
    used = np.zeros(len(sigma), dtype=bool)
    for i in range(len(sigma)):
        if used[i]:
            continue
        tol = 1e-12 * max(1.0, abs(sigma[i]))
        same = np.flatnonzero(~used & (np.abs(key - key[i]) <= tol))
        used[same] = True
        conj = np.abs(sigma[same] - sigma[i]) > tol
        classes.append((same, conj))
        try:
            factors.append(se.factor(se.assemble(mesh, se.OperatorSpec(sigma[i]))))
        except se.SingularShiftError as exc:
            raise PoleFactorizationError(f"projector pole {i}: {exc}", sigma[i], i) from exc
    return LaplacianProjector(mesh, float(k0), filt, sigma, classes, factors)


def build_projector_filter(delta):
    return rk.build_filter(PROJECTOR_PASSBAND, delta, h=PROJECTOR_H)


def projector_k0(lambda_data, filt, margin=PROJECTOR_MARGIN):
    """``k0`` mapping ``margin * lambda_data`` to the passband edge."""
    return filt.inner.half_interval / (margin * max(lambda_data, 1e-12))


def projector_stop(filt, k0):
    """Largest ``-Delta`` eigenvalue the projector lets through (filter at ``delta``)."""
    e = float(erfcinv(2.0 * filt.delta_pass))
    h = filt.inner.meta["h"]
    return rk.TWO_PI * (filt.passband_half_width + 4.0 * e * h) / k0


# ------------------------------------------------------------- bandwidth


def symbol_radius(model, lam, mesh=None):
    """Largest ``|omega|`` of the constant-coefficient surrogate at ``|2 pi k|^2 = lam``."""
    lam = np.asarray(lam, dtype=float)
    p = model.params
    if model.name == "rsw":
        return np.sqrt(p.f**2 + p.c**2 * lam)
    kmax = 1.0 if mesh is None else float(np.max(p.kappa_values(mesh)))
    return np.sqrt(kmax * lam)


def data_wavenumber(s0, rel_tol=1e-10):
    """Largest resolved ``|2 pi k|^2`` over all components of ``s0``."""
    from .reference import fourier_content

    lam = 0.0
    for comp in s0.data:
        if not np.any(comp):
            continue
        k1, k2 = fourier_content(s0.mesh, comp, rel_tol=rel_tol)
        if k1.size:
            lam = max(lam, float(np.max((2 * math.pi) ** 2 * (k1**2 + k2**2))))
    return lam


def _variable_coefficients(model, mesh):
    if model.name != "wave":
        return False
    k = np.asarray(model.params.kappa_values(mesh), dtype=float)
    return bool(np.ptp(k) > 1e-14 * np.max(np.abs(k)))


def estimate_bandwidth(model, s0, rel_tol=1e-10, factor=1.1, tau=None, pilot_tol=1e-8):
    """``factor`` times the surrogate's largest ``|omega|`` over the data's modes.

    With variable coefficients the solution leaves the data's band as it
    evolves.  If ``tau`` is given, a cheap RK4 pilot run over one step is
    added to the data, and its spectrum is read at ``pilot_tol`` (the pilot
    is only accurate to about that level in its high modes).
    """
    lam = data_wavenumber(s0, rel_tol)
    if tau is not None and _variable_coefficients(model, s0.mesh):
        from .reference import rk4_evolve, spectral_radius

        rho = spectral_radius(model, s0.mesh)
        n = max(1, int(math.ceil(tau * rho / 2.0)))
        pilot = rk4_evolve(model, s0, tau, tau / n)
        lam = max(lam, data_wavenumber(pilot, pilot_tol))
    return factor * float(symbol_radius(model, lam, s0.mesh))


# ------------------------------------------------------------- operator


@dataclass
class EvolutionOperator:
    model: md.Model
    mesh: se.Mesh
    tau: float
    Lambda: float
    delta: float
    filter_mode: str
    approx: rk.RationalApprox
    exp_approx: rk.RationalApprox
    filt: rk.FilterRational | None
    half: np.ndarray
    partner: np.ndarray
    classes: list
    member: dict
    factors: list
    projector: LaplacianProjector | None = None
    k0: float | None = None
    stats: dict = field(default_factory=dict)
    counter: SolveCounter = field(default_factory=SolveCounter)
    workers: int = 1

    @property
    def n_half(self):
        return len(self.half)

    @property
    def n_factorizations(self):
        return len(self.factors)

    def describe(self):
        return {
            "model": md.model_descriptor(self.model),
            "mesh": self.mesh.describe(),
            "tau": self.tau,
            "Lambda": self.Lambda,
            "delta": self.delta,
            "filter_mode": self.filter_mode,
            "k0": self.k0,
        }


def _half_structure(poles):
    partner = rk._conj_partner(poles)
    if partner is None:
        raise rk.ApproximationError("pole set is not closed under conjugation")
    half = np.flatnonzero(poles.imag >= 0)
    return half, partner


def _group(poles, half):
    classes, member = [], {}
    for members, conj in rk.shift_classes(poles[half]):
        idx = half[members]
        cid = len(classes)
        classes.append((idx, conj))
        for k, cj in zip(idx, conj):
            member[int(k)] = (cid, bool(cj))
    return classes, member


def _build_approx(tau, Lambda, delta, filter_mode):
    A = tau * Lambda
    if filter_mode == "product_filter":
        R, S, prod = rk.build_filtered_exp(A, delta)
        return prod, R, S
    R = rk.build_exp_approx(A, delta)
    return R, R, None


def precompute(model, mesh, tau, Lambda, delta, filter_mode="product_filter", s0=None, k0=None,
               workers=1, progress=None):
    """Build the approximation and factor one system per shift class.

    For ``laplacian_projector`` either ``k0`` or initial data ``s0`` is needed;
    the approximation interval is widened to cover every mode the projector
    lets through.
    """
    if filter_mode not in FILTER_MODES:
        raise ValueError(f"filter_mode must be one of {FILTER_MODES}, got {filter_mode!r}")
    if not (tau > 0 and Lambda > 0):
        raise ValueError("tau and Lambda must be positive")
    t0 = time.perf_counter()
    proj_filter = None
    Lam = float(Lambda)
    if filter_mode == "laplacian_projector":
        proj_filter = build_projector_filter(delta)
        if k0 is None:
            if s0 is None:
                raise ValueError("laplacian_projector needs k0 or initial data to choose it")
            k0 = projector_k0(data_wavenumber(s0), proj_filter)
        Lam = max(Lam, float(symbol_radius(model, projector_stop(proj_filter, k0), mesh)))
    approx, R, S = _build_approx(tau, Lam, delta, filter_mode)
    t_approx = time.perf_counter() - t0
    poles = approx.poles
    half, partner = _half_structure(poles)
    classes, member = _group(poles, half)
    factors, ftimes = [], []
    for cid, (idx, _) in enumerate(classes):
        rep = int(idx[0])
        try:
            F = model.factor(poles[rep], tau, mesh)
        except (se.SingularShiftError, ValueError) as exc:
            raise PoleFactorizationError(
                f"factorization failed for pole {rep} (alpha={poles[rep]:.6g}): {exc}",
                poles[rep], rep,
            ) from exc
        factors.append(F)
        ftimes.append(F.build_seconds)
        if progress is not None:
            progress(cid + 1, len(classes))
    projector = None
    if filter_mode == "laplacian_projector":
        projector = laplacian_projector_build(mesh, k0, proj_filter)
    total = time.perf_counter() - t0
    stats = {
        "n_poles": int(approx.n_poles),
        "n_half_poles": int(len(half)),
        "n_factorizations": len(factors),
        "conjugate_pairs": int(approx.conjugate_pairs),
        "approx_seconds": t_approx,
        "factor_seconds": ftimes,
        "build_seconds": total,
        "factor_bytes": int(sum(F.nbytes for F in factors)),
        "Lambda_effective": Lam,
        "measured_error": float(approx.meta.get("measured_error", float("nan"))),
    }
    if projector is not None:
        stats["projector_solves"] = projector.n_solves
        stats["projector_bytes"] = projector.nbytes
    return EvolutionOperator(
        model, mesh, float(tau), float(Lambda), float(delta), filter_mode, approx, R, S,
        half, partner, classes, member, factors, projector, None if k0 is None else float(k0),
        stats, SolveCounter(), int(workers),
    )


# ----------------------------------------------------------------- apply


def _check_real(acc, ref, where):
    scale = max(float(np.max(np.abs(acc))), float(np.max(np.abs(ref))), 1e-300)
    im = float(np.max(np.abs(acc.imag))) if np.iscomplexobj(acc) else 0.0
    if im > IMAG_TOL * scale:
        raise InstabilityError(f"{where}: imaginary part {im / scale:.2e} (relative) exceeds {IMAG_TOL:g}")


def _check_input(s):
    d = s.data
    if np.iscomplexobj(d):
        scale = max(float(np.max(np.abs(d))), 1e-300)
        if float(np.max(np.abs(d.imag))) > IMAG_TOL * scale:
            raise ValueError("input state must be real")
        s = s.with_data(d.real.copy())
    return s


def _solve_one(op, s, k):
    cid, conj = op.member[int(k)]
    return op.model.resolvent(op.factors[cid], op.approx.poles[k], op.tau, s, conjugate=conj)


def _resolvents(op, s):
    """Yields ``(k, (tau L - alpha_k)^{-1} s)`` in ascending pole index."""
    if op.workers > 1:
        with ThreadPoolExecutor(op.workers) as ex:
            for k, w in zip(op.half, ex.map(lambda k: _solve_one(op, s, k), op.half)):
                op.counter.solves += 1
                yield k, w
    else:
        for k in op.half:
            op.counter.solves += 1
            yield k, _solve_one(op, s, k)


def _accumulate(op, s, residue_sets):
    """One pass over the half poles, accumulating every residue set."""
    accs = [np.zeros(s.data.shape, dtype=complex) for _ in residue_sets]
    for k, w in _resolvents(op, s):
        j = op.partner[k]
        wd = w.data
        for acc, c in zip(accs, residue_sets):
            if j == k:
                acc += c[k] * wd
            else:
                acc += c[k] * wd + c[j] * np.conj(wd)
    return accs


def _finish(op, s, acc, where, project=True):
    _check_real(acc, s.data, where)
    out = s.with_data(acc.real.copy())
    if project and op.projector is not None:
        out = op.projector.apply(out)
    return out


def step(op, s):
    """One application of the rational approximation of ``exp(tau L)``."""
    s = _check_input(s)
    op.counter.applications += 1
    (acc,) = _accumulate(op, s, [op.approx.residues])
    return _finish(op, s, acc, "step")


@dataclass
class Trajectory:
    steps: list
    final: object
    records: list


def evolve_n(op, s0, n, observers=(), reference=None):
    """``n`` steps; ``observers`` are called as ``obs(i, state, info)``.

    ``info`` carries the L-infinity and discrete L2 norms, the wall time of
    the step and, when ``reference(i)`` is given, the L-infinity error.
    """
    from .reference import l2_norm

    if n < 0:
        raise ValueError("n must be nonnegative")
    s = _check_input(s0)
    records = []
    norm0 = float(np.max(np.abs(s.data)))
    for i in range(1, n + 1):
        t = time.perf_counter()
        try:
            s = step(op, s)
        except (InstabilityError, se.SingularShiftError) as exc:
            raise InstabilityError(f"step {i}: {exc}") from exc
        info = {
            "step": i,
            "linf": float(np.max(np.abs(s.data))),
            "l2": l2_norm(s),
            "wall_seconds": time.perf_counter() - t,
        }
        info["amplification"] = info["linf"] / max(norm0, 1e-300)
        if reference is not None:
            info["error"] = float(np.max(np.abs(s.data - reference(i).data)))
        records.append(info)
        for obs in observers:
            obs(i, s, info)
    return Trajectory(list(range(1, n + 1)), s, records)


def _time_residues(op, t):
    Rt = rk.exp_coeffs_like(op.exp_approx, t)
    if op.filt is not None:
        Rt = rk.product_rational(op.filt, Rt)
    return Rt.residues


def eval_intermediate(op, s0, times):
    """States at each ``s`` in ``times`` (``0 <= s <= tau``) from one set of solves."""
    times = [float(x) for x in times]
    for x in times:
        if not (0.0 <= x <= op.tau * (1 + 1e-14)):
            raise ValueError(f"time {x} outside [0, {op.tau}]")
    s = _check_input(s0)
    sets = [_time_residues(op, min(x / op.tau, 1.0)) for x in times]
    op.counter.applications += 1
    accs = _accumulate(op, s, sets)
    return [_finish(op, s, a, f"intermediate t={x:g}") for a, x in zip(accs, times)]


def _phi_residues(op, j):
    P = rk.phi_coeffs_like(op.exp_approx, j)
    if op.filt is not None:
        P = rk.product_rational(op.filt, P)
    return P.residues


def apply_phi(op, s0, j):
    """``phi_j(tau L) s0`` from the same resolvents as :func:`step`."""
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    s = _check_input(s0)
    res = _phi_residues(op, j)
    op.counter.applications += 1
    (acc,) = _accumulate(op, s, [res])
    return _finish(op, s, acc, f"phi_{j}")


# ------------------------------------------------------------- persistence


def _approx_record(R):
    return {
        "poles": [[float(p.real), float(p.imag)] for p in R.poles],
        "residues": [[float(r.real), float(r.imag)] for r in R.residues],
        "half_interval": float(R.half_interval),
        "accuracy": float(R.accuracy),
        "target": R.target,
        "meta": {k: _jsonable(v) for k, v in R.meta.items()},
    }


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _approx_from_record(d):
    poles = np.array([complex(a, b) for a, b in d["poles"]])
    res = np.array([complex(a, b) for a, b in d["residues"]])
    meta = dict(d["meta"])
    if isinstance(meta.get("mu"), list):
        meta["mu"] = complex(*meta["mu"])
    return rk.RationalApprox(poles, res, d["half_interval"], d["accuracy"], d["target"], meta)


def input_hash(model, mesh, tau, Lambda, delta, filter_mode, k0=None):
    """Hash of everything that determines the operator."""
    desc = {
        "version": FORMAT_VERSION,
        "model": md.model_descriptor(model),
        "mesh": mesh.describe(),
        "tau": repr(float(tau)),
        "Lambda": repr(float(Lambda)),
        "delta": repr(float(delta)),
        "filter_mode": filter_mode,
        "k0": None if k0 is None else repr(float(k0)),
    }
    return hashlib.sha256(json.dumps(desc, sort_keys=True).encode()).hexdigest()


def _blob_bytes(F):
    buf = io.BytesIO()
    np.savez(buf, **se.factorization_arrays(F))
    return buf.getvalue()


def save_operator(op, path, key=None):
    """Write ``manifest.json`` plus one ``.npz`` blob per factorization."""
    if op.model.params.kappa is not None and not op.model.params.name:
        raise ValueError("a custom kappa needs a preset name to be persisted")
    os.makedirs(path, exist_ok=True)
    blobs = []
    for cid, ((idx, conj), F) in enumerate(zip(op.classes, op.factors)):
        name = f"pole_{int(idx[0]):04d}.npz"
        data = _blob_bytes(F)
        with open(os.path.join(path, name), "wb") as fh:
            fh.write(data)
        blobs.append({
            "pole_index": int(idx[0]),
            "members": [int(k) for k in idx],
            "conjugated": [bool(c) for c in conj],
            "file": name,
            "sha256": hashlib.sha256(data).hexdigest(),
        })
    proj = None
    if op.projector is not None:
        pblobs = []
        for cid, ((idx, conj), F) in enumerate(zip(op.projector.classes, op.projector.factors)):
            name = f"projector_{int(idx[0]):04d}.npz"
            data = _blob_bytes(F)
            with open(os.path.join(path, name), "wb") as fh:
                fh.write(data)
            pblobs.append({
                "pole_index": int(idx[0]),
                "members": [int(k) for k in idx],
                "conjugated": [bool(c) for c in conj],
                "file": name,
                "sha256": hashlib.sha256(data).hexdigest(),
            })
        proj = {
            "k0": op.projector.k0,
            "filter": _approx_record(op.projector.filt.inner),
            "passband": op.projector.filt.passband_half_width,
            "delta_pass": op.projector.filt.delta_pass,
            "blobs": pblobs,
        }
    manifest = {
        "format_version": FORMAT_VERSION,
        "input_hash": key or input_hash(op.model, op.mesh, op.tau, op.Lambda, op.delta, op.filter_mode,
                                        op.k0),
        **op.describe(),
        "approx": _approx_record(op.approx),
        "exp_approx": _approx_record(op.exp_approx),
        "filter": None if op.filt is None else {
            "inner": _approx_record(op.filt.inner),
            "passband": op.filt.passband_half_width,
            "delta_pass": op.filt.delta_pass,
        },
        "blobs": blobs,
        "projector": proj,
        "stats": {k: _jsonable(v) for k, v in op.stats.items()},
    }
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return os.path.join(path, "manifest.json")


def read_manifest(path):
    fn = os.path.join(path, "manifest.json")
    try:
        with open(fn) as fh:
            man = json.load(fh)
    except FileNotFoundError:
        raise OperatorFileError(f"no manifest in {path}")
    except json.JSONDecodeError as exc:
        raise OperatorFileError(f"{fn}: malformed manifest ({exc})")
    if man.get("format_version") != FORMAT_VERSION:
        raise OperatorFileError(f"{fn}: format version {man.get('format_version')} != {FORMAT_VERSION}")
    return man


def _load_blobs(path, entries, mesh):
    classes, factors = [], []
    for b in entries:
        fn = os.path.join(path, b["file"])
        try:
            with open(fn, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise OperatorFileError(f"blob for pole {b['pole_index']} unreadable: {exc}", b["pole_index"])
        if hashlib.sha256(data).hexdigest() != b["sha256"]:
            raise OperatorFileError(f"blob for pole {b['pole_index']} is corrupted (hash mismatch)",
                                    b["pole_index"])
        try:
            arrays = dict(np.load(io.BytesIO(data)))
            F = se.factorization_from_arrays(arrays, mesh)
        except Exception as exc:  # a well-hashed but unreadable blob
            raise OperatorFileError(f"blob for pole {b['pole_index']} cannot be decoded: {exc}",
                                    b["pole_index"]) from exc
        classes.append((np.array(b["members"], dtype=int), np.array(b["conjugated"], dtype=bool)))
        factors.append(F)
    return classes, factors


def load_operator(path, expected_hash=None):
    """Restore an operator written by :func:`save_operator` without refactoring."""
    man = read_manifest(path)
    if expected_hash is not None and man["input_hash"] != expected_hash:
        raise OperatorFileError("stored operator was built from different inputs")
    model = md.model_from_descriptor(man["model"])
    mdesc = man["mesh"]
    mesh = se.build_mesh(mdesc["nx"], mdesc["ny"], mdesc["p"], tuple(mdesc["periodic"]))
    approx = _approx_from_record(man["approx"])
    R = _approx_from_record(man["exp_approx"])
    filt = None
    if man["filter"] is not None:
        f = man["filter"]
        filt = rk.FilterRational(_approx_from_record(f["inner"]), f["passband"], f["delta_pass"])
    classes, factors = _load_blobs(path, man["blobs"], mesh)
    half, partner = _half_structure(approx.poles)
    member = {}
    for cid, (idx, conj) in enumerate(classes):
        for k, cj in zip(idx, conj):
            member[int(k)] = (cid, bool(cj))
    if sorted(member) != [int(k) for k in half]:
        raise OperatorFileError("manifest classes do not cover the half poles")
    projector = None
    if man["projector"] is not None:
        pm = man["projector"]
        pf = rk.FilterRational(_approx_from_record(pm["filter"]), pm["passband"], pm["delta_pass"])
        pclasses, pfactors = _load_blobs(path, pm["blobs"], mesh)
        projector = LaplacianProjector(mesh, pm["k0"], pf, 1j * pf.inner.poles / pm["k0"], pclasses, pfactors)
    stats = dict(man.get("stats", {}), loaded_from=path)
    return EvolutionOperator(
        model, mesh, man["tau"], man["Lambda"], man["delta"], man["filter_mode"], approx, R, filt,
        half, partner, classes, member, factors, projector, man["k0"], stats,
    )
