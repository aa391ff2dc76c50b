"""Command line driver: ``ratprop {build-approx,precompute,evolve,compare,verify}``.

Configuration is a JSON object whose keys are the fields of ``RunConfig``.
Values are resolved in order: dataclass defaults, ``--preset`` (optionally
``--desk``), ``--config FILE``, then individual ``--field value`` flags.

Exit codes: 0 success, 2 accuracy failure, 3 numerical failure, 4 config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

EXIT_OK, EXIT_ACCURACY, EXIT_NUMERICAL, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("ratprop")


class ConfigError(ValueError):
    pass


class AccuracyFailure(RuntimeError):
    pass


@dataclass
class RunConfig:
    """All knobs of a run.  Times are in the model's nondimensional units."""

    model: str = "rsw"  # rsw | wave
    nx: int = 6  # elements per direction
    ny: int = 6
    p: int = 16  # Chebyshev nodes per element edge
    periodic: bool = True
    f: float = 1.0  # Coriolis frequency (rsw)
    c: float = 1.0  # gravity-wave speed (rsw)
    kappa: str = "variable-kappa"  # wave speed preset (wave): variable-kappa | unit
    tau: float = 3.0  # big time step
    n_steps: int = 1
    delta: float = 1e-10  # target accuracy of the rational approximation
    Lambda: str = "auto"  # spectral bandwidth, or "auto" to estimate from the data
    method: str = "rational"  # rational | rk4 | chebyshev
    filter_mode: str = "product_filter"  # product_filter | laplacian_projector | none
    initial: str = "rsw-test1"  # preset name or path to an N x 3 text file
    output: str = "out"
    seed: int = 0
    A: float = 0.0  # build-approx interval half width (0: tau * Lambda)
    dt_rk4: float = 2e-4
    dt_cheb: float = 1e-3
    degree: int = 12  # Chebyshev polynomial degree
    tol: float = 0.0  # accuracy threshold for exit code 2 (0: none)
    workers: int = 1
    reference: str = "auto"  # auto | fft | chebyshev | none


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}

# full-scale experiments; "desk" entries override for CI-sized runs
PRESETS = {
    "rsw-test1": {
        "full": dict(model="rsw", nx=6, ny=6, p=16, tau=3.0, n_steps=1, initial="rsw-test1",
                      dt_rk4=2e-4, dt_cheb=3.0 / 1150),
        "desk": dict(tau=0.75, filter_mode="laplacian_projector", dt_cheb=1e-3, tol=1e-8),
    },
    "rsw-test2": {
        "full": dict(model="rsw", nx=12, ny=12, p=16, tau=1.5, n_steps=1, initial="rsw-test2",
                      dt_rk4=2e-4, dt_cheb=1.5 / 575),
        "desk": dict(nx=6, ny=6, tau=0.5, filter_mode="laplacian_projector", dt_cheb=5e-4, tol=1e-7),
    },
    "rsw-longtime": {
        "full": dict(model="rsw", nx=12, ny=12, p=16, tau=1.0, n_steps=300, initial="rsw-gaussian"),
        "desk": dict(nx=6, ny=6),
    },
    "wave-test": {
        "full": dict(model="wave", nx=12, ny=12, p=16, tau=1.5, n_steps=1, initial="wave-test",
                      kappa="variable-kappa", dt_rk4=2e-4, dt_cheb=1.5 / 575, reference="chebyshev"),
        "desk": dict(nx=6, ny=6, tau=0.5, dt_cheb=5e-4, dt_rk4=2.5e-4, tol=1e-6),
    },
}


def preset_config(name, desk=False):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    d = dict(PRESETS[name]["full"])
    if desk:
        d.update(PRESETS[name]["desk"])
    return d


def _coerce(name, value):
    f = FIELDS[name]
    typ = f.type if isinstance(f.type, type) else {"int": int, "float": float, "str": str, "bool": bool}[f.type]
    if typ is bool and isinstance(value, str):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {value!r}")
    try:
        return typ(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot interpret {value!r} as {typ.__name__}")


def build_config(preset=None, desk=False, config_file=None, overrides=None):
    values = {}
    if preset:
        values.update(preset_config(preset, desk))
    elif desk:
        raise ConfigError("--desk needs --preset")
    if config_file:
        try:
            with open(config_file) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_file}: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(data) - set(FIELDS))
        if unknown:
            raise ConfigError(f"unknown config fields: {unknown}")
        values.update(data)
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    validate(cfg)
    return cfg


def validate(cfg):
    from .models import INITIAL_CONDITIONS, KAPPA_PRESETS
    from .evolve import FILTER_MODES

    if cfg.model not in ("rsw", "wave"):
        raise ConfigError(f"model must be rsw or wave, got {cfg.model!r}")
    if not cfg.tau > 0:
        raise ConfigError("tau must be positive")
    if not (1e-12 <= cfg.delta <= 1e-2):
        raise ConfigError(f"delta must lie in [1e-12, 1e-2], got {cfg.delta}")
    if cfg.method not in ("rational", "rk4", "chebyshev"):
        raise ConfigError(f"unknown method {cfg.method!r}")
    if cfg.filter_mode not in FILTER_MODES:
        raise ConfigError(f"filter_mode must be one of {FILTER_MODES}")
    if cfg.model == "wave" and cfg.kappa not in KAPPA_PRESETS:
        raise ConfigError(f"unknown kappa preset {cfg.kappa!r}")
    if cfg.p < 4 or cfg.nx < 2 or cfg.ny < 2:
        raise ConfigError("mesh needs p >= 4 and at least 2 elements per direction")
    if not cfg.periodic:
        raise ConfigError("only periodic meshes are supported")
    if cfg.n_steps < 0:
        raise ConfigError("n_steps must be nonnegative")
    if cfg.Lambda != "auto":
        try:
            if not float(cfg.Lambda) > 0:
                raise ValueError
        except ValueError:
            raise ConfigError(f"Lambda must be 'auto' or a positive number, got {cfg.Lambda!r}")
    if cfg.initial in INITIAL_CONDITIONS:
        if INITIAL_CONDITIONS[cfg.initial][0] != cfg.model:
            raise ConfigError(f"initial condition {cfg.initial!r} belongs to the other model")
    elif not os.path.isfile(cfg.initial):
        raise ConfigError(f"initial condition {cfg.initial!r} is neither a preset nor a file")
    if cfg.degree < 1 or cfg.dt_rk4 <= 0 or cfg.dt_cheb <= 0:
        raise ConfigError("degree, dt_rk4 and dt_cheb must be positive")
    if cfg.reference not in ("auto", "fft", "chebyshev", "none"):
        raise ConfigError(f"unknown reference {cfg.reference!r}")
    if cfg.reference == "fft" and cfg.model != "rsw":
        raise ConfigError("the FFT reference exists only for constant-coefficient RSW")


# ------------------------------------------------------------------ setup


def _setup(cfg):
    from . import models as md
    from . import specelem as se

    mesh = se.build_mesh(cfg.nx, cfg.ny, cfg.p)
    if cfg.model == "rsw":
        model = md.make_model("rsw", md.ModelParams(cfg.f, cfg.c))
    else:
        model = md.make_model("wave", md.ModelParams(kappa=md.KAPPA_PRESETS[cfg.kappa], name=cfg.kappa))
    if cfg.initial in md.INITIAL_CONDITIONS:
        s0 = md.initial_state(cfg.initial, mesh)
    else:
        s0 = md.load_state(cfg.initial, mesh, cfg.model)
    return mesh, model, s0


def _lambda(cfg, model, s0):
    from .evolve import estimate_bandwidth

    if cfg.Lambda == "auto":
        return estimate_bandwidth(model, s0, tau=cfg.tau)
    return float(cfg.Lambda)


def _reference_kind(cfg):
    if cfg.reference != "auto":
        return cfg.reference
    return "fft" if cfg.model == "rsw" else "chebyshev"


def _outdir(cfg):
    os.makedirs(cfg.output, exist_ok=True)
    return cfg.output


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o))


# ---------------------------------------------------------------- commands


def cmd_build_approx(cfg):
    from . import ratkit as rk
    from .plotting import approx_error_figure

    out = _outdir(cfg)
    if cfg.A > 0:
        A = cfg.A
    else:
        _, model, s0 = _setup(cfg)
        A = cfg.tau * _lambda(cfg, model, s0)
    report = {"A": A, "delta": cfg.delta, "filter_mode": cfg.filter_mode}
    if cfg.filter_mode == "product_filter":
        R, S, prod = rk.build_filtered_exp(A, cfg.delta)
        with open(os.path.join(out, "filter.txt"), "w") as fh:
            fh.write(rk.dumps(S.inner))
        used = prod
        report["filter_poles"] = int(S.inner.n_poles)
    else:
        R = rk.build_exp_approx(A, cfg.delta)
        used = R
    with open(os.path.join(out, "approx.txt"), "w") as fh:
        fh.write(rk.dumps(used))
    y = rk.sample_points(A, 32, rk.TWO_PI, far=False)
    err = np.abs(used(y) - np.exp(1j * y))
    measured = float(err.max())
    ymod = np.linspace(-3 * A, 3 * A, 20001)
    modulus = np.abs(used(ymod))
    report.update(
        measured_error=measured,
        n_poles=int(used.n_poles),
        conjugate_pairs=int(used.conjugate_pairs),
        half_poles=int(len(used.half_poles)),
        shift_classes=int(used.shift_classes),
        h=R.meta["h"],
        M=R.meta["M"],
        max_modulus_3A=float(modulus.max()),
    )
    _write_json(os.path.join(out, "approx_report.json"), report)
    ysub = y[:: max(1, len(y) // 4000)]
    np.savetxt(os.path.join(out, "approx_error.csv"),
               np.column_stack([ysub, np.abs(used(ysub) - np.exp(1j * ysub))]),
               delimiter=",", header="y,abs_error", comments="", fmt="%.10e")
    approx_error_figure(ymod, np.abs(used(ymod) - np.exp(1j * ymod)), modulus,
                        os.path.join(out, "approx_error.png"), f"exp(iy), A={A:.4g}")
    _print_report("build-approx", report)
    if measured > cfg.delta:
        raise AccuracyFailure(f"measured error {measured:.3e} exceeds delta {cfg.delta:g}")
    return report


def _operator_dir(cfg):
    return os.path.join(cfg.output, "operator")


def get_operator(cfg, mesh, model, s0, Lam, reuse=True):
    """Load a stored operator whose input hash matches, or build and store one."""
    from . import evolve as ev

    path = _operator_dir(cfg)
    k0 = None
    if cfg.filter_mode == "laplacian_projector":
        filt = ev.build_projector_filter(cfg.delta)
        k0 = ev.projector_k0(ev.data_wavenumber(s0), filt)
    key = ev.input_hash(model, mesh, cfg.tau, Lam, cfg.delta, cfg.filter_mode, k0)
    if reuse and os.path.exists(os.path.join(path, "manifest.json")):
        man = ev.read_manifest(path)
        if man["input_hash"] == key:
            t = time.perf_counter()
            op = ev.load_operator(path, key)
            op.stats["load_seconds"] = time.perf_counter() - t
            op.workers = cfg.workers
            return op, True
    op = ev.precompute(model, mesh, cfg.tau, Lam, cfg.delta, cfg.filter_mode, s0=s0, k0=k0,
                       workers=cfg.workers)
    ev.save_operator(op, path, key)
    return op, False


def cmd_precompute(cfg):
    out = _outdir(cfg)
    mesh, model, s0 = _setup(cfg)
    Lam = _lambda(cfg, model, s0)
    op, loaded = get_operator(cfg, mesh, model, s0, Lam)
    rows = []
    for (idx, conj), F in zip(op.classes, op.factors):
        a = op.approx.poles[idx[0]]
        rows.append((int(idx[0]), a.real, a.imag, len(idx), F.build_seconds, F.fill_nnz, F.nbytes))
    with open(os.path.join(out, "factor_stats.csv"), "w") as fh:
        fh.write("pole_index,alpha_re,alpha_im,members,factor_seconds,fill_nnz,bytes\n")
        for r in rows:
            fh.write("%d,%.17g,%.17g,%d,%.6f,%d,%d\n" % r)
    report = {
        "loaded_from_disk": loaded,
        "Lambda": Lam,
        "tau": cfg.tau,
        "n_poles": int(op.approx.n_poles),
        "half_poles": op.n_half,
        "solves_per_step": op.n_half,
        "factorizations": op.n_factorizations,
        "k0": op.k0,
    }
    report.update({k: v for k, v in op.stats.items() if k != "factor_seconds"})
    _write_json(os.path.join(out, "precompute_report.json"), report)
    _print_report("precompute", report)
    return report


def _state_file(path, s):
    np.savetxt(path, s.data.T, fmt="%.17g", header="  ".join(type(s).names))


def _reference_fn(cfg, model, s0, mesh):
    from . import reference as rf

    kind = _reference_kind(cfg)
    if kind == "fft":
        ref = rf.FourierReference(rf.default_grid(mesh), model.params)
        return lambda t: rf.rsw_exact(s0, t, model.params, ref=ref)
    if kind == "chebyshev":
        rho = rf.spectral_radius(model, mesh)
        return lambda t: rf.chebyshev_evolve(model, s0, t, _fit_dt(t, cfg.dt_cheb / 2), cfg.degree, rho)
    return None


def _fit_dt(T, dt):
    """Largest step ``<= dt`` that divides ``T``."""
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return T / n


def cmd_evolve(cfg):
    from . import evolve as ev
    from . import reference as rf
    from .plotting import error_series_figure

    out = _outdir(cfg)
    mesh, model, s0 = _setup(cfg)
    ref_fn = _reference_fn(cfg, model, s0, mesh) if cfg.reference != "none" else None
    rows = [(0, 0.0, rf.l2_norm(s0), 0.0)]
    if cfg.n_steps == 0:
        _state_file(os.path.join(out, "final_state.txt"), s0)
        rf.write_series(os.path.join(out, "trajectory.csv"), rows)
        return {"n_steps": 0}
    if cfg.method == "rational":
        Lam = _lambda(cfg, model, s0)
        op, loaded = get_operator(cfg, mesh, model, s0, Lam)

        def obs(i, s, info):
            e = rf.linf_error(s, ref_fn(i * cfg.tau)) if ref_fn is not None else float("nan")
            rows.append((i, e, info["l2"], info["wall_seconds"]))
            log.info("step %d  linf error %.3e  l2 %.12g", i, e, info["l2"])

        traj = ev.evolve_n(op, s0, cfg.n_steps, [obs])
        final = traj.final
    else:
        s = s0
        for i in range(1, cfg.n_steps + 1):
            t = time.perf_counter()
            if cfg.method == "rk4":
                s = rf.rk4_evolve(model, s, cfg.tau, _fit_dt(cfg.tau, cfg.dt_rk4))
            else:
                s = rf.chebyshev_evolve(model, s, cfg.tau, _fit_dt(cfg.tau, cfg.dt_cheb), cfg.degree)
            e = rf.linf_error(s, ref_fn(i * cfg.tau)) if ref_fn is not None else float("nan")
            rows.append((i, e, rf.l2_norm(s), time.perf_counter() - t))
        final = s
    rf.write_series(os.path.join(out, "trajectory.csv"), rows)
    _state_file(os.path.join(out, "final_state.txt"), final)
    errs = np.array([r[1] for r in rows[1:]])
    if ref_fn is not None:
        error_series_figure([r[0] for r in rows[1:]], errs, os.path.join(out, "trajectory.png"),
                            xlabel=f"step n (tau = {cfg.tau:g})")
    report = {"n_steps": cfg.n_steps, "final_error": float(errs[-1]) if errs.size else None,
              "max_error": float(np.nanmax(errs)) if ref_fn is not None else None}
    _write_json(os.path.join(out, "evolve_report.json"), report)
    _print_report("evolve", report)
    if cfg.tol > 0 and ref_fn is not None and report["max_error"] > cfg.tol:
        raise AccuracyFailure(f"max error {report['max_error']:.3e} exceeds tol {cfg.tol:g}")
    return report


def cmd_compare(cfg):
    """One step of length ``tau`` by each method against the reference."""
    from . import evolve as ev
    from . import reference as rf
    from .plotting import comparison_figure

    out = _outdir(cfg)
    mesh, model, s0 = _setup(cfg)
    T = cfg.tau
    kind = _reference_kind(cfg)
    rho = rf.spectral_radius(model, mesh)
    t = time.perf_counter()
    if kind == "fft":
        ref = rf.rsw_exact(s0, T, model.params)
        ref_note = "FFT exact"
    else:
        coarse = rf.chebyshev_evolve(model, s0, T, _fit_dt(T, cfg.dt_cheb), cfg.degree, rho)
        ref = rf.chebyshev_evolve(model, s0, T, _fit_dt(T, cfg.dt_cheb) / 2, cfg.degree, rho)
        ref_note = f"Chebyshev dt/2 (self-estimate {rf.linf_error(coarse, ref):.2e})"
    ref_seconds = time.perf_counter() - t
    rows = []
    Lam = _lambda(cfg, model, s0)
    t = time.perf_counter()
    op, loaded = get_operator(cfg, mesh, model, s0, Lam)
    pre = 0.0 if loaded else time.perf_counter() - t
    t = time.perf_counter()
    u = ev.step(op, s0)
    rows.append(("rational", rf.linf_error(u, ref), time.perf_counter() - t, pre))
    t = time.perf_counter()
    u = rf.rk4_evolve(model, s0, T, _fit_dt(T, cfg.dt_rk4))
    rows.append(("rk4", rf.linf_error(u, ref), time.perf_counter() - t, float("nan")))
    if kind == "fft":
        t = time.perf_counter()
        u = rf.chebyshev_evolve(model, s0, T, _fit_dt(T, cfg.dt_cheb), cfg.degree, rho)
        rows.append(("chebyshev", rf.linf_error(u, ref), time.perf_counter() - t, float("nan")))
    else:
        rows.append(("chebyshev", rf.linf_error(coarse, ref), ref_seconds / 3, float("nan")))
    with open(os.path.join(out, "comparison.csv"), "w") as fh:
        fh.write("method,linf_error,apply_seconds,precompute_seconds\n")
        for r in rows:
            fh.write("%s,%.6e,%.4f,%.4f\n" % r)
    comparison_figure([r[0] for r in rows], np.array([r[1] for r in rows]), np.array([r[2] for r in rows]),
                      os.path.join(out, "comparison.png"), f"one step, t = {T:g}; reference: {ref_note}")
    report = {r[0]: {"linf_error": r[1], "apply_seconds": r[2], "precompute_seconds": r[3]} for r in rows}
    report["reference"] = ref_note
    report["half_poles"] = op.n_half
    _write_json(os.path.join(out, "comparison.json"), report)
    _print_report("compare", report)
    if cfg.tol > 0 and rows[0][1] > cfg.tol:
        raise AccuracyFailure(f"rational error {rows[0][1]:.3e} exceeds tol {cfg.tol:g}")
    return report


def cmd_verify(cfg):
    from .checks import run_checks

    results = run_checks(cfg.seed)
    out = _outdir(cfg)
    with open(os.path.join(out, "verify.csv"), "w") as fh:
        fh.write("check,value,threshold,passed\n")
        for r in results:
            fh.write(f"{r.name},{r.value:.3e},{r.threshold:.3e},{int(r.passed)}\n")
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.value:.3e} (threshold {r.threshold:.1e})")
    if not all(r.passed for r in results):
        raise AccuracyFailure("some invariant checks failed")
    return results


def _print_report(name, report):
    print(f"[{name}]")
    for k, v in report.items():
        print(f"  {k}: {v}")


COMMANDS = {
    "build-approx": cmd_build_approx,
    "precompute": cmd_precompute,
    "evolve": cmd_evolve,
    "compare": cmd_compare,
    "verify": cmd_verify,
}


def make_parser():
    ap = argparse.ArgumentParser(prog="ratprop", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--preset", help=f"one of {sorted(PRESETS)}")
    ap.add_argument("--desk", action="store_true", help="use the reduced desk-scale variant of the preset")
    ap.add_argument("--config", help="JSON file with RunConfig fields")
    ap.add_argument("-v", "--verbose", action="store_true")
    for name, f in FIELDS.items():
        ap.add_argument("--" + name.replace("_", "-"), dest=name, default=None,
                        help=f"(default {f.default!r})")
    return ap


def main(argv=None):
    from . import evolve as ev
    from . import ratkit as rk
    from . import reference as rf
    from . import specelem as se

    ap = make_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {k: getattr(args, k) for k in FIELDS}
    try:
        cfg = build_config(args.preset, args.desk, args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](cfg)
    except (AccuracyFailure, rk.ApproximationError) as exc:
        print(f"accuracy failure: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    except (se.SingularShiftError, ev.InstabilityError, rf.NumericalFailure, ev.OperatorFileError,
            rk.PoleCollisionError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
