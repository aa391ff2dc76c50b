"""Fast invariant checks run by ``ratprop verify`` (small meshes, seconds)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import evolve as ev
from . import models as md
from . import ratkit as rk
from . import reference as rf
from . import specelem as se


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.threshold)


def check_table():
    gr = rk.gaussian_rational_table()
    x = np.linspace(-50, 50, 10**5)
    return CheckResult("table gaussian sup error", float(np.max(np.abs(gr(x) - rk.psi(x)))), 1e-12)


def check_exp_approx():
    R = rk.build_exp_approx(56 * math.pi, 1e-10)
    y = rk.sample_points(R.half_interval, 32, rk.TWO_PI, far=False)
    return CheckResult("exp approximation on [-56pi, 56pi]", float(np.max(np.abs(R(y) - np.exp(1j * y)))), 1e-10)


def check_phi():
    x = np.linspace(-191, 191, 2 * 10**4)
    worst = 0.0
    for j in (1, 2):
        gs = rk.gaussian_coeffs_phi(j, 1.0, 200)
        worst = max(worst, float(np.max(np.abs(gs(x) - gs.target_values(x)))))
    return CheckResult("phi Gaussian sums, h=1, M=200", worst, 1e-12)


def check_filter():
    R, S, prod = rk.build_filtered_exp(20.0, 1e-10)
    return CheckResult("filtered approximation max modulus - 1", rk.max_modulus(prod, 20.0, 2 * 10**5) - 1.0, 1e-10)


def _small(name, seed):
    mesh = se.build_mesh(4, 4, 12)
    # unit kappa: the variable speed needs a finer mesh than a quick check allows
    model = md.make_model(name, md.ModelParams() if name == "wave" else None)
    s = md.random_smooth_state(name, mesh, np.random.default_rng(seed), kmax=2)
    return mesh, model, s


def check_resolvent(name, seed):
    mesh, model, s = _small(name, seed)
    worst = 0.0
    for alpha in (2.0 + 7.0j, -3.0 + 20.0j):
        F = model.factor(alpha, 1.0, mesh)
        w = model.resolvent(F, alpha, 1.0, s)
        d = model.forward(w).data - alpha * w.data - s.data
        worst = max(worst, float(np.max(np.abs(d)) / np.max(np.abs(s.data))))
    return CheckResult(f"{name} resolvent defect (4x4, p=12)", worst, 1e-7)


def check_conjugation(seed):
    mesh, model, s = _small("rsw", seed)
    alpha = 1.5 + 9.0j
    F = model.factor(alpha, 1.0, mesh)
    Fc = model.factor(np.conj(alpha), 1.0, mesh)
    a = model.resolvent(Fc, np.conj(alpha), 1.0, s)
    b = np.conj(model.resolvent(F, alpha, 1.0, s).data)
    return CheckResult("conjugation identity", float(np.max(np.abs(a.data - b))), 1e-10)


def check_step(seed):
    mesh, model, s = _small("rsw", seed)
    s2 = md.random_smooth_state("rsw", mesh, np.random.default_rng(seed + 1), kmax=2)
    op = ev.precompute(model, mesh, 0.3, 20.0, 1e-10)
    lin = rf.linf_error(ev.step(op, 2 * s - 3 * s2), 2 * ev.step(op, s) - 3 * ev.step(op, s2))
    err = rf.linf_error(ev.step(op, s), rf.rsw_exact(s, 0.3, model.params))
    return [CheckResult("step linearity", lin, 1e-10), CheckResult("one step vs FFT exact (4x4, p=12)", err, 1e-7)]


def check_semigroup(seed):
    mesh = se.build_mesh(6, 6, 16)
    model = md.make_model("rsw")
    s = md.random_smooth_state("rsw", mesh, np.random.default_rng(seed), kmax=3)
    a = rf.rsw_exact(rf.rsw_exact(s, 0.3, model.params), 0.5, model.params)
    b = rf.rsw_exact(s, 0.8, model.params)
    return CheckResult("FFT reference semigroup", rf.linf_error(a, b), 1e-10)


def run_checks(seed=0):
    out = [check_table(), check_exp_approx(), check_phi(), check_filter()]
    out += [check_resolvent("rsw", seed), check_resolvent("wave", seed), check_conjugation(seed)]
    out += check_step(seed)
    out.append(check_semigroup(seed))
    return out
