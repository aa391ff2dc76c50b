"""Figures written next to the CSV outputs (Agg backend, PNG files)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def approx_error_figure(y, err, modulus, path, title="rational approximation"):
    """Log error and modulus against the (2 pi scaled) real variable."""
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    a1.semilogy(y, np.maximum(err, 1e-18), lw=0.6)
    a1.set_ylabel("|R(iy) - target|")
    a1.set_title(title)
    a2.plot(y, modulus, lw=0.6)
    a2.axhline(1.0, color="k", lw=0.5, ls=":")
    a2.set_ylabel("|R(iy)|")
    a2.set_xlabel("y")
    return _save(fig, path)


def error_series_figure(steps, errors, path, xlabel="step n", title="L-infinity error"):
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.semilogy(steps, np.maximum(errors, 1e-18), "o-", ms=2, lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("L-infinity error")
    ax.set_title(title)
    ax.grid(True, which="both", lw=0.3)
    return _save(fig, path)


def comparison_figure(methods, errors, times, path, title="method comparison"):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.8))
    x = np.arange(len(methods))
    a1.bar(x, np.maximum(errors, 1e-18))
    a1.set_yscale("log")
    a1.set_xticks(x, methods, rotation=20)
    a1.set_ylabel("L-infinity error")
    a2.bar(x, times)
    a2.set_xticks(x, methods, rotation=20)
    a2.set_ylabel("apply time (s)")
    fig.suptitle(title)
    return _save(fig, path)


def poles_figure(poles, path, title="poles"):
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(poles.real, poles.imag, ".", ms=2)
    ax.set_xlabel("Re alpha")
    ax.set_ylabel("Im alpha")
    ax.set_title(title)
    return _save(fig, path)


def scaling_figure(N, factor_times, solve_times, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(N, factor_times, "o-", label="factor")
    ax.loglog(N, solve_times, "s-", label="solve")
    ax.set_xlabel("N")
    ax.set_ylabel("seconds")
    ax.legend()
    ax.grid(True, which="both", lw=0.3)
    return _save(fig, path)
