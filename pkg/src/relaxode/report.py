"""CSV export and figure rendering for runs, studies, and comparisons.

CSV files are the machine-readable contract: UTF-8, '.' decimal
separator, 17 significant digits.  Figures are rendered next to the CSV
files when requested.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def write_run_csv(path, result) -> Path:
    """Header: t, gamma, eta_0, ... plus optional state columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_eta = result.etas.shape[1]
    header = ["t", "gamma"] + [f"eta_{i}" for i in range(n_eta)]
    if result.taus is not None:
        header.append("tau")
    if result.states is not None:
        header += [f"u_{i}" for i in range(result.states.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(result.times.size):
            row = [fmt(result.times[i]), fmt(result.gammas[i])]
            row += [fmt(v) for v in result.etas[i]]
            if result.taus is not None:
                row.append(fmt(result.taus[i]))
            if result.states is not None:
                row += [fmt(v) for v in result.states[i]]
            writer.writerow(row)
    return path


def write_summary_csv(path, rows) -> Path:
    """Convergence-study table: dt, error, eoc, max|gamma-1|, status."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dt", "error", "eoc", "max_gamma_dev", "status"])
        for r in rows:
            writer.writerow([fmt(r.dt), fmt(r.error),
                             fmt(r.eoc) if r.eoc is not None else "",
                             fmt(r.max_gamma_dev), r.status])
    return path


def write_compare_csv(path, results) -> Path:
    """Joined per-mode series, aligned by step index."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    modes = list(results)
    n_eta = results[modes[0]].etas.shape[1]
    header = ["step"]
    for mode in modes:
        header += [f"{mode}_t", f"{mode}_gamma"]
        header += [f"{mode}_eta_{i}" for i in range(n_eta)]
    n_rows = max(r.times.size for r in results.values())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n_rows):
            row = [str(i)]
            for mode in modes:
                r = results[mode]
                if i < r.times.size:
                    row += [fmt(r.times[i]), fmt(r.gammas[i])]
                    row += [fmt(v) for v in r.etas[i]]
                else:
                    row += [""] * (2 + n_eta)
            writer.writerow(row)
    return path


def _functional_names(problem):
    return [fn.name for fn in problem.functionals]


def plot_run(path, result, problem=None) -> Path:
    """Functional drift and relaxation parameter over the run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = (_functional_names(problem) if problem is not None
             else [f"eta_{i}" for i in range(result.etas.shape[1])])
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7.0, 6.0), sharex=True)
    for i, name in enumerate(names):
        ax0.plot(result.times, result.etas[:, i] - result.etas[0, i],
                 label=name)
    ax0.set_ylabel("functional drift")
    ax0.legend(loc="best", fontsize="small")
    ax0.grid(alpha=0.3)
    ax1.plot(result.times, result.gammas - 1.0, ".", markersize=3)
    ax1.set_xlabel("t")
    ax1.set_ylabel("gamma - 1")
    ax1.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_convergence(path, rows, label="") -> Path:
    """log-log error against step size with order guide lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ok = [r for r in rows if r.status == "ok" and np.isfinite(r.error)
          and r.error > 0.0]
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    if ok:
        dts = np.array([r.dt for r in ok])
        errs = np.array([r.error for r in ok])
        ax.loglog(dts, errs, "o-", label=label or "error")
        for order in (2, 3, 4):
            guide = errs[0] * (dts / dts[0]) ** order
            ax.loglog(dts, guide, "--", alpha=0.4, label=f"order {order}")
    ax.set_xlabel("dt")
    ax.set_ylabel("final-state error")
    ax.legend(loc="best", fontsize="small")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_compare(path, results, problem=None) -> Path:
    """Per-mode functional drift, one panel per functional."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    first = next(iter(results.values()))
    n_eta = first.etas.shape[1]
    names = (_functional_names(problem) if problem is not None
             else [f"eta_{i}" for i in range(n_eta)])
    fig, axes = plt.subplots(n_eta, 1, figsize=(7.0, 3.0 * n_eta),
                             sharex=True, squeeze=False)
    for i in range(n_eta):
        ax = axes[i, 0]
        for mode, r in results.items():
            ax.plot(r.times, r.etas[:, i] - r.etas[0, i], label=mode)
        ax.set_ylabel(f"{names[i]} drift")
        ax.grid(alpha=0.3)
        ax.legend(loc="best", fontsize="small")
    axes[-1, 0].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
