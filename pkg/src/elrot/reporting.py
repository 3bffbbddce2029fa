"""Diagnostics CSV emission and companion figures.

The CSV is the machine contract: fixed header, one row per cadence,
every float at 17 significant digits so identical runs produce identical
bytes. Figures are rendered next to the delimited output for quick
inspection; they carry no additional data.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

CSV_COLUMNS = [
    "t", "rossby", "g", "grad_u_int", "dz_ell_max", "bound_14rho",
    "dz_lambda_max", "bound_9rho", "c_g", "weber_rel", "cauchy_rel",
    "factorization_abs", "d2_rel", "energy", "enstrophy", "reset_flag",
]


@dataclass
class DiagnosticsRecord:
    """One cadence row of certified quantities and identity residuals."""

    t: float
    rossby: float
    g: float
    grad_u_int: float
    dz_ell_max: float
    bound_14rho: float
    dz_lambda_max: float
    bound_9rho: float
    c_g: float
    weber_rel: float
    cauchy_rel: float
    factorization_abs: float
    d2_rel: float
    energy: float
    enstrophy: float
    reset_flag: int


assert [f.name for f in fields(DiagnosticsRecord)] == CSV_COLUMNS


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def emit_diagnostics(records: list[DiagnosticsRecord], path) -> None:
    """Write the diagnostics table; records must be time-ordered."""
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        lines.append(",".join(_fmt(getattr(rec, c)) for c in CSV_COLUMNS))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_diagnostics(path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.ndim == 0:
        data = data.reshape(1)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


# ---------------------------------------------------------------------------
# figures


def _style(ax, xlabel, ylabel, title=None):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=10)
    ax.grid(True, alpha=0.3)


def render_run_figures(csv_path, out_dir) -> list[str]:
    """Render the bound and residual time-series figures next to the CSV."""
    d = read_diagnostics(csv_path)
    t = d["t"]
    written = []

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    ax = axes[0]
    ax.plot(t, d["dz_ell_max"], label="sup |dz ell|", color="tab:blue")
    ax.plot(t, d["bound_14rho"], "--", label="14 rho", color="tab:red")
    ax.plot(t, d["c_g"], ":", label="sharper threshold", color="tab:orange")
    _style(ax, "t", "vertical displacement gradient", "inverse-map bound")
    ax.legend(fontsize=8)
    ax = axes[1]
    ax.plot(t, d["dz_lambda_max"], label="sup |d_a3 lambda|", color="tab:blue")
    ax.plot(t, d["bound_9rho"], "--", label="9 rho", color="tab:red")
    _style(ax, "t", "vertical Lagrangian gradient", "direct-map bound")
    ax.legend(fontsize=8)
    for tr in np.nonzero(d["reset_flag"] > 0)[0]:
        for ax in axes:
            ax.axvline(t[tr], color="gray", alpha=0.3, lw=0.8)
    fig.tight_layout()
    p = os.path.join(out_dir, "bounds.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    written.append(p)

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    ax = axes[0]
    for col, lab in (
        ("weber_rel", "weber"), ("cauchy_rel", "cauchy"),
        ("d2_rel", "block det"), ("factorization_abs", "factorization"),
    ):
        vals = np.maximum(d[col], 1e-300)
        ax.semilogy(t, vals, label=lab)
    _style(ax, "t", "residual", "identity residuals")
    ax.legend(fontsize=8)
    ax = axes[1]
    ax.plot(t, d["rossby"], label="rossby")
    ax.plot(t, d["g"], label="g")
    ax.plot(t, d["grad_u_int"], label="int ||grad u||")
    _style(ax, "t", "window quantities", "hypotheses")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = os.path.join(out_dir, "residuals.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(t, d["energy"], label="energy")
    ax.plot(t, d["enstrophy"], label="enstrophy")
    _style(ax, "t", "integral", "energy / enstrophy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = os.path.join(out_dir, "energy.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    written.append(p)
    return written


def render_sweep_figure(rows, slope, out_dir) -> str:
    """Log-log scaling of the vertical gradients against 1/Omega."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    usable = [r for r in rows if r.failed is None]
    om = np.array([r.omega for r in usable])
    ax = axes[0]
    ax.loglog(1.0 / om, [r.dz_ell_sup for r in usable], "o-", label="sup |dz ell|")
    ax.loglog(1.0 / om, [r.dz_lambda_sup for r in usable], "s-",
              label="sup |d_a3 lambda|")
    if slope is not None and len(usable) >= 2:
        x = 1.0 / om
        y0 = usable[0].dz_ell_sup
        ax.loglog(x, y0 * (x / x[0]) ** slope, "--", color="gray",
                  label=f"slope {slope:.2f}")
    _style(ax, "1/Omega", "sup norm", "vertical-gradient scaling")
    ax.legend(fontsize=8)
    ax = axes[1]
    ax.semilogx(om, [r.a3_var for r in usable], "o-")
    _style(ax, "Omega", "a3-variation of lambda", "two-dimensionalization")
    fig.tight_layout()
    p = os.path.join(out_dir, "sweep.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    return p


def render_taylor_proudman_figure(omegas, residuals, gap_changes, out_dir) -> str:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.semilogy(omegas, np.maximum(residuals, 1e-300), "o-",
                label="sup |d_a3 lambda_3|")
    ax.semilogy(omegas, np.maximum(gap_changes, 1e-300), "s-",
                label="max pair gap change")
    ax.axhline(1e-8, color="tab:red", ls="--", lw=0.8, label="1e-8")
    ax.set_xscale("log")
    _style(ax, "Omega", "steady-flow vertical transport", "nonlinear Taylor-Proudman")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = os.path.join(out_dir, "taylor_proudman.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    return p
