"""Matplotlib renderings of density grids, responses, and rate tables.

Figures are written next to the delimited outputs by the CLI report
path. PNG metadata is stripped so reruns stay byte-identical.
"""
from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .canonical import DensityField  # noqa: E402
from .consensus import ConsensusOutcome  # noqa: E402
from .filterdesign import FilterSpec, region_mask, response  # noqa: E402

_SAVE_OPTS = dict(dpi=150, metadata={"Software": None})


def _save(fig, path):
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def density_figure(fld: DensityField, path, *, kappa: float | None = None,
                   tau: float | None = None, tau_relative: bool = True,
                   title: str = "") -> None:
    """Heatmap of a density grid, with the filtering-region boundary."""
    g = fld.grid
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    mesh = ax.pcolormesh(g.t_axis(), g.s_axis(), fld.values.T,
                         shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="density")
    if kappa is not None and tau is not None:
        try:
            mask = region_mask(fld, kappa, tau, tau_relative=tau_relative)
            ax.contour(g.t_axis(), g.s_axis(), mask.T.astype(float),
                       levels=[0.5], colors="k", linewidths=1.0)
        except ValueError:
            pass
    ax.plot([1.0], [0.0], marker="+", color="w", markersize=8)
    ax.set_xlabel("real part")
    ax.set_ylabel("imaginary part")
    ax.set_title(title)
    ax.set_aspect("equal")
    fig.tight_layout()
    _save(fig, path)


def response_figure(filt: FilterSpec, fld: DensityField, path, *,
                    kappa: float | None = None, tau: float | None = None,
                    tau_relative: bool = True, title: str = "") -> None:
    """Log response magnitude of a filter over the density grid.

    Polynomial zeros are marked with open circles, matching how designed
    responses are usually inspected against the filtering region.
    """
    g = fld.grid
    zs = g.points()
    mag = np.abs(np.polyval(filt.coefficients[::-1], zs))
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    with np.errstate(divide="ignore"):
        logmag = np.log10(np.maximum(mag, 1e-12))
    mesh = ax.pcolormesh(g.t_axis(), g.s_axis(), logmag.T,
                         shading="nearest", cmap="magma")
    fig.colorbar(mesh, ax=ax, label="log10 |response|")
    if kappa is not None and tau is not None:
        try:
            mask = region_mask(fld, kappa, tau, tau_relative=tau_relative)
            ax.contour(g.t_axis(), g.s_axis(), mask.T.astype(float),
                       levels=[0.5], colors="k", linewidths=1.0)
        except ValueError:
            pass
    coeffs = filt.coefficients
    if filt.degree >= 1 and np.any(coeffs[1:] != 0.0):
        zeros = np.roots(coeffs[::-1])
        ax.plot(zeros.real, zeros.imag, "o", markerfacecolor="none",
                markeredgecolor="w", markersize=7)
    ax.set_xlim(g.t_min, g.t_max)
    ax.set_ylim(g.s_min, g.s_max)
    ax.set_xlabel("real part")
    ax.set_ylabel("imaginary part")
    ax.set_title(title or f"response, degree {filt.degree}")
    ax.set_aspect("equal")
    fig.tight_layout()
    _save(fig, path)


def rates_figure(outcome: ConsensusOutcome, path, *, title: str = "") -> None:
    """Median per-degree rates with interquartile bands, one line per method."""
    methods = []
    for s in outcome.summary:
        if s.method not in methods:
            methods.append(s.method)
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    def finite(x):
        return x if np.isfinite(x) else np.nan

    for method in methods:
        entries = sorted((s for s in outcome.summary if s.method == method),
                         key=lambda s: s.degree)
        degrees = [s.degree for s in entries]
        med = [finite(s.median) for s in entries]
        lo = [finite(s.q25) for s in entries]
        hi = [finite(s.q75) for s in entries]
        line, = ax.plot(degrees, med, marker="o", label=method)
        ax.fill_between(degrees, lo, hi, alpha=0.2, color=line.get_color())
    ax.set_xlabel("filter degree")
    ax.set_ylabel("per-degree log convergence rate")
    ax.legend()
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
