"""Delimited and JSON output formats, with byte-stable serialization.

Density grids go to `t,s,density` CSV files with a JSON sidecar holding
the grid geometry and run parameters; rate tables and summaries go to
flat CSVs. Floats are written with repr so files round-trip exactly and
reruns with identical inputs are byte-identical.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .canonical import DensityField, GridSpec, field_mass
from .consensus import ConsensusOutcome
from .filterdesign import FilterSpec


def _fmt(x: float) -> str:
    return repr(float(x))


def write_density_csv(fld: DensityField, path) -> None:
    """Row-major `t,s,density` grid dump."""
    g = fld.grid
    ts = g.t_axis()
    ss = g.s_axis()
    lines = ["t,s,density"]
    for i in range(g.n_t):
        for j in range(g.n_s):
            lines.append(f"{_fmt(ts[i])},{_fmt(ss[j])},{_fmt(fld.values[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def density_sidecar(fld: DensityField, *, params: dict | None = None) -> dict:
    g = fld.grid
    meta = {
        "t_min": g.t_min, "t_max": g.t_max,
        "s_min": g.s_min, "s_max": g.s_max,
        "n_t": g.n_t, "n_s": g.n_s,
        "beta": fld.beta,
        "scale": fld.scale,
        "mass": field_mass(fld),
        "masked_points": int(np.count_nonzero(~fld.support_mask)),
        "diagnostics": {k: v for k, v in sorted(fld.diagnostics.items())},
        "version": __version__,
    }
    if params:
        meta["params"] = params
    return meta


def write_density_sidecar(fld: DensityField, path, *,
                          params: dict | None = None) -> None:
    write_json(density_sidecar(fld, params=params), path)


def read_density_csv(csv_path, sidecar_path=None) -> DensityField:
    """Rebuild a density field from the CSV + sidecar pair."""
    csv_path = Path(csv_path)
    if sidecar_path is None:
        sidecar_path = csv_path.with_suffix(".json")
    meta = json.loads(Path(sidecar_path).read_text())
    grid = GridSpec(t_min=meta["t_min"], t_max=meta["t_max"],
                    s_min=meta["s_min"], s_max=meta["s_max"],
                    n_t=meta["n_t"], n_s=meta["n_s"])
    raw = csv_path.read_text().strip().split("\n")
    if raw[0] != "t,s,density":
        raise ValueError(f"{csv_path} is not a density grid CSV")
    body = raw[1:]
    if len(body) != grid.n_t * grid.n_s:
        raise ValueError(f"{csv_path}: expected {grid.n_t * grid.n_s} rows, "
                         f"found {len(body)}")
    values = np.array([float(line.rsplit(",", 1)[1]) for line in body])
    values = values.reshape(grid.n_t, grid.n_s)
    return DensityField(grid=grid, values=values, beta=meta["beta"],
                        support_mask=values > -np.inf, scale=meta["scale"],
                        diagnostics=dict(meta.get("diagnostics", {})))


def write_rates_csv(outcome: ConsensusOutcome, path) -> None:
    lines = ["trial,method,degree,rate"]
    for r in outcome.rows:
        lines.append(f"{r.trial_seed},{r.method},{r.degree},{_fmt(r.rate)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary_csv(outcome: ConsensusOutcome, path) -> None:
    lines = ["method,degree,median,q25,q75,excluded_trials"]
    for s in outcome.summary:
        lines.append(f"{s.method},{s.degree},{_fmt(s.median)},{_fmt(s.q25)},"
                     f"{_fmt(s.q75)},{s.excluded_trials}")
    Path(path).write_text("\n".join(lines) + "\n")


def filter_payload(filt: FilterSpec, *, kappa=None, tau=None,
                   extra: dict | None = None) -> dict:
    payload = {
        "degree": filt.degree,
        "coefficients": [float(c) for c in filt.coefficients],
        "epsilon": None if np.isnan(filt.epsilon) else float(filt.epsilon),
        "method": filt.provenance,
        "kappa": kappa,
        "tau": tau,
        "degenerate": filt.degenerate,
        "version": __version__,
    }
    if extra:
        payload.update(extra)
    return payload


def write_filter_json(filt: FilterSpec, path, *, kappa=None, tau=None,
                      extra: dict | None = None) -> None:
    write_json(filter_payload(filt, kappa=kappa, tau=tau, extra=extra), path)


def read_filter_json(path) -> FilterSpec:
    meta = json.loads(Path(path).read_text())
    eps = meta.get("epsilon")
    return FilterSpec(degree=int(meta["degree"]),
                      coefficients=np.array(meta["coefficients"]),
                      epsilon=float("nan") if eps is None else float(eps),
                      provenance=meta.get("method", "proposed"),
                      degenerate=bool(meta.get("degenerate", False)))


def write_json(payload: dict, path) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2,
                                     allow_nan=False) + "\n")


def write_manifest(out_dir, command: str, seed, params: dict,
                   files: list[str]) -> None:
    payload = {
        "command": command,
        "seed": seed,
        "params": params,
        "files": sorted(files),
        "version": __version__,
    }
    write_json(payload, Path(out_dir) / "manifest.json")
