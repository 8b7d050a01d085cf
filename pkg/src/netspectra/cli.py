"""Command-line pipeline: model config -> density -> filters -> simulation.

Exit codes: 0 on success, 1 on numerical failure (solver divergence,
empty filtering region, failed validation), 2 on configuration errors
(bad paths, malformed JSON, parameters out of range).
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import click
import numpy as np

from . import __version__
from .canonical import (GridError, GridSpec, SolverError, auto_grid,
                        density_field, field_mass,
                        transform_to_iteration)
from .consensus import PerronError, empirical_spectrum, monte_carlo
from .filterdesign import (DesignError, EmptyRegionError, design_filter,
                           extract_region)
from .netmodel import (BlockModel, ModelError, build_model, expected_row_sum,
                       mean_matrix, mean_spectrum, variance_profile)
from . import figures, reporting

WORKERS_ENV = "NETSPECTRA_WORKERS"


class ConfigError(click.ClickException):
    exit_code = 2


class NumericalFailure(click.ClickException):
    exit_code = 1


def _load_model(path: str) -> BlockModel:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") \
            from exc
    try:
        return build_model(raw)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_grid(text: str | None):
    """"NTxNS" or "NTxNS:tmin,tmax,smin,smax"; None keeps the auto grid."""
    if text is None:
        return None
    try:
        if ":" in text:
            res, box = text.split(":", 1)
            bounds = [float(x) for x in box.split(",")]
            if len(bounds) != 4:
                raise ValueError("need 4 bounds")
        else:
            res, bounds = text, None
        n_t, n_s = (int(x) for x in res.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"cannot parse --grid {text!r}: {exc}") from exc
    return (n_t, n_s, bounds)


def _resolve_grid(parsed, spectrum, v_row) -> GridSpec:
    try:
        if parsed is None:
            return auto_grid(spectrum, v_row)
        n_t, n_s, bounds = parsed
        if bounds is None:
            return auto_grid(spectrum, v_row, n_t=n_t, n_s=n_s)
        return GridSpec(t_min=bounds[0], t_max=bounds[1], s_min=bounds[2],
                        s_max=bounds[3], n_t=n_t, n_s=n_s)
    except GridError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_tau(text: str):
    try:
        if text.startswith("rel:"):
            return float(text[4:]), True
        if text.startswith("abs:"):
            return float(text[4:]), False
        return float(text), False
    except ValueError as exc:
        raise ConfigError(f"cannot parse --tau {text!r}") from exc


def _parse_degrees(text: str):
    try:
        if ".." in text:
            lo, hi = text.split("..")
            degrees = list(range(int(lo), int(hi) + 1))
        else:
            degrees = [int(x) for x in text.split(",")]
        if not degrees or min(degrees) < 1:
            raise ValueError("degrees must be >= 1")
        return degrees
    except ValueError as exc:
        raise ConfigError(f"cannot parse --degrees {text!r}: {exc}") from exc


def _resolve_workers(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") \
                from exc
    return 1


def _require_solver_class(model: BlockModel) -> None:
    prof = variance_profile(model)
    if not (model.transitive and model.normal_theta and prof.uniform):
        raise ConfigError(
            "model is outside the supported solver class (needs cyclic "
            "node-transitive structure with normal theta); run `validate` "
            "for details")


def _scaled_density(model, grid_text, beta, umax, nodes, workers):
    _require_solver_class(model)
    spectrum = mean_spectrum(model, scale="scaled")
    prof = variance_profile(model)
    grid = _resolve_grid(_parse_grid(grid_text), spectrum, prof.row_sum)
    try:
        return density_field(prof.row_sum, prof.col_sum, spectrum, grid,
                             beta=beta, u_max=umax, n_nodes=nodes,
                             workers=workers)
    except SolverError as exc:
        raise NumericalFailure(str(exc)) from exc


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


@click.group()
@click.version_option(version=__version__)
def cli() -> None:
    """Spectral density approximation and consensus filter design for
    random directed networks."""


@cli.command()
@click.option("--config", required=True, help="Model config JSON.")
@click.option("--grid", "grid_text", default=None,
              help='Grid as "NTxNS" or "NTxNS:tmin,tmax,smin,smax".')
@click.option("--beta", default=1e-6, show_default=True,
              help="Lower regularizer cutoff.")
@click.option("--umax", default=1e2, show_default=True,
              help="Upper integration limit.")
@click.option("--nodes", default=200, show_default=True,
              help="Quadrature node count.")
@click.option("--kappa", default=0.1, show_default=True,
              help="Exclusion radius around 1 (figure overlay).")
@click.option("--tau", "tau_text", default="rel:0.02", show_default=True,
              help="Density threshold, rel:FRAC or absolute.")
@click.option("--workers", type=int, default=None,
              help=f"Worker processes (default ${WORKERS_ENV} or 1).")
@click.option("--seed", default=0, show_default=True,
              help="Recorded in outputs (the density itself is exact).")
@click.option("--out", default=".", show_default=True, help="Output directory.")
@click.option("--figures/--no-figures", "render", default=True,
              show_default=True)
def density(config, grid_text, beta, umax, nodes, kappa, tau_text, workers,
            seed, out, render):
    """Approximate spectral density grids (scaled-adjacency and iteration)."""
    model = _load_model(config)
    workers = _resolve_workers(workers)
    tau, tau_rel = _parse_tau(tau_text)
    out = _out_dir(out)
    fld = _scaled_density(model, grid_text, beta, umax, nodes, workers)
    fld_w = transform_to_iteration(fld, model.alpha)
    params = {"model": model.config(), "beta": beta, "umax": umax,
              "nodes": nodes, "grid": grid_text, "kappa": kappa,
              "tau": tau_text, "workers": workers}
    files = []
    for name, f in (("density_scaled", fld), ("density_iteration", fld_w)):
        reporting.write_density_csv(f, out / f"{name}.csv")
        reporting.write_density_sidecar(
            f, out / f"{name}.json",
            params={**params, "seed": seed})
        files += [f"{name}.csv", f"{name}.json"]
        if render:
            figures.density_figure(f, out / f"{name}.png", kappa=kappa,
                                   tau=tau, tau_relative=tau_rel,
                                   title=f"{name} (mass {field_mass(f):.3f})")
            files.append(f"{name}.png")
    reporting.write_manifest(out, "density", seed, params, files)
    click.echo(f"density: mass={field_mass(fld_w):.4f} "
               f"masked={int(np.count_nonzero(~fld_w.support_mask))} -> {out}")


@cli.command()
@click.option("--config", required=True, help="Model config JSON.")
@click.option("--trials", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--grid", "grid_text", default=None,
              help='Grid as "NTxNS" or "NTxNS:tmin,tmax,smin,smax".')
@click.option("--kappa", default=0.1, show_default=True)
@click.option("--tau", "tau_text", default="rel:0.02", show_default=True)
@click.option("--out", default=".", show_default=True)
@click.option("--figures/--no-figures", "render", default=True,
              show_default=True)
def empirical(config, trials, seed, grid_text, kappa, tau_text, out, render):
    """Empirical eigenvalue histogram of sampled iteration matrices."""
    model = _load_model(config)
    tau, tau_rel = _parse_tau(tau_text)
    out = _out_dir(out)
    parsed = _parse_grid(grid_text)
    grid = None
    if parsed is not None:
        spectrum = mean_spectrum(model, scale="iteration")
        prof = variance_profile(model)
        grid = _resolve_grid(parsed, spectrum,
                             prof.row_sum * model.alpha**2)
    fld = empirical_spectrum(model, trials, grid=grid, master_seed=seed)
    params = {"model": model.config(), "trials": trials,
              "grid": grid_text, "kappa": kappa, "tau": tau_text}
    reporting.write_density_csv(fld, out / "empirical.csv")
    reporting.write_density_sidecar(fld, out / "empirical.json",
                                    params={**params, "seed": seed})
    files = ["empirical.csv", "empirical.json"]
    if render:
        figures.density_figure(fld, out / "empirical.png", kappa=kappa,
                               tau=tau, tau_relative=tau_rel,
                               title=f"empirical spectrum ({trials} trials)")
        files.append("empirical.png")
    reporting.write_manifest(out, "empirical", seed, params, files)
    click.echo(f"empirical: {fld.diagnostics['eigenvalues_binned']} "
               f"eigenvalues binned -> {out}")


@cli.command()
@click.option("--density", "density_path", required=True,
              help="Iteration-scale density CSV from the density command.")
@click.option("--degrees", "degrees_text", default="1..6", show_default=True)
@click.option("--kappa", default=0.1, show_default=True)
@click.option("--tau", "tau_text", default="rel:0.02", show_default=True)
@click.option("--max-points", default=400, show_default=True)
@click.option("--seed", default=1234, show_default=True,
              help="Seed of the optimality perturbation certificate.")
@click.option("--out", default=".", show_default=True)
@click.option("--figures/--no-figures", "render", default=True,
              show_default=True)
def design(density_path, degrees_text, kappa, tau_text, max_points, seed,
           out, render):
    """Design minimax consensus filters from a density grid."""
    degrees = _parse_degrees(degrees_text)
    tau, tau_rel = _parse_tau(tau_text)
    out = _out_dir(out)
    try:
        fld = reporting.read_density_csv(density_path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read density grid: {exc}") from exc
    try:
        region = extract_region(fld, kappa, tau, tau_relative=tau_rel,
                                max_points=max_points)
        params = {"density": str(density_path), "degrees": degrees,
                  "kappa": kappa, "tau": tau_text, "max_points": max_points}
        files = []
        for d in degrees:
            filt = design_filter(region, d, seed=seed)
            name = f"filter_d{d}.json"
            reporting.write_filter_json(
                filt, out / name, kappa=kappa, tau=tau_text,
                extra={"seed": seed, "params": params,
                       "sample_points": len(region.points)})
            files.append(name)
            if render:
                figures.response_figure(filt, fld, out / f"response_d{d}.png",
                                        kappa=kappa, tau=tau,
                                        tau_relative=tau_rel)
                files.append(f"response_d{d}.png")
            click.echo(f"design d={d}: epsilon={filt.epsilon:.6g}"
                       + (" (degenerate)" if filt.degenerate else ""))
    except (EmptyRegionError, DesignError, SolverError) as exc:
        raise NumericalFailure(str(exc)) from exc
    reporting.write_manifest(out, "design", seed, params, files)


@cli.command()
@click.option("--config", required=True, help="Model config JSON.")
@click.option("--methods", default="trivial,mean,proposed,oracle",
              show_default=True)
@click.option("--degrees", "degrees_text", default="1..6", show_default=True)
@click.option("--trials", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--density", "density_path", default=None,
              help="Reuse an iteration-scale density CSV for the proposed "
                   "filters (computed here when omitted).")
@click.option("--grid", "grid_text", default=None)
@click.option("--beta", default=1e-6, show_default=True)
@click.option("--umax", default=1e2, show_default=True)
@click.option("--nodes", default=200, show_default=True)
@click.option("--kappa", default=0.1, show_default=True)
@click.option("--tau", "tau_text", default="rel:0.02", show_default=True)
@click.option("--max-points", default=400, show_default=True)
@click.option("--workers", type=int, default=None)
@click.option("--out", default=".", show_default=True)
@click.option("--figures/--no-figures", "render", default=True,
              show_default=True)
def simulate(config, methods, degrees_text, trials, seed, density_path,
             grid_text, beta, umax, nodes, kappa, tau_text, max_points,
             workers, out, render):
    """Monte-Carlo comparison of filter designs on sampled networks."""
    model = _load_model(config)
    degrees = _parse_degrees(degrees_text)
    tau, tau_rel = _parse_tau(tau_text)
    workers = _resolve_workers(workers)
    method_list = [m.strip() for m in methods.split(",") if m.strip()]
    out = _out_dir(out)
    region = None
    if "proposed" in method_list:
        if density_path is not None:
            try:
                fld_w = reporting.read_density_csv(density_path)
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"cannot read density grid: {exc}") from exc
        else:
            fld = _scaled_density(model, grid_text, beta, umax, nodes, workers)
            fld_w = transform_to_iteration(fld, model.alpha)
        try:
            region = extract_region(fld_w, kappa, tau, tau_relative=tau_rel,
                                    max_points=max_points)
        except EmptyRegionError as exc:
            raise NumericalFailure(str(exc)) from exc
    try:
        outcome = monte_carlo(model, method_list, degrees, trials, seed,
                              region=region, kappa=kappa,
                              max_points=max_points, workers=workers)
    except (ValueError, SolverError, PerronError, DesignError) as exc:
        raise NumericalFailure(str(exc)) from exc
    params = {"model": model.config(), "methods": method_list,
              "degrees": degrees, "trials": trials, "kappa": kappa,
              "tau": tau_text, "max_points": max_points,
              "density": density_path, "grid": grid_text, "beta": beta,
              "umax": umax, "nodes": nodes}
    reporting.write_rates_csv(outcome, out / "rates.csv")
    reporting.write_summary_csv(outcome, out / "summary.csv")
    files = ["rates.csv", "summary.csv"]
    if render:
        figures.rates_figure(outcome, out / "rates.png",
                             title=f"convergence rates ({trials} trials)")
        files.append("rates.png")
    reporting.write_manifest(out, "simulate", seed, params, files)
    click.echo(f"simulate: {len(outcome.rows)} rows, "
               f"{len(outcome.excluded)} excluded trials, "
               f"{len(outcome.skipped)} skipped designs -> {out}")


@cli.command()
@click.option("--config", required=True, help="Model config JSON.")
@click.option("--out", default=None, help="Optional report directory.")
def validate(config, out):
    """Check a model against the scalar solver preconditions."""
    model = _load_model(config)
    prof = variance_profile(model)
    checks = {
        "theta_cyclic_invariant": model.transitive,
        "theta_normal": model.normal_theta,
        "variance_row_col_sums_equal": prof.uniform,
    }
    try:
        gamma = expected_row_sum(model)
        checks["expected_row_sum_positive"] = True
    except ModelError:
        gamma = float("nan")
        checks["expected_row_sum_positive"] = False
    if model.N <= 2000:
        B = mean_matrix(model)
        comm = B @ B.T - B.T @ B
        checks["mean_matrix_normal"] = bool(np.max(np.abs(comm)) < 1e-10)
    ok = all(checks.values())
    report = {"checks": checks, "passed": ok,
              "gamma": None if np.isnan(gamma) else gamma,
              "N": model.N, "version": __version__}
    if out is not None:
        out = _out_dir(out)
        reporting.write_json(report, out / "validation.json")
        reporting.write_manifest(out, "validate", None,
                                 {"model": model.config()},
                                 ["validation.json"])
    for name, passed in checks.items():
        click.echo(f"{'PASS' if passed else 'FAIL'} {name}")
    if not ok:
        raise NumericalFailure("model fails solver preconditions")
    click.echo(f"model ok: N={model.N}, expected row sum {gamma:.6g}")


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
