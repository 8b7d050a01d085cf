"""Deterministic spectral density approximation for non-Hermitian ensembles.

Solves the coupled scalar fixed-point system that the per-node canonical
system collapses to under node-transitive symmetry with a normal mean
matrix, integrates the resulting resolvent-trace over the regularizer,
and differentiates the integral on a complex-plane grid to obtain an
approximate limiting spectral density.

The full per-node system (diagonal matrices, exact inverses) is kept as
a desk-scale oracle for validating the scalar reduction.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .netmodel import MeanSpectrum


class SolverError(RuntimeError):
    """Fixed-point iteration failed to converge."""


class GridError(ValueError):
    """Unusable density grid."""


#: Damped fixed-point defaults shared by the scalar and per-node solvers.
DAMPING = 0.5
TOLERANCE = 1e-10
MAX_ITERATIONS = 10_000

#: Quadrature defaults for the regularizer integral.
BETA_DEFAULT = 1e-6
U_MAX_DEFAULT = 1e2
N_NODES_DEFAULT = 200


@dataclass(frozen=True)
class CanonicalPair:
    """Scalar solution of the reduced canonical system at one (u, z)."""

    c1: float
    c2: float
    u: float
    z: complex
    iterations: int


@dataclass(frozen=True)
class GeneralSolution:
    """Per-node solution of the full canonical system at one (u, z)."""

    c1_diag: np.ndarray
    c2_diag: np.ndarray
    m: float


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid of complex points t + i*s."""

    t_min: float
    t_max: float
    s_min: float
    s_max: float
    n_t: int = 201
    n_s: int = 201

    def __post_init__(self):
        if self.n_t < 3 or self.n_s < 3:
            raise GridError("grid too coarse: need at least 3 points per axis")
        if not (self.t_max > self.t_min and self.s_max > self.s_min):
            raise GridError("grid bounds must satisfy min < max")

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.n_t - 1)

    @property
    def ds(self) -> float:
        return (self.s_max - self.s_min) / (self.n_s - 1)

    def t_axis(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.n_t)

    def s_axis(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.n_s)

    def points(self) -> np.ndarray:
        """Complex grid points, shape (n_t, n_s)."""
        T, S = np.meshgrid(self.t_axis(), self.s_axis(), indexing="ij")
        return T + 1j * S


@dataclass(frozen=True)
class DensityField:
    """Nonnegative density values on a rectangular complex-plane grid.

    `support_mask` is True at points where the computation was regular;
    masked points (non-finite results or runaway small-u slope of the
    resolvent trace) carry density 0.
    """

    grid: GridSpec
    values: np.ndarray
    beta: float
    support_mask: np.ndarray
    scale: str = "scaled"
    diagnostics: dict = field(default_factory=dict)

    def index_of(self, z: complex) -> tuple[int, int]:
        """Nearest grid node for a complex point (clipped to the grid)."""
        i = int(round((z.real - self.grid.t_min) / self.grid.dt))
        j = int(round((z.imag - self.grid.s_min) / self.grid.ds))
        return (min(max(i, 0), self.grid.n_t - 1),
                min(max(j, 0), self.grid.n_s - 1))


def auto_grid(spectrum: MeanSpectrum, v_row: float,
              n_t: int = 201, n_s: int = 201) -> GridSpec:
    """Bounding box of the spectrum padded by three bulk standard widths.

    A small floor keeps zero-variance (atomic) spectra strictly interior
    so boundary zeroing cannot swallow their mass.
    """
    vals = spectrum.values
    span = max(vals.real.max() - vals.real.min(),
               vals.imag.max() - vals.imag.min(), 0.0)
    pad = max(3.0 * np.sqrt(max(v_row, 0.0)), 0.05 * span, 0.02)
    return GridSpec(t_min=float(vals.real.min() - pad),
                    t_max=float(vals.real.max() + pad),
                    s_min=float(vals.imag.min() - pad),
                    s_max=float(vals.imag.max() + pad),
                    n_t=n_t, n_s=n_s)


def _iterate_pair(u, w2, weights, v_row, v_col, c1, c2,
                  tol=TOLERANCE, max_iter=MAX_ITERATIONS, damping=DAMPING):
    """Damped fixed point of the reduced system, vectorized over points.

    w2 holds squared distances |lambda_r - z|^2, shape (nz, K); weights
    are the spectral multiplicity fractions, shape (K,). Points retire
    from the active set as they reach the relative tolerance. Returns
    (c1, c2, iterations, n_unconverged).
    """
    nz = c1.shape[0]
    out1, out2 = c1.copy(), c2.copy()
    active = np.arange(nz)
    a1, a2, wa = out1.copy(), out2.copy(), w2
    last_it = 0
    for last_it in range(1, max_iter + 1):
        d2 = a2[:, None] + wa / a1[:, None]
        c1n = u + v_row * (weights / d2).sum(axis=1)
        d1 = a1[:, None] + wa / a2[:, None]
        c2n = 1.0 + v_col * (weights / d1).sum(axis=1)
        resid = np.maximum(np.abs(c1n - a1) / c1n, np.abs(c2n - a2) / c2n)
        a1 = (1.0 - damping) * a1 + damping * c1n
        a2 = (1.0 - damping) * a2 + damping * c2n
        done = resid < tol
        if done.any():
            idx = active[done]
            out1[idx] = a1[done]
            out2[idx] = a2[done]
            keep = ~done
            active, a1, a2, wa = active[keep], a1[keep], a2[keep], wa[keep]
            if active.size == 0:
                return out1, out2, last_it, 0
    out1[active] = a1
    out2[active] = a2
    return out1, out2, last_it, int(active.size)


def solve_pair(u: float, z: complex, v_row: float, v_col: float,
               spectrum: MeanSpectrum, *, tol: float = TOLERANCE,
               max_iter: int = MAX_ITERATIONS, damping: float = DAMPING,
               c1_init: float | None = None,
               c2_init: float | None = None) -> CanonicalPair:
    """Solve the reduced two-variable canonical system at one (u, z).

    The first equation adds the row variance sum against the spectral
    average of (c2 + |lambda_r - z|^2 / c1)^-1 to the base u, the second
    the column sum analogue to the base 1. Raises SolverError if the
    damped iteration does not reach `tol` within `max_iter` rounds.
    """
    if u <= 0.0:
        raise SolverError(f"regularizer u must be positive, got {u}")
    w2 = np.abs(spectrum.values - z)[None, :] ** 2
    c1 = np.array([u + 1.0 if c1_init is None else c1_init], dtype=float)
    c2 = np.array([2.0 if c2_init is None else c2_init], dtype=float)
    c1, c2, its, left = _iterate_pair(u, w2, spectrum.weights, v_row, v_col,
                                      c1, c2, tol, max_iter, damping)
    if left:
        raise SolverError(f"no convergence after {max_iter} iterations "
                          f"at u={u}, z={z}")
    return CanonicalPair(c1=float(c1[0]), c2=float(c2[0]), u=float(u),
                         z=complex(z), iterations=its)


def m_value(pair: CanonicalPair, z: complex, spectrum: MeanSpectrum) -> float:
    """Resolvent-trace value at a solved point."""
    w2 = np.abs(spectrum.values - z) ** 2
    return float((spectrum.weights / (pair.c1 + w2 / pair.c2)).sum())


def _log_u_nodes(beta: float, u_max: float, n_nodes: int):
    if not (0.0 < beta < u_max):
        raise SolverError(f"need 0 < beta < u_max, got beta={beta}, "
                          f"u_max={u_max}")
    if n_nodes < 4:
        raise SolverError("quadrature needs at least 4 nodes")
    v = np.linspace(np.log(beta), np.log(u_max), n_nodes)
    return v, np.exp(v)


def _phi_on_points(zs, spectrum, v_row, v_col, beta, u_max, n_nodes,
                   tol=TOLERANCE, max_iter=MAX_ITERATIONS, damping=DAMPING):
    """Regularizer integral of m at many z at once.

    Sweeps the log-spaced u nodes from the top down, warm-starting each
    solve from a geometric extrapolation of the two previous solutions.
    Integrates m(u) du as (m * u) d(log u) by the trapezoid rule with a
    second-order endpoint correction, which keeps the truncation error
    far below the doubling-check tolerance at the default node count.

    Returns (phi, m_slope_at_beta, n_unconverged).
    """
    zs = np.asarray(zs, dtype=complex).ravel()
    v, us = _log_u_nodes(beta, u_max, n_nodes)
    h = v[1] - v[0]
    w2 = np.abs(spectrum.values[None, :] - zs[:, None]) ** 2
    weights = spectrum.weights
    g = np.empty((n_nodes, zs.size))
    m_low = np.empty((2, zs.size))
    c1 = np.full(zs.size, us[-1] + 1.0)
    c2 = np.full(zs.size, 2.0)
    prev1 = prev2 = None
    bad = 0
    for k in range(n_nodes - 1, -1, -1):
        if prev1 is not None:
            init1 = np.maximum(c1 * c1 / prev1, us[k])
            init2 = np.maximum(c2 * c2 / prev2, 1.0)
        else:
            init1, init2 = c1, c2
        prev1, prev2 = c1, c2
        c1, c2, _, left = _iterate_pair(us[k], w2, weights, v_row, v_col,
                                        init1, init2, tol, max_iter, damping)
        bad = max(bad, left)
        m = (weights / (c1[:, None] + w2 / c2[:, None])).sum(axis=1)
        g[k] = m * us[k]
        if k < 2:
            m_low[k] = m
    phi = h * (g.sum(axis=0) - 0.5 * (g[0] + g[-1]))
    gp_a = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * h)
    gp_b = (3.0 * g[-1] - 4.0 * g[-2] + g[-3]) / (2.0 * h)
    phi -= h * h / 12.0 * (gp_b - gp_a)
    slope = (m_low[1] - m_low[0]) / (us[1] - us[0])
    return phi, slope, bad


def phi_integral(z: complex, v_row: float, v_col: float,
                 spectrum: MeanSpectrum, beta: float = BETA_DEFAULT,
                 u_max: float = U_MAX_DEFAULT,
                 n_nodes: int = N_NODES_DEFAULT) -> float:
    """Integral of the resolvent trace over the regularizer at one z."""
    phi, _, bad = _phi_on_points(np.array([z]), spectrum, v_row, v_col,
                                 beta, u_max, n_nodes)
    if bad:
        raise SolverError(f"canonical solve did not converge at z={z}")
    return float(phi[0])


def _phi_chunk(args):
    zs, spectrum, v_row, v_col, beta, u_max, n_nodes = args
    return _phi_on_points(zs, spectrum, v_row, v_col, beta, u_max, n_nodes)


def density_field(v_row: float, v_col: float, spectrum: MeanSpectrum,
                  grid: GridSpec | None = None, *,
                  beta: float = BETA_DEFAULT, u_max: float = U_MAX_DEFAULT,
                  n_nodes: int = N_NODES_DEFAULT, workers: int = 1,
                  mask_slope_factor: float = 10.0) -> DensityField:
    """Approximate spectral density on a grid.

    Computes the regularizer integral at every grid point, applies the
    five-point Laplacian scaled by -1/(4 pi), zeroes the boundary, masks
    points whose result is non-finite or whose small-u trace slope
    exceeds `mask_slope_factor / beta^2` (operational stand-in for the
    excluded region of the underlying theorem), and clips small negative
    finite-difference noise to zero. Larger negative values are also
    zeroed but counted separately in the diagnostics.
    """
    if grid is None:
        grid = auto_grid(spectrum, v_row)
    zs = grid.points().ravel()
    if workers > 1:
        chunks = np.array_split(zs, min(workers * 4, len(zs)))
        args = [(c, spectrum, v_row, v_col, beta, u_max, n_nodes)
                for c in chunks]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_phi_chunk, args))
        phi = np.concatenate([p[0] for p in parts])
        slope = np.concatenate([p[1] for p in parts])
        unconverged = sum(p[2] for p in parts)
    else:
        phi, slope, unconverged = _phi_on_points(
            zs, spectrum, v_row, v_col, beta, u_max, n_nodes)
    phi = phi.reshape(grid.n_t, grid.n_s)
    slope = slope.reshape(grid.n_t, grid.n_s)

    lap = np.zeros_like(phi)
    lap[1:-1, 1:-1] = (
        (phi[2:, 1:-1] - 2.0 * phi[1:-1, 1:-1] + phi[:-2, 1:-1]) / grid.dt**2
        + (phi[1:-1, 2:] - 2.0 * phi[1:-1, 1:-1] + phi[1:-1, :-2]) / grid.ds**2)
    values = -lap / (4.0 * np.pi)

    mask = np.isfinite(values)
    mask &= np.abs(slope) <= mask_slope_factor / beta**2
    values = np.where(mask, values, 0.0)

    peak = values.max() if values.size else 0.0
    negative = values < 0.0
    deep = values < -1e-3 * max(peak, 0.0)
    clipped = int(np.count_nonzero(negative & ~deep))
    flagged = int(np.count_nonzero(deep))
    neg_mass = float(values[negative].sum() * grid.dt * grid.ds)
    values = np.clip(values, 0.0, None)

    diagnostics = {
        "unconverged_points": int(unconverged),
        "masked_points": int(np.count_nonzero(~mask)),
        "clipped_negatives": clipped,
        "flagged_negatives": flagged,
        "negative_mass": neg_mass,
        "u_max": float(u_max),
        "n_nodes": int(n_nodes),
    }
    return DensityField(grid=grid, values=values, beta=float(beta),
                        support_mask=mask, scale="scaled",
                        diagnostics=diagnostics)


def field_mass(field: DensityField) -> float:
    """Riemann-sum integral of the density over its grid."""
    return float(field.values.sum() * field.grid.dt * field.grid.ds)


def transform_to_iteration(fld: DensityField, alpha: float) -> DensityField:
    """Affine pushforward of a scaled-adjacency density to iteration scale.

    Maps x to 1 + alpha*(x - 1) and y to alpha*y with the corresponding
    1/alpha^2 Jacobian factor on values, preserving total mass.
    """
    if not (0.0 < alpha <= 1.0):
        raise GridError(f"alpha must be in (0, 1], got {alpha}")
    g = fld.grid
    new_grid = GridSpec(t_min=1.0 + alpha * (g.t_min - 1.0),
                        t_max=1.0 + alpha * (g.t_max - 1.0),
                        s_min=alpha * g.s_min, s_max=alpha * g.s_max,
                        n_t=g.n_t, n_s=g.n_s)
    return DensityField(grid=new_grid, values=fld.values / alpha**2,
                        beta=fld.beta, support_mask=fld.support_mask,
                        scale="iteration", diagnostics=dict(fld.diagnostics))


def general_canonical(variances: np.ndarray, mean: np.ndarray, u: float,
                      z: complex, *, tol: float = TOLERANCE,
                      max_iter: int = MAX_ITERATIONS,
                      damping: float = DAMPING) -> GeneralSolution:
    """Per-node canonical system solved with exact matrix inverses.

    Desk-scale oracle: refuses N > 200. `variances[k, j]` is the entry
    variance of the centered scaled matrix; `mean` its expectation. The
    first diagonal family weights rows of the variance matrix against
    the diagonal of one resolvent, the second weights columns against
    the other, exactly as in the unreduced system.
    """
    if u <= 0.0:
        raise SolverError(f"regularizer u must be positive, got {u}")
    mean = np.asarray(mean)
    n = mean.shape[0]
    if n > 200:
        raise SolverError("general solver is a desk-scale oracle; N <= 200")
    variances = np.asarray(variances, dtype=float)
    bz = mean - z * np.eye(n)
    bzh = bz.conj().T
    c1 = np.full(n, u + 1.0)
    c2 = np.full(n, 2.0)
    for _ in range(max_iter):
        g2 = np.linalg.inv(np.diag(c2) + bzh @ (bz / c1[:, None]))
        c1n = u + variances @ np.real(np.diagonal(g2))
        g1 = np.linalg.inv(np.diag(c1) + bz @ (bzh / c2[:, None]))
        c2n = 1.0 + variances.T @ np.real(np.diagonal(g1))
        resid = max(np.max(np.abs(c1n - c1) / c1n),
                    np.max(np.abs(c2n - c2) / c2n))
        c1 = (1.0 - damping) * c1 + damping * c1n
        c2 = (1.0 - damping) * c2 + damping * c2n
        if resid < tol:
            g1 = np.linalg.inv(np.diag(c1) + bz @ (bzh / c2[:, None]))
            m = float(np.real(np.trace(g1)) / n)
            return GeneralSolution(c1_diag=c1, c2_diag=c2, m=m)
    raise SolverError(f"general solver did not converge at u={u}, z={z}")
