"""Consensus-acceleration filter design from spectral density fields.

Extracts filtering regions (density super-level sets away from the
consensus eigenvalue at 1), encodes squared polynomial responses as
real quadratic forms, and minimizes the worst response magnitude over
the region subject to the unit-gain constraint at 1 (a small convex
minimax over an affine coefficient slice).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .canonical import DensityField
from .netmodel import IterationMatrix, MeanSpectrum


class EmptyRegionError(ValueError):
    """No sample points survive the region thresholds."""


class DesignError(RuntimeError):
    """Filter design failed."""


@dataclass(frozen=True)
class SampleRegion:
    """Complex sample points drawn from a density super-level set.

    Every point has density above `tau` (absolute) and lies outside the
    `kappa` disk around 1; points are folded to the closed upper half
    plane since designs are conjugation-invariant.
    """

    kappa: float
    tau: float
    points: np.ndarray


@dataclass(frozen=True)
class QuadraticForm:
    """Real symmetric PSD matrix encoding |p(lam)|^2 = a' Q a."""

    matrix: np.ndarray
    lam: complex


@dataclass(frozen=True)
class FilterSpec:
    """Polynomial filter with unit coefficient sum.

    `epsilon` is the achieved minimax of the squared response over the
    design points (NaN when there were none, e.g. the trivial filter).
    `degenerate` marks designs with more polynomial freedom than design
    constraints, where the minimax value collapses to 0 non-uniquely.
    """

    degree: int
    coefficients: np.ndarray
    epsilon: float
    provenance: str
    degenerate: bool = False


def region_mask(fld: DensityField, kappa: float, tau: float,
                *, tau_relative: bool = True) -> np.ndarray:
    """Boolean grid of points with density above threshold, off the unit."""
    if kappa <= 0.0:
        raise EmptyRegionError(f"kappa must be positive, got {kappa}")
    tau_abs = tau * fld.values.max() if tau_relative else tau
    away = np.abs(fld.grid.points() - 1.0) > kappa
    return (fld.values > tau_abs) & away


def _fold_upper(points: np.ndarray) -> np.ndarray:
    folded = np.where(points.imag < 0.0, points.conj(), points)
    return np.unique(folded)


def _farthest_point_thin(points: np.ndarray, k: int) -> np.ndarray:
    """Greedy max-min-distance subsample; deterministic, keeps extremes."""
    if len(points) <= k:
        return points
    order = np.lexsort((points.imag, points.real))
    pts = points[order]
    chosen = [0]
    dmin = np.abs(pts - pts[0])
    for _ in range(k - 1):
        nxt = int(np.argmax(dmin))
        chosen.append(nxt)
        dmin = np.minimum(dmin, np.abs(pts - pts[nxt]))
    return pts[sorted(chosen)]


def extract_region(fld: DensityField, kappa: float = 0.1, tau: float = 0.02,
                   *, tau_relative: bool = True,
                   max_points: int = 400) -> SampleRegion:
    """Sample points from the thresholded density, thinned for design.

    Boundary points of the super-level set are kept with priority (the
    response maximum of a polynomial over a region sits on its boundary)
    and the interior is filled in by farthest-point selection up to
    `max_points`.
    """
    mask = region_mask(fld, kappa, tau, tau_relative=tau_relative)
    if not mask.any():
        raise EmptyRegionError(
            "empty filtering region: lower tau or shrink kappa")
    interior = np.zeros_like(mask)
    interior[1:-1, 1:-1] = (mask[1:-1, 1:-1] & mask[2:, 1:-1]
                            & mask[:-2, 1:-1] & mask[1:-1, 2:]
                            & mask[1:-1, :-2])
    boundary = mask & ~interior
    zs = fld.grid.points()
    b_pts = _fold_upper(zs[boundary])
    i_pts = _fold_upper(zs[interior])
    if len(b_pts) >= max_points:
        points = _farthest_point_thin(b_pts, max_points)
    else:
        fill = _farthest_point_thin(i_pts, max_points - len(b_pts))
        points = np.unique(np.concatenate([b_pts, fill]))
    tau_abs = tau * fld.values.max() if tau_relative else tau
    return SampleRegion(kappa=float(kappa), tau=float(tau_abs), points=points)


def build_quadratic(lam: complex, d: int) -> QuadraticForm:
    """Quadratic form of the squared response magnitude at one point.

    Averaging the Gram matrices of the power vectors at lam and its
    conjugate cancels every imaginary part, so a' Q a equals |p(lam)|^2
    exactly for real coefficient vectors a.
    """
    if d < 1:
        raise DesignError(f"filter degree must be >= 1, got {d}")
    pw = np.asarray(lam, dtype=complex) ** np.arange(d + 1)
    q = np.real(np.outer(pw.conj(), pw))
    return QuadraticForm(matrix=0.5 * (q + q.T), lam=complex(lam))


def response(filt: FilterSpec, lam: complex) -> complex:
    """Polynomial response at a point; always 1 at lam = 1."""
    powers = np.asarray(lam, dtype=complex) ** np.arange(filt.degree + 1)
    return complex(np.dot(filt.coefficients, powers))


# ---------------------------------------------------------------------------
# minimax core


def _quad_stack(points: np.ndarray, d: int) -> np.ndarray:
    return np.stack([build_quadratic(z, d).matrix for z in points])


def _quad_values(qs: np.ndarray, a: np.ndarray) -> np.ndarray:
    return np.einsum("ijk,j,k->i", qs, a, a)


def _sum_zero_basis(n1: int) -> np.ndarray:
    u, _, _ = np.linalg.svd(np.eye(n1) - np.full((n1, n1), 1.0 / n1))
    return u[:, : n1 - 1]


def _interpolation(points: np.ndarray, d: int) -> np.ndarray | None:
    """Exact annihilating polynomial with unit sum, if one exists."""
    rows = [np.ones(d + 1)]
    rhs = [1.0]
    for z in points:
        pw = z ** np.arange(d + 1)
        rows.append(pw.real)
        rhs.append(0.0)
        if z.imag != 0.0:
            rows.append(pw.imag)
            rhs.append(0.0)
    mat = np.array(rows)
    vec = np.array(rhs)
    a, *_ = np.linalg.lstsq(mat, vec, rcond=None)
    if np.max(np.abs(mat @ a - vec)) < 1e-12:
        return a
    return None


def _smoothed_descent(qs: np.ndarray, a: np.ndarray, basis: np.ndarray):
    """Anneal a soft-max of the quadratics down to the hard maximum.

    Damped Newton in the sum-zero coordinates on the log-sum-exp
    smoothing, with the temperature lowered geometrically.
    """
    vals = _quad_values(qs, a)
    scale = max(vals.max(), 1e-8)
    t = scale / 10.0
    t_final = 1e-12 * scale
    wgt = np.full(len(qs), 1.0 / len(qs))
    while True:
        for _ in range(100):
            vals = _quad_values(qs, a)
            mx = vals.max()
            wgt = np.exp((vals - mx) / t)
            wgt /= wgt.sum()
            qa = np.einsum("ijk,k->ij", qs, a)
            grads = 2.0 * qa
            gbar = wgt @ grads
            hess = 2.0 * np.einsum("i,ijk->jk", wgt, qs)
            hess += (grads.T @ (grads * wgt[:, None])
                     - np.outer(gbar, gbar)) / t
            gy = basis.T @ gbar
            hy = basis.T @ hess @ basis
            try:
                dy = np.linalg.solve(hy + 1e-14 * np.eye(hy.shape[0]), -gy)
            except np.linalg.LinAlgError:
                dy = -gy
            f0 = t * np.log(np.sum(np.exp((vals - mx) / t))) + mx
            step = 1.0
            direction = basis @ dy
            slope = gy @ dy
            for _ in range(50):
                trial = a + step * direction
                v = _quad_values(qs, trial)
                m2 = v.max()
                f1 = t * np.log(np.sum(np.exp((v - m2) / t))) + m2
                if f1 <= f0 + 1e-4 * step * slope:
                    break
                step *= 0.5
            a = a + step * direction
            if np.linalg.norm(gy) < 1e-13 * max(1.0, abs(f0)):
                break
        if t <= t_final:
            return a, wgt
        t = max(t / 20.0, t_final)


def _active_set_polish(qs: np.ndarray, a: np.ndarray):
    """Newton solve of the minimax optimality system on the active set."""
    n1 = len(a)
    vals = _quad_values(qs, a)
    eps = vals.max()
    act = np.where(vals >= eps - max(1e-7 * eps, 1e-15))[0]
    if len(act) == 0 or len(act) > n1 + 1:
        return a, eps, False
    k = len(act)
    qa_stack = qs[act]
    x = np.concatenate([a, np.full(k, 1.0 / k), [0.0], [eps]])
    for _ in range(60):
        a_, mu_, nu_, e_ = x[:n1], x[n1:n1 + k], x[n1 + k], x[n1 + k + 1]
        qa = np.einsum("ijk,k->ij", qa_stack, a_)
        resid = np.concatenate([
            2.0 * (mu_ @ qa) + nu_,
            np.einsum("ij,j->i", qa, a_) - e_,
            [mu_.sum() - 1.0],
            [a_.sum() - 1.0],
        ])
        if np.max(np.abs(resid)) < 1e-15 * max(1.0, e_):
            break
        jac = np.zeros((n1 + k + 2, n1 + k + 2))
        jac[:n1, :n1] = 2.0 * np.einsum("i,ijk->jk", mu_, qa_stack)
        jac[:n1, n1:n1 + k] = 2.0 * qa.T
        jac[:n1, n1 + k] = 1.0
        jac[n1:n1 + k, :n1] = 2.0 * qa
        jac[n1:n1 + k, n1 + k + 1] = -1.0
        jac[n1 + k, n1:n1 + k] = 1.0
        jac[n1 + k + 1, :n1] = 1.0
        try:
            dx = np.linalg.solve(jac, -resid)
        except np.linalg.LinAlgError:
            return a, eps, False
        x = x + dx
        if not np.all(np.isfinite(x)):
            return a, eps, False
    a_, mu_ = x[:n1], x[n1:n1 + k]
    if not np.all(np.isfinite(a_)) or np.any(mu_ < -1e-7):
        return a, eps, False
    a_ = a_ + (1.0 - a_.sum()) / n1
    new_eps = _quad_values(qs, a_).max()
    if new_eps <= eps * (1.0 + 1e-12) + 1e-300:
        return a_, new_eps, True
    return a, eps, False


def _minimax(points: np.ndarray, d: int, seed: int):
    """Minimize the worst squared response over points; returns (a, eps).

    Tries exact annihilation first (covers degenerate designs), then the
    smoothed Newton descent with an active-set polish. A final round of
    random feasible perturbations certifies local optimality; any strict
    improvement it finds is kept and re-polished.
    """
    points = np.unique(np.asarray(points, dtype=complex))
    if len(points) == 0:
        raise EmptyRegionError("cannot design a filter on zero points")
    exact = _interpolation(points, d)
    qs = _quad_stack(points, d)
    if exact is not None:
        return exact, float(_quad_values(qs, exact).max())
    basis = _sum_zero_basis(d + 1)
    a = np.zeros(d + 1)
    a[-1] = 1.0
    a, _ = _smoothed_descent(qs, a, basis)
    a, eps, _ = _active_set_polish(qs, a)
    rng = np.random.default_rng(seed)
    for _ in range(200):
        step = rng.standard_normal(d + 1)
        step -= step.mean()
        norm = np.linalg.norm(step)
        if norm == 0.0:
            continue
        trial = a + 1e-4 * step / norm
        val = _quad_values(qs, trial).max()
        if val < eps - 1e-10:
            a, _ = _smoothed_descent(qs, trial, basis)
            a, eps, _ = _active_set_polish(qs, a)
    return a, float(eps)


def design_filter(points, d: int, *, seed: int = 1234,
                  provenance: str = "proposed") -> FilterSpec:
    """Solve the minimax response problem over a sample region.

    `points` may be a SampleRegion or any iterable of complex points.
    The returned coefficients sum to 1 and epsilon equals the recomputed
    maximum of the squared response over the design points.
    """
    if isinstance(points, SampleRegion):
        pts = points.points
    else:
        pts = np.asarray(list(points), dtype=complex)
    if len(pts) == 0:
        raise EmptyRegionError("cannot design a filter on zero points")
    a, eps = _minimax(pts, d, seed)
    degenerate = _degrees_of_freedom(pts) < d + 1 and eps < 1e-20
    return FilterSpec(degree=d, coefficients=a, epsilon=eps,
                      provenance=provenance, degenerate=degenerate)


def _degrees_of_freedom(points: np.ndarray) -> int:
    """Linear conditions imposed by annihilating the points plus unit sum."""
    return 1 + sum(2 if z.imag != 0.0 else 1 for z in np.unique(points))


def subgradient_design(points, d: int, *, iters: int = 200_000,
                       seed: int = 0) -> FilterSpec:
    """Slow projected-subgradient reference for cross-checking designs."""
    pts = points.points if isinstance(points, SampleRegion) else \
        np.asarray(list(points), dtype=complex)
    qs = _quad_stack(np.unique(pts), d)
    n1 = d + 1
    a = np.zeros(n1)
    a[-1] = 1.0
    best = _quad_values(qs, a).max()
    best_a = a.copy()
    for _ in range(iters):
        vals = _quad_values(qs, a)
        i = int(np.argmax(vals))
        f = vals[i]
        if f < best:
            best, best_a = f, a.copy()
        g = 2.0 * qs[i] @ a
        g -= g.mean()
        ng = g @ g
        if ng < 1e-30:
            break
        a = a - ((f - 0.999 * best) / ng) * g
        a += (1.0 - a.sum()) / n1
    return FilterSpec(degree=d, coefficients=best_a, epsilon=float(best),
                      provenance="reference")


def baseline_filter(kind: str, context, d: int,
                    kappa: float = 0.1, *, max_points: int = 400,
                    seed: int = 1234) -> FilterSpec:
    """Comparison designs: pure delay, mean-spectrum, or realized-spectrum.

    "trivial" ignores the context and returns the d-step delay. "mean"
    designs on the distinct mean iteration eigenvalues outside the kappa
    disk (degenerate whenever d meets or exceeds the count of distinct
    mean eigenvalues). "oracle" designs on the realized eigenvalues of a
    drawn iteration matrix, information a deployed filter cannot have.
    """
    if kind == "trivial":
        a = np.zeros(d + 1)
        a[-1] = 1.0
        return FilterSpec(degree=d, coefficients=a, epsilon=float("nan"),
                          provenance="trivial")
    if kind == "mean":
        if not isinstance(context, MeanSpectrum):
            raise DesignError("mean baseline needs a mean iteration spectrum")
        if context.scale != "iteration":
            raise DesignError("mean baseline expects iteration-scale spectrum")
        pts = context.values[np.abs(context.values - 1.0) > kappa]
        pts = _fold_upper(pts)
        if len(pts) == 0:
            raise EmptyRegionError("no mean eigenvalues outside the kappa disk")
        spec = design_filter(pts, d, seed=seed, provenance="mean")
        if d >= len(context.values):
            spec = FilterSpec(degree=d, coefficients=spec.coefficients,
                              epsilon=spec.epsilon, provenance="mean",
                              degenerate=True)
        return spec
    if kind == "oracle":
        if isinstance(context, IterationMatrix):
            eigs = np.linalg.eigvals(context.entries)
        else:
            eigs = np.asarray(context, dtype=complex)
        pts = eigs[np.abs(eigs - 1.0) > kappa]
        pts = _fold_upper(pts)
        if len(pts) == 0:
            raise EmptyRegionError("no realized eigenvalues outside kappa disk")
        pts = _farthest_point_thin(pts, max_points)
        return design_filter(pts, d, seed=seed, provenance="oracle")
    raise DesignError(f"unknown baseline kind {kind!r}")
