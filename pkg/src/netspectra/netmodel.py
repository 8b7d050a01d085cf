"""Directed percolation network models with block structure.

Builds asymmetric stochastic block models (M populations of S nodes,
link probabilities from an M x M matrix), their mean matrices, entry
variance profiles, analytic mean spectra, and sampled consensus
iteration matrices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ModelError(ValueError):
    """Invalid network model configuration."""


def _as_theta(raw, M: int) -> np.ndarray:
    if isinstance(raw, dict):
        diag = float(raw.get("diag", 0.0))
        nxt = float(raw.get("next", 0.0))
        if M < 1:
            raise ModelError("cyclic shorthand requires M >= 1")
        if M == 1 and nxt != 0.0:
            raise ModelError("cyclic shorthand with next != 0 needs M >= 2")
        first = np.zeros(M)
        first[0] = diag
        if M > 1:
            first[1] = nxt
        theta = np.empty((M, M))
        for i in range(M):
            theta[i] = np.roll(first, i)
        return theta
    theta = np.asarray(raw, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ModelError(f"theta must be square, got shape {theta.shape}")
    if theta.shape[0] != M:
        raise ModelError(f"theta is {theta.shape[0]}x{theta.shape[0]} but M={M}")
    return theta


@dataclass(frozen=True)
class BlockModel:
    """Asymmetric stochastic block model.

    A node in population i links to each node of population j
    independently with probability theta[i, j]; no self-loops.
    `transitive` records invariance of theta under the simultaneous
    cyclic shift of populations (the node-transitivity diagnostic
    required by the scalar solver path), `normal_theta` whether theta
    commutes with its transpose.
    """

    M: int
    S: int
    theta: np.ndarray
    alpha: float
    transitive: bool
    normal_theta: bool

    @property
    def N(self) -> int:
        return self.M * self.S

    def population(self, node: int) -> int:
        return node // self.S

    def config(self) -> dict:
        """JSON-serializable description (used in output sidecars)."""
        return {
            "M": self.M,
            "S": self.S,
            "theta": self.theta.tolist(),
            "alpha": self.alpha,
        }


@dataclass(frozen=True)
class Adjacency:
    """One sampled 0/1 adjacency matrix and the seed that produced it."""

    entries: np.ndarray
    seed: int


@dataclass(frozen=True)
class VarianceProfile:
    """Row/column sums of entry variances of the scaled adjacency.

    `block_variances[p, q]` is the variance of a single scaled entry
    between populations p and q; `uniform` is True when row and column
    sums agree (node-transitive models), which the scalar solver needs.
    """

    row_sum: float
    col_sum: float
    block_variances: np.ndarray
    uniform: bool


@dataclass(frozen=True)
class MeanSpectrum:
    """Distinct eigenvalues with multiplicities of a mean matrix.

    `scale` is one of "raw" (mean adjacency), "scaled" (divided by the
    expected row sum) or "iteration" (mapped to mean consensus-matrix
    eigenvalues).
    """

    values: np.ndarray
    multiplicities: np.ndarray
    gamma: float
    scale: str

    @property
    def n(self) -> int:
        return int(self.multiplicities.sum())

    @property
    def weights(self) -> np.ndarray:
        return self.multiplicities / self.multiplicities.sum()

    def expand(self) -> np.ndarray:
        """Full eigenvalue list with repetitions."""
        return np.repeat(self.values, self.multiplicities)

    @classmethod
    def from_eigenvalues(cls, values, gamma: float, scale: str,
                         tol: float = 1e-9) -> "MeanSpectrum":
        """Collapse a full eigenvalue list to distinct values."""
        vals = np.asarray(values, dtype=complex)
        order = np.lexsort((vals.imag, vals.real))
        vals = vals[order]
        out_v, out_m = [], []
        for v in vals:
            if out_v and abs(v - out_v[-1]) <= tol:
                out_m[-1] += 1
            else:
                out_v.append(v)
                out_m.append(1)
        return cls(np.array(out_v), np.array(out_m, dtype=int), gamma, scale)


@dataclass(frozen=True)
class IterationMatrix:
    """Row-stochastic consensus iteration matrix."""

    entries: np.ndarray
    alpha: float

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def build_model(config: dict) -> BlockModel:
    """Validate a model description and attach symmetry diagnostics.

    `config` carries M, S, alpha and theta, the latter either as a full
    M x M matrix or as the cyclic shorthand {"diag": x, "next": y}.
    """
    try:
        M = int(config["M"])
        S = int(config["S"])
        alpha = float(config.get("alpha", 1.0))
        theta = _as_theta(config["theta"], M)
    except KeyError as exc:
        raise ModelError(f"model config missing key {exc}") from exc
    if M < 1 or S < 1 or M * S < 2:
        raise ModelError(f"need M*S >= 2 nodes, got M={M}, S={S}")
    if not (0.0 < alpha <= 1.0):
        raise ModelError(f"alpha must be in (0, 1], got {alpha}")
    if np.any(theta < 0.0) or np.any(theta > 1.0):
        raise ModelError("theta entries must be probabilities in [0, 1]")
    transitive = bool(np.allclose(theta, np.roll(theta, (1, 1), axis=(0, 1)),
                                  atol=1e-12, rtol=0.0))
    comm = theta @ theta.T - theta.T @ theta
    normal = bool(np.max(np.abs(comm)) <= 1e-12)
    return BlockModel(M=M, S=S, theta=theta, alpha=alpha,
                      transitive=transitive, normal_theta=normal)


def expected_row_sum(model: BlockModel) -> float:
    """Expected out-degree of a node in population 0 (self-loop excluded)."""
    gamma = model.S * model.theta[0].sum() - model.theta[0, 0]
    if gamma <= 0.0:
        raise ModelError("expected row sum is not positive (empty model)")
    return float(gamma)


def mean_matrix(model: BlockModel) -> np.ndarray:
    """Expected adjacency: theta lifted over blocks, diagonal removed."""
    return (np.kron(model.theta, np.ones((model.S, model.S)))
            - model.theta[0, 0] * np.eye(model.N))


def mean_spectrum(model: BlockModel, scale: str = "raw") -> MeanSpectrum:
    """Eigenvalues of the mean matrix, grouped by multiplicity.

    For cyclic (circulant theta) models the spectrum is analytic: the DFT
    values of theta's first row, lifted by the block size, plus the bulk
    value -theta[0, 0] with multiplicity M*(S-1). Other models fall back
    to a dense eigensolve of theta lifted the same way.
    """
    if scale not in ("raw", "scaled", "iteration"):
        raise ModelError(f"unknown spectrum scale {scale!r}")
    gamma = expected_row_sum(model)
    if model.transitive:
        lam_theta = np.fft.fft(model.theta[0])
    else:
        lam_theta = np.linalg.eigvals(model.theta)
    spikes = model.S * lam_theta - model.theta[0, 0]
    values = list(spikes)
    mults = [1] * model.M
    if model.S > 1:
        values.append(-model.theta[0, 0] + 0j)
        mults.append(model.M * (model.S - 1))
    values = np.asarray(values, dtype=complex)
    if scale == "scaled":
        values = values / gamma
    elif scale == "iteration":
        values = 1.0 + model.alpha * (values / gamma - 1.0)
    spectrum = MeanSpectrum.from_eigenvalues(
        np.repeat(values, mults), gamma=gamma, scale=scale)
    return spectrum


def variance_profile(model: BlockModel) -> VarianceProfile:
    """Entry variances of the scaled adjacency, summed by row and column.

    For a node in population 0 the row sum collects Bernoulli variances
    over all potential out-links (self excluded); the column sum is the
    analogue over in-links. The scalar solver requires both to agree.
    """
    gamma = expected_row_sum(model)
    bvar = model.theta * (1.0 - model.theta) / gamma**2
    self_var = bvar[0, 0]
    row = model.S * bvar[0, :].sum() - self_var
    col = model.S * bvar[:, 0].sum() - self_var
    uniform = bool(abs(row - col) <= 1e-12 * max(1.0, abs(row)))
    return VarianceProfile(row_sum=float(row), col_sum=float(col),
                           block_variances=bvar, uniform=uniform)


def variance_matrix(model: BlockModel) -> np.ndarray:
    """Per-entry variance of the scaled adjacency as a full N x N matrix."""
    prof = variance_profile(model)
    full = np.kron(prof.block_variances, np.ones((model.S, model.S)))
    np.fill_diagonal(full, 0.0)
    return full


def sample_adjacency(model: BlockModel, seed: int) -> Adjacency:
    """Draw one adjacency matrix; deterministic given the seed."""
    rng = np.random.default_rng(seed)
    probs = np.kron(model.theta, np.ones((model.S, model.S)))
    entries = (rng.random((model.N, model.N)) < probs).astype(np.int8)
    np.fill_diagonal(entries, 0)
    return Adjacency(entries=entries, seed=int(seed))


def iteration_matrix(adj: Adjacency, alpha: float) -> IterationMatrix:
    """Consensus matrix from out-degree-normalized weights.

    Rows with zero out-degree are repaired to a pure self-loop so the
    result stays row-stochastic for any realization.
    """
    if not (0.0 < alpha <= 1.0):
        raise ModelError(f"alpha must be in (0, 1], got {alpha}")
    A = adj.entries.astype(float)
    n = A.shape[0]
    deg = A.sum(axis=1)
    W = np.zeros((n, n))
    has_out = deg > 0
    W[has_out] = A[has_out] / deg[has_out, None]
    W *= alpha
    W[np.arange(n), np.arange(n)] += 1.0 - alpha
    isolated = np.flatnonzero(~has_out)
    W[isolated, :] = 0.0
    W[isolated, isolated] = 1.0
    return IterationMatrix(entries=W, alpha=float(alpha))
