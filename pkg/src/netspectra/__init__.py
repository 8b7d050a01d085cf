"""Spectral density approximation and consensus filter design for
large-scale random directed networks."""

__version__ = "0.1.0"

from .netmodel import (  # noqa: F401
    Adjacency,
    BlockModel,
    IterationMatrix,
    MeanSpectrum,
    ModelError,
    VarianceProfile,
    build_model,
    expected_row_sum,
    iteration_matrix,
    mean_matrix,
    mean_spectrum,
    sample_adjacency,
    variance_matrix,
    variance_profile,
)
from .canonical import (  # noqa: F401
    CanonicalPair,
    DensityField,
    GeneralSolution,
    GridSpec,
    SolverError,
    auto_grid,
    density_field,
    field_mass,
    general_canonical,
    m_value,
    phi_integral,
    solve_pair,
    transform_to_iteration,
)
from .filterdesign import (  # noqa: F401
    EmptyRegionError,
    FilterSpec,
    QuadraticForm,
    SampleRegion,
    baseline_filter,
    build_quadratic,
    design_filter,
    extract_region,
    region_mask,
    response,
    subgradient_design,
)
from .consensus import (  # noqa: F401
    ConsensusOutcome,
    MethodSummary,
    PerronError,
    RateRecord,
    convergence_rate,
    empirical_spectrum,
    left_perron,
    monte_carlo,
    projector,
    trial_seeds,
)
