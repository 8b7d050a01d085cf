import numpy as np
import pytest

from netspectra import (build_model, density_field, mean_spectrum,
                        transform_to_iteration, variance_profile)


def cyclic_config(M, S, diag, nxt, alpha=1.0):
    return {"M": M, "S": S, "theta": {"diag": diag, "next": nxt},
            "alpha": alpha}


@pytest.fixture(scope="session")
def full_scale_model():
    """Cyclic 5-population model at full production scale (N=1000)."""
    return build_model(cyclic_config(5, 200, 0.05, 0.03))


@pytest.fixture(scope="session")
def mini_model():
    """Node-transitive miniature (N=30) for oracle comparisons."""
    return build_model(cyclic_config(5, 6, 0.05, 0.03))


@pytest.fixture(scope="session")
def desk_model():
    """Desk-scale run of the cyclic model (N=250).

    Link probabilities are scaled by 200/50 so the expected degree
    matches the full-scale model; at the original probabilities the
    graph sits below the strong-connectivity threshold and almost every
    trial is reducible.
    """
    return build_model(cyclic_config(5, 50, 0.20, 0.12))


@pytest.fixture(scope="session")
def desk_iteration_density(desk_model):
    """Iteration-scale density for the desk model (shared, ~20 s)."""
    spectrum = mean_spectrum(desk_model, scale="scaled")
    prof = variance_profile(desk_model)
    fld = density_field(prof.row_sum, prof.col_sum, spectrum)
    return transform_to_iteration(fld, desk_model.alpha)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
