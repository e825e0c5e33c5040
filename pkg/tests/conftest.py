import numpy as np
import pytest

from delaylq import GridSpec, ModelParams, solve_single

# reference configuration used across the suite
REF = dict(b=0.5, sigma=1.0, d=0.5, T=1.5)


@pytest.fixture(scope="session")
def ref_params():
    return ModelParams(**REF)


@pytest.fixture(scope="session")
def ref_grid64(ref_params):
    spec = GridSpec.build(d=REF["d"], T=REF["T"], m=64)
    grid, diag = solve_single(ref_params, spec)
    return grid, diag


@pytest.fixture(scope="session")
def ref_grid32(ref_params):
    spec = GridSpec.build(d=REF["d"], T=REF["T"], m=32)
    grid, diag = solve_single(ref_params, spec)
    return grid, diag
