"""Shared fixtures: small meshes and assembled systems reused across files."""

import numpy as np
import pytest

from stokes_afem import assemble, generate_domain, solve_eigen


@pytest.fixture(scope="session")
def square4():
    return generate_domain("square", 4)


@pytest.fixture(scope="session")
def square8():
    return generate_domain("square", 8)


@pytest.fixture(scope="session")
def lshape4():
    return generate_domain("lshape", 4)


@pytest.fixture(scope="session")
def square8_k2(square8):
    return assemble(square8, 2)


@pytest.fixture(scope="session")
def square8_k2_solution(square8_k2):
    return solve_eigen(square8_k2, nev=3)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
