import numpy as np
import pytest

from dernet import MaterialParams, generate_hexagonal_web, generate_rod


@pytest.fixture(scope="session")
def params():
    """Reference rod material: E = 1 GPa, r0 = 1 mm, rho = 1000 kg/m^3."""
    return MaterialParams(young_modulus=1e9, rod_radius=1e-3, density=1000.0)


@pytest.fixture(scope="session")
def small_rod():
    return generate_rod(1.0, 8)


@pytest.fixture(scope="session")
def small_hexagon():
    return generate_hexagonal_web(2.0, 1.0, 1)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240915)


def perturbed_positions(mesh, rng, amplitude=0.05):
    """Random state around the rest geometry, scaled to the edge length."""
    scale = amplitude * float(mesh.stretch_rest.mean())
    return mesh.node_positions.ravel() + rng.uniform(-scale, scale, 3 * mesh.n_nodes)
