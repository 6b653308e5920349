import numpy as np
import pytest

from fairfedlab.population import PopulationSpec

TWO_CLIENT_Q = ((0.5, 0.5), (0.3, 0.7), (0.2, 0.8), (0.1, 0.9))


def wide_client() -> PopulationSpec:
    """Client 0 is nearly uninformative (sigma 70), client 1 favours group 0."""
    from fairfedlab.population import ClientPopulation, GroupDistribution

    return PopulationSpec(
        (
            ClientPopulation(GroupDistribution(0.0, 70.0), GroupDistribution(0.0, 70.0), 0.5),
            ClientPopulation(GroupDistribution(3.0, 1.0), GroupDistribution(-1.0, 1.0), 0.5),
        )
    )


def two_client(q0: float, q1: float) -> PopulationSpec:
    return PopulationSpec.gaussian([(3.0, 5.0, 1.0, q0), (1.0, -1.0, 1.0, q1)])


def three_client(q: tuple[float, float, float]) -> PopulationSpec:
    return PopulationSpec.gaussian([(3.0, 5.0, 1.0, q[0]), (1.0, 2.0, 1.0, q[1]), (1.0, -1.0, 1.0, q[2])])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
