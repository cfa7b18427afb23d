import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nnri.design import SampleDesign, draw_sample, sample_from_weights
from nnri.popgen import PopulationConfig, generate_population

settings.register_profile(
    "nnri", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("nnri")


@pytest.fixture
def hand_sample():
    """Three units in one stratum of six, all with weight 2."""
    return sample_from_weights(
        ids=np.array([1, 2, 3]),
        stratum=np.array([1, 1, 1]),
        x=np.array([1.0, 2.0, 3.0]),
        y=np.array([[0.6, 0.4], [1.1, 0.9], [1.8, 1.2]]),
        weight=np.array([2.0, 2.0, 2.0]),
    )


def make_sample(scenario="uniform100k", N=300, seed=0):
    pop = generate_population(PopulationConfig(scenario, N, seed=seed))
    return pop, draw_sample(pop, SampleDesign(), np.random.default_rng(seed))
