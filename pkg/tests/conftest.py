import pytest

from saturon.constructor import construct_br_level, construct_saturated, enumerate_K
from saturon.measures import bernoulli
from saturon.shift_core import full_shift


@pytest.fixture(scope="session")
def segment_six():
    K = enumerate_K([bernoulli(0.1), bernoulli(0.9)], 3)
    return construct_saturated(full_shift(2), K, False, 6, 0)


@pytest.fixture(scope="session")
def segment_transitive():
    K = enumerate_K([bernoulli(0.1), bernoulli(0.9)], 3)
    return construct_saturated(full_shift(2), K, True, 4, 0)


@pytest.fixture(scope="session")
def br_levels():
    return {level: construct_br_level(None, level, seed=0) for level in range(1, 6)}
