import pytest


@pytest.fixture
def separable_triplets():
    from synthetic import build_separable_triplets

    return build_separable_triplets(1000, seed=22)
