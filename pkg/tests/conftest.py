"""Shared fixtures: the five-variable, two-latent toy model in every family."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import graphunfold as gu

#: Loading graph used throughout: two pure children per latent plus one
#: shared child -> [[1,0],[1,0],[0,1],[0,1],[1,1]].
TOY_EXTRA_ROWS = [[1, 1]]


def toy_model(family: str = "noisy-or", seed: int = 0) -> gu.ModelSpec:
    return gu.random_model(
        5, 2, 2, 2, family, extra_impure_rows=TOY_EXTRA_ROWS, rng_seed=seed
    )


def toy_tensor(family: str = "noisy-or", seed: int = 0):
    spec = toy_model(family, seed)
    latent, cpts = gu.compile_model(spec)
    return spec, latent, cpts, gu.population_tensor(latent, cpts)


@pytest.fixture
def toy():
    return toy_tensor()
