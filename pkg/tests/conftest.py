"""Shared fixtures: small game instances of every family and the shipped config directory."""

import os

import numpy as np
import pytest

import privateequilibria
from privateequilibria.games.beach_mountain.beach_mountain_game import BeachMountainGame
from privateequilibria.games.lowerbound.lowerbound_game import LowerBoundGame, SubsetSumInstance
from privateequilibria.games.random_utility.random_utility_game import RandomAggregativeGame, RandomTableGame

PACKAGE_DIR = os.path.dirname(os.path.abspath(privateequilibria.__file__))


def config_path(family: str, name: str) -> str:
    return os.path.join(PACKAGE_DIR, "games", family, "configs", name)


@pytest.fixture
def beach_game() -> BeachMountainGame:
    return BeachMountainGame(["beach", "beach", "mountain", "beach", "mountain", "mountain"])


@pytest.fixture
def aggregative_game() -> RandomAggregativeGame:
    return RandomAggregativeGame.from_config(n=5, k=3, U=2, coupling=1.0, seed=3)


@pytest.fixture
def table_game() -> RandomTableGame:
    return RandomTableGame.from_config(n=3, k=2, U=2, seed=5)


@pytest.fixture
def independent_table_game() -> RandomTableGame:
    return RandomTableGame.from_config(n=3, k=2, U=2, seed=9, independent=True)


@pytest.fixture
def small_instance() -> SubsetSumInstance:
    return SubsetSumInstance.from_dict({"database": [1, 0, 1, 1], "queries": [[1, 3], [2, 3, 4]]})


@pytest.fixture
def small_lowerbound_game(small_instance) -> LowerBoundGame:
    return LowerBoundGame(small_instance)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
