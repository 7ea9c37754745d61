"""Shared fixtures: oracle worlds and small simulated datasets."""

import numpy as np
import pytest

from lumiloc.datamodel import Dataset, make_grid
from lumiloc.simenv import NoiseModel, default_room, generate_dataset


def affine_world(per_point: int = 1, seed: int = 0, extent: float = 7.0, spacing: float = 1.0):
    """Noiseless world where the fingerprint is an affine map of position.

    A closed-form linear regression recovers coordinates exactly (checked
    in tests), so any sane localizer must fit it: the learnability oracle.
    """
    rng = np.random.default_rng(seed)
    mix = rng.uniform(1.0, 9.0, size=(10, 2))
    offset = rng.uniform(10.0, 50.0, size=10)
    grid = make_grid(extent, spacing)
    locs = np.array([[p.x, p.y] for p in grid for _ in range(per_point)])
    feats = locs @ mix.T + offset
    return Dataset("spectral", feats, locs, extent=(extent, extent)), grid


@pytest.fixture(scope="session")
def affine_dataset():
    return affine_world(per_point=1, seed=0)


@pytest.fixture(scope="session")
def small_sim_world():
    """A 4x4-point slice of the default room, 8 samples per point."""
    room = default_room((7.0, 7.0))
    noise = NoiseModel()
    grid = [p for p in make_grid(7.0, 2.0)]  # 16 points
    ds = generate_dataset(room, noise, grid, 8, "spectral", seed=11)
    return room, noise, grid, ds
