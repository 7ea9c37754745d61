"""Pilot: conditional bias/std of the conditioned GAN vs lr and epochs."""

import time

import numpy as np

from lumiloc.augment import GanConfig, pointgan_generate, train_pointgan
from lumiloc.datamodel import coordinate_split, make_grid
from lumiloc.simenv import NoiseModel, default_room, expected_spectral, generate_dataset

room = default_room((7.0, 7.0))
noise = NoiseModel()
grid = make_grid(7.0, 1.0)
ds = generate_dataset(room, noise, grid, 32, "spectral", seed=0)
tr_pts, _ = coordinate_split(grid, 50, seed=0)
tr = ds.subset_by_coords(tr_pts)


def cond_stats(bundle, pts, n=300):
    batch = pointgan_generate(bundle, pts, per_point=n, seed=9)
    biases, stds = [], []
    for i, p in enumerate(pts):
        chunk = batch.fingerprints[i * n : (i + 1) * n]
        true_norm = bundle.norm.normalize_features(expected_spectral(room, p)[None, :])[0]
        biases.append(np.abs(chunk.mean(axis=0) - true_norm).mean())
        stds.append(chunk.std(axis=0).mean())
    return float(np.mean(biases)), float(np.mean(stds))


if __name__ == "__main__":
    for lr, epochs in [(3e-4, 1500), (5e-4, 1500), (3e-4, 3000)]:
        t0 = time.perf_counter()
        bundle, traces = train_pointgan(tr, GanConfig(epochs=epochs, learning_rate=lr), seed=0)
        bias, std = cond_stats(bundle, tr_pts[:12])
        print(
            f"lr={lr} ep={epochs}: cond bias {bias:.4f} std {std:.4f} "
            f"dloss {traces.d_loss[-1]:.3f} ({time.perf_counter()-t0:.0f}s)",
            flush=True,
        )
