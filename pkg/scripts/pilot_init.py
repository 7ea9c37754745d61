"""Pilot: generator output-bias logit init effect on conditional bias."""

import time

import numpy as np

import lumiloc.augment as aug
from lumiloc.augment import GanConfig, pointgan_generate, train_pointgan
from lumiloc.datamodel import coordinate_split, make_grid
from lumiloc.simenv import NoiseModel, default_room, expected_spectral, generate_dataset

room = default_room((7.0, 7.0))
grid = make_grid(7.0, 1.0)
ds = generate_dataset(room, NoiseModel(), grid, 32, "spectral", seed=0)
tr_pts, _ = coordinate_split(grid, 50, seed=0)
tr = ds.subset_by_coords(tr_pts)

orig = aug._train_gan


def patched(gen, disc, reals, conds, config, seed, capture_epoch):
    mean = np.clip(reals.mean(axis=0), 1e-3, 1 - 1e-3)
    gen.layers[-1].bias[:] = np.log(mean / (1 - mean))
    return orig(gen, disc, reals, conds, config, seed, capture_epoch)


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
    for use_patch, label in ((True, "logit-init"), (False, "plain")):
        aug._train_gan = patched if use_patch else orig
        t0 = time.perf_counter()
        bundle, _ = train_pointgan(tr, GanConfig(epochs=1500, learning_rate=3e-4), seed=0)
        bias, std = cond_stats(bundle, tr_pts[:12])
        print(f"{label}: bias {bias:.4f} std {std:.4f} ({time.perf_counter()-t0:.0f}s)", flush=True)
