"""Pilot: augmentation ordering as a function of strong-model dropout."""

import sys
import time

import numpy as np

from lumiloc.augment import GanConfig, build_augmented, pointgan_generate, train_pointgan
from lumiloc.datamodel import coordinate_split, make_grid
from lumiloc.locmodel import LocConfig, predict_batch, train_localizer
from lumiloc.simenv import NoiseModel, default_room, generate_dataset


def rmse(p, t):
    return float(np.sqrt(np.mean(np.sum((p - t) ** 2, axis=1))))


if __name__ == "__main__":
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    room = default_room((7.0, 7.0))
    grid = make_grid(7.0, 1.0)
    ds = generate_dataset(room, NoiseModel(), grid, 32, "spectral", seed=0)
    tr_pts, te_pts = coordinate_split(grid, 50, seed=seed)
    tr, te = ds.subset_by_coords(tr_pts), ds.subset_by_coords(te_pts)

    t0 = time.perf_counter()
    bundle, _ = train_pointgan(tr, GanConfig(epochs=1500, learning_rate=3e-4), seed=seed)
    synth = pointgan_generate(bundle, tr_pts, per_point=100, seed=seed)
    aug = build_augmented(tr, synth)
    print(f"gan ready ({time.perf_counter()-t0:.0f}s)", flush=True)

    for drop, lr in ((0.2, 5e-3), (0.2, 3e-3), (0.3, 5e-3)):
        cfg = LocConfig(256, drop, lr, epochs=300)
        m0 = train_localizer(tr, cfg, seed=seed)
        r0 = rmse(predict_batch(m0, te.features), te.locations)
        m1 = train_localizer(aug, cfg, seed=seed)
        r1 = rmse(predict_batch(m1, te.features), te.locations)
        print(f"seed {seed} drop {drop} lr {lr}: mlp {r0:.3f}  +pointgan {r1:.3f}", flush=True)
