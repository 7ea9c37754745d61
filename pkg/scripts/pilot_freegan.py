"""Pilot: freegan profile variants against the mlp baseline per seed."""

import sys
import time

import numpy as np

from lumiloc.augment import GanConfig, build_augmented, freegan_generate, pseudo_label, train_freegan
from lumiloc.datamodel import coordinate_split, make_grid
from lumiloc.locmodel import LocConfig, predict_batch, train_localizer, train_weak_model
from lumiloc.simenv import NoiseModel, default_room, generate_dataset

STRONG = LocConfig(256, 0.25, 2e-3, epochs=300)
BASELINES = {0: 0.786, 1: 0.730}  # measured; recomputed when absent


def rmse(p, t):
    return float(np.sqrt(np.mean(np.sum((p - t) ** 2, axis=1))))


if __name__ == "__main__":
    seeds = [int(s) for s in sys.argv[1].split(",")]
    room = default_room((7.0, 7.0))
    grid = make_grid(7.0, 1.0)
    spectral = generate_dataset(room, NoiseModel(), grid, 32, "spectral", seed=0)

    for seed in seeds:
        t0 = time.time()
        tr_pts, te_pts = coordinate_split(grid, 50, seed=seed)
        tr, te = spectral.subset_by_coords(tr_pts), spectral.subset_by_coords(te_pts)
        if seed in BASELINES:
            base = BASELINES[seed]
        else:
            m0 = train_localizer(tr, STRONG, seed=seed)
            base = rmse(predict_batch(m0, te.features), te.locations)
        wlm = train_weak_model(tr, seed=seed)
        fg, _ = train_freegan(tr, GanConfig(epochs=800, learning_rate=3e-4, ema_decay=0.999), seed=seed)
        fsyn = pseudo_label(wlm, freegan_generate(fg, n=2500, seed=seed))
        m2 = train_localizer(build_augmented(tr, fsyn), STRONG, seed=seed)
        r_fg = rmse(predict_batch(m2, te.features), te.locations)
        print(
            f"seed {seed}: mlp {base:.3f}  +fg(ema) {r_fg:.3f}  ratio {r_fg/base:.3f}"
            f"  ({time.time()-t0:.0f}s)",
            flush=True,
        )
