"""Pilot: modality gap and augmentation ordering on the default world.

Used to calibrate the desk-scale experiment profile; results land in the
README calibration notes.
"""

import sys
import time

import numpy as np

from lumiloc.augment import (
    GanConfig,
    build_augmented,
    freegan_generate,
    pointgan_generate,
    pseudo_label,
    train_freegan,
    train_pointgan,
)
from lumiloc.datamodel import coordinate_split, make_grid
from lumiloc.locmodel import LocConfig, predict_batch, train_localizer, train_weak_model
from lumiloc.simenv import NoiseModel, default_room, generate_dataset


def rmse(p, t):
    return float(np.sqrt(np.mean(np.sum((p - t) ** 2, axis=1))))


def main(seeds, gan_epochs, mlp_epochs, n_free):
    room = default_room((7.0, 7.0))
    noise = NoiseModel()
    grid = make_grid(7.0, 1.0)
    spectral = generate_dataset(room, noise, grid, 32, "spectral", seed=0)
    rssi = generate_dataset(room, noise, grid, 32, "rssi", seed=0)
    strong = LocConfig(256, 0.1, 2e-3, epochs=mlp_epochs)
    gan = GanConfig(epochs=gan_epochs, learning_rate=3e-4)

    rows = []
    for seed in seeds:
        t0 = time.time()
        tr_pts, te_pts = coordinate_split(grid, 50, seed=seed)
        tr = spectral.subset_by_coords(tr_pts)
        te = spectral.subset_by_coords(te_pts)

        m0 = train_localizer(tr, strong, seed=seed)
        r_mlp = rmse(predict_batch(m0, te.features), te.locations)

        pg, _ = train_pointgan(tr, gan, seed=seed)
        synth = pointgan_generate(pg, tr_pts, per_point=100, seed=seed)
        m1 = train_localizer(build_augmented(tr, synth), strong, seed=seed)
        r_pg = rmse(predict_batch(m1, te.features), te.locations)

        wlm = train_weak_model(tr, seed=seed)
        fg, _ = train_freegan(tr, gan, seed=seed)
        fsyn = pseudo_label(wlm, freegan_generate(fg, n=n_free, seed=seed))
        m2 = train_localizer(build_augmented(tr, fsyn), strong, seed=seed)
        r_fg = rmse(predict_batch(m2, te.features), te.locations)

        rtr = rssi.subset_by_coords(tr_pts)
        rte = rssi.subset_by_coords(te_pts)
        mr = train_localizer(rtr, strong, seed=seed)
        r_rssi = rmse(predict_batch(mr, rte.features), rte.locations)

        rows.append((r_mlp, r_pg, r_fg, r_rssi))
        print(
            f"seed {seed}: mlp {r_mlp:.3f}  +pointgan {r_pg:.3f}  +freegan {r_fg:.3f}"
            f"  rssi-mlp {r_rssi:.3f}  oof {fsyn.out_of_extent_fraction():.3f}"
            f"  ({time.time()-t0:.0f}s)",
            flush=True,
        )
    arr = np.array(rows)
    print(
        f"means: mlp {arr[:,0].mean():.3f}  +pointgan {arr[:,1].mean():.3f}"
        f"  +freegan {arr[:,2].mean():.3f}  rssi {arr[:,3].mean():.3f}",
        flush=True,
    )


if __name__ == "__main__":
    seeds = [int(s) for s in sys.argv[1].split(",")] if len(sys.argv) > 1 else [0, 1, 2]
    gan_epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 1000
    mlp_epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 300
    n_free = int(sys.argv[4]) if len(sys.argv) > 4 else 4000
    main(seeds, gan_epochs, mlp_epochs, n_free)
