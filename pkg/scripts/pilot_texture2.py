"""Pilot: recalibrated texture — baselines, GAN bias, ordering."""

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
from lumiloc.simenv import NoiseModel, default_room, expected_spectral, generate_dataset

STRONG = LocConfig(256, 0.25, 2e-3, epochs=300)
PG = GanConfig(epochs=1500, learning_rate=3e-4)
FG = GanConfig(epochs=800, learning_rate=3e-4, ema_decay=0.999)


def rmse(p, t):
    return float(np.sqrt(np.mean(np.sum((p - t) ** 2, axis=1))))


if __name__ == "__main__":
    seeds = [int(s) for s in sys.argv[1].split(",")]
    room = default_room((7.0, 7.0))
    grid = make_grid(7.0, 1.0)
    spectral = generate_dataset(room, NoiseModel(), grid, 32, "spectral", seed=0)
    rssi = generate_dataset(room, NoiseModel(), grid, 32, "rssi", seed=0)

    # one-off conditional-bias probe on the first seed's split
    tr_pts0, _ = coordinate_split(grid, 50, seed=seeds[0])
    tr0 = spectral.subset_by_coords(tr_pts0)
    bundle, _ = train_pointgan(tr0, PG, seed=seeds[0])
    probe = pointgan_generate(bundle, tr_pts0[:12], per_point=200, seed=9)
    biases = []
    for i, p in enumerate(tr_pts0[:12]):
        chunk = probe.fingerprints[i * 200 : (i + 1) * 200]
        truth = bundle.norm.normalize_features(expected_spectral(room, p)[None, :])[0]
        biases.append(np.abs(chunk.mean(axis=0) - truth).mean())
    print(f"cond bias at new texture: {np.mean(biases):.4f}", flush=True)

    rows = []
    for seed in seeds:
        t0 = time.time()
        tr_pts, te_pts = coordinate_split(grid, 50, seed=seed)
        tr, te = spectral.subset_by_coords(tr_pts), spectral.subset_by_coords(te_pts)

        m0 = train_localizer(tr, STRONG, seed=seed)
        r_mlp = rmse(predict_batch(m0, te.features), te.locations)

        if seed == seeds[0]:
            pg_bundle = bundle
        else:
            pg_bundle, _ = train_pointgan(tr, PG, seed=seed)
        synth = pointgan_generate(pg_bundle, tr_pts, per_point=100, seed=seed)
        m1 = train_localizer(build_augmented(tr, synth), STRONG, seed=seed)
        r_pg = rmse(predict_batch(m1, te.features), te.locations)

        wlm = train_weak_model(tr, seed=seed)
        fg_bundle, _ = train_freegan(tr, FG, seed=seed)
        fsyn = pseudo_label(wlm, freegan_generate(fg_bundle, n=2500, seed=seed))
        m2 = train_localizer(build_augmented(tr, fsyn), STRONG, seed=seed)
        r_fg = rmse(predict_batch(m2, te.features), te.locations)

        rtr, rte = rssi.subset_by_coords(tr_pts), rssi.subset_by_coords(te_pts)
        mr = train_localizer(rtr, STRONG, seed=seed)
        r_rssi = rmse(predict_batch(mr, rte.features), rte.locations)

        rows.append((r_mlp, r_pg, r_fg, r_rssi))
        print(
            f"seed {seed}: mlp {r_mlp:.3f}  +pg {r_pg:.3f}  +fg {r_fg:.3f}  rssi {r_rssi:.3f}"
            f"  ({time.time()-t0:.0f}s)",
            flush=True,
        )
    arr = np.array(rows)
    print(
        f"MEANS  mlp {arr[:,0].mean():.3f}  +pg {arr[:,1].mean():.3f}"
        f"  +fg {arr[:,2].mean():.3f}  rssi {arr[:,3].mean():.3f}",
        flush=True,
    )
