"""Metrics, the cost model, and the two experiment harnesses.

The harnesses run the full pipeline per cell (coordinate split, GAN
training on the train side only, augmentation, strong-model training,
test-side RMSE) over many seeds and summarize each cell with quartiles.
An :class:`ExperimentProfile` carries the budget knobs; its defaults are
the full-scale training settings, while desk-scale runs pass a reduced
profile (the acceptance suite documents the one it uses).
"""

from __future__ import annotations

import hashlib
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .augment import (
    GanConfig,
    build_augmented,
    freegan_generate,
    pointgan_generate,
    pseudo_label,
    train_freegan,
    train_pointgan,
)
from .datamodel import Coordinate, Dataset, coordinate_split
from .errors import ContractViolation, EmptyInputError, LumilocError
from .locmodel import (
    LocConfig,
    hyper_search,
    loc_config_from_json,
    loc_config_to_json,
    predict_batch,
    train_localizer,
    train_weak_model,
)
from .seeding import derive_seed
from .simenv import SimConfig, generate_dataset, sim_config_from_json, sim_config_to_json

METHODS = ("mlp", "mlp+pointgan", "mlp+freegan")
EXPERIMENT1_X_PERCENTS = (50, 60, 70)
EXPERIMENT2_TRAIN_FRACTION = 0.6


def rmse(preds, truths) -> float:
    """Root-mean-square Euclidean positioning error, in meters."""
    preds = _as_xy(preds)
    truths = _as_xy(truths)
    if preds.shape != truths.shape:
        raise ContractViolation(f"length mismatch: {preds.shape} vs {truths.shape}")
    if preds.shape[0] == 0:
        raise EmptyInputError("rmse of zero pairs")
    return float(np.sqrt(np.mean(np.sum((preds - truths) ** 2, axis=1))))


def _as_xy(values) -> np.ndarray:
    if isinstance(values, np.ndarray):
        return values.reshape(-1, 2).astype(float)
    rows = [(v.x, v.y) if isinstance(v, Coordinate) else tuple(v) for v in values]
    return np.array(rows, dtype=float).reshape(-1, 2)


def normalized_std(samples: np.ndarray) -> float:
    """Mean over channels of (population std / |mean|) at one coordinate.

    Channels whose mean is zero contribute 0 (see
    :func:`normalized_std_breakdown` for the per-channel values and the
    zero-mean flags). Scale-invariant under positive channel scalings.
    """
    ratios, _ = normalized_std_breakdown(samples)
    return float(ratios.mean())


def normalized_std_breakdown(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ContractViolation("normalized_std needs >= 2 samples of equal dimension")
    mean = samples.mean(axis=0)
    std = samples.std(axis=0)  # population std
    zero_mean = mean == 0.0
    safe = np.where(zero_mean, 1.0, np.abs(mean))
    ratios = np.where(zero_mean, 0.0, std / safe)
    return ratios, zero_mean


@dataclass(frozen=True)
class QuartileSummary:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float

    def __post_init__(self):
        if not self.min <= self.q1 <= self.median <= self.q3 <= self.max:
            raise ContractViolation("quartile ordering violated")

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "QuartileSummary":
        arr = np.asarray(values, dtype=float)
        if arr.size == 0:
            raise EmptyInputError("summary of zero values")
        q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
        return cls(
            min=float(arr.min()),
            q1=float(q1),
            median=float(med),
            q3=float(q3),
            max=float(arr.max()),
            mean=float(arr.mean()),
        )

    def to_json(self) -> dict:
        return {
            "min": self.min,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.max,
            "mean": self.mean,
        }


# ---------------------------------------------------------------------------
# cost model


@dataclass(frozen=True)
class CostModel:
    """Symbolic sizes for the multiply-accumulate cost estimator.

    ``l`` counts affine layers of the localizer (hidden layers + output);
    ``conditioned`` selects the coordinate-conditioned GAN pair. Leave a
    field at None when a formula does not need it.
    """

    d: int | None = None
    h: int | None = None
    l: int | None = None
    b: int | None = None
    e: int | None = None
    e_gan: int | None = None
    z: int | None = None
    n: int | None = None
    n_aug: int | None = None
    n_free: int | None = None
    conditioned: bool = True


WLM_WIDTH = 128
WLM_LAYERS = 5
_GEN_HIDDEN = (128, 256)
_DISC_HIDDEN = (256, 128)


def _require(model: CostModel, which: str, *fields: str) -> list[int]:
    values = []
    for f in fields:
        v = getattr(model, f)
        if v is None:
            raise ContractViolation(f"estimate_cost({which!r}) needs field {f!r}")
        values.append(int(v))
    return values


def _mlp_fwd_macs(d: int, h: int, l: int) -> int:
    if l < 1:
        raise ContractViolation("l must be >= 1")
    if l == 1:
        return d * 2
    return d * h + (l - 2) * h * h + h * 2


def _gan_unit_macs(d: int, z: int, conditioned: bool) -> tuple[int, int]:
    g_in = z + 2 if conditioned else z
    d_in = d + 2 if conditioned else d
    c_g = g_in * _GEN_HIDDEN[0] + _GEN_HIDDEN[0] * _GEN_HIDDEN[1] + _GEN_HIDDEN[1] * d
    c_d = d_in * _DISC_HIDDEN[0] + _DISC_HIDDEN[0] * _DISC_HIDDEN[1] + _DISC_HIDDEN[1] * 1
    return c_g, c_d


def estimate_cost(model: CostModel, which: str) -> int:
    """Exact matmul multiply-accumulate counts of the implemented loops.

    Per-sample forward cost of an ``l``-layer width-``h`` localizer is
    d*h + (l-2)*h^2 + 2*h (a bare linear map for l=1). Training costs
    count forward plus backward (2x forward) over every sample of an
    epoch; one GAN iteration at batch size b costs 4*b generator units
    plus 9*b discriminator units, matching one discriminator and one
    generator update as implemented.
    """
    if which in ("mlp_fwd", "infer"):
        d, h, l = _require(model, which, "d", "h", "l")
        return _mlp_fwd_macs(d, h, l)
    if which == "mlp_epoch":
        d, h, l, n = _require(model, which, "d", "h", "l", "n")
        n_aug = int(model.n_aug or 0)
        return 3 * (n + n_aug) * _mlp_fwd_macs(d, h, l)
    if which == "gan_iter":
        d, z, n, b = _require(model, which, "d", "z", "n", "b")
        c_g, c_d = _gan_unit_macs(d, z, model.conditioned)
        eff = min(n, b)
        return 4 * eff * c_g + 9 * eff * c_d
    if which == "gan_epoch":
        d, z, n = _require(model, which, "d", "z", "n")
        c_g, c_d = _gan_unit_macs(d, z, model.conditioned)
        return 4 * n * c_g + 9 * n * c_d
    if which == "wlm_label":
        d, n_free = _require(model, which, "d", "n_free")
        return n_free * _mlp_fwd_macs(d, WLM_WIDTH, WLM_LAYERS)
    if which == "total":
        d, z, n, e_gan, e = _require(model, which, "d", "z", "n", "e_gan", "e")
        _require(model, which, "h", "l")
        c_g, c_d = _gan_unit_macs(d, z, model.conditioned)
        gan_epoch = 4 * n * c_g + 9 * n * c_d
        n_aug = int(model.n_aug or 0)
        mlp_epoch = 3 * (n + n_aug) * _mlp_fwd_macs(int(model.d), int(model.h), int(model.l))
        label = int(model.n_free or 0) * _mlp_fwd_macs(d, WLM_WIDTH, WLM_LAYERS)
        return e_gan * gan_epoch + e * mlp_epoch + label
    raise ContractViolation(f"unknown cost kind {which!r}")


# ---------------------------------------------------------------------------
# experiment harnesses


@dataclass(frozen=True)
class ExperimentProfile:
    """Budget knobs for a harness run; defaults are the full-scale settings.

    The freegan overrides fall back to the pointgan values when unset, so a
    single (epochs, lr) pair configures both flavors.
    """

    gan_epochs: int = 5000
    gan_learning_rate: float = 1e-4
    freegan_epochs: int | None = None
    freegan_learning_rate: float | None = None
    freegan_ema_decay: float = 0.0
    strong_config: LocConfig | None = None  # None -> one hyper search per modality
    search_trials: int = 3
    search_epochs: int | None = None
    pointgan_per_point: int = 100
    freegan_count: int = 50000
    top_k: int | None = None

    def pointgan_config(self) -> GanConfig:
        return GanConfig(epochs=self.gan_epochs, learning_rate=self.gan_learning_rate)

    def freegan_config(self) -> GanConfig:
        return GanConfig(
            epochs=self.freegan_epochs or self.gan_epochs,
            learning_rate=self.freegan_learning_rate or self.gan_learning_rate,
            ema_decay=self.freegan_ema_decay,
        )

    def to_json(self) -> dict:
        return {
            "gan_epochs": self.gan_epochs,
            "gan_learning_rate": self.gan_learning_rate,
            "freegan_epochs": self.freegan_epochs,
            "freegan_learning_rate": self.freegan_learning_rate,
            "freegan_ema_decay": self.freegan_ema_decay,
            "strong_config": (
                None if self.strong_config is None else loc_config_to_json(self.strong_config)
            ),
            "search_trials": self.search_trials,
            "search_epochs": self.search_epochs,
            "pointgan_per_point": self.pointgan_per_point,
            "freegan_count": self.freegan_count,
            "top_k": self.top_k,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentProfile":
        doc = dict(doc)
        strong = doc.get("strong_config")

        def opt(key, conv):
            return None if doc.get(key) is None else conv(doc[key])

        return cls(
            gan_epochs=int(doc.get("gan_epochs", 5000)),
            gan_learning_rate=float(doc.get("gan_learning_rate", 1e-4)),
            freegan_epochs=opt("freegan_epochs", int),
            freegan_learning_rate=opt("freegan_learning_rate", float),
            freegan_ema_decay=float(doc.get("freegan_ema_decay", 0.0)),
            strong_config=None if strong is None else loc_config_from_json(strong),
            search_trials=int(doc.get("search_trials", 3)),
            search_epochs=opt("search_epochs", int),
            pointgan_per_point=int(doc.get("pointgan_per_point", 100)),
            freegan_count=int(doc.get("freegan_count", 50000)),
            top_k=opt("top_k", int),
        )


@dataclass(frozen=True)
class RunResult:
    experiment: str
    modality: str
    method: str
    env: str
    n_train_coords: int
    seed: int
    rmse_m: float
    out_of_extent_frac: float
    train_seconds: float

    def __post_init__(self):
        if not (math.isfinite(self.rmse_m) and self.rmse_m >= 0):
            raise ContractViolation(f"rmse_m must be finite and >= 0, got {self.rmse_m}")

    def sort_key(self):
        return (self.experiment, self.env, self.modality, self.method, self.n_train_coords, self.seed)


@dataclass
class ExperimentResult:
    results: list[RunResult]
    failures: list[dict]
    summaries: dict[tuple, QuartileSummary]


def _fingerprint_hashes(ds: Dataset) -> set[bytes]:
    return {hashlib.sha256(row.tobytes()).digest() for row in ds.features}


def _assert_isolated(train: Dataset, test: Dataset) -> None:
    """Test-side coordinates and fingerprints must never enter training."""
    train_pts = {(c.x, c.y) for c in train.points()}
    test_pts = {(c.x, c.y) for c in test.points()}
    if train_pts & test_pts:
        raise ContractViolation("coordinate leak between train and test sides")
    if _fingerprint_hashes(train) & _fingerprint_hashes(test):
        raise ContractViolation("test fingerprints leaked into the training inputs")


def run_cell(
    dataset: Dataset,
    grid: list[Coordinate],
    n_train: int,
    method: str,
    strong_config: LocConfig,
    profile: ExperimentProfile,
    seed: int,
    split_label: str,
) -> tuple[float, float, float]:
    """One (split, method) pipeline run; returns (rmse_m, oof_frac, seconds).

    The split is coordinate-level; GANs, the weak model, and the strong
    model only ever see train-side data, which is asserted before any
    training happens.
    """
    if method not in METHODS:
        raise ContractViolation(f"unknown method {method!r}")
    train_pts, test_pts = coordinate_split(grid, n_train, derive_seed(seed, split_label))
    train_ds = dataset.subset_by_coords(train_pts)
    test_ds = dataset.subset_by_coords(test_pts)
    if len(test_ds) == 0:
        raise ContractViolation("empty test side; lower n_train")
    _assert_isolated(train_ds, test_ds)

    t0 = time.perf_counter()
    if method == "mlp":
        training_set = train_ds
    elif method == "mlp+pointgan":
        bundle, _ = train_pointgan(
            train_ds, profile.pointgan_config(), seed=derive_seed(seed, split_label + "-pointgan")
        )
        batch = pointgan_generate(
            bundle,
            train_pts,
            per_point=profile.pointgan_per_point,
            seed=derive_seed(seed, split_label + "-pointgan-gen"),
        )
        training_set = build_augmented(train_ds, batch, top_k=profile.top_k)
    else:
        wlm = train_weak_model(train_ds, seed=derive_seed(seed, split_label + "-wlm"))
        bundle, _ = train_freegan(
            train_ds, profile.freegan_config(), seed=derive_seed(seed, split_label + "-freegan")
        )
        batch = freegan_generate(
            bundle, n=profile.freegan_count, seed=derive_seed(seed, split_label + "-freegan-gen")
        )
        labeled = pseudo_label(wlm, batch)
        training_set = build_augmented(train_ds, labeled, top_k=profile.top_k)

    strong = train_localizer(training_set, strong_config, seed=derive_seed(seed, split_label + "-strong"))
    seconds = time.perf_counter() - t0

    preds = predict_batch(strong, test_ds.features)
    err = rmse(preds, test_ds.locations)
    if dataset.extent is not None:
        ex, ey = dataset.extent
        outside = (
            (preds[:, 0] < 0) | (preds[:, 0] > ex) | (preds[:, 1] < 0) | (preds[:, 1] > ey)
        )
        oof = float(outside.mean())
    else:
        oof = 0.0
    return err, oof, seconds


def _resolve_strong_config(
    dataset: Dataset, profile: ExperimentProfile, search_seed: int
) -> LocConfig:
    if profile.strong_config is not None:
        return profile.strong_config
    return hyper_search(
        dataset,
        trials=profile.search_trials,
        seed=search_seed,
        epochs=profile.search_epochs,
    )


def _summarize(results: Iterable[RunResult]) -> dict[tuple, QuartileSummary]:
    cells: dict[tuple, list[float]] = {}
    for r in results:
        key = (r.experiment, r.env, r.modality, r.method, r.n_train_coords)
        cells.setdefault(key, []).append(r.rmse_m)
    return {key: QuartileSummary.from_values(vals) for key, vals in sorted(cells.items())}


def _run_job(payload: dict) -> dict:
    """Worker entry: regenerate the dataset and run one cell."""
    world = sim_config_from_json(payload["world"])
    grid = world.grid()
    dataset = generate_dataset(
        world.room,
        world.noise,
        grid,
        world.samples_per_point,
        payload["modality"],
        payload["data_seed"],
    )
    profile = ExperimentProfile.from_json(payload["profile"])
    strong = loc_config_from_json(payload["strong_config"])
    try:
        err, oof, seconds = run_cell(
            dataset,
            grid,
            payload["n_train"],
            payload["method"],
            strong,
            profile,
            payload["seed"],
            payload["split_label"],
        )
    except LumilocError as exc:
        return {**payload, "error": str(exc)}
    return {**payload, "rmse_m": err, "oof": oof, "seconds": seconds}


def _execute_jobs(payloads: list[dict], jobs: int) -> list[dict]:
    if jobs <= 1:
        return [_run_job(p) for p in payloads]
    # fresh interpreters with single-threaded BLAS: n workers on n cores
    # beat one multithreaded process without oversubscription
    env_keys = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
    saved = {k: os.environ.get(k) for k in env_keys}
    for k in env_keys:
        os.environ[k] = "1"
    try:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            return list(pool.map(_run_job, payloads))
    finally:
        for k, v in saved.items():
            if v is None:
                os.environ.pop(k, None)
            else:
                os.environ[k] = v


def _collect(experiment: str, outcomes: list[dict]) -> ExperimentResult:
    results = []
    failures = []
    for o in outcomes:
        if "error" in o:
            failures.append(
                {
                    "experiment": experiment,
                    "modality": o["modality"],
                    "method": o["method"],
                    "env": o["env"],
                    "seed": o["seed"],
                    "error": o["error"],
                }
            )
            continue
        results.append(
            RunResult(
                experiment=experiment,
                modality=o["modality"],
                method=o["method"],
                env=o["env"],
                n_train_coords=o["n_train"],
                seed=o["seed"],
                rmse_m=o["rmse_m"],
                out_of_extent_frac=o["oof"],
                train_seconds=o["seconds"],
            )
        )
    results.sort(key=RunResult.sort_key)
    return ExperimentResult(results, failures, _summarize(results))


def run_experiment1(
    world: SimConfig,
    seeds: Sequence[int] = tuple(range(20)),
    profile: ExperimentProfile = ExperimentProfile(),
    jobs: int = 1,
    data_seed: int = 0,
) -> ExperimentResult:
    """Coordinate-level random-split comparison of both modalities.

    For every train share x in {50, 60, 70} percent of the reference
    points, every modality carried by the world, and every method, runs
    the full pipeline across the seeds. Splits are shared across
    modalities and methods of one (x, seed) pair, so comparisons are
    paired. Stage failures are recorded per cell and the sweep continues.
    """
    grid = world.grid()
    world_doc = sim_config_to_json(world)
    payloads = []
    for modality in world.modalities:
        dataset = generate_dataset(
            world.room, world.noise, grid, world.samples_per_point, modality,
            derive_seed(data_seed, f"gen-{modality}"),
        )
        strong = _resolve_strong_config(
            dataset, profile, derive_seed(data_seed, f"search-{modality}")
        )
        for x_pct in EXPERIMENT1_X_PERCENTS:
            n_train = round(len(grid) * x_pct / 100)
            for method in METHODS:
                for seed in seeds:
                    payloads.append(
                        {
                            "world": world_doc,
                            "data_seed": derive_seed(data_seed, f"gen-{modality}"),
                            "modality": modality,
                            "method": method,
                            "env": "clean",
                            "n_train": n_train,
                            "seed": seed,
                            "split_label": f"exp1-split-x{x_pct}",
                            "profile": profile.to_json(),
                            "strong_config": loc_config_to_json(strong),
                        }
                    )
    outcomes = _execute_jobs(payloads, jobs)
    return _collect("exp1", outcomes)


def run_experiment2(
    clean_world: SimConfig,
    cluttered_world: SimConfig,
    seeds: Sequence[int] = tuple(range(20)),
    profile: ExperimentProfile = ExperimentProfile(),
    jobs: int = 1,
    data_seed: int = 0,
) -> ExperimentResult:
    """Clean-versus-cluttered robustness sweep on the spectral modality."""
    payloads = []
    for env, world in (("clean", clean_world), ("cluttered", cluttered_world)):
        grid = world.grid()
        n_train = round(len(grid) * EXPERIMENT2_TRAIN_FRACTION)
        dataset = generate_dataset(
            world.room, world.noise, grid, world.samples_per_point, "spectral",
            derive_seed(data_seed, "gen-spectral"),
        )
        strong = _resolve_strong_config(
            dataset, profile, derive_seed(data_seed, f"search-{env}")
        )
        for method in METHODS:
            for seed in seeds:
                payloads.append(
                    {
                        "world": sim_config_to_json(world),
                        "data_seed": derive_seed(data_seed, "gen-spectral"),
                        "modality": "spectral",
                        "method": method,
                        "env": env,
                        "n_train": n_train,
                        "seed": seed,
                        "split_label": "exp2-split",
                        "profile": profile.to_json(),
                        "strong_config": loc_config_to_json(strong),
                    }
                )
    outcomes = _execute_jobs(payloads, jobs)
    return _collect("exp2", outcomes)


# train time stays out of the CSV on purpose: result files must be
# byte-identical across reruns of the same seed; timings go to the manifest
RESULT_COLUMNS = (
    "experiment",
    "modality",
    "method",
    "x",
    "seed",
    "rmse_m",
    "env",
    "out_of_extent_frac",
)


def results_to_csv_rows(results: Sequence[RunResult]) -> list[list[str]]:
    rows = [list(RESULT_COLUMNS)]
    for r in sorted(results, key=RunResult.sort_key):
        rows.append(
            [
                r.experiment,
                r.modality,
                r.method,
                str(r.n_train_coords),
                str(r.seed),
                repr(r.rmse_m),
                r.env,
                repr(r.out_of_extent_frac),
            ]
        )
    return rows


def summaries_to_json(result: ExperimentResult) -> dict:
    cells = []
    for key, summary in result.summaries.items():
        experiment, env, modality, method, n_train = key
        cells.append(
            {
                "experiment": experiment,
                "env": env,
                "modality": modality,
                "method": method,
                "x": n_train,
                "rmse_m": summary.to_json(),
            }
        )
    return {"cells": cells, "failures": result.failures}
