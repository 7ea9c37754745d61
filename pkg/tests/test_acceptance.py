"""Acceptance suite: one test per exit criterion, each printing a
PASS/FAIL line (run with -s to see them). Criteria 6 and 7 share one
desk-scale pipeline batch configured by configs/exp1_fast.json; package
and CLI defaults stay at the full-scale settings."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from lumiloc.augment import GanConfig, freegan_generate, pointgan_generate, train_freegan, train_pointgan
from lumiloc.cli import main as cli_main
from lumiloc.datamodel import Coordinate, coordinate_split, make_grid
from lumiloc.evaluation import (
    CostModel,
    ExperimentProfile,
    estimate_cost,
    normalized_std,
    rmse,
    run_experiment1,
    _execute_jobs,
)
from lumiloc.locmodel import (
    LocConfig,
    WLM_CONFIG,
    load_localizer,
    predict_batch,
    sample_search_config,
    save_localizer,
    train_localizer,
)
from lumiloc.numerics import (
    AdamState,
    LayerSpec,
    MlpNet,
    adam_step,
    gradient_check,
    mac_counter,
    mlp_forward,
)
from lumiloc.simenv import (
    NoiseModel,
    default_room,
    generate_dataset,
    sim_config_from_json,
    sim_config_to_json,
)
from tests.conftest import affine_world

pytestmark = pytest.mark.acceptance

REPO = Path(__file__).resolve().parent.parent
FAST_CONFIG = json.loads((REPO / "configs" / "exp1_fast.json").read_text())


def report(num: int, name: str, ok: bool, detail: str):
    print(f"\n[ACCEPTANCE {num}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


class TestCriterion1GradientFidelity:
    def test_gradient_checks_for_every_layer_type(self):
        t0 = time.perf_counter()
        cases = [
            ("linear", [LayerSpec(3, 2, "identity")]),
            ("relu", [LayerSpec(4, 6, "relu"), LayerSpec(6, 2)]),
            ("leaky_relu", [LayerSpec(4, 6, "leaky_relu"), LayerSpec(6, 2)]),
            ("sigmoid", [LayerSpec(4, 6, "sigmoid"), LayerSpec(6, 1, "sigmoid")]),
            ("batch_norm", [LayerSpec(4, 6, "relu", batch_norm=True), LayerSpec(6, 2)]),
            (
                "mixed",
                [
                    LayerSpec(5, 8, "relu", batch_norm=True),
                    LayerSpec(8, 6, "leaky_relu"),
                    LayerSpec(6, 4, "sigmoid"),
                    LayerSpec(4, 2),
                ],
            ),
        ]
        worst = 0.0
        rng = np.random.default_rng(7)
        for name, specs in cases:
            net = MlpNet(specs, np.random.default_rng(11))
            batch = rng.normal(size=(8, specs[0].in_dim))
            if specs[-1].activation == "sigmoid":
                targets = rng.integers(0, 2, size=(8, specs[-1].out_dim)).astype(float)
                res = gradient_check(net, batch, "bce", targets)
            else:
                targets = rng.normal(size=(8, specs[-1].out_dim))
                res = gradient_check(net, batch, "mse", targets)
            worst = max(worst, res.max_rel_error)
        elapsed = time.perf_counter() - t0
        ok = worst < 1e-4 and elapsed < 10.0
        report(1, "gradient fidelity", ok, f"max rel err {worst:.3e}, {elapsed:.1f}s")


class TestCriterion2Optimizer:
    def test_adam_first_step_and_zero_grad(self):
        theta = np.array([1.0, -2.0, 0.25, 100.0])
        grad = np.array([0.3, -0.7, 1e-3, -250.0])
        lr, eps = 0.01, 1e-8
        state = AdamState.for_params([theta], learning_rate=lr, epsilon=eps)
        expected = theta - lr * grad / (np.abs(grad) + eps)
        adam_step([theta], [grad], state)
        first_step_err = float(np.max(np.abs(theta - expected)))

        params = [np.array([3.0, -4.0])]
        before = [p.copy() for p in params]
        state2 = AdamState.for_params(params, learning_rate=0.5)
        adam_step(params, [np.zeros(2)], state2)
        noop = np.array_equal(params[0], before[0])

        ok = first_step_err < 1e-10 and noop
        report(2, "optimizer correctness", ok, f"first-step err {first_step_err:.2e}, zero-grad no-op {noop}")


class TestCriterion3MetricOracles:
    def test_metrics_match_brute_force(self):
        rng = np.random.default_rng(3)
        worst_rmse = 0.0
        for _ in range(100):
            n = int(rng.integers(1, 10))
            preds = rng.normal(size=(n, 2)) * 5
            truths = rng.normal(size=(n, 2)) * 5
            brute = math.sqrt(
                sum((p[0] - t[0]) ** 2 + (p[1] - t[1]) ** 2 for p, t in zip(preds, truths)) / n
            )
            worst_rmse = max(worst_rmse, abs(rmse(preds, truths) - brute))

        worst_nstd = 0.0
        for _ in range(100):
            n = int(rng.integers(2, 12))
            d = int(rng.integers(1, 11))
            samples = rng.uniform(0.5, 9.0, size=(n, d))
            mu = samples.mean(axis=0)
            brute = float(np.mean(samples.std(axis=0) / np.abs(mu)))
            worst_nstd = max(worst_nstd, abs(normalized_std(samples) - brute))

        samples = rng.uniform(1.0, 4.0, size=(6, 10))
        base = normalized_std(samples)
        worst_scale = max(
            abs(normalized_std(samples * float(c)) - base)
            for c in rng.uniform(1e-6, 1e6, size=100)
        )
        ok = worst_rmse < 1e-12 and worst_nstd < 1e-12 and worst_scale < 1e-12
        report(
            3,
            "metric oracles",
            ok,
            f"rmse dev {worst_rmse:.1e}, nstd dev {worst_nstd:.1e}, scale dev {worst_scale:.1e}",
        )


class TestCriterion4StabilityContrast:
    def test_default_simulator_bands(self):
        t0 = time.perf_counter()
        room = default_room((7.0, 7.0))
        noise = NoiseModel()
        grid = make_grid(7.0, 1.0)
        spectral = generate_dataset(room, noise, grid, 32, "spectral", seed=4)
        rssi = generate_dataset(room, noise, grid, 32, "rssi", seed=4)
        s_vals = [normalized_std(spectral.subset_by_coords([p]).features) for p in grid]
        r_vals = [normalized_std(rssi.subset_by_coords([p]).features) for p in grid]
        elapsed = time.perf_counter() - t0
        s_lo, s_hi = min(s_vals), max(s_vals)
        r_lo, r_hi = min(r_vals), max(r_vals)
        ratio = float(np.mean(r_vals) / np.mean(s_vals))
        ok = (
            2e-4 <= s_lo
            and s_hi <= 8e-4
            and 0.015 <= r_lo
            and r_hi <= 0.06
            and ratio >= 10.0
            and elapsed < 30.0
        )
        report(
            4,
            "stability contrast",
            ok,
            f"spectral [{s_lo:.2e},{s_hi:.2e}], rssi [{r_lo:.3f},{r_hi:.3f}], ratio {ratio:.0f}x, {elapsed:.1f}s",
        )


class TestCriterion5Learnability:
    def test_plain_mlp_on_affine_world(self):
        t0 = time.perf_counter()
        ds, grid = affine_world(per_point=1, seed=0)
        train_pts, test_pts = coordinate_split(grid, 50, seed=1)
        model = train_localizer(
            ds.subset_by_coords(train_pts),
            LocConfig(hidden_size=128, dropout_rate=0.0, learning_rate=1e-3, epochs=700),
            seed=0,
        )
        test_ds = ds.subset_by_coords(test_pts)
        err = rmse(predict_batch(model, test_ds.features), test_ds.locations)
        elapsed = time.perf_counter() - t0
        ok = err < 0.3 and elapsed < 120.0
        report(5, "learnability oracle", ok, f"held-out rmse {err:.3f} m, {elapsed:.1f}s")


@pytest.fixture(scope="session")
def pipeline_batch():
    """Criteria 6/7 batch: 50/64 split, seeds 0..4, desk-scale profile.

    Twenty pipeline jobs (three spectral methods plus the rssi baseline,
    per seed) run across two workers; returns per-method mean RMSE and
    the wall-clock of the whole batch.
    """
    profile = ExperimentProfile.from_json(FAST_CONFIG["profile"])
    world_doc = sim_config_to_json(sim_config_from_json(FAST_CONFIG["world"]))
    seeds = FAST_CONFIG["seeds"]
    payloads = []
    for seed in seeds:
        for modality, method in (
            ("spectral", "mlp"),
            ("spectral", "mlp+pointgan"),
            ("spectral", "mlp+freegan"),
            ("rssi", "mlp"),
        ):
            payloads.append(
                {
                    "world": world_doc,
                    "data_seed": 0,
                    "modality": modality,
                    "method": method,
                    "env": "clean",
                    "n_train": 50,
                    "seed": seed,
                    "split_label": "acceptance-split",
                    "profile": profile.to_json(),
                    "strong_config": profile.to_json()["strong_config"],
                }
            )
    t0 = time.perf_counter()
    outcomes = _execute_jobs(payloads, jobs=2)
    elapsed = time.perf_counter() - t0
    means: dict[tuple, float] = {}
    for key in {("spectral", "mlp"), ("spectral", "mlp+pointgan"), ("spectral", "mlp+freegan"), ("rssi", "mlp")}:
        vals = [
            o["rmse_m"]
            for o in outcomes
            if (o["modality"], o["method"]) == key and "rmse_m" in o
        ]
        assert len(vals) == len(seeds), f"missing runs for {key}"
        means[key] = float(np.mean(vals))
    return means, elapsed


class TestCriterion6AugmentationBenefit:
    def test_augmented_means_do_not_regress(self, pipeline_batch):
        means, elapsed = pipeline_batch
        base = means[("spectral", "mlp")]
        pg = means[("spectral", "mlp+pointgan")]
        fg = means[("spectral", "mlp+freegan")]
        ok = pg <= base and fg <= 1.1 * base and elapsed < 1200.0
        report(
            6,
            "augmentation benefit",
            ok,
            f"mlp {base:.3f}, +pointgan {pg:.3f}, +freegan {fg:.3f} (<= {1.1*base:.3f}), {elapsed/60:.1f} min",
        )


class TestCriterion7ModalityGap:
    def test_spectral_beats_rssi(self, pipeline_batch):
        means, _ = pipeline_batch
        spectral = means[("spectral", "mlp")]
        rssi_m = means[("rssi", "mlp")]
        ok = spectral < rssi_m
        report(7, "modality gap", ok, f"spectral mlp {spectral:.3f} < rssi mlp {rssi_m:.3f}")


MICRO_PROFILE = ExperimentProfile(
    gan_epochs=2,
    strong_config=LocConfig(8, 0.0, 1e-3, epochs=2),
    pointgan_per_point=2,
    freegan_count=10,
)


class TestCriterion8ProtocolArithmetic:
    def test_counts(self, tmp_path):
        world = sim_config_from_json(
            {"preset": "spectral-wifimix", "grid_spacing": 2.0, "samples_per_point": 2}
        )
        result = run_experiment1(world, seeds=tuple(range(20)), profile=MICRO_PROFILE, jobs=2)
        exp1_n = len(result.results)

        room = default_room((7.0, 7.0))
        noise = NoiseModel()
        grid64 = make_grid(7.0, 1.0)
        ds_2048 = generate_dataset(room, noise, grid64, 32, "spectral", seed=8)
        grid121 = make_grid(5.0, 0.5)
        ds_1210 = generate_dataset(default_room((5.0, 5.0)), noise, grid121, 10, "spectral", seed=8)

        one_point = generate_dataset(room, noise, [Coordinate(3.0, 3.0)], 32, "spectral", seed=8)
        pg, _ = train_pointgan(one_point, GanConfig(epochs=2), seed=0)
        pg_count = len(pointgan_generate(pg, grid64, per_point=100, seed=0))
        fg, _ = train_freegan(one_point, GanConfig(epochs=2), seed=0)
        fg_count = len(freegan_generate(fg, seed=0))

        ok = (
            exp1_n == 360
            and len(ds_2048) == 2048
            and len(ds_1210) == 1210
            and pg_count == 6400
            and fg_count == 50000
        )
        report(
            8,
            "protocol arithmetic",
            ok,
            f"exp1 {exp1_n} results, datasets {len(ds_2048)}/{len(ds_1210)}, "
            f"pointgan {pg_count}, freegan {fg_count}",
        )


class TestCriterion9CostModel:
    def test_instrumented_equality_and_ordering(self):
        rng = np.random.default_rng(9)
        all_equal = True
        for _ in range(3):
            d = int(rng.integers(4, 16))
            h = int(rng.integers(8, 200))
            l = int(rng.integers(2, 6))
            b = int(rng.integers(1, 9))
            specs = [LayerSpec(d, h, "relu")] + [
                LayerSpec(h, h, "relu") for _ in range(l - 2)
            ] + [LayerSpec(h, 2)]
            net = MlpNet(specs, rng).eval()
            with mac_counter:
                mlp_forward(net, rng.random((b, d)))
                counted = mac_counter.count
            all_equal &= counted == b * estimate_cost(CostModel(d=d, h=h, l=l), "mlp_fwd")

        wlm_cost = estimate_cost(CostModel(d=10, h=WLM_CONFIG.hidden_size, l=5), "mlp_fwd")
        search_rng = np.random.default_rng(10)
        ordering = True
        checked = 0
        while checked < 200:
            cfg = sample_search_config(search_rng)
            if cfg.hidden_size < 256:
                continue
            checked += 1
            ordering &= wlm_cost < estimate_cost(
                CostModel(d=10, h=cfg.hidden_size, l=5), "mlp_fwd"
            )
        ok = all_equal and ordering
        report(
            9,
            "cost model",
            ok,
            f"instrumented equality {all_equal}, WLM<strong for {checked} wide searched configs {ordering}",
        )


class TestCriterion10DeterminismPersistence:
    def test_byte_identical_results_and_model_round_trip(self, tmp_path):
        exp_cfg = {
            "world": {"preset": "spectral-wifimix", "grid_spacing": 2.0, "samples_per_point": 2},
            "profile": MICRO_PROFILE.to_json(),
            "seeds": [0, 1],
        }
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps(exp_cfg))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert cli_main(["experiment", "exp1", "--config", str(cfg_path), "--seed", "5", "--out", str(out_a)]) == 0
        assert cli_main(["experiment", "exp1", "--config", str(cfg_path), "--seed", "5", "--out", str(out_b)]) == 0
        results_identical = (out_a / "results.csv").read_bytes() == (out_b / "results.csv").read_bytes()

        gen_a, gen_b = tmp_path / "ga", tmp_path / "gb"
        world_path = tmp_path / "world.json"
        world_path.write_text(
            json.dumps({"preset": "spectral-wifimix", "grid_spacing": 2.0, "samples_per_point": 3})
        )
        assert cli_main(["gen", "--config", str(world_path), "--seed", "2", "--out", str(gen_a)]) == 0
        assert cli_main(["gen", "--config", str(world_path), "--seed", "2", "--out", str(gen_b)]) == 0
        gen_identical = (gen_a / "spectral.csv").read_bytes() == (gen_b / "spectral.csv").read_bytes()

        ds, _ = affine_world(per_point=1, seed=3)
        model = train_localizer(ds, LocConfig(32, 0.2, 1e-3, epochs=40), seed=6)
        before = predict_batch(model, ds.features)
        model_path = tmp_path / "model.json"
        save_localizer(model, model_path)
        after = predict_batch(load_localizer(model_path), ds.features)
        persist_err = float(np.max(np.abs(before - after)))

        ok = results_identical and gen_identical and persist_err < 1e-12
        report(
            10,
            "determinism & persistence",
            ok,
            f"results byte-identical {results_identical}, gen byte-identical {gen_identical}, "
            f"save/load err {persist_err:.1e}",
        )
