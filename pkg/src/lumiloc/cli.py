"""Batch command-line interface.

Subcommands: gen, train, augment, eval, stability, experiment. Every
command resolves one master seed into labeled per-stage streams, writes
its outputs under --out, and drops a manifest.json recording the resolved
configuration, seeds, input/output digests, and stage timings. Exit
codes: 0 success, 2 usage or configuration error, 3 runtime divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .augment import (
    GanConfig,
    build_augmented,
    freegan_generate,
    pointgan_generate,
    pseudo_label,
    save_gan,
    train_freegan,
    train_pointgan,
)
from .datamodel import Dataset, read_dataset, write_dataset
from .errors import ContractViolation, CsvParseError, DivergenceError, LumilocError, SearchError
from .evaluation import (
    ExperimentProfile,
    normalized_std,
    results_to_csv_rows,
    rmse,
    run_experiment1,
    run_experiment2,
    summaries_to_json,
)
from .locmodel import (
    hyper_search,
    load_localizer,
    loc_config_from_json,
    loc_config_to_json,
    predict_batch,
    save_localizer,
    train_localizer,
    train_weak_model,
)
from .persist import file_digest
from .seeding import derive_seed
from .simenv import generate_dataset, sim_config_from_json, sim_config_to_json


class _Manifest:
    def __init__(self, command: str, seed: int, config_doc):
        self.doc = {
            "tool_version": __version__,
            "command": command,
            "master_seed": seed,
            "config": config_doc,
            "inputs": {},
            "outputs": {},
            "stage_seconds": {},
        }
        self._t0 = None
        self._stage = None

    def add_input(self, path):
        if path is not None:
            self.doc["inputs"][str(path)] = file_digest(path)

    def add_output(self, path):
        self.doc["outputs"][str(path)] = file_digest(path)

    def stage(self, name: str):
        self.finish_stage()
        self._stage = name
        self._t0 = time.perf_counter()
        return self

    def finish_stage(self):
        if self._stage is not None:
            self.doc["stage_seconds"][self._stage] = round(time.perf_counter() - self._t0, 3)
            self._stage = None

    def write(self, out_dir: Path):
        self.finish_stage()
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(self.doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, rows: list[list[str]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows)


def cmd_gen(args) -> int:
    doc = _load_config(args.config) or {"preset": "spectral-wifimix"}
    config = sim_config_from_json(doc)
    out = _out_dir(args)
    manifest = _Manifest("gen", args.seed, sim_config_to_json(config))
    manifest.add_input(args.config)
    grid = config.grid()
    for modality in config.modalities:
        manifest.stage(f"gen-{modality}")
        ds = generate_dataset(
            config.room,
            config.noise,
            grid,
            config.samples_per_point,
            modality,
            derive_seed(args.seed, f"gen-{modality}"),
        )
        path = out / f"{modality}.csv"
        write_dataset(ds, path)
        manifest.add_output(path)
        print(f"wrote {path} ({len(ds)} rows)")
    manifest.write(out)
    return 0


def cmd_train(args) -> int:
    doc = _load_config(args.config)
    data = read_dataset(args.data)
    out = _out_dir(args)
    manifest = _Manifest("train", args.seed, doc)
    manifest.add_input(args.config)
    manifest.add_input(args.data)

    if "config" in doc:
        config = loc_config_from_json(doc["config"])
        search_report = None
    else:
        search = doc.get("search", {})
        manifest.stage("search")
        config = hyper_search(
            data,
            trials=int(search.get("trials", 3)),
            seed=derive_seed(args.seed, "search"),
            epochs=search.get("epochs"),
        )
        search_report = loc_config_to_json(config)
    manifest.stage("train")
    model = train_localizer(data, config, derive_seed(args.seed, "train"))
    model_path = out / "model.json"
    save_localizer(model, model_path)
    manifest.add_output(model_path)
    if search_report is not None:
        report_path = out / "search.json"
        report_path.write_text(json.dumps(search_report, indent=2) + "\n", encoding="utf-8")
        manifest.add_output(report_path)
    manifest.write(out)
    print(f"wrote {model_path} (final training loss {model.loss_curve[-1][1]:.6g})")
    return 0


def _batch_to_dataset(batch) -> Dataset:
    return Dataset(
        batch.modality,
        batch.fingerprints_raw(),
        batch.labels(),
        np.full(len(batch), batch.origin, dtype="<U8"),
        batch.extent,
    )


def cmd_augment(args) -> int:
    doc = _load_config(args.config)
    data = read_dataset(args.data)
    out = _out_dir(args)
    manifest = _Manifest("augment", args.seed, {**doc, "method": args.method})
    manifest.add_input(args.config)
    manifest.add_input(args.data)

    gan_doc = doc.get("gan", {})
    gan_config = GanConfig(
        noise_dim=int(gan_doc.get("noise_dim", 32)),
        epochs=int(gan_doc.get("epochs", 5000)),
        learning_rate=float(gan_doc.get("learning_rate", 1e-4)),
        batch_size=int(gan_doc.get("batch_size", 4096)),
        ema_decay=float(gan_doc.get("ema_decay", 0.0)),
    )
    diagnostics = {"method": args.method}
    if args.method == "pointgan":
        manifest.stage("train-gan")
        bundle, _ = train_pointgan(data, gan_config, derive_seed(args.seed, "pointgan"))
        manifest.stage("generate")
        batch = pointgan_generate(
            bundle,
            data.points(),
            per_point=int(doc.get("per_point", 100)),
            seed=derive_seed(args.seed, "pointgan-gen"),
        )
    else:
        manifest.stage("train-wlm")
        wlm = train_weak_model(data, derive_seed(args.seed, "wlm"))
        wlm_path = out / "wlm.json"
        save_localizer(wlm, wlm_path)
        manifest.add_output(wlm_path)
        manifest.stage("train-gan")
        bundle, _ = train_freegan(data, gan_config, derive_seed(args.seed, "freegan"))
        manifest.stage("generate")
        batch = freegan_generate(
            bundle, n=int(doc.get("count", 50000)), seed=derive_seed(args.seed, "freegan-gen")
        )
        manifest.stage("pseudo-label")
        batch = pseudo_label(wlm, batch)
        diagnostics["wlm_digest"] = batch.wlm_digest
        diagnostics["out_of_extent_fraction"] = batch.out_of_extent_fraction()

    gan_path = out / "gan.json"
    save_gan(bundle, gan_path)
    manifest.add_output(gan_path)
    synth_path = out / "synthetic.csv"
    write_dataset(_batch_to_dataset(batch), synth_path)
    manifest.add_output(synth_path)
    diag_path = out / "diagnostics.json"
    diag_path.write_text(json.dumps(diagnostics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest.add_output(diag_path)
    manifest.write(out)
    print(f"wrote {synth_path} ({len(batch)} rows)")
    return 0


def cmd_eval(args) -> int:
    model = load_localizer(args.model)
    data = read_dataset(args.data)
    if model.modality != data.modality:
        raise ContractViolation(
            f"model is {model.modality!r} but data is {data.modality!r}"
        )
    out = _out_dir(args)
    manifest = _Manifest("eval", args.seed, {})
    manifest.add_input(args.model)
    manifest.add_input(args.data)
    manifest.stage("predict")
    preds = predict_batch(model, data.features)
    err = rmse(preds, data.locations)
    per_sample = np.sqrt(np.sum((preds - data.locations) ** 2, axis=1))
    rows = [["x", "y", "pred_x", "pred_y", "error_m"]]
    for loc, pred, e in zip(data.locations, preds, per_sample):
        rows.append([repr(float(v)) for v in (*loc, *pred, e)])
    errors_path = out / "errors.csv"
    _write_csv(errors_path, rows)
    manifest.add_output(errors_path)
    report = {"rmse_m": err, "n_samples": len(data), "modality": data.modality}
    report_path = out / "eval.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest.add_output(report_path)
    manifest.write(out)
    print(f"rmse_m {err:.6g} over {len(data)} samples")
    return 0


def cmd_stability(args) -> int:
    data = read_dataset(args.data)
    out = _out_dir(args)
    manifest = _Manifest("stability", args.seed, {})
    manifest.add_input(args.data)
    manifest.stage("stability")
    rows = [["x", "y", "n_samples", "normalized_std"]]
    values = []
    for point in data.points():
        sub = data.subset_by_coords([point])
        value = normalized_std(sub.features)
        values.append(value)
        rows.append([repr(point.x), repr(point.y), str(len(sub)), repr(value)])
    table_path = out / "stability.csv"
    _write_csv(table_path, rows)
    manifest.add_output(table_path)
    summary = {
        "mean": float(np.mean(values)),
        "min": float(np.min(values)),
        "max": float(np.max(values)),
        "n_points": len(values),
        "modality": data.modality,
    }
    summary_path = out / "stability.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest.add_output(summary_path)
    manifest.write(out)
    print(f"normalized std: mean {summary['mean']:.6g} over {len(values)} points")
    return 0


def cmd_experiment(args) -> int:
    doc = _load_config(args.config)
    out = _out_dir(args)
    manifest = _Manifest(f"experiment-{args.which}", args.seed, doc)
    manifest.add_input(args.config)
    profile = ExperimentProfile.from_json(doc.get("profile", {}))
    seeds = tuple(doc.get("seeds", range(20)))
    data_seed = int(doc.get("data_seed", args.seed))
    manifest.stage("run")
    if args.which == "exp1":
        world = sim_config_from_json(doc.get("world", {"preset": "spectral-wifimix"}))
        result = run_experiment1(world, seeds=seeds, profile=profile, jobs=args.jobs, data_seed=data_seed)
    else:
        clean = sim_config_from_json(doc.get("world", {"preset": "spectralrobust-clean"}))
        cluttered = sim_config_from_json(
            doc.get("world_cluttered", {"preset": "spectralrobust-cluttered"})
        )
        result = run_experiment2(
            clean, cluttered, seeds=seeds, profile=profile, jobs=args.jobs, data_seed=data_seed
        )
    results_path = out / "results.csv"
    _write_csv(results_path, results_to_csv_rows(result.results))
    manifest.add_output(results_path)
    summary_path = out / "summary.json"
    summary_path.write_text(
        json.dumps(summaries_to_json(result), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    manifest.add_output(summary_path)
    manifest.write(out)
    print(f"wrote {results_path} ({len(result.results)} results, {len(result.failures)} failures)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lumiloc",
        description="Spectral-fingerprint indoor localization pipeline",
    )
    parser.add_argument("--version", action="version", version=f"lumiloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--jobs", type=int, default=1, help="max parallel jobs")
        p.add_argument("--out", required=True, help="output directory")
        if data:
            p.add_argument("--data", required=True, help="dataset CSV")

    common(sub.add_parser("gen", help="generate simulated survey datasets"))
    common(sub.add_parser("train", help="train a localizer (search by default)"), data=True)
    p_aug = sub.add_parser("augment", help="train a GAN and emit synthetic fingerprints")
    common(p_aug, data=True)
    p_aug.add_argument("--method", choices=("pointgan", "freegan"), required=True)
    p_eval = sub.add_parser("eval", help="report RMSE of a model on a dataset")
    common(p_eval, data=True)
    p_eval.add_argument("--model", required=True, help="model JSON path")
    common(sub.add_parser("stability", help="per-coordinate normalized std"), data=True)
    p_exp = sub.add_parser("experiment", help="run a full experiment sweep")
    p_exp.add_argument("which", choices=("exp1", "exp2"))
    common(p_exp)
    return parser


_HANDLERS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "augment": cmd_augment,
    "eval": cmd_eval,
    "stability": cmd_stability,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (DivergenceError, SearchError) as exc:
        print(f"runtime divergence: {exc}", file=sys.stderr)
        return 3
    except (ContractViolation, CsvParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc!r}", file=sys.stderr)
        return 2
    except LumilocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
