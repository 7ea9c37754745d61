"""Localization MLPs and their training loops.

Two roles share one architecture family (input -> n_hidden ReLU+dropout
layers -> linear 2-D output): the strong localizer, whose width, dropout
and learning rate come from a log-uniform random search, and the weak
pseudo-labeling model with a fixed narrow configuration trained on real
data only. Models train on min-max-normalized inputs and coordinates;
predictions are denormalized back to meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .datamodel import (
    Coordinate,
    Dataset,
    Fingerprint,
    NormStats,
    coordinate_split,
    fit_normalizer,
    modality_dim,
)
from .errors import (
    ContractViolation,
    DivergenceError,
    EmptyInputError,
    NumericOverflowError,
    SearchError,
)
from .numerics import AdamState, LayerSpec, MlpNet, adam_step, mlp_backward, mlp_forward, mse_loss
from .persist import (
    FORMAT_VERSION,
    load_document,
    net_from_json,
    net_to_json,
    norm_from_json,
    norm_to_json,
    save_document,
)
from .seeding import derive_seed, rng_for

SEARCH_HIDDEN_RANGE = (64, 1024)       # log-uniform, rounded
SEARCH_LR_RANGE = (1e-4, 1e-2)         # log-uniform
SEARCH_DROPOUT_RANGE = (0.1, 0.5)      # uniform
SEARCH_TRIALS = 3


@dataclass(frozen=True)
class LocConfig:
    hidden_size: int
    dropout_rate: float
    learning_rate: float
    n_hidden: int = 4
    epochs: int = 700
    batch_size: int = 4096
    betas: tuple[float, float] = (0.9, 0.999)

    def __post_init__(self):
        if self.hidden_size < 1 or self.n_hidden < 1:
            raise ContractViolation("hidden_size and n_hidden must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractViolation(f"dropout_rate must be in [0,1), got {self.dropout_rate}")
        if self.learning_rate <= 0:
            raise ContractViolation("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractViolation("epochs and batch_size must be >= 1")


#: fixed weak-model configuration: narrow on purpose so its forward cost
#: stays below any searched strong model of width >= 256
WLM_CONFIG = LocConfig(hidden_size=128, dropout_rate=0.1, learning_rate=1e-3)


def localizer_specs(in_dim: int, config: LocConfig) -> list[LayerSpec]:
    specs = []
    prev = in_dim
    for _ in range(config.n_hidden):
        specs.append(
            LayerSpec(prev, config.hidden_size, "relu", dropout_rate=config.dropout_rate)
        )
        prev = config.hidden_size
    specs.append(LayerSpec(prev, 2, "identity"))
    return specs


@dataclass
class TrainedLocalizer:
    net: MlpNet
    norm: NormStats
    config: LocConfig
    modality: str
    loss_curve: list[tuple[int, float]]
    optimizer_steps: int = 0


def train_localizer(data: Dataset, config: LocConfig, seed: int) -> TrainedLocalizer:
    """Train a localizer on (normalized) fingerprints and coordinates.

    Runs full-batch when the dataset fits in one batch, otherwise shuffled
    mini-batches. The loss curve records per-epoch training MSE in the
    normalized coordinate space; a non-finite loss aborts with the epoch.
    """
    if len(data) == 0:
        raise EmptyInputError("cannot train on an empty dataset")
    norm = fit_normalizer(data)
    x = norm.normalize_features(data.features)
    y = norm.normalize_locations(data.locations)

    net = MlpNet(localizer_specs(data.dim, config), rng_for(seed, "init"))
    params = net.parameters()
    state = AdamState.for_params(params, config.learning_rate, config.betas)
    rng_drop = rng_for(seed, "dropout")
    rng_shuffle = rng_for(seed, "shuffle")

    n = len(data)
    loss_curve: list[tuple[int, float]] = []
    for epoch in range(1, config.epochs + 1):
        if n <= config.batch_size:
            batches = [np.arange(n)]
        else:
            perm = rng_shuffle.permutation(n)
            batches = [
                perm[start : start + config.batch_size]
                for start in range(0, n, config.batch_size)
            ]
        total = 0.0
        try:
            for idx in batches:
                out, cache = mlp_forward(net, x[idx], rng_drop)
                loss, up = mse_loss(out, y[idx])
                grads, _ = mlp_backward(net, cache, up)
                adam_step(params, grads, state)
                total += loss * len(idx)
        except NumericOverflowError as exc:
            raise DivergenceError(epoch, f"epoch {epoch}: {exc}") from exc
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise DivergenceError(epoch)
        loss_curve.append((epoch, epoch_loss))
    net.eval()
    return TrainedLocalizer(net, norm, config, data.modality, loss_curve, state.step_count)


def predict_batch(model: TrainedLocalizer, features: np.ndarray) -> np.ndarray:
    """Eval-mode predictions in meters for raw fingerprint rows (n, d)."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != model.net.in_dim:
        raise ContractViolation(
            f"features shape {features.shape} incompatible with model input {model.net.in_dim}"
        )
    model.net.eval()
    out, _ = mlp_forward(model.net, model.norm.normalize_features(features))
    return model.norm.denormalize_locations(out)


def predict(model: TrainedLocalizer, fingerprint: Fingerprint | np.ndarray) -> Coordinate:
    """Predict a coordinate (meters) for one fingerprint; raw regression output."""
    if hasattr(fingerprint, "as_array"):
        expected = modality_dim(model.modality)
        arr = fingerprint.as_array()
        if arr.shape[0] != expected:
            raise ContractViolation("fingerprint dimension does not match model modality")
    else:
        arr = np.asarray(fingerprint, dtype=float)
    pred = predict_batch(model, arr.reshape(1, -1))[0]
    return Coordinate(float(pred[0]), float(pred[1]))


def sample_search_config(rng: np.random.Generator) -> LocConfig:
    """One random draw from the search space (log-uniform sizes and rates)."""
    lo, hi = SEARCH_HIDDEN_RANGE
    hidden = int(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))
    hidden = min(max(hidden, lo), hi)
    lr_lo, lr_hi = SEARCH_LR_RANGE
    lr = math.exp(rng.uniform(math.log(lr_lo), math.log(lr_hi)))
    dropout = rng.uniform(*SEARCH_DROPOUT_RANGE)
    return LocConfig(hidden_size=hidden, dropout_rate=float(dropout), learning_rate=float(lr))


def hyper_search(
    data: Dataset,
    trials: int = SEARCH_TRIALS,
    seed: int = 0,
    epochs: int | None = None,
) -> LocConfig:
    """Random search over the config space on an internal validation split.

    Uses an 80/20 coordinate-level partition of the data; returns the
    config with the lowest validation RMSE (meters), ties broken by the
    earliest trial. A diverging trial is skipped; if every trial fails a
    SearchError is raised. ``epochs`` optionally overrides the per-trial
    training length (the returned config keeps the default).
    """
    if trials < 1:
        raise ContractViolation("trials must be >= 1")
    points = data.points()
    if len(points) < 2:
        raise ContractViolation("hyper search needs at least 2 distinct coordinates")
    n_train = min(max(1, round(0.8 * len(points))), len(points) - 1)
    train_pts, val_pts = coordinate_split(points, n_train, derive_seed(seed, "search-split"))
    train_ds = data.subset_by_coords(train_pts)
    val_ds = data.subset_by_coords(val_pts)

    rng = rng_for(seed, "search-sample")
    best_config: LocConfig | None = None
    best_rmse = math.inf
    for trial in range(trials):
        config = sample_search_config(rng)
        run_config = config if epochs is None else replace(config, epochs=epochs)
        try:
            model = train_localizer(train_ds, run_config, derive_seed(seed, "search-trial", trial))
        except DivergenceError:
            continue
        preds = predict_batch(model, val_ds.features)
        val_rmse = math.sqrt(mse_loss(preds, val_ds.locations)[0])
        if val_rmse < best_rmse:
            best_rmse = val_rmse
            best_config = config
    if best_config is None:
        raise SearchError(f"all {trials} search trials diverged")
    return best_config


def train_weak_model(data: Dataset, seed: int) -> TrainedLocalizer:
    """Train the fixed narrow pseudo-labeling model on real data only."""
    counts = data.origin_counts()
    synthetic = set(counts) - {"real"}
    if synthetic:
        raise ContractViolation(
            f"weak model must train on real data only, found origins {sorted(synthetic)}"
        )
    return train_localizer(data, WLM_CONFIG, seed)


def loc_config_to_json(config: LocConfig) -> dict:
    return {
        "hidden_size": config.hidden_size,
        "dropout_rate": config.dropout_rate,
        "learning_rate": config.learning_rate,
        "n_hidden": config.n_hidden,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "betas": list(config.betas),
    }


def loc_config_from_json(doc: dict) -> LocConfig:
    return LocConfig(
        hidden_size=int(doc["hidden_size"]),
        dropout_rate=float(doc["dropout_rate"]),
        learning_rate=float(doc["learning_rate"]),
        n_hidden=int(doc.get("n_hidden", 4)),
        epochs=int(doc.get("epochs", 700)),
        batch_size=int(doc.get("batch_size", 4096)),
        betas=tuple(doc.get("betas", (0.9, 0.999))),
    )


def save_localizer(model: TrainedLocalizer, path: str | Path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "localizer",
        "modality": model.modality,
        "config": loc_config_to_json(model.config),
        "norm": norm_to_json(model.norm),
        "net": net_to_json(model.net),
    }
    save_document(doc, path)


def load_localizer(path: str | Path) -> TrainedLocalizer:
    doc = load_document(path, expected_kind="localizer")
    return TrainedLocalizer(
        net=net_from_json(doc["net"]),
        norm=norm_from_json(doc["norm"]),
        config=loc_config_from_json(doc["config"]),
        modality=doc["modality"],
        loss_curve=[],
    )
