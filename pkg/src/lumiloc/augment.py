"""GAN-based fingerprint augmentation.

Two flavors over the same engine: a coordinate-conditioned GAN whose
generator receives (noise, normalized coordinate) and emits labeled
fingerprints at requested positions, and an unconditioned GAN whose
outputs are pseudo-labeled afterwards by the weak localization model.
Both operate in the min-max-normalized fingerprint space (sigmoid output
heads keep samples inside [0, 1]) and train with the real=1 / fake=0
convention, one discriminator step then one non-saturating generator
step per iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datamodel import Coordinate, Dataset, NormStats, fit_normalizer
from .errors import ContractViolation, DivergenceError, EmptyInputError, NumericOverflowError
from .locmodel import TrainedLocalizer, loc_config_to_json, predict_batch
from .numerics import (
    AdamState,
    LayerSpec,
    MlpNet,
    adam_step,
    bce_loss,
    mac_counter,
    mlp_backward,
    mlp_forward,
)
from .persist import (
    FORMAT_VERSION,
    document_digest,
    load_document,
    net_from_json,
    net_to_json,
    norm_from_json,
    norm_to_json,
    save_document,
)
from .seeding import rng_for

GEN_HIDDEN = (128, 256)
DISC_HIDDEN = (256, 128)
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class GanConfig:
    noise_dim: int = 32
    epochs: int = 5000
    learning_rate: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.999)
    batch_size: int = 4096
    # optional bias-corrected exponential moving average of the generator
    # weights (0 disables). Averaging across a long training window mixes
    # structurally different iterates and can break a conditioned
    # generator, so the raw final snapshot is the default.
    ema_decay: float = 0.0

    def __post_init__(self):
        if self.noise_dim < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ContractViolation("noise_dim, epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ContractViolation("learning_rate must be positive")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ContractViolation("ema_decay must be in [0, 1)")


def pointgan_specs(fingerprint_dim: int, noise_dim: int) -> tuple[list[LayerSpec], list[LayerSpec]]:
    """Conditioned pair: generator (z+2 -> 128 -> 256 -> d), ReLU hidden
    layers and sigmoid head; discriminator (2+d -> 256 -> 128 -> 1)."""
    gen = [
        LayerSpec(noise_dim + 2, GEN_HIDDEN[0], "relu"),
        LayerSpec(GEN_HIDDEN[0], GEN_HIDDEN[1], "relu"),
        LayerSpec(GEN_HIDDEN[1], fingerprint_dim, "sigmoid"),
    ]
    disc = [
        LayerSpec(2 + fingerprint_dim, DISC_HIDDEN[0], "relu"),
        LayerSpec(DISC_HIDDEN[0], DISC_HIDDEN[1], "relu"),
        LayerSpec(DISC_HIDDEN[1], 1, "sigmoid"),
    ]
    return gen, disc


def freegan_specs(fingerprint_dim: int, noise_dim: int) -> tuple[list[LayerSpec], list[LayerSpec]]:
    """Unconditioned pair: batch-norm + LeakyReLU generator, LeakyReLU
    discriminator, sigmoid heads on both."""
    gen = [
        LayerSpec(noise_dim, GEN_HIDDEN[0], "leaky_relu", LEAKY_SLOPE, batch_norm=True),
        LayerSpec(GEN_HIDDEN[0], GEN_HIDDEN[1], "leaky_relu", LEAKY_SLOPE, batch_norm=True),
        LayerSpec(GEN_HIDDEN[1], fingerprint_dim, "sigmoid"),
    ]
    disc = [
        LayerSpec(fingerprint_dim, DISC_HIDDEN[0], "leaky_relu", LEAKY_SLOPE),
        LayerSpec(DISC_HIDDEN[0], DISC_HIDDEN[1], "leaky_relu", LEAKY_SLOPE),
        LayerSpec(DISC_HIDDEN[1], 1, "sigmoid"),
    ]
    return gen, disc


@dataclass
class CapturedStep:
    """Pre-update discriminator snapshot and its batch for trace audits."""

    epoch: int
    discriminator: MlpNet
    real_inputs: np.ndarray
    fake_inputs: np.ndarray
    d_loss_real: float
    d_loss_fake: float


@dataclass
class GanTraces:
    d_loss: list[float] = field(default_factory=list)
    g_loss: list[float] = field(default_factory=list)
    captured: CapturedStep | None = None


@dataclass
class PointGanBundle:
    generator: MlpNet
    discriminator: MlpNet
    config: GanConfig
    norm: NormStats
    modality: str
    extent: tuple[float, float] | None


@dataclass
class FreeGanBundle:
    generator: MlpNet
    discriminator: MlpNet
    config: GanConfig
    norm: NormStats
    modality: str
    extent: tuple[float, float] | None


def _check_real_training_set(train: Dataset) -> None:
    if len(train) == 0:
        raise EmptyInputError("cannot train a GAN on an empty dataset")
    synthetic = set(train.origin_counts()) - {"real"}
    if synthetic:
        raise ContractViolation(
            f"GAN training set must contain real samples only, found {sorted(synthetic)}"
        )


def _train_gan(
    gen: MlpNet,
    disc: MlpNet,
    reals: np.ndarray,
    conds: np.ndarray | None,
    config: GanConfig,
    seed: int,
    capture_epoch: int | None,
) -> GanTraces:
    """Alternating one-discriminator/one-generator updates.

    Real samples are labeled 1, generated ones 0; the generator update is
    the non-saturating form (generated batch scored against label 1).
    Both nets run in train mode throughout.
    """
    rng_noise = rng_for(seed, "gan-noise")
    rng_shuffle = rng_for(seed, "gan-shuffle")
    gen.train()
    disc.train()
    params_g = gen.parameters()
    params_d = disc.parameters()
    adam_g = AdamState.for_params(params_g, config.learning_rate, config.betas)
    adam_d = AdamState.for_params(params_d, config.learning_rate, config.betas)
    ema = [np.zeros_like(p) for p in params_g] if config.ema_decay else None
    ema_steps = 0

    n = reals.shape[0]
    traces = GanTraces()
    for epoch in range(1, config.epochs + 1):
        if n <= config.batch_size:
            batches = [np.arange(n)]
        else:
            perm = rng_shuffle.permutation(n)
            batches = [
                perm[start : start + config.batch_size]
                for start in range(0, n, config.batch_size)
            ]
        d_total = 0.0
        g_total = 0.0
        try:
            for idx in batches:
                real_b = reals[idx]
                cond_b = conds[idx] if conds is not None else None
                nb = len(idx)
                ones = np.ones((nb, 1))
                zeros = np.zeros((nb, 1))

                # discriminator step: one stacked pass over [real; fake],
                # upstream grad doubled so it equals the sum of the two
                # per-half mean BCE losses
                z = rng_noise.standard_normal((nb, config.noise_dim))
                gen_in = z if cond_b is None else np.hstack([z, cond_b])
                fake, _ = mlp_forward(gen, gen_in)
                real_in = real_b if cond_b is None else np.hstack([cond_b, real_b])
                fake_in = fake if cond_b is None else np.hstack([cond_b, fake])
                stacked = np.vstack([real_in, fake_in])
                p_both, cache_d = mlp_forward(disc, stacked)
                loss_both, up_both = bce_loss(p_both, np.vstack([ones, zeros]))
                d_grads, _ = mlp_backward(disc, cache_d, 2.0 * up_both)
                if capture_epoch == epoch:
                    loss_real, _ = bce_loss(p_both[:nb], ones)
                    loss_fake, _ = bce_loss(p_both[nb:], zeros)
                    traces.captured = CapturedStep(
                        epoch, disc.copy(), real_in.copy(), fake_in.copy(), loss_real, loss_fake
                    )
                adam_step(params_d, d_grads, adam_d)

                # generator step (non-saturating)
                z2 = rng_noise.standard_normal((nb, config.noise_dim))
                gen_in2 = z2 if cond_b is None else np.hstack([z2, cond_b])
                fake2, cache_g = mlp_forward(gen, gen_in2)
                fake2_in = fake2 if cond_b is None else np.hstack([cond_b, fake2])
                p_gen, cache_d2 = mlp_forward(disc, fake2_in)
                loss_gen, up_gen = bce_loss(p_gen, ones)
                _, d_input_grad = mlp_backward(disc, cache_d2, up_gen)
                fake_grad = d_input_grad if cond_b is None else d_input_grad[:, 2:]
                grads_g, _ = mlp_backward(gen, cache_g, fake_grad)
                adam_step(params_g, grads_g, adam_g)
                if ema is not None:
                    ema_steps += 1
                    for e, p in zip(ema, params_g):
                        e *= config.ema_decay
                        e += (1.0 - config.ema_decay) * p

                d_total += 2.0 * loss_both * nb  # = (loss_real + loss_fake) * nb
                g_total += loss_gen * nb
        except NumericOverflowError as exc:
            raise DivergenceError(epoch, f"GAN diverged at epoch {epoch}: {exc}") from exc
        d_epoch = d_total / n
        g_epoch = g_total / n
        if not (math.isfinite(d_epoch) and math.isfinite(g_epoch)):
            raise DivergenceError(epoch)
        traces.d_loss.append(d_epoch)
        traces.g_loss.append(g_epoch)
    if ema is not None and ema_steps:
        correction = 1.0 - config.ema_decay**ema_steps
        for p, e in zip(params_g, ema):
            p[:] = e / correction
        # running batch-norm statistics tracked the raw trajectory; refresh
        # them for the averaged weights with one deterministic full pass
        # (bookkeeping, excluded from the training-iteration cost model)
        if conds is None and any(l.spec.batch_norm for l in gen.layers):
            refresh_z = rng_for(seed, "gan-ema-refresh").standard_normal(
                (max(n, 1024), config.noise_dim)
            )
            saved = [l.momentum for l in gen.layers]
            for layer in gen.layers:
                layer.momentum = 1.0
            counting = mac_counter.enabled
            mac_counter.enabled = False
            mlp_forward(gen, refresh_z)
            mac_counter.enabled = counting
            for layer, m in zip(gen.layers, saved):
                layer.momentum = m
    return traces


def train_pointgan(
    train: Dataset,
    config: GanConfig = GanConfig(),
    seed: int = 0,
    capture_epoch: int | None = None,
) -> tuple[PointGanBundle, GanTraces]:
    """Train the coordinate-conditioned pair on real samples only."""
    _check_real_training_set(train)
    norm = fit_normalizer(train)
    reals = norm.normalize_features(train.features)
    conds = norm.normalize_locations(train.locations)
    gen_specs, disc_specs = pointgan_specs(train.dim, config.noise_dim)
    gen = MlpNet(gen_specs, rng_for(seed, "gen-init"))
    disc = MlpNet(disc_specs, rng_for(seed, "disc-init"))
    traces = _train_gan(gen, disc, reals, conds, config, seed, capture_epoch)
    gen.eval()
    disc.eval()
    bundle = PointGanBundle(gen, disc, config, norm, train.modality, train.extent)
    return bundle, traces


def train_freegan(
    train: Dataset,
    config: GanConfig = GanConfig(),
    seed: int = 0,
    capture_epoch: int | None = None,
) -> tuple[FreeGanBundle, GanTraces]:
    """Train the unconditioned pair; batch norm runs in train mode here
    and switches to running statistics for generation."""
    _check_real_training_set(train)
    norm = fit_normalizer(train)
    reals = norm.normalize_features(train.features)
    gen_specs, disc_specs = freegan_specs(train.dim, config.noise_dim)
    gen = MlpNet(gen_specs, rng_for(seed, "gen-init"))
    disc = MlpNet(disc_specs, rng_for(seed, "disc-init"))
    traces = _train_gan(gen, disc, reals, None, config, seed, capture_epoch)
    gen.eval()
    disc.eval()
    bundle = FreeGanBundle(gen, disc, config, norm, train.modality, train.extent)
    return bundle, traces


@dataclass
class SyntheticBatch:
    """Generated fingerprints in normalized space plus provenance.

    Conditioned batches carry their conditioning coordinates as labels;
    unconditioned batches start unlabeled and gain pseudo-labels (both in
    meters). Discriminator realism scores ride along for instance
    selection. ``wlm_digest`` identifies the pseudo-labeling model.
    """

    modality: str
    origin: str
    fingerprints: np.ndarray  # (n, d), normalized [0,1] space
    norm: NormStats
    extent: tuple[float, float] | None
    conditioning: np.ndarray | None = None
    pseudo_labels: np.ndarray | None = None
    disc_scores: np.ndarray | None = None
    wlm_digest: str | None = None

    def __len__(self) -> int:
        return self.fingerprints.shape[0]

    @property
    def labeled(self) -> bool:
        return self.conditioning is not None or self.pseudo_labels is not None

    def labels(self) -> np.ndarray:
        if self.conditioning is not None:
            return self.conditioning
        if self.pseudo_labels is not None:
            return self.pseudo_labels
        raise ContractViolation("batch has no labels")

    def fingerprints_raw(self) -> np.ndarray:
        """Denormalize back to raw signal units via the training stats."""
        return self.norm.denormalize_features(self.fingerprints)

    def out_of_extent_fraction(self) -> float:
        if not self.labeled or self.extent is None or len(self) == 0:
            return 0.0
        labels = self.labels()
        ex, ey = self.extent
        outside = (
            (labels[:, 0] < 0) | (labels[:, 0] > ex) | (labels[:, 1] < 0) | (labels[:, 1] > ey)
        )
        return float(outside.mean())


def _disc_scores(disc: MlpNet, inputs: np.ndarray) -> np.ndarray:
    disc.eval()
    scores, _ = mlp_forward(disc, inputs)
    return scores[:, 0]


def pointgan_generate(
    bundle: PointGanBundle,
    train_points: list[Coordinate],
    per_point: int = 100,
    seed: int = 0,
) -> SyntheticBatch:
    """Generate ``per_point`` labeled fingerprints at each training point."""
    if per_point < 0:
        raise ContractViolation("per_point must be >= 0")
    d = bundle.generator.out_dim
    n = len(train_points) * per_point
    coords_m = np.array([[p.x, p.y] for p in train_points], dtype=float).reshape(-1, 2)
    coords_m = np.repeat(coords_m, per_point, axis=0)
    rng = rng_for(seed, "pointgan-generate")
    z = rng.standard_normal((n, bundle.config.noise_dim))
    conds = bundle.norm.normalize_locations(coords_m)
    bundle.generator.eval()
    fakes, _ = mlp_forward(bundle.generator, np.hstack([z, conds])) if n else (np.zeros((0, d)), None)
    scores = (
        _disc_scores(bundle.discriminator, np.hstack([conds, fakes])) if n else np.zeros(0)
    )
    return SyntheticBatch(
        modality=bundle.modality,
        origin="pointgan",
        fingerprints=fakes,
        norm=bundle.norm,
        extent=bundle.extent,
        conditioning=coords_m,
        disc_scores=scores,
    )


def freegan_generate(bundle: FreeGanBundle, n: int = 50000, seed: int = 0) -> SyntheticBatch:
    """Generate ``n`` unlabeled fingerprints in one eval-mode batch."""
    if n < 0:
        raise ContractViolation("n must be >= 0")
    rng = rng_for(seed, "freegan-generate")
    z = rng.standard_normal((n, bundle.config.noise_dim))
    bundle.generator.eval()
    d = bundle.generator.out_dim
    fakes, _ = mlp_forward(bundle.generator, z) if n else (np.zeros((0, d)), None)
    scores = _disc_scores(bundle.discriminator, fakes) if n else np.zeros(0)
    return SyntheticBatch(
        modality=bundle.modality,
        origin="freegan",
        fingerprints=fakes,
        norm=bundle.norm,
        extent=bundle.extent,
        disc_scores=scores,
    )


def pseudo_label(wlm: TrainedLocalizer, batch: SyntheticBatch) -> SyntheticBatch:
    """Attach weak-model coordinate estimates to an unlabeled batch.

    Labels are the raw regression outputs (they may fall outside the
    room); the out-of-extent fraction is available as a diagnostic on the
    returned batch.
    """
    if batch.labeled:
        raise ContractViolation("batch is already labeled")
    if wlm.modality != batch.modality:
        raise ContractViolation(
            f"weak model is {wlm.modality!r} but batch is {batch.modality!r}"
        )
    labels = predict_batch(wlm, batch.fingerprints_raw())
    return SyntheticBatch(
        modality=batch.modality,
        origin=batch.origin,
        fingerprints=batch.fingerprints,
        norm=batch.norm,
        extent=batch.extent,
        pseudo_labels=labels,
        disc_scores=batch.disc_scores,
        wlm_digest=localizer_digest(wlm),
    )


def localizer_digest(model: TrainedLocalizer) -> str:
    doc = {
        "modality": model.modality,
        "config": loc_config_to_json(model.config),
        "norm": norm_to_json(model.norm),
        "net": net_to_json(model.net),
    }
    return document_digest(doc)


def build_augmented(
    real: Dataset,
    synthetic: SyntheticBatch | list[SyntheticBatch],
    top_k: int | None = None,
) -> Dataset:
    """Concatenate real data with labeled synthetic batches.

    With ``top_k`` set, only the k synthetic samples with the highest
    discriminator realism scores are kept (pooled across batches);
    ``top_k=0`` reduces to the real data alone. Origin tags are preserved.
    """
    batches = [synthetic] if isinstance(synthetic, SyntheticBatch) else list(synthetic)
    feats = [real.features]
    locs = [real.locations]
    origins = [real.origins]
    syn_feats, syn_locs, syn_origins, syn_scores = [], [], [], []
    for batch in batches:
        if batch.modality != real.modality:
            raise ContractViolation("modality mismatch between real data and synthetic batch")
        if not batch.labeled:
            raise ContractViolation("synthetic batch must be labeled before augmentation")
        syn_feats.append(batch.fingerprints_raw())
        syn_locs.append(batch.labels())
        syn_origins.append(np.full(len(batch), batch.origin, dtype="<U8"))
        if batch.disc_scores is None:
            syn_scores.append(np.full(len(batch), -np.inf))
        else:
            syn_scores.append(batch.disc_scores)
    if syn_feats:
        sf = np.vstack(syn_feats)
        sl = np.vstack(syn_locs)
        so = np.concatenate(syn_origins)
        if top_k is not None:
            if top_k < 0:
                raise ContractViolation("top_k must be >= 0")
            scores = np.concatenate(syn_scores)
            keep = np.sort(np.argsort(-scores, kind="stable")[:top_k])
            sf, sl, so = sf[keep], sl[keep], so[keep]
        feats.append(sf)
        locs.append(sl)
        origins.append(so)
    return Dataset(
        real.modality,
        np.vstack(feats),
        np.vstack(locs),
        np.concatenate(origins),
        real.extent,
    )


def save_gan(bundle: PointGanBundle | FreeGanBundle, path: str | Path) -> None:
    kind = "pointgan" if isinstance(bundle, PointGanBundle) else "freegan"
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "modality": bundle.modality,
        "extent": list(bundle.extent) if bundle.extent else None,
        "config": {
            "noise_dim": bundle.config.noise_dim,
            "epochs": bundle.config.epochs,
            "learning_rate": bundle.config.learning_rate,
            "betas": list(bundle.config.betas),
            "batch_size": bundle.config.batch_size,
            "ema_decay": bundle.config.ema_decay,
        },
        "norm": norm_to_json(bundle.norm),
        "generator": net_to_json(bundle.generator),
        "discriminator": net_to_json(bundle.discriminator),
    }
    save_document(doc, path)


def load_gan(path: str | Path) -> PointGanBundle | FreeGanBundle:
    doc = load_document(path)
    kind = doc.get("kind")
    if kind not in ("pointgan", "freegan"):
        raise ContractViolation(f"expected a GAN bundle, found kind {kind!r}")
    cls = PointGanBundle if kind == "pointgan" else FreeGanBundle
    cfg = doc["config"]
    return cls(
        generator=net_from_json(doc["generator"]),
        discriminator=net_from_json(doc["discriminator"]),
        config=GanConfig(
            noise_dim=int(cfg["noise_dim"]),
            epochs=int(cfg["epochs"]),
            learning_rate=float(cfg["learning_rate"]),
            betas=tuple(cfg["betas"]),
            batch_size=int(cfg["batch_size"]),
            ema_decay=float(cfg.get("ema_decay", 0.0)),
        ),
        norm=norm_from_json(doc["norm"]),
        modality=doc["modality"],
        extent=tuple(doc["extent"]) if doc.get("extent") else None,
    )
