"""Fingerprint and dataset representations.

A dataset stores one signal modality: 10-channel ambient-light spectra
(F1..F8, NIR, Clear; raw intensity counts) or 6-channel Wi-Fi RSSI (dBm),
each sample labeled with a 2-D coordinate in meters and an origin tag that
survives augmentation. Includes reference grids, coordinate-level splits,
min-max normalization, and the CSV persistence schema.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ContractViolation, CsvParseError, EmptyInputError

SPECTRAL_CHANNELS = ("f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "nir", "clear")
RSSI_CHANNELS = ("ap1", "ap2", "ap3", "ap4", "ap5", "ap6")
MODALITY_CHANNELS = {"spectral": SPECTRAL_CHANNELS, "rssi": RSSI_CHANNELS}
ORIGINS = ("real", "pointgan", "freegan")


def modality_dim(modality: str) -> int:
    if modality not in MODALITY_CHANNELS:
        raise ContractViolation(f"unknown modality {modality!r}")
    return len(MODALITY_CHANNELS[modality])


@dataclass(frozen=True)
class Coordinate:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ContractViolation(f"coordinate must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class SpectralFingerprint:
    """One 10-channel ambient-light reading, ordered F1..F8, NIR, Clear."""

    channels: tuple[float, ...]

    def __post_init__(self):
        if len(self.channels) != len(SPECTRAL_CHANNELS):
            raise ContractViolation(f"expected 10 channels, got {len(self.channels)}")
        for v in self.channels:
            if not math.isfinite(v) or v < 0:
                raise ContractViolation(f"spectral intensity must be finite and >= 0, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array(self.channels)


@dataclass(frozen=True)
class RssiFingerprint:
    """Received signal strength from six access points, in dBm."""

    rssi: tuple[float, ...]

    def __post_init__(self):
        if len(self.rssi) != len(RSSI_CHANNELS):
            raise ContractViolation(f"expected 6 RSSI entries, got {len(self.rssi)}")
        for v in self.rssi:
            if not math.isfinite(v):
                raise ContractViolation(f"RSSI must be finite, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array(self.rssi)


Fingerprint = SpectralFingerprint | RssiFingerprint


@dataclass(frozen=True)
class LabeledSample:
    fingerprint: Fingerprint
    location: Coordinate
    origin: str = "real"

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ContractViolation(f"unknown origin {self.origin!r}")


def _fingerprint_for(modality: str, values: np.ndarray) -> Fingerprint:
    if modality == "spectral":
        return SpectralFingerprint(tuple(float(v) for v in values))
    return RssiFingerprint(tuple(float(v) for v in values))


class Dataset:
    """Immutable collection of labeled fingerprints of a single modality.

    Stored densely: ``features`` is (n, d), ``locations`` is (n, 2) in
    meters, ``origins`` is (n,) of {real, pointgan, freegan}. ``extent``
    is the enclosing room size (width, height) in meters when known.
    Real-origin samples must lie inside the extent; synthetic samples may
    carry out-of-room pseudo-labels.
    """

    def __init__(
        self,
        modality: str,
        features: np.ndarray,
        locations: np.ndarray,
        origins: Sequence[str] | np.ndarray | None = None,
        extent: tuple[float, float] | None = None,
    ):
        d = modality_dim(modality)
        features = np.asarray(features, dtype=float).reshape(-1, d)
        locations = np.asarray(locations, dtype=float).reshape(-1, 2)
        n = features.shape[0]
        if locations.shape[0] != n:
            raise ContractViolation(f"{n} fingerprints but {locations.shape[0]} locations")
        if origins is None:
            origins = np.full(n, "real", dtype="<U8")
        else:
            origins = np.asarray(origins, dtype="<U8")
            if origins.shape != (n,):
                raise ContractViolation("origins length mismatch")
        unknown = set(origins.tolist()) - set(ORIGINS)
        if unknown:
            raise ContractViolation(f"unknown origins {sorted(unknown)}")
        if not np.all(np.isfinite(features)):
            raise ContractViolation("non-finite fingerprint values")
        if not np.all(np.isfinite(locations)):
            raise ContractViolation("non-finite locations")
        if modality == "spectral" and n and features.min() < 0:
            raise ContractViolation("spectral intensities must be >= 0")
        if extent is not None:
            ex, ey = float(extent[0]), float(extent[1])
            if ex <= 0 or ey <= 0:
                raise ContractViolation(f"extent must be positive, got {extent}")
            real = origins == "real"
            if n and real.any():
                loc = locations[real]
                if loc[:, 0].min() < 0 or loc[:, 0].max() > ex or loc[:, 1].min() < 0 or loc[:, 1].max() > ey:
                    raise ContractViolation("real-origin location outside room extent")
            extent = (ex, ey)
        self.modality = modality
        self.features = features
        self.locations = locations
        self.origins = origins
        self.extent = extent

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def points(self) -> list[Coordinate]:
        """Distinct sample coordinates in first-seen order."""
        seen: dict[tuple[float, float], None] = {}
        for x, y in self.locations:
            seen.setdefault((float(x), float(y)), None)
        return [Coordinate(x, y) for x, y in seen]

    def samples(self) -> Iterator[LabeledSample]:
        for feat, loc, origin in zip(self.features, self.locations, self.origins):
            yield LabeledSample(
                _fingerprint_for(self.modality, feat),
                Coordinate(float(loc[0]), float(loc[1])),
                str(origin),
            )

    def origin_counts(self) -> dict[str, int]:
        vals, counts = np.unique(self.origins, return_counts=True)
        return dict(zip(vals.tolist(), counts.tolist()))

    def subset_by_coords(self, coords: Sequence[Coordinate]) -> "Dataset":
        keys = {(c.x, c.y) for c in coords}
        mask = np.array([(float(x), float(y)) in keys for x, y in self.locations])
        return Dataset(
            self.modality,
            self.features[mask],
            self.locations[mask],
            self.origins[mask],
            self.extent,
        )

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[LabeledSample],
        modality: str,
        extent: tuple[float, float] | None = None,
    ) -> "Dataset":
        features = np.array([s.fingerprint.as_array() for s in samples]).reshape(
            len(samples), modality_dim(modality)
        )
        locations = np.array([[s.location.x, s.location.y] for s in samples]).reshape(
            len(samples), 2
        )
        origins = np.array([s.origin for s in samples], dtype="<U8")
        return cls(modality, features, locations, origins, extent)


def make_grid(extent: float | tuple[float, float], spacing: float) -> list[Coordinate]:
    """Axis-aligned reference grid with points at multiples of ``spacing``.

    Starts at the origin and includes the far edge where a multiple of the
    spacing lands on it; points are ordered row-major (y outer, x inner).
    """
    if isinstance(extent, (int, float)):
        ex = ey = float(extent)
    else:
        ex, ey = float(extent[0]), float(extent[1])
    if ex <= 0 or ey <= 0:
        raise ContractViolation(f"extent must be positive, got {extent}")
    if spacing <= 0:
        raise ContractViolation(f"spacing must be positive, got {spacing}")
    # 1e-9 slack absorbs float noise in extent/spacing ratios like 5/0.5
    nx = int(math.floor(ex / spacing + 1e-9)) + 1
    ny = int(math.floor(ey / spacing + 1e-9)) + 1
    return [Coordinate(ix * spacing, iy * spacing) for iy in range(ny) for ix in range(nx)]


def coordinate_split(
    points: Sequence[Coordinate], n_train: int, seed: int
) -> tuple[list[Coordinate], list[Coordinate]]:
    """Uniform random coordinate-level partition into (train, test).

    Whole reference points move to one side or the other, never individual
    samples. The same seed always yields the same partition.
    """
    if not 1 <= n_train <= len(points):
        raise ContractViolation(
            f"n_train must be in [1, {len(points)}], got {n_train}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(points))
    train_idx = set(order[:n_train].tolist())
    train = [p for i, p in enumerate(points) if i in train_idx]
    test = [p for i, p in enumerate(points) if i not in train_idx]
    return train, test


@dataclass(frozen=True)
class NormStats:
    """Per-channel and per-axis min-max ranges fit on training data only.

    Normalization maps to [0, 1]; a degenerate channel (max == min) maps
    to the constant 0, and its inverse returns the stored minimum.
    """

    feature_min: np.ndarray
    feature_max: np.ndarray
    loc_min: np.ndarray
    loc_max: np.ndarray

    def _scale(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        span = hi - lo
        return np.where(span > 0, span, 1.0)

    def normalize_features(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        out = (features - self.feature_min) / self._scale(self.feature_min, self.feature_max)
        return np.where(self.feature_max > self.feature_min, out, 0.0)

    def denormalize_features(self, normed: np.ndarray) -> np.ndarray:
        return np.asarray(normed, dtype=float) * self._scale(
            self.feature_min, self.feature_max
        ) * np.where(self.feature_max > self.feature_min, 1.0, 0.0) + self.feature_min

    def normalize_locations(self, locations: np.ndarray) -> np.ndarray:
        locations = np.asarray(locations, dtype=float)
        out = (locations - self.loc_min) / self._scale(self.loc_min, self.loc_max)
        return np.where(self.loc_max > self.loc_min, out, 0.0)

    def denormalize_locations(self, normed: np.ndarray) -> np.ndarray:
        return np.asarray(normed, dtype=float) * self._scale(
            self.loc_min, self.loc_max
        ) * np.where(self.loc_max > self.loc_min, 1.0, 0.0) + self.loc_min


def fit_normalizer(train: Dataset) -> NormStats:
    if len(train) == 0:
        raise EmptyInputError("cannot fit a normalizer on an empty dataset")
    return NormStats(
        feature_min=train.features.min(axis=0),
        feature_max=train.features.max(axis=0),
        loc_min=train.locations.min(axis=0),
        loc_max=train.locations.max(axis=0),
    )


def _header_for(modality: str) -> list[str]:
    return ["x", "y", *MODALITY_CHANNELS[modality], "origin"]


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write the CSV schema: x,y,<channels...>,origin with full-precision floats."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_header_for(dataset.modality))
        for feat, loc, origin in zip(dataset.features, dataset.locations, dataset.origins):
            writer.writerow(
                [repr(float(loc[0])), repr(float(loc[1]))]
                + [repr(float(v)) for v in feat]
                + [str(origin)]
            )


def read_dataset(path: str | Path, extent: tuple[float, float] | None = None) -> Dataset:
    """Read a dataset CSV, inferring the modality from the header.

    Raises :class:`CsvParseError` naming the 1-based line number on any
    malformed row (wrong column count, non-numeric or non-finite value,
    unknown origin).
    """
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(1, "missing header") from None
        modality = None
        for m in MODALITY_CHANNELS:
            if header == _header_for(m):
                modality = m
        if modality is None:
            raise CsvParseError(1, f"unrecognized header {header}")
        d = modality_dim(modality)
        features, locations, origins = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 3:
                raise CsvParseError(line_no, f"expected {d + 3} columns, got {len(row)}")
            try:
                values = [float(v) for v in row[: d + 2]]
            except ValueError as exc:
                raise CsvParseError(line_no, str(exc)) from None
            if not all(math.isfinite(v) for v in values):
                raise CsvParseError(line_no, "non-finite value")
            if row[-1] not in ORIGINS:
                raise CsvParseError(line_no, f"unknown origin {row[-1]!r}")
            locations.append(values[:2])
            features.append(values[2:])
            origins.append(row[-1])
    return Dataset(
        modality,
        np.array(features, dtype=float).reshape(len(features), d),
        np.array(locations, dtype=float).reshape(len(locations), 2),
        np.array(origins, dtype="<U8") if origins else None,
        extent,
    )
