"""Synthetic room simulator.

Generates the two study worlds in place of real surveys: a room with
ceiling light panels (distinct warm-white emission profiles per panel),
wall-mounted Wi-Fi access points, and optional clutter rectangles that
attenuate both signals. Spectral intensities follow inverse-square
falloff with occlusion products; RSSI follows log-distance path loss.
Noise levels default to the measured stability contrast between the two
modalities (relative spectral noise a few 1e-4, RSSI noise ~1.4 dB).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .datamodel import Coordinate, Dataset, modality_dim
from .errors import ContractViolation

DISTANCE_FLOOR_M = 0.1  # keeps path loss finite on top of an emitter

# Panel emission family: a warm-white base shape modulated channel-wise by
# orthogonal sign patterns (distinct LED bins). Strong pairwise separation
# between panel spectra keeps the position -> fingerprint map well
# conditioned; near-identical profiles alias mirror-symmetric positions.
_BASE_VISIBLE = (0.22, 0.45, 0.36, 0.53, 0.80, 0.94, 0.90, 0.66)
_BASE_NIR = 0.28
_PANEL_SIGNS = (
    (+1, -1, +1, -1, +1, -1, +1, -1),
    (+1, +1, -1, -1, +1, +1, -1, -1),
    (+1, +1, +1, +1, -1, -1, -1, -1),
    (+1, -1, -1, +1, -1, +1, +1, -1),
)
_PANEL_NIR_SIGNS = (+1, -1, +1, -1)
_PANEL_CONTRAST = 0.45


@dataclass(frozen=True)
class Panel:
    """Ceiling-mounted light panel: 2-D position plus mounting height."""

    position: Coordinate
    height: float
    emission: tuple[float, ...]  # 10 per-channel weights, >= 0
    power: float

    def __post_init__(self):
        if self.height <= 0 or self.power <= 0:
            raise ContractViolation("panel height and power must be positive")
        if len(self.emission) != 10 or any(w < 0 for w in self.emission):
            raise ContractViolation("panel emission needs 10 non-negative weights")


@dataclass(frozen=True)
class AccessPoint:
    position: Coordinate
    tx_power_dbm: float
    path_loss_exponent: float

    def __post_init__(self):
        if self.path_loss_exponent <= 0:
            raise ContractViolation("path loss exponent must be positive")


@dataclass(frozen=True)
class Occluder:
    """Axis-aligned rectangle that attenuates signals passing through it."""

    rect: tuple[float, float, float, float]  # x0, y0, x1, y1
    spectral_attenuation: tuple[float, ...]  # transmission multipliers in [0,1]
    rssi_attenuation_db: float

    def __post_init__(self):
        x0, y0, x1, y1 = self.rect
        if x1 <= x0 or y1 <= y0:
            raise ContractViolation(f"degenerate occluder rect {self.rect}")
        if len(self.spectral_attenuation) != 10 or any(
            not 0.0 <= a <= 1.0 for a in self.spectral_attenuation
        ):
            raise ContractViolation("spectral attenuation factors must be 10 values in [0,1]")
        if self.rssi_attenuation_db < 0:
            raise ContractViolation("rssi attenuation must be >= 0 dB")


@dataclass(frozen=True)
class RoomModel:
    extent: tuple[float, float]
    panels: tuple[Panel, ...]
    aps: tuple[AccessPoint, ...]
    occluders: tuple[Occluder, ...] = ()

    def __post_init__(self):
        ex, ey = self.extent
        if ex <= 0 or ey <= 0:
            raise ContractViolation(f"extent must be positive, got {self.extent}")
        for p in self.panels:
            self._check_inside(p.position.x, p.position.y, "panel")
        for a in self.aps:
            self._check_inside(a.position.x, a.position.y, "access point")
        for o in self.occluders:
            x0, y0, x1, y1 = o.rect
            if x0 < 0 or y0 < 0 or x1 > ex or y1 > ey:
                raise ContractViolation(f"occluder {o.rect} outside extent {self.extent}")

    def _check_inside(self, x: float, y: float, what: str):
        ex, ey = self.extent
        if not (0 <= x <= ex and 0 <= y <= ey):
            raise ContractViolation(f"{what} at ({x}, {y}) outside extent {self.extent}")

    def contains(self, at: Coordinate) -> bool:
        ex, ey = self.extent
        return 0 <= at.x <= ex and 0 <= at.y <= ey


@dataclass(frozen=True)
class NoiseModel:
    """Multiplicative spectral noise (unitless) and additive RSSI noise (dB)."""

    spectral_rel_std: float = 4.9e-4
    rssi_std_db: float = 2.6

    def __post_init__(self):
        if self.spectral_rel_std < 0 or self.rssi_std_db < 0:
            raise ContractViolation("noise levels must be >= 0")


# Static spatial texture of the light field: reflections and shading give
# the spectral composition sub-meter spatial structure that is perfectly
# stable in time (it cancels in the std/mean stability ratio) but makes
# interpolating between reference points genuinely hard, as indoors.
# The Clear channel stays smooth: reflections redistribute spectral
# content far more than total flux.
_TEXTURE_COMPONENTS = 24
_TEXTURE_LENGTH_M = 0.9
_TEXTURE_AMPLITUDE = 0.10
_texture_rng = np.random.default_rng(210479)
_TEXTURE_FREQS = _texture_rng.normal(
    0.0, 1.0 / _TEXTURE_LENGTH_M, size=(9, _TEXTURE_COMPONENTS, 2)
)
_TEXTURE_PHASES = _texture_rng.uniform(0.0, 2.0 * np.pi, size=(9, _TEXTURE_COMPONENTS))


def _texture_multipliers(x: float, y: float) -> np.ndarray:
    waves = np.cos(
        _TEXTURE_FREQS[:, :, 0] * x + _TEXTURE_FREQS[:, :, 1] * y + _TEXTURE_PHASES
    )
    fields = np.sqrt(2.0 / _TEXTURE_COMPONENTS) * waves.sum(axis=1)
    mult = np.clip(1.0 + _TEXTURE_AMPLITUDE * fields, 0.05, None)
    return np.append(mult, 1.0)  # clear channel untextured


def _segment_intersects_rect(
    ax: float, ay: float, bx: float, by: float, rect: tuple[float, float, float, float]
) -> bool:
    """Slab-clipping test for segment (a->b) against an axis-aligned rect."""
    x0, y0, x1, y1 = rect
    t0, t1 = 0.0, 1.0
    for p, d, lo, hi in ((ax, bx - ax, x0, x1), (ay, by - ay, y0, y1)):
        if d == 0.0:
            if p < lo or p > hi:
                return False
        else:
            ta, tb = (lo - p) / d, (hi - p) / d
            if ta > tb:
                ta, tb = tb, ta
            t0, t1 = max(t0, ta), min(t1, tb)
            if t0 > t1:
                return False
    return True


def expected_spectral(room: RoomModel, at: Coordinate) -> np.ndarray:
    """Noise-free expected 10-channel intensity at a sensor position.

    Each panel contributes power * emission / (d^2 + h^2), multiplied per
    channel by the transmission factors of every occluder crossing the
    straight-line path (in plan view) from sensor to panel; the static
    spatial texture then modulates the visible/NIR composition.
    """
    if not room.contains(at):
        raise ContractViolation(f"({at.x}, {at.y}) outside room extent {room.extent}")
    total = np.zeros(10)
    for panel in room.panels:
        d2 = (at.x - panel.position.x) ** 2 + (at.y - panel.position.y) ** 2
        transmission = np.ones(10)
        for occ in room.occluders:
            if _segment_intersects_rect(
                at.x, at.y, panel.position.x, panel.position.y, occ.rect
            ):
                transmission *= np.array(occ.spectral_attenuation)
        total += panel.power * np.array(panel.emission) * transmission / (d2 + panel.height**2)
    return total * _texture_multipliers(at.x, at.y)


def expected_rssi(room: RoomModel, at: Coordinate) -> np.ndarray:
    """Noise-free expected RSSI (dBm) from each access point."""
    if not room.contains(at):
        raise ContractViolation(f"({at.x}, {at.y}) outside room extent {room.extent}")
    out = np.zeros(len(room.aps))
    for i, ap in enumerate(room.aps):
        dist = math.hypot(at.x - ap.position.x, at.y - ap.position.y)
        loss_db = 0.0
        for occ in room.occluders:
            if _segment_intersects_rect(at.x, at.y, ap.position.x, ap.position.y, occ.rect):
                loss_db += occ.rssi_attenuation_db
        out[i] = (
            ap.tx_power_dbm
            - 10.0 * ap.path_loss_exponent * math.log10(max(dist, DISTANCE_FLOOR_M))
            - loss_db
        )
    return out


def sample_spectral(
    room: RoomModel, noise: NoiseModel, at: Coordinate, n: int, seed: int
) -> np.ndarray:
    """Draw n spectral fingerprints at a position.

    Each sample is the expected fingerprint scaled by (1 + eps) with a
    per-sample scalar eps ~ N(0, sigma_s^2), clamped at zero.
    """
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    base = expected_spectral(room, at)
    rng = np.random.default_rng(seed)
    eps = noise.spectral_rel_std * rng.standard_normal(n)
    return np.maximum(base[None, :] * (1.0 + eps)[:, None], 0.0)


def sample_rssi(
    room: RoomModel, noise: NoiseModel, at: Coordinate, n: int, seed: int
) -> np.ndarray:
    """Draw n RSSI readings at a position with additive Gaussian dB noise."""
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    base = expected_rssi(room, at)
    rng = np.random.default_rng(seed)
    return base[None, :] + noise.rssi_std_db * rng.standard_normal((n, len(base)))


def generate_dataset(
    room: RoomModel,
    noise: NoiseModel,
    grid: list[Coordinate],
    samples_per_point: int,
    modality: str,
    seed: int,
) -> Dataset:
    """Survey the grid: samples_per_point fingerprints at every point.

    Per-point noise streams are derived from (seed, point index) so
    regenerating any single point is stable against grid changes elsewhere.
    """
    d = modality_dim(modality)
    sampler = sample_spectral if modality == "spectral" else sample_rssi
    features = np.empty((len(grid) * samples_per_point, d))
    locations = np.empty((len(grid) * samples_per_point, 2))
    for idx, point in enumerate(grid):
        point_seed = np.random.SeedSequence([seed, idx]).generate_state(1)[0]
        rows = sampler(room, noise, point, samples_per_point, int(point_seed))
        sl = slice(idx * samples_per_point, (idx + 1) * samples_per_point)
        features[sl] = rows
        locations[sl] = [point.x, point.y]
    return Dataset(modality, features, locations, None, room.extent)


def apply_clutter(room: RoomModel, clutter_seed: int, n_occluders: int) -> RoomModel:
    """Return a copy of the room with random clutter rectangles added.

    Sizes 0.3-1.0 m per side, per-channel spectral transmission 0.3-0.9,
    RSSI attenuation 3-10 dB. The input room is unchanged.
    """
    if n_occluders < 0:
        raise ContractViolation("n_occluders must be >= 0")
    if n_occluders == 0:
        return room
    rng = np.random.default_rng(clutter_seed)
    ex, ey = room.extent
    added = []
    for _ in range(n_occluders):
        w = rng.uniform(0.3, min(1.0, ex))
        h = rng.uniform(0.3, min(1.0, ey))
        x0 = rng.uniform(0.0, ex - w)
        y0 = rng.uniform(0.0, ey - h)
        added.append(
            Occluder(
                rect=(x0, y0, x0 + w, y0 + h),
                spectral_attenuation=tuple(rng.uniform(0.3, 0.9, size=10)),
                rssi_attenuation_db=float(rng.uniform(3.0, 10.0)),
            )
        )
    return replace(room, occluders=room.occluders + tuple(added))


def _panel_emission(k: int) -> tuple[float, ...]:
    visible = [
        b * (1.0 + _PANEL_CONTRAST * s) for b, s in zip(_BASE_VISIBLE, _PANEL_SIGNS[k])
    ]
    nir = _BASE_NIR * (1.0 + _PANEL_CONTRAST * _PANEL_NIR_SIGNS[k])
    clear = sum(visible)  # clear channel integrates the visible bands
    return (*visible, nir, float(clear))


def default_room(extent: tuple[float, float] = (7.0, 7.0)) -> RoomModel:
    """Default world: four corner-inset ceiling panels and six wall APs.

    Panels sit 2.5 m up with distinct emission spectra and graded powers,
    so the 10-channel fingerprint varies with position in all directions
    and the brightest grid point lies directly under the strongest panel;
    the inset keeps panel separation at 5 m.
    """
    ex, ey = float(extent[0]), float(extent[1])
    inset = max(0.0, (min(ex, ey) - 5.0) / 2.0)
    corners = [
        (inset, inset),
        (inset, ey - inset),
        (ex - inset, inset),
        (ex - inset, ey - inset),
    ]
    powers = (45000.0, 36000.0, 30000.0, 24000.0)
    panels = tuple(
        Panel(Coordinate(x, y), height=2.5, emission=_panel_emission(k), power=p)
        for k, ((x, y), p) in enumerate(zip(corners, powers))
    )
    ap_fracs = [(0.04, 0.5), (0.96, 0.5), (0.5, 0.04), (0.5, 0.96), (0.04, 0.04), (0.96, 0.96)]
    aps = tuple(
        AccessPoint(Coordinate(fx * ex, fy * ey), tx_power_dbm=-40.0, path_loss_exponent=2.2)
        for fx, fy in ap_fracs
    )
    return RoomModel(extent=(ex, ey), panels=panels, aps=aps)


@dataclass(frozen=True)
class SimConfig:
    """One survey: a room, a noise model, and the sampling plan."""

    room: RoomModel
    noise: NoiseModel
    grid_spacing: float
    samples_per_point: int
    modalities: tuple[str, ...]

    def grid(self) -> list[Coordinate]:
        from .datamodel import make_grid

        return make_grid(self.room.extent, self.grid_spacing)


PRESETS = {
    "spectral-wifimix": dict(extent=(7.0, 7.0), grid_spacing=1.0, samples_per_point=32,
                             modalities=("spectral", "rssi"), clutter=None),
    "spectralrobust-clean": dict(extent=(5.0, 5.0), grid_spacing=0.5, samples_per_point=10,
                                 modalities=("spectral",), clutter=None),
    "spectralrobust-cluttered": dict(extent=(5.0, 5.0), grid_spacing=0.5, samples_per_point=10,
                                     modalities=("spectral",), clutter=(97, 8)),
}


def room_to_json(room: RoomModel) -> dict:
    return {
        "extent": list(room.extent),
        "panels": [
            {
                "position": [p.position.x, p.position.y],
                "height": p.height,
                "emission": list(p.emission),
                "power": p.power,
            }
            for p in room.panels
        ],
        "aps": [
            {
                "position": [a.position.x, a.position.y],
                "tx_power_dbm": a.tx_power_dbm,
                "path_loss_exponent": a.path_loss_exponent,
            }
            for a in room.aps
        ],
        "occluders": [
            {
                "rect": list(o.rect),
                "spectral_attenuation": list(o.spectral_attenuation),
                "rssi_attenuation_db": o.rssi_attenuation_db,
            }
            for o in room.occluders
        ],
    }


def room_from_json(doc: dict) -> RoomModel:
    return RoomModel(
        extent=tuple(doc["extent"]),
        panels=tuple(
            Panel(
                Coordinate(*p["position"]),
                height=p["height"],
                emission=tuple(p["emission"]),
                power=p["power"],
            )
            for p in doc.get("panels", [])
        ),
        aps=tuple(
            AccessPoint(
                Coordinate(*a["position"]),
                tx_power_dbm=a["tx_power_dbm"],
                path_loss_exponent=a["path_loss_exponent"],
            )
            for a in doc.get("aps", [])
        ),
        occluders=tuple(
            Occluder(
                rect=tuple(o["rect"]),
                spectral_attenuation=tuple(o["spectral_attenuation"]),
                rssi_attenuation_db=o["rssi_attenuation_db"],
            )
            for o in doc.get("occluders", [])
        ),
    )


def sim_config_to_json(config: SimConfig) -> dict:
    return {
        "room": room_to_json(config.room),
        "noise": {
            "spectral_rel_std": config.noise.spectral_rel_std,
            "rssi_std_db": config.noise.rssi_std_db,
        },
        "grid_spacing": config.grid_spacing,
        "samples_per_point": config.samples_per_point,
        "modalities": list(config.modalities),
    }


def sim_config_from_json(doc: dict) -> SimConfig:
    """Build a survey config from a JSON document.

    Either names a preset (optionally overriding its fields) or spells out
    the room/noise/sampling plan in full.
    """
    doc = dict(doc)
    preset_name = doc.pop("preset", None)
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ContractViolation(
                f"unknown preset {preset_name!r}; known: {sorted(PRESETS)}"
            )
        preset = PRESETS[preset_name]
        base = {
            "grid_spacing": preset["grid_spacing"],
            "samples_per_point": preset["samples_per_point"],
            "modalities": list(preset["modalities"]),
        }
        if preset["clutter"] is not None:
            seed, n = preset["clutter"]
            base["clutter"] = {"seed": seed, "n_occluders": n}
        base.update(doc)
        doc = base
        room = room_from_json(doc["room"]) if "room" in doc else default_room(preset["extent"])
    else:
        room = room_from_json(doc["room"])
    clutter = doc.get("clutter")
    if clutter:
        room = apply_clutter(room, int(clutter["seed"]), int(clutter["n_occluders"]))
    noise_doc = doc.get("noise", {})
    noise = NoiseModel(
        spectral_rel_std=float(noise_doc.get("spectral_rel_std", NoiseModel.spectral_rel_std)),
        rssi_std_db=float(noise_doc.get("rssi_std_db", NoiseModel.rssi_std_db)),
    )
    return SimConfig(
        room=room,
        noise=noise,
        grid_spacing=float(doc["grid_spacing"]),
        samples_per_point=int(doc["samples_per_point"]),
        modalities=tuple(doc["modalities"]),
    )
