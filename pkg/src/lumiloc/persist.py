"""Versioned JSON persistence for networks and normalization stats.

Floats are emitted with Python's shortest round-trip repr, so a
save/load cycle reproduces predictions exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .datamodel import NormStats
from .errors import ContractViolation
from .numerics import LayerSpec, MlpNet

FORMAT_VERSION = 1


def net_to_json(net: MlpNet) -> dict:
    layers = []
    for layer in net.layers:
        spec = layer.spec
        doc = {
            "in_dim": spec.in_dim,
            "out_dim": spec.out_dim,
            "activation": spec.activation,
            "leaky_slope": spec.leaky_slope,
            "dropout_rate": spec.dropout_rate,
            "batch_norm": spec.batch_norm,
            "weight": layer.weight.tolist(),
            "bias": None if layer.bias is None else layer.bias.tolist(),
        }
        if spec.batch_norm:
            doc.update(
                gamma=layer.gamma.tolist(),
                beta=layer.beta.tolist(),
                running_mean=layer.running_mean.tolist(),
                running_var=layer.running_var.tolist(),
                momentum=layer.momentum,
            )
        layers.append(doc)
    return {"layers": layers}


def net_from_json(doc: dict) -> MlpNet:
    specs = [
        LayerSpec(
            in_dim=int(l["in_dim"]),
            out_dim=int(l["out_dim"]),
            activation=l["activation"],
            leaky_slope=float(l["leaky_slope"]),
            dropout_rate=float(l["dropout_rate"]),
            batch_norm=bool(l["batch_norm"]),
        )
        for l in doc["layers"]
    ]
    net = MlpNet(specs, np.random.default_rng(0))
    for layer, l in zip(net.layers, doc["layers"]):
        layer.weight = np.array(l["weight"], dtype=float).reshape(layer.weight.shape)
        if l["bias"] is not None:
            layer.bias = np.array(l["bias"], dtype=float)
        if layer.spec.batch_norm:
            layer.gamma = np.array(l["gamma"], dtype=float)
            layer.beta = np.array(l["beta"], dtype=float)
            layer.running_mean = np.array(l["running_mean"], dtype=float)
            layer.running_var = np.array(l["running_var"], dtype=float)
            layer.momentum = float(l["momentum"])
    net.eval()
    return net


def norm_to_json(stats: NormStats) -> dict:
    return {
        "feature_min": stats.feature_min.tolist(),
        "feature_max": stats.feature_max.tolist(),
        "loc_min": stats.loc_min.tolist(),
        "loc_max": stats.loc_max.tolist(),
    }


def norm_from_json(doc: dict) -> NormStats:
    return NormStats(
        feature_min=np.array(doc["feature_min"], dtype=float),
        feature_max=np.array(doc["feature_max"], dtype=float),
        loc_min=np.array(doc["loc_min"], dtype=float),
        loc_max=np.array(doc["loc_max"], dtype=float),
    )


def save_document(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_document(path: str | Path, expected_kind: str | None = None) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ContractViolation(f"unsupported model format version {version!r}")
    if expected_kind is not None and doc.get("kind") != expected_kind:
        raise ContractViolation(
            f"expected a {expected_kind!r} model, found {doc.get('kind')!r}"
        )
    return doc


def document_digest(doc: dict) -> str:
    """Stable sha256 over the canonical JSON encoding."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
