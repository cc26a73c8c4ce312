#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Model Checkpoints
نقاط حفظ النموذج

A checkpoint is one compact JSON manifest line followed by the raw
little-endian float64 payload of every parameter array, in name order.
Offsets in the manifest count from the start of the payload.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from .data import NumericStats, TabularSchema
from .errors import CheckpointError
from .model import ModelConfig, TransCORALNet, build_model

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Trained network plus everything needed to encode new rows for it."""

    model: TransCORALNet
    stats: Dict[str, NumericStats] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def schema(self) -> TabularSchema:
        return self.model.schema

    @property
    def config(self) -> ModelConfig:
        return self.model.config

    def digest(self) -> str:
        return self.model.params.digest()

    def manifest(self) -> Dict[str, Any]:
        tensors, offset = [], 0
        for name, tensor in self.model.params.items():
            byte_len = tensor.value.size * 8
            tensors.append({"name": name, "shape": list(tensor.shape), "dtype": "f64",
                            "byte_offset": offset, "byte_len": byte_len})
            offset += byte_len
        return {
            "format_version": FORMAT_VERSION,
            "model_config": self.config.to_dict(),
            "schema": self.schema.to_dict(),
            "schema_digest": self.schema.digest(),
            "stats": {name: {"mean": s.mean, "std": s.std} for name, s in sorted(self.stats.items())},
            "metadata": self.metadata,
            "provenance": self.provenance,
            "tensors": tensors,
        }


def save_checkpoint(checkpoint: Checkpoint, path: str):
    manifest = json.dumps(checkpoint.manifest(), sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    payload = b"".join(np.ascontiguousarray(t.value, dtype="<f8").tobytes()
                       for _, t in checkpoint.model.params.items())
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "wb") as f:
        f.write(manifest.encode("ascii"))
        f.write(b"\n")
        f.write(payload)
    logger.info(f"Checkpoint written to: {path} ({len(payload)} payload bytes)")


def load_checkpoint(path: str, expected_schema: Optional[TabularSchema] = None) -> Checkpoint:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    head, sep, payload = blob.partition(b"\n")
    if not sep:
        raise CheckpointError(f"{path}: manifest line missing")
    try:
        manifest = json.loads(head.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: malformed manifest: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {manifest.get('format_version')!r}")

    schema = TabularSchema.from_dict(manifest["schema"])
    if schema.digest() != manifest["schema_digest"]:
        raise CheckpointError(f"{path}: schema digest does not match the embedded schema")
    if expected_schema is not None and expected_schema.digest() != schema.digest():
        raise CheckpointError(f"{path}: checkpoint was trained on a different schema")

    arrays = {}
    for entry in manifest["tensors"]:
        start, length = entry["byte_offset"], entry["byte_len"]
        shape = tuple(entry["shape"])
        if entry.get("dtype") != "f64" or start + length > len(payload) or length != int(np.prod(shape)) * 8:
            raise CheckpointError(f"{path}: tensor {entry['name']!r} is malformed")
        arrays[entry["name"]] = np.frombuffer(payload, dtype="<f8", count=length // 8,
                                              offset=start).reshape(shape).astype(np.float64)
    config = ModelConfig.from_dict(manifest["model_config"], manifest["model_config"]["token_count"])
    model = build_model(config, schema, seed=0, arrays=arrays)
    stats = {name: NumericStats(float(s["mean"]), float(s["std"])) for name, s in manifest["stats"].items()}
    logger.info(f"Checkpoint loaded from: {path}")
    return Checkpoint(model, stats, manifest.get("metadata", {}), manifest.get("provenance", {}))


def checkpoint_file_digest(path: str) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
