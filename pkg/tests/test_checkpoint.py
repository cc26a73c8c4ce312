# -*- coding: utf-8 -*-
import json

import numpy as np
import pytest

from core.checkpoint import Checkpoint, checkpoint_file_digest, load_checkpoint, save_checkpoint
from core.data import NumericStats, default_schema, encode
from core.errors import CheckpointError
from core.model import build_model


@pytest.fixture
def checkpoint(small_dataset, tiny_model_config):
    ds = encode(small_dataset)
    model = build_model(tiny_model_config(5), ds.schema, seed=5)
    return Checkpoint(model, dict(ds.stats), {"best_epoch": 3}, {"tool_version": "1.0.0", "seed": 5})


def test_round_trip_is_bit_exact(tmp_path, checkpoint, small_dataset):
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(checkpoint, path)
    loaded = load_checkpoint(path, expected_schema=small_dataset.schema)
    for name, tensor in checkpoint.model.params.items():
        assert np.array_equal(loaded.model.params[name].value, tensor.value)
    assert loaded.digest() == checkpoint.digest()
    assert loaded.stats == checkpoint.stats
    assert loaded.metadata == {"best_epoch": 3}
    assert loaded.provenance["seed"] == 5
    x = encode(small_dataset).require_encoded()
    assert np.array_equal(loaded.model.predict_proba(x), checkpoint.model.predict_proba(x))


def test_saving_twice_gives_identical_bytes(tmp_path, checkpoint):
    a, b = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    save_checkpoint(checkpoint, a)
    save_checkpoint(checkpoint, b)
    assert checkpoint_file_digest(a) == checkpoint_file_digest(b)


def test_manifest_lists_every_tensor(checkpoint):
    manifest = checkpoint.manifest()
    assert manifest["format_version"] == 1
    assert [t["name"] for t in manifest["tensors"]] == checkpoint.model.params.names()
    total = sum(t["byte_len"] for t in manifest["tensors"])
    assert total == checkpoint.model.params.size() * 8


def test_schema_mismatch_is_rejected(tmp_path, checkpoint):
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(checkpoint, path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_schema=default_schema())


def test_truncated_payload_is_rejected(tmp_path, checkpoint):
    path = tmp_path / "model.ckpt"
    save_checkpoint(checkpoint, str(path))
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))


def test_unknown_format_version(tmp_path, checkpoint):
    path = tmp_path / "model.ckpt"
    save_checkpoint(checkpoint, str(path))
    head, _, payload = path.read_bytes().partition(b"\n")
    manifest = json.loads(head)
    manifest["format_version"] = 99
    path.write_bytes(json.dumps(manifest).encode("ascii") + b"\n" + payload)
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))


def test_missing_file():
    with pytest.raises(CheckpointError):
        load_checkpoint("/nonexistent/model.ckpt")


def test_stats_survive(tmp_path, checkpoint):
    checkpoint.stats["deposit"] = NumericStats(1.5, 0.25)
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(checkpoint, path)
    assert load_checkpoint(path).stats["deposit"] == NumericStats(1.5, 0.25)
