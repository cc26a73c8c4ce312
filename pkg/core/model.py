#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Two-Stream Transformer Network
شبكة المحوّل ثنائية المسار

Every raw feature becomes one token. Tokens pass through transformer encoder
blocks, are flattened into a stack of fully connected ReLU layers (the deep
features compared by the alignment loss) and end in a single sigmoid logit.
Source and target streams share every parameter.
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from . import numcore as nc
from .data import TabularSchema
from .errors import BatchSizeMismatchError, ConfigError, SchemaError
from .numcore import ParameterSet, Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    token_count: int = 21
    d_model: int = 28
    heads: int = 7
    encoder_blocks: int = 1
    ffn_hidden: Optional[int] = None
    trunk_widths: Tuple[int, ...] = (256, 128, 64, 32, 16)
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "trunk_widths", tuple(int(w) for w in self.trunk_widths))
        if self.ffn_hidden is None:
            object.__setattr__(self, "ffn_hidden", 4 * self.d_model)
        if self.token_count < 2:
            raise ConfigError(f"token_count must be >= 2, got {self.token_count}")
        if self.heads < 1 or self.d_model < 1 or self.d_model % self.heads:
            raise ConfigError(f"d_model ({self.d_model}) must be a positive multiple of heads ({self.heads})")
        if self.encoder_blocks < 1 or self.ffn_hidden < 1:
            raise ConfigError("encoder_blocks and ffn_hidden must be >= 1")
        if not self.trunk_widths or min(self.trunk_widths) < 1:
            raise ConfigError(f"trunk_widths must be non-empty and >= 1, got {list(self.trunk_widths)}")
        if self.layer_norm_eps < 0:
            raise ConfigError(f"layer_norm_eps must be >= 0, got {self.layer_norm_eps}")

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads

    @property
    def feature_width(self) -> int:
        return self.trunk_widths[-1]

    @classmethod
    def from_dict(cls, section: Mapping[str, Any], token_count: int) -> "ModelConfig":
        values = dict(section)
        values["token_count"] = token_count
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "token_count": self.token_count,
            "d_model": self.d_model,
            "heads": self.heads,
            "encoder_blocks": self.encoder_blocks,
            "ffn_hidden": self.ffn_hidden,
            "trunk_widths": list(self.trunk_widths),
            "layer_norm_eps": self.layer_norm_eps,
        }


class ModelParams(ParameterSet):
    """Learnable arrays addressed by stable names.

    embed.<feature>.table | .scale | .shift, block<b>.head<j>.wq|wk|wv,
    block<b>.wo, block<b>.ffn.w1|b1|w2|b2, block<b>.ln1|ln2.gain|bias,
    trunk<i>.weight|bias, classifier.weight|bias
    """

    @classmethod
    def init(cls, config: ModelConfig, schema: TabularSchema, seed: int) -> "ModelParams":
        if schema.token_count != config.token_count:
            raise SchemaError(f"Schema has {schema.token_count} features, config expects {config.token_count}")
        rng = np.random.default_rng(seed)
        d, dk = config.d_model, config.d_k
        params = cls()
        for spec in schema.features:
            if spec.is_categorical:
                params.add(f"embed.{spec.name}.table", nc.glorot_uniform(rng, spec.width, d))
            else:
                params.add(f"embed.{spec.name}.scale", nc.glorot_uniform(rng, 1, d, shape=(d,)))
                params.add(f"embed.{spec.name}.shift", np.zeros(d))
        for b in range(config.encoder_blocks):
            for j in range(config.heads):
                for proj in ("wq", "wk", "wv"):
                    params.add(f"block{b}.head{j}.{proj}", nc.glorot_uniform(rng, d, dk))
            params.add(f"block{b}.wo", nc.glorot_uniform(rng, config.heads * dk, d))
            params.add(f"block{b}.ffn.w1", nc.glorot_uniform(rng, d, config.ffn_hidden))
            params.add(f"block{b}.ffn.b1", np.zeros(config.ffn_hidden))
            params.add(f"block{b}.ffn.w2", nc.glorot_uniform(rng, config.ffn_hidden, d))
            params.add(f"block{b}.ffn.b2", np.zeros(d))
            for norm in ("ln1", "ln2"):
                params.add(f"block{b}.{norm}.gain", np.ones(d))
                params.add(f"block{b}.{norm}.bias", np.zeros(d))
        fan_in = config.token_count * d
        for i, width in enumerate(config.trunk_widths):
            params.add(f"trunk{i}.weight", nc.glorot_uniform(rng, fan_in, width))
            params.add(f"trunk{i}.bias", np.zeros(width))
            fan_in = width
        params.add("classifier.weight", nc.glorot_uniform(rng, fan_in, 1))
        params.add("classifier.bias", np.zeros(1))
        logger.info(f"Initialised {len(params)} parameter arrays ({params.size()} values, seed {seed})")
        return params

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, tensor in self.items():
            h.update(name.encode("utf-8"))
            h.update(repr(tensor.shape).encode("ascii"))
            h.update(np.ascontiguousarray(tensor.value, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass
class ForwardOutput:
    """One stream's outputs; attentions[block][head] has shape (batch, T, T)."""

    logits: Tensor
    probabilities: Tensor
    features: Tensor
    attentions: Tuple[Tuple[Tensor, ...], ...]

    def head_mean(self) -> np.ndarray:
        """Attention averaged over heads and blocks, one T×T map per row."""
        maps = [a.value for block in self.attentions for a in block]
        return np.mean(maps, axis=0)

    def batch_mean_attention(self) -> np.ndarray:
        return self.head_mean().mean(axis=0)


class TransCORALNet:
    """Shared-weight transformer classifier over feature tokens."""

    def __init__(self, config: ModelConfig, schema: TabularSchema,
                 params: Optional[ModelParams] = None, seed: int = 0):
        if schema.token_count != config.token_count:
            raise SchemaError(f"Schema has {schema.token_count} features, config expects {config.token_count}")
        self.config = config
        self.schema = schema
        self.params = params if params is not None else ModelParams.init(config, schema, seed)
        self._layout = schema.layout()

    def _as_batch(self, x) -> Tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.ndim != 2 or x.shape[1] != self.schema.encoded_width:
            raise SchemaError(f"Encoded rows must have width {self.schema.encoded_width}, got shape {x.shape}")
        return x, single

    def embed(self, x) -> Tensor:
        """Encoded rows (B×d_enc) → tokens (B×T×d_model); a single row gives T×d_model."""
        x, single = self._as_batch(x)
        p = self.params
        tokens = []
        for piece in self._layout:
            name = piece.spec.name
            block = x[:, piece.start:piece.stop]
            if piece.spec.is_categorical:
                tokens.append(nc.matmul(block, p[f"embed.{name}.table"]))
            else:
                tokens.append(block * p[f"embed.{name}.scale"] + p[f"embed.{name}.shift"])
        out = nc.stack(tokens, axis=1)
        return nc.reshape(out, out.shape[1:]) if single else out

    def multi_head_attention(self, tokens: Tensor, block: int = 0) -> Tuple[Tensor, Tuple[Tensor, ...]]:
        p = self.params
        scale = 1.0 / np.sqrt(self.config.d_k)
        heads, attentions = [], []
        for j in range(self.config.heads):
            prefix = f"block{block}.head{j}"
            q = nc.matmul(tokens, p[f"{prefix}.wq"])
            k = nc.matmul(tokens, p[f"{prefix}.wk"])
            v = nc.matmul(tokens, p[f"{prefix}.wv"])
            a = nc.softmax_rows(nc.matmul(q, nc.transpose(k)) * scale)
            attentions.append(a)
            heads.append(nc.matmul(a, v))
        h_multi = nc.matmul(nc.concat(heads, axis=-1), p[f"block{block}.wo"])
        return h_multi, tuple(attentions)

    def encoder_block(self, tokens: Tensor, block: int = 0) -> Tuple[Tensor, Tuple[Tensor, ...]]:
        p = self.params
        eps = self.config.layer_norm_eps
        attended, attentions = self.multi_head_attention(tokens, block)
        x1 = nc.layer_norm(tokens + attended, p[f"block{block}.ln1.gain"], p[f"block{block}.ln1.bias"], eps)
        hidden = nc.relu(nc.matmul(x1, p[f"block{block}.ffn.w1"]) + p[f"block{block}.ffn.b1"])
        ffn = nc.matmul(hidden, p[f"block{block}.ffn.w2"]) + p[f"block{block}.ffn.b2"]
        out = nc.layer_norm(x1 + ffn, p[f"block{block}.ln2.gain"], p[f"block{block}.ln2.bias"], eps)
        return out, attentions

    def trunk_forward(self, tokens: Tensor) -> Tensor:
        """Flatten tokens and apply the fully connected ReLU stack."""
        single = tokens.ndim == 2
        batch = 1 if single else tokens.shape[0]
        h = nc.reshape(tokens, (batch, self.config.token_count * self.config.d_model))
        for i in range(len(self.config.trunk_widths)):
            h = nc.relu(nc.matmul(h, self.params[f"trunk{i}.weight"]) + self.params[f"trunk{i}.bias"])
        return nc.reshape(h, (h.shape[1],)) if single else h

    def forward(self, x) -> ForwardOutput:
        x, _ = self._as_batch(x)
        tokens = self.embed(x)
        attentions = []
        for b in range(self.config.encoder_blocks):
            tokens, block_attn = self.encoder_block(tokens, b)
            attentions.append(block_attn)
        features = self.trunk_forward(tokens)
        logits = nc.reshape(nc.matmul(features, self.params["classifier.weight"]) + self.params["classifier.bias"],
                            (x.shape[0],))
        return ForwardOutput(logits, nc.sigmoid(logits), features, tuple(attentions))

    def forward_two_stream(self, x_s, x_t, training: bool = True) -> Tuple[ForwardOutput, ForwardOutput]:
        """Run both streams through the same parameters."""
        x_s, _ = self._as_batch(x_s)
        x_t, _ = self._as_batch(x_t)
        if training and x_s.shape[0] != x_t.shape[0]:
            raise BatchSizeMismatchError(f"Source batch has {x_s.shape[0]} rows, target batch {x_t.shape[0]}")
        return self.forward(x_s), self.forward(x_t)

    def predict_proba(self, x, batch_size: int = 1024) -> np.ndarray:
        x, _ = self._as_batch(x)
        parts = [self.forward(x[i:i + batch_size]).probabilities.value for i in range(0, len(x), batch_size)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def attention_maps(self, x, batch_size: int = 1024) -> np.ndarray:
        """Head- and block-averaged attention per row, shape (n, T, T)."""
        x, _ = self._as_batch(x)
        parts = [self.forward(x[i:i + batch_size]).head_mean() for i in range(0, len(x), batch_size)]
        t = self.config.token_count
        return np.concatenate(parts) if parts else np.zeros((0, t, t))


def build_model(config: ModelConfig, schema: TabularSchema, seed: int,
                arrays: Optional[Mapping[str, np.ndarray]] = None) -> TransCORALNet:
    """Fresh model, or one filled with the given named arrays."""
    params = ModelParams.init(config, schema, seed)
    if arrays is not None:
        missing = sorted(set(params.names()) - set(arrays))
        if missing:
            raise SchemaError(f"Missing parameter arrays: {missing[:5]}")
        for name in params.names():
            params.assign(name, arrays[name])
    return TransCORALNet(config, schema, params)
