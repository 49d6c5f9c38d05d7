"""Trunk + grouped-head predictors, seeded initialization and checkpoints."""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..facegen import CROP_SIZE, IMAGE_SIZE, FaceSchema, Region
from . import layers
from .loss import HeadSpec, head_offsets

MAGIC = b"F2PM"
VERSION = 1


class Mode(str, enum.Enum):
    FROZEN_TRUNK = "FrozenTrunk"
    FULL_TRAINING = "FullTraining"


class InputKind(str, enum.Enum):
    FULL_FRAME = "FullFrame"
    CROP = "Crop"


AGGREGATE = "Aggregate"


class SpecError(ValueError):
    pass


class InputSizeError(ValueError):
    pass


@dataclass(frozen=True)
class ConvSpec:
    channels: int
    kernel: int = 3
    stride: int = 2


@dataclass(frozen=True)
class NetSpec:
    input_size: int
    convs: tuple[ConvSpec, ...]
    pool_grid: int
    dense: tuple[int, ...]
    heads: tuple[HeadSpec, ...]

    def validate(self) -> None:
        if self.input_size < 1 or not self.heads:
            raise SpecError("net needs a positive input size and at least one head")
        size = self.input_size
        for c in self.convs:
            if c.channels < 1 or c.kernel < 1 or c.kernel % 2 == 0 or c.stride < 1:
                raise SpecError(f"bad conv layer {c}")
            size = (size - 1) // c.stride + 1
        if size % self.pool_grid:
            raise SpecError(f"feature map {size} not divisible by pool grid {self.pool_grid}")
        if any(d < 1 for d in self.dense):
            raise SpecError("dense widths must be positive")
        keys = [(h.group, h.kind) for h in self.heads]
        if len(set(keys)) != len(keys):
            raise SpecError("duplicate (group, kind) heads")

    @property
    def output_width(self) -> int:
        return sum(h.width for h in self.heads)

    def feature_width(self) -> int:
        if self.dense:
            return self.dense[-1]
        channels = self.convs[-1].channels if self.convs else 1
        return channels * self.pool_grid**2

    def to_json(self) -> dict:
        return {
            "input_size": self.input_size,
            "convs": [[c.channels, c.kernel, c.stride] for c in self.convs],
            "pool_grid": self.pool_grid,
            "dense": list(self.dense),
            "heads": [[h.group, h.kind, h.width] for h in self.heads],
        }

    @classmethod
    def from_json(cls, obj: dict) -> NetSpec:
        return cls(
            input_size=obj["input_size"],
            convs=tuple(ConvSpec(*c) for c in obj["convs"]),
            pool_grid=obj["pool_grid"],
            dense=tuple(obj["dense"]),
            heads=tuple(HeadSpec(*h) for h in obj["heads"]),
        )


def scope_heads(schema: FaceSchema, scope: str) -> tuple[tuple[HeadSpec, ...], np.ndarray]:
    """Heads for a model scope and the full-target index of every output slot."""
    layout = schema.layout()
    if scope == AGGREGATE:
        heads = []
        for (group, kind), sl in layout.slices.items():
            heads.append(HeadSpec(group, kind, sl.stop - sl.start))
        return tuple(heads), np.arange(layout.width)
    name = Region(scope).value
    r = schema.region(name)
    heads = (HeadSpec(name, "continuous", r.n_continuous), HeadSpec(name, "onehot", r.discrete_option_count))
    return heads, layout.region_indices(name)


def default_net_spec(
    schema: FaceSchema,
    scope: str = AGGREGATE,
    input_kind: InputKind = InputKind.FULL_FRAME,
    convs: Sequence[tuple[int, int, int]] = ((8, 3, 2), (16, 3, 2)),
    pool_grid: int | None = None,
    dense: Sequence[int] = (64,),
) -> NetSpec:
    """Default trunk; the pool grid defaults to 4-pixel bins on the last feature map."""
    heads, _ = scope_heads(schema, scope)
    size = IMAGE_SIZE if InputKind(input_kind) is InputKind.FULL_FRAME else CROP_SIZE
    if pool_grid is None:
        fmap = size
        for _, _, stride in convs:
            fmap = (fmap - 1) // stride + 1
        pool_grid = max(1, fmap // 4)
    return NetSpec(size, tuple(ConvSpec(*c) for c in convs), pool_grid, tuple(dense), heads)


def trunk_param_names(spec: NetSpec) -> list[str]:
    names = []
    for i in range(len(spec.convs)):
        names += [f"conv{i}.w", f"conv{i}.b"]
    for i in range(len(spec.dense)):
        names += [f"dense{i}.w", f"dense{i}.b"]
    return names


def buffer_names() -> list[str]:
    """Fitted input statistics: stored with the parameters, never updated by gradients."""
    return ["input.mean", "input.scale"]


def trainable_param_names(spec: NetSpec) -> list[str]:
    return trunk_param_names(spec) + head_param_names(spec)


def head_param_names(spec: NetSpec) -> list[str]:
    names = []
    for h in spec.heads:
        names += [f"head.{h.group}.{h.kind}.w", f"head.{h.group}.{h.kind}.b"]
    return names


@dataclass
class PredictorModel:
    spec: NetSpec
    params: dict[str, np.ndarray]
    scope: str = AGGREGATE
    input_kind: InputKind = InputKind.FULL_FRAME
    mode: Mode = Mode.FROZEN_TRUNK
    target_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    input_fitted: bool = False

    @property
    def heads(self) -> tuple[HeadSpec, ...]:
        return self.spec.heads

    @property
    def output_width(self) -> int:
        return self.spec.output_width

    def continuous_mask(self) -> np.ndarray:
        mask = np.zeros(self.output_width, dtype=bool)
        for h, sl in zip(self.heads, head_offsets(self.heads)):
            mask[sl] = h.kind == "continuous"
        return mask

    def prepare(self, images) -> np.ndarray:
        """uint8 or [0, 1] float images, single or batched, to a standardized NHWC float batch."""
        x = np.asarray(images)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1:] != (self.spec.input_size, self.spec.input_size):
            raise InputSizeError(
                f"model expects {self.spec.input_size}x{self.spec.input_size} input, got {x.shape[1:]}"
            )
        dtype = self.dtype
        x = x.astype(dtype) / dtype.type(255.0) if x.dtype == np.uint8 else x.astype(dtype)
        return ((x - self.params["input.mean"]) / self.params["input.scale"])[..., None]

    def fit_input_stats(self, images, batch_size: int = 512) -> None:
        """Per-pixel mean and a single pooled std over ``images`` (uint8 or [0, 1] floats)."""
        images = np.asarray(images)
        if len(images) == 0:
            raise ValueError("cannot fit input statistics on zero images")
        unit = 1.0 / 255.0 if images.dtype == np.uint8 else 1.0
        total = np.zeros(images.shape[1:])
        sq = np.zeros(images.shape[1:])
        for i in range(0, len(images), batch_size):
            chunk = images[i : i + batch_size].astype(np.float64) * unit
            total += chunk.sum(axis=0)
            sq += (chunk**2).sum(axis=0)
        mean = total / len(images)
        var = np.maximum(sq / len(images) - mean**2, 0.0).mean()
        dtype = self.dtype
        self.params["input.mean"] = mean.astype(dtype)
        self.params["input.scale"] = np.array([max(np.sqrt(var), 1e-3)], dtype=dtype)
        self.input_fitted = True

    @property
    def dtype(self) -> np.dtype:
        return self.params["head." + self.heads[0].group + "." + self.heads[0].kind + ".w"].dtype

    def astype(self, dtype) -> PredictorModel:
        out = self.copy()
        out.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return out

    def features(self, x, cache: list | None = None) -> np.ndarray:
        p = self.params
        a = x
        for i, c in enumerate(self.spec.convs):
            z, conv_cache = layers.conv_forward(a, p[f"conv{i}.w"], p[f"conv{i}.b"], c.stride, c.kernel)
            if cache is not None:
                cache.append(("conv", i, conv_cache, z))
            a = layers.relu_forward(z)
        a, pool_cache = layers.pool_forward(a, self.spec.pool_grid)
        if cache is not None:
            cache.append(("pool", 0, pool_cache, None))
        for i in range(len(self.spec.dense)):
            z = a @ p[f"dense{i}.w"] + p[f"dense{i}.b"]
            if cache is not None:
                cache.append(("dense", i, a, z))
            a = layers.relu_forward(z)
        return a

    def head_forward(self, feats) -> np.ndarray:
        outs = []
        for h in self.heads:
            z = feats @ self.params[f"head.{h.group}.{h.kind}.w"] + self.params[f"head.{h.group}.{h.kind}.b"]
            outs.append(np.tanh(z) if h.kind == "continuous" else z)
        return np.concatenate(outs, axis=1)

    def forward_batch(self, x, cache: list | None = None) -> np.ndarray:
        return self.head_forward(self.features(x, cache))

    def predict(self, images, batch_size: int = 256) -> np.ndarray:
        images = np.asarray(images)
        chunks = [self.forward_batch(self.prepare(images[i : i + batch_size])) for i in range(0, len(images), batch_size)]
        return np.concatenate(chunks, axis=0)

    def head_backward(self, feats, out, dout, grads) -> np.ndarray:
        dfeats = np.zeros_like(feats)
        for h, sl in zip(self.heads, head_offsets(self.heads)):
            d = dout[:, sl]
            if h.kind == "continuous":
                d = d * (1.0 - out[:, sl] ** 2)
            key = f"head.{h.group}.{h.kind}"
            grads[f"{key}.w"] = feats.T @ d
            grads[f"{key}.b"] = d.sum(axis=0)
            dfeats += d @ self.params[f"{key}.w"].T
        return dfeats

    def backward(self, cache, feats, out, dout, trunk: bool = True) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        da = self.head_backward(feats, out, dout, grads)
        if not trunk:
            return grads
        for kind, i, saved, z in reversed(cache):
            if kind == "dense":
                dz = layers.relu_backward(da, z)
                grads[f"dense{i}.w"] = saved.T @ dz
                grads[f"dense{i}.b"] = dz.sum(axis=0)
                da = dz @ self.params[f"dense{i}.w"].T
            elif kind == "pool":
                da = layers.pool_backward(da, saved)
            else:
                dz = layers.relu_backward(da, z)
                da, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = layers.conv_backward(
                    dz, self.params[f"conv{i}.w"], saved, need_dx=i > 0
                )
        return grads

    def copy(self) -> PredictorModel:
        return PredictorModel(
            self.spec,
            {k: v.copy() for k, v in self.params.items()},
            self.scope,
            self.input_kind,
            self.mode,
            self.target_indices.copy(),
            self.input_fitted,
        )


def init_model(
    spec: NetSpec,
    seed: int,
    scope: str = AGGREGATE,
    input_kind: InputKind = InputKind.FULL_FRAME,
    target_indices: np.ndarray | None = None,
) -> PredictorModel:
    """He-normal weights (std = sqrt(2 / fan_in)), zero biases, drawn from a seeded stream."""
    spec.validate()
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    channels = 1
    for i, c in enumerate(spec.convs):
        fan_in = channels * c.kernel * c.kernel
        params[f"conv{i}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, c.channels))
        params[f"conv{i}.b"] = np.zeros(c.channels)
        channels = c.channels
    width = channels * spec.pool_grid**2
    for i, d in enumerate(spec.dense):
        params[f"dense{i}.w"] = rng.normal(0.0, np.sqrt(2.0 / width), (width, d))
        params[f"dense{i}.b"] = np.zeros(d)
        width = d
    for h in spec.heads:
        params[f"head.{h.group}.{h.kind}.w"] = rng.normal(0.0, np.sqrt(1.0 / width), (width, h.width))
        params[f"head.{h.group}.{h.kind}.b"] = np.zeros(h.width)
    params["input.mean"] = np.full((spec.input_size, spec.input_size), 0.5)
    params["input.scale"] = np.ones(1)
    if target_indices is None:
        target_indices = np.arange(spec.output_width)
    if len(target_indices) != spec.output_width:
        raise SpecError("target indices must cover every output slot")
    return PredictorModel(spec, params, scope, InputKind(input_kind), Mode.FROZEN_TRUNK, np.asarray(target_indices))


def build_model(schema: FaceSchema, scope: str, input_kind: InputKind, seed: int, **arch) -> PredictorModel:
    spec = default_net_spec(schema, scope, input_kind, **arch)
    _, indices = scope_heads(schema, scope)
    return init_model(spec, seed, scope, input_kind, indices)


def forward(model: PredictorModel, image) -> np.ndarray:
    """Predictions for one image (1-D result) or a batch (2-D); continuous slots tanh'd, one-hot slots raw logits."""
    x = model.prepare(image)
    out = model.forward_batch(x)
    return out[0] if np.asarray(image).ndim == 2 else out


def predict(model: PredictorModel, images, batch_size: int = 256) -> np.ndarray:
    return model.predict(images, batch_size)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, model: PredictorModel, schema_fingerprint: str) -> None:
    names = sorted(model.params)
    header = {
        "schema_fingerprint": schema_fingerprint,
        "net_spec": model.spec.to_json(),
        "scope": model.scope,
        "input_kind": model.input_kind.value,
        "mode": model.mode.value,
        "target_indices": [int(i) for i in model.target_indices],
        "input_fitted": model.input_fitted,
        "params": [[n, list(model.params[n].shape)] for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    data = b"".join(model.params[n].astype("<f4").tobytes() for n in names)
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<HI", VERSION, len(blob)) + blob + data)


def load_checkpoint(path: str | Path, schema_fingerprint: str | None = None) -> PredictorModel:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint")
    if len(raw) < 10:
        raise CheckpointError(f"{path}: truncated checkpoint")
    version, hlen = struct.unpack("<HI", raw[4:10])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[10 : 10 + hlen])
    except ValueError:
        raise CheckpointError(f"{path}: corrupt checkpoint header") from None
    expected = 10 + hlen + 4 * sum(int(np.prod(shape)) for _, shape in header["params"])
    if len(raw) != expected:
        raise CheckpointError(f"{path}: checkpoint is {len(raw)} bytes, expected {expected} (truncated or padded)")
    if schema_fingerprint is not None and header["schema_fingerprint"] != schema_fingerprint:
        raise CheckpointError(f"{path}: trained against a different face schema")
    offset = 10 + hlen
    params = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape))
        params[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).astype(np.float32).reshape(shape)
        offset += 4 * count
    return PredictorModel(
        NetSpec.from_json(header["net_spec"]),
        params,
        header["scope"],
        InputKind(header["input_kind"]),
        Mode(header["mode"]),
        np.asarray(header["target_indices"], dtype=int),
        bool(header.get("input_fitted", False)),
    )


def checkpoint_fingerprint(path: str | Path) -> str:
    raw = Path(path).read_bytes()
    hlen = struct.unpack("<HI", raw[4:10])[1]
    return json.loads(raw[10 : 10 + hlen])["schema_fingerprint"]


__all__ = [
    "AGGREGATE",
    "ConvSpec",
    "InputKind",
    "Mode",
    "NetSpec",
    "PredictorModel",
    "buffer_names",
    "build_model",
    "default_net_spec",
    "forward",
    "init_model",
    "load_checkpoint",
    "predict",
    "save_checkpoint",
    "scope_heads",
    "trainable_param_names",
]
