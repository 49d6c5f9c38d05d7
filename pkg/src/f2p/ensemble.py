"""Decomposition ensemble: per-dimension blending of local and aggregate predictions.

For every target coordinate predicted by both a local model and the
aggregate model, the blend is ``w * local + (1 - w) * aggregate`` with an
unconstrained scalar ``w`` fitted in closed form to minimise the summed
squared error on a fitting split.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .datagen import DatasetManifest, SplitArrays, load_split
from .facegen import (
    CROP_SIZE,
    FaceSchema,
    Recipe,
    TargetLayout,
    TargetVector,
    crop_image,
    decode_target,
    default_schema,
    nominal_crop_boxes,
)
from .nets.layers import softmax
from .nets.model import AGGREGATE, InputKind, PredictorModel

log = logging.getLogger(__name__)

DEGENERATE_DENOMINATOR = 1e-12
TIE_WEIGHT = 0.5
WEIGHT_CAP = 5.0


class WeightMode(str, enum.Enum):
    SHARED_FIT = "SharedFit"
    LOCAL_ONLY = "LocalOnly"
    AGGREGATE_ONLY = "AggregateOnly"


class EnsembleError(ValueError):
    pass


@dataclass
class ModelSet:
    """One aggregate model plus local models keyed by region name."""

    aggregate: PredictorModel
    locals: dict[str, PredictorModel]
    schema_fingerprint: str = ""


@dataclass
class PredictionTable:
    """Rows of aggregate / local predictions and ground truth, all in full target coordinates.

    Uncovered coordinates are NaN; one-hot coordinates hold probabilities.
    """

    aggregate: np.ndarray
    local: np.ndarray
    target: np.ndarray
    layout: TargetLayout

    def __post_init__(self):
        if not (self.aggregate.shape == self.local.shape == self.target.shape):
            raise EnsembleError("prediction table columns disagree in shape")
        if self.target.ndim != 2 or self.target.shape[1] != self.layout.width:
            raise EnsembleError("prediction table does not match the target layout")

    def __len__(self):
        return self.target.shape[0]


@dataclass
class EnsembleWeights:
    names: tuple[str, ...]
    w: np.ndarray
    modes: tuple[WeightMode, ...]
    clamped: tuple[str, ...] = field(default=())

    def to_json(self) -> dict:
        return {n: {"w": float(w), "mode": m.value} for n, w, m in zip(self.names, self.w, self.modes)}

    @classmethod
    def from_json(cls, obj: dict, layout: TargetLayout | None = None) -> EnsembleWeights:
        names = tuple(obj)
        if layout is not None and names != layout.names:
            raise EnsembleError("weights file does not match the target layout")
        return cls(names, np.array([obj[n]["w"] for n in names], dtype=np.float64), tuple(WeightMode(obj[n]["mode"]) for n in names))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path, layout: TargetLayout | None = None) -> EnsembleWeights:
        return cls.from_json(json.loads(Path(path).read_text()), layout)

    @classmethod
    def constant(cls, value: float, table_or_modes) -> EnsembleWeights:
        modes = table_or_modes.modes if isinstance(table_or_modes, EnsembleWeights) else table_or_modes
        names = table_or_modes.names if isinstance(table_or_modes, EnsembleWeights) else tuple(str(i) for i in range(len(modes)))
        w = np.array([value if m is WeightMode.SHARED_FIT else _fixed_weight(m) for m in modes])
        return cls(tuple(names), w, tuple(modes))


def _fixed_weight(mode: WeightMode) -> float:
    return 1.0 if mode is WeightMode.LOCAL_ONLY else 0.0


def coverage_modes(table: PredictionTable) -> tuple[WeightMode, ...]:
    has_l = ~np.isnan(table.local).any(axis=0)
    has_g = ~np.isnan(table.aggregate).any(axis=0)
    modes = []
    for i, (l, g) in enumerate(zip(has_l, has_g)):
        if l and g:
            modes.append(WeightMode.SHARED_FIT)
        elif l:
            modes.append(WeightMode.LOCAL_ONLY)
        elif g:
            modes.append(WeightMode.AGGREGATE_ONLY)
        else:
            raise EnsembleError(f"target dimension {table.layout.names[i]} has no predictions")
    return tuple(modes)


def closed_form_weights(local, aggregate, target) -> np.ndarray:
    """Column-wise argmin over w of sum((w*l + (1-w)*g - t)^2); degenerate columns get 0.5."""
    d = local - aggregate
    num = ((target - aggregate) * d).sum(axis=0)
    den = (d * d).sum(axis=0)
    out = np.full(den.shape, TIE_WEIGHT)
    ok = den >= DEGENERATE_DENOMINATOR
    out[ok] = num[ok] / den[ok]
    return out


def fit_weights(table: PredictionTable, cap: float = WEIGHT_CAP) -> EnsembleWeights:
    if len(table) < 2:
        raise EnsembleError("fitting ensemble weights needs at least 2 samples")
    modes = coverage_modes(table)
    w = np.array([_fixed_weight(m) for m in modes])
    shared = np.array([m is WeightMode.SHARED_FIT for m in modes])
    if shared.any():
        w[shared] = closed_form_weights(table.local[:, shared], table.aggregate[:, shared], table.target[:, shared])
    clamped = tuple(n for n, x in zip(table.layout.names, w) if abs(x) > cap)
    for name in clamped:
        log.warning("ensemble weight for %s clamped to +/-%g", name, cap)
    return EnsembleWeights(table.layout.names, np.clip(w, -cap, cap), modes, clamped)


def blend(aggregate, local, weights: EnsembleWeights) -> np.ndarray:
    """Raw linear blend before any one-hot renormalization."""
    aggregate = np.asarray(aggregate, dtype=np.float64)
    local = np.asarray(local, dtype=np.float64)
    if aggregate.shape != local.shape or aggregate.shape[-1] != len(weights.w):
        raise EnsembleError("blend inputs do not match the weight layout")
    out = np.empty(np.broadcast_shapes(aggregate.shape, local.shape))
    for i, mode in enumerate(weights.modes):
        g, l = aggregate[..., i], local[..., i]
        if mode is WeightMode.SHARED_FIT:
            # g + w (l - g) returns g exactly when l == g, whatever w is
            out[..., i] = g + weights.w[i] * (l - g)
        elif mode is WeightMode.LOCAL_ONLY:
            out[..., i] = l
        else:
            out[..., i] = g
    return out


def renormalize_onehots(values, layout: TargetLayout) -> np.ndarray:
    out = np.array(values, dtype=np.float64, copy=True)
    for sl in layout.onehot_slices():
        part = np.clip(out[..., sl], 0.0, None)
        total = part.sum(axis=-1, keepdims=True)
        k = sl.stop - sl.start
        out[..., sl] = np.where(total > 0, part / np.where(total > 0, total, 1.0), 1.0 / k)
    return out


def combine(aggregate_pred, local_preds, weights: EnsembleWeights, layout: TargetLayout | None = None) -> np.ndarray:
    """Blend, then clip negative one-hot entries and rescale each slice to sum to 1."""
    layout = layout or default_schema().layout()
    if tuple(weights.names) != layout.names:
        raise EnsembleError("weights do not match the target layout")
    return renormalize_onehots(blend(aggregate_pred, local_preds, weights), layout)


def squared_error(table: PredictionTable, weights: EnsembleWeights) -> np.ndarray:
    """Per-dimension summed squared error of the raw blend (the fitting objective)."""
    resid = blend(table.aggregate, table.local, weights) - table.target
    return (resid**2).sum(axis=0)


def mean_l1(values, target, layout: TargetLayout) -> float:
    mask = layout.continuous_mask()
    return float(np.abs(np.asarray(values)[:, mask] - np.asarray(target)[:, mask]).mean())


# ---------------------------------------------------------------------------
# running the models
# ---------------------------------------------------------------------------


def _to_probabilities(full: np.ndarray, layout: TargetLayout) -> np.ndarray:
    out = full.copy()
    for sl in layout.onehot_slices():
        block = out[:, sl]
        if not np.isnan(block).any():
            out[:, sl] = softmax(block, axis=1)
    return out


def scatter_outputs(model: PredictorModel, outputs: np.ndarray, width: int) -> np.ndarray:
    full = np.full((outputs.shape[0], width), np.nan)
    full[:, model.target_indices] = outputs
    return full


def run_models(models: ModelSet, frames, crops: dict[str, np.ndarray], layout: TargetLayout):
    """Aggregate and assembled local predictions in full target coordinates (one-hots as probabilities)."""
    agg_input = frames if models.aggregate.input_kind is InputKind.FULL_FRAME else None
    if agg_input is None:
        raise EnsembleError("the aggregate model must read full frames")
    aggregate = _to_probabilities(scatter_outputs(models.aggregate, models.aggregate.predict(frames), layout.width), layout)
    local = np.full_like(aggregate, np.nan)
    for name, model in models.locals.items():
        source = crops[name] if model.input_kind is InputKind.CROP else frames
        part = scatter_outputs(model, model.predict(source), layout.width)
        covered = ~np.isnan(part[0])
        if (covered & ~np.isnan(local[0])).any():
            raise EnsembleError(f"local model {name} overlaps another local model")
        local[:, covered] = part[:, covered]
    return aggregate, _to_probabilities(local, layout)


def collect_predictions(
    models: ModelSet,
    manifest: DatasetManifest,
    split: str,
    schema: FaceSchema | None = None,
    data: SplitArrays | None = None,
) -> PredictionTable:
    schema = schema or default_schema()
    if models.schema_fingerprint and models.schema_fingerprint != manifest.schema_fingerprint:
        raise EnsembleError("models were trained against a different face schema than the corpus")
    data = data or load_split(manifest, split)
    layout = schema.layout()
    aggregate, local = run_models(models, data.frames, data.crops, layout)
    return PredictionTable(aggregate, local, data.targets.copy(), layout)


@lru_cache(maxsize=4)
def _nominal_boxes(schema: FaceSchema):
    return nominal_crop_boxes(schema)


def infer(
    image,
    models: ModelSet,
    weights: EnsembleWeights,
    adapter=None,
    schema: FaceSchema | None = None,
) -> tuple[Recipe, TargetVector]:
    """Full inference for one image: optional style adapter, fixed nominal crops, blend, decode."""
    from .domain_adapt import adapt

    schema = schema or default_schema()
    img = np.asarray(image)
    if img.dtype == np.uint8:
        img = img.astype(np.float64) / 255.0
    size = models.aggregate.spec.input_size
    if img.shape != (size, size):
        raise EnsembleError(f"inference expects a {size}x{size} image, got {img.shape}")
    if adapter is not None:
        img = adapt(img, adapter)
    boxes = _nominal_boxes(schema)
    crops = {name: crop_image(img, boxes[name], CROP_SIZE)[None] for name in models.locals}
    layout = schema.layout()
    aggregate, local = run_models(models, img[None], crops, layout)
    values = combine(aggregate, local, weights, layout)[0]
    return decode_target(values, schema), TargetVector(values, layout)


__all__ = [
    "AGGREGATE",
    "EnsembleError",
    "EnsembleWeights",
    "ModelSet",
    "PredictionTable",
    "WeightMode",
    "blend",
    "closed_form_weights",
    "collect_predictions",
    "combine",
    "fit_weights",
    "infer",
    "mean_l1",
    "squared_error",
]
