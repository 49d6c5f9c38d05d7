"""Multi-part regression + classification loss over grouped target heads."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .layers import log_softmax, softmax


class Norm(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"


@dataclass(frozen=True)
class HeadSpec:
    group: str
    kind: str  # "continuous" or "onehot"
    width: int

    def __post_init__(self):
        if self.kind not in ("continuous", "onehot"):
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.width < 1:
            raise ValueError("head width must be positive")


@dataclass
class LossSpec:
    """Per-group weights: ``v`` scales regression parts, ``w`` classification parts (default 1)."""

    norm: Norm = Norm.L1
    v: dict[str, float] = field(default_factory=dict)
    w: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.norm = Norm(self.norm)
        for weights in (self.v, self.w):
            for k, val in weights.items():
                if not np.isfinite(val) or val < 0:
                    raise ValueError(f"loss weight for {k} must be finite and >= 0")

    def reg_weight(self, group: str) -> float:
        return float(self.v.get(group, 1.0))

    def cls_weight(self, group: str) -> float:
        return float(self.w.get(group, 1.0))

    def to_json(self) -> dict:
        return {"norm": self.norm.value, "v": dict(self.v), "w": dict(self.w)}

    @classmethod
    def from_json(cls, obj: dict) -> LossSpec:
        return cls(Norm(obj.get("norm", "L1")), dict(obj.get("v", {})), dict(obj.get("w", {})))


class LayoutMismatch(ValueError):
    pass


def head_offsets(heads: Sequence[HeadSpec]) -> list[slice]:
    out, pos = [], 0
    for h in heads:
        out.append(slice(pos, pos + h.width))
        pos += h.width
    return out


def _as_batch(a, dtype=None):
    a = np.asarray(a)
    if dtype is not None:
        a = a.astype(dtype, copy=False)
    elif not np.issubdtype(a.dtype, np.floating):
        a = a.astype(np.float64)
    return a[None, :] if a.ndim == 1 else a


def loss_and_grad(pred, target, heads: Sequence[HeadSpec], spec: LossSpec, need_grad: bool = True):
    """Total loss, per-part values and d(total)/d(pred).

    ``pred`` holds continuous outputs as-is and raw logits for one-hot heads.
    Parts are keyed ``"<group>.R"`` and ``"<group>.C"`` and averaged over the batch.
    """
    pred = _as_batch(pred)
    target = _as_batch(target, pred.dtype)
    width = sum(h.width for h in heads)
    if pred.shape != target.shape or pred.shape[1] != width:
        raise LayoutMismatch(f"pred {pred.shape} / target {target.shape} do not match head width {width}")
    n = pred.shape[0]
    grad = np.zeros_like(pred) if need_grad else None
    parts: dict[str, float] = {}
    total = 0.0
    for h, sl in zip(heads, head_offsets(heads)):
        p, t = pred[:, sl], target[:, sl]
        if h.kind == "continuous":
            diff = p - t
            weight = spec.reg_weight(h.group)
            if spec.norm is Norm.L1:
                value = np.abs(diff).mean()
                g = np.sign(diff) / diff.size
            else:
                value = (diff**2).mean()
                g = 2.0 * diff / diff.size
            key = f"{h.group}.R"
        else:
            value = -(t * log_softmax(p)).sum(axis=1).mean()
            weight = spec.cls_weight(h.group)
            g = (softmax(p) - t) / n
            key = f"{h.group}.C"
        parts[key] = parts.get(key, 0.0) + float(value)
        total += weight * float(value)
        if need_grad:
            grad[:, sl] = weight * g
    return total, parts, grad


def multipart_loss(pred, target, heads: Sequence[HeadSpec], spec: LossSpec) -> tuple[float, dict[str, float]]:
    total, parts, _ = loss_and_grad(pred, target, heads, spec, need_grad=False)
    return total, parts


def weighted_total(parts: dict[str, float], spec: LossSpec) -> float:
    total = 0.0
    for key, value in parts.items():
        group, kind = key.rsplit(".", 1)
        total += (spec.reg_weight(group) if kind == "R" else spec.cls_weight(group)) * value
    return total
