"""Target-domain style simulator and an unpaired photometric inverse adapter.

The simulated domain applies a per-image-constant tone curve, blur, vignette
and noise. The adapter maps such images back toward the synthetic look with
an inverse tone curve fitted by matching three intensity quantiles between
two unpaired corpora, followed by unsharp masking tuned so that mean gradient
magnitude matches the synthetic corpus.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy.optimize import brentq

MATCH_LEVELS = (0.05, 0.50, 0.95)
TABLE_LEVELS = tuple(round(0.05 * i, 2) for i in range(21))
MIN_CORPUS = 20
GAMMA_RANGE = (0.05, 20.0)
MAX_SHARPEN = 10.0
SHARPEN_SIGMA = 1.0


class AdapterError(ValueError):
    pass


@dataclass(frozen=True)
class StyleParams:
    gain: float = 1.0
    bias: float = 0.0
    gamma: float = 1.0
    blur_radius: float = 0.0
    noise_amplitude: float = 0.0
    vignette: float = 0.0

    def __post_init__(self):
        if not self.gain > 0 or not self.gamma > 0:
            raise ValueError("style gain and gamma must be positive")
        if self.blur_radius < 0 or self.noise_amplitude < 0 or self.vignette < 0:
            raise ValueError("blur radius, noise amplitude and vignette must be >= 0")

    @property
    def is_identity(self) -> bool:
        return self == StyleParams()

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> StyleParams:
        return cls(**obj)


STYLE_PRESETS: dict[str, StyleParams] = {
    "identity": StyleParams(),
    "photo-like": StyleParams(gain=0.8, bias=0.08, gamma=1.3, blur_radius=0.8, noise_amplitude=0.02, vignette=0.2),
    "sketch-like": StyleParams(gain=1.1, bias=-0.02, gamma=2.2, blur_radius=1.2, noise_amplitude=0.01, vignette=0.0),
}


def style_preset(name: str, presets: dict[str, StyleParams] | None = None) -> StyleParams:
    table = {**STYLE_PRESETS, **(presets or {})}
    try:
        return table[name]
    except KeyError:
        raise KeyError(f"unknown style preset {name!r}; known: {', '.join(sorted(table))}") from None


def _as_unit(image) -> np.ndarray:
    img = np.asarray(image)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64, copy=False)


def _vignette_field(shape: tuple[int, int], strength: float) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    ry = (yy - (h - 1) / 2) / ((h - 1) / 2 or 1)
    rx = (xx - (w - 1) / 2) / ((w - 1) / 2 or 1)
    return 1.0 - strength * (rx**2 + ry**2) / 2.0


def apply_style(image, style: StyleParams, seed: int = 0) -> np.ndarray:
    """Render ``image`` (values in [0, 1]) in the simulated target style. Deterministic in ``seed``."""
    x = _as_unit(image)
    if style.is_identity:
        return x.copy()
    out = np.clip(style.gain * np.power(x, style.gamma) + style.bias, 0.0, 1.0)
    if style.blur_radius > 0:
        out = cv2.GaussianBlur(out, (0, 0), style.blur_radius, borderType=cv2.BORDER_REFLECT)
    if style.vignette > 0:
        out = out * _vignette_field(out.shape, style.vignette)
    if style.noise_amplitude > 0:
        out = out + np.random.default_rng(seed).normal(0.0, style.noise_amplitude, out.shape)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# adapter
# ---------------------------------------------------------------------------


@dataclass
class AdapterParams:
    gain: float = 1.0
    bias: float = 0.0
    gamma: float = 1.0
    sharpen: float = 0.0
    styled_stats: dict = field(default_factory=dict)
    synthetic_stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.gain > 0 or not self.gamma > 0 or self.sharpen < 0:
            raise ValueError("adapter gain and gamma must be positive, sharpening >= 0")

    @classmethod
    def identity(cls) -> AdapterParams:
        return cls()

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> AdapterParams:
        return cls(**obj)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> AdapterParams:
        return cls.from_json(json.loads(Path(path).read_text()))


def _stack(corpus) -> np.ndarray:
    if isinstance(corpus, np.ndarray) and corpus.ndim == 3:
        return _as_unit(corpus)
    return np.stack([_as_unit(im) for im in corpus])


def corpus_stats(corpus) -> dict:
    """Pooled pixel mean, variance, quantile table and mean gradient magnitude."""
    x = _stack(corpus)
    return {
        "mean": float(x.mean()),
        "variance": float(x.var()),
        "quantiles": {f"{q:.2f}": float(v) for q, v in zip(TABLE_LEVELS, np.quantile(x, TABLE_LEVELS))},
        "gradient": mean_gradient(x),
        "count": int(len(x)),
    }


def mean_gradient(images) -> float:
    x = _stack(images)
    gy, gx = np.gradient(x, axis=(1, 2))
    return float(np.hypot(gx, gy).mean())


def quantile_distance(a, b, levels=TABLE_LEVELS[1:-1]) -> float:
    """Mean absolute gap between the pooled intensity quantiles of two corpora."""
    return float(np.abs(np.quantile(_stack(a), levels) - np.quantile(_stack(b), levels)).mean())


def _tone(x, gain, bias, gamma):
    return gain * np.power(x, gamma) + bias


def _spacing_ratio(q, gamma):
    lo, mid, hi = (v**gamma for v in q)
    return (mid - lo) / (hi - lo)


def _fit_tone(src_q, dst_q) -> tuple[float, float, float]:
    """gain, bias, gamma with gain * src^gamma + bias hitting dst at the low and high levels
    and matching the relative position of the middle level."""
    target = (dst_q[1] - dst_q[0]) / (dst_q[2] - dst_q[0])
    lo, hi = GAMMA_RANGE

    def residual(g):
        return _spacing_ratio(src_q, g) - target

    r_lo, r_hi = residual(lo), residual(hi)
    if r_lo == 0:
        gamma = lo
    elif r_hi == 0 or r_lo * r_hi > 0:
        gamma = lo if abs(r_lo) <= abs(r_hi) else hi
    else:
        gamma = brentq(residual, lo, hi, xtol=1e-12, rtol=1e-12)
    if residual(1.0) == 0.0:
        gamma = 1.0
    span = src_q[2] ** gamma - src_q[0] ** gamma
    gain = (dst_q[2] - dst_q[0]) / span
    bias = dst_q[0] - gain * src_q[0] ** gamma
    return float(gain), float(bias), float(gamma)


def _sharpen(x, amount):
    if amount <= 0:
        return x
    if x.ndim == 3:
        return np.stack([_sharpen(im, amount) for im in x])
    blurred = cv2.GaussianBlur(x, (0, 0), SHARPEN_SIGMA, borderType=cv2.BORDER_REFLECT)
    return x + amount * (x - blurred)


def fit_adapter(styled_corpus, synthetic_corpus) -> AdapterParams:
    """Fit the inverse map from two unpaired corpora (at least 20 images each)."""
    styled, synthetic = _stack(styled_corpus), _stack(synthetic_corpus)
    for name, corpus in (("styled", styled), ("synthetic", synthetic)):
        if len(corpus) < MIN_CORPUS:
            raise AdapterError(f"{name} corpus has {len(corpus)} images; at least {MIN_CORPUS} are needed")
    src_q = np.quantile(styled, MATCH_LEVELS)
    dst_q = np.quantile(synthetic, MATCH_LEVELS)
    for name, q in (("styled", src_q), ("synthetic", dst_q)):
        if q[2] - q[0] < 1e-6:
            raise AdapterError(f"{name} corpus is degenerate: its intensity spread is empty")
        if min(q[1] - q[0], q[2] - q[1]) < 1e-6:
            # no strictly increasing curve can separate or merge a tied median
            raise AdapterError(f"{name} corpus is degenerate: its median is tied with an outer quantile")
    gain, bias, gamma = _fit_tone(src_q, dst_q)

    toned = np.clip(_tone(styled, gain, bias, gamma), 0.0, 1.0)
    goal = mean_gradient(synthetic)

    def shortfall(a):
        return mean_gradient(np.clip(_sharpen(toned, a), 0.0, 1.0)) - goal

    base = shortfall(0.0)
    if base >= -1e-9 * max(goal, 1.0):
        amount = 0.0
    elif shortfall(MAX_SHARPEN) <= 0:
        amount = MAX_SHARPEN
    else:
        amount = float(brentq(shortfall, 0.0, MAX_SHARPEN, xtol=1e-6))

    return AdapterParams(
        gain=gain,
        bias=bias,
        gamma=gamma,
        sharpen=amount,
        styled_stats=corpus_stats(styled),
        synthetic_stats=corpus_stats(synthetic),
    )


def adapt(image, adapter: AdapterParams) -> np.ndarray:
    """Inverse tone curve, then unsharp masking, clipped to [0, 1]."""
    x = _as_unit(image)
    out = np.clip(_tone(x, adapter.gain, adapter.bias, adapter.gamma), 0.0, 1.0)
    return np.clip(_sharpen(out, adapter.sharpen), 0.0, 1.0)


def adapt_batch(images, adapter: AdapterParams) -> np.ndarray:
    return np.stack([adapt(im, adapter) for im in images])


def style_batch(images, style: StyleParams, seed: int = 0) -> np.ndarray:
    """Style a batch; image ``i`` uses noise stream ``[seed, i]``."""
    return np.stack([apply_style(im, style, _image_seed(seed, i)) for i, im in enumerate(images)])


def _image_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


__all__ = [
    "AdapterError",
    "AdapterParams",
    "STYLE_PRESETS",
    "StyleParams",
    "adapt",
    "adapt_batch",
    "apply_style",
    "corpus_stats",
    "fit_adapter",
    "mean_gradient",
    "quantile_distance",
    "style_batch",
    "style_preset",
]
