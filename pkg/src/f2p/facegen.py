"""Procedural 2D parametric face: schema, recipe encoding, and rasterization.

The face is assembled from anti-aliased primitives (ellipses, rings and
stroked curves) evaluated on signed-distance fields. Each facial region owns
a set of continuous modifiers and a small library of mutually exclusive
discrete variants.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field

import cv2
import numpy as np

IMAGE_SIZE = 128
CROP_SIZE = 48
CROP_MARGIN = 4
MASK_THRESHOLD = 0.25

BACKGROUND = 0.18
SKIN = 0.62
INK = 0.08
WHITE = 0.95


class Region(str, enum.Enum):
    EYES = "Eyes"
    NOSE = "Nose"
    MOUTH = "Mouth"


class Locality(str, enum.Enum):
    LOCAL = "Local"
    GLOBAL = "Global"


class EncodingError(ValueError):
    pass


class DecodingError(ValueError):
    pass


@dataclass(frozen=True)
class RegionSchema:
    region: Region
    continuous_params: tuple[tuple[str, Locality], ...]
    discrete_option_count: int

    def __post_init__(self):
        if len(self.continuous_params) < 3:
            raise ValueError(f"{self.region.value}: needs at least 3 continuous params")
        if self.discrete_option_count < 2:
            raise ValueError(f"{self.region.value}: needs at least 2 discrete options")
        kinds = {loc for _, loc in self.continuous_params}
        if kinds != {Locality.LOCAL, Locality.GLOBAL}:
            raise ValueError(f"{self.region.value}: needs both Local and Global params")

    @property
    def n_continuous(self) -> int:
        return len(self.continuous_params)

    @property
    def param_names(self) -> list[str]:
        return [name for name, _ in self.continuous_params]


@dataclass(frozen=True)
class FaceSchema:
    regions: tuple[RegionSchema, ...]
    global_params: tuple[str, ...]
    scale_param: str = "scale"

    def __post_init__(self):
        if len(self.regions) != 3:
            raise ValueError("the face model has exactly 3 regions")
        names = [f"{r.region.value}.{n}" for r in self.regions for n in r.param_names]
        names += list(self.global_params) + [self.scale_param]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")

    def region(self, region: Region | str) -> RegionSchema:
        region = Region(region)
        for r in self.regions:
            if r.region == region:
                return r
        raise KeyError(region)

    @property
    def region_ids(self) -> list[Region]:
        return [r.region for r in self.regions]

    @property
    def n_continuous(self) -> int:
        return sum(r.n_continuous for r in self.regions) + len(self.global_params)

    @property
    def n_onehot(self) -> int:
        return sum(r.discrete_option_count for r in self.regions)

    def to_dict(self) -> dict:
        return {
            "regions": [
                {
                    "region": r.region.value,
                    "continuous_params": [[n, loc.value] for n, loc in r.continuous_params],
                    "discrete_option_count": r.discrete_option_count,
                }
                for r in self.regions
            ],
            "global_params": list(self.global_params),
            "scale_param": self.scale_param,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def layout(self) -> TargetLayout:
        return TargetLayout.for_schema(self)


def default_schema() -> FaceSchema:
    L, G = Locality.LOCAL, Locality.GLOBAL
    return FaceSchema(
        regions=(
            RegionSchema(Region.EYES, (("spacing", G), ("size", L), ("tilt", L), ("vertical_position", G)), 3),
            RegionSchema(Region.NOSE, (("length", L), ("width", L), ("tip_curve", L), ("vertical_position", G)), 3),
            RegionSchema(Region.MOUTH, (("width", L), ("thickness", L), ("curvature", L), ("vertical_position", G)), 3),
        ),
        global_params=("face_width", "jaw_width", "chin_length"),
        scale_param="scale",
    )


GLOBALS_KEY = "Face"


@dataclass(frozen=True)
class TargetLayout:
    """Index map of the flat target vector.

    Keys are ``(group, kind)`` with kind ``"continuous"`` or ``"onehot"``;
    the global face parameters live under group ``"Face"``. Continuous slots
    come first (regions in schema order, then globals), followed by the
    one-hot slices.
    """

    slices: dict[tuple[str, str], slice]
    names: tuple[str, ...]

    @classmethod
    def for_schema(cls, schema: FaceSchema) -> TargetLayout:
        slices: dict[tuple[str, str], slice] = {}
        names: list[str] = []
        pos = 0
        for r in schema.regions:
            slices[(r.region.value, "continuous")] = slice(pos, pos + r.n_continuous)
            names += [f"{r.region.value}.{n}" for n in r.param_names]
            pos += r.n_continuous
        slices[(GLOBALS_KEY, "continuous")] = slice(pos, pos + len(schema.global_params))
        names += [f"{GLOBALS_KEY}.{n}" for n in schema.global_params]
        pos += len(schema.global_params)
        for r in schema.regions:
            k = r.discrete_option_count
            slices[(r.region.value, "onehot")] = slice(pos, pos + k)
            names += [f"{r.region.value}.option{i}" for i in range(k)]
            pos += k
        return cls(slices, tuple(names))

    @property
    def width(self) -> int:
        return len(self.names)

    def continuous_mask(self) -> np.ndarray:
        mask = np.zeros(self.width, dtype=bool)
        for (_, kind), sl in self.slices.items():
            if kind == "continuous":
                mask[sl] = True
        return mask

    def onehot_slices(self) -> list[slice]:
        return [sl for (_, kind), sl in self.slices.items() if kind == "onehot"]

    def region_indices(self, region: Region | str) -> np.ndarray:
        """Full-vector indices of one region's local target slice (continuous, then one-hot)."""
        name = Region(region).value
        cont = self.slices[(name, "continuous")]
        onehot = self.slices[(name, "onehot")]
        return np.r_[np.arange(cont.start, cont.stop), np.arange(onehot.start, onehot.stop)]


@dataclass
class TargetVector:
    values: np.ndarray
    layout: TargetLayout


@dataclass
class Recipe:
    continuous: dict[str, np.ndarray]
    globals: np.ndarray
    discrete: dict[str, int]
    scale: float = 0.0

    def to_json(self) -> dict:
        return {
            "continuous": {k: [float(x) for x in v] for k, v in self.continuous.items()},
            "globals": [float(x) for x in self.globals],
            "discrete": {k: int(v) for k, v in self.discrete.items()},
            "scale": float(self.scale),
        }

    @classmethod
    def from_json(cls, obj: dict) -> Recipe:
        return cls(
            continuous={k: np.asarray(v, dtype=np.float64) for k, v in obj["continuous"].items()},
            globals=np.asarray(obj["globals"], dtype=np.float64),
            discrete={k: int(v) for k, v in obj["discrete"].items()},
            scale=float(obj.get("scale", 0.0)),
        )

    def equals(self, other: Recipe, atol: float = 0.0) -> bool:
        if set(self.continuous) != set(other.continuous) or self.discrete != other.discrete:
            return False
        if self.scale != other.scale:
            return False
        pairs = [(self.globals, other.globals)]
        pairs += [(self.continuous[k], other.continuous[k]) for k in self.continuous]
        return all(a.shape == b.shape and np.allclose(a, b, rtol=0, atol=atol) for a, b in pairs)


def zero_recipe(schema: FaceSchema) -> Recipe:
    return Recipe(
        continuous={r.region.value: np.zeros(r.n_continuous) for r in schema.regions},
        globals=np.zeros(len(schema.global_params)),
        discrete={r.region.value: 0 for r in schema.regions},
        scale=0.0,
    )


def validate_recipe(recipe: Recipe, schema: FaceSchema) -> None:
    for r in schema.regions:
        name = r.region.value
        if name not in recipe.continuous or name not in recipe.discrete:
            raise EncodingError(f"recipe lacks region {name}")
        vec = np.asarray(recipe.continuous[name])
        if vec.shape != (r.n_continuous,):
            raise EncodingError(f"{name}: expected {r.n_continuous} continuous values, got {vec.shape}")
        if np.any(np.abs(vec) > 1.0) or not np.all(np.isfinite(vec)):
            raise EncodingError(f"{name}: continuous values outside [-1, 1]")
        idx = recipe.discrete[name]
        if not 0 <= idx < r.discrete_option_count:
            raise EncodingError(f"{name}: option index {idx} out of range [0, {r.discrete_option_count})")
    g = np.asarray(recipe.globals)
    if g.shape != (len(schema.global_params),):
        raise EncodingError(f"expected {len(schema.global_params)} global values, got {g.shape}")
    if np.any(np.abs(g) > 1.0) or not np.all(np.isfinite(g)):
        raise EncodingError("global values outside [-1, 1]")


def encode_recipe(recipe: Recipe, schema: FaceSchema) -> TargetVector:
    validate_recipe(recipe, schema)
    layout = schema.layout()
    values = np.zeros(layout.width)
    for r in schema.regions:
        name = r.region.value
        values[layout.slices[(name, "continuous")]] = recipe.continuous[name]
        onehot = layout.slices[(name, "onehot")]
        values[onehot.start + recipe.discrete[name]] = 1.0
    values[layout.slices[(GLOBALS_KEY, "continuous")]] = recipe.globals
    return TargetVector(values, layout)


def decode_target(vector: TargetVector | np.ndarray, schema: FaceSchema) -> Recipe:
    layout = schema.layout()
    if isinstance(vector, TargetVector):
        if vector.layout != layout:
            raise DecodingError("target vector layout does not match the schema")
        values = vector.values
    else:
        values = np.asarray(vector, dtype=np.float64)
    if values.shape != (layout.width,):
        raise DecodingError(f"expected a vector of length {layout.width}, got shape {values.shape}")
    continuous, discrete = {}, {}
    for r in schema.regions:
        name = r.region.value
        continuous[name] = np.clip(values[layout.slices[(name, "continuous")]], -1.0, 1.0)
        # np.argmax returns the first maximum, which is the lowest-index tie rule
        discrete[name] = int(np.argmax(values[layout.slices[(name, "onehot")]]))
    globals_ = np.clip(values[layout.slices[(GLOBALS_KEY, "continuous")]], -1.0, 1.0)
    return Recipe(continuous, globals_, discrete, 0.0)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ViewParams:
    shift_x: float = 0.0
    shift_y: float = 0.0
    brightness: float = 0.0
    contrast: float = 1.0
    noise_amplitude: float = 0.0
    noise_seed: int = 0

    MAX_SHIFT = 4.0

    def __post_init__(self):
        if abs(self.shift_x) > self.MAX_SHIFT or abs(self.shift_y) > self.MAX_SHIFT:
            raise ValueError(f"translation jitter is bounded by {self.MAX_SHIFT} px")
        if self.contrast <= 0 or self.noise_amplitude < 0:
            raise ValueError("contrast must be positive and noise amplitude non-negative")

    def to_json(self) -> dict:
        return {
            "shift_x": self.shift_x,
            "shift_y": self.shift_y,
            "brightness": self.brightness,
            "contrast": self.contrast,
            "noise_amplitude": self.noise_amplitude,
            "noise_seed": self.noise_seed,
        }


Box = tuple[int, int, int, int]  # x0, y0, x1, y1 (exclusive)

# Every padded mask box the schema can produce fits inside these (width, height).
NOMINAL_CROP_SIZES: dict[str, tuple[int, int]] = {
    Region.EYES.value: (80, 28),
    Region.NOSE.value: (36, 36),
    Region.MOUTH.value: (48, 24),
}


@dataclass
class RenderOutput:
    image: np.ndarray
    masks: dict[str, np.ndarray]
    mask_boxes: dict[str, Box]
    crop_boxes: dict[str, Box]
    face_mask: np.ndarray
    view: ViewParams = field(default_factory=ViewParams)


class _Canvas:
    def __init__(self, size: int, regions: list[str]):
        self.size = size
        self.image = np.full((size, size), BACKGROUND)
        self.coverage = {name: np.zeros((size, size)) for name in regions}
        self.face = np.zeros((size, size))

    def window(self, x0, y0, x1, y1):
        i0 = max(int(np.floor(y0)) - 2, 0)
        i1 = min(int(np.ceil(y1)) + 3, self.size)
        j0 = max(int(np.floor(x0)) - 2, 0)
        j1 = min(int(np.ceil(x1)) + 3, self.size)
        ys, xs = np.mgrid[i0:i1, j0:j1].astype(np.float64)
        return (slice(i0, i1), slice(j0, j1)), xs, ys

    def paint(self, win, cov, value, region=None):
        self.image[win] = self.image[win] * (1.0 - cov) + value * cov
        if region is not None:
            np.maximum(self.coverage[region][win], cov, out=self.coverage[region][win])


def _ellipse_distance(xs, ys, cx, cy, a, b, angle):
    c, s = np.cos(angle), np.sin(angle)
    dx, dy = xs - cx, ys - cy
    u = c * dx + s * dy
    v = -s * dx + c * dy
    q = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    grad = np.sqrt((u / a**2) ** 2 + (v / b**2) ** 2)
    safe_q = np.maximum(q, 1e-9)
    grad = np.maximum(grad / safe_q, 1e-9)
    return (q - 1.0) / grad


def _ellipse_extent(a, b, angle):
    c, s = abs(np.cos(angle)), abs(np.sin(angle))
    return np.hypot(a * c, b * s), np.hypot(a * s, b * c)


def fill_ellipse(canvas, cx, cy, a, b, value, region=None, angle=0.0):
    ex, ey = _ellipse_extent(a, b, angle)
    win, xs, ys = canvas.window(cx - ex, cy - ey, cx + ex, cy + ey)
    d = _ellipse_distance(xs, ys, cx, cy, a, b, angle)
    canvas.paint(win, np.clip(0.5 - d, 0.0, 1.0), value, region)


def ring_ellipse(canvas, cx, cy, a, b, thickness, value, region=None, angle=0.0):
    ex, ey = _ellipse_extent(a, b, angle)
    pad = thickness
    win, xs, ys = canvas.window(cx - ex - pad, cy - ey - pad, cx + ex + pad, cy + ey + pad)
    d = np.abs(_ellipse_distance(xs, ys, cx, cy, a, b, angle))
    canvas.paint(win, np.clip(thickness / 2 + 0.5 - d, 0.0, 1.0), value, region)


def _bezier(p0, p1, p2, n=20):
    t = np.linspace(0.0, 1.0, n)[:, None]
    p0, p1, p2 = (np.asarray(p, dtype=np.float64) for p in (p0, p1, p2))
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t**2 * p2


def stroke(canvas, points, thickness, value, region=None):
    pts = np.asarray(points, dtype=np.float64)
    pad = thickness
    win, xs, ys = canvas.window(
        pts[:, 0].min() - pad, pts[:, 1].min() - pad, pts[:, 0].max() + pad, pts[:, 1].max() + pad
    )
    dist = np.full(xs.shape, np.inf)
    for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
        vx, vy = bx - ax, by - ay
        denom = vx * vx + vy * vy
        t = np.zeros_like(xs) if denom == 0 else np.clip(((xs - ax) * vx + (ys - ay) * vy) / denom, 0, 1)
        np.minimum(dist, np.hypot(xs - ax - t * vx, ys - ay - t * vy), out=dist)
    canvas.paint(win, np.clip(thickness / 2 + 0.5 - dist, 0.0, 1.0), value, region)


def curve(canvas, p0, p1, p2, thickness, value, region=None):
    stroke(canvas, _bezier(p0, p1, p2), thickness, value, region)


def _draw_face(canvas, cx, cy, face_width, jaw_width, chin_length):
    a = 42.0 + 4.0 * face_width
    b_top = 48.0
    a_low = a * (0.9 + 0.08 * jaw_width)
    b_low = 50.6 + 4.0 * chin_length
    win, xs, ys = canvas.window(cx - a, cy - b_top, cx + a, cy + b_low)
    lower = ys >= cy
    ax = np.where(lower, a + (a_low - a) * np.clip((ys - cy) / b_low, 0, 1), a)
    by = np.where(lower, b_low, b_top)
    d = _ellipse_distance(xs, ys, cx, cy, ax, by, 0.0)
    cov = np.clip(0.5 - d, 0.0, 1.0)
    canvas.paint(win, cov, SKIN)
    canvas.face[win] = np.maximum(canvas.face[win], cov)


def _draw_eyes(canvas, cx, cy, params, variant):
    spacing, size, tilt, vpos = params
    region = Region.EYES.value
    ey = cy - 14.0 + 4.0 * vpos
    offset = 20.0 + 4.0 * spacing
    a = 7.5 + 2.5 * size
    theta = 0.25 * tilt
    for side in (-1.0, 1.0):
        ex = cx + side * offset
        ang = side * theta
        if variant == 0:
            # almond outline with a pupil
            ring_ellipse(canvas, ex, ey, a, 0.45 * a, 1.4, INK, region, ang)
            fill_ellipse(canvas, ex, ey, 0.32 * a, 0.32 * a, INK, region)
        elif variant == 1:
            # round open eye: white sclera, large iris
            fill_ellipse(canvas, ex, ey, a, 0.7 * a, WHITE, region, ang)
            ring_ellipse(canvas, ex, ey, a, 0.7 * a, 1.0, INK, region, ang)
            fill_ellipse(canvas, ex, ey, 0.38 * a, 0.38 * a, INK, region)
        else:
            # hooded lid: heavy arc plus lashes
            c, s = np.cos(ang), np.sin(ang)

            def rot(u, v):
                return (ex + c * u - s * v, ey + s * u + c * v)

            # lid corners rise with size so the top edge tracks it, not just sub-pixel aliasing
            curve(canvas, rot(-a, -0.15 * a), rot(0.0, 0.5 * a), rot(a, -0.15 * a), 2.2, INK, region)
            for u in (-0.45 * a, 0.0, 0.45 * a):
                stroke(canvas, [rot(u, 0.28 * a), rot(1.15 * u, 0.28 * a + 3.0)], 1.0, INK, region)


def _draw_nose(canvas, cx, cy, params, variant):
    length, width, tip_curve, vpos = params
    region = Region.NOSE.value
    top = cy - 9.0 + 3.0 * vpos
    bottom = top + 18.0 + 4.0 * length
    w = 7.0 + 3.0 * width
    bend = 3.0 * tip_curve
    if variant == 0:
        # straight bridge and a rounded base
        curve(canvas, (cx, top), (cx + bend, 0.5 * (top + bottom)), (cx + 0.3 * bend, bottom - 2.0), 1.6, INK, region)
        curve(canvas, (cx - w, bottom - 3.0), (cx, bottom + 3.0), (cx + w, bottom - 3.0), 1.6, INK, region)
    elif variant == 1:
        # two flaring side walls with a bulbous tip
        for side in (-1.0, 1.0):
            curve(
                canvas,
                (cx + side * 2.0, top),
                (cx + side * 1.5 + bend, 0.5 * (top + bottom)),
                (cx + side * (w - 1.0), bottom - 3.0),
                1.4,
                INK,
                region,
            )
        ring_ellipse(canvas, cx + 0.3 * bend, bottom - 2.0, 0.4 * w + 1.0, 2.5, 1.2, INK, region)
    else:
        # wide base with dark nostrils and a short bridge
        curve(canvas, (cx, top), (cx + bend, top + 4.0), (cx + 0.5 * bend, top + 8.0), 1.4, INK, region)
        for side in (-1.0, 1.0):
            fill_ellipse(canvas, cx + side * 0.6 * w, bottom - 2.0, 0.4 * w, 2.2, INK, region)
        stroke(canvas, [(cx - w, bottom + 1.0), (cx + w, bottom + 1.0)], 1.4, INK, region)


def _draw_mouth(canvas, cx, cy, params, variant):
    width, thickness, curvature, vpos = params
    region = Region.MOUTH.value
    my = cy + 32.0 + 3.0 * vpos
    m = 12.0 + 4.0 * width
    t = 2.5 + 1.5 * thickness
    k = 3.0 * curvature
    if variant == 0:
        # closed lips drawn as a single heavy line
        curve(canvas, (cx - m, my - k), (cx, my + k), (cx + m, my - k), 1.0 + 0.5 * t, INK, region)
    elif variant == 1:
        # full lips: two soft lobes and the parting line
        fill_ellipse(canvas, cx, my - 0.5 * t, m, 0.5 * t + 0.5, 0.38, region)
        fill_ellipse(canvas, cx, my + 0.6 * t, 0.85 * m, 0.6 * t + 0.5, 0.38, region)
        curve(canvas, (cx - m, my - k), (cx, my + k), (cx + m, my - k), 1.2, INK, region)
    else:
        # open mouth with a row of teeth
        fill_ellipse(canvas, cx, my, m, t + 1.0, INK, region)
        curve(canvas, (cx - 0.8 * m, my - 0.3 * t - k), (cx, my - 0.3 * t + k), (cx + 0.8 * m, my - 0.3 * t - k), 1.4, WHITE, region)


_DRAWERS = {
    Region.EYES.value: _draw_eyes,
    Region.NOSE.value: _draw_nose,
    Region.MOUTH.value: _draw_mouth,
}


def mask_box(mask: np.ndarray) -> Box:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1


def _fit_box(x0, y0, x1, y1, width, height, size):
    """Grow (x0, y0, x1, y1) symmetrically to width x height, shifted to lie inside the frame."""
    w = max(width, x1 - x0)
    h = max(height, y1 - y0)
    nx0 = int(np.floor((x0 + x1 - w) / 2))
    ny0 = int(np.floor((y0 + y1 - h) / 2))
    nx0 = min(max(nx0, 0), size - w)
    ny0 = min(max(ny0, 0), size - h)
    return nx0, ny0, nx0 + w, ny0 + h


def crop_box_for(mask: np.ndarray, region: Region | str) -> Box:
    size = mask.shape[0]
    x0, y0, x1, y1 = mask_box(mask)
    x0, y0 = max(x0 - CROP_MARGIN, 0), max(y0 - CROP_MARGIN, 0)
    x1, y1 = min(x1 + CROP_MARGIN, size), min(y1 + CROP_MARGIN, size)
    width, height = NOMINAL_CROP_SIZES[Region(region).value]
    return _fit_box(x0, y0, x1, y1, width, height, size)


def render(recipe: Recipe, view: ViewParams, schema: FaceSchema, size: int = IMAGE_SIZE) -> RenderOutput:
    validate_recipe(recipe, schema)
    regions = [r.region.value for r in schema.regions]
    canvas = _Canvas(size, regions)
    cx = (size - 1) / 2.0 + view.shift_x
    cy = (size - 1) / 2.0 + view.shift_y
    _draw_face(canvas, cx, cy, *recipe.globals)
    for name in regions:
        _DRAWERS[name](canvas, cx, cy, recipe.continuous[name], recipe.discrete[name])

    # each pixel belongs to at most one region: the one covering it most
    stack = np.stack([canvas.coverage[name] for name in regions])
    owner = np.argmax(stack[::-1], axis=0)
    owner = len(regions) - 1 - owner  # later-drawn region wins ties
    masks = {name: (stack[i] > MASK_THRESHOLD) & (owner == i) for i, name in enumerate(regions)}

    image = canvas.image
    if view.noise_amplitude > 0:
        noise = np.random.default_rng(view.noise_seed).standard_normal((size, size))
        image = image + view.noise_amplitude * noise * (1.0 - canvas.face)
    image = np.clip((image - 0.5) * view.contrast + 0.5 + view.brightness, 0.0, 1.0)

    mask_boxes = {name: mask_box(m) for name, m in masks.items()}
    crop_boxes = {name: crop_box_for(m, name) for name, m in masks.items()}
    return RenderOutput(image, masks, mask_boxes, crop_boxes, canvas.face > 0.5, view)


def crop_image(image: np.ndarray, box: Box, size: int = CROP_SIZE) -> np.ndarray:
    x0, y0, x1, y1 = box
    patch = np.ascontiguousarray(image[y0:y1, x0:x1], dtype=np.float64)
    if patch.shape == (size, size):
        return patch.copy()
    return cv2.resize(patch, (size, size), interpolation=cv2.INTER_LINEAR)


def crop_region(output: RenderOutput, region: Region | str, size: int = CROP_SIZE) -> np.ndarray:
    return crop_image(output.image, output.crop_boxes[Region(region).value], size)


def nominal_crop_boxes(schema: FaceSchema, size: int = IMAGE_SIZE) -> dict[str, Box]:
    """Crop boxes of the zero recipe rendered without jitter, used when no masks exist."""
    return render(zero_recipe(schema), ViewParams(), schema, size).crop_boxes
