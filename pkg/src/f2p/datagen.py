"""Reproducible synthetic corpora: recipe sampling, rendering and the JSONL manifest."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .facegen import (
    CROP_SIZE,
    FaceSchema,
    Recipe,
    ViewParams,
    crop_region,
    default_schema,
    encode_recipe,
    render,
)

log = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"
INCOMPLETE = ".INCOMPLETE"
SPLITS = ("train", "val", "eval")


class DatasetError(Exception):
    pass


class FingerprintMismatch(DatasetError):
    pass


@dataclass
class DatasetConfig:
    sample_count: int = 5000
    seed: int = 0
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    max_shift: float = 3.0
    brightness: float = 0.05
    contrast: tuple[float, float] = (0.9, 1.1)
    max_noise: float = 0.02
    views_per_recipe: int = 1
    output_dir: str = "data"

    def __post_init__(self):
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        self.contrast = tuple(float(c) for c in self.contrast)
        if self.sample_count < 10:
            raise ValueError("sample_count must be at least 10")
        if len(self.split_fractions) != 3 or min(self.split_fractions) <= 0:
            raise ValueError("split fractions must be three positive numbers")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if self.views_per_recipe < 1:
            raise ValueError("views_per_recipe must be >= 1")

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, obj: dict) -> DatasetConfig:
        return cls(**obj)


@dataclass
class SampleRecord:
    id: str
    recipe: Recipe
    target: np.ndarray
    view: ViewParams
    split: str
    image: str
    masks: dict[str, str]
    crops: dict[str, str]
    crop_boxes: dict[str, tuple[int, int, int, int]]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "split": self.split,
            "recipe": self.recipe.to_json(),
            "target": [float(x) for x in self.target],
            "view": self.view.to_json(),
            "image": self.image,
            "masks": self.masks,
            "crops": self.crops,
            "crop_boxes": {k: list(v) for k, v in self.crop_boxes.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> SampleRecord:
        return cls(
            id=obj["id"],
            recipe=Recipe.from_json(obj["recipe"]),
            target=np.asarray(obj["target"], dtype=np.float64),
            view=ViewParams(**obj["view"]),
            split=obj["split"],
            image=obj["image"],
            masks=dict(obj["masks"]),
            crops=dict(obj["crops"]),
            crop_boxes={k: tuple(v) for k, v in obj["crop_boxes"].items()},
        )


@dataclass
class DatasetManifest:
    config: DatasetConfig
    schema_fingerprint: str
    records: list[SampleRecord]
    root: Path | None = field(default=None, compare=False)

    def split(self, name: str) -> list[SampleRecord]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return [r for r in self.records if r.split == name]

    def header(self) -> dict:
        # the output directory is where the corpus lives, not what it is; leaving it out
        # keeps the manifest (and its hash) identical wherever the corpus is written
        config = {k: v for k, v in self.config.to_json().items() if k != "output_dir"}
        return {
            "kind": "header",
            "config": config,
            "schema_fingerprint": self.schema_fingerprint,
        }

    def __eq__(self, other):
        if not isinstance(other, DatasetManifest):
            return NotImplemented
        return self.header() == other.header() and [r.to_json() for r in self.records] == [
            r.to_json() for r in other.records
        ]


def sample_recipe(rng: np.random.Generator, schema: FaceSchema) -> Recipe:
    continuous = {r.region.value: rng.uniform(-1.0, 1.0, r.n_continuous) for r in schema.regions}
    globals_ = rng.uniform(-1.0, 1.0, len(schema.global_params))
    discrete = {r.region.value: int(rng.integers(r.discrete_option_count)) for r in schema.regions}
    return Recipe(continuous, globals_, discrete, scale=0.0)


def sample_view(rng: np.random.Generator, config: DatasetConfig) -> ViewParams:
    return ViewParams(
        shift_x=float(rng.uniform(-config.max_shift, config.max_shift)),
        shift_y=float(rng.uniform(-config.max_shift, config.max_shift)),
        brightness=float(rng.uniform(-config.brightness, config.brightness)),
        contrast=float(rng.uniform(*config.contrast)),
        noise_amplitude=float(rng.uniform(0.0, config.max_noise)),
        noise_seed=int(rng.integers(2**31)),
    )


def assign_splits(n: int, fractions, seed: int) -> list[str]:
    """Exact-count split tags for n items, permuted by a seed-derived stream."""
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    tags = np.array(["train"] * n_train + ["val"] * n_val + ["eval"] * (n - n_train - n_val))
    perm = np.random.default_rng([seed, 0x5B117]).permutation(n)
    return [str(t) for t in tags[np.argsort(perm)]]


def to_png(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path: Path, image: np.ndarray) -> None:
    data = image if image.dtype == np.uint8 else to_png(image)
    if not cv2.imwrite(str(path), data):
        raise OSError(f"could not write {path}")


def read_png(path: Path) -> np.ndarray:
    data = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if data is None:
        raise OSError(f"could not read {path}")
    return data


def _render_one(args):
    index, config, schema, out, tags = args
    rng = np.random.default_rng([config.seed, index])
    recipe = sample_recipe(rng, schema)
    target = encode_recipe(recipe, schema).values
    records = []
    for v in range(config.views_per_recipe):
        view = sample_view(rng, config)
        sid = f"{index:05d}" if config.views_per_recipe == 1 else f"{index:05d}_{v}"
        output = render(recipe, view, schema)
        image = f"img/{sid}.png"
        write_png(out / image, output.image)
        masks, crops = {}, {}
        for name, mask in output.masks.items():
            masks[name] = f"mask/{sid}_{name}.png"
            write_png(out / masks[name], mask.astype(np.uint8) * 255)
            crops[name] = f"crop/{sid}_{name}.png"
            write_png(out / crops[name], crop_region(output, name, CROP_SIZE))
        records.append(
            SampleRecord(sid, recipe, target, view, tags[index], image, masks, crops, output.crop_boxes)
        )
    return records


def worker_count(default: int = 1) -> int:
    env = os.environ.get("F2P_WORKERS")
    return max(1, int(env)) if env else max(1, default)


def generate_dataset(config: DatasetConfig, schema: FaceSchema | None = None, workers: int = 1) -> DatasetManifest:
    schema = schema or default_schema()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / INCOMPLETE
    marker.write_text("generation in progress\n")
    for sub in ("img", "mask", "crop"):
        (out / sub).mkdir(exist_ok=True)

    tags = assign_splits(config.sample_count, config.split_fractions, config.seed)
    jobs = [(i, config, schema, out, tags) for i in range(config.sample_count)]
    workers = worker_count(workers)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            batches = list(pool.map(_render_one, jobs, chunksize=32))
    else:
        batches = [_render_one(job) for job in jobs]
    records = [r for batch in batches for r in batch]

    manifest = DatasetManifest(config, schema.fingerprint(), records, root=out)
    lines = [json.dumps(manifest.header(), sort_keys=True)]
    lines += [json.dumps(r.to_json(), sort_keys=True) for r in records]
    (out / MANIFEST).write_text("\n".join(lines) + "\n")
    marker.unlink()
    log.info("wrote %d records to %s", len(records), out)
    return manifest


def manifest_hash(path: str | Path) -> str:
    return hashlib.sha256((Path(path) / MANIFEST).read_bytes()).hexdigest()


def load_dataset(path: str | Path, schema: FaceSchema | None = None, check_files: bool = True) -> DatasetManifest:
    schema = schema or default_schema()
    root = Path(path)
    if (root / INCOMPLETE).exists():
        raise DatasetError(f"{root} holds an incomplete corpus ({INCOMPLETE} present)")
    mpath = root / MANIFEST
    if not mpath.exists():
        raise DatasetError(f"no manifest at {mpath}")
    with open(mpath) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("kind") != "header":
        raise DatasetError(f"{mpath} has no header line")
    header = lines[0]
    if header["schema_fingerprint"] != schema.fingerprint():
        raise FingerprintMismatch(
            f"schema fingerprint mismatch: corpus {header['schema_fingerprint'][:12]}, "
            f"current {schema.fingerprint()[:12]}"
        )
    records = [SampleRecord.from_json(obj) for obj in lines[1:]]
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise DatasetError("duplicate sample ids in manifest")
    if check_files:
        for r in records:
            for rel in [r.image, *r.masks.values(), *r.crops.values()]:
                if not (root / rel).exists():
                    raise DatasetError(f"sample {r.id}: missing file {rel}")
    config = DatasetConfig.from_json({**header["config"], "output_dir": str(root)})
    return DatasetManifest(config, header["schema_fingerprint"], records, root=root)


@dataclass
class SplitArrays:
    """Decoded pixels and targets of one split, images kept as uint8."""

    ids: list[str]
    frames: np.ndarray
    crops: dict[str, np.ndarray]
    targets: np.ndarray
    crop_boxes: list[dict[str, tuple[int, int, int, int]]]


def load_split(manifest: DatasetManifest, split: str) -> SplitArrays:
    records = manifest.split(split)
    if not records:
        raise DatasetError(f"split {split!r} is empty")
    root = manifest.root
    frames = np.stack([read_png(root / r.image) for r in records])
    regions = list(records[0].crops)
    crops = {name: np.stack([read_png(root / r.crops[name]) for r in records]) for name in regions}
    targets = np.stack([r.target for r in records])
    return SplitArrays([r.id for r in records], frames, crops, targets, [r.crop_boxes for r in records])
