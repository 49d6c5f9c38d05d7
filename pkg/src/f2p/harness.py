"""Baselines, the factor ablation, ensemble weight comparison, domain-gap evaluation and reports."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import DatasetConfig, DatasetManifest, SplitArrays, load_dataset, load_split, manifest_hash, worker_count
from .domain_adapt import STYLE_PRESETS, AdapterParams, StyleParams, adapt, fit_adapter, style_batch
from .ensemble import (
    EnsembleWeights,
    ModelSet,
    PredictionTable,
    combine,
    fit_weights,
    mean_l1,
    run_models,
    squared_error,
)
from .facegen import CROP_SIZE, FaceSchema, TargetLayout, crop_image, default_schema
from .nets import (
    AGGREGATE,
    InputKind,
    LossSpec,
    Mode,
    PredictorModel,
    TrainConfig,
    build_model,
    load_checkpoint,
    save_checkpoint,
    train,
    write_history,
)
from .nets.train import model_inputs

log = logging.getLogger(__name__)

FAILED = "FAILED"
LOSSES = ("Complete", "Local")
INPUTS = (InputKind.FULL_FRAME.value, InputKind.CROP.value)
MODES = (Mode.FROZEN_TRUNK.value, Mode.FULL_TRAINING.value)
CONSTANT_WEIGHTS = (0.0, 0.5, 1.0)


class HarnessError(RuntimeError):
    pass


class ReportIOError(HarnessError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Everything a run needs; one TrainConfig is shared verbatim by every ablation cell."""

    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossSpec = field(default_factory=LossSpec)
    styles: dict[str, StyleParams] = field(default_factory=lambda: dict(STYLE_PRESETS))
    style: str = "photo-like"
    workers: int = 1
    adapter_images: int = 500

    def __post_init__(self):
        if self.style not in self.styles:
            raise ValueError(f"style {self.style!r} is not among the configured presets")
        if self.workers < 1 or self.adapter_images < 20:
            raise ValueError("workers must be >= 1 and adapter_images >= 20")

    def with_seed(self, seed: int) -> RunConfig:
        return dataclasses.replace(
            self,
            dataset=dataclasses.replace(self.dataset, seed=seed),
            train=dataclasses.replace(self.train, seed=seed),
        )

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset.to_json(),
            "train": self.train.to_json(),
            "loss": self.loss.to_json(),
            "styles": {k: v.to_json() for k, v in sorted(self.styles.items())},
            "style": self.style,
            "workers": self.workers,
            "adapter_images": self.adapter_images,
        }

    @classmethod
    def from_json(cls, obj: dict) -> RunConfig:
        known = {"dataset", "train", "loss", "styles", "style", "workers", "adapter_images"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        styles = dict(STYLE_PRESETS)
        styles.update({k: StyleParams.from_json(v) for k, v in obj.get("styles", {}).items()})
        return cls(
            dataset=DatasetConfig.from_json(obj.get("dataset", {})),
            train=TrainConfig.from_json(obj.get("train", {})),
            loss=LossSpec.from_json(obj.get("loss", {})),
            styles=styles,
            style=obj.get("style", "photo-like"),
            workers=int(obj.get("workers", 1)),
            adapter_images=int(obj.get("adapter_images", 500)),
        )

    @classmethod
    def load(cls, path: str | Path | None) -> RunConfig:
        if path is None:
            return cls()
        return cls.from_json(json.loads(Path(path).read_text()))

    def effective_workers(self) -> int:
        return worker_count(self.workers)


# ---------------------------------------------------------------------------
# baseline and metrics
# ---------------------------------------------------------------------------


@dataclass
class BaselinePredictor:
    mean: np.ndarray
    layout: TargetLayout

    def __post_init__(self):
        if self.mean.shape != (self.layout.width,):
            raise HarnessError("baseline vector does not match the target layout")

    def predict(self, n: int) -> np.ndarray:
        return np.tile(self.mean, (n, 1))


def baseline(source: DatasetManifest | SplitArrays | np.ndarray, split: str = "eval", schema: FaceSchema | None = None) -> BaselinePredictor:
    """Coordinate-wise mean target over a reference split."""
    layout = (schema or default_schema()).layout()
    if isinstance(source, DatasetManifest):
        records = source.split(split)
        targets = np.stack([r.target for r in records]) if records else np.zeros((0, layout.width))
    elif isinstance(source, SplitArrays):
        targets = source.targets
    else:
        targets = np.asarray(source, dtype=np.float64).reshape(-1, layout.width)
    if len(targets) == 0:
        raise HarnessError(f"cannot build a baseline from an empty {split!r} split")
    return BaselinePredictor(targets.mean(axis=0), layout)


def inaccuracy_vs_baseline(model_loss: float, baseline_loss: float) -> float:
    return model_loss - baseline_loss


def region_l1(pred, target, layout: TargetLayout, region: str) -> float:
    sl = layout.slices[(region, "continuous")]
    return float(np.abs(np.asarray(pred)[:, sl] - np.asarray(target)[:, sl]).mean())


def region_accuracy(pred, target, layout: TargetLayout, region: str) -> float:
    sl = layout.slices[(region, "onehot")]
    return float((np.argmax(np.asarray(pred)[:, sl], axis=1) == np.argmax(np.asarray(target)[:, sl], axis=1)).mean())


# ---------------------------------------------------------------------------
# report types
# ---------------------------------------------------------------------------


def _plain(name) -> str:
    """Enum members (regions) as their plain string value, so reports compare and serialize cleanly."""
    return str(getattr(name, "value", name))


@dataclass
class AblationCell:
    region: str
    loss: str
    input: str
    mode: str
    status: str = "ok"
    mean_l1: float | None = None
    accuracy: float | None = None
    baseline_l1: float | None = None
    inaccuracy: float | None = None
    run_id: str = ""
    error: str = ""

    def __post_init__(self):
        self.region = _plain(self.region)
        if self.loss == "Complete" and self.input != InputKind.FULL_FRAME.value:
            raise HarnessError("the complete loss only pairs with full-frame input")
        if self.status == "ok":
            for v in (self.mean_l1, self.accuracy, self.baseline_l1, self.inaccuracy):
                if v is None or not math.isfinite(v):
                    raise HarnessError(f"cell {self.key()} has a non-finite metric")

    def key(self):
        return (self.region, self.loss, self.input, self.mode)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> AblationCell:
        return cls(**obj)


@dataclass
class WeightRow:
    column: str
    label: str
    train_sq_error: float
    eval_l1: float
    deltas: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> WeightRow:
        return cls(**obj)


@dataclass
class GapRow:
    scope: str
    original: float
    styled: float
    adapted: float

    def __post_init__(self):
        self.scope = _plain(self.scope)

    @property
    def delta(self) -> float:
        return self.styled - self.adapted

    def to_json(self) -> dict:
        return {**dataclasses.asdict(self), "delta": self.delta}

    @classmethod
    def from_json(cls, obj: dict) -> GapRow:
        return cls(obj["scope"], obj["original"], obj["styled"], obj["adapted"])


@dataclass
class Report:
    config: dict = field(default_factory=dict)
    fingerprint: str = ""
    dataset: str = ""
    ablation: list[AblationCell] = field(default_factory=list)
    weights: list[WeightRow] = field(default_factory=list)
    domain_gap: list[GapRow] = field(default_factory=list)
    style: str = ""
    runs: dict[str, dict] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "fingerprint": self.fingerprint,
            "dataset": self.dataset,
            "ablation": [c.to_json() for c in self.ablation],
            "weights": [r.to_json() for r in self.weights],
            "domain_gap": [r.to_json() for r in self.domain_gap],
            "style": self.style,
            "runs": self.runs,
        }

    @classmethod
    def from_json(cls, obj: dict) -> Report:
        return cls(
            config=obj.get("config", {}),
            fingerprint=obj.get("fingerprint", ""),
            dataset=obj.get("dataset", ""),
            ablation=[AblationCell.from_json(c) for c in obj.get("ablation", [])],
            weights=[WeightRow.from_json(r) for r in obj.get("weights", [])],
            domain_gap=[GapRow.from_json(r) for r in obj.get("domain_gap", [])],
            style=obj.get("style", ""),
            runs=obj.get("runs", {}),
        )

    def merge(self, other: Report) -> Report:
        return Report(
            config=other.config or self.config,
            fingerprint=other.fingerprint or self.fingerprint,
            dataset=other.dataset or self.dataset,
            ablation=other.ablation or self.ablation,
            weights=other.weights or self.weights,
            domain_gap=other.domain_gap or self.domain_gap,
            style=other.style or self.style,
            runs={**self.runs, **other.runs},
        )

    def cell(self, region, loss, input, mode) -> AblationCell:
        for c in self.ablation:
            if c.key() == (region, loss, input, mode):
                return c
        raise KeyError((region, loss, input, mode))


def build_fingerprint() -> str:
    """Hash of the package sources, stable across runs and machines."""
    root = Path(__file__).resolve().parent
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*.py")):
        digest.update(path.relative_to(root).as_posix().encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------


def run_id(loss: str, input_kind: str, mode: str, scope: str) -> str:
    return f"{loss}-{input_kind}-{mode}-{scope}".lower()


def _chains(schema: FaceSchema) -> list[tuple[str, str, str]]:
    """(loss, input kind, scope) for every model the matrix needs."""
    out = [("Complete", InputKind.FULL_FRAME.value, AGGREGATE)]
    for kind in INPUTS:
        out += [("Local", kind, r) for r in schema.region_ids]
    return out


def _sort_cells(cells: list[AblationCell], schema: FaceSchema) -> list[AblationCell]:
    regions = list(schema.region_ids)
    return sorted(
        cells,
        key=lambda c: (regions.index(c.region), LOSSES.index(c.loss), INPUTS.index(c.input), MODES.index(c.mode)),
    )


def _train_chain(job):
    """FrozenTrunk from a seeded init, then FullTraining warm-started from it."""
    loss_name, kind, scope, config, data_root, out_dir, data = job
    schema = default_schema()
    if data is None:
        manifest = load_dataset(data_root, schema, check_files=False)
        data = {s: load_split(manifest, s) for s in ("train", "val")}
    results = {}
    model = build_model(schema, scope, InputKind(kind), config.train.seed)
    for mode in MODES:
        rid = run_id(loss_name, kind, mode, scope)
        try:
            cfg = dataclasses.replace(config.train, mode=Mode(mode))
            model, history = train(model, None, config.loss, cfg, data=data)
        except Exception as exc:  # a failed cell is reported, the matrix keeps going
            log.error("run %s failed: %s", rid, exc)
            results[mode] = (None, f"{type(exc).__name__}: {exc}")
            if mode == Mode.FROZEN_TRUNK.value:
                results[Mode.FULL_TRAINING.value] = (None, "warm start unavailable: frozen-trunk run failed")
                break
            continue
        if out_dir is not None:
            save_checkpoint(Path(out_dir) / f"{rid}.f2pm", model, schema.fingerprint())
            write_history(Path(out_dir) / f"{rid}.csv", history)
        results[mode] = (model, "")
    return loss_name, kind, scope, results


def _cell_metrics(model: PredictorModel, data: SplitArrays, region: str, layout: TargetLayout, base: BaselinePredictor):
    pred = np.full((len(data.targets), layout.width), np.nan)
    pred[:, model.target_indices] = model.predict(model_inputs(model, data))
    l1 = region_l1(pred, data.targets, layout, region)
    base_l1 = region_l1(base.predict(len(data.targets)), data.targets, layout, region)
    return l1, region_accuracy(pred, data.targets, layout, region), base_l1


@dataclass
class AblationResult:
    report: Report
    models: dict[str, PredictorModel]


def run_ablation(
    config: RunConfig,
    manifest: DatasetManifest,
    out_dir: str | Path | None = None,
    data: dict[str, SplitArrays] | None = None,
    workers: int | None = None,
) -> AblationResult:
    """Train the populated factor cells and score every region of each on the eval split."""
    schema = default_schema()
    if manifest.schema_fingerprint != schema.fingerprint():
        raise HarnessError("corpus was generated with a different face schema")
    layout = schema.layout()
    model_dir = None
    if out_dir is not None:
        model_dir = Path(out_dir) / "models"
        model_dir.mkdir(parents=True, exist_ok=True)
    workers = config.effective_workers() if workers is None else worker_count(workers)
    if data is None:
        data = {s: load_split(manifest, s) for s in ("train", "val", "eval")}
    fit_data = {s: data[s] for s in ("train", "val")}

    jobs = [(l, k, s, config, str(manifest.root), model_dir, None if workers > 1 else fit_data) for l, k, s in _chains(schema)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_train_chain, jobs))
    else:
        outcomes = [_train_chain(job) for job in jobs]

    base = baseline(data["eval"], schema=schema)
    dataset_id = manifest_hash(manifest.root) if manifest.root is not None else ""
    cells, models, runs = [], {}, {}
    for loss_name, kind, scope, results in outcomes:
        regions = schema.region_ids if scope == AGGREGATE else (scope,)
        for mode in MODES:
            rid = run_id(loss_name, kind, mode, scope)
            model, error = results.get(mode, (None, "not run"))
            if model is not None:
                models[rid] = model
                runs[rid] = {
                    "checkpoint": f"models/{rid}.f2pm",
                    "history": f"models/{rid}.csv",
                    "dataset": dataset_id,
                    "warm_start": run_id(loss_name, kind, MODES[0], scope) if mode == MODES[1] else None,
                }
            for region in regions:
                if model is None:
                    cells.append(AblationCell(region, loss_name, kind, mode, FAILED, run_id=rid, error=error))
                    continue
                l1, acc, base_l1 = _cell_metrics(model, data["eval"], region, layout, base)
                cells.append(
                    AblationCell(region, loss_name, kind, mode, "ok", l1, acc, base_l1, inaccuracy_vs_baseline(l1, base_l1), rid)
                )
    report = Report(
        config=config.to_json(),
        fingerprint=build_fingerprint(),
        dataset=dataset_id,
        ablation=_sort_cells(cells, schema),
        runs=runs,
    )
    return AblationResult(report, models)


def ablation_summary(report: Report, schema: FaceSchema | None = None) -> list[dict]:
    """Per region: the best cell, and the margin of Local/Crop/FullTraining over Complete/FullFrame/FrozenTrunk."""
    schema = schema or default_schema()
    out = []
    for region in schema.region_ids:
        cells = [c for c in report.ablation if c.region == region and c.status == "ok"]
        if not cells:
            continue
        best = min(cells, key=lambda c: c.inaccuracy)
        row = {"region": _plain(region), "best": "/".join(best.key()[1:])}
        try:
            crop = report.cell(region, "Local", "Crop", "FullTraining")
            ref = report.cell(region, "Complete", "FullFrame", "FrozenTrunk")
            if crop.status == ref.status == "ok":
                row["margin"] = ref.mean_l1 - crop.mean_l1
        except KeyError:
            pass
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# ensembles: weight comparison and domain gap
# ---------------------------------------------------------------------------


def model_set_for(models: dict[str, PredictorModel], local_input: str, mode: str, schema: FaceSchema | None = None) -> ModelSet:
    schema = schema or default_schema()
    aggregate = models[run_id("Complete", InputKind.FULL_FRAME.value, mode, AGGREGATE)]
    local = {r: models[run_id("Local", local_input, mode, r)] for r in schema.region_ids}
    return ModelSet(aggregate, local, schema.fingerprint())


def load_model_set(model_dir: str | Path, local_input: str = "Crop", mode: str = "FullTraining", schema: FaceSchema | None = None) -> ModelSet:
    schema = schema or default_schema()
    fp = schema.fingerprint()
    root = Path(model_dir)
    names = [run_id("Complete", InputKind.FULL_FRAME.value, mode, AGGREGATE)]
    names += [run_id("Local", local_input, mode, r) for r in schema.region_ids]
    models = {n: load_checkpoint(root / f"{n}.f2pm", fp) for n in names}
    return model_set_for(models, local_input, mode, schema)


def prediction_table(models: ModelSet, data: SplitArrays, layout: TargetLayout) -> PredictionTable:
    aggregate, local = run_models(models, data.frames, data.crops, layout)
    return PredictionTable(aggregate, local, data.targets, layout)


def compare_weights(models: ModelSet, data: dict[str, SplitArrays], column: str = "FullTraining/Crop", schema: FaceSchema | None = None):
    """Constant weights 0.0 / 0.5 / 1.0 against per-dimension fitted weights.

    Weights are fitted on the train split; the squared error is the fitting
    objective on that split and the L1 is measured on the eval split.
    Returns the rows and the fitted weights.
    """
    layout = (schema or default_schema()).layout()
    fit_table = prediction_table(models, data["train"], layout)
    eval_table = prediction_table(models, data["eval"], layout)
    fitted = fit_weights(fit_table)
    candidates = [(f"w={c:.1f}", EnsembleWeights.constant(c, fitted)) for c in CONSTANT_WEIGHTS]
    candidates.append(("fitted", fitted))
    rows = []
    for label, weights in candidates:
        sq = float(squared_error(fit_table, weights).sum())
        l1 = mean_l1(combine(eval_table.aggregate, eval_table.local, weights, layout), eval_table.target, layout)
        rows.append(WeightRow(column, label, sq, l1))
    constants = {r.label: r.eval_l1 for r in rows[:3]}
    for r in rows:
        r.deltas = {k: r.eval_l1 - v for k, v in constants.items()}
    return rows, fitted


def _frames_to_unit(frames) -> np.ndarray:
    return np.asarray(frames, dtype=np.float64) / 255.0


def _crops_from(frames: np.ndarray, boxes: list[dict], regions) -> dict[str, np.ndarray]:
    return {r: np.stack([crop_image(f, b[r], CROP_SIZE) for f, b in zip(frames, boxes)]) for r in regions}


def fit_style_adapter(style: StyleParams, styled_source: SplitArrays, synthetic: SplitArrays, seed: int, limit: int = 500) -> AdapterParams:
    """Unpaired fit: styled renders of one split against plain renders of another."""
    styled = style_batch(_frames_to_unit(styled_source.frames[:limit]), style, seed)
    return fit_adapter(styled, _frames_to_unit(synthetic.frames[:limit]))


def domain_gap_eval(
    models: ModelSet,
    weights: EnsembleWeights,
    adapter: AdapterParams,
    style: StyleParams,
    data: SplitArrays,
    seed: int = 0,
    schema: FaceSchema | None = None,
) -> list[GapRow]:
    """Ensemble L1 on original, styled and adapted-styled eval frames, per region and overall.

    Crops for every variant are cut from the (transformed) frame with the
    sample's stored crop boxes, so the three variants differ only in pixels.
    """
    schema = schema or default_schema()
    layout = schema.layout()
    regions = list(models.locals)
    original = _frames_to_unit(data.frames)
    # eval images use a noise stream disjoint from the adapter's fitting corpus
    styled = style_batch(original, style, seed + 1)
    adapted = np.stack([adapt(im, adapter) for im in styled])
    values = {}
    for name, frames in (("original", original), ("styled", styled), ("adapted", adapted)):
        agg, local = run_models(models, frames, _crops_from(frames, data.crop_boxes, regions), layout)
        values[name] = combine(agg, local, weights, layout)
    rows = []
    for region in schema.region_ids:
        rows.append(GapRow(region, *(region_l1(values[k], data.targets, layout, region) for k in ("original", "styled", "adapted"))))
    rows.append(GapRow("overall", *(mean_l1(values[k], data.targets, layout) for k in ("original", "styled", "adapted"))))
    return rows


# ---------------------------------------------------------------------------
# report output
# ---------------------------------------------------------------------------


def fmt(x: float | None) -> str:
    return FAILED if x is None else f"{x:+.4f}"


def _md_table(header: list[str], rows: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return lines


def render_markdown(report: Report) -> str:
    lines = ["# Face-to-parameters report", "", f"Build `{report.fingerprint}`, dataset `{report.dataset[:16]}`.", ""]
    if report.ablation:
        lines += ["## Ablation (inaccuracy vs baseline, eval split)", ""]
        rows = []
        for c in report.ablation:
            if c.status == "ok":
                rows.append([c.region, c.loss, c.input, c.mode, fmt(c.mean_l1), fmt(c.accuracy), fmt(c.inaccuracy)])
            else:
                rows.append([c.region, c.loss, c.input, c.mode, FAILED, FAILED, FAILED])
        lines += _md_table(["Region", "Loss", "Input", "Mode", "Mean L1", "Accuracy", "Inaccuracy"], rows) + [""]
    if report.weights:
        lines += ["## Ensemble weights (eval mean L1; deltas are row minus constant row)", ""]
        labels = [f"w={c:.1f}" for c in CONSTANT_WEIGHTS]
        rows = [
            [r.column, r.label, f"{r.train_sq_error:.4f}", fmt(r.eval_l1)] + [fmt(r.deltas.get(k)) for k in labels]
            for r in report.weights
        ]
        lines += _md_table(["Models", "Weights", "Train sq. error", "Eval L1"] + [f"vs {k}" for k in labels], rows) + [""]
    if report.domain_gap:
        lines += [f"## Domain gap (style `{report.style}`, eval mean L1)", ""]
        rows = [[r.scope, fmt(r.original), fmt(r.styled), fmt(r.adapted), fmt(r.delta)] for r in report.domain_gap]
        lines += _md_table(["Scope", "Original", "Styled", "Adapted", "Styled - adapted"], rows) + [""]
    return "\n".join(lines)


def report_json(report: Report) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"


def emit_report(report: Report, out_dir: str | Path, formats=("json", "md")) -> list[Path]:
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "json" in formats:
            (out / "report.json").write_text(report_json(report))
            written.append(out / "report.json")
        if "md" in formats:
            (out / "report.md").write_text(render_markdown(report))
            written.append(out / "report.md")
    except OSError as exc:
        raise ReportIOError(f"could not write report to {out}: {exc}") from exc
    return written


def load_report(path: str | Path) -> Report:
    try:
        return Report.from_json(json.loads(Path(path).read_text()))
    except OSError as exc:
        raise ReportIOError(f"could not read report {path}: {exc}") from exc
