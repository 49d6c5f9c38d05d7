"""Minibatch SGD with a plateau schedule, plus the finite-difference gradient audit."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..datagen import DatasetManifest, SplitArrays, load_split
from .loss import LossSpec, Norm, head_offsets, loss_and_grad
from .model import AGGREGATE, InputKind, Mode, PredictorModel, head_param_names, trainable_param_names

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.02
    momentum: float = 0.9
    decay_factor: float = 0.5
    patience: int = 2
    max_halvings: int = 3
    seed: int = 0
    mode: Mode = Mode.FROZEN_TRUNK

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.learning_rate <= 0 or not 0 < self.decay_factor < 1:
            raise ValueError("learning rate must be positive and decay factor in (0, 1)")
        if self.patience < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("patience, epochs and batch size must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d

    @classmethod
    def from_json(cls, obj: dict) -> TrainConfig:
        return cls(**obj)


def model_inputs(model: PredictorModel, data: SplitArrays) -> np.ndarray:
    if model.input_kind is InputKind.FULL_FRAME:
        return data.frames
    if model.scope == AGGREGATE:
        raise TrainingError("an aggregate model has no single crop to read")
    return data.crops[model.scope]


def model_targets(model: PredictorModel, data: SplitArrays) -> np.ndarray:
    return data.targets[:, model.target_indices]


def _batched_features(model, images, batch_size=256):
    return np.concatenate(
        [model.features(model.prepare(images[i : i + batch_size])) for i in range(0, len(images), batch_size)]
    )


def _eval_loss(model, feats, targets, spec):
    total, parts, _ = loss_and_grad(model.head_forward(feats), targets, model.heads, spec, need_grad=False)
    return total, parts


def train(
    model: PredictorModel,
    manifest: DatasetManifest | None,
    loss_spec: LossSpec,
    config: TrainConfig,
    data: dict[str, SplitArrays] | None = None,
) -> tuple[PredictorModel, list[dict]]:
    """Train a copy of ``model`` on the manifest's train split, scheduling on val loss.

    FrozenTrunk updates only the head parameters, so trunk features are
    computed once up front. The returned model holds the best-val parameters.
    """
    if data is None:
        data = {s: load_split(manifest, s) for s in ("train", "val")}
    model = model.astype(np.float32)
    model.mode = config.mode
    frozen = config.mode is Mode.FROZEN_TRUNK
    x_train, y_train = model_inputs(model, data["train"]), model_targets(model, data["train"])
    x_val, y_val = model_inputs(model, data["val"]), model_targets(model, data["val"])
    if len(x_train) == 0 or len(x_val) == 0:
        raise TrainingError("empty train or val split")

    if not model.input_fitted:
        model.fit_input_stats(x_train)
    trainable = head_param_names(model.spec) if frozen else trainable_param_names(model.spec)
    velocity = {k: np.zeros_like(model.params[k]) for k in trainable}
    rng = np.random.default_rng(config.seed)

    if frozen:
        f_train = _batched_features(model, x_train)
        f_val = _batched_features(model, x_val)

    def val_loss():
        feats = f_val if frozen else _batched_features(model, x_val)
        return _eval_loss(model, feats, y_val, loss_spec)[0]

    init_feats = f_train if frozen else _batched_features(model, x_train)
    train0, parts0 = _eval_loss(model, init_feats, y_train, loss_spec)
    best_val = val_loss()
    history = [{"epoch": 0, "lr": config.learning_rate, "train_total": train0, "val_total": best_val, **parts0}]
    best_params = {k: v.copy() for k, v in model.params.items()}
    lr = config.learning_rate
    stale, halvings = 0, 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(x_train))
        sums: dict[str, float] = {}
        total_sum, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = np.sort(order[start : start + config.batch_size])
            if frozen:
                feats = f_train[idx]
                out = model.head_forward(feats)
                loss, parts, dout = loss_and_grad(out, y_train[idx], model.heads, loss_spec)
                grads: dict[str, np.ndarray] = {}
                model.head_backward(feats, out, dout, grads)
            else:
                cache: list = []
                feats = model.features(model.prepare(x_train[idx]), cache)
                out = model.head_forward(feats)
                loss, parts, dout = loss_and_grad(out, y_train[idx], model.heads, loss_spec)
                grads = model.backward(cache, feats, out, dout)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch starting {start} (lr={lr:g})")
            for k in trainable:
                velocity[k] = config.momentum * velocity[k] - lr * grads[k]
                model.params[k] += velocity[k]
            total_sum += loss * len(idx)
            seen += len(idx)
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v * len(idx)

        current = val_loss()
        if not np.isfinite(current):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        history.append(
            {
                "epoch": epoch,
                "lr": lr,
                "train_total": total_sum / seen,
                "val_total": current,
                **{k: v / seen for k, v in sums.items()},
            }
        )
        log.debug("epoch %d lr %.4g train %.5f val %.5f", epoch, lr, total_sum / seen, current)
        if current < best_val:
            best_val, stale, halvings = current, 0, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            stale += 1
            if stale >= config.patience:
                lr *= config.decay_factor
                stale = 0
                halvings += 1
                if halvings >= config.max_halvings:
                    break

    model.params = best_params
    return model, history


def write_history(path: str | Path, history: list[dict]) -> None:
    fields = ["epoch", "lr", "train_total", "val_total"]
    fields += sorted({k for row in history for k in row} - set(fields))
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in history:
            writer.writerow({k: (repr(float(v)) if k != "epoch" else v) for k, v in row.items()})


def _kink_pattern(model: PredictorModel, x, target, spec: LossSpec) -> list[np.ndarray]:
    """Signs of every ReLU input and, under L1, of every regression residual."""
    cache: list = []
    out = model.head_forward(model.features(x, cache))
    signs = [np.signbit(z) for kind, _, _, z in cache if z is not None]
    if spec.norm is Norm.L1:
        for h, sl in zip(model.heads, head_offsets(model.heads)):
            if h.kind == "continuous":
                signs.append(np.sign(out[:, sl] - target[:, sl]))
    return signs


def _round_robin_draws(model: PredictorModel, names: list[str], rng: np.random.Generator):
    orders = [rng.permutation(model.params[n].size) for n in names]
    for k in range(max(len(o) for o in orders)):
        for name, order in zip(names, orders):
            if k < len(order):
                yield name, int(order[k])


def backward_check(
    model: PredictorModel,
    image,
    target,
    spec: LossSpec,
    epsilon: float = 1e-4,
    n_params: int = 10,
    seed: int = 0,
    perturb: Callable[[dict[str, np.ndarray]], dict[str, np.ndarray]] | None = None,
) -> float:
    """Max relative error between analytic and central-difference parameter gradients.

    Parameters are drawn at random, round-robin over the parameter tensors so
    that every tensor is visited before any is visited twice; a draw whose +/- epsilon step flips a ReLU
    input or an L1 residual across zero straddles a kink, where central
    differences say nothing about the derivative, so it is replaced by
    another draw. ``perturb`` may rewrite the analytic gradients before
    comparison (used to check that a broken backward pass is caught).
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-6, 1e-3]")
    model = model.astype(np.float64)
    x = model.prepare(image)
    target = np.asarray(target, dtype=np.float64).reshape(x.shape[0], -1)

    cache: list = []
    feats = model.features(x, cache)
    out = model.head_forward(feats)
    _, _, dout = loss_and_grad(out, target, model.heads, spec)
    grads = model.backward(cache, feats, out, dout)
    if perturb is not None:
        grads = perturb({k: v.copy() for k, v in grads.items()})

    def loss_at():
        return loss_and_grad(model.forward_batch(x), target, model.heads, spec, need_grad=False)[0]

    def same(a, b):
        return all(np.array_equal(u, v) for u, v in zip(a, b))

    base = _kink_pattern(model, x, target, spec)
    rng = np.random.default_rng(seed)
    names = sorted(trainable_param_names(model.spec))
    worst, checked, skipped = 0.0, 0, 0
    for name, local in _round_robin_draws(model, names, rng):
        if checked >= n_params:
            break
        p = model.params[name].reshape(-1)
        saved = p[local]
        p[local] = saved + epsilon
        plus, kinked = loss_at(), not same(_kink_pattern(model, x, target, spec), base)
        p[local] = saved - epsilon
        minus = loss_at()
        kinked = kinked or not same(_kink_pattern(model, x, target, spec), base)
        p[local] = saved
        if kinked:
            skipped += 1
            continue
        numeric = (plus - minus) / (2 * epsilon)
        analytic = grads[name].reshape(-1)[local]
        denom = max(abs(analytic) + abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / denom)
        checked += 1
    if skipped:
        log.debug("gradient check skipped %d draws that straddle a kink", skipped)
    return worst
