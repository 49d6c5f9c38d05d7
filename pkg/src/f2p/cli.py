"""Command-line driver: ``f2p <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .datagen import DatasetError, FingerprintMismatch, generate_dataset, load_dataset, load_split, read_png
from .domain_adapt import AdapterError, AdapterParams, style_preset
from .ensemble import EnsembleError, EnsembleWeights, ModelSet, fit_weights, infer
from .facegen import default_schema
from .harness import (
    HarnessError,
    Report,
    RunConfig,
    build_fingerprint,
    compare_weights,
    domain_gap_eval,
    emit_report,
    fit_style_adapter,
    load_model_set,
    load_report,
    prediction_table,
    report_json,
    run_ablation,
)
from .nets import AGGREGATE, CheckpointError, InputKind, LayoutMismatch, Mode, build_model, load_checkpoint, save_checkpoint, train, write_history

log = logging.getLogger("f2p")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3
VALIDATION_ERRORS = (FingerprintMismatch, CheckpointError, LayoutMismatch, EnsembleError, AdapterError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _data_dir(args, config: RunConfig) -> str:
    return args.data or config.dataset.output_dir


def _load_manifest(args, config):
    return load_dataset(_data_dir(args, config), default_schema())


def _out(args, default: str) -> Path:
    return Path(args.out or default)


def cmd_generate(args, config: RunConfig) -> int:
    dataset = config.dataset
    if args.out:
        dataset = dataclasses.replace(dataset, output_dir=args.out)
    manifest = generate_dataset(dataset, default_schema(), config.effective_workers())
    print(f"wrote {len(manifest.records)} samples to {dataset.output_dir}")
    return EXIT_OK


def cmd_train(args, config: RunConfig) -> int:
    schema = default_schema()
    manifest = _load_manifest(args, config)
    scope = args.scope
    if scope != AGGREGATE and scope not in schema.region_ids:
        raise UsageError(f"unknown scope {scope!r}")
    kind = InputKind(args.input)
    if scope == AGGREGATE and kind is InputKind.CROP:
        raise UsageError("the aggregate model reads full frames only")
    if args.init:
        model = load_checkpoint(args.init, schema.fingerprint())
        if model.scope != scope or model.input_kind is not kind:
            raise UsageError("warm-start checkpoint has a different scope or input")
    else:
        model = build_model(schema, scope, kind, config.train.seed)
    cfg = dataclasses.replace(config.train, mode=Mode(args.mode))
    model, history = train(model, manifest, config.loss, cfg)
    out = _out(args, f"{scope.lower()}-{kind.value.lower()}-{cfg.mode.value.lower()}.f2pm")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, model, schema.fingerprint())
    write_history(out.with_suffix(".csv"), history)
    print(f"saved {out} (best val {min(r['val_total'] for r in history):.4f})")
    return EXIT_OK


def _model_set(args) -> ModelSet:
    schema = default_schema()
    if args.models:
        return load_model_set(Path(args.models) / "models" if (Path(args.models) / "models").is_dir() else args.models,
                              args.local_input, args.mode, schema)
    if not args.aggregate or not args.local:
        raise UsageError("give --models DIR, or --aggregate CKPT with one --local CKPT per region")
    fp = schema.fingerprint()
    aggregate = load_checkpoint(args.aggregate, fp)
    locals_ = {}
    for path in args.local:
        m = load_checkpoint(path, fp)
        locals_[m.scope] = m
    return ModelSet(aggregate, locals_, fp)


def cmd_fit_weights(args, config: RunConfig) -> int:
    manifest = _load_manifest(args, config)
    models = _model_set(args)
    table = prediction_table(models, load_split(manifest, "train"), default_schema().layout())
    weights = fit_weights(table)
    out = _out(args, "weights.json")
    weights.save(out)
    print(f"saved {out}" + (f"; clamped: {', '.join(weights.clamped)}" if weights.clamped else ""))
    return EXIT_OK


def cmd_fit_adapter(args, config: RunConfig) -> int:
    manifest = _load_manifest(args, config)
    style = style_preset(args.style or config.style, config.styles)
    adapter = fit_style_adapter(
        style, load_split(manifest, "val"), load_split(manifest, "train"), config.train.seed, config.adapter_images
    )
    out = _out(args, "adapter.json")
    adapter.save(out)
    print(f"saved {out} (gain {adapter.gain:.4f}, bias {adapter.bias:+.4f}, gamma {adapter.gamma:.4f}, sharpen {adapter.sharpen:.4f})")
    return EXIT_OK


def _write_section(out: Path, name: str, report: Report) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.json").write_text(report_json(report))


def cmd_ablate(args, config: RunConfig) -> int:
    manifest = _load_manifest(args, config)
    out = _out(args, "runs")
    result = run_ablation(config, manifest, out)
    _write_section(out, "ablation", result.report)
    failed = sum(c.status != "ok" for c in result.report.ablation)
    print(f"ablation: {len(result.report.ablation)} cells, {failed} failed; written to {out}")
    return EXIT_OK if not failed else EXIT_RUNTIME


def _section_base(config: RunConfig, manifest) -> Report:
    from .datagen import manifest_hash

    return Report(config=config.to_json(), fingerprint=build_fingerprint(), dataset=manifest_hash(manifest.root))


def cmd_compare_weights(args, config: RunConfig) -> int:
    manifest = _load_manifest(args, config)
    models = _model_set(args)
    data = {s: load_split(manifest, s) for s in ("train", "eval")}
    rows, fitted = compare_weights(models, data, f"{args.mode}/{args.local_input}")
    report = _section_base(config, manifest)
    report.weights = rows
    out = _out(args, "runs")
    _write_section(out, "weights", report)
    fitted.save(out / "ensemble_weights.json")
    for r in rows:
        print(f"{r.label:>7}  train sq {r.train_sq_error:.4f}  eval L1 {r.eval_l1:.4f}")
    return EXIT_OK


def cmd_domain_gap(args, config: RunConfig) -> int:
    manifest = _load_manifest(args, config)
    models = _model_set(args)
    name = args.style or config.style
    style = style_preset(name, config.styles)
    out = _out(args, "runs")
    if args.weights:
        weights = EnsembleWeights.load(args.weights, default_schema().layout())
    else:
        weights = fit_weights(prediction_table(models, load_split(manifest, "train"), default_schema().layout()))
    if args.adapter:
        adapter = AdapterParams.load(args.adapter)
    else:
        adapter = fit_style_adapter(style, load_split(manifest, "val"), load_split(manifest, "train"), config.train.seed, config.adapter_images)
    rows = domain_gap_eval(models, weights, adapter, style, load_split(manifest, "eval"), config.train.seed)
    report = _section_base(config, manifest)
    report.domain_gap, report.style = rows, name
    _write_section(out, "domain_gap", report)
    for r in rows:
        print(f"{r.scope:>8}  original {r.original:.4f}  styled {r.styled:.4f}  adapted {r.adapted:.4f}")
    return EXIT_OK


def cmd_infer(args, config: RunConfig) -> int:
    if not args.weights:
        raise UsageError("infer needs --weights")
    models = _model_set(args)
    weights = EnsembleWeights.load(args.weights, default_schema().layout())
    adapter = AdapterParams.load(args.adapter) if args.adapter else None
    image = read_png(Path(args.image))
    recipe, vector = infer(image, models, weights, adapter)
    print(json.dumps({"recipe": recipe.to_json(), "target": [round(float(v), 6) for v in vector.values]}, indent=2))
    return EXIT_OK


def cmd_report(args, config: RunConfig) -> int:
    out = _out(args, "runs")
    report = Report()
    found = False
    for name in ("ablation", "weights", "domain_gap"):
        path = out / f"{name}.json"
        if path.exists():
            report = report.merge(load_report(path))
            found = True
    if not found:
        raise HarnessError(f"no report sections under {out}; run ablate, compare-weights or domain-gap first")
    for path in emit_report(report, out):
        print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "fit-weights": cmd_fit_weights,
    "fit-adapter": cmd_fit_adapter,
    "ablate": cmd_ablate,
    "compare-weights": cmd_compare_weights,
    "domain-gap": cmd_domain_gap,
    "infer": cmd_infer,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides dataset and training seeds")
    common.add_argument("--out", help="output path (file or directory, depending on the command)")
    common.add_argument("-v", "--verbose", action="store_true")

    data = _Parser(add_help=False)
    data.add_argument("--data", help="dataset directory (default: the config's output_dir)")

    models = _Parser(add_help=False)
    models.add_argument("--models", help="ablation output directory holding the checkpoints")
    models.add_argument("--aggregate", help="aggregate model checkpoint")
    models.add_argument("--local", action="append", help="local model checkpoint (repeat per region)")
    models.add_argument("--local-input", default="Crop", choices=[k.value for k in InputKind])
    models.add_argument("--mode", default="FullTraining", choices=[m.value for m in Mode])

    parser = _Parser(prog="f2p", description="Face-to-parameters pipeline", parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("generate", parents=[common], help="render a dataset")
    p = sub.add_parser("train", parents=[common, data], help="train one model")
    p.add_argument("--scope", required=True, help="Aggregate or a region name")
    p.add_argument("--input", default="Crop", choices=[k.value for k in InputKind])
    p.add_argument("--mode", default="FrozenTrunk", choices=[m.value for m in Mode])
    p.add_argument("--init", help="warm-start checkpoint")
    sub.add_parser("fit-weights", parents=[common, data, models], help="fit ensemble weights on the train split")
    p = sub.add_parser("fit-adapter", parents=[common, data], help="fit the style adapter")
    p.add_argument("--style", help="style preset name")
    sub.add_parser("ablate", parents=[common, data], help="run the factor ablation")
    sub.add_parser("compare-weights", parents=[common, data, models], help="constant vs fitted weights")
    p = sub.add_parser("domain-gap", parents=[common, data, models], help="original vs styled vs adapted")
    p.add_argument("--style", help="style preset name")
    p.add_argument("--weights")
    p.add_argument("--adapter")
    p = sub.add_parser("infer", parents=[common, models], help="infer a recipe from a PNG")
    p.add_argument("image")
    p.add_argument("--weights")
    p.add_argument("--adapter")
    sub.add_parser("report", parents=[common], help="assemble JSON and Markdown reports")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        try:
            config = RunConfig.load(args.config)
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"bad config: {exc}") from exc
        if args.seed is not None:
            config = config.with_seed(args.seed)
        return COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"f2p: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VALIDATION_ERRORS as exc:
        print(f"f2p: validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DatasetError, HarnessError, OSError, RuntimeError, ValueError, KeyError) as exc:
        print(f"f2p: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
