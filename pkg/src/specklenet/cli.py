"""``specklenet`` command line: synth, train, eval, classify, bench, inspect.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
Failures print one JSON object on a single stderr line.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from specklenet import metrics
from specklenet.errors import DataError, NumericError, ShapeError
from specklenet.imageio import read_pnm
from specklenet.model import (
    canonical_spec,
    forward_batch,
    init_model,
    layer_parameter_counts,
    output_shapes,
    parameter_count,
)
from specklenet.pipeline import INPUT_SIZE, Dataset, load_dataset, load_manifest, preprocess
from specklenet.speckle import SpeckleParams, synth_speckle, write_synthetic_dataset
from specklenet.taxonomy import Granularity, classify_with_preset, load_taxonomy
from specklenet.trainer import TrainingConfig, history_path, train
from specklenet.weights import load_weights

DEFAULT_SEED = 42
EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(args, payload: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print("\n".join(lines))


def _require_files(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise DataError(f"{p}: no such file")


def _require_dir_for(path) -> None:
    parent = Path(path).parent
    if not parent.is_dir():
        raise DataError(f"{path}: directory {parent} does not exist")


def _load_model(ref: str, seed: int = DEFAULT_SEED):
    if ref == "canonical":
        return init_model(canonical_spec(), seed)
    _require_files(ref)
    return load_weights(ref)


# --- commands -------------------------------------------------------------

def cmd_synth(args) -> None:
    taxonomy = load_taxonomy(args.taxonomy)
    if not 1 <= args.classes <= len(taxonomy):
        raise DataError(f"--classes must be in [1, {len(taxonomy)}], got {args.classes}")
    names = [c.name for c in taxonomy.classes[:args.classes]]
    counts = dict(zip(("train", "val", "test"), args.per_class))
    write_synthetic_dataset(args.out, names, counts, resolution=args.resolution, seed=args.seed,
                            channels=args.channels)
    total = sum(counts.values()) * len(names)
    _emit(args, {"out_dir": str(args.out), "classes": names, "images": total, "seed": args.seed,
                 "resolution": args.resolution},
          [f"seed: {args.seed}", f"wrote {total} images of {len(names)} classes to {args.out}"])


def _training_config(args) -> TrainingConfig:
    base = {}
    if args.config:
        _require_files(args.config)
        try:
            base = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.config}: invalid JSON ({exc})") from None
    overrides = {"seed": args.seed, "max_epochs": args.max_epochs, "batch_size": args.batch_size,
                 "early_stop_patience": args.patience, "learning_rate": args.lr, "dtype": args.dtype}
    base.update({k: v for k, v in overrides.items() if v is not None})
    base.setdefault("seed", DEFAULT_SEED)
    try:
        return TrainingConfig.from_dict(base)
    except ValueError as exc:
        raise DataError(f"training config: {exc}") from None


def cmd_train(args) -> None:
    _require_files(args.train, args.val)
    _require_dir_for(args.out)
    config = _training_config(args)
    taxonomy = load_taxonomy(args.taxonomy)
    train_set = load_dataset(load_manifest(args.train, taxonomy, split="train"), args.size)
    val_set = load_dataset(load_manifest(args.val, taxonomy, split="val"), args.size)
    model = init_model(canonical_spec(len(taxonomy)), config.seed)
    _, history = train(model, train_set, val_set, config, checkpoint_path=args.out)
    payload = {"weights": str(args.out), "history": str(history_path(args.out)), "seed": config.seed,
               "epochs": len(history.records), "best_epoch": history.best_epoch,
               "best_val_accuracy": history.best_val_accuracy, "stopped_early": history.stopped_early}
    _emit(args, payload, [f"seed: {config.seed}",
                          f"epochs: {payload['epochs']} (best {history.best_epoch}, "
                          f"val accuracy {history.best_val_accuracy:.4f})",
                          f"weights: {args.out}", f"history: {payload['history']}"])


def _predict(model, ds: Dataset, batch_size: int = 64) -> np.ndarray:
    return np.concatenate([np.argmax(forward_batch(model, ds.images[i:i + batch_size]), axis=1)
                           for i in range(0, len(ds), batch_size)])


def cmd_eval(args) -> None:
    _require_files(args.weights, args.manifest)
    for out in (args.report_out, args.plot):
        if out is not None:
            _require_dir_for(out)
    taxonomy = load_taxonomy(args.taxonomy)
    model = load_weights(args.weights)
    if model.spec.num_classes != len(taxonomy):
        raise DataError(f"model predicts {model.spec.num_classes} classes, taxonomy has {len(taxonomy)}")
    ds = load_dataset(load_manifest(args.manifest, taxonomy), args.size)
    g = Granularity(args.granularity)
    fine = metrics.confusion(_predict(model, ds), ds.labels, len(taxonomy))
    cm = metrics.group_confusion(fine, taxonomy, g)
    rep = metrics.report(cm)
    names = taxonomy.families(g)
    if args.report_out:
        fmt = "csv" if Path(args.report_out).suffix.lower() == ".csv" else "json"
        metrics.export_report(rep, cm, args.report_out, fmt, names)
    if args.plot:
        metrics.render_confusion_plot(cm, args.plot, names)
    payload = {"granularity": g.value, "samples": cm.total, "accuracy": rep.accuracy,
               "macro_f1": rep.macro_f1, "weighted_f1": rep.weighted_f1}
    _emit(args, payload, [f"granularity: {g.value}", f"samples: {cm.total}",
                          f"accuracy: {rep.accuracy:.4f}", f"macro F1: {rep.macro_f1:.4f}",
                          f"weighted F1: {rep.weighted_f1:.4f}"])


def cmd_classify(args) -> None:
    _require_files(args.weights, args.image)
    taxonomy = load_taxonomy(args.taxonomy)
    model = load_weights(args.weights)
    image = preprocess(read_pnm(args.image), args.size).astype(model.dtype)
    try:
        decision = classify_with_preset(model, image, taxonomy)
    except ShapeError as exc:
        raise DataError(str(exc)) from None
    print(json.dumps(decision.to_dict(), sort_keys=True))


def cmd_bench(args) -> None:
    if args.manifest:
        _require_files(args.manifest)
    model = _load_model(args.weights, seed=args.seed)
    if args.manifest:
        taxonomy = load_taxonomy(args.taxonomy)
        images = load_dataset(load_manifest(args.manifest, taxonomy), args.size).images
    else:
        images = np.stack([
            preprocess(synth_speckle(SpeckleParams(seed=args.seed + i), args.size, args.size), args.size)
            for i in range(args.count + args.warmup)
        ]).astype(np.float32)
    threads = None if args.threads == 0 else args.threads
    res = metrics.benchmark(model, images.astype(model.dtype), warmup=args.warmup, threads=threads)
    payload = res.to_dict() | {"seed": args.seed, "input_size": args.size}
    _emit(args, payload, [f"seed: {args.seed}", f"input: {args.size}x{args.size}"] + res.lines())


def cmd_inspect(args) -> None:
    if args.target == "canonical":
        spec = canonical_spec()
    else:
        spec = _load_model(args.target).spec
    shapes = output_shapes(spec, args.size, args.size)
    counts = {i: n for i, _, n in layer_parameter_counts(spec)}
    rows = [{"index": i, "kind": kind.name.lower(), "output_shape": list(shape), "parameters": counts.get(i, 0)}
            for i, kind, shape in shapes]
    total = parameter_count(spec)
    lines = [f"{r['index']:>3} {r['kind']:<10} {'x'.join(map(str, r['output_shape'])):<14} {r['parameters']:>8}"
             for r in rows]
    lines.append(f"total parameters: {total}")
    _emit(args, {"input_size": args.size, "layers": rows, "total_parameters": total}, lines)


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specklenet", description="Lightweight speckle material classifier.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text, fn):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        sp.set_defaults(func=fn)
        return sp

    def taxonomy_arg(sp):
        sp.add_argument("--taxonomy", default=None,
                        help="taxonomy JSON (default: $SPECKLENET_TAXONOMY or the shipped file)")

    def size_arg(sp):
        sp.add_argument("--size", type=int, default=INPUT_SIZE, help="network input resolution")

    sp = add("synth", "write a synthetic speckle dataset with manifests", cmd_synth)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--classes", type=int, default=8)
    sp.add_argument("--per-class", type=int, nargs=3, default=(100, 20, 20), metavar=("TRAIN", "VAL", "TEST"))
    sp.add_argument("--resolution", type=int, default=128)
    sp.add_argument("--channels", type=int, choices=(1, 3), default=1)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    taxonomy_arg(sp)

    sp = add("train", "train the canonical network from train/val manifests", cmd_train)
    sp.add_argument("--train", required=True, help="training manifest")
    sp.add_argument("--val", required=True, help="validation manifest")
    sp.add_argument("--out", required=True, help="best-weights output path")
    sp.add_argument("--config", help="TrainingConfig JSON")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--max-epochs", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--dtype", choices=("float32", "float64"))
    taxonomy_arg(sp)
    size_arg(sp)

    sp = add("eval", "score weights on a manifest", cmd_eval)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--granularity", choices=[g.value for g in Granularity], default="fine")
    sp.add_argument("--report-out", help="report path (.json or .csv)")
    sp.add_argument("--plot", help="confusion plot path (.png or .txt)")
    taxonomy_arg(sp)
    size_arg(sp)

    sp = add("classify", "classify one PGM/PPM image and print the preset decision", cmd_classify)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--image", required=True)
    taxonomy_arg(sp)
    size_arg(sp)

    sp = add("bench", "time single-image inference", cmd_bench)
    sp.add_argument("--weights", default="canonical", help="weight file or 'canonical' (random init)")
    sp.add_argument("--manifest", help="benchmark on these images instead of synthetic ones")
    sp.add_argument("--count", type=int, default=50, help="synthetic images to time")
    sp.add_argument("--warmup", type=int, default=1)
    sp.add_argument("--threads", type=int, default=1, help="BLAS threads, 0 leaves the default")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    taxonomy_arg(sp)
    size_arg(sp)

    sp = add("inspect", "per-layer shapes and parameter counts", cmd_inspect)
    sp.add_argument("target", help="weight file or 'canonical'")
    size_arg(sp)
    return p


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "exit_code": code, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "UsageError", str(exc))
    try:
        args.func(args)
    except DataError as exc:
        return _fail(EXIT_DATA, type(exc).__name__, str(exc))
    except NumericError as exc:
        return _fail(EXIT_NUMERIC, type(exc).__name__, str(exc))
    except (ShapeError, ValueError) as exc:
        # bad values that slipped past argparse, e.g. a tiny --size
        return _fail(EXIT_DATA, type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
