"""Command-line surface tying signal prep, rendering, the embedding model,
and the schedule/metric helpers together.

Exit codes are stable API: 0 ok, 2 usage or bad input, 3 processing failure,
4 container integrity, 5 tensor shape mismatch. Heavy imports stay inside the
command functions so BIOMOE_THREADS can cap BLAS threads before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PROCESSING = 3
EXIT_INTEGRITY = 4
EXIT_SHAPE = 5

# CLI kind tokens -> representation kinds
_KIND_MAP = {
    "waveform": "waveform",
    "angle": "spec_angle",
    "phase": "spec_phase",
    "psd": "spec_psd",
    "scalogram": "scalogram",
    "recurrence": "recurrence",
}

_CLASS_NAMES = {"no pain": 0, "low pain": 1, "high pain": 2}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _apply_thread_env() -> None:
    n = os.environ.get("BIOMOE_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _stage(code: int, name: str, fn, *args, **kwargs):
    """Run one pipeline stage; failures exit with `code` naming the stage."""
    from .images import ImageError
    from .representations import RepresentationError
    from .runconfig import RunConfigError
    from .signals import SignalError

    try:
        return fn(*args, **kwargs)
    except (SignalError, RepresentationError, ImageError, RunConfigError,
            OSError, ValueError) as e:
        raise CliError(code, f"{name}: {e}") from None


def _load_config(path):
    from .runconfig import RunConfig, load_runconfig

    if path is None:
        return RunConfig()
    return _stage(EXIT_USAGE, "config", load_runconfig, path)


def _load_signal(args, run_cfg):
    from .signals import Modality, apply_filter, default_filter, load_csv

    modality = Modality(args.modality)
    sig = _stage(EXIT_USAGE, "load", load_csv, args.input, args.column,
                 args.rate, modality, args.skip_header)
    spec = run_cfg.filters.get(modality, default_filter(modality))
    return _stage(EXIT_PROCESSING, "filter", apply_filter, sig, spec)


def cmd_render(args) -> int:
    from .images import write_png
    from .representations import render

    run_cfg = _load_config(args.config)
    filtered = _load_signal(args, run_cfg)
    kinds = list(_KIND_MAP) if args.kind == "all" else [args.kind]
    stem = os.path.splitext(os.path.basename(args.input))[0]
    _stage(EXIT_PROCESSING, "write", os.makedirs, args.out, exist_ok=True)
    for kind in kinds:
        img = _stage(EXIT_PROCESSING, f"render {kind}", render,
                     filtered, _KIND_MAP[kind])
        path = os.path.join(args.out, f"{stem}_{args.modality}_{kind}.png")
        _stage(EXIT_PROCESSING, "write", write_png, path, img)
        print(path)
    return EXIT_OK


def _load_store(args, cfg):
    from .container import read_container
    from .model import init_weights, validate_weights

    if args.weights:
        try:
            store = read_container(args.weights)  # ContainerError -> exit 4
        except OSError as e:
            raise CliError(EXIT_USAGE, f"weights: {e}") from None
        validate_weights(cfg, store)              # ShapeError -> exit 5
        return store
    if args.init == "random":
        return init_weights(cfg, args.seed)
    raise CliError(EXIT_USAGE, "embed: pass --weights FILE or --init random")


def _input_image(args, run_cfg):
    import numpy as np

    from .images import read_png
    from .representations import render

    if args.input.lower().endswith(".png"):
        img = _stage(EXIT_USAGE, "load", read_png, args.input)
        if img.shape != (224, 224, 3):
            raise CliError(EXIT_USAGE, f"load: image must be 224x224x3, got {img.shape}")
    else:
        filtered = _load_signal(args, run_cfg)
        img = _stage(EXIT_PROCESSING, "render", render,
                     filtered, _KIND_MAP[args.kind])
    return img.astype(np.float32) / np.float32(255.0)


def _print_vector(v, label=None):
    if label:
        print(f"# {label}")
    for x in v:
        print(f"{float(x):.8e}")


def cmd_embed(args) -> int:
    from .model import embed

    run_cfg = _load_config(args.config)
    cfg = run_cfg.model
    store = _load_store(args, cfg)
    img = _input_image(args, run_cfg)
    out = embed(img, store, cfg)
    if args.per_encoder:
        _print_vector(out["z1"], "encoder1")
        _print_vector(out["z2"], "encoder2")
        _print_vector(out["fused"], "fused")
    else:
        _print_vector(out["fused"])
    return EXIT_OK


def cmd_audit(args) -> int:
    from .budget import audit_report

    run_cfg = _load_config(args.config)
    sys.stdout.write(audit_report(run_cfg.model, args.format))
    return EXIT_OK


def _read_label_csv(path):
    import csv

    rows = []
    try:
        with open(path, newline="", encoding="utf-8") as f:
            for i, row in enumerate(csv.reader(f)):
                if not row or not "".join(row).strip():
                    continue
                if len(row) < 2:
                    raise CliError(EXIT_USAGE, f"labels: row {i} needs record,class")
                rows.append((row[0].strip(), _parse_class(row[1], f"labels row {i}")))
    except OSError as e:
        raise CliError(EXIT_USAGE, f"labels: {e}") from None
    if not rows:
        raise CliError(EXIT_USAGE, "labels: empty file")
    return rows


def _parse_class(text: str, where: str) -> int:
    t = text.strip().lower()
    if t in _CLASS_NAMES:
        return _CLASS_NAMES[t]
    try:
        return int(t)
    except ValueError:
        raise CliError(EXIT_USAGE, f"{where}: unknown class {text!r}") from None


def cmd_eval(args) -> int:
    from .trainmath import confusion_from_pairs, macro_metrics

    labels = _read_label_csv(args.labels)
    preds = []
    for record, _ in labels:
        path = os.path.join(args.pred_dir, f"{record}.txt")
        try:
            with open(path, encoding="utf-8") as f:
                preds.append(_parse_class(f.read(), f"prediction {record}"))
        except OSError:
            raise CliError(EXIT_USAGE,
                           f"eval: missing prediction for record '{record}'") from None
    cm = confusion_from_pairs([c for _, c in labels], preds)
    m = macro_metrics(cm)
    print(f"accuracy: {100.0 * m['accuracy']:.2f}")
    print(f"precision: {100.0 * m['precision']:.2f}")
    print(f"f1: {100.0 * m['f1']:.2f}")
    return EXIT_OK


def cmd_schedule(args) -> int:
    from .trainmath import (ScheduleConfig, TrainMathError, cosine_lr,
                            dropout_rate, smoothing_eps)

    try:
        cfg = ScheduleConfig(T=args.steps, base_lr=args.base_lr)
    except TrainMathError as e:
        raise CliError(EXIT_USAGE, f"schedule: {e}") from None
    lines = ["step,lr,dropout,eps"]
    for t in range(cfg.T + 1):
        lines.append(f"{t},{cosine_lr(t, cfg):.10g},"
                     f"{dropout_rate(t, cfg):.10g},{smoothing_eps(t, cfg):.10g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _stage(EXIT_PROCESSING, "write", _write_text, args.out, text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def cmd_augment(args) -> int:
    from .augment import augment_image
    from .images import read_png, write_png

    img = _stage(EXIT_USAGE, "load", read_png, args.input)
    out = _stage(EXIT_PROCESSING, "augment", augment_image,
                 img, args.seed, args.index, args.epoch)
    _stage(EXIT_PROCESSING, "write", write_png, args.out, out)
    print(args.out)
    return EXIT_OK


def _add_signal_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--modality", required=True,
                   choices=["eda", "bvp", "resp", "spo2"])
    p.add_argument("--rate", type=float, required=True,
                   help="sample rate in Hz")
    p.add_argument("--column", type=int, default=0)
    p.add_argument("--skip-header", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="biomoe",
        description="biosignal-to-image embedding pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="signal CSV to representation PNGs")
    p.add_argument("input", help="signal CSV path")
    _add_signal_args(p)
    p.add_argument("--kind", default="all", choices=[*_KIND_MAP, "all"])
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("embed", help="image or signal to embedding vector")
    p.add_argument("input", help="224x224 PNG or signal CSV")
    p.add_argument("--weights", default=None, help="weight container path")
    p.add_argument("--init", default=None, choices=["random"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-encoder", action="store_true")
    p.add_argument("--config", default=None)
    p.add_argument("--kind", default="scalogram", choices=list(_KIND_MAP))
    p.add_argument("--modality", choices=["eda", "bvp", "resp", "spo2"],
                   default="eda")
    p.add_argument("--rate", type=float, default=32.0)
    p.add_argument("--column", type=int, default=0)
    p.add_argument("--skip-header", action="store_true")
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("audit", help="parameter and FLOP budget report")
    p.add_argument("--config", default=None)
    p.add_argument("--format", default="text", choices=["text", "csv"])
    p.set_defaults(fn=cmd_audit)

    p = sub.add_parser("eval", help="macro metrics over prediction files")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--labels", required=True, help="CSV of record,class")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("schedule", help="emit lr/dropout/eps schedule CSV")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--base-lr", type=float, default=1e-4)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_schedule)

    p = sub.add_parser("augment", help="augment one PNG deterministically")
    p.add_argument("input")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_augment)

    return ap


def main(argv=None) -> int:
    _apply_thread_env()
    args = build_parser().parse_args(argv)
    from .container import ContainerError
    from .tensor import ShapeError

    try:
        return args.fn(args)
    except CliError as e:
        print(f"biomoe: {e}", file=sys.stderr)
        return e.code
    except ContainerError as e:
        print(f"biomoe: integrity: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except ShapeError as e:
        print(f"biomoe: shape: {e}", file=sys.stderr)
        return EXIT_SHAPE


if __name__ == "__main__":
    sys.exit(main())
