"""mpikit command line: gen-data, inpaint, train, eval, ablate, gradcheck.

Exit codes: 0 success, 1 assertion/tolerance failure, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import io
from .metrics import IouMeter, is_undefined
from .mpi import MpiError, MpiOptions, nn_inpaint_labels
from .tensor import PoolMode

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _fmt(x):
    return "undefined" if is_undefined(x) else f"{float(x):.6f}"


def _emit(**kv):
    print(" ".join(f"{k}={v}" for k, v in kv.items()), flush=True)


def _csv(kind):
    def parse(text):
        items = [s.strip() for s in text.split(",") if s.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        try:
            return [kind(s) for s in items]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _on_off(text):
    out = []
    for s in _csv(str)(text):
        if s not in ("on", "off"):
            raise argparse.ArgumentTypeError(f"expected on/off, got {s!r}")
        out.append(s == "on")
    return out


def _positive(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


# -- gen-data ---------------------------------------------------------------

def cmd_gen_data(args):
    from .synth import SceneConfig, generate
    cfg = SceneConfig(h=args.h, w=args.w, seed=args.seed)
    _emit(command="gen-data", out=args.out, n=args.n, h=args.h, w=args.w, seed=args.seed)
    io.write_dataset(args.out, generate(cfg, args.n),
                     header={"h": args.h, "w": args.w, "seed": args.seed})
    _emit(written=args.n, manifest=str(Path(args.out) / io.MANIFEST))
    return EXIT_OK


# -- inpaint ----------------------------------------------------------------

def cmd_inpaint(args):
    labels = io.read_labels(args.labels)
    mask = io.read_mask(args.mask)
    if labels.shape != mask.shape:
        raise UsageError(f"labels {labels.shape} and mask {mask.shape} differ in shape")
    opts = MpiOptions(boundary_erosion_radius=args.erosion, pool_mode=PoolMode.parse(args.mode))
    _emit(command="inpaint", labels=args.labels, mask=args.mask, out=args.out,
          mode=opts.pool_mode.value, erosion=opts.boundary_erosion_radius, seed="none")
    try:
        filled = nn_inpaint_labels(labels, mask, opts)
    except MpiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    io.write_labels(args.out, filled)
    _emit(filled=int(np.count_nonzero(mask == 0)))
    return EXIT_OK


# -- train ------------------------------------------------------------------

def _load_split(args):
    from .nn.train import Dataset
    triplets, _ = io.read_dataset(args.data)
    if args.val is not None:
        val, _ = io.read_dataset(args.val)
        return Dataset.from_triplets(triplets), Dataset.from_triplets(val)
    n_val = int(round(len(triplets) * args.val_fraction))
    if n_val < 1 or n_val >= len(triplets):
        raise UsageError(f"cannot hold out {args.val_fraction} of {len(triplets)} scenes for validation")
    return Dataset.from_triplets(triplets[:-n_val]), Dataset.from_triplets(triplets[-n_val:])


def _load_configs(path, model=None, opt=None):
    from .nn.config import load_train_config
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise io.FormatError(f"cannot read config {path}: {exc}") from exc
    return load_train_config(text, model, opt)


def _print_config(model_cfg, opt_cfg):
    from .nn.config import dump_train_config
    print("# resolved config")
    print(dump_train_config(model_cfg, opt_cfg), end="", flush=True)


def cmd_train(args):
    from .nn.model import build_model
    from .nn.train import TrainingDiverged, train
    model_cfg, opt_cfg = _load_configs(args.config)
    if args.seed is not None:
        model_cfg = dataclasses.replace(model_cfg, seed=args.seed)
    train_data, val_data = _load_split(args)
    _emit(command="train", data=args.data, out=args.out, train_scenes=len(train_data),
          val_scenes=len(val_data), seed=model_cfg.seed)
    _print_config(model_cfg, opt_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(_config_text(model_cfg, opt_cfg))
    model = build_model(model_cfg)
    log_path = out / "training_log.txt"
    log_path.write_text("")

    def on_epoch(rec):
        line = rec.to_line()
        print(line, flush=True)
        with log_path.open("a") as fh:
            fh.write(line + "\n")
        if args.checkpoint_every and rec.epoch % args.checkpoint_every == 0:
            io.write_checkpoint(out / f"checkpoint_epoch{rec.epoch:03d}", model.state_dict())

    try:
        log = train(model, train_data, opt_cfg, val=val_data, on_epoch=on_epoch)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    io.write_checkpoint(out / "checkpoint", model.state_dict())
    iou_all, iou_fg = log.final_iou()
    result = f"iou_all={_fmt(iou_all)} iou_fg={_fmt(iou_fg)} seed={model_cfg.seed}\n"
    (out / "result.txt").write_text(result)
    print(result, end="")
    return EXIT_OK


def _config_text(model_cfg, opt_cfg):
    from .nn.config import dump_train_config
    return dump_train_config(model_cfg, opt_cfg)


# -- eval -------------------------------------------------------------------

def _label_files(path, role):
    """A single file, a dataset directory (by manifest role) or a directory of PGMs."""
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise FileNotFoundError(f"no such file or directory: {path}")
    if (path / io.MANIFEST).is_file():
        _, records = io.read_manifest(path / io.MANIFEST)
        try:
            return [path / r[role] for r in records]
        except KeyError as exc:
            raise io.FormatError(f"manifest record missing {exc}") from exc
    files = sorted(path.glob("*.pgm"))
    if not files:
        raise io.FormatError(f"no .pgm files in {path}")
    return files


def cmd_eval(args):
    preds = _label_files(args.pred, "labels")
    gts = _label_files(args.gt, "labels")
    fgs = _label_files(args.fg_mask, "mask")
    if not (len(preds) == len(gts) == len(fgs)):
        raise UsageError(f"file counts differ: pred={len(preds)} gt={len(gts)} fg-mask={len(fgs)}")
    _emit(command="eval", pred=args.pred, gt=args.gt, fg_mask=args.fg_mask,
          n_classes=args.n_classes, pairs=len(preds), seed="none")
    meter = IouMeter(args.n_classes)
    for p, g, f in zip(preds, gts, fgs):
        pred, gt, mask = io.read_labels(p), io.read_labels(g), io.read_mask(f)
        if not (pred.shape == gt.shape == mask.shape):
            raise UsageError(f"shape mismatch for {p.name}: {pred.shape} {gt.shape} {mask.shape}")
        try:
            meter.update(pred, gt, mask)
        except ValueError as exc:
            raise UsageError(f"{p.name}: {exc}") from exc
    iou_all, iou_fg = meter.result()
    print(f"IoU (all regions):       {_fmt(iou_all)}")
    print(f"IoU (foreground region): {_fmt(iou_fg)}")
    _emit(iou_all=_fmt(iou_all), iou_fg=_fmt(iou_fg))
    return EXIT_OK


# -- ablate -----------------------------------------------------------------

def cmd_ablate(args):
    from .nn.ablation import (ABLATION_MODEL, ABLATION_OPT, format_table, run_ablation,
                              worker_threads)
    model_cfg, opt_cfg = ABLATION_MODEL, ABLATION_OPT
    if args.config is not None:
        model_cfg, opt_cfg = _load_configs(args.config, model_cfg, opt_cfg)
    if args.epochs is not None:
        opt_cfg = dataclasses.replace(opt_cfg, epochs=args.epochs)
    train_data, val_data = _load_split(args)
    threads = worker_threads()
    _emit(command="ablate", data=args.data, out=args.out, positions=",".join(args.positions),
          handlers=",".join(args.handlers), seeds=",".join(map(str, args.seeds)),
          fake_masks=",".join("on" if f else "off" for f in args.fake_masks), threads=threads,
          train_scenes=len(train_data), val_scenes=len(val_data))
    _print_config(model_cfg, opt_cfg)
    out = Path(args.out)
    (out / "runs").mkdir(parents=True, exist_ok=True)

    def on_run(r):
        tag = f"{r.position}_{r.handler}_{'on' if r.fake_masks else 'off'}_seed{r.seed}"
        (out / "runs" / f"{tag}.log").write_text(r.log_text)
        _emit(run=tag, iou_all=_fmt(r.iou_all), iou_fg=_fmt(r.iou_fg))

    rows = run_ablation(train_data, val_data, args.positions, args.handlers, args.seeds,
                        fake_masks=tuple(args.fake_masks), base_cfg=model_cfg, opt_cfg=opt_cfg,
                        threads=threads, on_run=on_run)
    records = "".join(r.to_record() + "\n" for r in rows)
    table = format_table(rows)
    (out / "results.txt").write_text(records)
    (out / "results_table.txt").write_text(table)
    print(table, end="")
    print(records, end="")
    return EXIT_OK


# -- gradcheck --------------------------------------------------------------

def cmd_gradcheck(args):
    from .nn.gradcheck import run_scope
    _emit(command="gradcheck", scope=args.scope, seed=args.seed)
    report = run_scope(args.scope, args.seed)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAIL


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .nn.gradcheck import SCOPES
    from .nn.model import HANDLERS, POSITIONS

    p = argparse.ArgumentParser(prog="mpikit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic occlusion dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=_positive, required=True)
    g.add_argument("--h", type=_positive, default=64)
    g.add_argument("--w", type=_positive, default=128)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_gen_data)

    i = sub.add_parser("inpaint", help="nearest-background fill of a label map under a mask")
    i.add_argument("--labels", required=True)
    i.add_argument("--mask", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--mode", choices=[m.value for m in PoolMode], default=PoolMode.ZERO_FILL.value)
    i.add_argument("--erosion", type=int, default=1)
    i.set_defaults(fn=cmd_inpaint)

    def split_args(sp):
        sp.add_argument("--data", required=True)
        sp.add_argument("--val", default=None, help="validation dataset (default: hold out the tail of --data)")
        sp.add_argument("--val-fraction", type=float, default=0.2)
        sp.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train the toy network")
    split_args(t)
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None, help="override the config seed")
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="all-region and foreground-region mean IoU")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--fg-mask", required=True)
    e.add_argument("--n-classes", type=_positive, default=3)
    e.set_defaults(fn=cmd_eval)

    a = sub.add_parser("ablate", help="train a grid of configurations over seeds")
    split_args(a)
    a.add_argument("--positions", type=_csv(str), default=["mid"])
    a.add_argument("--handlers", type=_csv(str), default=["mpi", "blackout"])
    a.add_argument("--seeds", type=_csv(int), default=[0, 1, 2])
    a.add_argument("--fake-masks", type=_on_off, default=[True])
    a.add_argument("--config", default=None)
    a.add_argument("--epochs", type=_positive, default=None)
    a.set_defaults(fn=cmd_ablate, valid_positions=POSITIONS, valid_handlers=HANDLERS)

    c = sub.add_parser("gradcheck", help="finite-difference gradient check")
    c.add_argument("--scope", choices=sorted(SCOPES), required=True)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.command == "ablate":
        bad = [x for x in args.positions if x not in args.valid_positions] + \
              [x for x in args.handlers if x not in args.valid_handlers]
        if bad:
            print(f"mpikit ablate: error: unknown position/handler {bad}", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.fn(args)
    except (UsageError, io.FormatError, OSError, ValueError) as exc:
        print(f"mpikit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
