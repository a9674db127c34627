"""Command line entry point: ``ordinal-depth <command> [options]``.

Commands
    gen-data   write the train/eval samples as PNM bundles plus an index CSV
    train      train from a config; logs, checkpoints and a curves figure
    infer      predict depth and labels for the eval split (or bundle dirs)
    eval       metrics of a checkpoint on the eval split
    ablate     one-axis comparison table and bar chart
    render     colour images of predictions, ground truth and error maps

Exit status: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .discretizer import DiscretizationSpec
from .errors import ArgumentError, ConfigError, NumericError, ShapeError
from .harness import ablate as ablate_mod
from .harness import config as config_io
from .harness import plots, render
from .harness.config import ExperimentConfig
from .harness.inference import evaluate, infer
from .harness.training import load_splits, train
from .metrics import d1_fraction, error_map, write_depth_csv
from .network import load_checkpoint
from .synthdata import CLASS_NAMES, depth_to_mm, load_bundle, save_bundle, stack, write_pnm

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("ordinal_depth")


# ------------------------------------------------------------------ config

def _checkpoint_dir(args, cfg=None):
    if getattr(args, "checkpoint", None):
        return Path(args.checkpoint)
    if not hasattr(args, "checkpoint"):
        return None
    if cfg is not None:
        return Path(cfg.out_dir) / "final"
    return Path(args.out_dir) / "final" if args.out_dir else None


def _build_config(args) -> ExperimentConfig:
    """--config, else the checkpoint's own config, else defaults; then overrides."""
    if args.config:
        cfg = config_io.load(args.config)
    else:
        ck = _checkpoint_dir(args)
        saved = ck / "config.txt" if ck is not None else None
        cfg = config_io.load(saved) if saved is not None and saved.is_file() else ExperimentConfig()
    if args.set:
        cfg = config_io.loads("\n".join(args.set), base=cfg)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out_dir is not None:
        changes["out_dir"] = args.out_dir
    return cfg.replace(**changes) if changes else cfg


def _load_net(args, cfg: ExperimentConfig):
    ck = _checkpoint_dir(args, cfg)
    if not (ck / "manifest.txt").is_file():
        raise ConfigError(f"no checkpoint at {ck}")
    return load_checkpoint(ck, cfg.model_config())


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _out(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- commands

def cmd_gen_data(args, cfg):
    out = _out(cfg) / "data"
    train_set, eval_set = load_splits(cfg)
    rows = []
    for split, samples, offset in (("train", train_set, 0), ("eval", eval_set, cfg.n_train)):
        for k, b in enumerate(samples):
            d = out / split / f"{offset + k:05d}"
            save_bundle(b, d)
            classes = ";".join(CLASS_NAMES[c] for c in np.unique(b.labels))
            rows.append([split, offset + k, d.relative_to(out), int(b.valid.sum()),
                         int(b.sparse_mask.sum()), classes])
    path = _write_csv(out / "index.csv", ["split", "index", "dir", "n_valid", "n_sparse", "classes"], rows)
    config_io.save(cfg, out / "config.txt")
    print(path)


def cmd_train(args, cfg):
    _, runlog = train(cfg)
    out = Path(cfg.out_dir)
    plots.training_curves(runlog.iterations, runlog.evals, out / "figures" / "training_curves.png")
    last = runlog.evals[-1]
    print(f"config_hash={runlog.config_hash} rmse={last['rmse']:.4f} silog={last['silog']:.3f}")


def _inputs(args, cfg):
    if args.bundle:
        samples = [load_bundle(d) for d in args.bundle]
        ids = [Path(d).name for d in args.bundle]
    else:
        samples = list(load_splits(cfg)[1])
        ids = [str(cfg.n_train + k) for k in range(len(samples))]
    if args.limit:
        samples, ids = samples[:args.limit], ids[:args.limit]
    return samples, ids


def cmd_infer(args, cfg):
    net = _load_net(args, cfg)
    samples, ids = _inputs(args, cfg)
    spec = cfg.discretization()
    pred = infer(net, stack(samples)[0], spec, args.flip_merge, cfg.loss_kind == "mae-regression")
    out = _out(cfg) / "predictions"
    rows = []
    for k, sid in enumerate(ids):
        d = out / sid
        d.mkdir(parents=True, exist_ok=True)
        write_pnm(d / "depth.pgm", b"P5", depth_to_mm(pred.depth[k], pred.depth_valid[k]), 65535)
        lab = pred.labels[k].astype(np.uint8)
        write_pnm(d / "labels.pgm", b"P5", lab, 255)
        rows.append([sid, repr(float(pred.depth[k].mean())), repr(float(pred.depth_valid[k].mean())),
                     CLASS_NAMES[int(np.bincount(lab.ravel()).argmax())]])
    print(_write_csv(out / "predictions.csv", ["sample", "mean_depth", "valid_fraction", "majority_class"], rows))


def cmd_eval(args, cfg):
    net = _load_net(args, cfg)
    samples, ids = _inputs(args, cfg)
    res = evaluate(net, samples, cfg.discretization(), cfg.eval_cap,
                   cfg.loss_kind == "mae-regression", args.flip_merge, cfg.m_s)
    out = _out(cfg)
    write_depth_csv(out / "eval_depth.csv", res.per_sample, ids)
    seg_rows = [[CLASS_NAMES[c], "" if np.isnan(v) else repr(float(v))] for c, v in enumerate(res.seg.iou)]
    seg_rows.append(["mean", repr(res.seg.mean_iou)])
    _write_csv(out / "eval_seg.csv", ["class", "iou"], seg_rows)
    r = res.depth
    print("silog,ard_pct,rmse,irmse,mean_iou,depth_class_acc")
    acc = "" if res.depth_class_acc is None else repr(res.depth_class_acc)
    print(f"{r.silog!r},{r.ard_pct!r},{r.rmse!r},{r.irmse!r},{res.seg.mean_iou!r},{acc}")


def cmd_ablate(args, cfg):
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    rows = ablate_mod.ablate(cfg, args.axis, seeds=seeds)
    out = Path(cfg.out_dir)
    plots.ablation_bars(rows, out / "figures" / f"ablation_{args.axis}.png")
    with open(out / f"ablation_{args.axis}.csv") as fh:
        sys.stdout.write(fh.read())


def cmd_render(args, cfg):
    net = _load_net(args, cfg)
    samples, ids = _inputs(args, cfg)
    spec = cfg.discretization()
    pred = infer(net, stack(samples)[0], spec, args.flip_merge, cfg.loss_kind == "mae-regression")
    out = _out(cfg) / "render"
    rows = []
    for k, (b, sid) in enumerate(zip(samples, ids)):
        scores = error_map(pred.depth[k], b.depth, b.valid)
        render.render_outputs(out, sid, pred.depth[k], pred.labels[k], scores, None, spec.d_min, spec.d_max)
        render.write_png(out / f"{sid}_gt_depth.png", render.colorize_depth(b.depth, b.valid, spec.d_min, spec.d_max))
        render.write_png(out / f"{sid}_gt_labels.png", render.colorize_labels(b.labels))
        rows.append([sid, repr(d1_fraction(scores))])
    depths = np.stack([b.depth for b in samples])
    schemes = {s: DiscretizationSpec(spec.d_min, spec.d_max, spec.m_d, s)
               for s in ("exponential-inverse", "linear-depth")}
    plots.class_histograms(depths, depths > 0, schemes, out / "class_histograms.png")
    print(_write_csv(out / "render.csv", ["sample", "d1_fraction"], rows))


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "infer": cmd_infer,
            "eval": cmd_eval, "ablate": cmd_ablate, "render": cmd_render}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out-dir", help="override the output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    io = argparse.ArgumentParser(add_help=False)
    io.add_argument("--checkpoint", help="checkpoint directory (default <out-dir>/final)")
    io.add_argument("--bundle", action="append", help="sample bundle directory (repeatable)")
    io.add_argument("--limit", type=int, help="use only the first N samples")
    io.add_argument("--flip-merge", action="store_true", help="average with the mirrored prediction")

    parser = argparse.ArgumentParser(prog="ordinal-depth", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="write synthetic samples")
    sub.add_parser("train", parents=[common], help="train a model")
    sub.add_parser("infer", parents=[common, io], help="predict depth and labels")
    sub.add_parser("eval", parents=[common, io], help="evaluate a checkpoint")
    p = sub.add_parser("ablate", parents=[common], help="one-axis ablation")
    p.add_argument("--axis", required=True, choices=sorted(ablate_mod.AXES))
    p.add_argument("--seeds", help="comma separated seeds (default: the config seed)")
    sub.add_parser("render", parents=[common, io], help="colour renderings")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _build_config(args)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, ArgumentError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
