"""Command-line interface.

Subcommands: train, predict, eval-saliency, eval-scanpath, stats,
gen-synth. Exit codes: 0 success, 1 evaluation incomplete (missing
predictions), 2 usage or IO error. Failures print a one-line diagnostic
to stderr. Every command is deterministic given its flags and seeds.

Evaluation commands fan out across manifest records on a thread pool;
the SALYPATH_THREADS environment variable caps the worker count. Report
rows always come out in manifest order.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import data as dio
from . import saliency_metrics as sm
from . import scanpath_metrics as spm
from .errors import SalypathError
from .model import ModelConfig, SalypathModel
from .trainer import TrainConfig, train
from .types import FixationSet, Scanpath

SALIENCY_COLS = ["image_id", "auc_judd", "auc_borji", "nss", "cc", "sim", "kld"]
SCANPATH_COLS = ["image_id", "mm_shape", "mm_dir", "mm_len", "mm_pos",
                 "mm_mean", "nss", "congruency"]


def _workers(n_tasks: int) -> int:
    cap = os.environ.get("SALYPATH_THREADS")
    if cap is not None:
        try:
            cap_n = int(cap)
        except ValueError:
            raise SalypathError(f"SALYPATH_THREADS must be an integer, got {cap!r}")
        if cap_n < 1:
            raise SalypathError(f"SALYPATH_THREADS must be >= 1, got {cap_n}")
    else:
        cap_n = os.cpu_count() or 1
    return max(1, min(n_tasks, cap_n))


def _model_config(preset: str, overrides: dict | None = None) -> ModelConfig:
    base = ModelConfig.full_scale if preset == "paper" else ModelConfig.desk
    return base(**(overrides or {}))


def _train_config(preset: str, overrides: dict | None = None) -> TrainConfig:
    base = TrainConfig.full_scale if preset == "paper" else TrainConfig
    return base(**(overrides or {}))


def cmd_train(args) -> int:
    overrides = {"model": {}, "train": {}}
    if args.config:
        with open(args.config) as f:
            doc = json.load(f)
        for key in doc:
            if key not in ("model", "train"):
                raise SalypathError(f"{args.config}: unknown config section {key!r}")
        overrides["model"].update(doc.get("model", {}))
        overrides["train"].update(doc.get("train", {}))
    if args.seed is not None:
        overrides["train"]["seed"] = args.seed

    mcfg = _model_config(args.preset, overrides["model"])
    tcfg = TrainConfig.from_dict({**_train_config(args.preset).to_dict(),
                                  **overrides["train"]})
    manifest = dio.load_manifest(args.data)
    model = SalypathModel(mcfg, seed=tcfg.seed)
    r1, r2 = train(model, manifest, tcfg, checkpoint_path=args.out)
    model.save(args.out)
    if args.report:
        with open(args.report, "w") as f:
            json.dump({"phase1": r1.to_dict(), "phase2": r2.to_dict()}, f, indent=1)
            f.write("\n")
    print(f"trained {len(manifest)} images: "
          f"L1 {r1.epoch_losses[0]:.4f} -> {r1.epoch_losses[-1]:.4f}, "
          f"L2 {r2.epoch_losses[0]:.4f} -> {r2.epoch_losses[-1]:.4f}, "
          f"checkpoint {args.out}")
    return 0


def cmd_predict(args) -> int:
    model = SalypathModel.load(args.checkpoint)
    h, w = model.config.input_size
    img = dio.read_ppm(args.image)
    if img.shape[1] != h or img.shape[2] != w:
        print(f"warning: image is {img.shape[2]}x{img.shape[1]}, "
              f"resampling to model input {w}x{h}", file=sys.stderr)
        img = dio.resample_stimulus(img, w, h)
    smap, path = model.forward(img)
    dio.write_pgm(args.out_map, smap.values)
    px = path.to_pixels(w, h)
    dio.write_scanpath_csv(args.out_scanpath, px, extra={
        "x_norm": path.points[:, 0].astype(np.float64),
        "y_norm": path.points[:, 1].astype(np.float64),
    })
    print(f"wrote {args.out_map} and {args.out_scanpath}")
    return 0


def _pred_map_path(pred_dir: Path, image_id: str) -> Path:
    return pred_dir / f"{image_id}.pgm"


def _pred_scanpath_path(pred_dir: Path, image_id: str) -> Path:
    return pred_dir / f"{image_id}.csv"


def _write_report(out, cols: list[str], rows: list[list]) -> None:
    """Rows of [image_id, floats...] plus a trailing MEAN row; full-precision
    floats so means can be re-derived exactly from the rows."""
    stream = sys.stdout if out is None else open(out, "w", newline="")
    try:
        wr = csv.writer(stream)
        wr.writerow(cols)
        for row in rows:
            wr.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        if rows:
            arr = np.array([[float(v) for v in row[1:]] for row in rows], dtype=np.float64)
            wr.writerow(["MEAN"] + [repr(float(v)) for v in arr.mean(axis=0)])
    finally:
        if out is not None:
            stream.close()


def cmd_eval_saliency(args) -> int:
    manifest = dio.load_manifest(args.manifest)
    pred_dir = Path(args.pred_dir)
    missing = []
    jobs = []
    for i in range(len(manifest)):
        p = _pred_map_path(pred_dir, manifest.image_id(i))
        if not p.exists():
            missing.append(str(p))
        else:
            jobs.append((i, p))
    for p in missing:
        print(f"missing prediction: {p}", file=sys.stderr)

    def one(job):
        i, p = job
        gt = manifest.load_map(i)
        pred = dio.read_pgm(p)
        if pred.shape != gt.values.shape:
            pred = dio.resample_map(pred, gt.width, gt.height)
        fix = FixationSet.from_scanpaths(
            manifest.load_scanpaths(i), gt.width, gt.height)
        return [
            manifest.image_id(i),
            sm.auc_judd(pred, fix),
            sm.auc_borji(pred, fix, n_splits=args.borji_splits,
                         rng_seed=args.seed + i),
            sm.nss(pred, fix),
            sm.cc(pred, gt.values),
            sm.sim(pred, gt.values),
            sm.kld(pred, gt.values),
        ]

    with ThreadPoolExecutor(max_workers=_workers(max(1, len(jobs)))) as ex:
        rows = list(ex.map(one, jobs))
    _write_report(args.out, SALIENCY_COLS, rows)
    return 1 if missing else 0


def cmd_eval_scanpath(args) -> int:
    manifest = dio.load_manifest(args.manifest)
    pred_dir = Path(args.pred_dir)
    missing = []
    jobs = []
    for i in range(len(manifest)):
        p = _pred_scanpath_path(pred_dir, manifest.image_id(i))
        if not p.exists():
            missing.append(str(p))
        else:
            jobs.append((i, p))
    for p in missing:
        print(f"missing prediction: {p}", file=sys.stderr)

    def one(job):
        i, p = job
        gt = manifest.load_map(i)
        gts = manifest.load_scanpaths(i)
        if not gts:
            raise SalypathError(
                f"record {i} ({manifest.image_id(i)}) has no ground-truth scanpaths"
            )
        pred = Scanpath.from_pixels(
            dio.read_scanpath_csv(p), manifest.width, manifest.height)
        scored = [spm.multimatch(pred, g) for g in gts]
        if args.gt_reduce == "best":
            pick = max(scored, key=lambda s: s.mean)
            mm = [pick.shape, pick.direction, pick.length, pick.position, pick.mean]
        else:
            mm = [
                float(np.mean([s.shape for s in scored])),
                float(np.mean([s.direction for s in scored])),
                float(np.mean([s.length for s in scored])),
                float(np.mean([s.position for s in scored])),
                float(np.mean([s.mean for s in scored])),
            ]
        return [
            manifest.image_id(i),
            mm[0], mm[1], mm[2], mm[3], mm[4],
            spm.nss_scanpath(pred, gt.values),
            spm.congruency(pred, gt.values, percentile=args.congruency_percentile),
        ]

    with ThreadPoolExecutor(max_workers=_workers(max(1, len(jobs)))) as ex:
        rows = list(ex.map(one, jobs))
    _write_report(args.out, SCANPATH_COLS, rows)
    return 1 if missing else 0


def cmd_stats(args) -> int:
    manifest = dio.load_manifest(args.manifest)
    print(json.dumps(dio.length_stats(manifest), indent=1))
    return 0


def cmd_gen_synth(args) -> int:
    try:
        w, h = (int(t) for t in args.size.lower().split("x"))
    except ValueError:
        raise SalypathError(f"--size must look like 64x64, got {args.size!r}")
    lw = None
    if args.length_weights:
        lw = {}
        for part in args.length_weights.split(","):
            k, _, v = part.partition(":")
            lw[int(k)] = float(v)
    manifest = dio.generate_synthetic(
        n=args.n, seed=args.seed, size=(w, h), out_dir=args.out,
        scanpaths_per_image=args.scanpaths_per_image,
        length_weights=lw, min_center_dist=args.min_center_dist,
    )
    print(f"wrote {len(manifest)} records under {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="salypath",
        description="Saliency-map and scanpath prediction toolkit.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on a dataset manifest")
    p.add_argument("--data", required=True, help="dataset manifest JSON")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--preset", choices=["desk", "paper"], default="desk",
                   help="desk: small fast config; paper: full VGG-16 scale at 224x320")
    p.add_argument("--config", help="JSON with optional 'model'/'train' override sections")
    p.add_argument("--report", help="write the per-epoch training report JSON here")
    p.add_argument("--seed", type=int, default=None, help="override the training seed")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="run one image through a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="PPM stimulus")
    p.add_argument("--out-map", required=True, help="PGM saliency output")
    p.add_argument("--out-scanpath", required=True, help="CSV scanpath output")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("eval-saliency", help="score predicted maps against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-dir", required=True,
                   help="directory of <image_id>.pgm predictions")
    p.add_argument("--out", help="report CSV path (default stdout)")
    p.add_argument("--seed", type=int, default=0,
                   help="auc_borji base seed; record i uses seed+i")
    p.add_argument("--borji-splits", type=int, default=100)
    p.set_defaults(fn=cmd_eval_saliency)

    p = sub.add_parser("eval-scanpath", help="score predicted scanpaths against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-dir", required=True,
                   help="directory of <image_id>.csv predictions")
    p.add_argument("--out", help="report CSV path (default stdout)")
    p.add_argument("--gt-reduce", choices=["mean", "best"], default="mean",
                   help="score against all observers (mean) or the closest one (best)")
    p.add_argument("--congruency-percentile", type=float, default=80.0)
    p.set_defaults(fn=cmd_eval_scanpath)

    p = sub.add_parser("stats", help="print scanpath length statistics as JSON")
    p.add_argument("--manifest", required=True)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("gen-synth", help="generate a deterministic synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", default="64x64", help="WxH, default 64x64")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scanpaths-per-image", type=int, default=2)
    p.add_argument("--length-weights", default=None,
                   help="len:weight pairs, e.g. 8:0.7,6:0.2,10:0.1")
    p.add_argument("--min-center-dist", type=float, default=0.0,
                   help="reject blob centers closer than this to the image center")
    p.set_defaults(fn=cmd_gen_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SalypathError, OSError, json.JSONDecodeError) as e:
        print(f"salypath {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
