"""Command-line interface: synth, train, eval, map, ablate.

A JSON config file (``--config``) can carry any training field; flags
override the file, and the merged effective config is echoed into the
output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import maps
from .data import (
    RasterFormatError,
    RasterScene,
    load_scene,
    read_labels,
    read_raster,
    write_labels,
    write_raster,
)
from .metrics import MetricsReport
from .pipeline import (
    VARIANTS,
    evaluate_model,
    load_model,
    predict_map,
    save_model,
    train_model,
    variant_config,
)
from .synthetic import generate_synthetic_scene

ABLATION_AXES = {
    "k": [1, 5, 10, 15, 20, 25, 30],
    "p": [9, 11, 13, 15, 17, 19],
    "lambda1": [0.001, 0.01, 0.1, 1.0],
    "lambda2": [0.001, 0.01, 0.1, 1.0],
    "coupling": [True, False],
    "fusion": ["concat", "max", "sum"],
}

TRAIN_FIELDS = {
    "hsi": str, "lidar": str, "train_labels": str, "test_labels": str,
    "variant": str, "k": int, "patch": int, "lambda1": float, "lambda2": float,
    "epochs": int, "batch": int, "lr": float, "fusion": str,
    "coupled": bool, "seed": int,
}

TRAIN_DEFAULTS = {
    "variant": "CNN-DF-S", "k": 20, "patch": 11, "lambda1": 0.01,
    "lambda2": 0.01, "epochs": 200, "batch": 64, "lr": 0.001,
    "fusion": None, "coupled": True, "seed": 0,
    "hsi": None, "lidar": None, "train_labels": None, "test_labels": None,
}


def _merge_config(args) -> dict:
    """Defaults <- config file <- command-line flags."""
    cfg = dict(TRAIN_DEFAULTS)
    if getattr(args, "config", None):
        loaded = json.loads(Path(args.config).read_text())
        unknown = set(loaded) - set(TRAIN_FIELDS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for name in TRAIN_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = value
    if getattr(args, "no_coupling", False):
        cfg["coupled"] = False
    return cfg


def _resolve_fusion(cfg: dict) -> dict:
    """Variant wiring wins; an explicit conflicting --fusion is an error."""
    wiring = variant_config(cfg["variant"])
    if cfg["fusion"] is not None and wiring["fusion"] is not None \
            and cfg["fusion"] != wiring["fusion"]:
        raise ValueError(
            f"variant {cfg['variant']} fixes fusion={wiring['fusion']}, got --fusion {cfg['fusion']}")
    out = dict(cfg)
    out["fusion"] = wiring["fusion"] or cfg["fusion"] or "sum"
    out["branch"] = wiring["branch"]
    out["decision_fusion"] = wiring["decision_fusion"]
    return out


def _load_training_scene(cfg: dict) -> RasterScene:
    branch = variant_config(cfg["variant"])["branch"]
    hsi = lidar = None
    if branch in ("both", "hs"):
        if not cfg["hsi"]:
            raise ValueError(f"variant {cfg['variant']} needs --hsi")
        hsi = read_raster(cfg["hsi"])
    if branch in ("both", "lidar"):
        if not cfg["lidar"]:
            raise ValueError(f"variant {cfg['variant']} needs --lidar")
        lidar = read_raster(cfg["lidar"])[:, :, 0]
    if branch == "hs" and cfg["lidar"]:
        print(f"warning: variant {cfg['variant']} ignores the LiDAR raster", file=sys.stderr)
    if branch == "lidar" and cfg["hsi"]:
        print(f"warning: variant {cfg['variant']} ignores the hyperspectral raster", file=sys.stderr)
    if hsi is None:
        hsi = np.zeros(lidar.shape + (1,), dtype=np.float32)
    if lidar is None:
        lidar = np.zeros(hsi.shape[:2], dtype=np.float32)
    return RasterScene(hsi=hsi, lidar=lidar)


def _train_one(cfg: dict, scene: RasterScene, train_pixels):
    k = cfg["k"]
    if variant_config(cfg["variant"])["branch"] == "lidar":
        k = 1  # the zero hyperspectral stand-in has a single band
    return train_model(
        scene, train_pixels, variant=cfg["variant"], n_components=k,
        patch_size=cfg["patch"], lambda1=cfg["lambda1"], lambda2=cfg["lambda2"],
        batch_size=cfg["batch"], learning_rate=cfg["lr"], epochs=cfg["epochs"],
        coupled=cfg["coupled"], fusion=cfg["fusion"] or "sum", seed=cfg["seed"])


def _write_effective_config(out_dir: Path, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.json").write_text(
        json.dumps(cfg, sort_keys=True, indent=2) + "\n")


def _write_train_log(path, log) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "L", "L1", "L2", "L3", "train_OA"])
        for row in log:
            writer.writerow([row["epoch"], f"{row['L']:.6f}", f"{row['L1']:.6f}",
                             f"{row['L2']:.6f}", f"{row['L3']:.6f}", f"{row['train_OA']:.6f}"])


def _print_metrics_table(report: MetricsReport) -> None:
    print(f"{'Class':<10}{'Accuracy (%)':>14}")
    for cid, acc in zip(report.class_ids, report.per_class):
        shown = "n/a" if np.isnan(acc) else f"{acc * 100:.2f}"
        print(f"{cid:<10}{shown:>14}")
    print(f"{'OA (%)':<10}{report.oa * 100:>14.2f}")
    print(f"{'AA (%)':<10}{report.aa * 100:>14.2f}")
    print(f"{'Kappa':<10}{report.kappa:>14.4f}")


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    m, n = _parse_size(args.size)
    result = generate_synthetic_scene(
        n_classes=args.classes, height=m, width=n, n_bands=args.bands,
        seed=args.seed, train_per_class=args.train_per_class,
        test_per_class=args.test_per_class)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_raster(out / "hsi.json", result.scene.hsi)
    write_raster(out / "lidar.json", result.scene.lidar)
    write_labels(out / "train_labels.csv", result.train_pixels)
    write_labels(out / "test_labels.csv", result.test_pixels)
    manifest = dict(result.params)
    manifest["files"] = {
        "hsi": "hsi.json", "lidar": "lidar.json",
        "train_labels": "train_labels.csv", "test_labels": "test_labels.csv",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    print(f"wrote synthetic scene ({args.classes} classes, {m}x{n}, {args.bands} bands) to {out}")
    return 0


def _parse_size(text: str) -> tuple[int, int]:
    match = re.fullmatch(r"(\d+)x(\d+)", text)
    if not match:
        raise ValueError(f"--size must look like 64x64, got {text!r}")
    return int(match.group(1)), int(match.group(2))


def cmd_train(args) -> int:
    cfg = _resolve_fusion(_merge_config(args))
    if not cfg["train_labels"]:
        raise ValueError("training needs --train-labels")
    out = Path(args.out)
    _write_effective_config(out, cfg)
    scene = _load_training_scene(cfg)
    train_pixels = read_labels(cfg["train_labels"])
    started = time.perf_counter()
    model = _train_one(cfg, scene, train_pixels)
    elapsed = time.perf_counter() - started
    save_model(out / "model.ckpt", model)
    _write_train_log(out / "train_log.csv", model.clf.train_log_)
    final = model.clf.train_log_[-1]
    print(f"trained {cfg['variant']} in {elapsed:.1f}s; "
          f"final loss {final['L']:.4f}, train OA {final['train_OA'] * 100:.2f}%")
    print(f"checkpoint: {out / 'model.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.checkpoint)
    scene = _scene_for_model(model, args)
    test_pixels = read_labels(args.test_labels)
    started = time.perf_counter()
    report = evaluate_model(model, scene, test_pixels)
    elapsed = time.perf_counter() - started
    _print_metrics_table(report)
    print(f"evaluated {len(test_pixels)} samples in {elapsed:.2f}s")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(json.dumps(report.to_dict(), sort_keys=True) + "\n")
        print(f"metrics: {out / 'metrics.json'}")
    return 0


def _scene_for_model(model, args) -> RasterScene:
    branch = model.clf.branch
    hsi = lidar = None
    if branch in ("both", "hs"):
        if not args.hsi:
            raise ValueError("this model needs --hsi")
        hsi = read_raster(args.hsi)
    if branch in ("both", "lidar"):
        if not args.lidar:
            raise ValueError("this model needs --lidar")
        lidar = read_raster(args.lidar)[:, :, 0]
    if hsi is None:
        hsi = np.zeros(lidar.shape + (1,), dtype=np.float32)
    if lidar is None:
        lidar = np.zeros(hsi.shape[:2], dtype=np.float32)
    return RasterScene(hsi=hsi, lidar=lidar)


def cmd_map(args) -> int:
    model = load_model(args.checkpoint)
    scene = _scene_for_model(model, args)
    class_map = predict_map(model, scene)
    n_classes = len(model.clf.classes_)
    palette = maps.class_palette(int(model.clf.classes_.max()))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rgb = maps.render_class_map(class_map, palette)
    maps.write_ppm(out / "map.ppm", rgb)
    print(f"map: {out / 'map.ppm'} ({scene.height}x{scene.width}, {n_classes} classes)")
    label_sets = [p for p in (args.train_labels, args.test_labels) if p]
    if label_sets:
        pixels = np.concatenate([read_labels(p) for p in label_sets])
        truth = maps.labels_to_map(pixels, (scene.height, scene.width))
        truth_rgb = maps.render_class_map(truth, palette)
        maps.write_ppm(out / "truth.ppm", truth_rgb)
        maps.write_ppm(out / "comparison.ppm", maps.side_by_side(rgb, truth_rgb))
        print(f"truth: {out / 'truth.ppm'}; side by side: {out / 'comparison.ppm'}")
    return 0


def cmd_ablate(args) -> int:
    if args.axis not in ABLATION_AXES:
        raise ValueError(f"unknown ablation axis {args.axis!r}; choose from {sorted(ABLATION_AXES)}")
    base = _resolve_fusion(_merge_config(args))
    if not base["train_labels"] or not base["test_labels"]:
        raise ValueError("ablation needs --train-labels and --test-labels")
    out = Path(args.out)
    _write_effective_config(out, base)
    scene = _load_training_scene(base)
    train_pixels = read_labels(base["train_labels"])
    test_pixels = read_labels(base["test_labels"])

    rows = []
    for value in ABLATION_AXES[args.axis]:
        cfg = dict(base)
        if args.axis == "k":
            cfg["k"] = value
        elif args.axis == "p":
            cfg["patch"] = value
        elif args.axis in ("lambda1", "lambda2"):
            cfg[args.axis] = value
        elif args.axis == "coupling":
            cfg["coupled"] = value
        elif args.axis == "fusion":
            tag = base["variant"]
            if tag in ("CNN-HS", "CNN-LiDAR"):
                raise ValueError("fusion axis needs a fusion variant")
            cfg["variant"] = tag[:-1] + {"concat": "C", "max": "M", "sum": "S"}[value]
            cfg["fusion"] = value
        model = _train_one(cfg, scene, train_pixels)
        report = evaluate_model(model, scene, test_pixels)
        rows.append((args.axis, value, report.oa))
        print(f"{args.axis}={value}: OA {report.oa * 100:.2f}%")

    with open(out / "sweep.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["axis", "value", "oa"])
        for axis, value, oa in rows:
            writer.writerow([axis, value, f"{oa:.6f}"])
    print(f"sweep: {out / 'sweep.csv'} ({len(rows)} rows)")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--variant", choices=sorted(VARIANTS), help="model variant tag")
    p.add_argument("--hsi", help="hyperspectral raster header (JSON)")
    p.add_argument("--lidar", help="LiDAR raster header (JSON)")
    p.add_argument("--train-labels", dest="train_labels", help="training label CSV")
    p.add_argument("--test-labels", dest="test_labels", help="test label CSV")
    p.add_argument("--k", type=int, help="retained spectral components")
    p.add_argument("--patch", type=int, help="patch size (odd)")
    p.add_argument("--lambda1", type=float, help="weight of the first branch loss")
    p.add_argument("--lambda2", type=float, help="weight of the second branch loss")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--fusion", choices=["concat", "max", "sum"])
    p.add_argument("--no-coupling", action="store_true", help="disable weight sharing")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hslfusion",
        description="Hyperspectral + LiDAR fusion classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled scene")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--size", default="64x64", help="HEIGHTxWIDTH")
    p.add_argument("--bands", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-per-class", dest="train_per_class", type=int, default=40)
    p.add_argument("--test-per-class", dest="test_per_class", type=int, default=60)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model variant")
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on test labels")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--hsi")
    p.add_argument("--lidar")
    p.add_argument("--test-labels", dest="test_labels", required=True)
    p.add_argument("--out", help="directory for metrics.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("map", help="render the full-scene classification map")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--hsi")
    p.add_argument("--lidar")
    p.add_argument("--train-labels", dest="train_labels")
    p.add_argument("--test-labels", dest="test_labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("ablate", help="sweep one axis and report OA per setting")
    p.add_argument("--axis", required=True, choices=sorted(ABLATION_AXES))
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError, RasterFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
