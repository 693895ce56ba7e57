"""Command-line entry point: ``panofuse {fuse,eval-pq,eval-miou,synth,bench}``.

Exit codes: 0 success, 1 data or I/O error, 2 usage error. JSON reports go to
files; a short human-readable summary goes to stdout.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from panofuse import __version__
from panofuse.errors import PanofuseError
from panofuse.head import FusionConfig, apply_postprocess, assign
from panofuse.io import (
    SCENE_FILES,
    parse_labels,
    read_detections,
    read_labels,
    read_panoptic,
    read_tensor,
    write_panoptic,
    write_scene,
)
from panofuse.metrics import (
    PqAccumulator,
    compute_pq,
    confusion_matrix,
    match_segments,
    merge_accumulators,
    miou_from_confusion,
)
from panofuse.policies import Policy
from panofuse.synth import DegradationSpec, SceneSpec, default_labels, degrade, generate_scene
from panofuse.types import validate_inputs

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def worker_count() -> int:
    raw = os.environ.get("PANOFUSE_THREADS", "").strip()
    n = int(raw) if raw else 0
    return n if n > 0 else (os.cpu_count() or 1)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(command: str, args: argparse.Namespace, inputs: Sequence, timings: Dict[str, int]) -> dict:
    config = {k: (str(v) if isinstance(v, Path) else v)
              for k, v in sorted(vars(args).items()) if k != "func"}
    return {
        "tool": "panofuse",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "timings_us": timings,
    }


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


def _us(t0: float) -> int:
    return int(round((time.perf_counter() - t0) * 1e6))


def _config(args) -> FusionConfig:
    return FusionConfig(score_threshold=args.score_threshold, policy=Policy(args.policy),
                        unknown_mode=args.unknown_mode,
                        stuff_area_threshold=args.stuff_area_threshold)


def _read_fusion_inputs(labels_path, logits_path, dets_path, centers_path):
    labels, _ = read_labels(labels_path)
    logits = read_tensor(logits_path)
    dets = read_detections(dets_path)
    centers = read_tensor(centers_path) if centers_path else None
    return validate_inputs(labels, logits, dets, centers)


# ---------------------------------------------------------------- fuse

def cmd_fuse(args) -> int:
    if args.policy == Policy.CLOSEST_CENTER.value and not args.centers:
        raise UsageError("--policy cc requires --centers")
    cfg = _config(args)
    inputs = [p for p in (args.labels, args.logits, args.detections, args.centers) if p]
    timings = {}
    t0 = time.perf_counter()
    labels, logits, dets, centers = _read_fusion_inputs(args.labels, args.logits,
                                                        args.detections, args.centers)
    timings["read"] = _us(t0)
    t0 = time.perf_counter()
    pmap = assign(labels, logits, dets, centers, cfg)
    timings["fuse"] = _us(t0)
    t0 = time.perf_counter()
    pmap, report = apply_postprocess(pmap, labels, logits, cfg)
    timings["postprocess"] = _us(t0)
    t0 = time.perf_counter()
    prefix = Path(args.out_prefix)
    if prefix.parent:
        prefix.parent.mkdir(parents=True, exist_ok=True)
    png, js = prefix.with_name(prefix.name + ".png"), prefix.with_name(prefix.name + ".json")
    write_panoptic(pmap, png, js)
    timings["write"] = _us(t0)
    doc = manifest("fuse", args, inputs, timings)
    doc["postprocess"] = {"pixels_voided_unknown": report.pixels_voided_unknown,
                          "stuff_segments_removed": report.stuff_segments_removed}
    doc["outputs"] = [str(png), str(js)]
    write_json(doc, prefix.with_name(prefix.name + ".manifest.json"))
    n_things = sum(1 for s in pmap.segments if s.source_detection is not None)
    print(f"fused {pmap.shape[1]}x{pmap.shape[0]}: {len(pmap.segments)} segments "
          f"({n_things} things), policy {cfg.policy.value}, {timings['fuse']} us -> {png}")
    return EXIT_OK


# ---------------------------------------------------------------- eval

def _pair_stems(gt_dir: Path, pred_dir: Path):
    gt = {p.stem for p in gt_dir.glob("*.png")}
    pred = {p.stem for p in pred_dir.glob("*.png")}
    return sorted(gt & pred), sorted(gt - pred), sorted(pred - gt)


def _pq_shard(job) -> PqAccumulator:
    gt_dir, pred_dir, stems, labels_path = job
    labels, cmap = read_labels(labels_path)
    acc = PqAccumulator()
    for stem in stems:
        gt = read_panoptic(Path(gt_dir) / f"{stem}.png", Path(gt_dir) / f"{stem}.json", cmap)
        pred = read_panoptic(Path(pred_dir) / f"{stem}.png", Path(pred_dir) / f"{stem}.json", cmap)
        acc.add(match_segments(gt, pred, labels))
    return acc


def _confusion_shard(job) -> np.ndarray:
    gt_dir, pred_dir, stems, labels_path = job
    labels, cmap = read_labels(labels_path)
    n = labels.num_classes + 1
    cm = np.zeros((n, n), dtype=np.int64)
    for stem in stems:
        gt = read_panoptic(Path(gt_dir) / f"{stem}.png", Path(gt_dir) / f"{stem}.json", cmap)
        pred = read_panoptic(Path(pred_dir) / f"{stem}.png", Path(pred_dir) / f"{stem}.json", cmap)
        cm += confusion_matrix(gt.class_map(), pred.class_map(), labels.num_classes)
    return cm


def shard(items: Sequence, n: int) -> List[List]:
    """Split into ``n`` contiguous, nearly equal chunks (empty chunks dropped)."""
    n = max(1, min(n, len(items)))
    bounds = np.linspace(0, len(items), n + 1).round().astype(int)
    return [list(items[a:b]) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_shards(fn, jobs):
    if len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=len(jobs)) as ex:
        return list(ex.map(fn, jobs))


def _eval_setup(args):
    gt_dir, pred_dir = Path(args.gt_dir), Path(args.pred_dir)
    for d in (gt_dir, pred_dir):
        if not d.is_dir():
            raise PanofuseError(f"{d} is not a directory")
    labels, _ = read_labels(args.labels)
    stems, missing_pred, missing_gt = _pair_stems(gt_dir, pred_dir)
    if not stems:
        raise PanofuseError("no file names in common between gt and prediction directories")
    if (missing_pred or missing_gt) and not args.allow_missing:
        raise PanofuseError(f"unpaired files: no prediction for {missing_pred}, no gt for {missing_gt}")
    jobs = [(str(gt_dir), str(pred_dir), chunk, str(args.labels))
            for chunk in shard(stems, worker_count())]
    return labels, stems, jobs, {"missing_prediction": missing_pred, "missing_gt": missing_gt}


def cmd_eval_pq(args) -> int:
    t0 = time.perf_counter()
    labels, stems, jobs, missing = _eval_setup(args)
    acc = PqAccumulator()
    for part in _run_shards(_pq_shard, jobs):
        acc = merge_accumulators(acc, part)
    scores = compute_pq(acc, labels)
    report = scores.to_dict(labels)
    report.update(missing)
    report["manifest"] = manifest("eval-pq", args, [args.labels], {"total": _us(t0)})
    if args.out:
        write_json(report, args.out)
    fmt = lambda v: "n/a" if v is None else f"{100 * v:.2f}"
    print(f"PQ {fmt(scores.pq)}  PQ_th {fmt(scores.pq_things)}  PQ_st {fmt(scores.pq_stuff)}"
          f"  over {scores.n_images} images")
    return EXIT_OK


def cmd_eval_miou(args) -> int:
    t0 = time.perf_counter()
    labels, stems, jobs, missing = _eval_setup(args)
    n = labels.num_classes + 1
    cm = np.zeros((n, n), dtype=np.int64)
    for part in _run_shards(_confusion_shard, jobs):
        cm += part
    miou = miou_from_confusion(cm)
    report = {"miou": None if np.isnan(miou) else miou, "n_images": len(stems)}
    report.update(missing)
    report["manifest"] = manifest("eval-miou", args, [args.labels], {"total": _us(t0)})
    if args.out:
        write_json(report, args.out)
    print(f"mIoU {100 * miou:.2f} over {len(stems)} images")
    return EXIT_OK


# ---------------------------------------------------------------- synth

SCENE_KEYS = {"width", "height", "n_things", "thing_size_range", "allow_same_class_overlap",
              "stuff_layout", "max_stuff_regions", "min_band_height"}


def parse_synth_spec(raw) -> Tuple[dict, DegradationSpec, "object"]:
    """Split a synth spec document into scene kwargs, degradation and label space."""
    if not isinstance(raw, dict):
        raise UsageError("synth spec must be a JSON object")
    unknown = set(raw) - SCENE_KEYS - {"labels", "n_stuff_classes", "n_thing_classes", "degradation"}
    if unknown:
        raise UsageError(f"unknown synth spec keys {sorted(unknown)}")
    try:
        if "labels" in raw:
            labels, _ = parse_labels(raw["labels"])
        else:
            labels = default_labels(int(raw.get("n_stuff_classes", 6)),
                                    int(raw.get("n_thing_classes", 6)))
        dspec = DegradationSpec(**raw.get("degradation", {}))
        scene_kw = {k: raw[k] for k in SCENE_KEYS if k in raw}
        SceneSpec(labels=labels, rng_seed=0, **scene_kw)
    except (TypeError, ValueError, PanofuseError) as e:
        raise UsageError(f"invalid synth spec: {e}") from None
    return scene_kw, dspec, labels


def parse_seed_range(text: str) -> range:
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise UsageError(f"bad seed range {text!r}, expected A..B") from None
    if lo < 0 or hi < lo:
        raise UsageError(f"bad seed range {text!r}")
    return range(lo, hi + 1)


def _synth_one(job):
    seed, scene_kw, dspec, labels, out_dir = job
    scene = generate_scene(SceneSpec(labels=labels, rng_seed=seed, **scene_kw))
    logits, dets, centers = degrade(scene, dspec, seed, labels)
    name = f"seed_{seed:06d}"
    write_scene(Path(out_dir) / name, labels, logits, dets, centers, scene.gt)
    gt_dir = Path(out_dir) / "gt"
    write_panoptic(scene.gt, gt_dir / f"{name}.png", gt_dir / f"{name}.json",
                   labels_ref=f"../{name}/{SCENE_FILES['labels']}")
    return name


def cmd_synth(args) -> int:
    try:
        raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read synth spec: {e}") from None
    scene_kw, dspec, labels = parse_synth_spec(raw)
    seeds = parse_seed_range(args.seeds)
    out = Path(args.out_dir)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    jobs = [(s, scene_kw, dspec, labels, str(out)) for s in seeds]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            names = list(ex.map(_synth_one, jobs))
    else:
        names = [_synth_one(j) for j in jobs]
    write_json(manifest("synth", args, [args.spec], {"total": _us(t0)}), out / "manifest.json")
    print(f"wrote {len(names)} scenes to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- bench

def _stats(samples: List[int]) -> dict:
    arr = np.asarray(samples, dtype=np.float64)
    return {"samples": samples, "median": float(np.median(arr)),
            "p90": float(np.percentile(arr, 90)), "min": float(arr.min()), "max": float(arr.max())}


def cmd_bench(args) -> int:
    if args.repeat < 1:
        raise UsageError("--repeat must be >= 1")
    scene = Path(args.scene_dir)
    paths = {k: scene / v for k, v in SCENE_FILES.items()}
    for k in ("labels", "logits", "detections"):
        if not paths[k].is_file():
            raise PanofuseError(f"scene directory lacks {paths[k].name}")
    centers_path = paths["centers"] if paths["centers"].is_file() else None
    if args.policy == Policy.CLOSEST_CENTER.value and centers_path is None:
        raise PanofuseError("policy cc needs centers.pft in the scene directory")
    cfg = _config(args)
    stages = {"read": [], "fuse": [], "postprocess": [], "write": [], "total": []}
    digests = []
    tmp = Path(tempfile.mkdtemp(prefix="panofuse-bench-"))
    try:
        for r in range(args.repeat):
            start = time.perf_counter()
            t0 = start
            labels, logits, dets, centers = _read_fusion_inputs(
                paths["labels"], paths["logits"], paths["detections"], centers_path)
            stages["read"].append(_us(t0))
            t0 = time.perf_counter()
            pmap = assign(labels, logits, dets, centers, cfg)
            stages["fuse"].append(_us(t0))
            t0 = time.perf_counter()
            pmap, _ = apply_postprocess(pmap, labels, logits, cfg)
            stages["postprocess"].append(_us(t0))
            t0 = time.perf_counter()
            png, js = tmp / "out.png", tmp / "out.json"
            write_panoptic(pmap, png, js)
            stages["write"].append(_us(t0))
            stages["total"].append(_us(start))
            digests.append(sha256_file(png) + sha256_file(js))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    report = {stage: _stats(v) for stage, v in stages.items()}
    median_total = report["total"]["median"]
    report["images_per_second"] = 1e6 / median_total if median_total > 0 else None
    report["fuse_images_per_second"] = 1e6 / report["fuse"]["median"] if report["fuse"]["median"] > 0 else None
    report["repeat"] = args.repeat
    report["outputs_identical"] = len(set(digests)) == 1
    report["image_size"] = list(pmap.shape)
    report["n_classes"] = labels.num_classes
    report["n_detections"] = len(dets)
    inputs = [p for p in (paths["labels"], paths["logits"], paths["detections"], centers_path) if p]
    report["manifest"] = manifest("bench", args, inputs,
                                  {k: int(round(v["median"])) for k, v in report.items()
                                   if isinstance(v, dict) and "median" in v})
    if args.out:
        write_json(report, args.out)
    print(f"{args.repeat} runs, policy {cfg.policy.value}: fuse median "
          f"{report['fuse']['median']:.0f} us, total median {median_total:.0f} us "
          f"({report['images_per_second']:.1f} images/s)")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_fusion_flags(p):
    p.add_argument("--policy", choices=[x.value for x in Policy], default="hc")
    p.add_argument("--score-threshold", type=float, default=0.4)
    p.add_argument("--unknown-mode", action="store_true")
    p.add_argument("--stuff-area-threshold", type=int, default=0, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panofuse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"panofuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="fuse logits and detections into a panoptic map")
    p.add_argument("--labels", required=True)
    p.add_argument("--logits", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--centers")
    _add_fusion_flags(p)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_fuse)

    for name, fn in (("eval-pq", cmd_eval_pq), ("eval-miou", cmd_eval_miou)):
        p = sub.add_parser(name, help=f"{name[5:]} over directories of panoptic PNG/JSON pairs")
        p.add_argument("--gt-dir", required=True)
        p.add_argument("--pred-dir", required=True)
        p.add_argument("--labels", required=True)
        p.add_argument("--out")
        p.add_argument("--allow-missing", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("synth", help="write synthetic scenes")
    p.add_argument("--spec", required=True)
    p.add_argument("--seeds", required=True, help="inclusive range A..B")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time the fusion pipeline on one scene")
    p.add_argument("--scene-dir", required=True)
    _add_fusion_flags(p)
    p.add_argument("--repeat", type=int, default=6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"panofuse {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (PanofuseError, OSError) as e:
        print(f"panofuse {args.command}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
