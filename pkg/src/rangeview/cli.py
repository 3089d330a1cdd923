"""Command-line surface: simulate, project, infer-oracle, eval, bench.

Every command exits 0 on success and 2 on usage or data errors, never with a
traceback on malformed inputs. Each output is accompanied by a JSON run
manifest recording the command, configuration, inputs/outputs, seed, version
and duration, so runs can be replayed bit-identically.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, formats, metrics, postprocess, simulator
from .rangeimage import RangeImageSpec, anchor_points, project

GROUND_TRUTH_FILENAME = "ground_truth.jsonl"
IMAGE_FILENAME = "image.rvimg"


def _write_manifest(path: Path, command: list[str], config: dict, inputs: list[str],
                    outputs: list[str], seed, duration: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "version": __version__,
        "duration_seconds": duration,
    }
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _wnms_config(text: str) -> postprocess.WnmsConfig:
    """Parse "iou_threshold[,score_threshold[,max_outputs]]"."""
    parts = text.split(",")
    if len(parts) > 3:
        raise ValueError("wnms config is iou[,score[,max_outputs]]")
    cfg = postprocess.WnmsConfig()
    iou = float(parts[0])
    score = float(parts[1]) if len(parts) > 1 else cfg.score_threshold
    max_outputs = int(parts[2]) if len(parts) > 2 else cfg.max_outputs
    return postprocess.WnmsConfig(iou, score, max_outputs)


def _load_scene_spec(args) -> simulator.SceneSpec:
    if args.spec is not None:
        spec = simulator.parse_scene_config(Path(args.spec).read_text(encoding="utf-8"))
    else:
        spec = simulator.SceneSpec()
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    return spec


def cmd_simulate(args) -> int:
    start = time.perf_counter()
    spec = _load_scene_spec(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    image, gts = simulator.generate(spec)
    image_path = out_dir / IMAGE_FILENAME
    gt_path = out_dir / GROUND_TRUTH_FILENAME
    formats.write_range_image(image_path, image)
    formats.write_ground_truth(gt_path, {frame_id_for(spec.seed): gts})
    _write_manifest(
        out_dir / "manifest.json",
        _argv(args),
        {"scene": simulator.scene_config_text(spec).splitlines()},
        [args.spec] if args.spec else [],
        [str(image_path), str(gt_path)],
        spec.seed,
        time.perf_counter() - start,
    )
    print(f"wrote {image_path} ({image.num_valid()} valid pixels) and {gt_path} ({len(gts)} boxes)")
    return 0


def frame_id_for(seed: int) -> str:
    return f"scene{seed:06d}"


def cmd_project(args) -> int:
    start = time.perf_counter()
    points = formats.load_points(args.points)
    if args.spec is not None:
        scene = simulator.parse_scene_config(Path(args.spec).read_text(encoding="utf-8"))
        spec = scene.image
    else:
        spec = simulator.DEFAULT_IMAGE_SPEC
    if points.shape[1] >= 5 and "elongation" not in spec.channels:
        spec = RangeImageSpec(
            spec.height, spec.width, spec.inclination_min, spec.inclination_max,
            spec.channels + ("elongation",),
        )
    image = project(points, spec)
    if image.num_valid() == 0:
        print("warning: no points fell inside the field of view", file=sys.stderr)
    out = Path(args.out)
    formats.write_range_image(out, image)
    _write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        _argv(args),
        {
            "height": spec.height,
            "width": spec.width,
            "inclination_min": spec.inclination_min,
            "inclination_max": spec.inclination_max,
            "dropped_points": image.dropped_points,
        },
        [args.points],
        [str(out)],
        None,
        time.perf_counter() - start,
    )
    print(f"wrote {out}: {image.num_valid()} valid pixels, {image.dropped_points} points dropped")
    return 0


def _oracle_outputs(image, gts_by_frame):
    if len(gts_by_frame) != 1:
        raise ValueError("ground-truth file must describe exactly one frame")
    (frame_id, gts), = gts_by_frame.items()
    categories = tuple(sorted({g.category for g in gts}))
    dense = simulator.perfect_dense(image, gts, categories)
    return frame_id, gts, dense


def cmd_infer_oracle(args) -> int:
    start = time.perf_counter()
    image = formats.read_range_image(args.image)
    gts_by_frame = formats.read_ground_truth(args.gt)
    frame_id, gts, dense = _oracle_outputs(image, gts_by_frame)
    rss_cfg = postprocess.RssConfig.parse(args.rss)
    wnms_cfg = _wnms_config(args.wnms)
    dets = postprocess.pipeline(dense, image, rss_cfg, wnms_cfg)
    out = Path(args.out)
    formats.write_detections(out, {frame_id: dets})
    _write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        _argv(args),
        {"rss": args.rss, "wnms": args.wnms},
        [args.image, args.gt],
        [str(out)],
        None,
        time.perf_counter() - start,
    )
    print(f"wrote {out}: {len(dets)} detections from {len(gts)} boxes")
    return 0


def _format_report_table(report: metrics.EvalReport) -> str:
    if report.style == metrics.EvalStyle.AV2_DISTANCE:
        headers = ["category", "gts", "dets", "AP", "ATE", "ASE", "AOE", "CDS"]
        rows = [
            [
                name,
                str(r.num_gts),
                str(r.num_dets),
                _fmt(r.ap),
                _fmt(r.ate),
                _fmt(r.ase),
                _fmt(r.aoe),
                _fmt(r.cds),
            ]
            for name, r in sorted(report.per_category.items())
        ]
        rows.append(["mean", "", "", _fmt(report.mean_ap), "", "", "", _fmt(report.mean_cds)])
    else:
        headers = ["category", "gts", "dets", "AP_L1"]
        rows = [
            [name, str(r.num_gts), str(r.num_dets), _fmt(r.ap_l1)]
            for name, r in sorted(report.per_category.items())
        ]
        rows.append(["mean", "", "", _fmt(report.mean_ap)])
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines)


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def cmd_eval(args) -> int:
    start = time.perf_counter()
    dets = formats.read_detections(args.dets)
    gts = formats.read_ground_truth(args.gt)
    categories = tuple(sorted({g.category for frame in gts.values() for g in frame}))
    if not categories:
        raise ValueError("ground-truth file contains no boxes")
    if args.style == "av2":
        config = metrics.EvalConfig.av2(categories)
    else:
        config = metrics.EvalConfig.waymo(categories)
    report = metrics.evaluate(dets, gts, config)
    out = Path(args.out)
    out.write_text(report.to_json() + "\n", encoding="utf-8")
    _write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        _argv(args),
        {"style": args.style, "categories": list(categories)},
        [args.dets, args.gt],
        [str(out)],
        None,
        time.perf_counter() - start,
    )
    print(_format_report_table(report))
    return 0


BENCH_STAGES = ("project", "extract", "rss", "wnms", "eval")


def cmd_bench(args) -> int:
    image = formats.read_range_image(args.image)
    gt_path = Path(args.image).parent / GROUND_TRUTH_FILENAME
    if not gt_path.exists():
        raise ValueError(f"no sibling {GROUND_TRUTH_FILENAME} next to {args.image}")
    gts_by_frame = formats.read_ground_truth(gt_path)
    frame_id, gts, dense = _oracle_outputs(image, gts_by_frame)

    anchors = anchor_points(image)
    cloud = np.column_stack(
        [anchors.xyz, image.channels["intensity"][anchors.rows, anchors.cols]]
    )
    rss_cfg = postprocess.RssConfig()
    wnms_cfg = postprocess.WnmsConfig()
    config = metrics.EvalConfig.av2(dense.categories)

    samples = {stage: [] for stage in BENCH_STAGES}
    for _ in range(args.repeat):
        t0 = time.perf_counter()
        project(cloud, image.spec)
        t1 = time.perf_counter()
        extracted = postprocess.extract_proposals(dense, image, wnms_cfg.score_threshold)
        t2 = time.perf_counter()
        kept = postprocess.rss(extracted, rss_cfg)
        t3 = time.perf_counter()
        dets = postprocess.wnms(kept, wnms_cfg)
        t4 = time.perf_counter()
        metrics.evaluate({frame_id: dets}, {frame_id: gts}, config)
        t5 = time.perf_counter()
        for stage, dt in zip(BENCH_STAGES, np.diff([t0, t1, t2, t3, t4, t5])):
            samples[stage].append(float(dt))

    result = {}
    for stage in BENCH_STAGES:
        vals = samples[stage]
        mean = statistics.fmean(vals)
        result[stage] = {
            "mean_seconds": mean,
            "stddev_seconds": statistics.pstdev(vals) if len(vals) > 1 else 0.0,
            "ops_per_sec": (1.0 / mean) if mean > 0 else None,
            "samples": len(vals),
        }
    print(json.dumps(result, sort_keys=True, indent=2))
    return 0


def _argv(args) -> list[str]:
    return list(getattr(args, "_argv", []))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rangeview",
        description="Range-view lidar detection pipeline tools",
    )
    parser.add_argument("--version", action="version", version=f"rangeview {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene")
    p.add_argument("--spec", help="scene config file (key = value)")
    p.add_argument("--seed", type=int, help="override the spec RNG seed")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threads", type=int, default=1, help="worker cap (compute is sequential)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("project", help="project a point cloud to a range image")
    p.add_argument("--points", required=True, help="CSV or RVPTS1 point cloud")
    p.add_argument("--spec", help="scene config supplying the image geometry")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("infer-oracle", help="run the pipeline on oracle dense outputs")
    p.add_argument("--image", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--rss", default="0:8,30:2,50:1", help="start:stride[,start:stride...]")
    p.add_argument("--wnms", default="0.5,0.05", help="iou[,score[,max_outputs]]")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_infer_oracle)

    p = sub.add_parser("eval", help="evaluate detections against ground truth")
    p.add_argument("--dets", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--style", choices=("av2", "waymo"), default="av2")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time the non-neural stages on an image")
    p.add_argument("--image", required=True)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    args._argv = argv
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
