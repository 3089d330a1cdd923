"""JSON op bridge for out-of-process callers (rangeview-ops console script).

Reads one request object from stdin — {"op": name, "payload": {...}} — runs
the named batch operation, and writes {"ok": true, "result": ...} to stdout.
Failures report {"ok": false, "error": {"type", "message"}} so callers can
surface typed errors. Floats survive the JSON boundary exactly (shortest
round-trip encoding on both sides), so bridged results are numerically
identical to in-process calls.
"""

from __future__ import annotations

import dataclasses
import json
import sys

import numpy as np

from . import __version__, metrics, postprocess, supervision
from .geometry import GroundTruthCuboid, Proposal
from .losses import DenseOutput, classification_loss_grad, regression_loss_grad, VflConfig
from .rangeimage import RangeImage, RangeImageSpec, project
from .simulator import SceneSpec, generate, parse_scene_config, perfect_dense
from .targets import encode_frame


def _image_to_json(image: RangeImage) -> dict:
    return {
        "spec": {
            "height": image.spec.height,
            "width": image.spec.width,
            "inclination_min": image.spec.inclination_min,
            "inclination_max": image.spec.inclination_max,
            "channels": list(image.spec.channels),
        },
        "channels": {name: grid.tolist() for name, grid in image.channels.items()},
        "valid": image.valid.tolist(),
        "dropped_points": image.dropped_points,
    }


def _image_from_json(obj: dict) -> RangeImage:
    spec = obj["spec"]
    ispec = RangeImageSpec(
        int(spec["height"]),
        int(spec["width"]),
        float(spec["inclination_min"]),
        float(spec["inclination_max"]),
        tuple(spec["channels"]),
    )
    channels = {
        name: np.asarray(obj["channels"][name], dtype=np.float64) for name in ispec.channels
    }
    valid = np.asarray(obj["valid"], dtype=bool)
    return RangeImage(ispec, channels, valid, int(obj.get("dropped_points", 0)))


def _proposal_from_json(rec: dict) -> Proposal:
    return Proposal(
        np.array([float(rec["x"]), float(rec["y"]), float(rec["z"])]),
        float(rec["l"]),
        float(rec["w"]),
        float(rec["h"]),
        float(rec["yaw"]),
        category=str(rec["category"]),
        confidence=float(rec["score"]),
        anchor_range=float(rec.get("anchor_range", 0.0)),
    )


def _proposal_to_json(p: Proposal) -> dict:
    return {
        "category": p.category,
        "x": float(p.center[0]),
        "y": float(p.center[1]),
        "z": float(p.center[2]),
        "l": p.length,
        "w": p.width,
        "h": p.height,
        "yaw": p.yaw,
        "score": p.confidence,
        "anchor_range": p.anchor_range,
    }


def _gt_from_json(rec: dict) -> GroundTruthCuboid:
    return GroundTruthCuboid(
        np.array([float(rec["x"]), float(rec["y"]), float(rec["z"])]),
        float(rec["l"]),
        float(rec["w"]),
        float(rec["h"]),
        float(rec["yaw"]),
        category=str(rec["category"]),
        num_interior_points=int(rec.get("num_interior_points", 0)),
    )


def _dense_from_json(obj: dict) -> DenseOutput:
    return DenseOutput(
        np.asarray(obj["logits"], dtype=np.float64),
        np.asarray(obj["regression"], dtype=np.float64),
        tuple(obj["categories"]),
    )


def _vfl_config(obj: dict | None) -> VflConfig:
    obj = obj or {}
    return VflConfig(float(obj.get("alpha", 0.75)), float(obj.get("gamma", 2.0)))


def op_version(payload: dict) -> dict:
    return {"version": __version__}


def op_project(payload: dict) -> dict:
    spec = payload["spec"]
    ispec = RangeImageSpec(
        int(spec["height"]),
        int(spec["width"]),
        float(spec["inclination_min"]),
        float(spec["inclination_max"]),
        tuple(spec.get("channels", ("range", "x", "y", "z", "intensity"))),
    )
    image = project(np.asarray(payload["points"], dtype=np.float64), ispec)
    return {"image": _image_to_json(image)}


def op_simulate(payload: dict) -> dict:
    if "config_text" in payload:
        spec = parse_scene_config(str(payload["config_text"]))
    else:
        spec = SceneSpec()
    if "seed" in payload:
        spec = dataclasses.replace(spec, seed=int(payload["seed"]))
    image, gts = generate(spec)
    return {
        "image": _image_to_json(image),
        "ground_truth": [
            dict(_proposal_to_json(Proposal(g.center, g.length, g.width, g.height, g.yaw,
                                            category=g.category)),
                 num_interior_points=g.num_interior_points)
            for g in gts
        ],
        "categories": list(spec.category_names),
    }


def op_encode_frame(payload: dict) -> dict:
    image = _image_from_json(payload["image"])
    gts = [_gt_from_json(r) for r in payload["ground_truth"]]
    frame = encode_frame(image, gts)
    return {
        "targets": frame.targets.tolist(),
        "gt_index": frame.gt_index.tolist(),
        "fg": frame.fg.tolist(),
    }


def op_perfect_dense(payload: dict) -> dict:
    image = _image_from_json(payload["image"])
    gts = [_gt_from_json(r) for r in payload["ground_truth"]]
    dense = perfect_dense(image, gts, tuple(payload["categories"]))
    return {
        "logits": dense.logits.tolist(),
        "regression": dense.regression.tolist(),
        "categories": list(dense.categories),
    }


def op_compute_targets(payload: dict) -> dict:
    image = _image_from_json(payload["image"])
    gts = [_gt_from_json(r) for r in payload["ground_truth"]]
    dense = _dense_from_json(payload["dense"])
    cfg_obj = payload.get("config", {})
    config = supervision.SupervisionConfig(
        supervision.SupervisionMode(cfg_obj.get("mode", "centerness_3d")),
        float(cfg_obj.get("sigma", 0.75)),
    )
    gt_index = np.asarray(payload["gt_index"], dtype=np.int32)
    q = supervision.compute_targets(dense, image, gt_index, gts, config)
    return {"q": q.tolist()}


def op_classification_loss(payload: dict) -> dict:
    dense = _dense_from_json(payload["dense"])
    q = np.asarray(payload["q"], dtype=np.float64)
    category_grid = np.asarray(payload["category_grid"], dtype=np.int32)
    value, grad = classification_loss_grad(dense, q, category_grid, _vfl_config(payload.get("config")))
    return {"value": value, "grad": grad.tolist()}


def op_regression_loss(payload: dict) -> dict:
    dense = _dense_from_json(payload["dense"])
    targets = np.asarray(payload["targets"], dtype=np.float64)
    gt_index = np.asarray(payload["gt_index"], dtype=np.int32)
    value, grad = regression_loss_grad(dense, targets, gt_index)
    return {"value": value, "grad": grad.tolist()}


def op_rss(payload: dict) -> dict:
    config = postprocess.RssConfig.parse(str(payload.get("partitions", "0:8,30:2,50:1")))
    proposals = [_proposal_from_json(r) for r in payload["proposals"]]
    ranges = np.array([p.anchor_range for p in proposals])
    kept = postprocess.rss_kept_indices(ranges, config)
    return {
        "kept_indices": [int(i) for i in kept],
        "proposals": [_proposal_to_json(proposals[i]) for i in kept],
    }


def op_wnms(payload: dict) -> dict:
    cfg_obj = payload.get("config", {})
    default = postprocess.WnmsConfig()
    config = postprocess.WnmsConfig(
        float(cfg_obj.get("iou_threshold", default.iou_threshold)),
        float(cfg_obj.get("score_threshold", default.score_threshold)),
        int(cfg_obj.get("max_outputs", default.max_outputs)),
    )
    proposals = [_proposal_from_json(r) for r in payload["proposals"]]
    out = postprocess.wnms(proposals, config)
    return {"detections": [_proposal_to_json(p) for p in out]}


def op_evaluate(payload: dict) -> dict:
    dets: dict[str, list[Proposal]] = {}
    for rec in payload["detections"]:
        dets.setdefault(str(rec["frame_id"]), []).append(_proposal_from_json(rec))
    gts: dict[str, list[GroundTruthCuboid]] = {}
    for rec in payload["ground_truth"]:
        gts.setdefault(str(rec["frame_id"]), []).append(_gt_from_json(rec))
    categories = payload.get("categories")
    if categories is None:
        categories = sorted(
            {g.category for frame in gts.values() for g in frame}
            | {d.category for frame in dets.values() for d in frame}
        )
    style = str(payload.get("style", "av2"))
    if style == "av2":
        config = metrics.EvalConfig.av2(tuple(categories))
    elif style == "waymo":
        config = metrics.EvalConfig.waymo(tuple(categories))
    else:
        raise ValueError(f"unknown style {style!r}")
    report = metrics.evaluate(dets, gts, config)
    return {"report": report.to_dict()}


OPS = {
    "version": op_version,
    "project": op_project,
    "simulate": op_simulate,
    "encode_frame": op_encode_frame,
    "perfect_dense": op_perfect_dense,
    "compute_targets": op_compute_targets,
    "classification_loss": op_classification_loss,
    "regression_loss": op_regression_loss,
    "rss": op_rss,
    "wnms": op_wnms,
    "evaluate": op_evaluate,
}


def run_request(request: dict) -> dict:
    op = request.get("op")
    if op not in OPS:
        raise ValueError(f"unknown op {op!r}; valid ops: {', '.join(sorted(OPS))}")
    payload = request.get("payload", {})
    if not isinstance(payload, dict):
        raise ValueError("payload must be a JSON object")
    return OPS[op](payload)


def main(argv=None) -> int:
    try:
        request = json.load(sys.stdin)
        result = run_request(request)
        json.dump({"ok": True, "result": result}, sys.stdout)
        sys.stdout.write("\n")
        return 0
    except Exception as e:  # typed error surface for the bridge client
        json.dump(
            {"ok": False, "error": {"type": type(e).__name__, "message": str(e)}},
            sys.stdout,
        )
        sys.stdout.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
