#!/usr/bin/env python3
"""Generate parity fixtures for the TypeScript client.

Every expected value is computed by the native library in-process, then
serialized with the same JSON conventions the op endpoint uses. The vitest
parity suite replays the inputs through the rangeview-ops bridge and demands
agreement within 1e-12 (floats) / exactly (integers, strings, orderings).

Run from the frontend directory: python3 fixtures/make_fixtures.py
"""

import json
import math
from pathlib import Path

import numpy as np

from rangeview import __version__
from rangeview.losses import classification_loss_grad, regression_loss_grad
from rangeview.metrics import EvalConfig, evaluate
from rangeview.ops import (
    _gt_from_json,
    _image_to_json,
    _proposal_from_json,
    _proposal_to_json,
)
from rangeview.postprocess import RssConfig, WnmsConfig, rss_kept_indices, wnms
from rangeview.rangeimage import RangeImageSpec, project
from rangeview.simulator import CorruptionSpec, SceneSpec, corrupt, generate, perfect_dense
from rangeview.supervision import SupervisionConfig, SupervisionMode, compute_targets
from rangeview.targets import BACKGROUND, encode_frame

OUT = Path(__file__).with_name("fixtures.json")


def image_json(image):
    return _image_to_json(image)


def gt_record(g, frame_id=None):
    rec = {
        "category": g.category,
        "x": float(g.center[0]),
        "y": float(g.center[1]),
        "z": float(g.center[2]),
        "l": g.length,
        "w": g.width,
        "h": g.height,
        "yaw": g.yaw,
        "num_interior_points": g.num_interior_points,
    }
    if frame_id is not None:
        rec["frame_id"] = frame_id
    return rec


def main():
    fixtures = {"version": __version__}

    # --- project -----------------------------------------------------------
    rng = np.random.default_rng(2024)
    pts = np.column_stack(
        [rng.uniform(-20, 20, (24, 2)), rng.uniform(-4, 2, (24, 1)), rng.uniform(0, 1, (24, 1))]
    )
    pts = pts.astype(np.float32).astype(np.float64)
    proj_spec = RangeImageSpec(6, 24, -0.45, 0.25)
    fixtures["project"] = {
        "input": {
            "points": pts.tolist(),
            "spec": {
                "height": proj_spec.height,
                "width": proj_spec.width,
                "inclination_min": proj_spec.inclination_min,
                "inclination_max": proj_spec.inclination_max,
                "channels": list(proj_spec.channels),
            },
        },
        "expected": {"image": image_json(project(pts, proj_spec))},
    }

    # --- oracle scene shared by the dense-grid ops --------------------------
    scene = SceneSpec(
        image=RangeImageSpec(8, 32, -0.42, 0.1),
        seed=42,
        min_cuboids=2,
        max_cuboids=4,
        radius_min=6.0,
        radius_max=14.0,
    )
    image, gts = generate(scene)
    assert gts, "fixture scene must contain objects"
    dense = perfect_dense(image, gts, scene.category_names)
    noisy = corrupt(
        dense,
        CorruptionSpec(logit_sigma=1.5, offset_sigma=0.25, dims_sigma=0.08, heading_sigma=0.15),
        seed=7,
    )
    frame = encode_frame(image, gts)
    cat_of_gt = np.array([scene.category_names.index(g.category) for g in gts])
    category_grid = np.where(frame.fg, cat_of_gt[frame.gt_index], BACKGROUND).astype(np.int32)

    noisy_json = {
        "logits": noisy.logits.tolist(),
        "regression": noisy.regression.tolist(),
        "categories": list(noisy.categories),
    }
    fixtures["scene"] = {
        "image": image_json(image),
        "ground_truth": [gt_record(g) for g in gts],
        "categories": list(scene.category_names),
    }

    fixtures["encode_frame"] = {
        "expected": {
            "targets": frame.targets.tolist(),
            "gt_index": frame.gt_index.tolist(),
            "fg": frame.fg.tolist(),
        }
    }

    fixtures["perfect_dense"] = {
        "expected": {
            "logits": dense.logits.tolist(),
            "regression": dense.regression.tolist(),
            "categories": list(dense.categories),
        }
    }

    fixtures["compute_targets"] = {
        "input": {"dense": noisy_json, "gt_index": frame.gt_index.tolist()},
        "expected": {
            "centerness_3d": compute_targets(
                noisy, image, frame.gt_index, gts, SupervisionConfig(SupervisionMode.CENTERNESS_3D)
            ).tolist(),
            "iou_bev": compute_targets(
                noisy, image, frame.gt_index, gts, SupervisionConfig(SupervisionMode.IOU_BEV)
            ).tolist(),
        },
    }

    q = compute_targets(noisy, image, frame.gt_index, gts, SupervisionConfig())
    cls_value, cls_grad = classification_loss_grad(noisy, q, category_grid)
    fixtures["classification_loss"] = {
        "input": {
            "q": q.tolist(),
            "category_grid": category_grid.tolist(),
            "config": {"alpha": 0.75, "gamma": 2.0},
        },
        "expected": {"value": cls_value, "grad": cls_grad.tolist()},
    }

    reg_value, reg_grad = regression_loss_grad(noisy, frame.targets, frame.gt_index)
    fixtures["regression_loss"] = {
        "expected": {"value": reg_value, "grad": reg_grad.tolist()},
    }

    # --- proposal-level ops --------------------------------------------------
    prop_rng = np.random.default_rng(11)
    scores = prop_rng.permutation(np.linspace(0.1, 0.98, 40))
    proposals = []
    for i in range(40):
        proposals.append(
            {
                "category": ("vehicle", "pedestrian")[int(prop_rng.integers(2))],
                "x": float(prop_rng.uniform(-12, 12)),
                "y": float(prop_rng.uniform(-12, 12)),
                "z": float(prop_rng.uniform(-1, 1)),
                "l": float(prop_rng.uniform(1, 5)),
                "w": float(prop_rng.uniform(1, 3)),
                "h": float(prop_rng.uniform(1, 2)),
                "yaw": float(prop_rng.uniform(-math.pi, math.pi)),
                "score": float(scores[i]),
                "anchor_range": float(prop_rng.uniform(0, 70)),
            }
        )
    parsed = [_proposal_from_json(r) for r in proposals]
    partitions = "0:4,30:2,50:1"
    kept = rss_kept_indices(np.array([p.anchor_range for p in parsed]), RssConfig.parse(partitions))
    fixtures["rss"] = {
        "input": {"proposals": proposals, "partitions": partitions},
        "expected": {
            "kept_indices": [int(i) for i in kept],
            "proposals": [_proposal_to_json(parsed[i]) for i in kept],
        },
    }

    wnms_cfg = {"iou_threshold": 0.45, "score_threshold": 0.05, "max_outputs": 100}
    merged = wnms(parsed, WnmsConfig(**wnms_cfg))
    fixtures["wnms"] = {
        "input": {"proposals": proposals, "config": wnms_cfg},
        "expected": {"detections": [_proposal_to_json(p) for p in merged]},
    }

    # --- evaluation -----------------------------------------------------------
    eval_rng = np.random.default_rng(5)
    det_records, gt_records = [], []
    for f in range(2):
        fid = f"frame{f}"
        for _ in range(4):
            cat = ("vehicle", "pedestrian", "cyclist")[int(eval_rng.integers(3))]
            cx, cy = eval_rng.uniform(-40, 40, 2)
            dims = eval_rng.uniform(0.8, 5.0, 3)
            yaw = float(eval_rng.uniform(-math.pi, math.pi))
            gt_records.append(
                {
                    "frame_id": fid,
                    "category": cat,
                    "x": float(cx),
                    "y": float(cy),
                    "z": 0.0,
                    "l": float(dims[0]),
                    "w": float(dims[1]),
                    "h": float(dims[2]),
                    "yaw": yaw,
                    "num_interior_points": int(eval_rng.integers(0, 30)),
                }
            )
            if eval_rng.uniform() < 0.8:
                det_records.append(
                    {
                        "frame_id": fid,
                        "category": cat,
                        "x": float(cx + eval_rng.normal(0, 0.7)),
                        "y": float(cy + eval_rng.normal(0, 0.7)),
                        "z": float(eval_rng.normal(0, 0.2)),
                        "l": float(dims[0] * eval_rng.uniform(0.8, 1.2)),
                        "w": float(dims[1] * eval_rng.uniform(0.8, 1.2)),
                        "h": float(dims[2] * eval_rng.uniform(0.8, 1.2)),
                        "yaw": float(yaw + eval_rng.normal(0, 0.3)),
                        "score": float(eval_rng.uniform(0.1, 1.0)),
                    }
                )

    dets_by_frame, gts_by_frame = {}, {}
    for rec in det_records:
        dets_by_frame.setdefault(rec["frame_id"], []).append(_proposal_from_json(rec))
    for rec in gt_records:
        gts_by_frame.setdefault(rec["frame_id"], []).append(_gt_from_json(rec))
    cats = ("vehicle", "pedestrian", "cyclist")
    fixtures["evaluate"] = {
        "input": {"detections": det_records, "ground_truth": gt_records},
        "expected": {
            "av2": evaluate(dets_by_frame, gts_by_frame, EvalConfig.av2(cats)).to_dict(),
            "waymo": evaluate(dets_by_frame, gts_by_frame, EvalConfig.waymo(cats)).to_dict(),
        },
    }

    OUT.write_text(json.dumps(fixtures) + "\n", encoding="utf-8")
    print(f"wrote {OUT} ({OUT.stat().st_size / 1024:.0f} KiB)")


if __name__ == "__main__":
    main()
