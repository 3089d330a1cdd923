"""Detection evaluation: distance-based and IoU-based AP suites.

Two styles are supported. The distance style matches on 3D center distance,
averages AP over several thresholds, and reports translation / scale /
orientation errors plus a composite score for true positives at the error
threshold. The IoU style matches on gravity-aligned 3D IoU with per-category
thresholds and, in its L1 flavor, only counts ground-truth boxes with enough
interior lidar returns; boxes failing the filter still absorb matching
detections so those are not penalized as false positives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import (
    Cuboid,
    GroundTruthCuboid,
    Proposal,
    center_distance,
    iou_3d,
    iou_3d_aligned,
    yaw_difference,
)


class EvalStyle:
    AV2_DISTANCE = "av2_distance"
    WAYMO_IOU_L1 = "waymo_iou_l1"


@dataclass(frozen=True)
class EvalConfig:
    style: str
    categories: tuple[str, ...]
    av2_distance_thresholds: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    av2_error_threshold: float = 2.0
    ate_normalizer: float = 2.0
    aoe_normalizer: float = math.pi
    waymo_iou_thresholds: Mapping[str, float] = field(
        default_factory=lambda: {"vehicle": 0.7, "pedestrian": 0.5, "cyclist": 0.5}
    )
    waymo_default_iou: float = 0.5
    waymo_min_interior_points: int = 5
    max_range: float = 150.0

    def __post_init__(self):
        if self.style not in (EvalStyle.AV2_DISTANCE, EvalStyle.WAYMO_IOU_L1):
            raise ValueError(f"unknown evaluation style {self.style!r}")
        if not self.categories:
            raise ValueError("at least one category required")
        thr = self.av2_distance_thresholds
        if any(t <= 0 for t in thr) or list(thr) != sorted(thr):
            raise ValueError("distance thresholds must be positive and sorted")
        object.__setattr__(self, "categories", tuple(self.categories))

    @classmethod
    def av2(cls, categories: Sequence[str], **kw) -> "EvalConfig":
        kw.setdefault("max_range", 150.0)
        return cls(EvalStyle.AV2_DISTANCE, tuple(categories), **kw)

    @classmethod
    def waymo(cls, categories: Sequence[str], **kw) -> "EvalConfig":
        kw.setdefault("max_range", 80.0)
        return cls(EvalStyle.WAYMO_IOU_L1, tuple(categories), **kw)

    def iou_threshold(self, category: str) -> float:
        return self.waymo_iou_thresholds.get(category, self.waymo_default_iou)


@dataclass(frozen=True)
class MatchCriterion:
    """True-positive test: center distance <= threshold, or 3D IoU >= threshold."""

    kind: str  # "distance" | "iou"
    threshold: float

    def affinity(self, det: Cuboid, gt: Cuboid) -> float:
        """Higher is better; NaN when the criterion fails."""
        if self.kind == "distance":
            d = center_distance(det, gt)
            return -d if d <= self.threshold else math.nan
        v = iou_3d(det, gt)
        return v if v >= self.threshold else math.nan


@dataclass
class FrameMatches:
    """Greedy matching result for one frame and one category."""

    tp: list[tuple[int, int]]  # (det index, gt index)
    fp: list[int]
    fn: list[int]
    ignored_dets: list[int]
    det_scores: list[float]


def match(dets: Sequence[Proposal], gts: Sequence[GroundTruthCuboid],
          criterion: MatchCriterion, gt_ignored: Sequence[bool] | None = None) -> FrameMatches:
    """Greedy matching: detections in descending score claim the best
    unclaimed ground truth satisfying the criterion; each ground truth matches
    at most one detection. Detections claiming an ignored ground truth are
    dropped from scoring instead of counted as false positives."""
    if gt_ignored is None:
        gt_ignored = [False] * len(gts)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    claimed = [False] * len(gts)
    result = FrameMatches([], [], [], [], [d.confidence for d in dets])
    for i in order:
        best_j, best_aff = -1, -math.inf
        for j, gt in enumerate(gts):
            if claimed[j]:
                continue
            aff = criterion.affinity(dets[i], gt)
            if not math.isnan(aff) and aff > best_aff:
                best_j, best_aff = j, aff
        if best_j < 0:
            result.fp.append(i)
            continue
        claimed[best_j] = True
        if gt_ignored[best_j]:
            result.ignored_dets.append(i)
        else:
            result.tp.append((i, best_j))
    result.fn = [j for j in range(len(gts)) if not claimed[j] and not gt_ignored[j]]
    return result


def average_precision(frames: Sequence[FrameMatches], num_gts: int) -> float:
    """101-point interpolated AP over pooled, score-sorted detections."""
    if num_gts <= 0:
        raise ValueError("average precision needs at least one ground truth")
    rows = []  # (score, frame order, det index, is_tp)
    for f_idx, fm in enumerate(frames):
        tp_set = {i for i, _ in fm.tp}
        for i in tp_set:
            rows.append((fm.det_scores[i], f_idx, i, True))
        for i in fm.fp:
            rows.append((fm.det_scores[i], f_idx, i, False))
    if not rows:
        return 0.0
    rows.sort(key=lambda r: (-r[0], r[1], r[2]))
    tps = np.cumsum([r[3] for r in rows])
    fps = np.cumsum([not r[3] for r in rows])
    recall = tps / num_gts
    precision = tps / (tps + fps)
    return interpolated_ap(recall, precision)


def interpolated_ap(recall: np.ndarray, precision: np.ndarray, points: int = 101) -> float:
    """Mean over `points` evenly spaced recall levels of the best precision
    achieved at or beyond each level."""
    # k/(points-1) rather than linspace: the division rounds the same way the
    # recall ratios do, so exact recall-equals-level ties stay inclusive.
    levels = np.arange(points) / (points - 1)
    # Best precision at recall >= level, computed via a reversed running max.
    order = np.argsort(recall, kind="stable")
    r_sorted = recall[order]
    p_sorted = precision[order]
    p_best = np.maximum.accumulate(p_sorted[::-1])[::-1]
    idx = np.searchsorted(r_sorted, levels, side="left")
    vals = np.where(idx < len(r_sorted), p_best[np.minimum(idx, len(r_sorted) - 1)], 0.0)
    return float(vals.sum() / points)


def true_positive_errors(pairs: Sequence[tuple[Proposal, GroundTruthCuboid]]):
    """(ATE, ASE, AOE) over matched pairs, or None when there are none."""
    if not pairs:
        return None
    ate = float(np.mean([center_distance(d, g) for d, g in pairs]))
    ase = float(np.mean([1.0 - iou_3d_aligned(d, g) for d, g in pairs]))
    aoe = float(np.mean([yaw_difference(d.yaw, g.yaw) for d, g in pairs]))
    return ate, ase, aoe


def cds(ap: float, ate, ase, aoe, config: EvalConfig) -> float:
    """Composite score: AP scaled by the mean normalized true-positive quality.

    Missing errors count as worst case (normalized 1), making the composite 0.
    """
    if ate is None or ase is None or aoe is None:
        units = np.ones(3)
    else:
        units = np.array(
            [
                min(max(ate / config.ate_normalizer, 0.0), 1.0),
                min(max(ase, 0.0), 1.0),
                min(max(aoe / config.aoe_normalizer, 0.0), 1.0),
            ]
        )
    return float(ap * np.mean(1.0 - units))


@dataclass
class CategoryReport:
    category: str
    num_gts: int
    num_dets: int
    ap: float | None = None
    ate: float | None = None
    ase: float | None = None
    aoe: float | None = None
    cds: float | None = None
    ap_l1: float | None = None
    matches: list[dict] = field(default_factory=list)


@dataclass
class EvalReport:
    style: str
    per_category: dict[str, CategoryReport]
    mean_ap: float | None
    mean_cds: float | None

    def to_dict(self) -> dict:
        cats = {}
        for name in sorted(self.per_category):
            r = self.per_category[name]
            cats[name] = {
                "num_gts": r.num_gts,
                "num_dets": r.num_dets,
                "ap": r.ap,
                "ate": r.ate,
                "ase": r.ase,
                "aoe": r.aoe,
                "cds": r.cds,
                "ap_l1": r.ap_l1,
                "matches": r.matches,
            }
        return {
            "style": self.style,
            "mean_ap": self.mean_ap,
            "mean_cds": self.mean_cds,
            "categories": cats,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _in_range(box: Cuboid, max_range: float) -> bool:
    return math.hypot(box.center[0], box.center[1]) <= max_range


def evaluate(dets_by_frame: Mapping[str, Sequence[Proposal]],
             gts_by_frame: Mapping[str, Sequence[GroundTruthCuboid]],
             config: EvalConfig) -> EvalReport:
    """Full per-category report over a set of frames.

    Detections beyond the evaluation range are dropped; ground truths beyond
    it (or, in the L1 style, with too few interior points) are ignored rather
    than dropped, so matching detections are not punished.
    """
    frame_ids = sorted(set(dets_by_frame) | set(gts_by_frame))
    offenders = sorted(
        {d.category for dets in dets_by_frame.values() for d in dets}
        .union(g.category for gts in gts_by_frame.values() for g in gts)
        - set(config.categories)
    )
    if offenders:
        raise ValueError(f"unknown categories: {', '.join(offenders)}")

    per_category: dict[str, CategoryReport] = {}
    for cat in config.categories:
        dets_f = []
        gts_f = []
        ignored_f = []
        for fid in frame_ids:
            dets = [
                d
                for d in dets_by_frame.get(fid, [])
                if d.category == cat and _in_range(d, config.max_range)
            ]
            gts = [g for g in gts_by_frame.get(fid, []) if g.category == cat]
            ignored = [not _in_range(g, config.max_range) for g in gts]
            if config.style == EvalStyle.WAYMO_IOU_L1:
                ignored = [
                    ig or g.num_interior_points < config.waymo_min_interior_points
                    for ig, g in zip(ignored, gts)
                ]
            dets_f.append(dets)
            gts_f.append(gts)
            ignored_f.append(ignored)

        num_gts = sum(
            sum(1 for ig in frame_ignored if not ig) for frame_ignored in ignored_f
        )
        report = CategoryReport(cat, num_gts, sum(len(d) for d in dets_f))
        per_category[cat] = report
        if num_gts == 0:
            continue  # category skipped: nothing to evaluate against

        if config.style == EvalStyle.AV2_DISTANCE:
            aps = []
            for thr in config.av2_distance_thresholds:
                crit = MatchCriterion("distance", thr)
                frames = [
                    match(d, g, crit, ig) for d, g, ig in zip(dets_f, gts_f, ignored_f)
                ]
                aps.append(average_precision(frames, num_gts))
            report.ap = float(np.mean(aps))

            crit = MatchCriterion("distance", config.av2_error_threshold)
            pairs = []
            for fid, d, g, ig in zip(frame_ids, dets_f, gts_f, ignored_f):
                fm = match(d, g, crit, ig)
                for di, gj in fm.tp:
                    pairs.append((d[di], g[gj]))
                    report.matches.append(
                        {
                            "frame_id": fid,
                            "score": d[di].confidence,
                            "distance": center_distance(d[di], g[gj]),
                        }
                    )
            errors = true_positive_errors(pairs)
            if errors is not None:
                report.ate, report.ase, report.aoe = errors
            report.cds = cds(report.ap, report.ate, report.ase, report.aoe, config)
        else:
            crit = MatchCriterion("iou", config.iou_threshold(cat))
            frames = [
                match(d, g, crit, ig) for d, g, ig in zip(dets_f, gts_f, ignored_f)
            ]
            report.ap_l1 = average_precision(frames, num_gts)
            for fid, d, g, fm in zip(frame_ids, dets_f, gts_f, frames):
                for di, gj in fm.tp:
                    report.matches.append(
                        {
                            "frame_id": fid,
                            "score": d[di].confidence,
                            "iou": iou_3d(d[di], g[gj]),
                        }
                    )

    evaluated = [r for r in per_category.values() if r.num_gts > 0]
    if config.style == EvalStyle.AV2_DISTANCE:
        mean_ap = float(np.mean([r.ap for r in evaluated])) if evaluated else None
        mean_cds = float(np.mean([r.cds for r in evaluated])) if evaluated else None
    else:
        mean_ap = float(np.mean([r.ap_l1 for r in evaluated])) if evaluated else None
        mean_cds = None
    return EvalReport(config.style, per_category, mean_ap, mean_cds)
