import math

import numpy as np
import pytest

from reference_eval import evaluate_reference
from rangeview.geometry import GroundTruthCuboid, Proposal
from rangeview.metrics import (
    EvalConfig,
    FrameMatches,
    MatchCriterion,
    average_precision,
    cds,
    evaluate,
    match,
    true_positive_errors,
)


def det(x=0.0, y=0.0, z=0.0, l=4.0, w=2.0, h=1.5, yaw=0.0, score=0.9, category="vehicle"):
    return Proposal(np.array([x, y, z], dtype=float), l, w, h, yaw,
                    category=category, confidence=score)


def gt(x=0.0, y=0.0, z=0.0, l=4.0, w=2.0, h=1.5, yaw=0.0, category="vehicle", pts=50):
    return GroundTruthCuboid(np.array([x, y, z], dtype=float), l, w, h, yaw,
                             category=category, num_interior_points=pts)


def random_scene(rng, n_frames=5, categories=("vehicle", "pedestrian", "cyclist")):
    """Random detections and ground truth with partial overlap."""
    dets, gts = {}, {}
    for f in range(n_frames):
        fid = f"frame{f}"
        frame_gts, frame_dets = [], []
        for _ in range(int(rng.integers(1, 7))):
            cat = categories[int(rng.integers(len(categories)))]
            g = gt(
                x=rng.uniform(-60, 60), y=rng.uniform(-60, 60), z=rng.uniform(-1, 1),
                l=rng.uniform(1, 5), w=rng.uniform(1, 3), h=rng.uniform(1, 2),
                yaw=rng.uniform(-math.pi, math.pi), category=cat,
                pts=int(rng.integers(0, 30)),
            )
            frame_gts.append(g)
            if rng.uniform() < 0.8:  # noisy matching detection
                frame_dets.append(
                    det(
                        x=g.center[0] + rng.normal(0, 0.8),
                        y=g.center[1] + rng.normal(0, 0.8),
                        z=g.center[2] + rng.normal(0, 0.2),
                        l=g.length * rng.uniform(0.7, 1.3),
                        w=g.width * rng.uniform(0.7, 1.3),
                        h=g.height * rng.uniform(0.7, 1.3),
                        yaw=g.yaw + rng.normal(0, 0.4),
                        score=float(rng.uniform(0.1, 1.0)),
                        category=cat,
                    )
                )
        for _ in range(int(rng.integers(0, 4))):  # false positives
            frame_dets.append(
                det(
                    x=rng.uniform(-60, 60), y=rng.uniform(-60, 60),
                    score=float(rng.uniform(0.05, 1.0)),
                    category=categories[int(rng.integers(len(categories)))],
                )
            )
        dets[fid], gts[fid] = frame_dets, frame_gts
    return dets, gts


CATS = ("vehicle", "pedestrian", "cyclist")


class TestMatch:
    def test_perfect_detections_all_tp(self):
        gts = [gt(x=10), gt(x=-20, category="vehicle")]
        dets = [det(x=10), det(x=-20, score=0.8)]
        fm = match(dets, gts, MatchCriterion("distance", 2.0))
        assert len(fm.tp) == 2 and not fm.fp and not fm.fn

    def test_no_detections_all_fn(self):
        fm = match([], [gt(), gt(x=10)], MatchCriterion("distance", 2.0))
        assert fm.fn == [0, 1]

    def test_two_dets_one_gt_higher_score_wins(self):
        dets = [det(x=0.3, score=0.5), det(x=0.1, score=0.9)]
        fm = match(dets, [gt()], MatchCriterion("distance", 2.0))
        assert fm.tp == [(1, 0)]
        assert fm.fp == [0]

    def test_ignored_gt_absorbs_detection(self):
        fm = match([det()], [gt(pts=0)], MatchCriterion("distance", 2.0), gt_ignored=[True])
        assert not fm.tp and not fm.fp and not fm.fn
        assert fm.ignored_dets == [0]

    def test_iou_criterion(self):
        fm = match([det()], [gt()], MatchCriterion("iou", 0.7))
        assert fm.tp == [(0, 0)]
        fm = match([det(x=3.0)], [gt()], MatchCriterion("iou", 0.7))
        assert fm.fp == [0]


class TestAveragePrecision:
    def test_perfect_detector(self):
        fm = FrameMatches(tp=[(0, 0), (1, 1)], fp=[], fn=[], ignored_dets=[],
                          det_scores=[0.9, 0.8])
        assert average_precision([fm], 2) == 1.0

    def test_empty_detections(self):
        fm = FrameMatches(tp=[], fp=[], fn=[0, 1], ignored_dets=[], det_scores=[])
        assert average_precision([fm], 2) == 0.0

    def test_one_tp_then_one_fp_over_two_gts(self):
        fm = FrameMatches(tp=[(0, 0)], fp=[1], fn=[1], ignored_dets=[],
                          det_scores=[0.9, 0.8])
        # precision 1 up to recall 0.5, nothing beyond: 51 of 101 levels
        assert average_precision([fm], 2) == pytest.approx(51 / 101)

    def test_monotone_score_transform_invariance(self):
        rng = np.random.default_rng(0)
        dets_by_frame, gts_by_frame = random_scene(rng)
        config = EvalConfig.av2(CATS)
        base = evaluate(dets_by_frame, gts_by_frame, config)
        squashed = {
            fid: [
                Proposal(d.center, d.length, d.width, d.height, d.yaw,
                         category=d.category, confidence=float(d.confidence**3))
                for d in dets
            ]
            for fid, dets in dets_by_frame.items()
        }
        transformed = evaluate(squashed, gts_by_frame, config)
        for cat in CATS:
            assert transformed.per_category[cat].ap == base.per_category[cat].ap

    def test_appending_low_score_fps_never_raises_ap(self):
        rng = np.random.default_rng(1)
        dets_by_frame, gts_by_frame = random_scene(rng)
        config = EvalConfig.av2(CATS)
        base = evaluate(dets_by_frame, gts_by_frame, config)
        spammed = {
            fid: list(dets) + [det(x=500.0 - i, score=0.01, category="vehicle") for i in range(3)]
            for fid, dets in dets_by_frame.items()
        }
        worse = evaluate(spammed, gts_by_frame, config)
        for cat in CATS:
            assert worse.per_category[cat].ap <= base.per_category[cat].ap + 1e-12

    def test_appending_top_score_tp_never_lowers_ap(self):
        rng = np.random.default_rng(11)
        dets_by_frame, gts_by_frame = random_scene(rng)
        config = EvalConfig.av2(CATS)
        base = evaluate(dets_by_frame, gts_by_frame, config)
        # add one unmatched gt per frame plus a perfect top-score detection
        boosted_dets, boosted_gts = {}, {}
        for fid in gts_by_frame:
            extra = gt(x=70.0, y=70.0, category="vehicle")
            boosted_gts[fid] = list(gts_by_frame[fid]) + [extra]
            boosted_dets[fid] = list(dets_by_frame[fid]) + [
                det(x=70.0, y=70.0, score=1.0, category="vehicle")
            ]
        # against the same gts, the boosted detector's vehicle AP cannot drop
        better = evaluate(boosted_dets, boosted_gts, config)
        baseline = evaluate(dets_by_frame, boosted_gts, config)
        assert better.per_category["vehicle"].ap >= baseline.per_category["vehicle"].ap - 1e-12

    def test_larger_threshold_never_lowers_ap(self):
        rng = np.random.default_rng(2)
        for trial in range(10):
            dets_by_frame, gts_by_frame = random_scene(rng)
            aps = []
            for thr in (0.5, 1.0, 2.0, 4.0):
                config = EvalConfig.av2(CATS, av2_distance_thresholds=(thr,))
                report = evaluate(dets_by_frame, gts_by_frame, config)
                aps.append(report.mean_ap)
            assert all(a <= b + 1e-12 for a, b in zip(aps, aps[1:]))


class TestTruePositiveErrors:
    def test_perfect_pairs(self):
        pairs = [(det(x=5), gt(x=5))]
        ate, ase, aoe = true_positive_errors(pairs)
        assert ate == 0.0 and ase == pytest.approx(0.0) and aoe == 0.0

    def test_uniform_offset(self):
        pairs = [(det(x=1.0), gt()), (det(x=11.0), gt(x=10.0))]
        ate, _, _ = true_positive_errors(pairs)
        assert ate == pytest.approx(1.0)

    def test_halved_dims_scale_error(self):
        pairs = [(det(l=2.0, w=1.0, h=0.75), gt(l=4.0, w=2.0, h=1.5))]
        _, ase, _ = true_positive_errors(pairs)
        assert ase == pytest.approx(1 - 1 / 8)

    def test_no_pairs_absent(self):
        assert true_positive_errors([]) is None


class TestCds:
    CONFIG = EvalConfig.av2(CATS)

    def test_perfect(self):
        assert cds(1.0, 0.0, 0.0, 0.0, self.CONFIG) == 1.0

    def test_zero_ap(self):
        assert cds(0.0, 0.5, 0.5, 0.5, self.CONFIG) == 0.0

    def test_formula(self):
        # AP 0.5 with all unit errors at one half
        assert cds(0.5, 1.0, 0.5, math.pi / 2, self.CONFIG) == pytest.approx(0.25)

    def test_missing_errors_worst_case(self):
        assert cds(0.8, None, None, None, self.CONFIG) == 0.0


class TestEvaluate:
    def test_oracle_scene_perfect(self):
        gts_by_frame = {"f0": [gt(x=10), gt(x=-15, category="pedestrian", l=0.8, w=0.8, h=1.7)]}
        dets_by_frame = {
            "f0": [det(x=10), det(x=-15, category="pedestrian", l=0.8, w=0.8, h=1.7, score=0.7)]
        }
        report = evaluate(dets_by_frame, gts_by_frame, EvalConfig.av2(CATS))
        assert report.mean_ap == 1.0
        assert report.mean_cds == pytest.approx(1.0)

    def test_three_meter_shift_leaves_only_largest_threshold(self):
        gts_by_frame = {"f0": [gt(x=10), gt(x=-30)]}
        dets_by_frame = {
            "f0": [det(x=13), det(x=-27)]  # 3 m offsets: only the 4 m threshold matches
        }
        report = evaluate(dets_by_frame, gts_by_frame, EvalConfig.av2(("vehicle",)))
        assert report.per_category["vehicle"].ap == pytest.approx(0.25)

    def test_waymo_below_iou_threshold_zero(self):
        gts_by_frame = {"f0": [gt()]}
        dets_by_frame = {"f0": [det(x=2.5)]}  # IoU ~ 0.23, below 0.7
        report = evaluate(dets_by_frame, gts_by_frame, EvalConfig.waymo(("vehicle",)))
        assert report.per_category["vehicle"].ap_l1 == 0.0

    def test_waymo_interior_point_filter(self):
        gts_by_frame = {"f0": [gt(pts=4), gt(x=20, pts=5)]}
        dets_by_frame = {"f0": [det(score=0.9), det(x=20, score=0.8)]}
        report = evaluate(dets_by_frame, gts_by_frame, EvalConfig.waymo(("vehicle",)))
        r = report.per_category["vehicle"]
        assert r.num_gts == 1  # the 4-point box is excluded
        assert r.ap_l1 == 1.0  # and its detection is absorbed, not an FP

    def test_unknown_category_error(self):
        gts_by_frame = {"f0": [gt()]}
        dets_by_frame = {"f0": [det(category="unicycle")]}
        with pytest.raises(ValueError, match="unicycle"):
            evaluate(dets_by_frame, gts_by_frame, EvalConfig.av2(("vehicle",)))

    def test_out_of_range_gt_ignored(self):
        config = EvalConfig.av2(("vehicle",), max_range=50.0)
        gts_by_frame = {"f0": [gt(x=10), gt(x=100)]}
        dets_by_frame = {"f0": [det(x=10), det(x=100)]}
        report = evaluate(dets_by_frame, gts_by_frame, config)
        r = report.per_category["vehicle"]
        assert r.num_gts == 1
        assert r.ap == 1.0

    def test_category_without_gts_skipped(self):
        report = evaluate(
            {"f0": [det()]}, {"f0": [gt()]}, EvalConfig.av2(("vehicle", "pedestrian"))
        )
        assert report.per_category["pedestrian"].ap is None
        assert report.mean_ap == report.per_category["vehicle"].ap

    def test_report_json_stable(self):
        rng = np.random.default_rng(3)
        dets_by_frame, gts_by_frame = random_scene(rng)
        config = EvalConfig.av2(CATS)
        a = evaluate(dets_by_frame, gts_by_frame, config).to_json()
        b = evaluate(dets_by_frame, gts_by_frame, config).to_json()
        assert a == b


class TestReferenceEquivalence:
    @pytest.mark.parametrize("style", ["av2", "waymo"])
    def test_matches_brute_force(self, style):
        rng = np.random.default_rng(4)
        for trial in range(10):
            dets_by_frame, gts_by_frame = random_scene(rng)
            config = (
                EvalConfig.av2(CATS) if style == "av2" else EvalConfig.waymo(CATS)
            )
            report = evaluate(dets_by_frame, gts_by_frame, config)
            ref, mean_ap, mean_cds = evaluate_reference(dets_by_frame, gts_by_frame, config)
            for cat in CATS:
                mine, theirs = report.per_category[cat], ref[cat]
                assert mine.num_gts == theirs["num_gts"]
                if mine.num_gts == 0:
                    continue
                if style == "av2":
                    assert mine.ap == pytest.approx(theirs["ap"], abs=1e-9)
                    assert mine.cds == pytest.approx(theirs["cds"], abs=1e-9)
                    if "ate" in theirs:
                        assert mine.ate == pytest.approx(theirs["ate"], abs=1e-9)
                        assert mine.ase == pytest.approx(theirs["ase"], abs=1e-9)
                        assert mine.aoe == pytest.approx(theirs["aoe"], abs=1e-9)
                else:
                    assert mine.ap_l1 == pytest.approx(theirs["ap_l1"], abs=1e-9)
            if mean_ap is None:
                assert report.mean_ap is None
            else:
                assert report.mean_ap == pytest.approx(mean_ap, abs=1e-9)
