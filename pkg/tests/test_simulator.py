import math

import numpy as np
import pytest

from rangeview.geometry import contains_points, iou_bev
from rangeview.postprocess import pipeline
from rangeview.rangeimage import RangeImageSpec, anchor_points, bin_points
from rangeview.simulator import (
    CategoryModel,
    CorruptionSpec,
    SceneSpec,
    corrupt,
    generate,
    parse_scene_config,
    perfect_dense,
    scene_config_text,
)
from rangeview.targets import decode, encode_frame

SMALL = SceneSpec(image=RangeImageSpec(32, 256, -0.35, 0.1), seed=11)


class TestSceneSpecValidation:
    def test_count_bounds(self):
        with pytest.raises(ValueError):
            SceneSpec(min_cuboids=5, max_cuboids=2)

    def test_radius_bounds(self):
        with pytest.raises(ValueError):
            SceneSpec(radius_min=-1.0)
        with pytest.raises(ValueError):
            # radius_min inside the largest footprint: rays could start inside
            SceneSpec(radius_min=1.0)

    def test_ground_below_sensor(self):
        with pytest.raises(ValueError):
            SceneSpec(ground_z=0.5)

    def test_category_model(self):
        with pytest.raises(ValueError):
            CategoryModel("x", 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            CategoryModel("x", 1.0, 1.0, 1.0, jitter=1.5)


class TestGenerate:
    def test_deterministic_in_seed(self):
        a_img, a_gts = generate(SMALL)
        b_img, b_gts = generate(SMALL)
        assert np.array_equal(a_img.valid, b_img.valid)
        for name in a_img.spec.channels:
            assert a_img.channels[name].tobytes() == b_img.channels[name].tobytes()
        assert len(a_gts) == len(b_gts)
        for g, h in zip(a_gts, b_gts):
            assert g.center.tobytes() == h.center.tobytes()
            assert g.num_interior_points == h.num_interior_points

    def test_different_seed_different_scene(self):
        a_img, _ = generate(SMALL)
        b_img, _ = generate(SceneSpec(image=SMALL.image, seed=12))
        assert not np.array_equal(a_img.range, b_img.range)

    def test_empty_scene_ground_off(self):
        spec = SceneSpec(image=RangeImageSpec(8, 32, -0.3, 0.1), seed=0,
                         min_cuboids=1, max_cuboids=1, ground_plane=False,
                         radius_min=400.0, radius_max=500.0)
        image, gts = generate(spec)
        # the lone box sits far outside any meaningful return budget;
        # everything else is invalid because there is no ground
        assert image.num_valid() == sum(g.num_interior_points for g in gts)

    def test_all_invalid_with_no_objects_possible(self):
        # ground off and a box entirely below the field of view
        spec = SceneSpec(
            image=RangeImageSpec(8, 32, 0.2, 0.4),  # looking up
            seed=1, min_cuboids=1, max_cuboids=1, ground_plane=False,
        )
        image, gts = generate(spec)
        assert gts == []
        assert image.num_valid() == 0
        assert np.all(image.range == -1.0)

    def test_returns_contained_in_source_cuboid(self):
        image, gts = generate(SMALL)
        frame = encode_frame(image, gts)
        ap = anchor_points(image)
        # every pixel the casting attributed to an object must be inside it
        for j, g in enumerate(gts):
            rows, cols = np.nonzero(frame.gt_index == j)
            pts = np.stack([image.channels[c][rows, cols] for c in ("x", "y", "z")], axis=1)
            assert contains_points(g, pts).all()

    def test_interior_point_counts_match_containment(self):
        image, gts = generate(SMALL)
        ap = anchor_points(image)
        for g in gts:
            inside = int(contains_points(g, ap.xyz).sum())
            assert inside == g.num_interior_points

    def test_range_equals_point_norm(self):
        image, _ = generate(SMALL)
        ap = anchor_points(image)
        norms = np.linalg.norm(ap.xyz, axis=1)
        assert np.allclose(norms, image.range[ap.rows, ap.cols], atol=1e-6)

    def test_returns_rebin_to_their_pixel(self):
        image, _ = generate(SMALL)
        ap = anchor_points(image)
        rows, cols, _, in_fov = bin_points(ap.xyz, image.spec)
        assert in_fov.all()
        assert np.array_equal(rows, ap.rows)
        assert np.array_equal(cols, ap.cols)

    def test_bev_footprints_disjoint(self):
        for seed in range(5):
            _, gts = generate(SceneSpec(image=SMALL.image, seed=seed))
            for i in range(len(gts)):
                for j in range(i + 1, len(gts)):
                    assert iou_bev(gts[i], gts[j]) == 0.0

    def test_axis_aligned_box_hit_range(self):
        # one box straddling azimuth 0 at 10 m: hit range is the near face
        spec = SceneSpec(
            image=RangeImageSpec(64, 512, -0.35, 0.1),
            seed=0, min_cuboids=1, max_cuboids=1, ground_plane=False,
            radius_min=10.0, radius_max=10.0,
            categories=(CategoryModel("vehicle", 4.0, 2.0, 1.6, jitter=0.0),),
        )
        image, gts = generate(spec)
        assert len(gts) == 1
        g = gts[0]
        # rays through the footprint: range of the closest return at least
        # radius - half diagonal and no farther than the far corner
        rmin = image.range[image.valid].min()
        half_diag = math.hypot(4.0, 2.0) / 2
        assert 10.0 - half_diag <= rmin <= 10.0
        center_range = math.hypot(g.center[0], g.center[1])
        assert center_range == pytest.approx(10.0, abs=1e-9)

    def test_intensity_is_cosine_of_incidence(self):
        image, _ = generate(SMALL)
        vals = image.channels["intensity"][image.valid]
        assert np.all((vals > 0.0) & (vals <= 1.0))

    def test_placement_failure(self):
        spec = SceneSpec(
            image=RangeImageSpec(8, 32, -0.3, 0.1),
            seed=0, min_cuboids=60, max_cuboids=60,
            radius_min=8.0, radius_max=8.5,
            categories=(CategoryModel("vehicle", 4.6, 1.9, 1.7),),
        )
        with pytest.raises(RuntimeError, match="placement failed"):
            generate(spec)


class TestPerfectDense:
    def test_decode_at_foreground_pixels_reproduces_gt(self):
        image, gts = generate(SMALL)
        dense = perfect_dense(image, gts, SMALL.category_names)
        frame = encode_frame(image, gts)
        rows, cols = np.nonzero(frame.fg)
        for r, c in list(zip(rows, cols))[::11]:
            anchor = np.array([image.channels[ch][r, c] for ch in ("x", "y", "z")])
            out = decode(anchor, dense.regression[r, c])
            g = gts[frame.gt_index[r, c]]
            assert np.allclose(out.center, g.center, atol=1e-9)
            assert np.allclose(out.dims, g.dims, atol=1e-9)

    def test_losses_vanish(self):
        from rangeview.losses import total_loss
        from rangeview.supervision import SupervisionConfig, compute_targets

        image, gts = generate(SMALL)
        dense = perfect_dense(image, gts, SMALL.category_names)
        frame = encode_frame(image, gts)
        q = compute_targets(dense, image, frame.gt_index, gts, SupervisionConfig())
        cat_of_gt = np.array([SMALL.category_names.index(g.category) for g in gts])
        category_grid = np.where(frame.fg, cat_of_gt[frame.gt_index], -1).astype(np.int32)
        out = total_loss(dense, frame.targets, q, frame.gt_index, category_grid)
        assert out.total < 1e-6

    def test_pipeline_reproduces_every_gt(self):
        spec = SceneSpec(seed=21)  # full default resolution
        image, gts = generate(spec)
        dense = perfect_dense(image, gts, spec.category_names)
        dets = pipeline(dense, image)
        assert len(dets) == len(gts)

    def test_unknown_category_error(self):
        image, gts = generate(SMALL)
        with pytest.raises(ValueError, match="not in category list"):
            perfect_dense(image, gts, ("only_one",))


class TestCorrupt:
    def test_zero_noise_identity(self):
        image, gts = generate(SMALL)
        dense = perfect_dense(image, gts, SMALL.category_names)
        out = corrupt(dense, CorruptionSpec(), seed=5)
        assert np.array_equal(out.logits, dense.logits)
        assert np.array_equal(out.regression, dense.regression)

    def test_deterministic(self):
        image, gts = generate(SMALL)
        dense = perfect_dense(image, gts, SMALL.category_names)
        spec = CorruptionSpec(offset_sigma=0.3)
        a = corrupt(dense, spec, seed=5)
        b = corrupt(dense, spec, seed=5)
        assert np.array_equal(a.regression, b.regression)
        c = corrupt(dense, spec, seed=6)
        assert not np.array_equal(a.regression, c.regression)

    def test_scaling_reuses_draws(self):
        image, gts = generate(SMALL)
        dense = perfect_dense(image, gts, SMALL.category_names)
        spec = CorruptionSpec(offset_sigma=0.1)
        a = corrupt(dense, spec, seed=5)
        b = corrupt(dense, spec.scaled(2.0), seed=5)
        da = a.regression - dense.regression
        db = b.regression - dense.regression
        assert np.allclose(db, 2.0 * da)

    def test_center_noise_lowers_centerness(self):
        from rangeview.supervision import SupervisionConfig, compute_targets

        image, gts = generate(SMALL)
        dense = perfect_dense(image, gts, SMALL.category_names)
        frame = encode_frame(image, gts)
        noisy = corrupt(dense, CorruptionSpec(offset_sigma=0.2), seed=5)
        q = compute_targets(noisy, image, frame.gt_index, gts, SupervisionConfig())
        assert np.all(q[frame.fg] < 1.0)


class TestSceneConfig:
    def test_round_trip(self):
        spec = SceneSpec(seed=9, radius_max=40.0, max_cuboids=7)
        parsed = parse_scene_config(scene_config_text(spec))
        assert parsed == spec

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown key"):
            parse_scene_config("bogus = 1\n")

    def test_duplicate_key(self):
        with pytest.raises(ValueError, match="duplicate"):
            parse_scene_config("seed = 1\nseed = 2\n")

    def test_bad_boolean(self):
        with pytest.raises(ValueError, match="boolean"):
            parse_scene_config("ground_plane = maybe\n")

    def test_bad_category_syntax(self):
        with pytest.raises(ValueError, match="category"):
            parse_scene_config("categories = vehicle-4x2x2\n")

    def test_comments_and_blanks(self):
        spec = parse_scene_config("# a comment\n\nseed = 3  # trailing\n")
        assert spec.seed == 3

    def test_missing_equals(self):
        with pytest.raises(ValueError, match="key = value"):
            parse_scene_config("seed 3\n")
