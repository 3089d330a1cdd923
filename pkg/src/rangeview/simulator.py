"""Synthetic lidar scenes: ray-cast cuboids + ground plane, plus a perfect
predictor whose dense output decodes exactly to the ground truth.

Rays leave the origin through pixel-bin centers, so simulated returns re-bin
to their source pixel exactly and round-trip tests stay bitwise. Placement
keeps objects in disjoint azimuth sectors, which both prevents BEV overlap and
guarantees nothing is occluded by another object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .geometry import Cuboid, GroundTruthCuboid, bev_corners
from .losses import DenseOutput
from .rangeimage import RangeImage, RangeImageSpec, bin_centers
from .targets import BACKGROUND, encode_frame

# Logit magnitude used by the perfect predictor; saturates the sigmoid without
# overflowing downstream math.
ORACLE_LOGIT = 20.0

_PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class CategoryModel:
    """Base box dimensions for one object category, with relative jitter."""

    name: str
    length: float
    width: float
    height: float
    jitter: float = 0.1

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise ValueError("category dimensions must be positive")
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError("jitter must lie in [0, 1)")


DEFAULT_CATEGORIES = (
    CategoryModel("vehicle", 4.6, 1.9, 1.7),
    CategoryModel("pedestrian", 0.9, 0.9, 1.8),
    CategoryModel("cyclist", 1.8, 0.7, 1.7),
)

DEFAULT_IMAGE_SPEC = RangeImageSpec(64, 512, -0.35, 0.12)


@dataclass(frozen=True)
class SceneSpec:
    """Scene generation parameters; generation is pure in this spec."""

    image: RangeImageSpec = DEFAULT_IMAGE_SPEC
    seed: int = 0
    min_cuboids: int = 4
    max_cuboids: int = 12
    radius_min: float = 8.0
    radius_max: float = 32.0
    ground_plane: bool = True
    ground_z: float = -1.8
    categories: tuple[CategoryModel, ...] = DEFAULT_CATEGORIES
    azimuth_margin: float = 0.03

    def __post_init__(self):
        if not 1 <= self.min_cuboids <= self.max_cuboids:
            raise ValueError("need 1 <= min_cuboids <= max_cuboids")
        if not 0.0 < self.radius_min <= self.radius_max:
            raise ValueError("need 0 < radius_min <= radius_max")
        if self.ground_plane and self.ground_z >= 0.0:
            raise ValueError("ground plane must sit below the sensor (ground_z < 0)")
        if not self.categories:
            raise ValueError("at least one category required")
        half_diag = max(math.hypot(c.length, c.width) / 2 * (1 + c.jitter) for c in self.categories)
        if self.radius_min <= half_diag:
            raise ValueError("radius_min must exceed the largest half footprint diagonal")

    @property
    def category_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.categories)


def _azimuth_interval(cuboid: Cuboid, margin: float):
    """[min, max] azimuth of the footprint corners, or None across the seam."""
    corners = bev_corners(cuboid)
    az = np.arctan2(corners[:, 1], corners[:, 0])
    lo, hi = float(az.min()) - margin, float(az.max()) + margin
    if hi - lo > math.pi:  # straddles the +-pi seam; caller redraws
        return None
    return lo, hi


def _place_cuboids(spec: SceneSpec, rng: np.random.Generator) -> list[Cuboid]:
    count = int(rng.integers(spec.min_cuboids, spec.max_cuboids + 1))
    placed: list[Cuboid] = []
    intervals: list[tuple[float, float]] = []
    for _ in range(_PLACEMENT_ATTEMPTS):
        if len(placed) >= count:
            return placed
        model = spec.categories[int(rng.integers(len(spec.categories)))]
        dims = np.array([model.length, model.width, model.height])
        dims = dims * (1.0 + model.jitter * rng.uniform(-1.0, 1.0, 3))
        radius = float(rng.uniform(spec.radius_min, spec.radius_max))
        azimuth = float(rng.uniform(-math.pi, math.pi))
        yaw = float(rng.uniform(-math.pi, math.pi))
        z = spec.ground_z + dims[2] / 2.0
        center = np.array([radius * math.cos(azimuth), radius * math.sin(azimuth), z])
        cand = Cuboid(center, *dims, yaw, category=model.name)
        interval = _azimuth_interval(cand, spec.azimuth_margin)
        if interval is None:
            continue
        if any(interval[0] < hi and lo < interval[1] for lo, hi in intervals):
            continue
        placed.append(cand)
        intervals.append(interval)
    raise RuntimeError("placement failed")


def _ray_directions(image_spec: RangeImageSpec) -> np.ndarray:
    az, incl = bin_centers(image_spec)
    caz, saz = np.cos(az), np.sin(az)
    cin, sin_ = np.cos(incl), np.sin(incl)
    dirs = np.empty((image_spec.height, image_spec.width, 3))
    dirs[:, :, 0] = cin[:, None] * caz[None, :]
    dirs[:, :, 1] = cin[:, None] * saz[None, :]
    dirs[:, :, 2] = sin_[:, None] * np.ones_like(caz)[None, :]
    return dirs.reshape(-1, 3)


def _slab_hits(cuboid: Cuboid, dirs: np.ndarray):
    """Ray-box slab test from the origin. Returns (t, cos_incidence, hit)."""
    c, s = math.cos(cuboid.yaw), math.sin(cuboid.yaw)
    # Origin and directions in the box frame.
    ox = -(c * cuboid.center[0] + s * cuboid.center[1])
    oy = -(-s * cuboid.center[0] + c * cuboid.center[1])
    oz = -cuboid.center[2]
    d_local = np.empty_like(dirs)
    d_local[:, 0] = c * dirs[:, 0] + s * dirs[:, 1]
    d_local[:, 1] = -s * dirs[:, 0] + c * dirs[:, 1]
    d_local[:, 2] = dirs[:, 2]
    origin = np.array([ox, oy, oz])
    half = cuboid.dims / 2.0

    d_safe = np.where(np.abs(d_local) < 1e-300, 1e-300, d_local)
    t1 = (-half - origin) / d_safe
    t2 = (half - origin) / d_safe
    t_lo = np.minimum(t1, t2)
    t_hi = np.maximum(t1, t2)
    enter_axis = np.argmax(t_lo, axis=1)
    t_enter = np.take_along_axis(t_lo, enter_axis[:, None], axis=1)[:, 0]
    t_exit = t_hi.min(axis=1)
    hit = (t_exit >= t_enter) & (t_enter > 0.0)
    cos_inc = np.abs(np.take_along_axis(d_local, enter_axis[:, None], axis=1)[:, 0])
    return t_enter, cos_inc, hit


def generate(spec: SceneSpec) -> tuple[RangeImage, list[GroundTruthCuboid]]:
    """Ray-cast a scene. Each pixel keeps the nearest positive hit; ground
    plane hits fill the background. Cuboids that receive no return are
    dropped from the ground-truth list (the image is unaffected by them)."""
    rng = np.random.default_rng(spec.seed)
    cuboids = _place_cuboids(spec, rng)
    dirs = _ray_directions(spec.image)
    n_px = dirs.shape[0]

    best_t = np.full(n_px, np.inf)
    best_cos = np.zeros(n_px)
    best_obj = np.full(n_px, BACKGROUND, dtype=np.int64)
    for j, cub in enumerate(cuboids):
        t, cos_inc, hit = _slab_hits(cub, dirs)
        better = hit & (t < best_t)
        best_t[better] = t[better]
        best_cos[better] = cos_inc[better]
        best_obj[better] = j

    if spec.ground_plane:
        down = dirs[:, 2] < 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t_ground = np.where(down, spec.ground_z / dirs[:, 2], np.inf)
        better = t_ground < best_t
        best_t[better] = t_ground[better]
        best_cos[better] = np.abs(dirs[better, 2])
        best_obj[better] = BACKGROUND

    h, w = spec.image.shape
    valid = np.isfinite(best_t).reshape(h, w)
    t_flat = np.where(np.isfinite(best_t), best_t, 0.0)
    points = t_flat[:, None] * dirs
    grids = {name: np.zeros((h, w)) for name in spec.image.channels}
    grids["range"][:] = np.where(valid, t_flat.reshape(h, w), -1.0)
    grids["x"][:] = points[:, 0].reshape(h, w)
    grids["y"][:] = points[:, 1].reshape(h, w)
    grids["z"][:] = points[:, 2].reshape(h, w)
    if "intensity" in grids:
        grids["intensity"][:] = np.where(valid, best_cos.reshape(h, w), 0.0)
    # Any further channels (e.g. elongation) stay zero: not physically modeled.
    image = RangeImage(spec.image, grids, valid)

    hits = np.bincount(best_obj[best_obj >= 0], minlength=len(cuboids))
    gts = [
        GroundTruthCuboid(
            cub.center.copy(),
            cub.length,
            cub.width,
            cub.height,
            cub.yaw,
            category=cub.category,
            num_interior_points=int(hits[j]),
        )
        for j, cub in enumerate(cuboids)
        if hits[j] > 0
    ]
    return image, gts


def perfect_dense(image: RangeImage, gts: Sequence[GroundTruthCuboid],
                  categories: Sequence[str]) -> DenseOutput:
    """Dense output at the training fixed point: saturated logits on the true
    category of every foreground pixel and exact regression targets, so the
    downstream pipeline reproduces every ground truth."""
    cat_index = {name: k for k, name in enumerate(categories)}
    missing = sorted({g.category for g in gts} - set(cat_index))
    if missing:
        raise ValueError(f"ground-truth categories not in category list: {missing}")

    frame = encode_frame(image, gts)
    h, w = image.spec.shape
    logits = np.full((h, w, len(cat_index)), -ORACLE_LOGIT)
    rows, cols = np.nonzero(frame.fg)
    if rows.size:
        gt_channel = np.array([cat_index[g.category] for g in gts], dtype=np.int64)
        logits[rows, cols, gt_channel[frame.gt_index[rows, cols]]] = ORACLE_LOGIT
    return DenseOutput(logits, frame.targets.copy(), tuple(categories))


@dataclass(frozen=True)
class CorruptionSpec:
    """Seeded Gaussian noise levels per dense-output channel group."""

    logit_sigma: float = 0.0
    offset_sigma: float = 0.0
    dims_sigma: float = 0.0
    heading_sigma: float = 0.0

    def scaled(self, factor: float) -> "CorruptionSpec":
        return CorruptionSpec(
            self.logit_sigma * factor,
            self.offset_sigma * factor,
            self.dims_sigma * factor,
            self.heading_sigma * factor,
        )


def corrupt(dense: DenseOutput, noise: CorruptionSpec, seed: int) -> DenseOutput:
    """Additive Gaussian corruption of a dense output.

    The unit noise draws depend only on the seed and shapes, so scaling all
    sigmas scales the exact same perturbation (useful for paired monotonicity
    experiments). Zero sigmas return an identical copy.
    """
    rng = np.random.default_rng(seed)
    logits = dense.logits + noise.logit_sigma * rng.standard_normal(dense.logits.shape)
    reg = dense.regression.copy()
    unit = rng.standard_normal(dense.regression.shape)
    reg[:, :, 0:3] += noise.offset_sigma * unit[:, :, 0:3]
    reg[:, :, 3:6] += noise.dims_sigma * unit[:, :, 3:6]
    reg[:, :, 6:8] += noise.heading_sigma * unit[:, :, 6:8]
    return DenseOutput(logits, reg, dense.categories)


# --- scene spec config files (key = value) ---------------------------------

_SCALAR_KEYS = {
    "seed": int,
    "min_cuboids": int,
    "max_cuboids": int,
    "radius_min": float,
    "radius_max": float,
    "ground_plane": None,  # bool, parsed specially
    "ground_z": float,
    "height": int,
    "width": int,
    "inclination_min": float,
    "inclination_max": float,
    "azimuth_margin": float,
    "dim_jitter": float,
    "channels": None,  # comma list
    "categories": None,  # name:LxWxH comma list
}


def parse_scene_config(text: str) -> SceneSpec:
    """Parse a key = value scene description; unknown keys are errors."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _SCALAR_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val

    def take(key, conv, default):
        if key not in values:
            return default
        try:
            return conv(values[key])
        except ValueError as e:
            raise ValueError(f"bad value for {key!r}: {e}") from e

    def as_bool(v: str) -> bool:
        if v.lower() in ("true", "1", "yes", "on"):
            return True
        if v.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {v!r}")

    jitter = take("dim_jitter", float, 0.1)

    def as_categories(v: str) -> tuple[CategoryModel, ...]:
        models = []
        for item in v.split(","):
            try:
                name, dims = item.split(":")
                l, w, h = (float(x) for x in dims.split("x"))
            except ValueError as e:
                raise ValueError(f"bad category {item!r} (want name:LxWxH): {e}") from e
            models.append(CategoryModel(name.strip(), l, w, h, jitter))
        return tuple(models)

    default = SceneSpec()
    image = RangeImageSpec(
        take("height", int, default.image.height),
        take("width", int, default.image.width),
        take("inclination_min", float, default.image.inclination_min),
        take("inclination_max", float, default.image.inclination_max),
        take("channels", lambda v: tuple(s.strip() for s in v.split(",")), default.image.channels),
    )
    categories = take("categories", as_categories, None)
    if categories is None:
        categories = tuple(replace(c, jitter=jitter) for c in default.categories)
    return SceneSpec(
        image=image,
        seed=take("seed", int, default.seed),
        min_cuboids=take("min_cuboids", int, default.min_cuboids),
        max_cuboids=take("max_cuboids", int, default.max_cuboids),
        radius_min=take("radius_min", float, default.radius_min),
        radius_max=take("radius_max", float, default.radius_max),
        ground_plane=take("ground_plane", as_bool, default.ground_plane),
        ground_z=take("ground_z", float, default.ground_z),
        categories=categories,
        azimuth_margin=take("azimuth_margin", float, default.azimuth_margin),
    )


def scene_config_text(spec: SceneSpec) -> str:
    """Serialize a scene spec back to the key = value format."""
    lines = [
        f"seed = {spec.seed}",
        f"min_cuboids = {spec.min_cuboids}",
        f"max_cuboids = {spec.max_cuboids}",
        f"radius_min = {spec.radius_min!r}",
        f"radius_max = {spec.radius_max!r}",
        f"ground_plane = {'true' if spec.ground_plane else 'false'}",
        f"ground_z = {spec.ground_z!r}",
        f"height = {spec.image.height}",
        f"width = {spec.image.width}",
        f"inclination_min = {spec.image.inclination_min!r}",
        f"inclination_max = {spec.image.inclination_max!r}",
        f"channels = {','.join(spec.image.channels)}",
        "categories = "
        + ",".join(f"{c.name}:{c.length!r}x{c.width!r}x{c.height!r}" for c in spec.categories),
        f"dim_jitter = {spec.categories[0].jitter!r}",
        f"azimuth_margin = {spec.azimuth_margin!r}",
    ]
    return "\n".join(lines) + "\n"
