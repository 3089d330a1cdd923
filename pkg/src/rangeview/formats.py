"""File codecs: RVIMG1 range images, RVPTS1 / CSV point clouds, JSON-lines boxes.

All binary layouts are little-endian:

RVIMG1 (range image)
    magic "RVIMG1" | u32 H | u32 W | u32 C | f32 inclination_min |
    f32 inclination_max | C x (u32 byte_len, UTF-8 channel name) |
    C x (H*W f32, row-major) | validity mask packed bits, row-major,
    big bit order, zero-padded to a byte.

RVPTS1 (point cloud)
    magic "RVPTS1" | u32 N | u32 cols (4 or 5) |
    N x cols f32 rows of x, y, z, intensity[, elongation].

CSV point clouds carry the same columns, optionally with a header line.
Detections and ground-truth cuboids are JSON-lines, one object per line.
"""

from __future__ import annotations

import json
import struct
from typing import Sequence

import numpy as np

from .geometry import GroundTruthCuboid, Proposal
from .rangeimage import RangeImage, RangeImageSpec

RVIMG_MAGIC = b"RVIMG1"
RVPTS_MAGIC = b"RVPTS1"

_MAX_DIM = 1 << 20
_MAX_CHANNELS = 1024
_MAX_NAME_BYTES = 4096
_MAX_PIXELS = 1 << 28


class FormatError(ValueError):
    """Malformed or truncated input file."""


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}")
    return data


def _read_u32(f, what: str) -> int:
    return struct.unpack("<I", _read_exact(f, 4, what))[0]


def _read_f32(f, what: str) -> float:
    return struct.unpack("<f", _read_exact(f, 4, what))[0]


def write_range_image(path, image: RangeImage) -> None:
    spec = image.spec
    with open(path, "wb") as f:
        f.write(RVIMG_MAGIC)
        f.write(struct.pack("<III", spec.height, spec.width, len(spec.channels)))
        f.write(struct.pack("<ff", spec.inclination_min, spec.inclination_max))
        for name in spec.channels:
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        for name in spec.channels:
            f.write(image.channels[name].astype("<f4").tobytes(order="C"))
        f.write(np.packbits(image.valid.reshape(-1)).tobytes())


def read_range_image(path) -> RangeImage:
    with open(path, "rb") as f:
        magic = f.read(len(RVIMG_MAGIC))
        if magic != RVIMG_MAGIC:
            raise FormatError("not an RVIMG1 file (bad magic)")
        h = _read_u32(f, "height")
        w = _read_u32(f, "width")
        c = _read_u32(f, "channel count")
        if not (1 <= h <= _MAX_DIM and 1 <= w <= _MAX_DIM and h * w <= _MAX_PIXELS):
            raise FormatError(f"implausible image shape {h}x{w}")
        if not 1 <= c <= _MAX_CHANNELS:
            raise FormatError(f"implausible channel count {c}")
        inc_min = _read_f32(f, "inclination_min")
        inc_max = _read_f32(f, "inclination_max")
        names = []
        for i in range(c):
            n = _read_u32(f, f"channel {i} name length")
            if n > _MAX_NAME_BYTES:
                raise FormatError(f"implausible channel name length {n}")
            try:
                names.append(_read_exact(f, n, "channel name").decode("utf-8"))
            except UnicodeDecodeError as e:
                raise FormatError(f"channel name is not valid UTF-8: {e}") from e
        try:
            spec = RangeImageSpec(h, w, inc_min, inc_max, tuple(names))
        except ValueError as e:
            raise FormatError(str(e)) from e
        grids = {}
        for name in names:
            raw = _read_exact(f, 4 * h * w, f"channel {name!r} data")
            grids[name] = (
                np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(h, w)
            )
        mask_bytes = (h * w + 7) // 8
        raw = _read_exact(f, mask_bytes, "validity mask")
        valid = (
            np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=h * w)
            .astype(bool)
            .reshape(h, w)
        )
        return RangeImage(spec, grids, valid)


def write_points(path, points: np.ndarray) -> None:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] not in (4, 5):
        raise ValueError("point array must have 4 or 5 columns")
    with open(path, "wb") as f:
        f.write(RVPTS_MAGIC)
        f.write(struct.pack("<II", pts.shape[0], pts.shape[1]))
        f.write(pts.astype("<f4").tobytes(order="C"))


def read_points(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(len(RVPTS_MAGIC))
        if magic != RVPTS_MAGIC:
            raise FormatError("not an RVPTS1 file (bad magic)")
        n = _read_u32(f, "point count")
        cols = _read_u32(f, "column count")
        if cols not in (4, 5):
            raise FormatError(f"point files carry 4 or 5 columns, got {cols}")
        if n > _MAX_PIXELS:
            raise FormatError(f"implausible point count {n}")
        raw = _read_exact(f, 4 * n * cols, "point data")
        return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, cols)


def write_points_csv(path, points: np.ndarray) -> None:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] not in (4, 5):
        raise ValueError("point array must have 4 or 5 columns")
    header = "x,y,z,intensity" + (",elongation" if pts.shape[1] == 5 else "")
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for row in pts:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def read_points_csv(path) -> np.ndarray:
    rows = []
    width = None
    first_data_line = True
    with open(path, "r", encoding="utf-8", errors="strict") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            try:
                vals = [float(c) for c in cells]
            except ValueError as e:
                if first_data_line:
                    first_data_line = False
                    continue  # header line
                raise FormatError(f"line {lineno}: not numeric CSV: {e}") from e
            first_data_line = False
            if len(vals) not in (4, 5):
                raise FormatError(f"line {lineno}: expected 4 or 5 columns, got {len(vals)}")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise FormatError(f"line {lineno}: inconsistent column count")
            rows.append(vals)
    if not rows:
        raise FormatError("no points in CSV file")
    return np.array(rows, dtype=np.float64)


def load_points(path) -> np.ndarray:
    """Read a point cloud, sniffing RVPTS1 binary versus CSV."""
    with open(path, "rb") as f:
        head = f.read(len(RVPTS_MAGIC))
    if head == RVPTS_MAGIC:
        return read_points(path)
    try:
        return read_points_csv(path)
    except UnicodeDecodeError as e:
        raise FormatError(f"not an RVPTS1 or CSV point file: {e}") from e


def detection_record(frame_id: str, p: Proposal) -> dict:
    return {
        "frame_id": frame_id,
        "category": p.category,
        "x": float(p.center[0]),
        "y": float(p.center[1]),
        "z": float(p.center[2]),
        "l": p.length,
        "w": p.width,
        "h": p.height,
        "yaw": p.yaw,
        "score": p.confidence,
    }


def write_detections(path, dets_by_frame: dict[str, Sequence[Proposal]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for frame_id in dets_by_frame:
            for p in dets_by_frame[frame_id]:
                f.write(json.dumps(detection_record(frame_id, p)) + "\n")


def _parse_jsonl(path):
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"line {lineno}: invalid JSON: {e}") from e
            if not isinstance(rec, dict):
                raise FormatError(f"line {lineno}: expected a JSON object")
            yield lineno, rec


def _box_fields(rec: dict, lineno: int):
    try:
        frame = str(rec["frame_id"])
        cat = str(rec["category"])
        center = np.array([float(rec["x"]), float(rec["y"]), float(rec["z"])])
        dims = (float(rec["l"]), float(rec["w"]), float(rec["h"]))
        yaw = float(rec["yaw"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"line {lineno}: bad box record: {e}") from e
    return frame, cat, center, dims, yaw


def read_detections(path) -> dict[str, list[Proposal]]:
    out: dict[str, list[Proposal]] = {}
    for lineno, rec in _parse_jsonl(path):
        frame, cat, center, dims, yaw = _box_fields(rec, lineno)
        try:
            score = float(rec["score"])
            p = Proposal(center, *dims, yaw, category=cat, confidence=score)
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"line {lineno}: bad detection: {e}") from e
        out.setdefault(frame, []).append(p)
    return out


def ground_truth_record(frame_id: str, g: GroundTruthCuboid) -> dict:
    return {
        "frame_id": frame_id,
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


def write_ground_truth(path, gts_by_frame: dict[str, Sequence[GroundTruthCuboid]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for frame_id in gts_by_frame:
            for g in gts_by_frame[frame_id]:
                f.write(json.dumps(ground_truth_record(frame_id, g)) + "\n")


def read_ground_truth(path) -> dict[str, list[GroundTruthCuboid]]:
    out: dict[str, list[GroundTruthCuboid]] = {}
    for lineno, rec in _parse_jsonl(path):
        frame, cat, center, dims, yaw = _box_fields(rec, lineno)
        try:
            npts = int(rec.get("num_interior_points", 0))
            g = GroundTruthCuboid(
                center, *dims, yaw, category=cat, num_interior_points=npts
            )
        except (TypeError, ValueError) as e:
            raise FormatError(f"line {lineno}: bad ground-truth record: {e}") from e
        out.setdefault(frame, []).append(g)
    return out
