"""Dense outputs to final detections: extraction, range subsampling, weighted NMS.

Proposals flow through a structure-of-arrays container (ProposalSet) so the
per-pixel stages stay vectorized; the scalar Proposal type appears only at the
API edges. Every stage is deterministic: identical inputs give bit-identical
outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (
    Proposal,
    _bev_corners_arrays,
    iou_bev_one_to_many,
    wrap_angle,
)
from .losses import DenseOutput, sigmoid
from .rangeimage import RangeImage
from .targets import decode_batch


@dataclass(frozen=True)
class RssConfig:
    """Contiguous half-open range partitions with an integer keep-stride each.

    The first partition starts at 0 and the last is unbounded. The default
    mirrors the detection pipeline this library targets: heavy subsampling up
    close where returns are dense, none at far range.
    """

    partitions: tuple[tuple[float, int], ...] = ((0.0, 8), (30.0, 2), (50.0, 1))

    def __post_init__(self):
        if not self.partitions:
            raise ValueError("at least one partition required")
        parts = tuple((float(s), int(k)) for s, k in self.partitions)
        if parts[0][0] != 0.0:
            raise ValueError("partitions must start at range 0")
        starts = [s for s, _ in parts]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("partition starts must be strictly increasing")
        if any(k < 1 for _, k in parts):
            raise ValueError("strides must be >= 1")
        object.__setattr__(self, "partitions", parts)

    @classmethod
    def parse(cls, text: str) -> "RssConfig":
        """Parse "start:stride[,start:stride...]", e.g. "0:8,30:2,50:1"."""
        parts = []
        for piece in text.split(","):
            try:
                start, stride = piece.split(":")
                parts.append((float(start), int(stride)))
            except ValueError as e:
                raise ValueError(f"bad partition {piece!r} (want start:stride): {e}") from e
        return cls(tuple(parts))

    def partition_of(self, ranges: np.ndarray) -> np.ndarray:
        starts = np.array([s for s, _ in self.partitions])
        return np.maximum(np.searchsorted(starts, ranges, side="right") - 1, 0)

    @property
    def strides(self) -> np.ndarray:
        return np.array([k for _, k in self.partitions], dtype=np.int64)


@dataclass(frozen=True)
class WnmsConfig:
    iou_threshold: float = 0.5
    score_threshold: float = 0.05
    max_outputs: int = 500

    def __post_init__(self):
        if not (0.0 <= self.iou_threshold <= 1.0 and 0.0 <= self.score_threshold <= 1.0):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.max_outputs < 1:
            raise ValueError("max_outputs must be >= 1")


@dataclass(eq=False)
class ProposalSet:
    """Structure-of-arrays view over N proposals, kept in extraction order."""

    centers: np.ndarray  # (N, 3)
    dims: np.ndarray  # (N, 3)
    yaws: np.ndarray  # (N,)
    scores: np.ndarray  # (N,)
    categories: np.ndarray  # (N,) int32 indices into category_names
    anchor_ranges: np.ndarray  # (N,)
    category_names: tuple[str, ...]

    def __len__(self) -> int:
        return self.centers.shape[0]

    def subset(self, idx) -> "ProposalSet":
        return ProposalSet(
            self.centers[idx],
            self.dims[idx],
            self.yaws[idx],
            self.scores[idx],
            self.categories[idx],
            self.anchor_ranges[idx],
            self.category_names,
        )

    def proposal(self, i: int) -> Proposal:
        return Proposal(
            self.centers[i].copy(),
            float(self.dims[i, 0]),
            float(self.dims[i, 1]),
            float(self.dims[i, 2]),
            float(self.yaws[i]),
            category=self.category_names[self.categories[i]],
            confidence=float(self.scores[i]),
            anchor_range=float(self.anchor_ranges[i]),
        )

    def to_proposals(self) -> list[Proposal]:
        return [self.proposal(i) for i in range(len(self))]

    @classmethod
    def from_proposals(cls, proposals: Sequence[Proposal]) -> "ProposalSet":
        names = tuple(dict.fromkeys(p.category for p in proposals))
        lookup = {n: i for i, n in enumerate(names)}
        n = len(proposals)
        centers = np.zeros((n, 3))
        dims = np.zeros((n, 3))
        yaws = np.zeros(n)
        scores = np.zeros(n)
        cats = np.zeros(n, dtype=np.int32)
        ranges = np.zeros(n)
        for i, p in enumerate(proposals):
            centers[i] = p.center
            dims[i] = (p.length, p.width, p.height)
            yaws[i] = p.yaw
            scores[i] = p.confidence
            cats[i] = lookup[p.category]
            ranges[i] = p.anchor_range
        return cls(centers, dims, yaws, scores, cats, ranges, names)


def extract_proposals(dense: DenseOutput, image: RangeImage, score_threshold: float) -> ProposalSet:
    """Decode one proposal per valid pixel whose best sigmoid score passes the
    threshold. Output order is row-major pixel order."""
    h, w = image.spec.shape
    if dense.shape != (h, w):
        raise ValueError(f"dense output shape {dense.shape} does not match image {(h, w)}")

    rows, cols = np.nonzero(image.valid)
    logits = dense.logits[rows, cols]
    cats = np.argmax(logits, axis=1).astype(np.int32)
    scores = sigmoid(logits[np.arange(rows.size), cats])
    keep = scores >= score_threshold
    rows, cols, cats, scores = rows[keep], cols[keep], cats[keep], scores[keep]

    anchors = np.stack(
        [
            image.channels["x"][rows, cols],
            image.channels["y"][rows, cols],
            image.channels["z"][rows, cols],
        ],
        axis=1,
    )
    centers, dims, yaws = decode_batch(anchors, dense.regression[rows, cols])
    ranges = image.channels["range"][rows, cols]
    return ProposalSet(centers, dims, yaws, scores, cats, ranges, dense.categories)


def rss_kept_indices(anchor_ranges: np.ndarray, config: RssConfig) -> np.ndarray:
    """Indices surviving range subsampling, in original order.

    Within each range partition, every stride-th proposal of that partition's
    subsequence is kept, starting with its first.
    """
    part = config.partition_of(np.asarray(anchor_ranges, dtype=np.float64))
    strides = config.strides
    kept = []
    for p in range(len(strides)):
        members = np.nonzero(part == p)[0]
        kept.append(members[:: strides[p]])
    if not kept:
        return np.zeros(0, dtype=np.int64)
    return np.sort(np.concatenate(kept))


def rss(proposals, config: RssConfig = RssConfig()):
    """Range subsampling; accepts a ProposalSet or a Proposal sequence and
    returns the matching type with relative order preserved."""
    if isinstance(proposals, ProposalSet):
        return proposals.subset(rss_kept_indices(proposals.anchor_ranges, config))
    ranges = np.array([p.anchor_range for p in proposals])
    keep = rss_kept_indices(ranges, config)
    return [proposals[i] for i in keep]


def _merge_cluster(pset: ProposalSet, members: np.ndarray) -> Proposal:
    """Confidence-weighted average of cluster members.

    Centers and dims average linearly; heading uses the weighted circular mean
    so wrap-around headings combine correctly. The output score is the cluster
    maximum and the anchor range comes from the seed (first member).
    """
    w = pset.scores[members]
    total = w.sum()
    center = (w[:, None] * pset.centers[members]).sum(axis=0) / total
    dims = (w[:, None] * pset.dims[members]).sum(axis=0) / total
    yaw = float(
        np.arctan2((w * np.sin(pset.yaws[members])).sum(), (w * np.cos(pset.yaws[members])).sum())
    )
    return Proposal(
        center,
        float(dims[0]),
        float(dims[1]),
        float(dims[2]),
        wrap_angle(yaw),
        category=pset.category_names[pset.categories[members[0]]],
        confidence=float(w.max()),
        anchor_range=float(pset.anchor_ranges[members[0]]),
    )


def wnms(proposals, config: WnmsConfig = WnmsConfig()) -> list[Proposal]:
    """Weighted non-maximum suppression, per category.

    Greedy highest-score-first clustering by BEV IoU >= iou_threshold; each
    output is the confidence-weighted average of its cluster. Cluster members
    are accumulated in score order, so results do not depend on input
    permutation when scores are distinct (ties fall back to input order). A
    final suppression pass guarantees the pairwise-IoU contract also holds for
    the merged boxes.
    """
    pset = proposals if isinstance(proposals, ProposalSet) else ProposalSet.from_proposals(proposals)
    n = len(pset)
    if n == 0:
        return []

    order = np.lexsort((np.arange(n), -pset.scores))
    merged: list[tuple[float, int, Proposal]] = []
    for cat in np.unique(pset.categories[order]):
        cat_order = order[pset.categories[order] == cat]
        sub = pset.subset(cat_order)
        corners = _bev_corners_arrays(sub.centers[:, :2], sub.dims[:, :2], sub.yaws)
        areas = sub.dims[:, 0] * sub.dims[:, 1]
        active = np.ones(len(cat_order), dtype=bool)
        while active.any():
            seed = int(np.argmax(active))
            cand = np.nonzero(active)[0]
            ious = iou_bev_one_to_many(corners[seed], areas[seed], corners[cand], areas[cand])
            members = cand[ious >= config.iou_threshold]
            if members.size == 0:
                members = np.array([seed])
            merged.append((float(sub.scores[seed]), int(cat_order[seed]), _merge_cluster(sub, members)))
            active[members] = False

    merged.sort(key=lambda t: (-t[0], t[1]))
    outputs: list[Proposal] = []
    kept: dict[str, tuple[list[np.ndarray], list[float]]] = {}
    for _, _, p in merged:
        corners = _bev_corners_arrays(
            p.center[None, :2], np.array([[p.length, p.width]]), np.array([p.yaw])
        )[0]
        area = p.length * p.width
        prev_corners, prev_areas = kept.setdefault(p.category, ([], []))
        if prev_corners:
            ious = iou_bev_one_to_many(
                corners, area, np.stack(prev_corners), np.array(prev_areas)
            )
            if np.any(ious >= config.iou_threshold):
                continue
        outputs.append(p)
        prev_corners.append(corners)
        prev_areas.append(area)
        if len(outputs) >= config.max_outputs:
            break
    return outputs


def pipeline(dense: DenseOutput, image: RangeImage,
             rss_config: RssConfig = RssConfig(),
             wnms_config: WnmsConfig = WnmsConfig()) -> list[Proposal]:
    """extract -> range subsampling -> weighted NMS."""
    extracted = extract_proposals(dense, image, wnms_config.score_threshold)
    return wnms(rss(extracted, rss_config), wnms_config)
