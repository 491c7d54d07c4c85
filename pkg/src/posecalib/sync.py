"""Temporal synchronisation from ground-plane distance signals.

Each camera's ankle positions on its own ground plane are reduced to their
distances from a centroid. That signal does not depend on the unknown
in-plane rotation and translation between cameras, so the frame offset can
be found by a 1D brute-force search. The centroid is either the mean of the
whole sequence or, per candidate offset, the mean of the frames both
cameras cover under that offset.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import EmptyInput, EmptySignal

NOISE = -1


def hungarian_assign(cost) -> list:
    """Minimum-cost matching of size ``min(n, m)`` as ``[(row, col), ...]``."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or 0 in cost.shape:
        return []
    rows, cols = linear_sum_assignment(cost)
    return list(zip(rows.tolist(), cols.tolist()))


def assignment_cost(cost, assignment) -> float:
    cost = np.asarray(cost, dtype=float)
    return float(sum(cost[r, c] for r, c in assignment))


# --------------------------------------------------------------------------
# DBSCAN


def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering; returns labels ``0..k-1`` and ``-1`` for noise.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. Clusters are numbered in order of their first core point
    by index, and a border point joins the first cluster that reaches it.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        raise EmptyInput("no points to cluster")
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be positive and min_pts at least 1")
    neighbours = cKDTree(pts).query_ball_point(pts, eps)
    core = np.array([len(nb) >= min_pts for nb in neighbours])
    labels = np.full(len(pts), NOISE, dtype=int)
    cluster = 0
    for i in range(len(pts)):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        stack = [i]
        while stack:
            j = stack.pop()
            for q in sorted(neighbours[j]):
                if labels[q] != NOISE:
                    continue
                labels[q] = cluster
                if core[q]:
                    stack.append(q)
        cluster += 1
    return labels


def largest_cluster_mask(labels) -> np.ndarray:
    labels = np.asarray(labels)
    valid = labels[labels != NOISE]
    if len(valid) == 0:
        return np.zeros(len(labels), dtype=bool)
    counts = np.bincount(valid)
    # argmax picks the lowest label among ties
    return labels == int(np.argmax(counts))


def dbscan_filter(points, eps: float = 0.5, min_pts: int = 5) -> np.ndarray:
    """Inlier mask keeping only the largest DBSCAN cluster."""
    return largest_cluster_mask(dbscan(points, eps, min_pts))


# --------------------------------------------------------------------------
# distance signals and offset search


@dataclass
class DistanceSignal:
    """Per-frame distances (one array per frame, possibly empty)."""

    values: list

    def __len__(self):
        return len(self.values)

    def is_empty(self) -> bool:
        return all(len(v) == 0 for v in self.values)


@dataclass
class SyncResult:
    delta_t: int
    score: float
    per_offset_costs: np.ndarray
    offsets: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.offsets is None:
            self.offsets = np.arange(len(self.per_offset_costs))


def center_distance_signal(frames) -> DistanceSignal:
    """Distances of every point from the centroid of the whole sequence.

    ``frames`` is a list of ``(n_i, 2)`` arrays of plane points, one per frame.
    """
    frames = [np.asarray(f, dtype=float).reshape(-1, 2) for f in frames]
    if not frames or all(len(f) == 0 for f in frames):
        raise EmptyInput("no ground-plane points in the sequence")
    centre = np.concatenate(frames).mean(axis=0)
    return DistanceSignal([np.linalg.norm(f - centre, axis=1) for f in frames])


def frame_cost(a, b) -> float:
    """Mean matched ``|d_a - d_b|`` between two frames' distance sets."""
    if len(a) == len(b):
        # for equal sizes the optimal 1D matching pairs sorted values
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def offset_cost(ref: DistanceSignal, sync: DistanceSignal, delta: int) -> float:
    """Alignment cost for ``t_ref = t_sync + delta``.

    Sync frames falling past either end of the reference reuse the endpoint
    reference frame.
    """
    last = len(ref) - 1
    total = 0.0
    count = 0
    for t, d_sync in enumerate(sync.values):
        if len(d_sync) == 0:
            continue
        d_ref = ref.values[min(max(t + delta, 0), last)]
        if len(d_ref) == 0:
            continue
        total += frame_cost(d_ref, d_sync)
        count += 1
    return total / count if count else np.inf


def search_time_offset(ref: DistanceSignal, sync: DistanceSignal, max_offset: int | None = None) -> SyncResult:
    """Brute-force the non-negative frame offset minimising the signal mismatch."""
    if len(ref) == 0 or len(sync) == 0 or ref.is_empty() or sync.is_empty():
        raise EmptySignal("both signals need at least one detection")
    if max_offset is None:
        max_offset = len(sync) // 3
    offsets = np.arange(max_offset + 1)
    costs = np.array([offset_cost(ref, sync, int(d)) for d in offsets])
    best = int(np.argmin(costs))  # first minimum -> smallest offset wins ties
    return SyncResult(int(offsets[best]), float(costs[best]), costs, offsets)


def search_time_offset_both(ref: DistanceSignal, sync: DistanceSignal, max_offset: int | None = None) -> SyncResult:
    """Search both signs of the offset and keep the lower-cost direction.

    The returned curve covers offsets ``-max_back .. max_fwd``.
    """
    fwd = search_time_offset(ref, sync, max_offset)
    back = search_time_offset(sync, ref, max_offset)
    offsets = np.concatenate([-back.offsets[:0:-1], fwd.offsets])
    costs = np.concatenate([back.per_offset_costs[:0:-1], fwd.per_offset_costs])
    if back.score < fwd.score:
        return SyncResult(-back.delta_t, back.score, costs, offsets)
    return SyncResult(fwd.delta_t, fwd.score, costs, offsets)


# --------------------------------------------------------------------------
# offset search with the centroid taken over the overlapping frames


class _Track:
    """Per-frame plane points flattened for fast per-offset centring."""

    def __init__(self, frames):
        frames = [np.asarray(f, dtype=float).reshape(-1, 2) for f in frames]
        if not frames or all(len(f) == 0 for f in frames):
            raise EmptySignal("both sequences need at least one ground point")
        self.n = len(frames)
        counts = np.array([len(f) for f in frames])
        self.start = np.concatenate([[0], np.cumsum(counts)])
        self.counts = counts
        self.points = np.concatenate(frames)
        self.frame_of = np.repeat(np.arange(self.n), counts)
        # slot of every point in a (frames, widest frame) table
        self.slot = np.arange(len(self.points)) - self.start[self.frame_of]
        self.width = max(int(counts.max()), 1)

    def centre(self, first: int, last: int) -> np.ndarray:
        """Centroid of the points in frames ``first..last`` (all points if none)."""
        sel = (self.frame_of >= first) & (self.frame_of <= last)
        return self.points[sel].mean(axis=0) if sel.any() else self.points.mean(axis=0)

    def distances(self, centre) -> np.ndarray:
        return np.linalg.norm(self.points - centre, axis=1)

    def sorted_table(self, dist, width: int) -> np.ndarray:
        """Per-frame distances sorted ascending, padded with ``inf``."""
        table = np.full((self.n, width), np.inf)
        table[self.frame_of, self.slot] = dist
        return np.sort(table, axis=1)


def overlap_offset_cost(ref_frames, sync_frames, delta: int) -> float:
    """Alignment cost for ``t_ref = t_sync + delta`` with overlap-centred distances.

    Both sequences are centred on the mean of the points in the frames the
    two share under this offset, which removes the bias a full-sequence mean
    picks up when the cameras cover different time spans. Sync frames past
    either end of the reference reuse the endpoint reference frame.
    """
    ref = ref_frames if isinstance(ref_frames, _Track) else _Track(ref_frames)
    sync = sync_frames if isinstance(sync_frames, _Track) else _Track(sync_frames)
    return _overlap_cost(ref, sync, delta)


def _overlap_cost(ref: _Track, sync: _Track, delta: int) -> float:
    last = ref.n - 1
    lo, hi = max(0, delta), min(last, sync.n - 1 + delta)
    d_ref = ref.distances(ref.centre(lo, hi))
    d_sync = sync.distances(sync.centre(lo - delta, hi - delta))
    rows = np.clip(np.arange(sync.n) + delta, 0, last)
    n_ref, n_sync = ref.counts[rows], sync.counts
    used = (n_ref > 0) & (n_sync > 0)
    if not used.any():
        return np.inf
    # equal sizes: sorted pairing, done for all frames at once
    same = used & (n_ref == n_sync)
    width = max(ref.width, sync.width)
    tab_ref = ref.sorted_table(d_ref, width)[rows[same]]
    tab_sync = sync.sorted_table(d_sync, width)[same]
    filled = np.arange(width)[None, :] < n_sync[same][:, None]
    diff = np.where(filled, np.abs(tab_ref - np.where(filled, tab_sync, 0.0)), 0.0)
    total = float((diff.sum(axis=1) / n_sync[same]).sum())
    for t in np.flatnonzero(used & ~same):
        r = rows[t]
        total += frame_cost(d_ref[ref.start[r]:ref.start[r + 1]], d_sync[sync.start[t]:sync.start[t + 1]])
    return total / int(used.sum())


def search_offset_overlap(ref_frames, sync_frames, max_offset: int | None = None) -> SyncResult:
    """Non-negative offset search on per-frame plane points, overlap-centred."""
    ref, sync = _Track(ref_frames), _Track(sync_frames)
    if max_offset is None:
        max_offset = sync.n // 3
    offsets = np.arange(max_offset + 1)
    costs = np.array([_overlap_cost(ref, sync, int(d)) for d in offsets])
    best = int(np.argmin(costs))
    return SyncResult(int(offsets[best]), float(costs[best]), costs, offsets)


def search_offset_overlap_both(ref_frames, sync_frames, max_offset: int | None = None) -> SyncResult:
    """Both signs of the offset; see :func:`search_time_offset_both`."""
    fwd = search_offset_overlap(ref_frames, sync_frames, max_offset)
    back = search_offset_overlap(sync_frames, ref_frames, max_offset)
    offsets = np.concatenate([-back.offsets[:0:-1], fwd.offsets])
    costs = np.concatenate([back.per_offset_costs[:0:-1], fwd.per_offset_costs])
    if back.score < fwd.score:
        return SyncResult(-back.delta_t, back.score, costs, offsets)
    return SyncResult(fwd.delta_t, fwd.score, costs, offsets)
