"""Temporal segmentation that maximizes the number of prunable static tokens.

Frames are 1-based and a segment ``[t_s, t_e)`` covers frames ``t_s .. t_e - 1``.
A token (grid cell) is static in a segment when its cosine similarity to the
same cell in the next frame exceeds ``tau`` for every adjacent pair inside the
segment. Pooling keeps one mean vector per static cell per segment, so a
segment yields ``n_static * (t_e - t_s - 1)`` prunable tokens.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import ConfigError, RangeError
from .token_store import TokenGrid


def default_tau(retention: float) -> float:
    """Static-similarity threshold used for a given retention ratio: 0.65 at 10%, else 0.8."""
    return 0.65 if abs(retention - 0.1) < 1e-9 else 0.8


@dataclass(frozen=True)
class SegConfig:
    tau: float = 0.8
    max_segment_len: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.max_segment_len is not None and self.max_segment_len < 1:
            raise ConfigError("max_segment_len must be positive")


@dataclass(frozen=True, eq=False)
class Segment:
    start: int
    end: int
    static_mask: np.ndarray = field(repr=False)

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def n_static(self) -> int:
        return int(np.count_nonzero(self.static_mask))

    @property
    def prunable(self) -> int:
        return self.n_static * (self.length - 1)

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return (self.start, self.end) == (other.start, other.end) and np.array_equal(
            self.static_mask, other.static_mask
        )


@dataclass(frozen=True)
class SegmentPlan:
    segments: tuple
    total_prunable: int

    @property
    def boundaries(self) -> tuple[int, ...]:
        """Start frames of every segment after the first."""
        return tuple(s.start for s in self.segments[1:])

    def to_text(self) -> str:
        lines = [f"{s.start} {s.end} {s.n_static} {s.prunable}" for s in self.segments]
        return "\n".join(lines) + "\n"


class StaticRuns:
    """Per-cell run lengths of consecutive static transitions.

    ``runs[s, k]`` is how many adjacent-frame transitions starting at 0-based
    frame ``s`` stay above ``tau`` for cell ``k``. Cell ``k`` is static in
    ``[t_s, t_e)`` iff ``runs[t_s - 1, k] >= t_e - t_s - 1``.
    """

    def __init__(self, grid: TokenGrid, tau: float):
        self.frames = grid.frames
        self.cells = grid.tokens_per_frame
        adj = kernels.adjacent_cosine(grid.frame_tokens()) > tau
        T = self.frames
        runs = np.zeros((T, self.cells), dtype=np.int64)
        for s in range(T - 2, -1, -1):
            runs[s] = np.where(adj[s], runs[s + 1] + 1, 0)
        self.runs = runs
        # count_ge[s, L] = number of cells whose run from s is at least L
        hist = np.zeros((T, T + 1), dtype=np.int64)
        for s in range(T):
            hist[s] = np.bincount(runs[s], minlength=T + 1)[: T + 1]
        self.count_ge = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1]

    def check(self, t_s: int, t_e: int) -> None:
        if not (1 <= t_s < t_e <= self.frames + 1):
            raise RangeError(f"window [{t_s}, {t_e}) outside [1, {self.frames + 1})")

    def mask(self, t_s: int, t_e: int) -> np.ndarray:
        self.check(t_s, t_e)
        return self.runs[t_s - 1] >= t_e - t_s - 1

    def prunable(self, t_s: int, t_e: int) -> int:
        self.check(t_s, t_e)
        return int(self.count_ge[t_s - 1, t_e - t_s - 1]) * (t_e - t_s - 1)


def static_mask(grid: TokenGrid, t_s: int, t_e: int, cfg: SegConfig) -> np.ndarray:
    if not (1 <= t_s < t_e <= grid.frames + 1):
        raise RangeError(f"window [{t_s}, {t_e}) outside [1, {grid.frames + 1})")
    window = grid.frame_tokens()[t_s - 1 : t_e - 1]
    cos = kernels.adjacent_cosine(window)
    return np.all(cos > cfg.tau, axis=0)


def prunable_count(grid: TokenGrid, t_s: int, t_e: int, cfg: SegConfig) -> int:
    return int(np.count_nonzero(static_mask(grid, t_s, t_e, cfg))) * (t_e - t_s - 1)


def _better(a, b) -> bool:
    """Is candidate ``a`` preferable to ``b``? Each is (total, n_segments, boundaries)."""
    if b is None:
        return True
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[1] != b[1]:
        return a[1] < b[1]
    return a[2] < b[2]


def optimal_segmentation(grid: TokenGrid, cfg: SegConfig) -> SegmentPlan:
    """Exact dynamic program over segment end points.

    ``best[i]`` is the optimum for frames ``1 .. i - 1``; ties prefer fewer
    segments, then lexicographically earlier boundaries. The comparison key is
    preserved by appending a common last segment, so keeping one winner per
    prefix is exact.
    """
    runs = StaticRuns(grid, cfg.tau)
    T = grid.frames
    max_len = cfg.max_segment_len or T
    best: list = [None] * (T + 2)
    best[1] = (0, 0, ())
    for i in range(2, T + 2):
        cand_best = None
        for j in range(max(1, i - max_len), i):
            prev = best[j]
            cand = (prev[0] + runs.prunable(j, i), prev[1] + 1, prev[2] + ((j,) if j > 1 else ()))
            if _better(cand, cand_best):
                cand_best = cand
        best[i] = cand_best
    total, _, bounds = best[T + 1]
    starts = (1,) + bounds
    ends = bounds + (T + 1,)
    segments = tuple(Segment(s, e, runs.mask(s, e)) for s, e in zip(starts, ends))
    return SegmentPlan(segments, int(total))


def trivial_plan(grid: TokenGrid) -> SegmentPlan:
    """Every frame its own segment: nothing is pooled."""
    N = grid.tokens_per_frame
    segs = tuple(Segment(t, t + 1, np.ones(N, dtype=bool)) for t in range(1, grid.frames + 1))
    return SegmentPlan(segs, 0)


class StaticPool(NamedTuple):
    """Tokens that survive static pooling, in segment / frame / cell order."""

    tokens: np.ndarray  # (M, d) float32
    frames: np.ndarray  # (M,) 0-based frame where the token is placed
    cells: np.ndarray  # (M,) flat cell index
    counts: np.ndarray  # (M,) number of source tokens represented
    pooled: np.ndarray  # (M,) True for mean-pooled static tokens from segments longer than one frame
    segment: np.ndarray  # (M,) index into plan.segments


def pool_static(grid: TokenGrid, plan: SegmentPlan) -> StaticPool:
    """Mean-pool every static cell of a segment into the segment's first frame.

    Non-static tokens pass through bit-for-bit at their own frame.
    """
    X = grid.frame_tokens()
    N = grid.tokens_per_frame
    toks, frames, cells, counts, pooled, seg_ids = [], [], [], [], [], []
    for si, seg in enumerate(plan.segments):
        f0 = seg.start - 1
        length = seg.length
        mask = seg.static_mask if length > 1 else np.zeros(N, dtype=bool)
        first = X[f0].copy()
        if mask.any():
            first[mask] = X[f0 : f0 + length, mask].astype(np.float64).mean(axis=0).astype(np.float32)
        toks.append(first)
        frames.append(np.full(N, f0))
        cells.append(np.arange(N))
        counts.append(np.where(mask, length, 1))
        pooled.append(mask.copy())
        seg_ids.append(np.full(N, si))
        moving = np.flatnonzero(~mask)
        for f in range(f0 + 1, f0 + length):
            toks.append(X[f, moving])
            frames.append(np.full(len(moving), f))
            cells.append(moving)
            counts.append(np.ones(len(moving), dtype=np.int64))
            pooled.append(np.zeros(len(moving), dtype=bool))
            seg_ids.append(np.full(len(moving), si))
    return StaticPool(
        tokens=np.concatenate(toks).astype(np.float32),
        frames=np.concatenate(frames).astype(np.int64),
        cells=np.concatenate(cells).astype(np.int64),
        counts=np.concatenate(counts).astype(np.int64),
        pooled=np.concatenate(pooled),
        segment=np.concatenate(seg_ids).astype(np.int64),
    )


def pool_scores(scores: np.ndarray, pool: StaticPool) -> np.ndarray:
    """Attention per surviving token: mean over the frames a pooled token covers."""
    scores = np.asarray(scores, dtype=np.float64)
    out = np.empty(len(pool.frames))
    for i, (f, k, c) in enumerate(zip(pool.frames, pool.cells, pool.counts)):
        out[i] = scores[f, k] if c == 1 else scores[f : f + c, k].mean()
    return out
