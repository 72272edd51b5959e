"""Spatio-temporal merging and the end-to-end pruning pipeline.

Pipeline: temporal segmentation with static pooling, global salient
selection with a share of the budget, then per-segment DPC-KNN merging of
everything that was not selected with the remaining share.
"""
from __future__ import annotations

import dataclasses
import enum
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import kernels
from .baselines import topk_select, uniform_sample
from .dpc import ClusterParams, cluster_distances
from .errors import ConfigError
from .segmentation import SegConfig, SegmentPlan, optimal_segmentation, pool_scores, pool_static, trivial_plan
from .selection import SelectParams, global_query_scores, mask_sinks, select_salient
from .strope import RopeConfig, default_partition, embed, grid_positions
from .token_store import AttentionMap, TokenGrid, unit_rows

STRATEGIES = ("tango", "uniform", "topk")


class Provenance(enum.IntEnum):
    SALIENT = 0
    MERGED = 1
    POOLED_STATIC = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class PruneConfig:
    retention: float = 0.1
    budget_split: float = 0.6
    seg: SegConfig = field(default_factory=lambda: SegConfig(tau=0.65))
    select: SelectParams = field(default_factory=SelectParams)
    rope: Optional[RopeConfig] = None  # None: default_partition of the grid dim
    tsa: bool = True
    sts_per_segment: bool = False
    budget_base: str = "original"  # or "post_segmentation"
    strategy: str = "tango"

    def __post_init__(self):
        if not 0 < self.retention <= 1:
            raise ConfigError(f"retention must lie in (0, 1], got {self.retention}")
        if not 0 <= self.budget_split <= 1:
            raise ConfigError(f"budget split must lie in [0, 1], got {self.budget_split}")
        if self.budget_base not in ("original", "post_segmentation"):
            raise ConfigError("budget_base must be 'original' or 'post_segmentation'")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")

    def rope_for(self, dim: int) -> RopeConfig:
        cfg = self.rope or default_partition(dim)
        cfg.check_dim(dim)
        return cfg


@dataclass(frozen=True, eq=False)
class PrunedOutput:
    tokens: np.ndarray  # (n, d) float32
    positions: np.ndarray  # (n, 3) (t, h, w)
    frames: np.ndarray  # (n,) 0-based source frame of the position
    cells: np.ndarray  # (n,) flat cell of the position
    provenance: np.ndarray  # (n,) Provenance values
    source_counts: np.ndarray  # (n,) original tokens represented
    budget: int
    k_salient: int
    k_merge: int
    plan: Optional[SegmentPlan] = None
    survivors: int = 0
    timings: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tokens)

    def provenance_counts(self) -> dict[str, int]:
        return {p.label: int(np.count_nonzero(self.provenance == p)) for p in Provenance}


def _round_half_up(x: Fraction) -> int:
    return int((2 * x.numerator + x.denominator) // (2 * x.denominator))


def _exact(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def allocate_budget(total_tokens: int, retention: float, split: float) -> tuple[int, int]:
    """Split ``B = round(retention * total)`` into salient and merge shares."""
    if total_tokens < 1:
        raise ConfigError("need at least one token")
    B = _round_half_up(_exact(retention) * total_tokens)
    if B == 0:
        raise ConfigError(f"retention {retention} keeps no token of {total_tokens}")
    k_sal = _round_half_up(_exact(split) * B)
    if 0 < split < 1 and B >= 2:
        k_sal = min(max(k_sal, 1), B - 1)
    return k_sal, B - k_sal


def apportion(total: int, sizes) -> np.ndarray:
    """Largest-remainder split of ``total`` proportionally to ``sizes``; ties to the earlier entry."""
    sizes = np.asarray(sizes, dtype=np.int64)
    whole = int(sizes.sum())
    if total > whole:
        raise ConfigError(f"cannot apportion {total} over {whole} items")
    if whole == 0:
        return np.zeros(len(sizes), dtype=np.int64)
    quotas = [Fraction(total * int(s), whole) for s in sizes]
    out = np.array([q.numerator // q.denominator for q in quotas], dtype=np.int64)
    rest = total - int(out.sum())
    rema = [q - int(o) for q, o in zip(quotas, out)]
    for i in sorted(range(len(sizes)), key=lambda i: (-rema[i], i))[:rest]:
        out[i] += 1
    return out


@dataclass(frozen=True, eq=False)
class MergeResult:
    tokens: np.ndarray  # (k, d) float64 cluster means of raw features
    positions: np.ndarray  # (k, 3) position of each cluster center
    centers: np.ndarray  # (k,) local index of each center
    counts: np.ndarray  # (k,) members per cluster
    labels: np.ndarray  # (n,) cluster label of every input


def merge_segment(tokens, positions, k: int, rope_cfg: Optional[RopeConfig], knn_k: int = 7, use_strope: bool = True):
    """Cluster one segment's tokens into ``k`` groups and average each group.

    Distances are taken between normalized, rotated tokens (or just normalized
    ones without ST-RoPE); the means use the raw features. Returns ``None``
    for an empty segment or ``k == 0``.
    """
    tokens = np.asarray(tokens)
    positions = np.asarray(positions, dtype=np.float64)
    n = len(tokens)
    if n == 0 or k == 0:
        return None
    if k > n:
        raise ConfigError(f"cannot merge {n} tokens into {k} clusters")
    if k == n:
        idx = np.arange(n)
        return MergeResult(tokens.astype(np.float64), positions, idx, np.ones(n, dtype=np.int64), idx)
    feats = embed(tokens, positions, rope_cfg) if use_strope else unit_rows(tokens)[0]
    res = cluster_distances(kernels.pairwise_distances(feats), ClusterParams(k, knn_k))
    sums = np.zeros((k, tokens.shape[1]))
    np.add.at(sums, res.assignment, tokens.astype(np.float64))
    counts = np.bincount(res.assignment, minlength=k)
    return MergeResult(sums / counts[:, None], positions[res.centers], res.centers, counts, res.assignment)


def _order(positions, frames, cells) -> np.ndarray:
    return np.lexsort((cells, frames, positions[:, 2], positions[:, 1], positions[:, 0]))


def _assemble(grid, tokens, frames, cells, prov, counts, cfg, B, k_sal, k_merge, plan, survivors) -> PrunedOutput:
    frames = np.asarray(frames, dtype=np.int64)
    cells = np.asarray(cells, dtype=np.int64)
    pos = grid_positions(frames, cells, grid.timestamps, grid.grid_w, cfg.tsa)
    order = _order(pos, frames, cells)
    return PrunedOutput(
        tokens=np.asarray(tokens, dtype=np.float32).reshape(len(frames), grid.dim)[order],
        positions=pos[order],
        frames=frames[order],
        cells=cells[order],
        provenance=np.asarray(prov, dtype=np.int64)[order],
        source_counts=np.asarray(counts, dtype=np.int64)[order],
        budget=B,
        k_salient=k_sal,
        k_merge=k_merge,
        plan=plan,
        survivors=survivors,
    )


def _baseline(grid: TokenGrid, attn: AttentionMap, cfg: PruneConfig) -> PrunedOutput:
    total = grid.frames * grid.tokens_per_frame
    B = sum(allocate_budget(total, cfg.retention, cfg.budget_split))
    if cfg.strategy == "uniform":
        ids = uniform_sample(total, B)
    else:
        ids = topk_select(attn, B, cfg.select.sink)
    frames, cells = np.divmod(ids, grid.tokens_per_frame)
    flat = grid.frame_tokens().reshape(total, grid.dim)
    prov = np.full(len(ids), Provenance.SALIENT)
    return _assemble(grid, flat[ids], frames, cells, prov, np.ones(len(ids)), cfg, B, len(ids), 0, None, total)


def prune_video(grid: TokenGrid, attn: Optional[AttentionMap], cfg: PruneConfig) -> PrunedOutput:
    """Reduce ``grid`` to at most ``round(retention * T * N)`` tokens.

    ``attn=None`` computes global-query scores from the grid. Output tokens
    are ordered by position ``(t, h, w)``.
    """
    if attn is None:
        attn = global_query_scores(grid)
    attn.check_matches(grid)
    masked = mask_sinks(attn, cfg.select.sink)
    if cfg.strategy != "tango":
        return _baseline(grid, masked, cfg)

    total = grid.frames * grid.tokens_per_frame
    rope_cfg = cfg.rope_for(grid.dim) if cfg.select.use_strope else None
    B_orig = sum(allocate_budget(total, cfg.retention, cfg.budget_split))

    t0 = time.perf_counter()
    # nothing to prune at full budget: skip static pooling so the identity run is exact
    plan = trivial_plan(grid) if B_orig >= total else optimal_segmentation(grid, cfg.seg)
    pool = pool_static(grid, plan)
    t1 = time.perf_counter()
    M = len(pool.tokens)
    base = total if cfg.budget_base == "original" else M
    k_sal, k_merge = allocate_budget(base, cfg.retention, cfg.budget_split)
    B = k_sal + k_merge

    scores = pool_scores(masked.scores, pool)
    positions = grid_positions(pool.frames, pool.cells, grid.timestamps, grid.grid_w, cfg.tsa)

    salient = _select(pool, scores, positions, k_sal, cfg, rope_cfg, len(plan.segments))
    t2 = time.perf_counter()
    is_sal = np.zeros(M, dtype=bool)
    is_sal[salient] = True

    rest = np.flatnonzero(~is_sal)
    k_merge_eff = min(B - len(salient), len(rest))
    seg_sizes = np.bincount(pool.segment[rest], minlength=len(plan.segments))
    quotas = apportion(k_merge_eff, seg_sizes)

    def work(si):
        local = rest[pool.segment[rest] == si]
        res = merge_segment(
            pool.tokens[local], positions[local], int(quotas[si]), rope_cfg, cfg.select.knn_k, cfg.select.use_strope
        )
        return local, res

    segs = [si for si in range(len(plan.segments)) if quotas[si] > 0]
    workers = min(kernels.thread_count(), max(1, len(segs)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_ex:
            merged = list(pool_ex.map(work, segs))
    else:
        merged = [work(si) for si in segs]

    toks = [pool.tokens[salient]]
    frames = [pool.frames[salient]]
    cells = [pool.cells[salient]]
    prov = [np.full(len(salient), Provenance.SALIENT)]
    counts = [pool.counts[salient]]
    for local, res in merged:
        centers = local[res.centers]
        src = np.bincount(res.labels, weights=pool.counts[local], minlength=len(centers)).astype(np.int64)
        singleton_static = (res.counts == 1) & pool.pooled[centers]
        toks.append(res.tokens)
        frames.append(pool.frames[centers])
        cells.append(pool.cells[centers])
        prov.append(np.where(singleton_static, Provenance.POOLED_STATIC, Provenance.MERGED))
        counts.append(src)

    t3 = time.perf_counter()
    out = _assemble(
        grid,
        np.concatenate(toks),
        np.concatenate(frames),
        np.concatenate(cells),
        np.concatenate(prov),
        np.concatenate(counts),
        cfg,
        B,
        len(salient),
        k_merge_eff,
        plan,
        M,
    )
    out.timings.update(segmentation=t1 - t0, selection=t2 - t1, merging=t3 - t2)
    return out


def _select(pool, scores, positions, k_sal, cfg, rope_cfg, n_segments) -> np.ndarray:
    live = ~np.isneginf(scores)
    if k_sal == 0 or not live.any():
        return np.zeros(0, dtype=np.int64)
    params = dataclasses.replace(cfg.select, k=1)
    if not cfg.sts_per_segment:
        k = min(k_sal, int(live.sum()))
        sel = select_salient(pool.tokens, positions, scores, dataclasses.replace(params, k=k), rope_cfg)
        return np.sort(sel.indices)
    sizes = np.bincount(pool.segment[live], minlength=n_segments)
    quotas = apportion(min(k_sal, int(live.sum())), sizes)
    out = []
    for si in range(n_segments):
        if quotas[si] == 0:
            continue
        local = np.flatnonzero(pool.segment == si)
        sel = select_salient(
            pool.tokens[local], positions[local], scores[local], dataclasses.replace(params, k=int(quotas[si])), rope_cfg
        )
        out.append(local[sel.indices])
    return np.sort(np.concatenate(out)) if out else np.zeros(0, dtype=np.int64)
