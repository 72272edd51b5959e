"""Brute-force references for the fast paths.

Everything here is deliberately naive pure Python (lists, ``math``), sharing
no code with the vectorized/compiled implementations it checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dpc import ClusterParams, Euclidean, SpatioTemporal, cluster
from .segmentation import SegConfig, optimal_segmentation
from .strope import RopeConfig, default_partition, rotate
from .token_store import TokenGrid


# -- segmentation -------------------------------------------------------------------


def naive_cosine(a: Sequence[float], b: Sequence[float]) -> float:
    dot = na = nb = 0.0
    for x, y in zip(a, b):
        dot += x * y
        na += x * x
        nb += y * y
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (math.sqrt(na) * math.sqrt(nb))


def brute_force_segmentation(grid: TokenGrid, tau: float, max_frames: int = 16):
    """Enumerate all ``2**(T-1)`` contiguous segmentations.

    Returns ``(best_total, boundaries)`` under the same tie rules as the DP:
    most prunable tokens, then fewest segments, then earliest boundaries.
    """
    T = grid.frames
    if T > max_frames:
        raise ValueError(f"brute force over {T} frames is too expensive")
    X = grid.frame_tokens().tolist()
    N = grid.tokens_per_frame
    adj = [[naive_cosine(X[t][k], X[t + 1][k]) > tau for k in range(N)] for t in range(T - 1)]

    def g(s: int, e: int) -> int:
        n_static = 0
        for k in range(N):
            if all(adj[t][k] for t in range(s - 1, e - 2)):
                n_static += 1
        return n_static * (e - s - 1)

    memo = {}
    best = None
    for bits in range(1 << (T - 1)):
        bounds = tuple(f for f in range(2, T + 1) if bits >> (f - 2) & 1)
        starts = (1,) + bounds
        ends = bounds + (T + 1,)
        total = 0
        for s, e in zip(starts, ends):
            if (s, e) not in memo:
                memo[s, e] = g(s, e)
            total += memo[s, e]
        key = (total, len(starts), bounds)
        if best is None or (
            key[0] > best[0] or (key[0] == best[0] and (key[1] < best[1] or (key[1] == best[1] and key[2] < best[2])))
        ):
            best = key
    return best[0], best[2]


def random_segmentation_grid(rng: np.random.Generator, T: int, N: int, d: int) -> TokenGrid:
    """Cells drift slowly, occasionally jump to a new vector, sometimes all at once (a cut)."""
    X = np.empty((T, N, d))
    X[0] = rng.standard_normal((N, d))
    p_jump = rng.uniform(0.05, 0.5)
    for t in range(1, T):
        X[t] = X[t - 1] + rng.uniform(0.0, 0.6) * rng.standard_normal((N, d))
        jump = rng.random(N) < (1.0 if rng.random() < 0.1 else p_jump)
        X[t, jump] = rng.standard_normal((int(jump.sum()), d))
    h = 1
    for cand in range(int(math.isqrt(N)), 0, -1):
        if N % cand == 0:
            h = cand
            break
    return TokenGrid(X.reshape(T, h, N // h, d).astype(np.float32), np.arange(T, dtype=np.float32))


# -- clustering ----------------------------------------------------------------------


def naive_euclidean(a: Sequence[float], b: Sequence[float]) -> float:
    acc = 0.0
    for x, y in zip(a, b):
        diff = x - y
        acc += diff * diff
    return math.sqrt(acc)


def direct_rotate(x: Sequence[float], p: Sequence[float], cfg: RopeConfig) -> list[float]:
    """Apply the block rotation with explicit 2x2 products, one frequency at a time."""
    out = list(x)
    offset = 0
    for coord, width, base in zip(p, (cfg.d_t, cfg.d_h, cfg.d_w), (cfg.theta_t, cfg.theta_h, cfg.theta_w)):
        for k in range(width // 2):
            theta = base ** (-2.0 * k / width)
            c, s = math.cos(coord * theta), math.sin(coord * theta)
            a, b = x[offset + 2 * k], x[offset + 2 * k + 1]
            out[offset + 2 * k] = a * c - b * s
            out[offset + 2 * k + 1] = a * s + b * c
        offset += width
    return out


def naive_st_points(points, positions, cfg: RopeConfig) -> list[list[float]]:
    out = []
    for x, p in zip(points, positions):
        x = [float(v) for v in x]
        norm = math.sqrt(sum(v * v for v in x))
        unit = [v / norm for v in x] if norm > 0 else x
        out.append(direct_rotate(unit, [float(v) for v in p], cfg))
    return out


@dataclass
class NaiveClusters:
    centers: list
    labels: list
    rho: list
    delta: list


def naive_dpc(points, k: int, knn_k: int, dist: Callable = naive_euclidean) -> NaiveClusters:
    pts = [[float(v) for v in p] for p in points]
    n = len(pts)
    D = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i][j] = dist(pts[i], pts[j])
    K = min(knn_k, n - 1)
    rho = []
    for i in range(n):
        near = sorted((D[i][j], j) for j in range(n) if j != i)[:K]
        acc = 0.0
        for dij, _ in near:
            acc += dij * dij
        rho.append(math.exp(-(acc / K)) if K > 0 else 1.0)
    delta = []
    for i in range(n):
        higher = [j for j in range(n) if j != i and (rho[j] > rho[i] or (rho[j] == rho[i] and j < i))]
        if higher:
            delta.append(min(D[i][j] for j in higher))
        else:
            delta.append(max((D[i][j] for j in range(n) if j != i), default=0.0))
    gamma = [r * d for r, d in zip(rho, delta)]
    centers = sorted(sorted(range(n), key=lambda i: (-gamma[i], i))[:k])
    labels = []
    for i in range(n):
        if i in centers:
            labels.append(centers.index(i))
        else:
            labels.append(min(range(k), key=lambda c: (D[i][centers[c]], c)))
    return NaiveClusters(centers, labels, rho, delta)


def random_cluster_case(rng: np.random.Generator, max_n: int = 200):
    """Gaussian blobs with some exact duplicates, plus grid positions for ST-RoPE."""
    n = int(rng.integers(1, max_n + 1))
    d = int(rng.choice([6, 8, 12]))
    n_blobs = int(rng.integers(1, 6))
    centers = 3.0 * rng.standard_normal((n_blobs, d))
    pts = centers[rng.integers(0, n_blobs, size=n)] + rng.uniform(0.2, 1.0) * rng.standard_normal((n, d))
    if n > 3:
        dup = rng.random(n) < 0.1
        src = rng.integers(0, n, size=n)
        pts[dup] = pts[src[dup]]
    pts = pts.astype(np.float32).astype(np.float64)
    positions = np.stack(
        [rng.integers(0, 8, size=n) * 0.5, rng.integers(1, 15, size=n), rng.integers(1, 15, size=n)], axis=1
    ).astype(np.float64)
    k = int(rng.integers(1, n + 1)) if rng.random() < 0.2 else int(rng.integers(1, min(n, 12) + 1))
    knn_k = int(rng.integers(1, 10))
    return pts, positions, k, knn_k


# -- harness --------------------------------------------------------------------------


@dataclass
class OracleCheck:
    name: str
    passed: bool
    cases: int
    max_deviation: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: cases={self.cases} max_deviation={self.max_deviation:.3g} {self.detail}".rstrip()


def check_segmentation(cases: int = 500, seed: int = 0, max_frames: int = 12, forced_bug: bool = False) -> OracleCheck:
    rng = np.random.default_rng(seed)
    worst = 0
    mismatched_plans = 0
    for case in range(cases):
        T = int(rng.integers(1, max_frames + 1))
        N = int(rng.integers(1, 10))
        d = int(rng.integers(1, 6))
        grid = random_segmentation_grid(rng, T, N, d)
        tau = float(rng.uniform(0.2, 0.98))
        plan = optimal_segmentation(grid, SegConfig(tau=tau))
        fast = plan.total_prunable + (1 if forced_bug and case == 0 else 0)
        ref_total, ref_bounds = brute_force_segmentation(grid, tau)
        worst = max(worst, abs(fast - ref_total))
        mismatched_plans += plan.boundaries != ref_bounds
    return OracleCheck(
        "segmentation",
        worst == 0 and mismatched_plans == 0,
        cases,
        float(worst),
        f"boundary_mismatches={mismatched_plans}",
    )


def check_clustering(cases: int = 200, seed: int = 1, max_n: int = 200, forced_bug: bool = False) -> OracleCheck:
    rng = np.random.default_rng(seed)
    mismatches = 0
    worst_rho = 0.0
    for case in range(cases):
        pts, pos, k, knn_k = random_cluster_case(rng, max_n)
        params = ClusterParams(k, knn_k)
        cfg = default_partition(pts.shape[1], 10.0, 10.0)
        for metric in ("euclidean", "st"):
            if metric == "euclidean":
                fast = cluster(pts, Euclidean(), params)
                ref = naive_dpc(pts.tolist(), k, knn_k)
            else:
                fast = cluster(pts, SpatioTemporal(pos, cfg), params)
                ref = naive_dpc(naive_st_points(pts, pos, cfg), k, knn_k)
            labels = fast.assignment.copy()
            if forced_bug and case == 0 and len(labels) > 1:
                labels[0] = (labels[0] + 1) % max(k, 2)
            same = labels.tolist() == ref.labels and fast.centers.tolist() == ref.centers
            mismatches += not same
            worst_rho = max(worst_rho, float(np.max(np.abs(fast.rho - np.asarray(ref.rho)))))
    return OracleCheck("clustering", mismatches == 0, cases, worst_rho, f"label_mismatches={mismatches}")


def check_rotation(cases: int = 200, seed: int = 2, dim: int = 48) -> OracleCheck:
    rng = np.random.default_rng(seed)
    cfg = default_partition(dim)
    worst = 0.0
    for _ in range(cases):
        x = rng.standard_normal(dim)
        x /= np.linalg.norm(x)
        p = [float(rng.uniform(0, 60)), float(rng.integers(1, 30)), float(rng.integers(1, 30))]
        fast = rotate(x, p, cfg)
        ref = direct_rotate(x.tolist(), p, cfg)
        worst = max(worst, float(np.max(np.abs(fast - np.asarray(ref)))))
    return OracleCheck("rotation", worst < 1e-12, cases, worst)


def run_oracles(
    seed: int = 0,
    seg_cases: int = 500,
    cluster_cases: int = 200,
    max_n: int = 200,
    rotation_cases: int = 200,
    forced_bug: bool = False,
    only: Optional[Sequence[str]] = None,
) -> list[OracleCheck]:
    checks = []
    if only is None or "segmentation" in only:
        checks.append(check_segmentation(seg_cases, seed, forced_bug=forced_bug))
    if only is None or "clustering" in only:
        checks.append(check_clustering(cluster_cases, seed + 1, max_n, forced_bug=forced_bug))
    if only is None or "rotation" in only:
        checks.append(check_rotation(rotation_cases, seed + 2))
    return checks
