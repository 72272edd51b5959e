"""Diversity-driven salient token selection.

Instead of keeping the plain top-k attention scores, the candidate pool is
widened to the top ``floor(alpha * k)`` tokens, clustered into ``k`` groups
with DPC-KNN and the highest-scoring member of every group is kept. Constant
attention sinks are masked beforehand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .dpc import ClusterParams, cluster_distances
from . import kernels
from .errors import ConfigError, NoCandidates
from .strope import RopeConfig, embed
from .token_store import AttentionMap, SinkSpec, TokenGrid, unit_rows

ATTN_VARIANTS = ("provided", "global_query")


@dataclass(frozen=True)
class SelectParams:
    k: int = 1
    alpha: float = 1.5
    knn_k: int = 7
    sink: SinkSpec = field(default_factory=SinkSpec)
    attn_variant: str = "global_query"
    use_strope: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("salient budget k must be >= 1")
        if not self.alpha >= 1:
            raise ConfigError(f"expansion coefficient alpha must be >= 1, got {self.alpha}")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        if self.attn_variant not in ATTN_VARIANTS:
            raise ConfigError(f"attn_variant must be one of {ATTN_VARIANTS}")


@dataclass(frozen=True, eq=False)
class SalientSet:
    indices: np.ndarray  # selected token ids, one per cluster, ordered by cluster label
    cluster_of: np.ndarray  # cluster label of each selected token
    candidates: np.ndarray  # the top-floor(alpha k) candidate ids
    labels: np.ndarray  # cluster label of every candidate

    def sorted(self) -> np.ndarray:
        return np.sort(self.indices)


def expanded_count(alpha: float, k: int) -> int:
    """``floor(alpha * k)`` evaluated on the decimal value of ``alpha`` (1.15 * 100 -> 115)."""
    return math.floor(Fraction(repr(float(alpha))) * k)


def global_query_scores(grid: TokenGrid) -> AttentionMap:
    """Per-frame softmax of ``q . x / sqrt(d)`` with ``q`` the mean token of the frame."""
    X = grid.frame_tokens().astype(np.float64)
    q = X.mean(axis=1, keepdims=True)
    logits = (X * q).sum(axis=2) / math.sqrt(grid.dim)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return AttentionMap(w / w.sum(axis=1, keepdims=True))


def mask_sinks(attn: AttentionMap, sink: SinkSpec) -> AttentionMap:
    """Replace the scores of sink cells with ``-inf`` in every frame."""
    sink.check_range(attn.scores.shape[1])
    if not sink.indices:
        return attn
    scores = attn.scores.copy()
    scores[:, sorted(sink.indices)] = -np.inf
    return AttentionMap(scores)


def top_candidates(scores: np.ndarray, count: int) -> np.ndarray:
    """Ids of the ``count`` highest finite scores, ties to the lower id, in rank order."""
    scores = np.asarray(scores, dtype=np.float64)
    live = np.flatnonzero(~np.isneginf(scores))
    if len(live) == 0:
        raise NoCandidates("every token is masked")
    order = live[np.lexsort((live, -scores[live]))]
    return order[:count]


def select_salient(
    tokens,
    positions,
    scores,
    params: SelectParams,
    rope_cfg: Optional[RopeConfig] = None,
) -> SalientSet:
    """Select ``params.k`` salient tokens from a flat token list.

    ``scores`` are aligned with ``tokens``; masked entries are ``-inf``.
    Candidates are clustered with the ST-RoPE distance when
    ``params.use_strope`` (``rope_cfg`` required), otherwise with the plain
    Euclidean distance between unit-normalized tokens.
    """
    tokens = np.asarray(tokens)
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) != len(tokens):
        raise ConfigError("scores and tokens are not aligned")
    cand = top_candidates(scores, expanded_count(params.alpha, params.k))
    k = min(params.k, len(cand))
    if k == len(cand):
        labels = np.arange(k)
    else:
        if params.use_strope:
            if rope_cfg is None:
                raise ConfigError("ST-RoPE clustering needs a RopeConfig")
            feats = embed(tokens[cand], np.asarray(positions)[cand], rope_cfg)
        else:
            feats, _ = unit_rows(tokens[cand])
        dmat = kernels.pairwise_distances(feats)
        labels = cluster_distances(dmat, ClusterParams(k, params.knn_k)).assignment
    chosen = np.empty(k, dtype=np.int64)
    for c in range(k):
        members = cand[labels == c]
        # highest score, then lowest id
        chosen[c] = members[np.lexsort((members, -scores[members]))[0]]
    return SalientSet(chosen, np.arange(k), cand, labels)
