"""Reference strategies used for ablations: uniform sampling and plain top-k."""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, NoCandidates
from .selection import top_candidates
from .token_store import AttentionMap, SinkSpec


def uniform_sample(tokens, B: int) -> np.ndarray:
    """Indices ``round(j * n / B)`` (halves round up) for ``j = 0 .. B-1``.

    ``tokens`` may be a sequence or the token count itself.
    """
    n = tokens if isinstance(tokens, (int, np.integer)) else len(tokens)
    if B <= 0:
        raise ConfigError("uniform_sample needs B >= 1")
    if B > n:
        raise ConfigError(f"cannot sample {B} of {n} tokens")
    out = np.empty(B, dtype=np.int64)
    prev = -1
    for j in range(B):
        idx = (2 * j * n + B) // (2 * B)
        if idx <= prev:
            idx = prev + 1
        out[j] = prev = idx
    return out


def topk_select(attn, B: int, sink: SinkSpec = SinkSpec()) -> np.ndarray:
    """The ``B`` highest masked scores as sorted flat ids (``frame * N + cell``)."""
    if isinstance(attn, AttentionMap):
        sink.check_range(attn.scores.shape[1])
        scores = attn.scores.copy()
        if sink.indices:
            scores[:, sorted(sink.indices)] = -np.inf
        flat = scores.reshape(-1)
    else:
        flat = np.asarray(attn, dtype=np.float64).reshape(-1)
    live = int(np.count_nonzero(~np.isneginf(flat)))
    if live == 0:
        raise NoCandidates("every token is masked")
    if B > live:
        raise ConfigError(f"cannot select {B} of {live} unmasked tokens")
    if B <= 0:
        raise ConfigError("topk_select needs B >= 1")
    return np.sort(top_candidates(flat, B))
