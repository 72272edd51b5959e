"""Spatio-temporal rotary position embedding (ST-RoPE).

A token vector of dimension ``d = d_t + d_h + d_w`` is split into a temporal,
a row and a column section. Inside each section consecutive components
``(2k, 2k+1)`` are rotated by ``coord * theta_k`` with
``theta_k = base ** (-2k / d_p)``. Because each block is orthogonal, the
rotated dot product of two unit vectors depends only on the position offset,
and the induced Euclidean distance stays ``sqrt(2 (1 - cos))``.

Angles are evaluated in float64.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .token_store import unit_rows

REFERENCE_DIM = 3554
REFERENCE_PARTITION = (1186, 1184, 1184)
AXES = ("t", "h", "w")


@dataclass(frozen=True)
class RopeConfig:
    d_t: int
    d_h: int
    d_w: int
    theta_t: float = 1e4
    theta_h: float = 1e3
    theta_w: float = 1e3

    def __post_init__(self):
        for name in ("d_t", "d_h", "d_w"):
            v = getattr(self, name)
            if int(v) != v or v < 2 or v % 2:
                raise ConfigError(f"{name} must be an even integer >= 2, got {v}")
        for name in ("theta_t", "theta_h", "theta_w"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def dim(self) -> int:
        return self.d_t + self.d_h + self.d_w

    @property
    def sections(self) -> tuple[tuple[int, int, float], ...]:
        """``(offset, width, base)`` for the t, h and w sections."""
        return (
            (0, self.d_t, self.theta_t),
            (self.d_t, self.d_h, self.theta_h),
            (self.d_t + self.d_h, self.d_w, self.theta_w),
        )

    def check_dim(self, d: int) -> None:
        if d != self.dim:
            raise ConfigError(f"vector dimension {d} does not match rope partition {self.dim}")


def default_partition(d: int, theta_t: float = 1e4, theta_s: float = 1e3) -> RopeConfig:
    """Split ``d`` into (d_t, d_h, d_w).

    Spatial sections get ``2 * floor(d / 6)`` each and the temporal section
    takes the rest, which reproduces (1186, 1184, 1184) for d = 3554.
    """
    if int(d) != d or d < 6 or d % 2:
        raise ConfigError(f"cannot split dimension {d} into three even sections of width >= 2")
    d = int(d)
    if d == REFERENCE_DIM:
        d_t, d_h, d_w = REFERENCE_PARTITION
    else:
        d_h = d_w = 2 * (d // 6)
        d_t = d - d_h - d_w
    return RopeConfig(d_t, d_h, d_w, theta_t, theta_s, theta_s)


def section_frequencies(width: int, base: float) -> np.ndarray:
    k = np.arange(width // 2, dtype=np.float64)
    return np.power(float(base), -2.0 * k / width)


def frequencies(cfg: RopeConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return tuple(section_frequencies(w, b) for _, w, b in cfg.sections)


def rotate(x, p, cfg: RopeConfig) -> np.ndarray:
    """Apply the block-diagonal rotation for positions ``p = (t, h, w)``.

    ``x`` has shape ``(..., d)`` and ``p`` shape ``(..., 3)``; leading axes broadcast.
    """
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    cfg.check_dim(x.shape[-1])
    if p.shape[-1] != 3:
        raise ConfigError("positions must have three coordinates (t, h, w)")
    lead = np.broadcast_shapes(x.shape[:-1], p.shape[:-1])
    out = np.empty(lead + (x.shape[-1],), dtype=np.float64)
    for axis, (off, width, base) in enumerate(cfg.sections):
        theta = section_frequencies(width, base)
        ang = p[..., axis, None] * theta
        c, s = np.cos(ang), np.sin(ang)
        xe = x[..., off : off + width : 2]
        xo = x[..., off + 1 : off + width : 2]
        out[..., off : off + width : 2] = xe * c - xo * s
        out[..., off + 1 : off + width : 2] = xe * s + xo * c
    return out


def embed(tokens, positions, cfg: RopeConfig) -> np.ndarray:
    """Normalize raw tokens to unit length, then rotate them to their positions."""
    unit, _ = unit_rows(tokens)
    return rotate(unit, positions, cfg)


def cos_st(x_i, p_i, x_j, p_j, cfg: RopeConfig) -> float:
    """Position-aware cosine of two unit (or zero) vectors."""
    a = rotate(x_i, p_i, cfg)
    b = rotate(x_j, p_j, cfg)
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def dist_st(x_i, p_i, x_j, p_j, cfg: RopeConfig) -> float:
    """Euclidean distance between the rotated vectors.

    For unit inputs this equals ``sqrt(2 * (1 - cos_st))``.
    """
    diff = rotate(x_i, p_i, cfg) - rotate(x_j, p_j, cfg)
    return float(np.sqrt(np.dot(diff, diff)))


def grid_positions(frames, cells, timestamps, width: int, tsa: bool = True) -> np.ndarray:
    """``(n, 3)`` positions for tokens at 0-based ``frames`` and flat ``cells``.

    ``h`` and ``w`` are 1-based grid coordinates. With ``tsa`` the temporal
    coordinate is the frame timestamp in seconds, otherwise the frame index.
    """
    frames = np.asarray(frames, dtype=np.int64)
    cells = np.asarray(cells, dtype=np.int64)
    ts = np.asarray(timestamps, dtype=np.float64)
    t = ts[frames] if tsa else frames.astype(np.float64)
    return np.stack([t, (cells // width + 1).astype(np.float64), (cells % width + 1).astype(np.float64)], axis=-1)


# -- long-term decay --------------------------------------------------------------


@dataclass(frozen=True)
class DecayPoint:
    m: float
    mean_magnitude: float  # Monte-Carlo mean of |sum_k c_k exp(i m theta_k)|
    mean_bound: float  # mean of max_k |c_{k+1} - c_k| * partial_sum
    partial_sum: float  # sum_{l=1}^{n} |S_l|, exact for the frequency list
    normalized: float  # partial_sum / partial_sum at m = 1


def partial_sum_magnitude(theta: np.ndarray, m: float) -> float:
    """``sum_{l=1}^{n} |S_l|`` with ``S_l = sum_{k<l} exp(i m theta_k)``."""
    s = np.cumsum(np.exp(1j * float(m) * np.asarray(theta, dtype=np.float64)))
    return float(np.abs(s).sum())


def pair_coefficients(x_i: np.ndarray, x_j: np.ndarray) -> np.ndarray:
    """Complex coefficients ``c_k`` with ``Re sum_k c_k e^{i m theta_k} = x_i . R_m x_j``."""
    zi = x_i[..., 0::2] + 1j * x_i[..., 1::2]
    zj = x_j[..., 0::2] + 1j * x_j[..., 1::2]
    return np.conj(zi) * zj


def decay_envelope(
    cfg: RopeConfig,
    axis: str,
    m_values: Sequence[float],
    trials: int = 64,
    seed: int = 0,
    identical: bool = False,
) -> list[DecayPoint]:
    """Estimate the rotated-similarity envelope along one axis.

    For each relative distance ``m`` draws ``trials`` random unit section
    vectors (pairs of independent vectors, or one vector paired with itself
    when ``identical``) and reports the mean magnitude of the complex sum
    next to the summation-by-parts bound.
    """
    if axis not in AXES:
        raise ConfigError(f"axis must be one of {AXES}")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if any(m < 0 for m in m_values):
        raise ConfigError("relative distances must be non-negative")
    _, width, base = cfg.sections[AXES.index(axis)]
    theta = section_frequencies(width, base)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((trials, width))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    if identical:
        xj = xi
    else:
        xj = rng.standard_normal((trials, width))
        xj /= np.linalg.norm(xj, axis=1, keepdims=True)
    c = pair_coefficients(xi, xj)
    c_ext = np.concatenate([c, np.zeros((trials, 1))], axis=1)
    step = np.abs(np.diff(c_ext, axis=1)).max(axis=1)

    ref = partial_sum_magnitude(theta, 1.0)
    points = []
    for m in m_values:
        phases = np.exp(1j * float(m) * theta)
        mags = np.abs(c @ phases)
        s_sum = partial_sum_magnitude(theta, m)
        points.append(
            DecayPoint(
                m=float(m),
                mean_magnitude=float(mags.mean()),
                mean_bound=float((step * s_sum).mean()),
                partial_sum=s_sum,
                normalized=s_sum / ref,
            )
        )
    return points
