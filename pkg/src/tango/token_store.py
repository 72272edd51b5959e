"""Token-tensor data model, the ``.tg``/``.ta`` binary formats and a synthetic video generator.

Grid file layout (all little-endian)::

    b"TANGOTG1" | u32 T | u32 H | u32 W | u32 d | T*H*W*d f32 | T f32 timestamps

Attention file layout::

    b"TANGOAT1" | u32 T | u32 N | T*N f32
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, FormatError, IoError, RangeError, TruncatedError

GRID_MAGIC = b"TANGOTG1"
ATTN_MAGIC = b"TANGOAT1"
_GRID_HEADER = struct.Struct("<4I")
_ATTN_HEADER = struct.Struct("<2I")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TokenGrid:
    """A ``(T, H, W, d)`` float32 feature tensor plus per-frame timestamps in seconds."""

    data: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        ts = np.asarray(self.timestamps, dtype=np.float32).reshape(-1)
        if data.ndim != 4 or min(data.shape) < 1:
            raise ConfigError(f"grid data must be a non-empty (T, H, W, d) array, got shape {data.shape}")
        if ts.shape[0] != data.shape[0]:
            raise ConfigError(f"expected {data.shape[0]} timestamps, got {ts.shape[0]}")
        if not np.all(np.isfinite(data)):
            raise ValueError("grid contains non-finite values")
        if not np.all(np.isfinite(ts)) or np.any(ts < 0):
            raise ValueError("timestamps must be finite and non-negative")
        if ts.shape[0] > 1 and not (np.all(np.diff(ts) > 0) or np.all(ts == 0)):
            raise ValueError("timestamps must be strictly increasing (or all zero)")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "timestamps", _frozen(ts))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def grid_h(self) -> int:
        return self.data.shape[1]

    @property
    def grid_w(self) -> int:
        return self.data.shape[2]

    @property
    def dim(self) -> int:
        return self.data.shape[3]

    @property
    def tokens_per_frame(self) -> int:
        return self.grid_h * self.grid_w

    def frame_tokens(self) -> np.ndarray:
        """View of the data as ``(T, H*W, d)``."""
        return self.data.reshape(self.frames, self.tokens_per_frame, self.dim)

    def __eq__(self, other):
        if not isinstance(other, TokenGrid):
            return NotImplemented
        return (
            self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
            and self.timestamps.tobytes() == other.timestamps.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class AttentionMap:
    """Per-frame token saliency, shape ``(T, N)``.

    Scores are non-negative; ``-inf`` is the masked-out sentinel written by
    :func:`tango.selection.mask_sinks`.
    """

    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2 or min(s.shape) < 1:
            raise ConfigError(f"attention scores must be a non-empty (T, N) array, got shape {s.shape}")
        live = s[~np.isneginf(s)]
        if not np.all(np.isfinite(live)) or np.any(live < 0):
            raise ValueError("attention scores must be finite and non-negative")
        object.__setattr__(self, "scores", _frozen(s))

    @property
    def frames(self) -> int:
        return self.scores.shape[0]

    def check_matches(self, grid: TokenGrid) -> None:
        if self.scores.shape != (grid.frames, grid.tokens_per_frame):
            raise ConfigError(
                f"attention shape {self.scores.shape} does not match grid "
                f"({grid.frames}, {grid.tokens_per_frame})"
            )


@dataclass(frozen=True)
class SinkSpec:
    """Flat per-frame token indices whose scores are masked before selection."""

    indices: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "indices", frozenset(int(i) for i in self.indices))

    def check_range(self, n: int) -> None:
        bad = sorted(i for i in self.indices if not 0 <= i < n)
        if bad:
            raise RangeError(f"sink indices {bad} outside [0, {n})")


# -- file I/O -----------------------------------------------------------------


def _write_bytes(path, payload: bytes) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def grid_to_bytes(grid: TokenGrid) -> bytes:
    T, H, W, d = grid.data.shape
    return b"".join(
        [
            GRID_MAGIC,
            _GRID_HEADER.pack(T, H, W, d),
            grid.data.astype("<f4", copy=False).tobytes(),
            grid.timestamps.astype("<f4", copy=False).tobytes(),
        ]
    )


def save_grid(grid: TokenGrid, path) -> None:
    if not isinstance(grid, TokenGrid):
        raise TypeError("save_grid expects a TokenGrid")
    if not np.all(np.isfinite(grid.data)):
        raise ValueError("grid contains non-finite values")
    _write_bytes(path, grid_to_bytes(grid))


def grid_from_bytes(raw: bytes) -> TokenGrid:
    if raw[:8] != GRID_MAGIC:
        raise FormatError("missing TANGOTG1 magic")
    if len(raw) < 8 + _GRID_HEADER.size:
        raise TruncatedError("file ends inside the header")
    T, H, W, d = _GRID_HEADER.unpack_from(raw, 8)
    if min(T, H, W, d) == 0:
        raise FormatError(f"zero dimension in header ({T}, {H}, {W}, {d})")
    n_data = T * H * W * d
    expected = 8 + _GRID_HEADER.size + 4 * (n_data + T)
    if len(raw) != expected:
        raise TruncatedError(f"expected {expected} bytes for ({T}, {H}, {W}, {d}), got {len(raw)}")
    off = 8 + _GRID_HEADER.size
    data = np.frombuffer(raw, dtype="<f4", count=n_data, offset=off).reshape(T, H, W, d)
    ts = np.frombuffer(raw, dtype="<f4", count=T, offset=off + 4 * n_data)
    return TokenGrid(data.astype(np.float32), ts.astype(np.float32))


def load_grid(path) -> TokenGrid:
    return grid_from_bytes(_read(path))


def attn_to_bytes(attn: AttentionMap) -> bytes:
    if np.any(np.isneginf(attn.scores)):
        raise ValueError("masked attention maps cannot be serialized")
    T, N = attn.scores.shape
    return ATTN_MAGIC + _ATTN_HEADER.pack(T, N) + attn.scores.astype("<f4").tobytes()


def save_attn(attn: AttentionMap, path) -> None:
    _write_bytes(path, attn_to_bytes(attn))


def load_attn(path) -> AttentionMap:
    raw = _read(path)
    if raw[:8] != ATTN_MAGIC:
        raise FormatError("missing TANGOAT1 magic")
    if len(raw) < 8 + _ATTN_HEADER.size:
        raise TruncatedError("file ends inside the header")
    T, N = _ATTN_HEADER.unpack_from(raw, 8)
    if T == 0 or N == 0:
        raise FormatError(f"zero dimension in header ({T}, {N})")
    expected = 8 + _ATTN_HEADER.size + 4 * T * N
    if len(raw) != expected:
        raise TruncatedError(f"expected {expected} bytes for ({T}, {N}), got {len(raw)}")
    scores = np.frombuffer(raw, dtype="<f4", count=T * N, offset=8 + _ATTN_HEADER.size)
    return AttentionMap(scores.reshape(T, N).astype(np.float64))


# -- normalization --------------------------------------------------------------


def unit_rows(x: np.ndarray) -> tuple[np.ndarray, int]:
    """L2-normalize the rows of ``x`` in float64. Zero rows pass through unchanged."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.sqrt((x * x).sum(axis=-1))
    zero = norms == 0
    out = x / np.where(zero, 1.0, norms)[..., None]
    return out, int(zero.sum())


def normalize_tokens(grid: TokenGrid) -> tuple[TokenGrid, int]:
    """Scale every token to unit L2 norm.

    Returns the normalized grid and the number of all-zero tokens, which are
    left untouched instead of being divided by zero.
    """
    out, zero_count = unit_rows(grid.data)
    return TokenGrid(out.astype(np.float32), grid.timestamps), zero_count


# -- synthetic videos ---------------------------------------------------------------


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a synthetic token video.

    ``amplitude`` is the blob speed in grid cells per frame. ``cut_at`` (0-based
    frame) regenerates the whole background from that frame on, emulating a
    hard scene cut. ``sink_index`` plants a constant high-attention cell.
    """

    frames: int
    height: int
    width: int
    dim: int
    n_blobs: int = 1
    amplitude: int = 0
    sigma: float = 0.0
    blob_size: int = 2
    frame_interval: float = 0.5
    cut_at: Optional[int] = None
    sink_index: Optional[int] = None
    peak: float = 1.0
    tail: float = 0.01
    sink_level: float = 5.0

    def validate(self) -> None:
        if min(self.frames, self.height, self.width, self.dim) < 1:
            raise ConfigError("synthetic scene dimensions must be positive")
        if self.n_blobs < 0 or self.amplitude < 0 or self.blob_size < 1:
            raise ConfigError("blob count, amplitude and size must be non-negative (size >= 1)")
        if self.sigma < 0:
            raise ConfigError("noise sigma must be >= 0")
        if self.frame_interval <= 0:
            raise ConfigError("frame interval must be positive")
        if self.sink_index is not None and not 0 <= self.sink_index < self.height * self.width:
            raise ConfigError("sink index outside the frame")


class SynthTruth(NamedTuple):
    content: np.ndarray  # (T, N) int64 content id; equal ids mean identical noise-free features
    static_pairs: np.ndarray  # (T-1, N) bool, content unchanged between frame t and t+1
    blob_mask: np.ndarray  # (T, N) bool, cell covered by any blob
    blob_positions: np.ndarray  # (T, n_blobs, 2) top-left (row, col) per blob


class SynthVideo(NamedTuple):
    grid: TokenGrid
    attn: AttentionMap
    truth: SynthTruth


_DIRECTIONS = [(0, 1), (1, 0), (1, 1), (0, -1), (-1, 0), (-1, -1), (1, -1), (-1, 1)]


def synth_video(spec: SceneSpec, seed: int) -> SynthVideo:
    """Generate a deterministic synthetic token video.

    Background cells carry a fixed random vector per cell (re-drawn after
    ``cut_at``); each blob is a ``blob_size`` square with its own per-cell
    texture that moves with constant velocity and bounces off the borders.
    Gaussian noise of scale ``sigma`` is added last.
    """
    spec.validate()
    T, H, W, d = spec.frames, spec.height, spec.width, spec.dim
    N = H * W
    rng = np.random.default_rng(seed)
    bs = min(spec.blob_size, H, W)

    backgrounds = [rng.standard_normal((N, d))]
    if spec.cut_at is not None and 0 < spec.cut_at < T:
        backgrounds.append(rng.standard_normal((N, d)))
    textures = rng.standard_normal((spec.n_blobs, bs * bs, d))
    starts = np.stack(
        [rng.integers(0, H - bs + 1, size=spec.n_blobs), rng.integers(0, W - bs + 1, size=spec.n_blobs)],
        axis=1,
    )
    dirs = rng.integers(0, len(_DIRECTIONS), size=spec.n_blobs)

    positions = np.zeros((T, spec.n_blobs, 2), dtype=np.int64)
    for b in range(spec.n_blobs):
        r, c = (int(v) for v in starts[b])
        vr, vc = (spec.amplitude * s for s in _DIRECTIONS[dirs[b]])
        for t in range(T):
            positions[t, b] = (r, c)
            r, vr = _bounce(r, vr, H - bs)
            c, vc = _bounce(c, vc, W - bs)

    feats = np.empty((T, N, d), dtype=np.float64)
    content = np.empty((T, N), dtype=np.int64)
    blob_mask = np.zeros((T, N), dtype=bool)
    for t in range(T):
        epoch = 1 if len(backgrounds) > 1 and t >= spec.cut_at else 0
        feats[t] = backgrounds[epoch]
        content[t] = epoch * N + np.arange(N)
        for b in range(spec.n_blobs):
            r0, c0 = positions[t, b]
            for off in range(bs * bs):
                cell = (r0 + off // bs) * W + (c0 + off % bs)
                feats[t, cell] = textures[b, off]
                content[t, cell] = (2 + b) * N + off
                blob_mask[t, cell] = True

    if spec.sigma > 0:
        feats = feats + spec.sigma * rng.standard_normal(feats.shape)

    scores = np.full((T, N), spec.tail, dtype=np.float64)
    scores[blob_mask] = spec.peak
    if spec.sink_index is not None:
        scores[:, spec.sink_index] = spec.sink_level

    ts = np.arange(T, dtype=np.float64) * spec.frame_interval
    grid = TokenGrid(feats.reshape(T, H, W, d).astype(np.float32), ts.astype(np.float32))
    truth = SynthTruth(
        content=_frozen(content),
        static_pairs=_frozen(content[:-1] == content[1:]),
        blob_mask=_frozen(blob_mask),
        blob_positions=_frozen(positions),
    )
    return SynthVideo(grid, AttentionMap(scores.astype(np.float32).astype(np.float64)), truth)


def _bounce(x: int, v: int, hi: int) -> tuple[int, int]:
    if v == 0:
        return x, 0
    if not 0 <= x + v <= hi:
        v = -v
        if not 0 <= x + v <= hi:
            return x, 0
    return x + v, v


def file_size_for(T: int, H: int, W: int, d: int) -> int:
    return 8 + _GRID_HEADER.size + 4 * (T * H * W * d + T)


__all__ = [
    "AttentionMap",
    "SceneSpec",
    "SinkSpec",
    "SynthTruth",
    "SynthVideo",
    "TokenGrid",
    "file_size_for",
    "load_attn",
    "load_grid",
    "normalize_tokens",
    "save_attn",
    "save_grid",
    "synth_video",
    "unit_rows",
]
