"""Transformer FLOPs model and equivalent retention ratio.

Per layer (attention with grouped-query KV projections plus a SwiGLU FFN)::

    FLOPs(N) = 4 N d^2 (1 + G/H) + 4 N^2 d + 6 N d m

All counts are exact rationals (integers whenever the GQA factor divides out).
Speedups are theoretical FLOPs ratios, not wall-clock measurements.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Union

from .errors import ConfigError

Number = Union[int, Fraction]


def _exact(x: Fraction) -> Number:
    return int(x) if x.denominator == 1 else x


@dataclass(frozen=True)
class ModelConfig:
    layers: int
    hidden: int
    ffn_intermediate: int
    query_heads: int
    kv_groups: int

    def __post_init__(self):
        for name in ("layers", "hidden", "ffn_intermediate", "query_heads", "kv_groups"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.kv_groups > self.query_heads or self.query_heads % self.kv_groups:
            raise ConfigError("query_heads must be a multiple of kv_groups")


PRESETS = {
    # Qwen2-7B: 28 layers, hidden 3584, intermediate 18944, 28 query heads, 4 KV heads
    "qwen2-7b": ModelConfig(28, 3584, 18944, 28, 4),
}

_KEYS = {
    "layers": "layers",
    "num_hidden_layers": "layers",
    "hidden": "hidden",
    "hidden_size": "hidden",
    "ffn_intermediate": "ffn_intermediate",
    "intermediate_size": "ffn_intermediate",
    "query_heads": "query_heads",
    "num_attention_heads": "query_heads",
    "kv_groups": "kv_groups",
    "num_key_value_heads": "kv_groups",
}


def parse_model_config(text: str) -> ModelConfig:
    """Parse ``key = value`` lines (``#`` comments, optional quotes, TOML-compatible)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip().strip("\"'") for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[_KEYS[key]] = int(val)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key} must be an integer") from None
    missing = {"layers", "hidden", "ffn_intermediate", "query_heads", "kv_groups"} - values.keys()
    if missing:
        raise ConfigError(f"model config missing {sorted(missing)}")
    return ModelConfig(**values)


def load_model_config(spec: str) -> ModelConfig:
    """A preset name (``qwen2-7b``) or a path to a key=value file."""
    if spec.lower() in PRESETS:
        return PRESETS[spec.lower()]
    path = Path(spec)
    if not path.exists() and path.stem.lower() in PRESETS:
        return PRESETS[path.stem.lower()]
    return parse_model_config(path.read_text())


@dataclass(frozen=True)
class LayerFlops:
    attention_linear: Number
    attention_quadratic: Number
    ffn: Number

    @property
    def attention(self) -> Number:
        return _exact(Fraction(self.attention_linear) + self.attention_quadratic)

    @property
    def total(self) -> Number:
        return _exact(Fraction(self.attention_linear) + self.attention_quadratic + self.ffn)


def layer_flops(N: int, cfg: ModelConfig) -> LayerFlops:
    if N < 1:
        raise ConfigError("sequence length must be >= 1")
    d, m = cfg.hidden, cfg.ffn_intermediate
    gqa = 1 + Fraction(cfg.kv_groups, cfg.query_heads)
    return LayerFlops(
        attention_linear=_exact(4 * N * d * d * gqa),
        attention_quadratic=4 * N * N * d,
        ffn=6 * N * d * m,
    )


def llm_flops(N: int, cfg: ModelConfig) -> Number:
    return _exact(cfg.layers * Fraction(layer_flops(N, cfg).total))


def linear_coefficient(cfg: ModelConfig) -> Fraction:
    d = cfg.hidden
    return 4 * d * d * (1 + Fraction(cfg.kv_groups, cfg.query_heads)) + 6 * d * cfg.ffn_intermediate


def quadratic_coefficient(cfg: ModelConfig) -> int:
    return 4 * cfg.hidden


def coefficient_ratio(cfg: ModelConfig) -> Fraction:
    """Linear over quadratic coefficient; large values mean FLOPs scale ~linearly in N."""
    return linear_coefficient(cfg) / quadratic_coefficient(cfg)


@dataclass(frozen=True)
class RetentionSchedule:
    per_layer: tuple

    def __post_init__(self):
        vals = tuple(float(r) for r in self.per_layer)
        if not vals:
            raise ConfigError("retention schedule is empty")
        if any(not 0 < r <= 1 for r in vals):
            raise ConfigError("per-layer retention ratios must lie in (0, 1]")
        object.__setattr__(self, "per_layer", vals)

    @classmethod
    def constant(cls, layers: int, ratio: float) -> "RetentionSchedule":
        return cls((ratio,) * layers)

    @classmethod
    def hybrid(cls, layers: int, ratio: float, after_layer: int, intra_ratio: float) -> "RetentionSchedule":
        """``ratio`` for layers ``1 .. after_layer`` and ``ratio * intra_ratio`` for the rest."""
        if not 0 <= after_layer <= layers:
            raise ConfigError("intra-LLM pruning layer outside the model")
        return cls(tuple(ratio if l <= after_layer else ratio * intra_ratio for l in range(1, layers + 1)))


def equivalent_retention(schedule: RetentionSchedule) -> float:
    """Arithmetic mean of the per-layer ratios, rounded once."""
    total = sum((Fraction(r) for r in schedule.per_layer), Fraction(0))
    return float(total / len(schedule.per_layer))


def _round_half_up(x: Fraction) -> int:
    return int((2 * x.numerator + x.denominator) // (2 * x.denominator))


@dataclass(frozen=True)
class FlopsReport:
    model: ModelConfig
    n_full: int
    layer_tokens: tuple
    full: Number
    scheduled: Number
    equivalent_retention: float
    breakdown_full: LayerFlops

    @property
    def flops_ratio(self) -> float:
        return float(Fraction(self.scheduled) / Fraction(self.full))

    @property
    def speedup(self) -> float:
        return float(Fraction(self.full) / Fraction(self.scheduled))

    def rows(self) -> list[tuple[str, str]]:
        b = self.breakdown_full
        return [
            ("layers", str(self.model.layers)),
            ("n_full", str(self.n_full)),
            ("flops_full", str(self.full)),
            ("flops_scheduled", str(self.scheduled)),
            ("flops_ratio_exact", f"{self.flops_ratio:.6f}"),
            ("equivalent_retention_mean", f"{self.equivalent_retention:.6f}"),
            ("theoretical_flops_speedup", f"{self.speedup:.4f}"),
            ("layer_attention_linear_full", str(b.attention_linear)),
            ("layer_attention_quadratic_full", str(b.attention_quadratic)),
            ("layer_ffn_full", str(b.ffn)),
            ("linear_over_quadratic_coeff", f"{float(coefficient_ratio(self.model)):.1f}"),
        ]

    def to_text(self) -> str:
        width = max(len(k) for k, _ in self.rows())
        lines = [f"{k.ljust(width)}  {v}" for k, v in self.rows()]
        lines.append("(speedup is a theoretical FLOPs ratio, not wall-clock latency)")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("metric,value\n")
        for k, v in self.rows():
            buf.write(f"{k},{v}\n")
        return buf.getvalue()


def report(cfg: ModelConfig, n_full: int, schedule: RetentionSchedule) -> FlopsReport:
    """FLOPs at full length against the per-layer retained lengths ``round(r_l * n_full)``."""
    if len(schedule.per_layer) != cfg.layers:
        raise ConfigError(f"schedule has {len(schedule.per_layer)} layers, model has {cfg.layers}")
    tokens = tuple(max(1, _round_half_up(Fraction(repr(r)) * n_full)) for r in schedule.per_layer)
    scheduled = sum((Fraction(layer_flops(n, cfg).total) for n in tokens), Fraction(0))
    return FlopsReport(
        model=cfg,
        n_full=n_full,
        layer_tokens=tokens,
        full=llm_flops(n_full, cfg),
        scheduled=_exact(scheduled),
        equivalent_retention=equivalent_retention(schedule),
        breakdown_full=layer_flops(n_full, cfg),
    )
