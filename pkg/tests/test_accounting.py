from fractions import Fraction

import pytest

from tango.accounting import (
    ModelConfig,
    RetentionSchedule,
    coefficient_ratio,
    equivalent_retention,
    layer_flops,
    llm_flops,
    load_model_config,
    parse_model_config,
    report,
)
from tango.errors import ConfigError

TINY = ModelConfig(layers=1, hidden=4, ffn_intermediate=8, query_heads=2, kv_groups=1)
QWEN = ModelConfig(layers=28, hidden=3584, ffn_intermediate=18944, query_heads=28, kv_groups=4)


def test_hand_example():
    f = layer_flops(1, TINY)
    assert (f.attention_linear, f.attention_quadratic, f.ffn) == (96, 16, 192)
    assert f.total == 304 and f.attention == 112


def test_quadratic_term_quadruples():
    for N in (1, 7, 1000):
        assert layer_flops(2 * N, TINY).attention_quadratic == 4 * layer_flops(N, TINY).attention_quadratic


def test_strictly_increasing():
    base = layer_flops(10, TINY).total
    assert layer_flops(11, TINY).total > base
    assert layer_flops(10, ModelConfig(1, 6, 8, 2, 1)).total > base
    assert layer_flops(10, ModelConfig(1, 4, 9, 2, 1)).total > base


def test_non_integral_gqa_stays_exact():
    f = layer_flops(1, ModelConfig(1, 5, 1, 3, 1))
    assert f.attention_linear == Fraction(400, 3)
    assert isinstance(layer_flops(6272, QWEN).total, int)
    assert layer_flops(10**8, QWEN).total > 2**63  # no wraparound


def test_llm_flops_scales_with_layers():
    assert llm_flops(5, TINY) == layer_flops(5, TINY).total
    assert llm_flops(5, ModelConfig(2, 4, 8, 2, 1)) == 2 * layer_flops(5, TINY).total


def test_qwen_ratio_and_near_linearity():
    assert coefficient_ratio(QWEN) == 32512
    assert load_model_config("qwen2-7b") == QWEN
    # per layer FLOPs are 4d (32512 N + N^2); hand evaluation of both lengths
    ratio = Fraction(llm_flops(627, QWEN), llm_flops(6272, QWEN))
    assert ratio == Fraction(32512 * 627 + 627**2, 32512 * 6272 + 6272**2)
    assert abs(float(ratio) - 0.08542) < 1e-5
    # at this length the quadratic share is N / (32512 + N), about 16%
    f = layer_flops(6272, QWEN)
    assert Fraction(f.attention_quadratic, f.total) == Fraction(6272, 32512 + 6272)
    # the linear regime only holds for N well below the coefficient ratio
    short = Fraction(llm_flops(10, QWEN), llm_flops(100, QWEN))
    assert abs(float(short) - 0.1) < 3e-4


def test_equivalent_retention():
    assert equivalent_retention(RetentionSchedule.constant(28, 0.1)) == 0.1
    assert equivalent_retention(RetentionSchedule((0.2, 0.1))) == pytest.approx(0.15, abs=1e-15)
    hybrid = RetentionSchedule.hybrid(28, 0.122, 18, 0.5)
    assert abs(equivalent_retention(hybrid) - 0.100) < 1e-3


def test_schedule_validation():
    with pytest.raises(ConfigError):
        RetentionSchedule(())
    with pytest.raises(ConfigError):
        RetentionSchedule((0.0,))
    with pytest.raises(ConfigError):
        RetentionSchedule.hybrid(4, 0.1, 5, 0.5)
    with pytest.raises(ConfigError):
        report(QWEN, 100, RetentionSchedule.constant(3, 0.5))


def test_model_config_validation_and_parsing(tmp_path):
    with pytest.raises(ConfigError):
        ModelConfig(1, 4, 8, 2, 3)
    with pytest.raises(ConfigError):
        ModelConfig(1, 4, 8, 3, 2)
    text = "# qwen\nlayers = 28\nhidden_size = 3584\nintermediate_size = 18944\nnum_attention_heads = 28\nnum_key_value_heads = 4\n"
    assert parse_model_config(text) == QWEN
    path = tmp_path / "m.toml"
    path.write_text(text)
    assert load_model_config(str(path)) == QWEN


def test_report_speedups():
    full = report(QWEN, 6272, RetentionSchedule.constant(28, 1.0))
    assert full.speedup == 1.0
    tenth = report(QWEN, 6272, RetentionSchedule.constant(28, 0.1))
    assert tenth.layer_tokens == (627,) * 28
    assert tenth.speedup == pytest.approx(float(Fraction(32512 * 6272 + 6272**2, 32512 * 627 + 627**2)), rel=1e-12)
    short = report(QWEN, 100, RetentionSchedule.constant(28, 0.1))
    assert short.speedup == pytest.approx(10.0, rel=0.01)
    hybrid = report(QWEN, 6272, RetentionSchedule.hybrid(28, 0.122, 18, 0.5))
    assert abs(hybrid.equivalent_retention - 0.100) < 1e-3
    csv = hybrid.to_csv().splitlines()
    assert csv[0] == "metric,value" and any(r.startswith("theoretical_flops_speedup,") for r in csv)
    assert "not wall-clock" in hybrid.to_text()
