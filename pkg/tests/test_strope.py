import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tango.errors import ConfigError
from tango.oracle import direct_rotate
from tango.strope import (
    RopeConfig,
    cos_st,
    decay_envelope,
    default_partition,
    dist_st,
    frequencies,
    grid_positions,
    pair_coefficients,
    partial_sum_magnitude,
    rotate,
    section_frequencies,
)

CFG6 = RopeConfig(2, 2, 2)


def unit(rng, d):
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x)


@pytest.mark.parametrize("d,expected", [(3554, (1186, 1184, 1184)), (6, (2, 2, 2)), (12, (4, 4, 4)), (20, (8, 6, 6))])
def test_default_partition(d, expected):
    cfg = default_partition(d)
    assert (cfg.d_t, cfg.d_h, cfg.d_w) == expected
    assert (cfg.theta_t, cfg.theta_h, cfg.theta_w) == (1e4, 1e3, 1e3)


@pytest.mark.parametrize("d", [4, 7, 0])
def test_default_partition_rejects(d):
    with pytest.raises(ConfigError):
        default_partition(d)


def test_config_rejects_odd_sections():
    with pytest.raises(ConfigError):
        RopeConfig(3, 2, 2)


def test_frequencies():
    assert section_frequencies(4, 1e4).tolist() == [1.0, 0.01]
    assert section_frequencies(2, 123.0).tolist() == [1.0]
    for theta in frequencies(default_partition(3554)):
        assert theta[0] == 1.0
        assert np.all(np.diff(theta) < 0)
    last = section_frequencies(1186, 1e4)[-1]
    assert last == pytest.approx(1e4 ** (-(1186 - 2) / 1186), rel=1e-12)


def test_rotate_first_pair():
    out = rotate([1, 0, 0, 0, 0, 0], [1, 0, 0], CFG6)
    np.testing.assert_allclose(out, [math.cos(1), math.sin(1), 0, 0, 0, 0], atol=1e-15)
    assert out[0] == pytest.approx(0.54030, abs=1e-5)
    assert out[1] == pytest.approx(0.84147, abs=1e-5)


def test_rotate_zero_position_identity(rng):
    x = unit(rng, 48)
    assert np.array_equal(rotate(x, [0, 0, 0], default_partition(48)), x)


def test_rotate_dim_mismatch():
    with pytest.raises(ConfigError):
        rotate(np.ones(8), [0, 0, 0], CFG6)


def test_rotate_matches_direct_loop(rng):
    cfg = default_partition(30, 50.0, 20.0)
    for _ in range(20):
        x = unit(rng, 30)
        p = [rng.uniform(0, 40), rng.integers(1, 20), rng.integers(1, 20)]
        np.testing.assert_allclose(rotate(x, p, cfg), direct_rotate(x.tolist(), p, cfg), atol=1e-13)


def test_rotate_broadcasts(rng):
    cfg = default_partition(12)
    X = rng.standard_normal((5, 12))
    P = rng.uniform(0, 10, (5, 3))
    batch = rotate(X, P, cfg)
    for i in range(5):
        np.testing.assert_array_equal(batch[i], rotate(X[i], P[i], cfg))


def test_cos_and_dist_examples(rng):
    e = [1, 0, 0, 0, 0, 0]
    c = cos_st(e, [0, 0, 0], e, [1, 0, 0], CFG6)
    assert c == pytest.approx(0.54030, abs=1e-5)
    assert dist_st(e, [0, 0, 0], e, [1, 0, 0], CFG6) == pytest.approx(0.95885, abs=1e-5)
    x, y = unit(rng, 6), unit(rng, 6)
    p = [3.0, 2, 5]
    assert cos_st(x, p, y, p, CFG6) == pytest.approx(float(np.dot(x, y)), abs=1e-12)
    assert cos_st(x, p, x, p, CFG6) == pytest.approx(1.0)
    assert dist_st(x, p, x, p, CFG6) == 0.0
    assert dist_st(x, p, -x, p, CFG6) == pytest.approx(2.0)


positions = st.tuples(st.floats(0, 200), st.integers(1, 40), st.integers(1, 40))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=positions, q=positions, shift=positions)
def test_rotation_invariants(seed, p, q, shift):
    rng = np.random.default_rng(seed)
    cfg = default_partition(36)
    x, y = unit(rng, 36), unit(rng, 36)
    assert abs(np.linalg.norm(rotate(x, p, cfg)) - 1) < 1e-6
    base = cos_st(x, p, y, q, cfg)
    moved = cos_st(x, np.add(p, shift), y, np.add(q, shift), cfg)
    assert abs(base - moved) < 1e-6
    assert abs(base - cos_st(y, q, x, p, cfg)) < 1e-12
    d = dist_st(x, p, y, q, cfg)
    assert 0 <= d <= 2
    assert abs(d * d + 2 * base - 2) < 1e-5


def test_axis_separability(rng):
    cfg = default_partition(18)
    for off, width in ((0, cfg.d_t), (cfg.d_t + cfg.d_h, cfg.d_w)):
        x = np.zeros(18)
        y = np.zeros(18)
        x[off : off + width] = unit(rng, width)
        y[off : off + width] = unit(rng, width)
        a = cos_st(x, [1.5, 2, 3], y, [2.0, 2, 4], cfg)
        b = cos_st(x, [1.5, 2, 3], y, [2.0, 9, 4], cfg)  # only dh changes
        assert a == pytest.approx(b, abs=1e-14)


def test_grid_positions():
    pos = grid_positions([0, 1], [0, 5], [0.0, 0.5], width=4)
    assert pos.tolist() == [[0.0, 1.0, 1.0], [0.5, 2.0, 2.0]]
    assert grid_positions([1], [5], [0.0, 0.5], width=4, tsa=False).tolist() == [[1.0, 2.0, 2.0]]


def test_partial_sums_at_zero():
    theta = section_frequencies(10, 1e4)
    assert partial_sum_magnitude(theta, 0) == sum(range(1, 6))


def test_coefficients_reproduce_rotated_dot(rng):
    x, y = unit(rng, 8), unit(rng, 8)
    cfg = RopeConfig(8, 2, 2)
    theta = section_frequencies(8, 1e4)
    for m in (0.0, 1.0, 7.5, 300.0):
        lhs = np.real(np.sum(pair_coefficients(x, y) * np.exp(1j * m * theta)))
        rhs = np.dot(np.concatenate([x, [1, 0, 1, 0]]), rotate(np.concatenate([y, [1, 0, 1, 0]]), [m, 0, 0], cfg)) - 2
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_identical_vectors_magnitude_one_at_zero():
    pts = decay_envelope(default_partition(48), "h", [0], trials=16, identical=True)
    assert pts[0].mean_magnitude == pytest.approx(1.0, abs=1e-12)
    assert pts[0].mean_bound >= pts[0].mean_magnitude - 1e-12


def test_decay_on_default_temporal_section():
    cfg = default_partition(3554)
    pts = decay_envelope(cfg, "t", [1, 10, 100, 1000], trials=8)
    norm = [p.normalized for p in pts]
    assert norm[0] == 1.0
    assert norm[2] < norm[0]
    assert norm == sorted(norm, reverse=True)
    for p in pts:
        assert p.mean_bound >= p.mean_magnitude


def test_decay_envelope_validation():
    cfg = default_partition(12)
    with pytest.raises(ConfigError):
        decay_envelope(cfg, "x", [1])
    with pytest.raises(ConfigError):
        decay_envelope(cfg, "t", [-1])
    with pytest.raises(ConfigError):
        decay_envelope(cfg, "t", [1], trials=0)
