import math

import numpy as np
import pytest

from layerscale.rope import (
    RotaryConfig,
    attention_score,
    decay_curve,
    entropy,
    extrapolation_schedule,
    frequencies,
    ntk_base,
    rotate,
)


class TestFrequencies:
    def test_minimal_dim(self):
        assert frequencies(RotaryConfig(2)).tolist() == [1.0]

    def test_dim4(self):
        f = frequencies(RotaryConfig(4))
        assert f[0] == 1.0
        assert f[1] == pytest.approx(0.01, abs=1e-15)

    def test_strictly_decreasing(self):
        for d in (2, 8, 64, 128):
            f = frequencies(RotaryConfig(d))
            assert np.all(np.diff(f) < 0) or d == 2
            assert np.all(f > 0)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            RotaryConfig(3)
        with pytest.raises(ValueError):
            RotaryConfig(64, scale=0.5)


class TestRotate:
    def test_zero_position_identity(self):
        cfg = RotaryConfig(8)
        v = np.arange(8.0)
        assert rotate(v, 0, cfg).tolist() == v.tolist()

    def test_single_plane_by_hand(self):
        cfg = RotaryConfig(2)
        out = rotate([1.0, 0.0], 1, cfg)
        assert out[0] == pytest.approx(math.cos(1.0), abs=1e-15)
        assert out[1] == pytest.approx(math.sin(1.0), abs=1e-15)

    def test_norm_preserved(self):
        cfg = RotaryConfig(64)
        rng = np.random.default_rng(1)
        for _ in range(200):
            v = rng.normal(size=64)
            m = int(rng.integers(0, 10000))
            assert np.linalg.norm(rotate(v, m, cfg)) == pytest.approx(
                np.linalg.norm(v), rel=1e-12
            )

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rotate([1.0, 2.0, 3.0], 1, RotaryConfig(4))


class TestAttentionScore:
    def test_same_position_is_plain_dot(self):
        cfg = RotaryConfig(32)
        rng = np.random.default_rng(2)
        q, k = rng.normal(size=32), rng.normal(size=32)
        assert attention_score(q, k, 5, 5, cfg) == pytest.approx(float(q @ k), rel=1e-12)

    def test_relative_position_invariance(self):
        cfg = RotaryConfig(64)
        rng = np.random.default_rng(3)
        for _ in range(1000):
            q, k = rng.normal(size=64), rng.normal(size=64)
            m, n = int(rng.integers(0, 2000)), int(rng.integers(0, 2000))
            delta = int(rng.integers(0, 3000))
            a = attention_score(q, k, m, n, cfg)
            b = attention_score(q, k, m + delta, n + delta, cfg)
            assert a == pytest.approx(b, abs=1e-10 * max(1.0, abs(a)))

    def test_scale_distance_equivalence(self):
        rng = np.random.default_rng(4)
        scaled = RotaryConfig(64, scale=2.0)
        plain = RotaryConfig(64, scale=1.0)
        q, k = rng.normal(size=64), rng.normal(size=64)
        a = attention_score(q, k, 8, 0, scaled)
        b = attention_score(q, k, 4, 0, plain)
        assert a == pytest.approx(b, abs=1e-10)

    def test_scale_distance_equivalence_random(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            s = float(rng.integers(2, 5))
            d = int(rng.integers(0, 500))
            q, k = rng.normal(size=32), rng.normal(size=32)
            a = attention_score(q, k, s * d, 0, RotaryConfig(32, scale=s))
            b = attention_score(q, k, d, 0, RotaryConfig(32, scale=1.0))
            assert a == pytest.approx(b, abs=1e-10)


class TestDecayCurve:
    def test_distance_zero_is_probe_norm(self):
        curve = decay_curve(RotaryConfig(64), 16)
        assert curve.scores[0] == pytest.approx(64.0, abs=1e-12)

    def test_matches_attention_score(self):
        cfg = RotaryConfig(32, scale=1.5)
        curve = decay_curve(cfg, 64)
        probe = np.ones(32)
        for d in (0, 1, 17, 64):
            expected = attention_score(probe, probe, d, 0, cfg)
            assert curve.scores[d] == pytest.approx(expected, abs=1e-10)

    def test_integer_scale_stretch_identity(self):
        # score at scale s and distance s*d equals unscaled score at d
        unscaled = decay_curve(RotaryConfig(64), 512)
        stretched = decay_curve(RotaryConfig(64, scale=2.0), 1024)
        for d in range(0, 513, 7):
            assert stretched.scores[2 * d] == pytest.approx(
                unscaled.scores[d], abs=1e-9
            )

    def test_envelope_monotone_nonincreasing(self):
        curve = decay_curve(RotaryConfig(64), 2048)
        env = np.array(curve.envelope)
        assert np.all(np.diff(env) <= 1e-12)

    def test_scaled_envelope_dominates(self):
        cfg_1 = RotaryConfig(64, scale=1.0)
        cfg_15 = RotaryConfig(64, scale=1.5)
        e1 = np.array(decay_curve(cfg_1, 4096).envelope)
        e15 = np.array(decay_curve(cfg_15, 4096).envelope)
        assert np.all(e15[64:] >= e1[64:])

    def test_csv_export(self, tmp_path):
        path = tmp_path / "decay.csv"
        decay_curve(RotaryConfig(8), 4).write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "distance,score,envelope"
        assert len(lines) == 6


class TestEntropy:
    def test_uniform(self):
        assert entropy([1.0] * 8) == pytest.approx(math.log(8), abs=1e-12)

    def test_one_hot(self):
        assert entropy([0.0, 1.0, 0.0]) == 0.0

    def test_two_point(self):
        assert entropy([0.5, 0.5, 0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-12)

    def test_normalizes_first(self):
        assert entropy([2.0, 2.0]) == pytest.approx(math.log(2), abs=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(6)
        for _ in range(500):
            n = int(rng.integers(1, 50))
            w = rng.random(n)
            h = entropy(w)
            assert -1e-12 <= h <= math.log(n) + 1e-12

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            entropy([0.0, 0.0])
        with pytest.raises(ValueError):
            entropy([-1.0, 2.0])
        with pytest.raises(ValueError):
            entropy([])


class TestExtrapolationSchedule:
    def test_doubling_window(self):
        sched = extrapolation_schedule(32, 4096, 8192)
        assert sched.scales[0] == 2.0
        assert sched.scales[-1] == 2.0
        assert max(sched.scales) == pytest.approx(2.3, abs=1e-12)

    def test_zero_interval_is_uniform(self):
        sched = extrapolation_schedule(16, 4096, 8192, interval=0.0)
        assert all(s == 2.0 for s in sched.scales)

    def test_hand_derived_five_layers(self):
        sched = extrapolation_schedule(5, 4096, 5120, interval=0.3, peak_layer=2)
        assert list(sched.scales) == pytest.approx(
            [1.25, 1.40, 1.55, 1.40, 1.25], abs=1e-12
        )

    def test_piecewise_linear(self):
        sched = extrapolation_schedule(32, 4096, 8192, interval=0.3, peak_layer=16)
        v = np.array(sched.scales)
        rising = np.diff(v[: 16 + 1], 2)
        falling = np.diff(v[16:], 2)
        assert np.allclose(rising, 0.0, atol=1e-12)
        assert np.allclose(falling, 0.0, atol=1e-12)

    def test_shrinking_window_rejected(self):
        with pytest.raises(ValueError):
            extrapolation_schedule(8, 8192, 4096)


class TestNtkBase:
    def test_identity_factor(self):
        assert ntk_base(RotaryConfig(64), 1.0) == 10000.0

    def test_formula_value(self):
        got = ntk_base(RotaryConfig(128), 2.0)
        assert got == pytest.approx(10000.0 * 2.0 ** (128.0 / 126.0), rel=1e-15)
        assert got / 10000.0 == pytest.approx(2.0222, abs=5e-4)

    def test_frequencies_shrink(self):
        cfg = RotaryConfig(64)
        bigger = RotaryConfig(64, base=ntk_base(cfg, 4.0))
        f0, f1 = frequencies(cfg), frequencies(bigger)
        assert np.all(f1[1:] <= f0[1:])
        assert f1[0] == f0[0] == 1.0

    def test_small_dim_rejected(self):
        with pytest.raises(ValueError):
            ntk_base(RotaryConfig(2), 2.0)
