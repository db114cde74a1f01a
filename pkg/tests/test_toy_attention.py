import math

import numpy as np
import pytest

from layerscale.curve import ScaleSchedule
from layerscale.rope import entropy
from layerscale.toy_attention import (
    RetrievalTask,
    ToyModel,
    ToyModelConfig,
    ToyRetrievalEvaluator,
    accuracy_from_rows,
    forward,
    middle_similarity_sweep,
    probe_first_block_similarity,
    probe_middle_vs_last,
    readout_rows_for_trials,
    retrieval_accuracy,
    token_stream,
    write_position_similarity_csv,
    write_scale_similarity_csv,
)

SMALL = ToyModelConfig(n_layers=4, n_heads=2, head_dim=16, seq_len=128, weight_seed=5)


@pytest.fixture(scope="module")
def small_model():
    return ToyModel(SMALL)


@pytest.fixture(scope="module")
def small_tokens():
    return token_stream(SMALL, (99, 0))


def uniform(n, s):
    return ScaleSchedule(tuple([float(s)] * n))


class TestForward:
    def test_deterministic(self, small_model, small_tokens):
        a = forward(small_model, small_tokens)
        b = forward(small_model, small_tokens)
        assert all(np.array_equal(x, y) for x, y in zip(a.states, b.states))
        assert all(np.array_equal(x, y) for x, y in zip(a.attentions, b.attentions))

    def test_all_ones_schedule_matches_unscaled(self, small_model, small_tokens):
        plain = forward(small_model, small_tokens)
        ones = forward(small_model, small_tokens, uniform(4, 1.0))
        assert all(np.array_equal(x, y) for x, y in zip(plain.states, ones.states))

    def test_rows_stochastic_and_causal(self, small_model, small_tokens):
        fwd = forward(small_model, small_tokens)
        for attn in fwd.attentions:
            assert np.allclose(attn.sum(axis=2), 1.0, atol=1e-6)
            iu = np.triu_indices(attn.shape[1], k=1)
            assert np.all(attn[:, iu[0], iu[1]] == 0.0)

    def test_rope_ablation_changes_states(self, small_model, small_tokens):
        normal = forward(small_model, small_tokens, want_attention=False)
        ablated = forward(
            small_model, small_tokens, rope_disabled_layers={1, 2}, want_attention=False
        )
        assert not np.allclose(normal.states[3], ablated.states[3])

    def test_scaling_changes_states(self, small_model, small_tokens):
        a = forward(small_model, small_tokens, uniform(4, 1.0), want_attention=False)
        b = forward(small_model, small_tokens, uniform(4, 1.5), want_attention=False)
        assert not np.allclose(a.states[-1], b.states[-1])

    def test_schedule_length_guard(self, small_model, small_tokens):
        with pytest.raises(ValueError):
            forward(small_model, small_tokens, uniform(3, 1.0))

    def test_first_scaled_layer_offset(self, small_model, small_tokens):
        sched = ScaleSchedule((1.5, 1.5), first_scaled_layer=2)
        scales = small_model.layer_scales(sched)
        assert scales.tolist() == [1.0, 1.0, 1.5, 1.5]

    def test_attention_entropy_bounds(self, small_model, small_tokens):
        fwd = forward(small_model, small_tokens)
        attn = fwd.attentions[1]
        for h in range(attn.shape[0]):
            for i in (0, 5, 63, 127):
                row = attn[h, i, : i + 1]
                val = entropy(row)
                assert -1e-12 <= val <= math.log(i + 1) + 1e-12


class TestProbes:
    def test_block_mean_state_has_similarity_one(self):
        states = np.tile(np.arange(8.0), (20, 1))
        pos, sims, excluded = probe_first_block_similarity(states, block=4)
        assert excluded == 0
        assert np.allclose(sims, 1.0)

    def test_orthogonal_state_has_similarity_zero(self):
        states = np.zeros((6, 4))
        states[:4, 0] = 1.0   # block along e0
        states[4, 1] = 1.0    # orthogonal
        states[5, 0] = 1.0
        _, sims, _ = probe_first_block_similarity(states, block=4)
        assert sims[0] == pytest.approx(0.0, abs=1e-12)
        assert sims[1] == pytest.approx(1.0, abs=1e-12)

    def test_zero_norm_states_excluded(self):
        states = np.zeros((6, 4))
        states[:4, 0] = 1.0
        states[5, 0] = 1.0
        pos, sims, excluded = probe_first_block_similarity(states, block=4)
        assert excluded == 1
        assert list(pos) == [5]

    def test_sequence_shorter_than_block(self):
        with pytest.raises(ValueError):
            probe_first_block_similarity(np.ones((4, 2)), block=8)

    def test_middle_vs_last_constant(self):
        states = np.ones((30, 8))
        assert probe_middle_vs_last(states) == pytest.approx(1.0, abs=1e-12)

    def test_middle_vs_last_orthogonal(self):
        states = np.zeros((9, 4))
        states[3:6, 0] = 1.0   # middle third along e0
        states[8, 1] = 1.0     # last token along e1
        assert probe_middle_vs_last(states) == pytest.approx(0.0, abs=1e-12)

    def test_sweep_smoke(self, small_model):
        vals = middle_similarity_sweep(small_model, [1.0, 2.0], n_streams=2)
        assert len(vals) == 2
        assert all(-1.0 <= v <= 1.0 for v in vals)

    def test_csv_exports(self, tmp_path):
        p1 = tmp_path / "pos.csv"
        write_position_similarity_csv(p1, [128, 129], [0.5, 0.25])
        assert p1.read_text().splitlines() == [
            "position,similarity", "128,0.5", "129,0.25"
        ]
        p2 = tmp_path / "scale.csv"
        write_scale_similarity_csv(p2, [1.0, 1.5], [0.7, 0.75])
        assert p2.read_text().splitlines()[0] == "scale,similarity"


class TestRetrieval:
    def test_positions_must_be_ordered(self):
        with pytest.raises(ValueError):
            RetrievalTask((10, 10, 20), 1.0)

    def test_huge_margin_hits_everywhere(self, small_model):
        task = RetrievalTask.default_for(SMALL, content_margin=1e6)
        acc = retrieval_accuracy(small_model, task, uniform(4, 1.0), trials=4)
        assert (acc.first, acc.middle, acc.last) == (100.0, 100.0, 100.0)

    def test_zero_margin_proximity_order(self, small_model):
        task = RetrievalTask.default_for(SMALL, content_margin=0.0)
        acc = retrieval_accuracy(small_model, task, uniform(4, 1.0), trials=4)
        assert acc.last >= acc.middle

    def test_margin_monotone(self, small_model):
        task = RetrievalTask.default_for(SMALL)
        rows = readout_rows_for_trials(small_model, task, uniform(4, 1.0), 6)
        middles = [accuracy_from_rows(rows, task, m).middle for m in (0.0, 8.0, 64.0, 1e6)]
        assert middles == sorted(middles)
        assert middles[-1] == 100.0

    def test_evaluator_is_pure(self, small_model):
        task = RetrievalTask.default_for(SMALL)
        ev = ToyRetrievalEvaluator(small_model, task, trials=3)
        s = uniform(4, 1.2)
        assert ev.evaluate(s) == ev.evaluate(s)

    def test_default_positions_for_long_context(self):
        cfg = ToyModelConfig()
        task = RetrievalTask.default_for(cfg)
        assert task.planted_positions == (10, 247, 500)
