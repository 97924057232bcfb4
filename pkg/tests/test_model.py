import json

import numpy as np
import pytest
from scipy.special import log_softmax as scipy_log_softmax

from token2wave.diagnostics import FULL_MODEL_OPS, count_params, grad_check
from token2wave.exceptions import DegenerateInputError, DimensionError, LabelError, LookupIdError
from token2wave.model import (
    CLS_ID,
    GradBundle,
    ModelParams,
    backward,
    forward,
    gelu,
    gelu_grad,
    grad_norms,
    init_params,
    layer_norm,
    load_params,
    loss,
    loss_from_logits,
    params_from_dict,
    params_to_dict,
    save_params,
)
from token2wave.tensor_core import make_rng

# Logits of the hand-set B=1, n=2, d=2, C=2 network, from a scalar pure-python
# walk-through (math module only, loops per entry), frozen here.
WALKTHROUGH = {
    ("modulation", "real"): [-0.9226297342681085, 1.011810815853454],
    ("modulation", "magnitude"): [0.6993088661027376, 0.4067813196034465],
    ("interference", "real"): [1.2295830320223267, -1.37953670224703],
    ("interference", "magnitude"): [0.7746239392548643, 0.4624818071887124],
}


def hand_params():
    embed = np.zeros((3, 2))
    embed[1] = [0.5, -1.0]
    embed[2] = [1.5, 0.25]
    return ModelParams(
        embed=embed,
        w_src=np.array([[1.0, 0.5], [-0.5, 1.0]]), b_src=np.array([0.1, -0.2]),
        w_tgt=np.array([[0.8, -0.3], [0.2, 0.6]]), b_tgt=np.array([0.0, 0.3]),
        ff1_w=np.array([[0.1 * ((i + 2 * j) % 5 - 2) for j in range(8)] for i in range(2)]),
        ff1_b=np.array([0.05 * (j - 4) for j in range(8)]),
        ff2_w=np.array([[0.1 * ((3 * i + j) % 7 - 3) for j in range(2)] for i in range(8)]),
        ff2_b=np.array([0.02, -0.04]),
        norm_real_scale=np.array([1.2, 0.8]), norm_real_shift=np.array([0.1, -0.1]),
        norm_imag_scale=np.array([0.9, 1.1]), norm_imag_shift=np.array([0.0, 0.2]),
        clf_w=np.array([[0.7, -0.4], [-0.3, 0.9]]), clf_b=np.array([0.05, -0.05]),
    )


def random_batch(rng, vocab=20, batch=5, n=6):
    ids = rng.integers(2, vocab, size=(batch, n))
    ids[:, 0] = CLS_ID
    return ids


@pytest.fixture
def small():
    rng = make_rng(0)
    params = init_params(20, 6, 3, rng)
    return params, random_batch(rng), rng.integers(0, 3, 5)


class TestForward:
    @pytest.mark.parametrize("mode,rule", sorted(WALKTHROUGH))
    def test_hand_walkthrough(self, mode, rule):
        logits = forward(hand_params(), np.array([[1, 2]]), mode, recombine_rule=rule).logits
        np.testing.assert_allclose(logits[0], WALKTHROUGH[mode, rule], rtol=0, atol=1e-12)

    def test_zero_params_give_bias(self):
        params = init_params(10, 4, 3, 0).zeros_like()
        params.clf_b[:] = [0.5, -1.0, 2.0]
        trace = forward(params, random_batch(make_rng(1), vocab=10))
        np.testing.assert_allclose(trace.logits, np.broadcast_to([0.5, -1.0, 2.0], trace.logits.shape))
        params.clf_b[:] = 0
        np.testing.assert_allclose(forward(params, random_batch(make_rng(1), vocab=10)).probs, 1 / 3)

    @pytest.mark.parametrize("mode", ["modulation", "interference"])
    def test_probabilities_normalised(self, small, mode):
        params, ids, _ = small
        assert np.max(np.abs(forward(params, ids, mode).probs.sum(axis=1) - 1)) < 1e-9

    def test_modes_differ(self, small):
        params, ids, _ = small
        a = forward(params, ids, "modulation")
        b = forward(params, ids, "interference")
        assert np.max(np.abs(a.combined.real - b.combined.real)) > 1e-6
        assert np.max(np.abs(a.logits - b.logits)) > 1e-6

    def test_padding_is_ignored(self):
        params = init_params(12, 4, 2, 3)
        ids = np.array([[CLS_ID, 4, 5, 6]])
        padded = np.array([[CLS_ID, 4, 5, 6, 0, 0]])
        mask = padded != 0
        a = forward(params, ids, "modulation")
        b = forward(params, padded, "modulation", mask=mask)
        np.testing.assert_allclose(b.logits, a.logits, atol=1e-13)

    def test_unknown_id(self, small):
        params, ids, _ = small
        ids = ids.copy()
        ids[0, 2] = 99
        with pytest.raises(LookupIdError):
            forward(params, ids)

    def test_missing_cls(self, small):
        params, ids, _ = small
        with pytest.raises(DimensionError):
            forward(params, ids[:, 1:])

    def test_cls_only(self, small):
        params, ids, _ = small
        with pytest.raises(DegenerateInputError):
            forward(params, ids[:, :1])

    def test_cls_cannot_be_masked(self, small):
        params, ids, _ = small
        mask = np.ones(ids.shape, dtype=bool)
        mask[0, 0] = False
        with pytest.raises(DimensionError):
            forward(params, ids, mask=mask)

    def test_unknown_mode(self, small):
        params, ids, _ = small
        with pytest.raises(ValueError):
            forward(params, ids, "superposition")


class TestLoss:
    def test_uniform(self):
        assert loss_from_logits(np.zeros((3, 4)), [0, 1, 3]) == pytest.approx(np.log(4), abs=1e-15)

    def test_confident(self):
        assert loss_from_logits(np.array([[50.0, 0.0]]), [0]) < 1e-20

    def test_matches_reference(self):
        rng = make_rng(2)
        logits = rng.standard_normal((7, 5)) * 3
        y = rng.integers(0, 5, 7)
        expected = -np.mean(scipy_log_softmax(logits, axis=1)[np.arange(7), y])
        assert abs(loss_from_logits(logits, y) - expected) < 1e-10

    def test_shift_invariance(self):
        rng = make_rng(3)
        logits = rng.standard_normal((6, 4))
        y = rng.integers(0, 4, 6)
        assert abs(loss_from_logits(logits + 123.4, y) - loss_from_logits(logits, y)) < 1e-10

    @pytest.mark.parametrize("labels", [[0, 4], [0, -1], [0.0, 1.0], [0]])
    def test_bad_labels(self, labels):
        with pytest.raises((LabelError, DimensionError)):
            loss_from_logits(np.zeros((2, 4)), np.array(labels))


class TestBackward:
    def test_classifier_closed_form(self, small):
        params, ids, y = small
        trace = forward(params, ids)
        grads = backward(params, trace, y).params
        onehot = np.eye(3)[y]
        np.testing.assert_allclose(grads.clf_w, trace.cls_output.T @ (trace.probs - onehot) / len(y), atol=1e-15)
        np.testing.assert_allclose(grads.clf_b, (trace.probs - onehot).mean(axis=0), atol=1e-15)

    def test_saturated_fixed_point(self, small):
        params, ids, _ = small
        params = params.copy()
        params.clf_w[:] = 0
        params.clf_b[:] = [1000.0, -1000.0, -1000.0]
        trace = forward(params, ids)
        grads = backward(params, trace, np.zeros(len(ids), dtype=np.int64)).params
        np.testing.assert_array_equal(grads.clf_w, 0.0)
        np.testing.assert_array_equal(grads.clf_b, 0.0)

    @pytest.mark.parametrize("op", FULL_MODEL_OPS)
    def test_full_model_finite_difference(self, op):
        rng = make_rng(4)
        assert max(grad_check(op, rng=rng) for _ in range(5)) < 1e-3

    def test_gradient_reaches_every_token(self, small):
        params, ids, y = small
        bundle = backward(params, forward(params, ids, "modulation"), y)
        assert np.all(np.linalg.norm(bundle.context_rows, axis=-1) > 1e-8)

    def test_embedding_table_accumulates(self, small):
        params, ids, y = small
        bundle = backward(params, forward(params, ids), y)
        expected = np.zeros_like(params.embed)
        for b in range(ids.shape[0]):
            for j in range(ids.shape[1]):
                expected[ids[b, j]] += bundle.embedded[b, j]
        np.testing.assert_allclose(bundle.params.embed, expected, atol=1e-15)

    def test_padded_positions_get_no_gradient(self):
        params = init_params(12, 4, 2, 5)
        ids = np.array([[CLS_ID, 4, 5, 0], [CLS_ID, 6, 7, 8]])
        bundle = backward(params, forward(params, ids, mask=ids != 0), np.array([0, 1]))
        np.testing.assert_array_equal(bundle.embedded[0, 3], 0.0)


class TestGradNorms:
    def make_bundle(self):
        params = init_params(4, 2, 2, 0).zeros_like()
        return GradBundle(params, np.zeros((1, 3, 2)), np.ones((1, 3), dtype=bool))

    def test_zero(self):
        r = grad_norms(self.make_bundle())
        assert (r.cls, r.input, r.clf) == (0.0, 0.0, 0.0)

    def test_single_entries(self):
        bundle = self.make_bundle()
        bundle.embedded[0, 0, 1] = 3.0
        bundle.params.clf_w[1, 0] = 4.0
        r = grad_norms(bundle)
        assert (r.cls, r.input, r.clf) == (3.0, 3.0, 4.0)

    def test_random(self, small):
        params, ids, y = small
        bundle = backward(params, forward(params, ids), y)
        r = grad_norms(bundle)
        assert abs(r.cls - np.sqrt(np.sum(bundle.embedded[:, 0] ** 2))) < 1e-12
        assert abs(r.input - np.sqrt(np.sum(bundle.embedded**2))) < 1e-12
        clf = np.sqrt(np.sum(bundle.params.clf_w**2) + np.sum(bundle.params.clf_b**2))
        assert abs(r.clf - clf) < 1e-12


class TestLayers:
    def test_gelu_values(self):
        # x * Phi(x) with Phi from the erf definition
        np.testing.assert_allclose(gelu(np.array([0.0, 1.0, -1.0])), [0.0, 0.8413447460685429, -0.15865525393145707])

    def test_gelu_grad(self):
        x = np.linspace(-3, 3, 13)
        numeric = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6
        np.testing.assert_allclose(gelu_grad(x), numeric, atol=1e-9)

    def test_layer_norm_statistics(self):
        x = make_rng(6).standard_normal((4, 16)) * 5 + 3
        out, _, _ = layer_norm(x, np.ones(16), np.zeros(16))
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-5)


class TestParams:
    def test_init_shapes(self):
        p = init_params(30, 8, 4, 0)
        assert p.embed.shape == (30, 8) and p.ff1_w.shape == (8, 32) and p.clf_w.shape == (8, 4)
        np.testing.assert_array_equal(p.clf_b, 0.0)
        assert np.all(np.abs(p.w_src) <= 1 / np.sqrt(8))

    @pytest.mark.parametrize("d", [1, 2, 16, 64])
    def test_wave_layer_count_matches_report(self, d):
        p = init_params(5, d, 2, 0)
        assert p.wave_layer_size() == count_params(d)["architecture_total"]

    def test_checkpoint_round_trip(self, tmp_path):
        p = init_params(9, 3, 2, 7)
        save_params(p, tmp_path / "p.json")
        q = load_params(tmp_path / "p.json")
        for name, value in p.items():
            np.testing.assert_array_equal(getattr(q, name), value)

    def test_checkpoint_format(self):
        payload = params_to_dict(init_params(4, 2, 2, 0))
        assert payload["format"] == "token2wave-params" and payload["version"] == 1
        assert payload["params"]["ff1_w"]["shape"] == [2, 8]
        json.dumps(payload)

    def test_checkpoint_rejects_garbage(self):
        with pytest.raises(ValueError):
            params_from_dict({"format": "something-else"})

    def test_bad_sizes(self):
        with pytest.raises(DimensionError):
            init_params(5, 4, 1)
