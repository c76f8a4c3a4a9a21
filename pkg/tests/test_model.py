import numpy as np
import pytest

from pdmplab import model, numkit
from pdmplab.errors import InputError, ShapeError
from pdmplab.model import (
    backward, branch_accuracy, decompose_logits, flatten_grads, flatten_params,
    forward, init_model, load_checkpoint, param_grad_pairs, save_checkpoint,
    unflatten_like,
)
from pdmplab.numkit import Rng, finite_diff_grad, max_relative_error, softmax_cross_entropy


def make_state(fusion="concat", k=2, m=4, dims=(5, 7, 6), widths=(6, 4), seed=0):
    return init_model(list(dims[:k]), m, list(widths), fusion, Rng(seed).child("init"))


def random_batch(state, batch=6, seed=1):
    rng = Rng(seed)
    feats = [rng.child(f"x{i}").normal((batch, d)) for i, d in enumerate(state.input_dims)]
    labels = (rng.child("y").random_u64(batch) % np.uint64(state.num_classes)).astype(np.int64)
    return feats, labels


class TestForward:
    def test_zero_weight_head_gives_bias(self):
        state = make_state("concat")
        for w in state.head.weights:
            w[:] = 0.0
        state.head.biases[0][:] = np.arange(4.0)
        feats, _ = random_batch(state)
        logits, _ = forward(state, feats)
        assert np.allclose(logits, np.arange(4.0))

    def test_single_modality_degenerate_config(self):
        state = make_state("concat", k=1)
        feats, _ = random_batch(state)
        logits, cache = forward(state, feats)
        direct = numkit.affine(cache.z[0], state.head.weights[0], state.head.biases[0])
        assert np.allclose(logits, direct, atol=1e-12)

    @pytest.mark.parametrize("fusion", model.FUSION_KINDS)
    @pytest.mark.parametrize("k", [2, 3])
    def test_contribution_additivity(self, fusion, k):
        state = make_state(fusion, k=k)
        feats, _ = random_batch(state)
        logits, cache = forward(state, feats)
        total = cache.s[0].copy()
        for s in cache.s[1:]:
            total += s
        assert np.max(np.abs(total - logits)) < 1e-9

    def test_concat_matches_full_concatenated_head(self):
        # independent route: logits recomputed as W [z_1; z_2] + b
        state = make_state("concat")
        feats, _ = random_batch(state)
        logits, cache = forward(state, feats)
        z_f = np.concatenate(cache.z, axis=1)
        w_full = np.concatenate(state.head.weights, axis=1)
        ref = z_f @ w_full.T + state.head.biases[0]
        assert np.max(np.abs(logits - ref)) < 1e-9

    def test_wrong_modality_count(self):
        state = make_state()
        feats, _ = random_batch(state)
        with pytest.raises(ShapeError, match="expects 2 modalities"):
            forward(state, feats[:1])

    def test_wrong_dim(self):
        state = make_state()
        with pytest.raises(ShapeError, match="modality 1"):
            forward(state, [np.zeros((3, 5)), np.zeros((3, 99))])


class TestDecompose:
    def test_zeroed_second_modality_reduces_to_first(self):
        state = make_state("concat")
        state.head.biases[0][:] = 0.0
        feats, _ = random_batch(state)
        logits, cache = forward(state, feats)
        s = decompose_logits(state.head, [cache.z[0], np.zeros_like(cache.z[1])])
        assert np.allclose(s[1], 0.0)

    @pytest.mark.parametrize("fusion", model.FUSION_KINDS)
    def test_matches_forward_cache(self, fusion):
        state = make_state(fusion, k=3)
        feats, _ = random_batch(state)
        _, cache = forward(state, feats)
        s = decompose_logits(state.head, cache.z)
        for a, b in zip(s, cache.s):
            assert np.max(np.abs(a - b)) < 1e-12

    def test_partition_mismatch(self):
        state = make_state(k=2)
        with pytest.raises(ShapeError):
            decompose_logits(state.head, [np.zeros((2, 4))])


class TestBackward:
    @pytest.mark.parametrize("fusion", model.FUSION_KINDS)
    @pytest.mark.parametrize("k", [2, 3])
    def test_gradient_vs_finite_differences(self, fusion, k):
        state = make_state(fusion, k=k, seed=3)
        feats, labels = random_batch(state, seed=4)
        _, cache = forward(state, feats)
        _, grads = backward(cache, labels)

        def f(flat):
            logits, _ = forward(unflatten_like(state, flat), feats)
            return softmax_cross_entropy(logits, labels)[0]

        fd = finite_diff_grad(f, flatten_params(state))
        assert max_relative_error(flatten_grads(grads), fd) < 1e-4

    def test_symmetric_stationary_point_has_zero_bias_gradient(self):
        # zero head weights + balanced labels: softmax is uniform, so the
        # head-bias gradient cancels exactly over the batch
        state = make_state("concat", m=4)
        for w in state.head.weights:
            w[:] = 0.0
        state.head.biases[0][:] = 0.0
        feats, _ = random_batch(state, batch=8)
        labels = np.array([0, 1, 2, 3, 0, 1, 2, 3])
        _, cache = forward(state, feats)
        _, grads = backward(cache, labels)
        assert np.max(np.abs(grads.head.biases[0])) < 1e-15

    def test_duplicated_sample_reweights_mean_gradient(self):
        state = make_state("summation", seed=6)
        feats, labels = random_batch(state, batch=5, seed=7)
        dup_feats = [np.vstack([f, f[:1]]) for f in feats]
        dup_labels = np.concatenate([labels, labels[:1]])
        _, cache = forward(state, dup_feats)
        _, grads_dup = backward(cache, dup_labels)

        # explicit weighted recompute: per-sample grads, sample 0 counted twice
        weights = np.array([2.0, 1.0, 1.0, 1.0, 1.0]) / 6.0
        acc = None
        for i, w_i in enumerate(weights):
            _, c_i = forward(state, [f[i:i + 1] for f in feats])
            _, g_i = backward(c_i, labels[i:i + 1])
            flat = flatten_grads(g_i) * w_i
            acc = flat if acc is None else acc + flat
        assert max_relative_error(flatten_grads(grads_dup), acc) < 1e-9

    def test_gradient_shapes_mirror_parameters(self):
        for fusion in model.FUSION_KINDS:
            state = make_state(fusion, k=3)
            feats, labels = random_batch(state)
            _, cache = forward(state, feats)
            _, grads = backward(cache, labels)
            for p, g in param_grad_pairs(state, grads):
                assert p.shape == g.shape
                assert np.all(np.isfinite(g))


class TestBranchAccuracy:
    def test_untrained_model_near_chance(self):
        state = make_state(m=4, seed=8)
        rng = Rng(9)
        n = 4000
        feats = [rng.child(f"x{i}").normal((n, d)) for i, d in enumerate(state.input_dims)]
        labels = (rng.child("y").random_u64(n) % np.uint64(4)).astype(np.int64)
        acc = branch_accuracy(state, feats, labels, 0)
        sigma = np.sqrt(0.25 * 0.75 / n)
        assert abs(acc - 0.25) < 3 * sigma + 1e-9

    def test_positive_scaling_invariance(self):
        state = make_state(seed=10)
        feats, labels = random_batch(state, batch=32)
        _, cache = forward(state, feats)
        pred = np.argmax(cache.s[0], axis=1)
        pred_scaled = np.argmax(37.5 * cache.s[0], axis=1)
        assert np.array_equal(pred, pred_scaled)

    def test_bad_index(self):
        state = make_state()
        feats, labels = random_batch(state)
        with pytest.raises(InputError):
            branch_accuracy(state, feats, labels, 5)


class TestCheckpoint:
    @pytest.mark.parametrize("fusion", model.FUSION_KINDS)
    def test_round_trip_bitwise(self, fusion, tmp_path):
        state = make_state(fusion, k=2, seed=11)
        save_checkpoint(state, tmp_path / "ckpt")
        back = load_checkpoint(tmp_path / "ckpt")
        assert back.head.kind == fusion
        assert flatten_params(back).tobytes() == flatten_params(state).tobytes()

    def test_unflatten_size_check(self):
        state = make_state()
        with pytest.raises(ShapeError):
            unflatten_like(state, np.zeros(3))
