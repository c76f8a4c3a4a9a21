import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdmplab import modulate
from pdmplab.errors import DegenerateContributionError, InputError
from pdmplab.model import GradientSet, HeadGrads
from pdmplab.modulate import (
    Balanced, DependencyCoefficient, NaiveLRScale, PDMP, Vanilla, apply_strategy,
    compute_w, contribution_shares, coefficient_from_contributions, select_gamma_r,
)
from pdmplab.numkit import Rng


class FakeProfile:
    def __init__(self, m_p, m_o):
        self.m_p = m_p
        self.m_o = m_o


def random_grads(seed=0, k=2, gated=False, shared_bias=True):
    rng = Rng(seed)
    encoders = [
        [(rng.child(f"w{i}{l}").normal((4, 3)), rng.child(f"b{i}{l}").normal(4))
         for l in range(2)]
        for i in range(k)
    ]
    head = HeadGrads(
        weights=[rng.child(f"hw{i}").normal((3, 4)) for i in range(k)],
        biases=[rng.child("hb").normal(3)] if shared_bias
               else [rng.child(f"hb{i}").normal(3) for i in range(k)],
        gate_weights=[rng.child(f"gw{i}").normal(4) for i in range(k)] if gated else [],
        gate_biases=[rng.child(f"gb{i}").normal(1) for i in range(k)] if gated else [],
    )
    return GradientSet(encoders=encoders, head=head)


def grads_equal(a: GradientSet, b: GradientSet) -> bool:
    for la, lb in zip(a.encoders, b.encoders):
        for (wa, ba), (wb, bb) in zip(la, lb):
            if wa.tobytes() != wb.tobytes() or ba.tobytes() != bb.tobytes():
                return False
    for xa, xb in zip(a.head.weights + a.head.biases + a.head.gate_weights
                      + a.head.gate_biases,
                      b.head.weights + b.head.biases + b.head.gate_weights
                      + b.head.gate_biases):
        if xa.tobytes() != xb.tobytes():
            return False
    return True


class TestComputeW:
    def test_forced_arithmetic(self):
        assert compute_w(np.array([2.0, -2.0]), np.array([1.0, 1.0])) == 2.0

    def test_equal_contributions(self):
        s = np.array([[0.5, -1.5], [2.0, 0.0]])
        assert compute_w(s, s) == 1.0

    def test_zero_denominator_raises(self):
        with pytest.raises(DegenerateContributionError):
            compute_w(np.ones((2, 2)), np.zeros((2, 2)))

    def test_batch_size_mismatch(self):
        with pytest.raises(InputError):
            compute_w(np.ones((2, 3)), np.ones((4, 3)))

    @given(st.floats(min_value=1e-6, max_value=1e6), st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_positive_homogeneity(self, a, seed):
        rng = Rng(seed)
        s1 = rng.normal((3, 4))
        s2 = rng.normal((3, 4)) + 0.1
        lhs = compute_w(a * s1, s2)
        rhs = a * compute_w(s1, s2)
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))


class TestShares:
    def test_two_modality_consistency_with_w(self):
        s1 = np.array([[2.0, -2.0]])
        s2 = np.array([[1.0, 1.0]])
        shares = contribution_shares([s1, s2])
        assert shares == (pytest.approx(2 / 3, abs=1e-15), pytest.approx(1 / 3, abs=1e-15))
        assert shares[0] / shares[1] == pytest.approx(compute_w(s1, s2), rel=1e-12)

    def test_identical_contributions_give_uniform_shares(self):
        s = np.array([[1.0, -3.0], [0.5, 2.0]])
        shares = contribution_shares([s, s.copy(), s.copy()])
        assert all(v == pytest.approx(1 / 3, abs=1e-12) for v in shares)

    def test_matches_bruteforce_resummation(self):
        rng = Rng(17)
        s = [rng.child(f"s{i}").normal((5, 4)) for i in range(3)]
        shares = contribution_shares(s)
        totals = []
        for si in s:
            acc = 0.0
            for v in si.ravel():
                acc += abs(float(v))
            totals.append(acc)
        for got, t in zip(shares, totals):
            assert got == pytest.approx(t / sum(totals), rel=1e-12)

    def test_all_zero_raises(self):
        with pytest.raises(DegenerateContributionError):
            contribution_shares([np.zeros((2, 2)), np.zeros((2, 2))])

    @given(st.integers(0, 500), st.integers(2, 5))
    @settings(max_examples=25, deadline=None)
    def test_shares_sum_to_one(self, seed, k):
        rng = Rng(seed)
        s = [rng.child(str(i)).normal((3, 3)) for i in range(k)]
        shares = contribution_shares(s)
        assert abs(sum(shares) - 1.0) <= 1e-12
        assert all(v >= 0 for v in shares)


class TestSelectGammaR:
    @pytest.mark.parametrize("gamma", [1.0, 2.0, 15.0, 100.0])
    def test_case_split_two_modalities(self, gamma):
        # remaining modality is optimization-dominant: suppress
        assert select_gamma_r(gamma, m_p=1, m_o=0, m_i=0) == 1.0 / gamma
        # dominant modality is also optimization-dominant: accelerate the rest
        assert select_gamma_r(gamma, m_p=0, m_o=0, m_i=1) == gamma

    def test_documented_regime_values(self):
        assert select_gamma_r(15.0, m_p=1, m_o=0, m_i=0) == pytest.approx(1 / 15)
        assert select_gamma_r(15.0, m_p=0, m_o=0, m_i=1) == 15.0

    def test_neutral_coefficient(self):
        assert select_gamma_r(1.0, m_p=0, m_o=1, m_i=1) == 1.0

    @pytest.mark.parametrize("gamma", [2.0, 15.0, 100.0])
    def test_reciprocity_exact(self, gamma):
        assert gamma * select_gamma_r(gamma, m_p=1, m_o=0, m_i=0) == 1.0

    def test_three_modality_extension(self):
        # only the optimization-dominant modality is suppressed
        assert select_gamma_r(10.0, m_p=0, m_o=1, m_i=1) == 0.1
        assert select_gamma_r(10.0, m_p=0, m_o=1, m_i=2) == 10.0

    def test_m_i_equal_m_p_rejected(self):
        with pytest.raises(InputError):
            select_gamma_r(2.0, m_p=0, m_o=1, m_i=0)

    def test_gamma_below_one_rejected(self):
        with pytest.raises(InputError):
            select_gamma_r(0.5, m_p=0, m_o=1, m_i=1)
        with pytest.raises(InputError):
            PDMP(gamma_p=0.9, profile=FakeProfile(0, 1))


class TestApplyStrategy:
    def test_vanilla_is_identity(self):
        grads = random_grads()
        out = apply_strategy(grads, Vanilla())
        assert grads_equal(out, grads)

    def test_zero_gradients_stay_zero(self):
        grads = random_grads()
        for layers in grads.encoders:
            for w, b in layers:
                w[:] = 0.0
                b[:] = 0.0
        for arr in grads.head.weights + grads.head.biases:
            arr[:] = 0.0
        for strategy in (Vanilla(), NaiveLRScale(3.0),
                         PDMP(10.0, FakeProfile(1, 0)),
                         Balanced(1.0)):
            out = apply_strategy(grads, strategy,
                                 DependencyCoefficient(1.0, (0.5, 0.5)))
            assert not np.any(out.encoders[0][0][0])
            assert not np.any(out.head.weights[0])

    def test_pdmp_scales_encoders_and_spares_head(self):
        grads = random_grads(seed=2)
        strategy = PDMP(10.0, FakeProfile(1, 0))
        out = apply_strategy(grads, strategy)
        for (w1, b1), (w0, b0) in zip(out.encoders[1], grads.encoders[1]):
            assert w1.tobytes() == (w0 * 10.0).tobytes()
            assert b1.tobytes() == (b0 * 10.0).tobytes()
        for (w1, b1), (w0, b0) in zip(out.encoders[0], grads.encoders[0]):
            assert w1.tobytes() == (w0 * 0.1).tobytes()
        # head blocks bitwise untouched (same arrays)
        assert out.head.weights[0] is grads.head.weights[0]
        assert out.head.biases[0] is grads.head.biases[0]

    def test_pdmp_gamma_one_is_identity(self):
        grads = random_grads(seed=3)
        out = apply_strategy(grads, PDMP(1.0, FakeProfile(0, 1)))
        assert grads_equal(out, grads)

    def test_pdmp_index_bounds_checked(self):
        grads = random_grads(k=2)
        with pytest.raises(InputError):
            apply_strategy(grads, PDMP(2.0, FakeProfile(2, 0)))

    def test_balanced_fixed_point_at_uniform_shares(self):
        grads = random_grads(seed=4, k=3, shared_bias=False)
        coeff = DependencyCoefficient(1.0, (1 / 3, 1 / 3, 1 / 3))
        out = apply_strategy(grads, Balanced(alpha=1.0), coeff)
        assert grads_equal(out, grads)

    def test_balanced_damps_dominant_modality(self):
        grads = random_grads(seed=5)
        coeff = DependencyCoefficient(3.0, (0.75, 0.25))
        out = apply_strategy(grads, Balanced(alpha=1.0), coeff)
        expected = 1.0 / (1.0 + 1.0 * (2 * 0.75 - 1.0))
        w_out = out.encoders[0][0][0]
        assert w_out.tobytes() == (grads.encoders[0][0][0] * expected).tobytes()
        assert out.encoders[1][0][0].tobytes() == grads.encoders[1][0][0].tobytes()

    def test_balanced_requires_coefficient(self):
        with pytest.raises(InputError):
            apply_strategy(random_grads(), Balanced(1.0), None)

    def test_naive_scales_every_block(self):
        grads = random_grads(seed=6, gated=True, shared_bias=False)
        out = apply_strategy(grads, NaiveLRScale(4.0))
        assert out.encoders[0][0][0].tobytes() == (grads.encoders[0][0][0] * 4.0).tobytes()
        assert out.head.weights[1].tobytes() == (grads.head.weights[1] * 4.0).tobytes()
        assert out.head.biases[0].tobytes() == (grads.head.biases[0] * 4.0).tobytes()
        assert out.head.gate_weights[1].tobytes() == (grads.head.gate_weights[1] * 4.0).tobytes()

    def test_direction_preservation_all_strategies(self):
        coeff = DependencyCoefficient(2.0, (2 / 3, 1 / 3))
        cases = [
            (Vanilla(), [1.0, 1.0]),
            (NaiveLRScale(2.5), [2.5, 2.5]),
            (PDMP(8.0, FakeProfile(1, 0)), [0.125, 8.0]),
            (PDMP(8.0, FakeProfile(0, 0)), [8.0, 8.0]),
            (Balanced(2.0), [1.0 / (1.0 + 2.0 * (2 * 2 / 3 - 1.0)), 1.0]),
        ]
        for strategy, factors in cases:
            grads = random_grads(seed=8)
            out = apply_strategy(grads, strategy, coeff)
            for i, factor in enumerate(factors):
                for (w1, b1), (w0, b0) in zip(out.encoders[i], grads.encoders[i]):
                    assert w1.tobytes() == (w0 * factor).tobytes()
                    assert b1.tobytes() == (b0 * factor).tobytes()
                    assert factor > 0

    def test_scale_head_partitions_flag(self):
        grads = random_grads(seed=9, shared_bias=True)
        strategy = PDMP(5.0, FakeProfile(1, 0))
        out = apply_strategy(grads, strategy, scale_head_partitions=True)
        assert out.head.weights[1].tobytes() == (grads.head.weights[1] * 5.0).tobytes()
        assert out.head.weights[0].tobytes() == (grads.head.weights[0] * 0.2).tobytes()
        # the bias shared across modalities is never per-modality scaled
        assert out.head.biases[0] is grads.head.biases[0]


def test_coefficient_from_contributions():
    rng = Rng(30)
    s = [rng.child("a").normal((4, 3)), rng.child("b").normal((4, 3))]
    coeff = coefficient_from_contributions(s)
    assert coeff.w == pytest.approx(compute_w(s[0], s[1]), rel=1e-12)
    assert abs(sum(coeff.shares) - 1.0) < 1e-12
