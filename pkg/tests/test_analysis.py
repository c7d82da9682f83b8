import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import adjusted_rand_score

from tdsbm.analysis import (adjusted_rand_index, aic, compare_models, degree_identity_residual,
                            format_selection_table, label_blocks, param_count, sample_network,
                            selection_table_csv)
from tdsbm.discrete import DiscreteModel, discrete_model
from tdsbm.mixed import MixedModel, rates
from tdsbm.synthetic import bump, commute_omega

from conftest import random_network

REFERENCE_NP = {
    "tdmm": [426, 711, 1044, 1425, 1854],
    "tdd": [426, 545, 712, 927, 1190],
}


class TestParamCount:
    @pytest.mark.parametrize("kind", ["tdmm", "tdd"])
    def test_reference_values(self, kind):
        assert [param_count(kind, 166, K, 24) for K in range(2, 7)] == REFERENCE_NP[kind]

    def test_equal_at_two_blocks(self):
        for N in (10, 50, 166):
            assert param_count("tdmm", N, 2, 24) == param_count("tdd", N, 2, 24)

    def test_static_counts_like_discrete(self):
        assert param_count("static", 166, 3, 1) == 2 * 166 - 3 + 9

    @pytest.mark.parametrize("args", [("tdd", 3, 4, 24), ("tdmm", 0, 1, 1), ("xyz", 5, 2, 2)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            param_count(*args)


class TestAic:
    def test_examples(self):
        assert aic(426, -270809) == 542470
        assert aic(711, -235162) == 471746


class TestSample:
    def test_poisson_mean(self):
        model = MixedModel(np.ones((50, 1)), np.full((1, 1, 4), 4.0))
        net = sample_network(model, seed=0)
        assert 3.9 <= net.total / (50 * 50 * 4) <= 4.1

    def test_zero_rate_block_empty(self):
        omega = np.zeros((2, 2, 3))
        omega[0, 1] = 50.0
        model = DiscreteModel([0, 0, 1, 1], [0.5] * 4, omega)
        A = sample_network(model, seed=1).to_dense()
        assert A[:2, :2].sum() == 0 and A[2:].sum() == 0
        assert A[:2, 2:].sum() > 0

    def test_deterministic(self):
        model = MixedModel(np.full((5, 1), 0.2), np.full((1, 1, 3), 30.0))
        a, b = sample_network(model, seed=7), sample_network(model, seed=7)
        np.testing.assert_array_equal(a.to_dense(), b.to_dense())

    def test_layer_means(self):
        omega = np.array([[[100.0, 2000.0]]])
        model = MixedModel(np.full((10, 1), 0.1), omega)
        totals = np.zeros(2)
        for seed in range(20):
            totals += sample_network(model, seed=seed).to_dense().sum(axis=(0, 1))
        np.testing.assert_allclose(totals / 20, [100, 2000], rtol=0.05)


class TestAri:
    def test_identical_and_permuted(self):
        assert adjusted_rand_index([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0

    def test_hand_computed(self):
        # contingency [[2,1],[0,2]]: index 2, row pairs 3+1, col pairs 1+3, total 10
        a, b = [0, 0, 0, 1, 1], [0, 0, 1, 1, 1]
        expected = (2 - 4 * 4 / 10) / (4 - 4 * 4 / 10)
        assert adjusted_rand_index(a, b) == pytest.approx(expected)

    def test_against_sklearn(self, rng):
        for _ in range(20):
            a = rng.integers(0, 3, 40)
            b = rng.integers(0, 4, 40)
            assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)

    def test_bad_input(self):
        with pytest.raises(ValueError):
            adjusted_rand_index([0, 1], [0, 1, 1])


class TestDegreeIdentity:
    def test_random(self, rng):
        for K in (1, 2, 4):
            net = random_network(rng, 20, 24, rate=0.05)
            labels = rng.integers(0, K, 20)
            assert degree_identity_residual(net, labels, K) <= 1e-9

    def test_direct_rates(self, rng):
        net = random_network(rng, 8, 3)
        model = discrete_model(net, rng.integers(0, 2, 8), 2)
        mu = rates(model.to_mixed())
        expected = mu.sum(axis=(1, 2)) + mu.sum(axis=(0, 2))
        k = net.to_dense().sum(axis=(1, 2)) + net.to_dense().sum(axis=(0, 2))
        np.testing.assert_allclose(expected, k, rtol=1e-10)


class TestLabelBlocks:
    def test_home_work(self):
        roles = label_blocks(commute_omega(1000.0))
        assert [r.role for r in roles] == ["home", "work"]
        assert not roles[0].degenerate
        assert roles[0].morning_ratio > 1 and roles[1].evening_ratio > 1

    def test_swapped_blocks(self):
        omega = commute_omega(1000.0)[::-1, ::-1]
        assert [r.role for r in label_blocks(omega)] == ["work", "home"]

    def test_symmetric_is_degenerate(self):
        omega = np.ones((2, 2, 24))
        roles = label_blocks(omega)
        assert all(r.degenerate for r in roles)
        assert "home" not in {r.role for r in roles}

    def test_park_block(self):
        omega = np.zeros((3, 3, 24))
        omega[:2, :2] = commute_omega(1000.0)
        omega[2, 2] = 200 * bump(24, 14, 1.0)
        omega[2, 0] = omega[0, 2] = 1.0
        roles = label_blocks(omega)
        assert [r.role for r in roles] == ["home", "work", "park"]

    def test_mixed_block(self):
        omega = np.zeros((3, 3, 24))
        omega[:2, :2] = commute_omega(1000.0)
        omega[2, 0] = omega[0, 2] = 5.0
        assert label_blocks(omega)[2].role == "mixed"

    def test_one_block(self):
        assert label_blocks(np.ones((1, 1, 24)))[0].role == "other"

    def test_custom_windows(self):
        omega = commute_omega(1000.0, morning=5.0, evening=20.0, width=0.5)
        roles = label_blocks(omega, morning_window=[4, 5, 6], evening_window=[19, 20, 21])
        assert [r.role for r in roles] == ["home", "work"]
        assert roles[0].morning_peak_hour == 5


class TestCompare:
    def test_sorted_by_aic(self):
        rows = compare_models([("tdd", 2, 426, -270809.0), ("tdmm", 3, 711, -235162.0)])
        assert [r.kind for r in rows] == ["tdmm", "tdd"]
        assert rows[0].aic == 471746
        text = format_selection_table(rows)
        assert "tdmm" in text.splitlines()[2]
        csv_text = selection_table_csv(rows)
        assert csv_text.splitlines()[0] == "kind,K,n_params,loglik,aic"

    def test_empty(self):
        with pytest.raises(ValueError):
            compare_models([])


class TestAriProperties:
    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=2, max_size=30), st.permutations(range(4)))
    def test_relabel_invariant_and_bounded(self, a, perm):
        a = np.array(a)
        b = np.array(perm)[a]
        assert adjusted_rand_index(a, b) == pytest.approx(1.0)
        rng = np.random.default_rng(len(a))
        c = rng.integers(0, 3, len(a))
        assert adjusted_rand_index(a, c) == pytest.approx(adjusted_rand_index(c, a))
        assert adjusted_rand_index(a, c) <= 1.0 + 1e-12
