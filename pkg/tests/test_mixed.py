import math

import numpy as np
import pytest

from tdsbm.analysis import sample_network
from tdsbm.mixed import (GdConfig, MixedModel, ZeroRateError, c_totals, fit, gradient, init_params,
                         log_likelihood, normalize, rates)
from tdsbm.network import MultilayerNetwork, hourly_totals
from tdsbm.synthetic import planted_commute_mixed

from conftest import random_network
from oracles import dense_loglik, finite_difference_gradient, gradient_mismatch


def random_model(rng, N, K, T, scale=1.0):
    return MixedModel(np.exp(rng.standard_normal((N, K))), scale * np.exp(rng.standard_normal((K, K, T))))


class TestModel:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            MixedModel(np.ones((3, 2)), np.ones((3, 3, 4)))

    def test_negative(self):
        with pytest.raises(ValueError):
            MixedModel(-np.ones((3, 1)), np.ones((1, 1, 2)))

    def test_normalized_flag(self):
        assert not MixedModel(np.ones((3, 1)), np.ones((1, 1, 2))).normalized
        assert MixedModel(np.ones((3, 1)) / 3, np.ones((1, 1, 2))).normalized


class TestRates:
    def test_one_block(self):
        m = MixedModel(np.array([[0.5], [0.5]]), np.full((1, 1, 1), 4.0))
        np.testing.assert_allclose(rates(m)[..., 0], np.ones((2, 2)))

    def test_identity_membership(self):
        omega = np.arange(12, dtype=float).reshape(2, 2, 3)
        np.testing.assert_allclose(rates(MixedModel(np.eye(2), omega)), omega)

    def test_matches_loops(self, rng):
        m = random_model(rng, 5, 3, 4)
        mu = rates(m)
        for i in range(5):
            for j in range(5):
                for t in range(4):
                    assert mu[i, j, t] == pytest.approx(m.C[i] @ m.omega[:, :, t] @ m.C[j], rel=1e-12)


class TestLogLikelihood:
    def test_empty_network(self, rng):
        m = random_model(rng, 3, 2, 2)
        net = MultilayerNetwork.from_entries([], [], [], [], 3, 2)
        assert log_likelihood(net, m) == pytest.approx(-rates(m).sum())

    def test_single_cell(self):
        net = MultilayerNetwork.from_entries([0], [0], [0], [2], 1, 1)
        m = MixedModel(np.ones((1, 1)), np.full((1, 1, 1), 2.0))
        assert log_likelihood(net, m) == pytest.approx(2 * math.log(2) - 2, abs=1e-12)
        assert log_likelihood(net, m) == pytest.approx(-0.6137, abs=1e-4)

    def test_zero_rate(self):
        net = MultilayerNetwork.from_entries([0], [1], [0], [1], 2, 1)
        m = MixedModel(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros((2, 2, 1)))
        assert log_likelihood(net, m) == -math.inf
        with pytest.raises(ZeroRateError):
            gradient(net, m)

    @pytest.mark.parametrize("K", [1, 2, 3])
    def test_matches_dense(self, rng, K):
        net = random_network(rng, 7, 5)
        m = random_model(rng, 7, K, 5)
        assert log_likelihood(net, m) == pytest.approx(dense_loglik(net.to_dense(), m.C, m.omega), rel=1e-12)

    def test_dimension_check(self, rng, small_net):
        with pytest.raises(ValueError):
            log_likelihood(small_net, random_model(rng, 5, 2, 4))


class TestGradient:
    @pytest.mark.parametrize("K", [1, 2, 3])
    def test_finite_differences(self, rng, K):
        net = random_network(rng, 6, 4)
        m = random_model(rng, 6, K, 4)
        dC, dw = gradient(net, m)
        nC, nw = finite_difference_gradient(net, m)
        assert gradient_mismatch(dC, nC).size == 0
        assert gradient_mismatch(dw, nw).size == 0

    def test_vanishes_at_one_block_optimum(self):
        # one block, C = 1: the MLE is omega_t = total trips in layer t
        A = np.array([[[2, 1]]])
        net = MultilayerNetwork.from_dense(A)
        _, dw = gradient(net, MixedModel(np.ones((1, 1)), np.array([[[2.0, 1.0]]])))
        np.testing.assert_allclose(dw, 0, atol=1e-12)


class TestNormalize:
    def test_columns_sum_to_one(self, rng):
        m = normalize(random_model(rng, 8, 3, 5))
        np.testing.assert_allclose(m.C.sum(axis=0), 1, atol=1e-12)
        assert m.normalized

    def test_rates_unchanged(self, rng):
        m = random_model(rng, 6, 2, 3)
        np.testing.assert_allclose(rates(normalize(m)), rates(m), rtol=1e-12)

    def test_loglik_unchanged(self, rng):
        net = random_network(rng, 6, 3)
        m = random_model(rng, 6, 2, 3)
        assert log_likelihood(net, normalize(m)) == pytest.approx(log_likelihood(net, m), abs=1e-9)

    def test_idempotent(self, rng):
        m = normalize(random_model(rng, 6, 2, 3))
        n = normalize(m)
        np.testing.assert_allclose(n.C, m.C, rtol=1e-14)
        np.testing.assert_allclose(n.omega, m.omega, rtol=1e-14)

    def test_empty_block(self):
        with pytest.raises(ValueError):
            normalize(MixedModel(np.array([[1.0, 0.0]]), np.ones((2, 2, 1))))

    def test_c_totals(self, rng):
        m = random_model(rng, 5, 3, 2)
        np.testing.assert_allclose(c_totals(m), m.C.sum(axis=1))
        one = MixedModel(np.array([[0.2], [0.8]]), np.ones((1, 1, 1)))
        np.testing.assert_allclose(c_totals(one), [0.2, 0.8])


class TestInit:
    def test_expected_total_matches(self, rng):
        net = random_network(rng, 10, 6, rate=2.0)
        m = init_params(net, 3, seed=1)
        assert rates(m).sum() == pytest.approx(net.total, rel=1e-12)
        assert m.normalized and np.all(m.C > 0) and np.all(m.omega > 0)

    def test_deterministic(self, small_net):
        a, b = init_params(small_net, 2, seed=3), init_params(small_net, 2, seed=3)
        np.testing.assert_array_equal(a.C, b.C)
        np.testing.assert_array_equal(a.omega, b.omega)
        assert not np.array_equal(a.C, init_params(small_net, 2, seed=4).C)


class TestFit:
    quick = dict(max_iters=3000, stall_window=200, restarts=3)

    def test_one_block_recovers_hourly_totals(self, rng):
        net = random_network(rng, 12, 6, rate=1.0)
        model, rep = fit(net, 1, GdConfig(seed=0, **self.quick))
        np.testing.assert_allclose(model.omega[0, 0], hourly_totals(net), rtol=0.01)
        assert model.normalized

    def test_planted_likelihood_reached(self):
        planted = planted_commute_mixed(N=30, total=6000, seed=2)
        net = sample_network(planted, seed=3)
        model, rep = fit(net, 2, GdConfig(seed=0, **self.quick))
        target = log_likelihood(net, planted)
        assert rep.final_loglik >= target - 0.005 * abs(target)
        assert log_likelihood(net, model) == pytest.approx(rep.final_loglik, rel=1e-10)

    def test_trace_monotone_and_report(self, small_net):
        cfg = GdConfig(seed=5, max_iters=400, stall_window=50, restarts=2)
        _, rep = fit(small_net, 2, cfg)
        assert np.all(np.diff(rep.trace) >= 0)
        assert rep.trace[-1] == rep.final_loglik
        assert rep.restarts_run == 2 and len(rep.restart_scores) == 2
        assert rep.final_loglik == max(rep.restart_scores)
        assert rep.iterations == len(rep.trace) - 1

    def test_stall_stops_early(self):
        net = MultilayerNetwork.from_entries([0, 1], [1, 0], [0, 1], [3, 3], 2, 2)
        _, rep = fit(net, 1, GdConfig(seed=0, stall_window=20, max_iters=5000, restarts=1))
        assert rep.stall_triggered and rep.iterations < 5000

    def test_deterministic_across_threads(self, small_net):
        cfg = dict(seed=11, max_iters=200, stall_window=50, restarts=3)
        a, ra = fit(small_net, 2, GdConfig(threads=1, **cfg))
        b, rb = fit(small_net, 2, GdConfig(threads=3, **cfg))
        np.testing.assert_array_equal(a.C, b.C)
        np.testing.assert_array_equal(a.omega, b.omega)
        assert ra.trace == rb.trace

    def test_bad_config(self):
        with pytest.raises(ValueError):
            GdConfig(grow_factor=0.9)
        with pytest.raises(ValueError):
            GdConfig(restarts=0)

    def test_empty_network(self):
        with pytest.raises(ValueError):
            fit(MultilayerNetwork.from_entries([], [], [], [], 2, 1), 1)
