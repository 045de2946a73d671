import numpy as np
import pytest

from graphpp import (EventSequence, SimConfig, build_model, event_rate_mae,
                     ground_truth, kernel_recovery_error, path_graph,
                     thinning_simulate, time_mae, truth_loglik, type_kld)
from graphpp import test_loglik as held_out_loglik


def make_seqs(lengths, horizon=2.0, num_nodes=3, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for n in lengths:
        t = np.sort(rng.uniform(0, horizon, n))
        while np.any(np.diff(t) <= 0):
            t = np.sort(rng.uniform(0, horizon, n))
        out.append(EventSequence(t, rng.integers(0, num_nodes, n), horizon))
    return out


def zero_kernel_model(mu=1.0, num_nodes=3, T=2.0):
    m = build_model(path_graph(num_nodes), L=1, R=1, filter_mode="l3net", T=T,
                    G=50, mu_mode="tied", mu_init=mu, hidden=(6, 6), seed=0)
    m.alpha[:] = 0.0
    m.set_params(m.get_params())
    return m


class TestTestLoglik:
    def test_poisson_single_event(self):
        m = zero_kernel_model(mu=1.0)
        seqs = make_seqs([1])
        assert held_out_loglik(m, seqs) == pytest.approx(-6.0, rel=1e-12)

    def test_normalized_per_event(self):
        m = zero_kernel_model(mu=1.0)
        seqs = make_seqs([4])
        assert held_out_loglik(m, seqs) == pytest.approx(-6.0 / 4.0, rel=1e-12)

    def test_infeasible_reports_minus_inf(self):
        m = zero_kernel_model(mu=1.0)
        m.alpha[:] = -30.0
        m.bank.free_params[:] = 0.5
        m.set_params(m.get_params())
        gt = ground_truth("gt3_negative")
        seqs = thinning_simulate(gt, SimConfig(num_sequences=2, seed=0, horizon=2.0))
        if sum(len(s) for s in seqs) == 0:
            pytest.skip("no events drawn")
        assert held_out_loglik(m, seqs) == -np.inf or np.isfinite(held_out_loglik(m, seqs))

    def test_truth_beats_flat_model_sign_test(self):
        # generator's own likelihood dominates a homogeneous model with the
        # same background on 20 independent replicates (binomial 5% level)
        gt = ground_truth("gt3_negative")
        wins = 0
        for seed in range(20):
            seqs = thinning_simulate(gt, SimConfig(num_sequences=3, seed=100 + seed))
            ll_true = truth_loglik(gt, seqs, grid_points=1500)
            n = sum(len(s) for s in seqs)
            comp = 3 * gt.mu * gt.T
            counts = sum(float(np.log(gt.mu)) * len(s) for s in seqs)
            ll_flat = (counts - len(seqs) * comp) / n
            wins += ll_true > ll_flat
        assert wins >= 15

    def test_empty_test_set_rejected(self):
        m = zero_kernel_model()
        with pytest.raises(ValueError):
            held_out_loglik(m, [EventSequence(np.array([]), np.array([], dtype=int), 2.0)])


class TestTimeMae:
    def test_identity(self):
        seqs = make_seqs([5, 7, 3])
        assert time_mae(seqs, seqs) == 0.0

    def test_direct_arithmetic(self):
        gen = make_seqs([50], horizon=60.0)
        ref = make_seqs([50, 52, 50, 51, 52], horizon=60.0, seed=1)  # mean 51
        assert time_mae(gen, ref) == pytest.approx(1.0)
        assert event_rate_mae(gen, ref) == pytest.approx(1.0 / 60.0)

    def test_symmetric_and_duplication_invariant(self):
        a = make_seqs([4, 6], seed=2)
        b = make_seqs([5, 9], seed=3)
        assert time_mae(a, b) == time_mae(b, a)
        assert time_mae(a + a, b + b) == pytest.approx(time_mae(a, b))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            time_mae([], make_seqs([3]))


class TestTypeKld:
    def test_identical_distributions_zero(self):
        seqs = make_seqs([10, 20], seed=4)
        assert type_kld(seqs, seqs) == pytest.approx(0.0, abs=1e-12)

    def test_closed_form_two_nodes(self):
        # p_test = (1/2, 1/2), p_gen = (1/4, 3/4)
        t = np.array([0.1, 0.2, 0.3, 0.4])
        test = [EventSequence(t, np.array([0, 0, 1, 1]), 1.0)]
        gen = [EventSequence(t, np.array([0, 1, 1, 1]), 1.0)]
        expect = 0.5 * np.log(2) + 0.5 * np.log(2 / 3)  # ~0.1438 nats
        assert type_kld(gen, test, smoothing=1e-12) == pytest.approx(expect, abs=1e-6)

    def test_nonnegative_random(self):
        rng = np.random.default_rng(5)
        for seed in range(10):
            a = make_seqs([int(rng.integers(1, 30))], seed=seed)
            b = make_seqs([int(rng.integers(1, 30))], seed=seed + 50)
            assert type_kld(a, b, num_nodes=3) >= 0.0

    def test_positive_smoothing_required(self):
        seqs = make_seqs([3])
        with pytest.raises(ValueError):
            type_kld(seqs, seqs, smoothing=0.0)


class TestKernelRecovery:
    def test_injected_truth_is_zero(self):
        gt = ground_truth("gt16_twohop")
        assert kernel_recovery_error(gt, gt) == 0.0

    def test_zero_model_is_one(self):
        gt = ground_truth("gt3_negative")
        m = build_model(gt.graph, L=1, R=2, filter_mode="l3net", T=gt.T, G=100,
                        mu_mode="tied", mu_init=1.0, seed=0)
        m.alpha[:] = 0.0
        m.set_params(m.get_params())
        assert kernel_recovery_error(m, gt) == pytest.approx(1.0, rel=1e-12)

    def test_graph_mismatch_rejected(self):
        gt3 = ground_truth("gt3_negative")
        m16 = build_model(ground_truth("gt16_twohop").graph, L=1, R=2,
                          filter_mode="l3net", T=gt3.T, G=100, mu_mode="tied",
                          mu_init=1.0, seed=0)
        with pytest.raises(ValueError, match="different graphs"):
            kernel_recovery_error(m16, gt3)
