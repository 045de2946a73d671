"""Acceptance gate: every release criterion with its frozen tolerance.

Each test prints one PASS/FAIL line through the shared recorder (shown in the
pytest summary).  Training-based criteria use the library defaults (Adam,
learning rate 1e-2, batch 32, 100 epochs, w0=1 with growth 1.5).
"""

import time

import numpy as np
import pytest
from scipy import stats

from conftest import record_criterion
from oracles import brute_force_losses, rescaled_interevent_times

from graphpp import (EventSequence, SimConfig, TrainConfig, build_model,
                     chebyshev_bank, event_rate_mae, gat_bank, ground_truth,
                     kernel_recovery_error, khop_index, l3net_bank, ls,
                     make_barrier_grid, nll, path_graph, rank_report,
                     ring_graph, scaled_laplacian, thinning_simulate, train,
                     train_test_split, truncate_alpha, truth_loglik, type_kld)
from graphpp import test_loglik as held_out_loglik
from graphpp.model import kernel_matrix
from graphpp.training import gradient_check

GT3_SEQS = 300
GT16_SEQS = 400
EPOCHS = 100


@pytest.fixture(scope="session")
def gt3_data():
    gt = ground_truth("gt3_negative")
    seqs = thinning_simulate(gt, SimConfig(num_sequences=GT3_SEQS, seed=42))
    train_seqs, test_seqs = train_test_split(seqs, 0.8, seed=0)
    return gt, train_seqs, test_seqs


@pytest.fixture(scope="session")
def gt16_data():
    gt = ground_truth("gt16_twohop")
    seqs = thinning_simulate(gt, SimConfig(num_sequences=GT16_SEQS, seed=11))
    train_seqs, test_seqs = train_test_split(seqs, 0.8, seed=0)
    return gt, train_seqs, test_seqs


def fit(gt, train_seqs, test_seqs, *, L, R, mode, loss, seed, orders=None,
        epochs=EPOCHS):
    rate = np.mean([len(s) for s in train_seqs]) / (gt.T * gt.num_nodes)
    model = build_model(gt.graph, L=L, R=R, filter_mode=mode, orders=orders,
                        T=gt.T, G=int(10 * gt.T), tau_max=6.0, mu_mode="tied",
                        mu_init=rate, seed=seed)
    cfg = TrainConfig(epochs=epochs, loss_kind=loss, seed=seed)
    model, _ = train(model, train_seqs, test_seqs, cfg)
    return model


def random_batch(rng, num_seqs, n_events, T, num_nodes):
    out = []
    for _ in range(num_seqs):
        t = np.sort(rng.uniform(0.03, T - 0.05, n_events))
        out.append(EventSequence(t, rng.integers(0, num_nodes, n_events), T))
    return out


class TestCriterion1GradientCorrectness:
    def test_all_blocks_match_finite_differences(self):
        t0 = time.time()
        rng = np.random.default_rng(0)
        worst = {}
        m3 = build_model(path_graph(3), L=2, R=2, filter_mode="l3net", T=2.0,
                         G=60, mu_mode="per_node", mu_init=1.0, hidden=(8, 8),
                         seed=1)
        b3 = random_batch(rng, 2, 5, 2.0, 3)
        m16 = build_model(ring_graph(16), L=1, R=2, filter_mode="gat",
                          gat_support="one_hop", T=2.0, G=60, mu_mode="tied",
                          mu_init=1.0, hidden=(8, 8), seed=2)
        m16.bank.free_params = 0.5 * rng.standard_normal(m16.bank.n_free)
        m16.set_params(m16.get_params())
        b16 = random_batch(rng, 1, 10, 2.0, 16)
        for tag, model, batch in (("3-node", m3, b3), ("16-node", m16, b16)):
            for kind in ("nll", "ls"):
                report = gradient_check(model, batch, kind)
                worst[f"{tag}/{kind}"] = max(report.values())
        ok = max(worst.values()) <= 1e-4
        record_criterion(
            "1 gradient correctness", ok,
            f"worst rel err {max(worst.values()):.2e} across "
            f"{sorted(worst)} in {time.time() - t0:.1f}s")
        assert ok, worst


class TestCriterion2GridFidelity:
    def test_grid_values_match_quadrature_oracle(self):
        t0 = time.time()
        rng = np.random.default_rng(21)
        t = np.sort(rng.uniform(0.03, 1.95, 8))
        seq = EventSequence(t, rng.integers(0, 3, 8), 2.0)
        rel = {}
        for G in (100, 200):
            m = build_model(path_graph(3), L=2, R=2, filter_mode="l3net",
                            T=2.0, G=G, mu_mode="per_node", mu_init=1.0,
                            hidden=(8, 8), seed=11)
            m.alpha *= 8.0
            m.set_params(m.get_params())
            oracle_nll, oracle_ls = brute_force_losses(m, seq)
            got_nll = nll(m, [seq]).total
            got_ls = ls(m, [seq], make_barrier_grid(2.0, 2 * G, 3, b=-np.inf)).total
            rel[G] = max(abs(got_nll - oracle_nll) / abs(oracle_nll),
                         abs(got_ls - oracle_ls) / abs(oracle_ls))
        ok = rel[100] <= 0.01 and rel[200] <= 0.0025
        record_criterion(
            "2 grid-scheme fidelity", ok,
            f"rel err {rel[100]:.2e} @G=100, {rel[200]:.2e} @G=200 "
            f"in {time.time() - t0:.1f}s")
        assert ok, rel


class TestCriterion3FilterIdentities:
    def test_bank_identities(self):
        t0 = time.time()
        g = ring_graph(16)
        spec = scaled_laplacian(g)
        idx = khop_index(g, 2)
        lt = spec.scaled_laplacian

        mats = chebyshev_bank(spec, 3).matrices()
        cheb_err = np.abs(mats[2] - (2 * lt @ mats[1] - mats[0])).max()

        rng = np.random.default_rng(3)
        gat = gat_bank(idx, 3, support="one_hop", rng=rng)
        gat.free_params = 4.0 * rng.standard_normal(gat.n_free)
        gmats = gat.matrices()
        gat_pos = bool(np.all(gmats >= 0.0))
        gat_row_err = np.abs(gmats.sum(axis=2) - 1.0).max()

        l3 = l3net_bank(idx, [0, 1, 2], rng=rng)
        l3.free_params = rng.standard_normal(l3.n_free)
        l3_outside = np.abs(l3.matrices()[~l3.masks]).max()

        ok = (cheb_err <= 1e-12 and gat_pos and gat_row_err <= 1e-10
              and l3_outside == 0.0)
        record_criterion(
            "3 filter-bank identities", ok,
            f"cheb {cheb_err:.1e}, gat rows {gat_row_err:.1e}, "
            f"l3net outside-mask {l3_outside:.1e} in {time.time() - t0:.1f}s")
        assert ok


class TestCriterion4SimulatorSanity:
    def test_poisson_rescaling_and_gt16_length(self):
        t0 = time.time()
        # homogeneous case: mean count within 3 standard errors
        m = build_model(path_graph(3), L=1, R=1, filter_mode="l3net", T=2.0,
                        G=40, mu_mode="tied", mu_init=1.0, hidden=(4, 4), seed=0)
        m.alpha[:] = 0.0
        m.set_params(m.get_params())
        seqs = thinning_simulate(m, SimConfig(num_sequences=10_000, seed=1))
        counts = np.array([len(s) for s in seqs])
        expect = 1.0 * 3 * 2.0
        pois_dev = abs(counts.mean() - expect) / np.sqrt(expect / counts.size)
        pois_ok = pois_dev <= 3.0

        # time rescaling on the positive separable 50-node kernel
        gt50 = ground_truth("gt50_gaussian_ring")
        seqs50 = thinning_simulate(gt50, SimConfig(num_sequences=30, seed=5))
        taus = rescaled_interevent_times(gt50, seqs50)
        assert taus.size >= 10_000
        ks = stats.kstest(taus, "expon")
        ks_ok = ks.pvalue >= 0.01

        # reported mean length of the 16-node process
        gt16 = ground_truth("gt16_twohop")
        seqs16 = thinning_simulate(gt16, SimConfig(num_sequences=1000, seed=9))
        mean16 = np.mean([len(s) for s in seqs16])
        len_ok = abs(mean16 - 105.8) / 105.8 <= 0.10

        ok = pois_ok and ks_ok and len_ok
        record_criterion(
            "4 simulator sanity", ok,
            f"poisson {pois_dev:.2f} se, KS p={ks.pvalue:.3f} on "
            f"{taus.size} gaps, gt16 mean {mean16:.1f} vs 105.8 "
            f"in {time.time() - t0:.0f}s")
        assert pois_ok, counts.mean()
        assert ks_ok, ks
        assert len_ok, mean16


class TestCriterion5DeskScaleGt3:
    def test_both_losses_reach_reference(self, gt3_data):
        t0 = time.time()
        gt, train_seqs, test_seqs = gt3_data
        ll_ref = truth_loglik(gt, test_seqs)
        results = {}
        ok = True
        for loss in ("nll", "ls"):
            model = fit(gt, train_seqs, test_seqs, L=1, R=2, mode="l3net",
                        loss=loss, seed=1)
            ll = held_out_loglik(model, test_seqs)
            gen = thinning_simulate(model, SimConfig(num_sequences=100, seed=5))
            freq_mae = event_rate_mae(gen, test_seqs)
            kld = type_kld(gen, test_seqs, num_nodes=3)
            results[loss] = (abs(ll - ll_ref), freq_mae, kld)
            ok = ok and abs(ll - ll_ref) <= 0.10 and freq_mae <= 0.15 and kld <= 0.01
        detail = ", ".join(
            f"{k}: dll {v[0]:.3f} freq-mae {v[1]:.3f} kld {v[2]:.4f}"
            for k, v in results.items())
        record_criterion(
            "5 desk-scale gt3 reproduction", ok,
            f"ref ll/event {ll_ref:.3f}; {detail}; {time.time() - t0:.0f}s")
        for loss, (dll, fmae, kld) in results.items():
            assert dll <= 0.10, (loss, dll)
            assert fmae <= 0.15, (loss, fmae)
            assert kld <= 0.01, (loss, kld)


class TestCriterion6MultiHopGt16:
    def test_sign_pattern_and_recovery(self, gt16_data):
        t0 = time.time()
        gt, train_seqs, test_seqs = gt16_data
        model = fit(gt, train_seqs, test_seqs, L=1, R=3, mode="chebyshev",
                    loss="ls", seed=1)
        k_hat = kernel_matrix(model, 0.0, 0.0, exact=True)
        k_true = gt.kernel_matrix(0.0, 0.0)
        support = np.abs(k_true) > 0.01
        frac = float(np.mean(np.sign(k_hat[support]) == np.sign(k_true[support])))
        recov = kernel_recovery_error(model, gt)
        ok = frac >= 0.90 and recov <= 0.25
        record_criterion(
            "6 multi-hop recovery gt16", ok,
            f"sign match {frac:.0%} of {int(support.sum())} entries, "
            f"recovery {recov:.3f} in {time.time() - t0:.0f}s")
        assert frac >= 0.90, frac
        assert recov <= 0.25, recov


class TestCriterion7RankSelection:
    def test_truncating_weak_ranks_preserves_loglik(self, gt3_data):
        t0 = time.time()
        gt, train_seqs, test_seqs = gt3_data
        model = fit(gt, train_seqs, test_seqs, L=2, R=3, mode="l3net",
                    orders=[0, 1, 2], loss="ls", seed=2)
        report = rank_report(model)
        ll_full = held_out_loglik(model, test_seqs)
        truncated = truncate_alpha(model, 0.10)
        ll_trunc = held_out_loglik(truncated, test_seqs)
        n_dropped = int(np.sum(truncated.alpha == 0.0) - np.sum(model.alpha == 0.0))
        delta = abs(ll_full - ll_trunc)
        ok = delta < 0.02
        record_criterion(
            "7 rank-selection truncation", ok,
            f"dropped {n_dropped}/{model.alpha.size} coefficients, "
            f"dll {delta:.4f}, top |alpha| {report[0]['magnitude']:.3f} "
            f"in {time.time() - t0:.0f}s")
        assert ok, delta


class TestCriterion8InhibitionCapture:
    def test_inhibiting_pair_negative_across_seeds(self, gt3_data):
        t0 = time.time()
        gt, train_seqs, test_seqs = gt3_data
        probes_tp = [0.0, 11.25, 22.5]
        probes_lag = [0.1, 0.5, 1.0]
        negatives = 0
        values = []
        for seed in range(1, 6):
            model = fit(gt, train_seqs, test_seqs, L=1, R=2, mode="l3net",
                        loss="ls", seed=seed)
            vals = [kernel_matrix(model, tp, lag, exact=True)[1, 0]
                    for tp in probes_tp for lag in probes_lag]
            values.append(float(np.mean(vals)))
            negatives += values[-1] < 0.0
        ok = negatives >= 4
        record_criterion(
            "8 inhibition capture gt3", ok,
            f"{negatives}/5 seeds negative at the inhibiting pair "
            f"(means {[round(v, 4) for v in values]}) in {time.time() - t0:.0f}s")
        assert ok, values
