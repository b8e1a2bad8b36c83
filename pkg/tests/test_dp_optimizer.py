import math

import numpy as np
import pytest

from dpfim.accountant import AccountantState
from dpfim.dp_optimizer import (
    DpConfig,
    OptimizerState,
    TrainState,
    adamw_step,
    adamw_vec,
    baseline_train_epoch,
    baseline_train_steps,
    clip,
    clip_batch,
    dp_steps_per_epoch,
    dp_train_epoch,
    dp_train_steps,
    noisy_aggregate,
    poisson_sample,
)
from dpfim.errors import ConfigError
from dpfim.model import LoraConfig, ModelConfig, base_fingerprint, init_model
from dpfim.seeding import rng_for

from conftest import small_examples


def fresh_model(seed=11):
    cfg = ModelConfig(d_model=32, n_layers=2, n_heads=2, context_len=96)
    return init_model(cfg, LoraConfig(rank=4, alpha=8.0), seed=seed)


class TestClip:
    def test_rescale(self):
        out = clip(np.array([3.0, 4.0]), 0.5)
        np.testing.assert_allclose(out, [0.3, 0.4])
        assert np.linalg.norm(out) == pytest.approx(0.5)

    def test_small_unchanged_bitwise(self):
        g = np.array([0.1, 0.2])
        assert np.array_equal(clip(g, 0.5), g)

    def test_zero_vector(self):
        assert np.array_equal(clip(np.zeros(3), 0.5), np.zeros(3))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        G = rng.normal(size=(20, 7)) * rng.gamma(1.0, 2.0, size=(20, 1))
        clipped, norms = clip_batch(G, 0.8)
        for i in range(20):
            # row-wise and single-vector norms reduce differently, so
            # clipped rows agree to round-off (unclipped rows bitwise)
            np.testing.assert_allclose(clipped[i], clip(G[i], 0.8), rtol=1e-14)
            if norms[i] <= 0.8:
                assert np.array_equal(clipped[i], G[i])
            assert norms[i] == pytest.approx(np.linalg.norm(G[i]))
        assert np.all(np.linalg.norm(clipped, axis=1) <= 0.8 + 1e-9)


class TestNoisyAggregate:
    def test_sigma_zero_is_mean_by_lot(self):
        rng = np.random.default_rng(1)
        clipped, _ = clip_batch(rng.normal(size=(6, 5)), 1.0)
        out = noisy_aggregate(clipped, 1.0, 0.0, 8, rng_for(0, "noise"))
        assert np.array_equal(out, clipped.sum(axis=0) / 8.0)

    def test_empty_batch_pure_noise(self):
        out = noisy_aggregate(np.zeros((0, 5)), 0.5, 1.0, 8, rng_for(0, "noise"))
        assert out.shape == (5,)
        assert np.any(out != 0.0)

    def test_empty_batch_sigma_zero(self):
        out = noisy_aggregate(np.zeros((0, 5)), 0.5, 0.0, 8, rng_for(0, "noise"))
        assert np.array_equal(out, np.zeros(5))

    def test_norm_precondition_enforced(self):
        bad = np.ones((2, 4))  # norm 2 > C=0.5
        with pytest.raises(ConfigError, match="clip"):
            noisy_aggregate(bad, 0.5, 1.0, 8, rng_for(0, "noise"))

    def test_noise_std_calibration(self):
        # clipped sum pinned at zero; with 10k draws the sample std of
        # each coordinate must sit within 3% of sigma*C/B
        sigma, c, b, dim, n = 1.0, 0.5, 32, 8, 10_000
        rng = rng_for(123, "noise")
        draws = np.stack(
            [noisy_aggregate(np.zeros((0, dim)), c, sigma, b, rng) for _ in range(n)]
        )
        target = sigma * c / b
        stds = draws.std(axis=0, ddof=1)
        assert np.all(np.abs(stds - target) / target < 0.03)
        assert np.abs(draws.mean()) < 5 * target / math.sqrt(n * dim)


class TestPoisson:
    def test_q_one_takes_all(self):
        idx = poisson_sample(100, 1.0, rng_for(0, "sampling"))
        assert np.array_equal(idx, np.arange(100))

    def test_binomial_concentration(self):
        rng = rng_for(7, "sampling")
        sizes = [poisson_sample(10_000, 0.5, rng).size for _ in range(100)]
        assert abs(np.mean(sizes) - 5000) < 150

    def test_seeded_determinism(self):
        a = [poisson_sample(50, 0.3, rng_for(9, f"sampling.{t}")) for t in range(5)]
        b = [poisson_sample(50, 0.3, rng_for(9, f"sampling.{t}")) for t in range(5)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_ascending_indices(self):
        idx = poisson_sample(200, 0.4, rng_for(3, "sampling"))
        assert np.all(np.diff(idx) > 0)


class TestAdamW:
    def test_zero_gradient_fixed_point(self):
        cfg = DpConfig(learning_rate=0.1, weight_decay=0.0)
        vec = np.array([1.0, -2.0, 3.0])
        state, out = adamw_vec(OptimizerState.zeros(3), vec, np.zeros(3), cfg)
        assert np.array_equal(out, vec)
        assert state.t == 1

    def test_first_step_magnitude(self):
        cfg = DpConfig(learning_rate=0.1, weight_decay=0.0)
        vec = np.zeros(2)
        _, out = adamw_vec(OptimizerState.zeros(2), vec, np.array([1.0, 0.0]), cfg)
        assert out[0] == pytest.approx(-0.1, rel=1e-7)
        assert out[1] == 0.0

    def test_base_weights_untouched(self):
        params = fresh_model()
        before = base_fingerprint(params)
        grad = np.ones(params.trainable_dim)
        _, after = adamw_step(OptimizerState.zeros(params.trainable_dim), params, grad,
                              DpConfig(learning_rate=0.01))
        assert base_fingerprint(after) == before
        assert not np.array_equal(after.flat_adapters(), params.flat_adapters())

    def test_length_mismatch(self):
        params = fresh_model()
        with pytest.raises(ConfigError):
            adamw_step(OptimizerState.zeros(3), params, np.ones(3), DpConfig())


class TestSensitivity:
    def test_swap_one_example_bounded(self, small_model, small_corpus):
        from dpfim.model import make_batch, per_example_gradients

        c = 0.5
        ctx = small_model.cfg.context_len
        batch_a = make_batch(small_corpus[:8], ctx)
        batch_b = make_batch(small_corpus[1:8] + small_corpus[8:9], ctx)
        Ga, _ = per_example_gradients(small_model, batch_a)
        Gb, _ = per_example_gradients(small_model, batch_b)
        sum_a = clip_batch(Ga, c)[0].sum(axis=0)
        sum_b = clip_batch(Gb, c)[0].sum(axis=0)
        assert np.linalg.norm(sum_a - sum_b) <= 2 * c + 1e-9


def run_dp(members, dpcfg, seed, n_steps, sigma=None, eps_max=None, delta=None, model_seed=11):
    params = fresh_model(model_seed)
    state = TrainState(params=params, opt=OptimizerState.zeros(params.trainable_dim))
    acct = AccountantState(q=dpcfg.sampling_rate(len(members)), sigma=dpcfg.noise_multiplier)
    acct, stopped = dp_train_steps(state, members, dpcfg, acct, seed, n_steps,
                                   epsilon_max=eps_max, delta=delta)
    return state, acct, stopped


@pytest.fixture(scope="module")
def members():
    return small_examples()


class TestTrainingLoops:

    def test_degenerate_equals_baseline_bitwise(self, members):
        n = len(members)
        deg = DpConfig(clip_norm=1e9, noise_multiplier=0.0, lot_size=n, learning_rate=1e-3)
        state_dp, _, _ = run_dp(members, deg, seed=42, n_steps=10)
        params = fresh_model()
        state_bl = TrainState(params=params, opt=OptimizerState.zeros(params.trainable_dim))
        baseline_train_steps(state_bl, members, deg, seed=42, n_steps=10)
        assert np.array_equal(state_dp.params.flat_adapters(), state_bl.params.flat_adapters())
        assert np.array_equal(state_dp.opt.m, state_bl.opt.m)
        assert np.array_equal(state_dp.opt.v, state_bl.opt.v)

    def test_budget_below_one_step(self, members):
        dpcfg = DpConfig(clip_norm=0.5, noise_multiplier=0.3, lot_size=8, learning_rate=1e-3)
        state, acct, stopped = run_dp(members, dpcfg, seed=1, n_steps=5,
                                      eps_max=0.01, delta=1e-5)
        assert stopped and state.step == 0 and acct.steps == 0
        assert np.array_equal(state.params.flat_adapters(), fresh_model().flat_adapters())

    def test_budget_binds_mid_run(self, members):
        from dpfim.accountant import steps_until_budget

        dpcfg = DpConfig(clip_norm=0.5, noise_multiplier=1.2, lot_size=2, learning_rate=1e-3)
        q = dpcfg.sampling_rate(len(members))
        allowed = steps_until_budget(q, 1.2, 1e-5, 3.0)
        assert 0 < allowed < 60
        state, acct, stopped = run_dp(members, dpcfg, seed=1, n_steps=allowed + 20,
                                      eps_max=3.0, delta=1e-5)
        assert stopped and state.step == allowed
        assert state.rows[-1].epsilon <= 3.0
        fresh = AccountantState(q=q, sigma=1.2)
        assert fresh.accumulate(allowed).epsilon(1e-5)[0] <= 3.0
        assert fresh.accumulate(allowed + 1).epsilon(1e-5)[0] > 3.0

    def test_logged_epsilon_matches_offline(self, members):
        dpcfg = DpConfig(clip_norm=0.5, noise_multiplier=1.0, lot_size=8, learning_rate=1e-3)
        state, acct, _ = run_dp(members, dpcfg, seed=5, n_steps=12, delta=1e-5)
        q = dpcfg.sampling_rate(len(members))
        for row in state.rows:
            offline = AccountantState(q=q, sigma=1.0).accumulate(row.step + 1).epsilon(1e-5)[0]
            assert row.epsilon == pytest.approx(offline, abs=1e-9)

    def test_epoch_step_count(self, members):
        dpcfg = DpConfig(clip_norm=0.5, noise_multiplier=1.0, lot_size=8, learning_rate=1e-3)
        params = fresh_model()
        state = TrainState(params=params, opt=OptimizerState.zeros(params.trainable_dim))
        acct = AccountantState(q=dpcfg.sampling_rate(len(members)), sigma=1.0)
        acct, stopped = dp_train_epoch(state, members, dpcfg, acct, seed=2)
        assert state.step == dp_steps_per_epoch(len(members), 8) == len(members) // 8
        assert not stopped

    def test_run_determinism(self, members):
        dpcfg = DpConfig(clip_norm=0.5, noise_multiplier=1.0, lot_size=8, learning_rate=1e-3)
        a, _, _ = run_dp(members, dpcfg, seed=3, n_steps=6)
        b, _, _ = run_dp(members, dpcfg, seed=3, n_steps=6)
        assert np.array_equal(a.params.flat_adapters(), b.params.flat_adapters())
        assert [r.loss for r in a.rows] == [r.loss for r in b.rows]

    def test_resume_equivalence(self, members):
        dpcfg = DpConfig(clip_norm=0.5, noise_multiplier=1.0, lot_size=8, learning_rate=1e-3)
        q = dpcfg.sampling_rate(len(members))
        straight, _, _ = run_dp(members, dpcfg, seed=4, n_steps=50)

        params = fresh_model()
        state = TrainState(params=params, opt=OptimizerState.zeros(params.trainable_dim))
        acct = AccountantState(q=q, sigma=1.0)
        acct, _ = dp_train_steps(state, members, dpcfg, acct, seed=4, n_steps=25)
        # "interrupt": rebuild accountant from the step counter and go on
        acct2 = AccountantState(q=q, sigma=1.0).accumulate(state.step)
        dp_train_steps(state, members, dpcfg, acct2, seed=4, n_steps=25)
        assert np.array_equal(straight.params.flat_adapters(), state.params.flat_adapters())
        assert np.array_equal(straight.opt.m, state.opt.m)

    def test_baseline_epoch_covers_every_example(self, members):
        dpcfg = DpConfig(clip_norm=0.5, noise_multiplier=0.0, lot_size=8, learning_rate=1e-3)
        params = fresh_model()
        state = TrainState(params=params, opt=OptimizerState.zeros(params.trainable_dim))
        baseline_train_epoch(state, members, dpcfg, seed=6)
        assert sum(r.realized_batch for r in state.rows) == len(members)

    def test_post_clip_norms_bounded_over_run(self, members):
        from dpfim.model import make_batch, per_example_gradients

        dpcfg = DpConfig(clip_norm=0.25, noise_multiplier=0.8, lot_size=8, learning_rate=5e-3)
        params = fresh_model()
        state = TrainState(params=params, opt=OptimizerState.zeros(params.trainable_dim))
        acct = AccountantState(q=dpcfg.sampling_rate(len(members)), sigma=0.8)
        q = dpcfg.sampling_rate(len(members))
        for step in range(20):
            idx = poisson_sample(len(members), q, rng_for(8, f"sampling.{step}"))
            if idx.size:
                batch = make_batch([members[int(i)] for i in idx], params.cfg.context_len)
                G, _ = per_example_gradients(state.params, batch)
                clipped, _ = clip_batch(G, dpcfg.clip_norm)
                assert np.all(np.linalg.norm(clipped, axis=1) <= dpcfg.clip_norm + 1e-9)
            acct, _ = dp_train_steps(state, members, dpcfg, acct, seed=8, n_steps=1)


class TestDpConfigValidation:
    def test_bad_clip(self):
        with pytest.raises(ConfigError):
            DpConfig(clip_norm=0.0)

    def test_bad_sigma(self):
        with pytest.raises(ConfigError):
            DpConfig(noise_multiplier=-0.1)

    def test_sampling_rate_range(self):
        assert DpConfig(lot_size=10).sampling_rate(100) == pytest.approx(0.1)
        with pytest.raises(ConfigError):
            DpConfig(lot_size=200).sampling_rate(100)
