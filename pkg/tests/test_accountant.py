import math

import numpy as np
import pytest

from dpfim.accountant import (
    DEFAULT_ORDERS,
    AccountantState,
    epsilon_from_rdp,
    epsilon_report,
    paper_budget_interpretations,
    rdp_single_step,
    steps_until_budget,
)
from dpfim.errors import ConfigError

from oracles import epsilon_exhaustive, rdp_subsampled_gaussian, steps_forward_scan


class TestSingleStep:
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("alpha", list(range(2, 17)))
    def test_unsubsampled_identity(self, sigma, alpha):
        assert rdp_single_step(1.0, sigma, alpha) == pytest.approx(
            alpha / (2 * sigma**2), abs=1e-12
        )

    def test_no_data_limit(self):
        assert rdp_single_step(1e-6, 1.0, 2) < 1e-9

    def test_sigma_zero_signals_infinity(self):
        assert rdp_single_step(0.01, 0.0, 4) == math.inf

    def test_against_quadrature_oracle_spot(self):
        # the dense grid runs in the acceptance suite; spot-check here
        for q, sigma, alpha in [(0.01, 1.0, 2), (0.1, 0.5, 5), (1e-3, 2.0, 8)]:
            mine = rdp_single_step(q, sigma, alpha)
            oracle = rdp_subsampled_gaussian(q, sigma, alpha)
            assert mine == pytest.approx(oracle, rel=1e-6)

    @pytest.mark.parametrize("alpha", [1.25, 1.5, 1.75, 2.5, 3.5])
    def test_fractional_orders_against_oracle(self, alpha):
        mine = rdp_single_step(0.02, 0.8, alpha)
        oracle = rdp_subsampled_gaussian(0.02, 0.8, alpha)
        assert mine == pytest.approx(oracle, rel=1e-6)

    def test_invalid_inputs(self):
        with pytest.raises(ConfigError):
            rdp_single_step(0.0, 1.0, 2)
        with pytest.raises(ConfigError):
            rdp_single_step(1.5, 1.0, 2)
        with pytest.raises(ConfigError):
            rdp_single_step(0.5, 1.0, 1.0)

    def test_nonnegative(self):
        for q in (1e-5, 1e-3, 0.05, 0.5):
            for sigma in (0.3, 1.0, 5.0):
                assert rdp_single_step(q, sigma, 3) >= 0.0


class TestAccumulation:
    def test_zero_steps_identity(self):
        st = AccountantState(q=0.01, sigma=1.0)
        assert np.array_equal(st.accumulate(0).rdp, st.rdp)

    def test_exact_additivity(self):
        st = AccountantState(q=0.01, sigma=1.0)
        a = st.accumulate(7).accumulate(5)
        b = st.accumulate(12)
        assert np.array_equal(a.rdp, b.rdp)
        assert a.steps == b.steps == 12

    def test_linearity(self):
        st = AccountantState(q=32 / 10000, sigma=1.0).accumulate(312)
        assert np.array_equal(st.rdp, 312 * st.single_step)

    def test_negative_rejected(self):
        with pytest.raises(ConfigError):
            AccountantState(q=0.01, sigma=1.0).accumulate(-1)


class TestEpsilon:
    def test_single_step_frozen_value(self):
        # min over the grid of alpha/2 + ln(1e5)/(alpha-1); alpha = 6 wins
        st = AccountantState(q=1.0, sigma=1.0).accumulate(1)
        eps, order = st.epsilon(1e-5)
        assert order == 6
        assert eps == pytest.approx(3.0 + math.log(1e5) / 5.0, abs=1e-12)
        assert eps == pytest.approx(5.302585092994046, abs=1e-12)

    def test_exhaustive_scan_oracle(self):
        st = AccountantState(q=0.02, sigma=0.7).accumulate(40)
        for delta in (1e-5, 1e-3, 0.1):
            mine = st.epsilon(delta)
            oracle = epsilon_exhaustive(st.orders, st.rdp, delta)
            assert mine == pytest.approx(oracle)

    def test_delta_to_one_limit(self):
        st = AccountantState(q=0.05, sigma=1.0).accumulate(10)
        eps, _ = st.epsilon(1 - 1e-12)
        assert eps == pytest.approx(float(np.min(st.rdp)), abs=1e-9)

    def test_doubling_steps_never_decreases(self):
        st = AccountantState(q=0.01, sigma=1.0)
        eps = [st.accumulate(t).epsilon(1e-5)[0] for t in (1, 2, 4, 8, 16, 32)]
        assert all(b >= a for a, b in zip(eps, eps[1:]))

    def test_sigma_zero_no_guarantee(self):
        st = AccountantState(q=0.5, sigma=0.0).accumulate(1)
        eps, order = st.epsilon(1e-5)
        assert eps == math.inf and order is None

    def test_invalid_delta(self):
        st = AccountantState(q=0.5, sigma=1.0)
        with pytest.raises(ConfigError):
            st.epsilon(0.0)
        with pytest.raises(ConfigError):
            st.epsilon(1.0)


class TestMonotonicity:
    def test_epsilon_monotone_in_steps(self):
        st = AccountantState(q=0.01, sigma=1.0)
        eps = [st.accumulate(t).epsilon(1e-5)[0] for t in range(1, 40, 3)]
        assert all(b >= a - 1e-12 for a, b in zip(eps, eps[1:]))

    def test_epsilon_monotone_in_q(self):
        qs = [1e-4, 1e-3, 0.01, 0.1, 0.5, 1.0]
        eps = [AccountantState(q=q, sigma=1.0).accumulate(50).epsilon(1e-5)[0] for q in qs]
        assert all(b >= a - 1e-12 for a, b in zip(eps, eps[1:]))

    def test_epsilon_antimonotone_in_sigma(self):
        sigmas = [0.5, 0.8, 1.0, 2.0, 4.0]
        eps = [AccountantState(q=0.01, sigma=s).accumulate(50).epsilon(1e-5)[0] for s in sigmas]
        assert all(b <= a + 1e-12 for a, b in zip(eps, eps[1:]))


class TestStepsUntilBudget:
    def test_below_single_step(self):
        # one step of q=1, sigma=1 costs ~5.3 at delta=1e-5
        assert steps_until_budget(1.0, 1.0, 1e-5, 1.0) == 0

    def test_defining_property(self):
        t = steps_until_budget(0.02, 0.8, 1e-5, 4.0)
        st = AccountantState(q=0.02, sigma=0.8)
        assert st.accumulate(t).epsilon(1e-5)[0] <= 4.0
        assert st.accumulate(t + 1).epsilon(1e-5)[0] > 4.0

    def test_forward_scan_oracle(self):
        q, sigma, delta, eps_max = 0.0032, 1.0, 1e-5, 8.0
        t = steps_until_budget(q, sigma, delta, eps_max)
        st = AccountantState(q=q, sigma=sigma)
        oracle = steps_forward_scan(st.single_step, st.orders, delta, eps_max, t + 10)
        assert t == oracle
        assert t == 116238  # frozen from the scan oracle

    def test_sigma_zero_allows_nothing(self):
        assert steps_until_budget(0.5, 0.0, 1e-5, 100.0) == 0


class TestReports:
    def test_epsilon_report_text(self):
        st = AccountantState(q=0.01, sigma=1.0).accumulate(10)
        text = epsilon_report(st, 1e-5)
        eps, best = st.epsilon(1e-5)
        assert f"{eps:.6g}" in text
        assert "<-- min" in text
        assert str(len(DEFAULT_ORDERS)) not in ""  # grid rows present
        assert len(text.splitlines()) == len(DEFAULT_ORDERS) + 3

    def test_paper_interpretations_all_four(self):
        rows = paper_budget_interpretations()
        assert len(rows) == 4
        assert {(r["population"], r["delta_label"]) for r in rows} == {
            ("80K", "1e-5"), ("80K", "1/80K"), ("8M", "1e-5"), ("8M", "1/8M"),
        }
        for r in rows:
            assert math.isfinite(r["epsilon"]) and r["epsilon"] > 0
            assert r["steps"] == 156
