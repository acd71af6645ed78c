import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pricebands.calibration import (
    ObservedDeal,
    default_blend_weight,
    dump_observed_deals,
    fit_ols,
    load_observed_deals,
    refresh_prior,
)
from pricebands.deal_model import MultiplierVector
from pricebands.engine import SimulationPlan, price_one, simulate
from pricebands.errors import ConfigurationError
from pricebands.priors import ConstraintSet, ParameterVector, PriorSpec

from .conftest import CASE_MU, CASE_S, SCENARIOS

ALPHA = math.log(3.9e-5)


def synthetic(n, sigma, rng, alpha=ALPHA, beta=CASE_MU):
    logx = rng.uniform(0.0, 0.7, size=(n, 5))
    y = alpha + logx @ np.array(beta) + sigma * rng.standard_normal(n)
    return [ObservedDeal(MultiplierVector(tuple(np.exp(lx))), float(np.exp(v)), f"d{k}")
            for k, (lx, v) in enumerate(zip(logx, y))]


class TestFit:
    def test_exact_recovery(self):
        fit = fit_ols(synthetic(40, 0.0, np.random.default_rng(0)))
        assert fit.alpha_hat == pytest.approx(ALPHA, abs=1e-9)
        assert fit.beta_hat == pytest.approx(CASE_MU, abs=1e-9)
        assert fit.sigma_hat < 1e-9
        assert fit.dof == 34

    def test_noisy_recovery(self):
        fit = fit_ols(synthetic(500, 0.2, np.random.default_rng(1)))
        for b, true, se in zip(fit.beta_hat, CASE_MU, fit.se_beta):
            assert abs(b - true) < 4 * se
        assert fit.sigma_hat == pytest.approx(0.2, rel=0.1)
        assert all(se > 0 for se in fit.se_beta)

    def test_identical_x_is_rank_deficient(self):
        x = MultiplierVector((1.5, 1.2, 1.1, 1.3, 1.4))
        deals = [ObservedDeal(x, 1e-4 * (1 + k / 10)) for k in range(10)]
        with pytest.raises(ConfigurationError, match="rank deficient"):
            fit_ols(deals)

    def test_one_constant_lever_is_named(self):
        deals = synthetic(30, 0.1, np.random.default_rng(2))
        fixed = [ObservedDeal(MultiplierVector(d.multipliers.values[:2] + (1.2,) + d.multipliers.values[3:]),
                              d.price_usd_per_mb) for d in deals]
        with pytest.raises(ConfigurationError, match="QF"):
            fit_ols(fixed)

    def test_duplicated_lever_is_named(self):
        deals = synthetic(30, 0.1, np.random.default_rng(3))
        dup = [ObservedDeal(MultiplierVector(d.multipliers.values[:4] + (d.multipliers.values[0],)),
                            d.price_usd_per_mb) for d in deals]
        with pytest.raises(ConfigurationError) as info:
            fit_ols(dup)
        assert "TN" in str(info.value) and "RIGHTS" in str(info.value)

    def test_too_few_deals(self):
        with pytest.raises(ConfigurationError, match="at least 7"):
            fit_ols(synthetic(6, 0.1, np.random.default_rng(4)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31))
    def test_reorder_invariant(self, seed):
        deals = synthetic(25, 0.3, np.random.default_rng(seed))
        shuffled = deals[:]
        random.Random(seed).shuffle(shuffled)
        a, b = fit_ols(deals), fit_ols(shuffled)
        assert b.beta_hat == pytest.approx(a.beta_hat, abs=1e-9)
        assert b.alpha_hat == pytest.approx(a.alpha_hat, abs=1e-9)
        assert b.sigma_hat == pytest.approx(a.sigma_hat, rel=1e-9)

    def test_ols_beats_other_linear_unbiased_estimator(self):
        # Gauss-Markov: any other linear unbiased estimator, here weighted
        # least squares with arbitrary fixed weights, has no smaller variance
        rng = np.random.default_rng(5)
        logx = rng.uniform(0.0, 0.7, size=(60, 5))
        Z = np.column_stack([np.ones(60), logx])
        weights = rng.uniform(0.1, 3.0, 60)
        ols, wls = [], []
        for _ in range(200):
            y = ALPHA + logx @ np.array(CASE_MU) + 0.2 * rng.standard_normal(60)
            deals = [ObservedDeal(MultiplierVector(tuple(np.exp(lx))), float(np.exp(v))) for lx, v in zip(logx, y)]
            ols.append(fit_ols(deals).beta_hat)
            wz = Z * weights[:, None]
            wls.append(np.linalg.solve(Z.T @ wz, wz.T @ y)[1:])
        var_ols, var_wls = np.var(ols, axis=0), np.var(wls, axis=0)
        assert np.all(var_ols <= var_wls)


class TestRefresh:
    @pytest.fixture
    def old(self):
        return PriorSpec(b0=3.9e-5, s_alpha=0.25, mu=CASE_MU, s=CASE_S, s_sigma=0.35)

    @pytest.fixture
    def fit(self):
        return fit_ols(synthetic(200, 0.3, np.random.default_rng(6), alpha=ALPHA + 0.5,
                                 beta=(1.37, 0.9, 1.0, 1.2, 1.1)))

    def test_zero_weight_unchanged(self, old, fit):
        assert refresh_prior(old, fit, 0.0) == old

    def test_full_weight_replaces(self, old, fit):
        new = refresh_prior(old, fit, 1.0)
        assert new.mu == fit.beta_hat
        assert new.s == fit.se_beta
        assert new.log_b0 == pytest.approx(fit.alpha_hat, abs=1e-14)
        assert new.s_sigma * math.sqrt(2 / math.pi) == pytest.approx(fit.sigma_hat, rel=1e-14)

    def test_midpoint(self, old):
        fit = fit_ols(synthetic(50, 0.0, np.random.default_rng(7), beta=(1.37, *CASE_MU[1:])))
        new = refresh_prior(old, fit, 0.5)
        assert new.mu[0] == pytest.approx(1.27, abs=1e-9)

    def test_bad_weight(self, old, fit):
        with pytest.raises(ConfigurationError):
            refresh_prior(old, fit, 1.5)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1))
    def test_refreshed_prior_is_valid(self, w):
        old = PriorSpec(b0=3.9e-5, s_alpha=0.25, mu=CASE_MU, s=CASE_S, s_sigma=0.35)
        fit = fit_ols(synthetic(30, 0.2, np.random.default_rng(8)))
        new = refresh_prior(old, fit, w)
        assert new.b0 > 0 and new.s_sigma >= 0 and all(s >= 0 for s in new.s)

    def test_default_weight(self):
        assert default_blend_weight(20) == 0.5
        assert default_blend_weight(0) == 0.0


def test_closes_loop_with_engine():
    fit = fit_ols(synthetic(30, 0.0, np.random.default_rng(9)))
    old = PriorSpec(b0=1e-4, s_alpha=0.3, mu=(1,) * 5, s=(0.1,) * 5, s_sigma=0.3)
    prior = refresh_prior(old, fit, 1.0)
    x = MultiplierVector((1.4, 1.2, 1.05, 1.5, 1.3))
    s = simulate(SimulationPlan(20, 5, seed=1), prior, ConstraintSet.unconstrained(), x)
    expected = price_one(ParameterVector(fit.alpha_hat, fit.beta_hat, 0.0), x)
    np.testing.assert_allclose(s.samples, expected, rtol=1e-10)


def test_observed_file_round_trip(tmp_path):
    deals = load_observed_deals(SCENARIOS / "observed_deals.yaml")
    assert len(deals) >= 7
    path = tmp_path / "deals.yaml"
    path.write_text(dump_observed_deals(deals))
    assert load_observed_deals(path) == deals


def test_observed_file_malformed(tmp_path):
    path = tmp_path / "deals.yaml"
    path.write_text("deals:\n  - {label: a, price_usd_per_mb: 1.0e-4}\n")
    with pytest.raises(ConfigurationError, match="malformed"):
        load_observed_deals(path)
