import numpy as np
import pytest
from scipy.stats import kstest

from npivband import basis as bs
from npivband import bootstrap as bt
from npivband import estimator as est
from npivband.errors import ConfigurationError, DegenerateVarianceError, InvalidDimensionError

CUBIC = bs.BasisSpec(4, 0)
ISPEC = bs.InstrumentSpec(CUBIC, q=2)


def _field(n=120, seed=0, js=(4, 7), grid=None, deriv=0):
    rng = np.random.default_rng(seed)
    x = rng.random(n)
    w = np.clip(x + 0.15 * rng.standard_normal(n), 0, 1)
    y = np.sin(3 * x) + 0.5 * rng.standard_normal(n)
    s = est.Sample(y, x, w)
    fits = {j: est.fit(s, CUBIC, ISPEC, j) for j in js}
    return est.variance_field(fits, grid if grid is not None else np.linspace(0, 1, 30), deriv)


class TestDrawMultipliers:
    def test_deterministic_per_stream(self):
        plan = bt.MultiplierPlan(n_draws=10, base_seed=99)
        a = bt.draw_multipliers(plan, 3, 1000)
        b = bt.draw_multipliers(plan, 3, 1000)
        np.testing.assert_array_equal(a, b)

    def test_pooled_variance(self):
        plan = bt.MultiplierPlan(n_draws=10, base_seed=1)
        pooled = np.concatenate([bt.draw_multipliers(plan, b, 10_000) for b in range(10)])
        assert pooled.size == 100_000
        assert 0.99 < pooled.var() < 1.01
        assert abs(pooled.mean()) < 0.02

    def test_stream_independence(self):
        plan = bt.MultiplierPlan(n_draws=4, base_seed=2)
        u = bt.draw_multipliers(plan, 0, 100_000)
        v = bt.draw_multipliers(plan, 1, 100_000)
        assert abs(np.corrcoef(u, v)[0, 1]) < 0.02

    def test_draw_index_bounds(self):
        plan = bt.MultiplierPlan(n_draws=5, base_seed=0)
        with pytest.raises(ConfigurationError):
            bt.draw_multipliers(plan, 5, 10)

    def test_plan_validation(self):
        with pytest.raises(ConfigurationError):
            bt.MultiplierPlan(n_draws=0)
        with pytest.raises(ConfigurationError):
            bt.MultiplierPlan(base_seed=-1)


class TestSupTSingle:
    def test_pointwise_quantile_is_normal(self):
        # singleton grid, singleton J: the per-draw statistic is exactly |N(0,1)|,
        # so the two-sided 95% critical value is 1.96 and the 97.5% point of the
        # absolute value is 2.2414
        field = _field(n=60, js=(4,), grid=np.array([0.5]))
        plan = bt.MultiplierPlan(n_draws=100_000, base_seed=3)
        sups = bt.sup_t_single(field, plan, (4,))
        assert bt.quantile(sups, 0.95) == pytest.approx(1.96, abs=0.02)
        assert bt.quantile(sups, 0.975) == pytest.approx(2.2414, abs=0.02)

    def test_exact_conditional_normality_ks(self):
        # signed t-values at a fixed (x, J) are exactly standard normal
        field = _field(n=60, js=(4,), grid=np.array([0.4]))
        plan = bt.MultiplierPlan(n_draws=100_000, base_seed=4)
        row = field.scores[4][0] / field.sigma[4][0]
        n = field.n
        t_vals = np.empty(plan.n_draws)
        block = 1000
        for start in range(0, plan.n_draws, block):
            w = bt._multiplier_block(plan, start, min(start + block, plan.n_draws), n)
            t_vals[start : start + w.shape[1]] = row @ w
        assert kstest(t_vals, "norm").statistic < 0.01

    def test_zero_residuals_error_propagates(self):
        rng = np.random.default_rng(5)
        x = rng.random(100)
        f = est.fit(est.Sample(2 + 3 * x, x, x), CUBIC, None, 4)
        f_zero = est.NpivFit(
            j=4, k=4, x_basis=f.x_basis, psi=f.psi, bmat=f.bmat, m=f.m,
            c_hat=f.c_hat, u_hat=np.zeros(f.n), s_hat=1.0,
        )
        with pytest.raises(DegenerateVarianceError):
            est.variance_field({4: f_zero}, np.linspace(0, 1, 10))

    def test_sup_monotone_in_index_set(self):
        field = _field(js=(4, 7))
        plan = bt.MultiplierPlan(n_draws=200, base_seed=6)
        small = bt.sup_t_single(field, plan, (4,))
        big = bt.sup_t_single(field, plan, (4, 7))
        assert (big >= small - 1e-12).all()

    def test_empty_j_set_rejected(self):
        field = _field()
        with pytest.raises(ConfigurationError):
            bt.sup_t_single(field, bt.MultiplierPlan(10, 0), ())

    def test_thread_count_invariance(self):
        field = _field(js=(4, 7), n=150)
        plan = bt.MultiplierPlan(n_draws=300, base_seed=7)
        base = bt.sup_t_single(field, plan, (4, 7), n_workers=1)
        for workers in (4, 8):
            np.testing.assert_array_equal(
                bt.sup_t_single(field, plan, (4, 7), n_workers=workers), base
            )
        contrast = bt.sup_t_contrast(field, plan, [(4, 7)], n_workers=1)
        np.testing.assert_array_equal(
            bt.sup_t_contrast(field, plan, [(4, 7)], n_workers=8), contrast
        )

    def test_scale_invariance_by_two(self):
        rng = np.random.default_rng(8)
        x = rng.random(150)
        w = np.clip(x + 0.1 * rng.standard_normal(150), 0, 1)
        y = np.sin(3 * x) + 0.4 * rng.standard_normal(150)
        grid = np.linspace(0, 1, 25)
        plan = bt.MultiplierPlan(n_draws=150, base_seed=9)
        f1 = est.variance_field(
            {j: est.fit(est.Sample(y, x, w), CUBIC, ISPEC, j) for j in (4, 7)}, grid
        )
        f2 = est.variance_field(
            {j: est.fit(est.Sample(2 * y, x, w), CUBIC, ISPEC, j) for j in (4, 7)}, grid
        )
        np.testing.assert_array_equal(
            bt.sup_t_single(f1, plan, (4, 7)), bt.sup_t_single(f2, plan, (4, 7))
        )
        np.testing.assert_array_equal(
            bt.sup_t_contrast(f1, plan, [(4, 7)]), bt.sup_t_contrast(f2, plan, [(4, 7)])
        )


class TestSupTContrast:
    def test_self_pair_illegal(self):
        field = _field()
        with pytest.raises(InvalidDimensionError):
            bt.sup_t_contrast(field, bt.MultiplierPlan(10, 0), [(4, 4)])
        with pytest.raises(InvalidDimensionError):
            bt.sup_t_contrast(field, bt.MultiplierPlan(10, 0), [(7, 4)])

    def test_empty_pair_set_signals(self):
        field = _field(js=(4,))
        with pytest.raises(ConfigurationError):
            bt.sup_t_contrast(field, bt.MultiplierPlan(10, 0), [])

    def test_aliased_fits_degenerate_sd_handled(self):
        # J2 aliasing J: identical influence rows and residuals contrast to zero
        field = _field(js=(4, 7))
        alias = est.VarianceField(
            grid=field.grid,
            deriv=(0,),
            j_values=(4, 5),
            influence={4: field.influence[4], 5: field.influence[4].copy()},
            u_hat={4: field.u_hat[4], 5: field.u_hat[4].copy()},
            y=field.y,
        )
        sups = bt.sup_t_contrast(alias, bt.MultiplierPlan(50, 1), [(4, 5)])
        np.testing.assert_array_equal(sups, np.zeros(50))

    def test_quantile_monotone_across_levels(self):
        field = _field(js=(4, 7))
        sups = bt.sup_t_contrast(field, bt.MultiplierPlan(400, 2), [(4, 7)])
        assert bt.quantile(sups, 0.90) <= bt.quantile(sups, 0.95)


class TestBootstrapQuantiles:
    def test_audit_record_invariants(self):
        # assemble the audit record from one shared set of multiplier draws
        field = _field(js=(4, 7))
        plan = bt.MultiplierPlan(300, 12)
        theta_draws = bt.sup_t_contrast(field, plan, [(4, 7)])
        z_draws = bt.sup_t_single(field, plan, (4,))
        record = bt.BootstrapQuantiles(
            theta_star=bt.quantile(theta_draws, 0.75),
            z_star=bt.quantile(z_draws, 0.95),
            z_star_deriv=None,
            theta_draws=theta_draws,
            z_draws=z_draws,
        )
        assert record.theta_star >= 0.0 and record.z_star >= 0.0
        # quantiles are nondecreasing in the confidence level
        assert bt.quantile(record.z_draws, 0.90) <= bt.quantile(record.z_draws, 0.95)
        assert record.theta_draws.shape == (plan.n_draws,)


class TestQuantile:
    def test_order_statistic_convention(self):
        assert bt.quantile([1, 2, 3, 4], 0.5) == 2.0

    def test_levels_near_one_hit_top_order_statistics(self):
        draws = [1.0, 2.0, 3.0, 4.0]
        assert bt.quantile(draws, 0.80) == 4.0  # ceil(3.2) = 4
        assert bt.quantile(draws, 0.9999) == 4.0

    def test_normal_quantile_mc(self):
        rng = np.random.default_rng(10)
        draws = np.abs(rng.standard_normal(100_000))
        assert bt.quantile(draws, 0.95) == pytest.approx(1.96, abs=0.02)

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            bt.quantile([1.0], 1.0)
        with pytest.raises(ConfigurationError):
            bt.quantile([], 0.5)

    def test_monotone_in_level(self):
        rng = np.random.default_rng(11)
        draws = rng.random(501)
        qs = [bt.quantile(draws, lv) for lv in (0.5, 0.75, 0.9, 0.95, 0.99)]
        assert all(a <= b for a, b in zip(qs, qs[1:]))
