import numpy as np
import pytest

from npivband import adaptive as ad
from npivband import basis as bs
from npivband import estimator as est
from npivband import extensions as ext
from npivband.bootstrap import MultiplierPlan

CUBIC = bs.BasisSpec(4, 0)
ASPEC = ext.AdditiveSpec((CUBIC, CUBIC))


def _additive_sample(n=400, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 2))
    y = 1.0 + x[:, 0] + x[:, 1] ** 2 + noise * rng.standard_normal(n)
    return est.Sample(y, x, x)


class TestAdditiveFit:
    def test_exact_recovery_up_to_centering(self):
        fit = ext.fit_additive(_additive_sample(), ASPEC, None, 4)
        grid = np.linspace(0, 1, 201)
        # components are centered: h1 = x - 1/2, h2 = x^2 - 1/3
        err1 = np.abs(ext.evaluate_component(fit, 0, grid) - (grid - 0.5)).max()
        err2 = np.abs(ext.evaluate_component(fit, 1, grid) - (grid**2 - 1 / 3)).max()
        assert err1 < 1e-8 and err2 < 1e-8
        assert fit.intercept_hat == pytest.approx(1 + 0.5 + 1 / 3, abs=1e-8)

    def test_rank_deficient_design_flagged(self):
        fit = ext.fit_additive(_additive_sample(), ASPEC, None, 4)
        assert "design_rank_deficient" in fit.flags

    def test_centered_columns_integrate_to_zero(self):
        # analytic integral of each raw column equals the subtracted constant,
        # so the centered integral vanishes identically; verify the analytic
        # integrals against high-resolution quadrature
        fit = ext.fit_additive(_additive_sample(), ASPEC, None, 7)
        grid = np.linspace(0, 1, 20001)
        for basis, integrals in zip(fit.bases, fit.integrals):
            raw = bs.design_matrix(basis, grid)
            quad = np.trapezoid(raw, grid, axis=0)
            np.testing.assert_allclose(quad, integrals, atol=1e-8)
            centered = ext._centered_block(basis, integrals, grid, 0)
            assert np.abs(np.trapezoid(centered, grid, axis=0)).max() < 1e-8

    def test_additive_vs_tensor_fit_on_additive_truth(self):
        # both estimators target the same additive truth; compare away from the
        # data-sparse corners where the tensor fit is noisy
        rng = np.random.default_rng(1)
        n = 900
        x = rng.random((n, 2))
        y = np.sin(2 * x[:, 0]) + x[:, 1] + 0.3 * rng.standard_normal(n)
        s = est.Sample(y, x, x)
        afit = ext.fit_additive(s, ASPEC, None, 5)
        tfit = est.fit(s, bs.BasisSpec(4, 0, dim=2), None, 25)
        axis = np.linspace(0.1, 0.9, 12)
        mesh = np.meshgrid(axis, axis, indexing="ij")
        grid = np.stack([m.ravel() for m in mesh], axis=1)
        add_pred = ext.evaluate_additive(afit, grid)
        tensor_pred = est.evaluate(tfit, grid)
        assert np.abs(add_pred - tensor_pred).max() < 0.25
        assert np.abs(add_pred - tensor_pred).mean() < 0.08

    def test_full_derivative(self):
        fit = ext.fit_additive(_additive_sample(), ASPEC, None, 4)
        grid = ad.default_grid(2, 9)
        d1 = ext.evaluate_additive(fit, grid, (1, 0))
        np.testing.assert_allclose(d1, np.ones(grid.shape[0]), atol=1e-8)
        d2 = ext.evaluate_additive(fit, grid, (0, 1))
        np.testing.assert_allclose(d2, 2 * grid[:, 1], atol=1e-8)

    def test_instrumented_additive(self):
        rng = np.random.default_rng(2)
        n = 600
        x = rng.random((n, 2))
        w = np.clip(x + 0.1 * rng.standard_normal((n, 2)), 0, 1)
        y = 1 + x[:, 0] + x[:, 1] ** 2 + 0.2 * rng.standard_normal(n)
        s = est.Sample(y, x, w)
        ispec = bs.InstrumentSpec(CUBIC, q=1, dim_w=2)
        fit = ext.fit_additive(s, ASPEC, ispec, 4)
        grid = np.linspace(0, 1, 50)
        assert np.abs(ext.evaluate_component(fit, 0, grid) - (grid - 0.5)).max() < 0.2

    def test_selection_swap_invariance(self):
        rng = np.random.default_rng(3)
        n = 300
        x = rng.random((n, 2))
        y = 1 + np.sin(3 * x[:, 0]) + x[:, 1] ** 2 + 0.3 * rng.standard_normal(n)
        plan = MultiplierPlan(80, 3)
        grid = ad.default_grid(2, 12)
        sel_a = ext.select_additive(est.Sample(y, x, x), ASPEC, None, plan, grid=grid)
        x_sw = x[:, ::-1].copy()
        sel_b = ext.select_additive(est.Sample(y, x_sw, x_sw), ASPEC, None, plan, grid=grid)
        assert sel_a.j_tilde == sel_b.j_tilde
        # column reordering perturbs BLAS summation order at the last few bits
        assert sel_a.theta_star == pytest.approx(sel_b.theta_star, rel=1e-6)
        # component t-statistics swap along with the labels
        fa = sel_a.backend.fit(sel_a.j_tilde)
        fb = sel_b.backend.fit(sel_b.j_tilde)
        g1 = np.linspace(0, 1, 30)
        np.testing.assert_allclose(
            ext.evaluate_component(fa, 0, g1), ext.evaluate_component(fb, 1, g1), atol=1e-9
        )

    def test_component_band(self):
        rng = np.random.default_rng(4)
        n = 500
        x = rng.random((n, 2))
        truth1 = np.sin(3 * x[:, 0])
        y = 1 + truth1 + x[:, 1] + 0.4 * rng.standard_normal(n)
        plan = MultiplierPlan(100, 5)
        sel = ext.select_additive(est.Sample(y, x, x), ASPEC, None, plan, grid=ad.default_grid(2, 12))
        g1 = np.linspace(0, 1, 40)
        band = ext.component_band(sel, plan, 0.05, comp=0, grid=g1)
        centered_truth = np.sin(3 * g1) - (1 - np.cos(3.0)) / 3.0
        assert (band.halfwidth > 0).all()
        assert np.abs(band.center - centered_truth).max() < 5 * band.halfwidth.max()


class TestPartiallyLinear:
    def test_exact_recovery(self):
        rng = np.random.default_rng(5)
        n = 300
        x1 = rng.random(n)
        x2 = np.clip(0.5 + 0.2 * rng.standard_normal(n), 0, 1)
        y = (2 * x1 - 1) + 2.0 * x2
        s = est.Sample(y, np.column_stack([x1, x2]), np.column_stack([x1, x2]))
        spec = ext.PartiallyLinearSpec(CUBIC, linear_cols=(1,))
        fit = ext.fit_partially_linear(s, spec, None, 4)
        assert fit.beta[0] == pytest.approx(2.0, abs=1e-9)
        g = np.linspace(0, 1, 33)
        recovered = ext.evaluate_h1(fit, g) - fit.beta[0] * fit.x2_mean[0]
        np.testing.assert_allclose(recovered, 2 * g - 1, atol=1e-9)

    def test_empty_linear_block_reduces_to_plain_fit(self):
        rng = np.random.default_rng(6)
        n = 250
        x = rng.random(n)
        y = np.sin(3 * x) + 0.2 * rng.standard_normal(n)
        s = est.Sample(y, x, x)
        spec = ext.PartiallyLinearSpec(CUBIC, linear_cols=())
        fit = ext.fit_partially_linear(s, spec, None, 7)
        plain = est.fit(s, CUBIC, None, 7)
        np.testing.assert_allclose(fit.coef, plain.c_hat, atol=1e-10)

    def test_two_block_oracle(self):
        rng = np.random.default_rng(7)
        n = 50
        x1 = rng.random(n)
        x2 = np.clip(0.5 + 0.25 * rng.standard_normal(n), 0, 1)
        w = np.clip(x1 + 0.1 * rng.standard_normal(n), 0, 1)
        y = np.sin(3 * x1) + 1.5 * x2 + 0.1 * rng.standard_normal(n)
        s = est.Sample(y, np.column_stack([x1, x2]), w)
        spec = ext.PartiallyLinearSpec(CUBIC, linear_cols=(1,))
        fit = ext.fit_partially_linear(s, spec, bs.InstrumentSpec(CUBIC, q=2), 4)
        proj = fit.bmat @ np.linalg.pinv(fit.bmat.T @ fit.bmat) @ fit.bmat.T
        coef = np.linalg.solve(fit.design.T @ proj @ fit.design, fit.design.T @ proj @ s.y)
        np.testing.assert_allclose(fit.coef, coef, atol=1e-9)
        np.testing.assert_allclose(fit.beta, coef[fit.n_nonpar:], atol=1e-9)

    def test_no_nonparametric_block_is_linear_iv(self):
        rng = np.random.default_rng(8)
        n = 400
        w = rng.random(n)
        x2 = np.clip(w + 0.2 * rng.standard_normal(n), 0, 1)
        y = 0.5 + 2.0 * x2 + 0.3 * rng.standard_normal(n)
        s = est.Sample(y, x2, w)
        spec = ext.PartiallyLinearSpec(None, linear_cols=(0,))
        fit = ext.fit_partially_linear(s, spec, bs.InstrumentSpec(CUBIC, q=2), 4)
        # standard two-stage least squares with an intercept
        design = np.column_stack([np.ones(n), x2 - x2.mean()])
        inst = np.column_stack([np.ones(n), w])
        proj = inst @ np.linalg.pinv(inst.T @ inst) @ inst.T
        beta = np.linalg.solve(design.T @ proj @ design, design.T @ proj @ y)
        assert fit.beta[0] == pytest.approx(beta[1], abs=1e-10)

    def test_selection_runs(self):
        rng = np.random.default_rng(9)
        n = 500
        x1 = rng.random(n)
        x2 = np.clip(0.5 + 0.2 * rng.standard_normal(n), 0, 1)
        y = np.sin(4 * x1) + 1.2 * x2 + 0.4 * rng.standard_normal(n)
        s = est.Sample(y, np.column_stack([x1, x2]), np.column_stack([x1, x2]))
        spec = ext.PartiallyLinearSpec(CUBIC, linear_cols=(1,))
        sel = ext.select_partially_linear(s, spec, None, MultiplierPlan(80, 1))
        assert sel.j_tilde in sel.index_set
        assert sel.grid.shape[1] == 1


class TestFixedEffects:
    def _panel(self, n=800, seed=10, shift=0.0):
        rng = np.random.default_rng(seed)
        x = rng.random(n)
        w = np.clip(x + 0.15 * rng.standard_normal(n), 0, 1)
        exporter = rng.integers(0, 10, n)
        importer = rng.integers(0, 8, n)
        y = 1 + np.sin(3 * x) + 0.3 * rng.standard_normal(n)
        y = y + shift * (exporter == 3)
        return est.Sample(y, x, w), exporter, importer

    def test_zero_effects_near_noop(self):
        sample, exporter, importer = self._panel()
        ispec = bs.InstrumentSpec(CUBIC, q=2)
        plan = ext.FixedEffectsPlan((exporter, importer), j_max=7)
        adjusted, info = ext.partial_out_fixed_effects(sample, plan, ispec)
        # effects are zero in the DGP: the adjustment is pure estimation noise
        assert np.abs(adjusted.y - sample.y).mean() < 0.15
        np.testing.assert_array_equal(adjusted.x, sample.x)
        np.testing.assert_array_equal(adjusted.w, sample.w)

    def test_shifted_exporter_absorbed(self):
        sample, exporter, importer = self._panel(shift=5.0)
        ispec = bs.InstrumentSpec(CUBIC, q=2)
        plan = ext.FixedEffectsPlan((exporter, importer), j_max=7)
        adjusted, info = ext.partial_out_fixed_effects(sample, plan, ispec)
        effects = info["effects"][0]["effects"]
        others = np.delete(np.arange(10), 3)
        assert effects[3] - effects[others].mean() == pytest.approx(5.0, abs=0.3)
        # the shift is stripped from the adjusted outcome
        shifted_rows = exporter == 3
        assert np.abs(adjusted.y[shifted_rows].mean() - adjusted.y[~shifted_rows].mean()) < 0.3

    def test_single_level_factor_warns_noop(self):
        sample, exporter, _ = self._panel()
        ispec = bs.InstrumentSpec(CUBIC, q=2)
        plan = ext.FixedEffectsPlan((np.zeros(sample.n, dtype=int),), j_max=7)
        with pytest.warns(RuntimeWarning, match="single level"):
            adjusted, _ = ext.partial_out_fixed_effects(sample, plan, ispec)
        np.testing.assert_array_equal(adjusted.y, sample.y)

    def test_singleton_level_warns(self):
        sample, exporter, importer = self._panel(n=200)
        exporter = exporter.copy()
        exporter[0] = 99  # its own level
        ispec = bs.InstrumentSpec(CUBIC, q=2)
        plan = ext.FixedEffectsPlan((exporter,), j_max=4)
        with pytest.warns(RuntimeWarning, match="singleton"):
            ext.partial_out_fixed_effects(sample, plan, ispec)
