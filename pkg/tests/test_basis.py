import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import comb

from npivband import basis as bs
from npivband.errors import (
    ConfigurationError,
    DegenerateColumnError,
    DomainError,
    InvalidDimensionError,
    UnsupportedDerivativeError,
)


CUBIC = bs.BasisSpec(4, 0)


class TestDimensionGrid:
    def test_cubic_univariate(self):
        assert bs.dimension_grid(CUBIC, 200) == [4, 5, 7, 11, 19, 35, 67, 131]

    def test_haar(self):
        assert bs.dimension_grid(bs.BasisSpec(1, 0), 8) == [1, 2, 4, 8]

    def test_tensor_squares(self):
        # squares of the univariate entries, by the tensor formula
        assert bs.dimension_grid(bs.BasisSpec(4, 0, dim=2), 130) == [16, 25, 49, 121]

    def test_cap_below_minimum_is_error(self):
        with pytest.raises(InvalidDimensionError):
            bs.dimension_grid(CUBIC, 3)

    def test_resolution_roundtrip(self):
        for j in bs.dimension_grid(CUBIC, 600):
            level = bs.resolution_for_dimension(CUBIC, j)
            assert (2**level + 3) == j
        with pytest.raises(InvalidDimensionError):
            bs.resolution_for_dimension(CUBIC, 6)


class TestEvalBasis:
    def test_clamped_endpoint(self):
        np.testing.assert_allclose(bs.eval_basis(CUBIC, 0.0), [1, 0, 0, 0], atol=1e-15)

    def test_bernstein_midpoint(self):
        # no interior knots => Bernstein degree-3 values C(3,k) x^k (1-x)^(3-k)
        expected = [comb(3, k) * 0.5**3 for k in range(4)]
        np.testing.assert_allclose(bs.eval_basis(CUBIC, 0.5), expected, atol=1e-15)

    def test_partition_of_unity_random(self):
        rng = np.random.default_rng(0)
        x = rng.random(1000)
        for spec in (CUBIC, bs.BasisSpec(4, 3), bs.BasisSpec(2, 2), bs.BasisSpec(5, 1)):
            sums = bs.design_matrix(spec, x).sum(axis=1)
            assert np.abs(sums - 1).max() < 1e-12

    def test_partition_of_unity_tensor(self):
        rng = np.random.default_rng(1)
        x = rng.random((500, 2))
        sums = bs.design_matrix(bs.BasisSpec(4, 1, dim=2), x).sum(axis=1)
        assert np.abs(sums - 1).max() < 1e-12

    def test_domain_error(self):
        with pytest.raises(DomainError):
            bs.eval_basis(CUBIC, 1.2)
        with pytest.raises(DomainError):
            bs.eval_basis(CUBIC, -0.1)

    def test_at_most_order_nonzero(self):
        spec = bs.BasisSpec(4, 3)
        rng = np.random.default_rng(2)
        mat = bs.design_matrix(spec, rng.random(200))
        assert (np.count_nonzero(mat, axis=1) <= 4).all()

    def test_nonnegative(self):
        rng = np.random.default_rng(3)
        mat = bs.design_matrix(bs.BasisSpec(4, 2), rng.random(500))
        assert mat.min() >= 0.0

    def test_continuity_at_knots(self):
        spec = bs.BasisSpec(4, 2)
        for knot in spec.interior_knots[0]:
            left = bs.eval_basis(spec, knot - 1e-11)
            at = bs.eval_basis(spec, knot)
            assert np.abs(left - at).max() < 1e-10


class TestNestedness:
    def test_dyadic_refinement(self):
        grid = np.linspace(0, 1, 2000)
        for level in (0, 1, 2):
            coarse = bs.design_matrix(bs.BasisSpec(4, level), grid)
            fine = bs.design_matrix(bs.BasisSpec(4, level + 1), grid)
            coef, *_ = np.linalg.lstsq(fine, coarse, rcond=None)
            assert np.abs(fine @ coef - coarse).max() < 1e-9


class TestDerivatives:
    def test_zero_order_matches_eval(self):
        rng = np.random.default_rng(4)
        x = rng.random(50)
        spec = bs.BasisSpec(4, 2)
        np.testing.assert_array_equal(bs.design_matrix(spec, x, 0), bs.design_matrix(spec, x))

    def test_bernstein_derivative(self):
        np.testing.assert_allclose(
            bs.eval_basis_deriv(CUBIC, 0.5, 1), [-0.75, -0.75, 0.75, 0.75], atol=1e-14
        )

    def test_derivative_sums_to_zero(self):
        rng = np.random.default_rng(5)
        x = rng.random(300)
        sums = bs.design_matrix(bs.BasisSpec(4, 3), x, 1).sum(axis=1)
        assert np.abs(sums).max() < 1e-12

    def test_order_too_large(self):
        with pytest.raises(UnsupportedDerivativeError):
            bs.eval_basis_deriv(CUBIC, 0.5, 3)
        with pytest.raises(UnsupportedDerivativeError):
            bs.eval_basis_deriv(bs.BasisSpec(2, 1), 0.5, 1)

    def test_finite_difference_second_order(self):
        # central difference error is O(h^2): halving h divides the error by ~4
        spec = bs.BasisSpec(4, 2)
        x0 = 0.33  # not a knot
        errs = []
        for h in (1e-3, 5e-4):
            fd = (bs.eval_basis(spec, x0 + h) - bs.eval_basis(spec, x0 - h)) / (2 * h)
            errs.append(np.abs(fd - bs.eval_basis_deriv(spec, x0, 1)).max())
        ratio = errs[0] / errs[1]
        assert 3.5 < ratio < 4.5

    def test_second_derivative_against_first(self):
        spec = bs.BasisSpec(5, 2)
        x0 = 0.41
        h = 1e-4
        fd = (bs.eval_basis_deriv(spec, x0 + h, 1) - bs.eval_basis_deriv(spec, x0 - h, 1)) / (2 * h)
        np.testing.assert_allclose(fd, bs.eval_basis_deriv(spec, x0, 2), atol=1e-4)


class TestInstrumentDim:
    def test_examples(self):
        ispec = bs.InstrumentSpec(CUBIC, q=2)
        assert bs.instrument_dim(ispec, 4) == 8  # l=0 -> l_w=2 -> 2^2+5-1
        assert bs.instrument_dim(ispec, 7) == 20  # l=2 -> l_w=4 -> 2^4+4

    def test_order_bump_alone(self):
        # q=0 same dimension: K = 2^l + r > J = 2^l + r - 1
        ispec = bs.InstrumentSpec(CUBIC, q=0)
        for j in bs.dimension_grid(CUBIC, 200):
            assert bs.instrument_dim(ispec, j) == j + 1

    def test_monotone_and_dominating(self):
        ispec = bs.InstrumentSpec(CUBIC, q=1)
        ks = [bs.instrument_dim(ispec, j) for j in bs.dimension_grid(CUBIC, 600)]
        assert all(k2 > k1 for k1, k2 in zip(ks, ks[1:]))
        assert all(k >= j for k, j in zip(ks, bs.dimension_grid(CUBIC, 600)))

    def test_invalid_dimension(self):
        with pytest.raises(InvalidDimensionError):
            bs.instrument_dim(bs.InstrumentSpec(CUBIC, q=2), 6)


class TestTransforms:
    def test_affine(self):
        out = bs.apply_transform(bs.SupportTransform("affine", lo=0, hi=10), [5.0])
        assert out[0] == 0.5

    def test_affine_requires_ordered_bounds(self):
        with pytest.raises(ConfigurationError):
            bs.SupportTransform("affine", lo=1.0, hi=1.0)

    def test_trade_clamp_truncates(self):
        out = bs.apply_transform(bs.TRADE_CLAMP, [-12.0, -10.0, -5.0, 0.0])
        np.testing.assert_allclose(out, [0.0, 0.0, 0.5, 1.0])

    def test_empirical_cdf_ranks(self):
        np.testing.assert_allclose(
            bs.apply_transform(bs.SupportTransform("empirical_cdf"), [3, 1, 2]),
            [1.0, 1 / 3, 2 / 3],
        )

    def test_empirical_cdf_midranks_for_ties(self):
        out = bs.apply_transform(bs.SupportTransform("empirical_cdf"), [1, 1, 2, 3])
        np.testing.assert_allclose(out, [1.5 / 4, 1.5 / 4, 3 / 4, 1.0])

    def test_constant_column_degenerate(self):
        with pytest.raises(DegenerateColumnError):
            bs.apply_transform(bs.SupportTransform("empirical_cdf"), [2.0, 2.0, 2.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40))
    def test_ecdf_preserves_order(self, values):
        col = np.asarray(values)
        if col.max() == col.min():
            return
        out = bs.apply_transform(bs.SupportTransform("empirical_cdf"), col)
        assert out.min() > 0.0 and out.max() <= 1.0
        order = np.argsort(col, kind="stable")
        assert (np.diff(out[order]) >= -1e-15).all()


class TestQuantileKnots:
    def test_placement(self):
        rng = np.random.default_rng(6)
        data = rng.beta(2, 5, size=2000)
        spec = bs.make_spec(4, 2, knot_rule="empirical_quantile", data=data)
        np.testing.assert_allclose(
            spec.interior_knots[0], np.quantile(data, [0.25, 0.5, 0.75]), rtol=1e-12
        )

    def test_too_discrete_column(self):
        with pytest.raises(DegenerateColumnError):
            bs.make_spec(4, 3, knot_rule="empirical_quantile", data=np.array([0.2, 0.8] * 10))

    def test_partition_of_unity_holds(self):
        rng = np.random.default_rng(7)
        data = rng.beta(0.5, 3, size=1000)
        spec = bs.make_spec(4, 3, knot_rule="empirical_quantile", data=data)
        sums = bs.design_matrix(spec, rng.random(500)).sum(axis=1)
        assert np.abs(sums - 1).max() < 1e-12


class TestSpecValidation:
    def test_invariants(self):
        spec = bs.BasisSpec(4, 3, dim=2)
        assert spec.dim_per_axis == 2**3 + 3
        assert spec.n_funcs == 11**2
        assert len(spec.interior_knots[0]) == 2**3 - 1

    def test_bad_specs(self):
        with pytest.raises(ConfigurationError):
            bs.BasisSpec(0, 1)
        with pytest.raises(ConfigurationError):
            bs.BasisSpec(4, -1)
        with pytest.raises(ConfigurationError):
            bs.BasisSpec(4, 1, knot_rule="nope")
        with pytest.raises(ConfigurationError):
            bs.BasisSpec(4, 1, interior_knots=((0.2, 0.1),))
        with pytest.raises(ConfigurationError):
            bs.BasisSpec(4, 1, interior_knots=((0.0,),))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 4))
    def test_grid_membership(self, order, resolution):
        spec = bs.BasisSpec(order, resolution)
        j = spec.n_funcs
        assert j in bs.dimension_grid(bs.BasisSpec(order, 0), j)
