import numpy as np
import numpy.testing as npt
import pytest

from ebct import (
    Dataset,
    DrfPipeline,
    attach_bootstrap,
    bootstrap_se,
    bootstrap_statistic,
    default_grid,
    estimate_drf,
    estimate_weights,
    fit_wls,
    uniform_weights,
)
from ebct.errors import EbctError, ExtrapolationWarning, RankDeficientDesign, ResampleDegenerate
from ebct.simulation import gen_covariates, gen_outcome, gen_treatment, replication_rng

from conftest import random_dataset


class TestFitWls:

    def test_exact_interpolation(self, rng):
        design = np.column_stack([np.ones(12), rng.standard_normal((12, 2))])
        coef = np.array([1.0, -2.0, 0.5])
        y = design @ coef
        npt.assert_allclose(fit_wls(y, design, np.full(12, 1.0 / 12)), coef, atol=1e-10)

    def test_two_points_determine_line(self):
        design = np.array([[1.0, 0.0], [1.0, 1.0]])
        coef = fit_wls(np.array([0.0, 1.0]), design, np.array([0.9, 0.1]))
        npt.assert_allclose(coef, [0.0, 1.0], atol=1e-12)

    def test_matches_elementary_normal_equations(self, rng):
        # Oracle: accumulate the normal equations with explicit loops and
        # invert with the generic inverse.
        n = 10
        design = np.column_stack([np.ones(n), rng.standard_normal(n), rng.standard_normal(n)])
        y = rng.standard_normal(n)
        w = rng.uniform(0.2, 2.0, size=n)
        gram = np.zeros((3, 3))
        rhs = np.zeros(3)
        for i in range(n):
            row = design[i]
            gram += w[i] * np.outer(row, row)
            rhs += w[i] * y[i] * row
        expected = np.linalg.inv(gram) @ rhs
        npt.assert_allclose(fit_wls(y, design, w), expected, atol=1e-10)

    def test_weighted_residual_orthogonality(self, rng):
        n = 30
        design = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
        y = rng.standard_normal(n)
        w = rng.uniform(0.1, 1.0, size=n)
        coef = fit_wls(y, design, w)
        residuals = y - design @ coef
        moments = design.T @ (w * residuals)
        assert np.abs(moments).max() <= 1e-8 * max(1.0, np.abs(y).max())

    def test_weight_scale_invariance(self, rng):
        n = 15
        design = np.column_stack([np.ones(n), rng.standard_normal(n)])
        y = rng.standard_normal(n)
        w = rng.uniform(0.5, 1.5, size=n)
        npt.assert_allclose(fit_wls(y, design, w), fit_wls(y, design, 2.0 * w), atol=1e-12)

    def test_rank_deficiency_detected(self, rng):
        col = rng.standard_normal(10)
        design = np.column_stack([np.ones(10), col, 2.0 * col])
        with pytest.raises(RankDeficientDesign):
            fit_wls(rng.standard_normal(10), design, np.full(10, 0.1))


class TestEstimateDrf:

    def cubic_dataset(self, rng, noise=0.0):
        t = rng.uniform(0.0, 3.0, size=60)
        coef = np.array([0.5, -1.0, 0.75, 0.2])
        y = coef[0] + coef[1] * t + coef[2] * t**2 + coef[3] * t**3
        if noise:
            y = y + noise * rng.standard_normal(60)
        return Dataset(treatment=t, covariates=np.empty((60, 0)), outcome=y), coef

    def test_derivative_is_polynomial_calculus(self, rng):
        ds, _ = self.cubic_dataset(rng, noise=0.3)
        fit = estimate_drf(ds, uniform_weights(60), degree=3)
        a = fit.coefficients
        expected = a[1] + 2 * a[2] * fit.grid + 3 * a[3] * fit.grid**2
        npt.assert_allclose(fit.drf_derivatives, expected, atol=1e-12)

    def test_noiseless_cubic_recovered(self, rng):
        ds, coef = self.cubic_dataset(rng, noise=0.0)
        fit = estimate_drf(ds, uniform_weights(60), degree=3)
        npt.assert_allclose(fit.coefficients, coef, atol=1e-8)
        npt.assert_allclose(
            fit.drf_values,
            coef[0] + coef[1] * fit.grid + coef[2] * fit.grid**2 + coef[3] * fit.grid**3,
            atol=1e-8,
        )

    def test_default_grid_percentiles(self, rng):
        t = rng.standard_normal(500)
        grid = default_grid(t)
        assert grid.size == 50
        assert grid[0] == pytest.approx(np.percentile(t, 2))
        assert grid[-1] == pytest.approx(np.percentile(t, 98))
        assert np.all(np.diff(grid) > 0)

    def test_extrapolation_warns(self, rng):
        ds, _ = self.cubic_dataset(rng)
        grid = np.linspace(-1.0, 4.0, 20)
        with pytest.warns(ExtrapolationWarning):
            estimate_drf(ds, uniform_weights(60), degree=2, grid=grid)

    def test_outcome_required(self, rng):
        ds = random_dataset(rng, 30, 1, outcome=False)
        with pytest.raises(ValueError, match="outcome"):
            estimate_drf(ds, uniform_weights(30))

    def test_simulated_linear_effect_slope_near_one(self):
        # Design 1 (eta = 1) with balancing weights: degree-1 slope close to
        # the unit effect on a single large draw.
        rng = replication_rng(2024, 0)
        x = gen_covariates(1000, rng)
        t = gen_treatment(x, 4.0, rng)
        y = gen_outcome(x, t, 1.0, rng)
        ds = Dataset(treatment=t, covariates=x, outcome=y)
        weights = estimate_weights(ds, "ebct")
        fit = estimate_drf(ds, weights, degree=1)
        slope = fit.coefficients[1]
        assert slope == pytest.approx(1.0, abs=0.15)
        npt.assert_allclose(fit.drf_derivatives, np.full(fit.grid.size, slope), atol=1e-12)


class TestBootstrapStatistic:

    def test_constant_statistic_zero_se(self):
        draws = bootstrap_statistic(20, lambda idx: np.array([3.25]), 50, seed=1)
        assert draws.shape == (50, 1)
        assert draws.std(ddof=1) == 0.0

    def test_minimum_replications(self):
        with pytest.raises(ValueError):
            bootstrap_statistic(20, lambda idx: np.array([0.0]), 1, seed=1)

    def test_se_of_mean_matches_analytic(self):
        # Analytic oracle: the SE of the mean of m iid standard normals is
        # 1/sqrt(m).
        m = 400
        sample = np.random.default_rng(7).standard_normal(m)
        draws = bootstrap_statistic(m, lambda idx: np.array([sample[idx].mean()]), 1000, seed=3)
        se = float(draws.std(ddof=1))
        assert abs(se - 1.0 / np.sqrt(m)) <= 0.15 / np.sqrt(m)

    def test_seed_reproducibility(self):
        sample = np.random.default_rng(0).standard_normal(50)
        stat = lambda idx: np.array([sample[idx].mean()])
        first = bootstrap_statistic(50, stat, 25, seed=11)
        second = bootstrap_statistic(50, stat, 25, seed=11)
        npt.assert_array_equal(first, second)
        other = bootstrap_statistic(50, stat, 25, seed=12)
        assert not np.array_equal(first, other)

    def test_failed_replicates_redrawn(self):
        sample = np.random.default_rng(0).standard_normal(50)
        calls = {"failures": 0}

        def flaky(idx):
            if idx[0] % 3 == 0:
                calls["failures"] += 1
                raise EbctError("synthetic failure")
            return np.array([sample[idx].mean()])

        draws = bootstrap_statistic(50, flaky, 30, seed=5)
        assert draws.shape == (30, 1)
        assert calls["failures"] > 0

    def test_hopeless_statistic_aborts(self):
        def always_fails(idx):
            raise EbctError("cannot compute")

        with pytest.raises(ResampleDegenerate):
            bootstrap_statistic(20, always_fails, 5, seed=9)


class TestBootstrapSe:

    def drf_dataset(self):
        rng = replication_rng(77, 3)
        x = gen_covariates(120, rng)
        t = gen_treatment(x, 4.0, rng)
        y = gen_outcome(x, t, 1.0, rng)
        return Dataset(treatment=t, covariates=x, outcome=y)

    def test_pipeline_bootstrap_and_flags(self):
        ds = self.drf_dataset()
        grid = default_grid(ds.treatment, 10)
        pipeline = DrfPipeline(method="uniform", degree=1)
        result = bootstrap_se(ds, pipeline, replications=60, grid=grid, seed=4)
        assert result.derivative_se.shape == (10,)
        assert np.all(result.derivative_se > 0)
        expected_flags = np.abs(result.point_derivatives) / result.derivative_se > 1.645
        npt.assert_array_equal(result.significant_10pct, expected_flags)

    def test_percentile_variant(self):
        ds = self.drf_dataset()
        grid = default_grid(ds.treatment, 5)
        pipeline = DrfPipeline(method="uniform", degree=1)
        result = bootstrap_se(ds, pipeline, replications=60, grid=grid, seed=4, interval="percentile")
        assert result.significant_10pct.dtype == bool

    def test_attach_bootstrap(self):
        ds = self.drf_dataset()
        grid = default_grid(ds.treatment, 5)
        weights = uniform_weights(ds.n)
        fit = estimate_drf(ds, weights, degree=1, grid=grid)
        assert fit.derivative_se is None
        result = bootstrap_se(ds, DrfPipeline(method="uniform", degree=1), 30, grid, seed=2)
        augmented = attach_bootstrap(fit, result)
        npt.assert_array_equal(augmented.derivative_se, result.derivative_se)
        npt.assert_array_equal(augmented.significant_10pct, result.significant_10pct)

    def test_reestimates_weights_per_replicate(self):
        # The ebct pipeline re-solves on each resample, so its spread must
        # reflect more than outcome noise: SEs strictly positive and finite.
        ds = self.drf_dataset()
        grid = default_grid(ds.treatment, 5)
        result = bootstrap_se(ds, DrfPipeline(method="ebct", degree=1), 30, grid, seed=21)
        assert np.all(np.isfinite(result.derivative_se))
        assert np.all(result.derivative_se > 0)


class TestDrfCsv:

    def test_write_csv(self, tmp_path, rng):
        ds = random_dataset(rng, 40, 1, outcome=True)
        fit = estimate_drf(ds, uniform_weights(40), degree=2, grid=np.linspace(-0.5, 0.5, 4))
        path = tmp_path / "drf.csv"
        fit.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,drf,derivative,se,significant"
        assert len(lines) == 5
        assert lines[1].endswith(",,")  # no bootstrap: se and significant empty
