import numpy as np
import pytest

from skewinfo.batch_runner import BatchRunner
from skewinfo.density import SkewModel, ThetaPoint
from skewinfo.ml_fitter import MLFitter, MLInputError


@pytest.fixture
def fitter(runner):
    return MLFitter(runner=runner)


@pytest.fixture
def skew_normal(kernels, skewers):
    return kernels.create("gaussian"), skewers.create("linear")


class TestPreconditions:
    def test_too_few_points(self, fitter, skew_normal):
        with pytest.raises(MLInputError, match="at least 30"):
            fitter.fit(*skew_normal, np.linspace(-1.0, 1.0, 29))

    def test_zero_variance(self, fitter, skew_normal):
        with pytest.raises(MLInputError, match="zero variance"):
            fitter.fit(*skew_normal, np.ones(50))

    def test_non_finite(self, fitter, skew_normal):
        data = np.linspace(-1.0, 1.0, 50)
        data[3] = np.nan
        with pytest.raises(MLInputError):
            fitter.fit(*skew_normal, data)

    def test_experiment_needs_replicates(self, fitter, skew_normal):
        with pytest.raises(MLInputError):
            fitter.symmetry_experiment(*skew_normal, ThetaPoint(0.0, 1.0, 0.0), n=100, R=1)

    def test_experiment_needs_symmetry(self, fitter, skew_normal):
        with pytest.raises(MLInputError):
            fitter.symmetry_experiment(*skew_normal, ThetaPoint(0.0, 1.0, 1.0), n=100, R=100)


class TestBimodalityCoefficient:
    def test_two_point(self):
        assert MLFitter.bimodality_coefficient(np.array([-1.0, 1.0] * 50)) == pytest.approx(1.0)

    def test_normal_sample(self, rng):
        value = MLFitter.bimodality_coefficient(rng.standard_normal(200_000))
        assert value == pytest.approx(1.0 / 3.0, abs=0.01)

    def test_degenerate(self):
        assert np.isnan(MLFitter.bimodality_coefficient(np.ones(10)))


class TestFit:
    def test_recovers_skewness(self, fitter, skew_normal):
        truth = ThetaPoint(1.0, 2.0, 2.0)
        data = SkewModel(*skew_normal, truth).sample(5000, seed=3)
        result = fitter.fit(*skew_normal, data)
        assert result.converged
        assert 1.2 < result.theta_hat.delta[0] < 3.2
        np.testing.assert_allclose(result.theta_hat.sigma_half, [[2.0]], rtol=0.15)
        assert result.labels == ["mu1", "s11", "delta1"]
        assert result.stderr_proxy is not None
        assert not result.information_singular

    def test_skew_normal_at_unit_delta(self, fitter, skew_normal):
        data = SkewModel(*skew_normal, ThetaPoint(0.0, 1.0, 1.0)).sample(2000, seed=17)
        result = fitter.fit(*skew_normal, data)
        stderr = result.stderr_proxy[-1]
        # asymptotic standard deviation of delta-hat here is about 0.19
        assert 0.1 < stderr < 0.6
        assert abs(result.theta_hat.delta[0] - 1.0) < 3.0 * stderr

    def test_sine_at_symmetry_is_root_n(self, fitter, kernels, skewers):
        sine = (kernels.create("gaussian"), skewers.create("sine"))
        data = SkewModel(*sine).sample(2000, seed=19)
        result = fitter.fit(*sine, data)
        assert not result.information_singular
        stderr = result.stderr_proxy[-1]
        assert 0.07 < stderr < 0.16
        assert abs(result.theta_hat.delta[0]) < 3.0 * stderr

    def test_reproducible(self, fitter, skew_normal, rng):
        data = rng.standard_normal(300)
        first = fitter.fit(*skew_normal, data, compute_stderr=False)
        second = fitter.fit(*skew_normal, data, compute_stderr=False)
        assert first.loglik == second.loglik
        np.testing.assert_array_equal(first.theta_hat.delta, second.theta_hat.delta)

    def test_shift_equivariance(self, fitter, skew_normal):
        data = SkewModel(*skew_normal, ThetaPoint(0.0, 1.0, 2.0)).sample(500, seed=5)
        base = fitter.fit(*skew_normal, data, compute_stderr=False)
        shifted = fitter.fit(*skew_normal, data + 3.0, compute_stderr=False)
        np.testing.assert_allclose(shifted.theta_hat.mu, base.theta_hat.mu + 3.0, atol=1e-4)
        np.testing.assert_allclose(shifted.theta_hat.sigma_half, base.theta_hat.sigma_half, atol=1e-4)
        np.testing.assert_allclose(shifted.theta_hat.delta, base.theta_hat.delta, atol=1e-4)
        assert shifted.loglik == pytest.approx(base.loglik, abs=1e-6)

    def test_loglik_at_optimum_beats_truth(self, fitter, skew_normal):
        truth = ThetaPoint(0.0, 1.0, 1.0)
        model = SkewModel(*skew_normal, truth)
        data = model.sample(400, seed=9)
        result = fitter.fit(*skew_normal, data, compute_stderr=False)
        assert result.loglik >= float(np.sum(model.logpdf(data))) - 1e-8

    def test_two_dimensional(self, fitter, kernels, skewers):
        kernel = kernels.create("gaussian", dim=2)
        skewer = skewers.create("linear", dim=2)
        truth = ThetaPoint([0.0, 1.0], [[1.0, 0.3], [0.3, 1.5]], [1.0, -1.0])
        data = SkewModel(kernel, skewer, truth).sample(2000, seed=4)
        result = fitter.fit(kernel, skewer, data, compute_stderr=False)
        assert result.theta_hat.delta.shape == (2,)
        assert result.labels == ["mu1", "mu2", "s11", "s12", "s22", "delta1", "delta2"]
        np.testing.assert_allclose(result.theta_hat.sigma_half, result.theta_hat.sigma_half.T)


class TestSymmetryExperiment:
    def test_summary_shape(self, kernels, skewers):
        fitter = MLFitter(runner=BatchRunner(max_workers=2))
        summary = fitter.symmetry_experiment(
            kernels.create("gaussian"), skewers.create("sine"), ThetaPoint(0.0, 1.0, 0.0), n=100, R=100, seed=1
        )
        assert summary.replicates == 100
        assert summary.delta_hats.shape == (100,)
        assert summary.failed == []
        assert 0.0 <= summary.sign_split <= 1.0
        assert summary.success_rate == 100.0

    def test_failed_replicates_are_recorded(self, runner, kernels, skewers):
        class FailingFitter(MLFitter):
            def fit(self, *args, **kwargs):
                raise MLInputError("no fit")

        summary = FailingFitter(runner=runner).symmetry_experiment(
            kernels.create("gaussian"), skewers.create("linear"), ThetaPoint(0.0, 1.0, 0.0), n=50, R=100
        )
        assert summary.failed == list(range(100))
        assert summary.success_rate == 0.0
        assert np.all(np.isnan(summary.delta_hats))
        assert np.isnan(summary.bimodality_coefficient)

    def test_reproducible(self, fitter, kernels, skewers):
        args = (kernels.create("gaussian"), skewers.create("sine"), ThetaPoint(0.0, 1.0, 0.0))
        first = fitter.symmetry_experiment(*args, n=50, R=100, seed=7)
        second = fitter.symmetry_experiment(*args, n=50, R=100, seed=7)
        np.testing.assert_array_equal(first.delta_hats, second.delta_hats)

    @pytest.mark.slow
    @pytest.mark.parametrize("skewer,bimodal", [("linear", True), ("sine", False)])
    def test_bimodality_separates_singular_models(self, fitter, kernels, skewers, golden, skewer, bimodal):
        summary = fitter.symmetry_experiment(
            kernels.create("gaussian"), skewers.create(skewer), ThetaPoint(0.0, 1.0, 0.0), n=200, R=500, seed=2024
        )
        assert summary.failed == []
        assert 0.35 <= summary.sign_split <= 0.65
        assert (summary.bimodality_coefficient > 0.55) == bimodal
        golden.check(
            f"gaussian_{skewer}_n200_R500_seed2024",
            {"bimodality_coefficient": summary.bimodality_coefficient, "sign_split": summary.sign_split},
            atol=0.05,
        )
