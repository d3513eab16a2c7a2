import numpy as np
import pytest
from scipy import stats

from skewinfo.exp_matcher import DegenerateCapabilityError, ExpMatcher, ExpMatcherError, VerificationFailure
from skewinfo.fisher_information import InfoKind
from skewinfo.density import SkewModel
from skewinfo.models import ExpOfNegPsiKernel, ProductKernel, StandardizationRule

SQRT_2PI = np.sqrt(2.0 * np.pi)


def diagnose(fisher, kernel, skewer):
    return fisher.rank_diagnosis(fisher.information(SkewModel(kernel, skewer)))


class TestNaturalSpace:
    def test_default_grid(self):
        grid = ExpMatcher.default_grid()
        assert grid.size == 50
        assert np.all(np.diff(grid) > 0)
        np.testing.assert_allclose(grid[[0, -1]], [-100.0, 100.0])
        np.testing.assert_allclose(grid[24:26], [-0.01, 0.01])

    def test_linear_is_positive(self, matcher, skewers):
        space = matcher.natural_space(skewers.create("linear"))
        assert space.sign_pattern == "positive"
        assert space.contiguous
        assert np.all(space.convergent[space.a_grid > 0])
        assert not np.any(space.convergent[space.a_grid < 0])
        assert len(space.boundaries) == 1
        assert abs(space.boundaries[0]) < 0.01

    def test_sine_is_empty(self, matcher, skewers):
        space = matcher.natural_space(skewers.create("sine"))
        assert space.empty
        assert space.sign_pattern == "empty"
        assert space.convergent.size == 50
        assert space.boundaries == []
        assert space.convergent_values.size == 0

    def test_custom_grid(self, matcher, skewers):
        space = matcher.natural_space(skewers.create("power", {"alpha": 3.0}), a_grid=[2.0, -1.0, 0.5])
        np.testing.assert_array_equal(space.a_grid, [-1.0, 0.5, 2.0])
        np.testing.assert_array_equal(space.convergent, [False, True, True])


class TestSolveA:
    def test_linear_unit_variance(self, matcher, skewers):
        a = matcher.solve_a(skewers.create("linear"), "unit_variance")
        np.testing.assert_allclose(a, SQRT_2PI, rtol=1e-8)

    def test_linear_median_rule(self, matcher, skewers):
        a = matcher.solve_a(skewers.create("linear"), StandardizationRule.MEDIAN_OF_SQUARES)
        np.testing.assert_allclose(a, SQRT_2PI * stats.norm.ppf(0.75) ** 2, rtol=1e-8)

    def test_sine_has_no_solution(self, matcher, skewers):
        assert matcher.solve_a(skewers.create("sine")) is None

    def test_needs_one_dimension(self, matcher, skewers):
        with pytest.raises(ExpMatcherError):
            matcher.solve_a(skewers.create("linear", dim=2))


class TestConstructDegenerate:
    def test_sine_has_no_degenerate_kernel(self, matcher, skewers):
        with pytest.raises(DegenerateCapabilityError, match="no degenerate kernel exists for this skewer"):
            matcher.construct_degenerate(skewers.create("sine"))

    def test_t_type_is_not_coordinatewise(self, matcher, skewers):
        with pytest.raises(DegenerateCapabilityError):
            matcher.construct_degenerate(skewers.create("t_type", {"df": 5.0}, dim=2))

    def test_linear_recovers_gaussian(self, matcher, skewers, kernels):
        kernel = matcher.construct_degenerate(skewers.create("linear"))
        assert isinstance(kernel, ExpOfNegPsiKernel)
        z = np.linspace(-4.0, 4.0, 41)[:, None]
        gaussian = kernels.create("gaussian")
        np.testing.assert_allclose(kernel.log_density(z), gaussian.log_density(z), atol=1e-7)

    def test_power_gives_singular_pair(self, matcher, skewers):
        skewer = skewers.create("power", {"alpha": 3.0})
        kernel = matcher.construct_degenerate(skewer)
        prediction = matcher.predict_singularity(kernel, skewer)
        assert prediction.nullity == 1
        assert prediction.residual < 1e-8

    def test_product_for_coordinatewise_skewer(self, matcher, skewers):
        kernel = matcher.construct_degenerate(skewers.create("power", {"alpha": 3.0}, dim=2))
        assert isinstance(kernel, ProductKernel)
        assert kernel.dim == 2
        assert kernel.rule == StandardizationRule.UNIT_VARIANCE


class TestPredictSingularity:
    def test_skew_normal(self, matcher, kernels, skewers):
        prediction = matcher.predict_singularity(kernels.create("gaussian"), skewers.create("linear"))
        assert prediction.verdict == "singular(1)"
        np.testing.assert_allclose(prediction.W[0, 0] / prediction.V[0, 0], SQRT_2PI, rtol=1e-6)
        assert prediction.V[0, 0] > 0
        np.testing.assert_allclose(prediction.a_values["()"], SQRT_2PI, rtol=1e-6)
        assert prediction.matched_kernel is not None
        assert prediction.log_density_gap < 1e-6

    def test_gaussian_power_is_nonsingular(self, matcher, kernels, skewers):
        prediction = matcher.predict_singularity(kernels.create("gaussian"), skewers.create("power", {"alpha": 3.0}))
        assert prediction.verdict == "nonsingular"
        assert prediction.nullity == 0
        assert prediction.matched_kernel is None

    def test_product_kernel(self, matcher, kernels, skewers):
        kernel = kernels.create("product", {"components": ["gaussian", "logistic"]}, dim=2)
        prediction = matcher.predict_singularity(kernel, skewers.create("linear", dim=2))
        assert prediction.nullity == 1
        v = prediction.V[:, 0] / np.linalg.norm(prediction.V[:, 0])
        np.testing.assert_allclose(v, [1.0, 0.0], atol=1e-6)


class TestVerifyProposition:
    def test_skew_normal_passes(self, matcher, fisher, kernels, skewers):
        kernel, skewer = kernels.create("gaussian"), skewers.create("linear")
        record = matcher.verify_proposition(kernel, skewer, diagnose(fisher, kernel, skewer))
        assert record.passed
        assert record.predicted_nullity == record.measured_nullity == 1
        assert record.max_residual < 1e-5
        np.testing.assert_allclose(record.a_values, [SQRT_2PI], rtol=1e-4)

    def test_product_conditionals(self, matcher, fisher, kernels, skewers):
        kernel = kernels.create("product", {"components": ["gaussian", "logistic"]}, dim=2)
        skewer = skewers.create("linear", dim=2)
        record = matcher.verify_proposition(kernel, skewer, diagnose(fisher, kernel, skewer), raise_on_failure=True)
        assert record.passed
        assert len(record.contexts) == 5
        assert record.max_residual < 1e-5
        assert record.a_spread < 1e-4

    def test_needs_reduced_report(self, matcher, fisher, kernels, skewers):
        kernel, skewer = kernels.create("gaussian"), skewers.create("linear")
        report = fisher.rank_diagnosis(fisher.information(SkewModel(kernel, skewer), InfoKind.FULL))
        with pytest.raises(ExpMatcherError):
            matcher.verify_proposition(kernel, skewer, report)

    def test_disagreement_raises(self, matcher, fisher, kernels, skewers):
        gaussian, linear = kernels.create("gaussian"), skewers.create("linear")
        logistic = kernels.create("logistic")
        # the diagnosis of a nonsingular pair attached to a singular one
        report = diagnose(fisher, logistic, linear)
        assert report.nullity == 0
        with pytest.raises(VerificationFailure) as excinfo:
            matcher.verify_proposition(gaussian, linear, report, raise_on_failure=True)
        assert not excinfo.value.record.passed

    @pytest.mark.slow
    @pytest.mark.parametrize("rule", ["unit_variance", "median_of_squares"])
    @pytest.mark.parametrize("skewer_family,skewer_params", [
        ("linear", None),
        ("power", {"alpha": 3.0}),
        ("sine", None),
    ])
    @pytest.mark.parametrize("kernel_family,kernel_params", [
        ("gaussian", None),
        ("logistic", None),
        ("laplace", None),
        ("student", {"df": 10.0}),
        ("exponential_power", {"alpha": 3.0}),
    ])
    def test_prediction_agrees_with_rank(self, matcher, fisher, kernels, skewers, rule,
                                         kernel_family, kernel_params, skewer_family, skewer_params):
        kernel = kernels.create(kernel_family, kernel_params, rule=rule)
        skewer = skewers.create(skewer_family, skewer_params)
        record = matcher.verify_proposition(kernel, skewer, diagnose(fisher, kernel, skewer))
        if not record.indeterminate:
            assert record.predicted_nullity == record.measured_nullity
            assert record.passed, record.messages
        expected = 1 if (kernel_family, skewer_family) == ("gaussian", "linear") else 0
        assert record.predicted_nullity == expected
