import numpy as np
import pytest
from scipy import stats

from skewinfo.models import (
    ExpOfNegPsiKernel,
    GaussianKernel,
    LinearSkewer,
    ModelError,
    ModelInputError,
    OuterCdf,
    PowerSkewer,
    ProductKernel,
    SamplingCapabilityError,
    SineSkewer,
    StandardizationInfeasibleError,
    StandardizationRule,
    StudentKernel,
    as_points,
)

ALL_SKEWERS = [
    ("linear", {}),
    ("power", {"alpha": 3.0}),
    ("power", {"alpha": 1.5}),
    ("t_type", {"df": 4.0}),
    ("sine", {}),
    ("linear", {"outer": "logistic"}),
    ("sine", {"outer": "student", "outer_df": 3.0}),
]


class TestOuterCdf:
    def test_slopes(self):
        np.testing.assert_allclose(OuterCdf("normal").slope, 1.0 / np.sqrt(2.0 * np.pi))
        np.testing.assert_allclose(OuterCdf("logistic").slope, 0.25)
        np.testing.assert_allclose(OuterCdf("student", 3.0).slope, stats.t.pdf(0.0, 3.0))

    def test_student_needs_df(self):
        with pytest.raises(ModelInputError):
            OuterCdf("student")

    def test_unknown_name(self):
        with pytest.raises(ModelInputError):
            OuterCdf("cauchy")


class TestKernels:
    """Densities, scores and symmetry of the registered kernels."""

    @pytest.mark.parametrize("family,params", [
        ("gaussian", {}),
        ("student", {"df": 5.0}),
        ("laplace", {}),
        ("logistic", {}),
        ("exponential_power", {"alpha": 3.0}),
    ])
    def test_symmetry_and_odd_score(self, kernels, rng, family, params):
        kernel = kernels.create(family, params)
        z = 3.0 * rng.standard_normal((1000, 1))
        np.testing.assert_array_less(np.abs(kernel.log_density(z) - kernel.log_density(-z)), 1e-12)
        np.testing.assert_array_less(np.abs(kernel.score(z) + kernel.score(-z)), 1e-9)

    def test_gaussian_matches_scipy(self, kernels):
        kernel = kernels.create("gaussian")
        z = np.linspace(-3.0, 3.0, 13)
        np.testing.assert_allclose(kernel.density(z), stats.norm.pdf(z), rtol=1e-9)
        np.testing.assert_allclose(kernel.score(z)[:, 0], z, rtol=1e-9)

    def test_evaluate_single_point(self, kernels):
        evaluation = kernels.create("gaussian").evaluate(0.5)
        np.testing.assert_allclose(evaluation.density, stats.norm.pdf(0.5), rtol=1e-9)
        np.testing.assert_allclose(evaluation.score, [0.5], rtol=1e-9)

    def test_evaluate_requires_standardization(self):
        with pytest.raises(ModelInputError):
            GaussianKernel().evaluate(0.0)

    def test_evaluate_rejects_non_finite(self, kernels):
        with pytest.raises(ModelInputError):
            kernels.create("gaussian").evaluate(np.nan)

    def test_product_kernel_factorizes(self, kernels):
        kernel = kernels.create("product", {"components": ["gaussian", "logistic"]}, dim=2)
        logistic = kernels.create("logistic")
        z = np.array([[0.3, -1.2], [2.0, 0.5]])
        expected = stats.norm.logpdf(z[:, 0]) + logistic.log_density(z[:, [1]])
        np.testing.assert_allclose(kernel.log_density(z), expected, rtol=1e-9)
        assert kernel.family_tag == "product(gaussian,logistic)"

    def test_product_kernel_has_no_common_scale(self, kernels):
        kernel = kernels.build("product", {"components": ["gaussian", "gaussian"]}, dim=2)
        with pytest.raises(ModelError):
            kernel.with_scale(2.0)

    def test_exp_of_neg_psi_outside_natural_space(self):
        with pytest.raises(ModelError):
            ExpOfNegPsiKernel(a=1.0, skewer=SineSkewer())

    def test_exp_of_neg_psi_linear_is_gaussian(self):
        kernel = ExpOfNegPsiKernel(a=np.sqrt(2.0 * np.pi), skewer=LinearSkewer())
        z = np.linspace(-3.0, 3.0, 7)
        np.testing.assert_allclose(kernel.density(z), stats.norm.pdf(z), rtol=1e-9)

    def test_power_exp_kernel_samples(self):
        kernel = ExpOfNegPsiKernel(a=1.0, skewer=PowerSkewer(alpha=3.0))
        sampled = kernel.sample(np.random.default_rng(0), 10)
        assert sampled.shape == (10, 1)
        assert np.all(np.isfinite(sampled))

    def test_t_type_exp_kernel_has_no_sampler(self, skewers):
        kernel = ExpOfNegPsiKernel(a=1.0, skewer=skewers.create("t_type", {"df": 3.0}))
        with pytest.raises(SamplingCapabilityError):
            kernel.sample(np.random.default_rng(0), 5)


class TestStandardizer:
    """Scale calibration under both rules."""

    @pytest.mark.parametrize("family,params,expected", [
        ("gaussian", {}, 1.0),
        ("laplace", {}, 1.0 / np.sqrt(2.0)),
        ("logistic", {}, np.sqrt(3.0) / np.pi),
        ("student", {"df": 5.0}, np.sqrt(3.0 / 5.0)),
    ])
    def test_unit_variance_scales(self, kernels, family, params, expected):
        kernel = kernels.create(family, params, rule="unit_variance")
        np.testing.assert_allclose(kernel.scale, expected, rtol=1e-9)
        assert kernel.rule == StandardizationRule.UNIT_VARIANCE

    def test_median_rule_gaussian(self, kernels):
        kernel = kernels.create("gaussian", rule="median_of_squares")
        np.testing.assert_allclose(kernel.scale, 1.0 / stats.norm.ppf(0.75), rtol=1e-9)

    def test_median_rule_cauchy(self, kernels):
        kernel = kernels.create("student", {"df": 1.0}, rule="median_of_squares")
        np.testing.assert_allclose(kernel.scale, 1.0, rtol=1e-9)

    def test_cauchy_has_no_unit_variance(self, kernels):
        with pytest.raises(StandardizationInfeasibleError):
            kernels.create("student", {"df": 1.0}, rule="unit_variance")

    def test_idempotent(self, kernels, standardizer):
        kernel = kernels.create("logistic")
        again = standardizer.standardize(kernel, kernel.rule)
        np.testing.assert_allclose(again.scale, kernel.scale, rtol=1e-10)

    def test_product_standardizes_per_component(self, kernels, standardizer):
        kernel = kernels.create("product", {"components": ["gaussian", "laplace"]}, dim=2)
        np.testing.assert_allclose([c.scale for c in kernel.components], [1.0, 1.0 / np.sqrt(2.0)], rtol=1e-9)
        assert standardizer.constraint_residual(kernel, "unit_variance") < 1e-10

    def test_spherical_kernel_uses_marginal(self, kernels):
        kernel = kernels.create("gaussian", dim=2)
        np.testing.assert_allclose(kernel.scale, 1.0, rtol=1e-9)


class TestSkewers:
    """The reflection identity and the psi / Psi relations."""

    @pytest.mark.parametrize("family,params", ALL_SKEWERS)
    def test_reflection(self, skewers, rng, family, params):
        skewer = skewers.create(family, params)
        z = 3.0 * rng.standard_normal((1000, 1))
        for delta in rng.standard_normal(10) * 3.0:
            total = skewer.pi(z, [delta]) + skewer.pi(-z, [delta])
            np.testing.assert_array_less(np.abs(total - 1.0), 1e-12)
        np.testing.assert_allclose(skewer.pi(z, [0.0]), 0.5)

    @pytest.mark.parametrize("family,params", ALL_SKEWERS)
    def test_psi_is_delta_derivative(self, skewers, rng, family, params):
        skewer = skewers.create(family, params)
        z = rng.uniform(-3.0, 3.0, (200, 1))
        h = 1e-5
        fd = (skewer.pi(z, [h]) - skewer.pi(z, [-h])) / (2.0 * h)
        np.testing.assert_allclose(fd, skewer.psi(z)[:, 0], atol=1e-8)

    @pytest.mark.parametrize("family,params", ALL_SKEWERS)
    def test_primitive_gradient(self, skewers, rng, family, params):
        skewer = skewers.create(family, params)
        z = 2.0 * rng.standard_normal((200, 1))
        z = z[np.abs(z[:, 0]) > 1e-2]
        h = 1e-5
        fd = (skewer.psi_primitive(z + h) - skewer.psi_primitive(z - h)) / (2.0 * h)
        np.testing.assert_allclose(fd, skewer.psi(z)[:, 0], atol=1e-6)

    def test_power_psi_at_zero(self):
        np.testing.assert_allclose(PowerSkewer(alpha=1.5).psi(0.0), [[0.0]])

    def test_power_needs_alpha_above_one(self):
        with pytest.raises(ModelInputError):
            PowerSkewer(alpha=1.0)

    def test_sine_primitive_keeps_cosine_constant(self):
        np.testing.assert_allclose(SineSkewer().psi_primitive(0.0), [-1.0 / np.sqrt(2.0 * np.pi)])

    def test_evaluate_single_point(self):
        evaluation = LinearSkewer().evaluate(1.0, [2.0])
        np.testing.assert_allclose(evaluation.pi, stats.norm.cdf(2.0))
        np.testing.assert_allclose(evaluation.psi, [1.0 / np.sqrt(2.0 * np.pi)])

    def test_delta_shape_checked(self):
        with pytest.raises(ModelInputError):
            LinearSkewer(dim=2).pi(np.zeros((1, 2)), [1.0])

    def test_score_composed_uses_kernel_score(self, kernels, skewers):
        kernel = kernels.create("logistic")
        skewer = skewers.score_composed(kernel)
        z = np.array([[-1.0], [0.5], [2.0]])
        np.testing.assert_allclose(skewer.psi(z), kernel.score(z) / np.sqrt(2.0 * np.pi))
        np.testing.assert_allclose(skewer.psi_primitive(np.zeros((1, 1))), [0.0], atol=1e-15)

    def test_t_type_is_not_coordinatewise(self, skewers):
        skewer = skewers.create("t_type", {"df": 3.0}, dim=2)
        assert not skewer.product_structured
        with pytest.raises(ModelError):
            skewer.marginal()


class TestRegistries:
    def test_unknown_family(self, kernels, skewers):
        with pytest.raises(ModelInputError):
            kernels.create("cauchy")
        with pytest.raises(ModelInputError):
            skewers.create("cubic")

    def test_unknown_parameter(self, kernels):
        with pytest.raises(ModelInputError):
            kernels.create("gaussian", {"df": 3.0})

    def test_missing_parameter(self, skewers):
        with pytest.raises(ModelInputError):
            skewers.create("power")

    def test_one_dimensional_family(self, kernels):
        with pytest.raises(ModelInputError):
            kernels.create("laplace", dim=2)

    def test_describe_rebuilds(self, kernels, skewers):
        skewer = skewers.create("power", {"alpha": 3.0, "outer": "logistic"})
        kernel = kernels.build("product", {"components": [
            {"family": "student", "params": {"df": 4.0}},
            {"family": "exp_of_neg_psi", "params": {"a": 1.5, "skewer": {"family": "power", "params": {"alpha": 3.0}}}},
        ]}, dim=2)
        described = kernels.describe(kernel)
        rebuilt = kernels.build(described["family"], described["params"], dim=2)
        assert rebuilt.family_tag == kernel.family_tag
        assert skewers.describe(skewer) == {"family": "power", "params": {"outer": "logistic", "alpha": 3.0}}

    def test_as_points_shapes(self):
        assert as_points(1.0, 1).shape == (1, 1)
        assert as_points([1.0, 2.0, 3.0], 1).shape == (3, 1)
        assert as_points([1.0, 2.0], 2).shape == (1, 2)
        with pytest.raises(ModelInputError):
            as_points(np.zeros((2, 3)), 2)

    def test_student_kernel_tag(self):
        assert StudentKernel(df=1.0).family_tag == "student(1)"

    def test_product_needs_components(self):
        with pytest.raises(ModelInputError):
            ProductKernel(components=())
