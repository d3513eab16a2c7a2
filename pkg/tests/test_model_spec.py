import numpy as np
import pytest

from skewinfo.models import ExpOfNegPsiKernel, ProductKernel, StandardizationRule
from skewinfo.model_spec import ModelSpecError, ModelSpecParser, ModelSpecWriter

BUNDLED = [
    "skew_normal.toml",
    "sine_skew_normal.toml",
    "cauchy_linear.toml",
    "ep3_power3.toml",
    "gauss_logistic_linear.toml",
    "skew_t.toml",
]


@pytest.fixture
def parser():
    return ModelSpecParser()


@pytest.fixture
def writer(kernels):
    return ModelSpecWriter(kernels)


class TestParser:
    @pytest.mark.parametrize("name", BUNDLED)
    def test_bundled_specs_parse(self, parser, spec_dir, name):
        spec = parser.parse_file(spec_dir / name)
        assert spec.kernel.dim == spec.skewer.dim == spec.dim
        assert spec.theta.at_symmetry
        assert spec.source.endswith(name)

    def test_skew_t_spec(self, parser, spec_dir):
        spec = parser.parse_file(spec_dir / "skew_t.toml")
        assert spec.kernel_params == {"df": 5.0}
        assert spec.skewer.outer.name == "student"
        assert spec.skewer.outer.df == 6.0
        assert spec.standardization == StandardizationRule.UNIT_VARIANCE

    def test_product_spec(self, parser, spec_dir):
        spec = parser.parse_file(spec_dir / "gauss_logistic_linear.toml")
        assert isinstance(spec.kernel, ProductKernel)
        assert spec.quadrature_settings == {"tensor_level": 5}
        assert spec.quadrature().tensor_level == 5

    def test_defaults(self, parser):
        spec = parser.parse('[kernel]\nfamily = "laplace"\n\n[skewer]\nfamily = "linear"\n')
        assert spec.dim == 1
        assert spec.standardization == StandardizationRule.UNIT_VARIANCE
        assert spec.quadrature_settings == {}
        np.testing.assert_array_equal(spec.theta.delta, [0.0])

    def test_unknown_key_reports_line(self, parser):
        text = 'dim = 1\n[kernel]\nfamily = "gaussian"\nshape = 2.0\n[skewer]\nfamily = "linear"\n'
        with pytest.raises(ModelSpecError, match="Unknown key 'shape'") as excinfo:
            parser.parse(text, source="bad.toml")
        assert excinfo.value.line == 4
        assert str(excinfo.value).startswith("bad.toml:4: ")

    def test_unknown_top_level_key(self, parser):
        text = '[kernel]\nfamily = "gaussian"\n[skewer]\nfamily = "linear"\n[extras]\nx = 1\n'
        with pytest.raises(ModelSpecError) as excinfo:
            parser.parse(text)
        assert excinfo.value.line == 5

    def test_syntax_error_reports_line(self, parser):
        with pytest.raises(ModelSpecError, match="Invalid TOML") as excinfo:
            parser.parse("dim = 1\n[kernel\n")
        assert excinfo.value.line == 2

    def test_unknown_family(self, parser):
        text = '[kernel]\nfamily = "weibull"\n[skewer]\nfamily = "linear"\n'
        with pytest.raises(ModelSpecError, match="weibull") as excinfo:
            parser.parse(text)
        assert excinfo.value.line == 2

    def test_missing_skewer(self, parser):
        with pytest.raises(ModelSpecError, match=r"Missing required table \[skewer\]") as excinfo:
            parser.parse('[kernel]\nfamily = "gaussian"\n')
        assert excinfo.value.line is None

    def test_unknown_rule(self, parser):
        text = '[kernel]\nfamily = "gaussian"\nstandardization = "iqr"\n[skewer]\nfamily = "linear"\n'
        with pytest.raises(ModelSpecError, match="iqr") as excinfo:
            parser.parse(text)
        assert excinfo.value.line == 3

    def test_bad_quadrature_setting(self, parser):
        text = '[kernel]\nfamily = "gaussian"\n[skewer]\nfamily = "linear"\n[quadrature]\ntol = -1.0\n'
        with pytest.raises(ModelSpecError) as excinfo:
            parser.parse(text)
        assert excinfo.value.line == 6

    def test_bad_dim(self, parser):
        with pytest.raises(ModelSpecError, match="dim"):
            parser.parse('dim = 0\n[kernel]\nfamily = "gaussian"\n[skewer]\nfamily = "linear"\n')

    def test_cauchy_under_unit_variance_is_rejected(self, parser):
        text = '[kernel]\nfamily = "student"\n[kernel.params]\ndf = 1.0\n[skewer]\nfamily = "linear"\n'
        with pytest.raises(ModelSpecError, match=r"Invalid \[kernel\]"):
            parser.parse(text)

    def test_bad_theta(self, parser):
        text = ('[kernel]\nfamily = "gaussian"\n[skewer]\nfamily = "linear"\n'
                '[theta]\nsigma_half = [[-1.0]]\n')
        with pytest.raises(ModelSpecError, match=r"Invalid \[theta\]") as excinfo:
            parser.parse(text)
        assert excinfo.value.line == 6

    def test_missing_file(self, parser, tmp_path):
        with pytest.raises(ModelSpecError, match="Cannot read"):
            parser.parse_file(tmp_path / "absent.toml")


class TestWriter:
    def test_round_trip(self, parser, writer, spec_dir, tmp_path):
        spec = parser.parse_file(spec_dir / "skew_t.toml")
        path = writer.write(writer.document(spec.kernel, spec.skewer, spec.theta), tmp_path / "out.toml")
        again = parser.parse_file(path)
        assert again.to_document() == spec.to_document()

    def test_product_round_trip(self, parser, writer, spec_dir):
        spec = parser.parse_file(spec_dir / "gauss_logistic_linear.toml")
        text = writer.dumps(writer.document(spec.kernel, spec.skewer, quadrature_settings=spec.quadrature().settings()))
        again = parser.parse(text)
        assert again.kernel.family_tag == spec.kernel.family_tag
        assert again.quadrature_settings["tensor_level"] == 5
        assert "probe_radius_floor" not in again.quadrature_settings

    def test_matched_kernel_round_trip(self, parser, writer, matcher, skewers):
        skewer = skewers.create("power", {"alpha": 3.0})
        kernel = matcher.construct_degenerate(skewer)
        again = parser.parse(writer.dumps(writer.document(kernel, skewer)))
        assert isinstance(again.kernel, ExpOfNegPsiKernel)
        assert again.kernel.a == kernel.a
        z = np.linspace(-3.0, 3.0, 13)[:, None]
        np.testing.assert_allclose(again.kernel.log_density(z), kernel.log_density(z), atol=1e-9)

    def test_unstandardized_kernel(self, writer, kernels, skewers):
        with pytest.raises(ModelSpecError, match="not standardized"):
            writer.document(kernels.build("gaussian"), skewers.create("linear"))
