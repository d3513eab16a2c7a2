import json
from pathlib import Path

import numpy as np
import pytest

import skewinfo
from skewinfo.batch_runner import BatchRunner
from skewinfo.exp_matcher import ExpMatcher
from skewinfo.fisher_information import FisherInformation
from skewinfo.models import KernelRegistry, SkewerRegistry, Standardizer
from skewinfo.quadrature import Quadrature

SPEC_DIR = Path(skewinfo.__file__).parent / "specs"


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def quadrature():
    return Quadrature()


@pytest.fixture
def runner():
    return BatchRunner(max_workers=4)


@pytest.fixture
def standardizer(quadrature):
    return Standardizer(quadrature)


@pytest.fixture
def skewers():
    return SkewerRegistry()


@pytest.fixture
def kernels(standardizer, skewers):
    return KernelRegistry(standardizer, skewers)


@pytest.fixture
def fisher(quadrature, runner):
    return FisherInformation(quadrature, runner)


@pytest.fixture
def matcher(quadrature, runner, fisher, standardizer):
    return ExpMatcher(quadrature, runner, fisher, standardizer)


@pytest.fixture
def spec_dir():
    return SPEC_DIR


class GoldenValues:
    """
    Reference numbers frozen by the first run that produces them.

    A missing entry is recorded and written back to the JSON file; later
    runs compare against the recorded value.
    """

    def __init__(self, path: Path):
        self.path = path
        self.values = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}

    def check(self, key: str, observed: dict, atol: float) -> None:
        frozen = self.values.get(key)
        if frozen is None:
            self.values[key] = {name: float(value) for name, value in observed.items()}
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(json.dumps(self.values, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            return
        for name, value in observed.items():
            assert abs(value - frozen[name]) <= atol, f"{key}.{name}: {value} drifted from frozen {frozen[name]}"


@pytest.fixture(scope="session")
def golden():
    return GoldenValues(Path(__file__).parent / "golden" / "symmetry_experiment.json")
