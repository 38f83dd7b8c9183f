import json
import math

import pytest

from hiberry.config import FamilyConfig, ModelConfig
from hiberry.errors import ConfigError
from hiberry.mesh import DiscreteForm, circle
from hiberry.results import RunResult, compare, round_estimate


@pytest.fixture
def config() -> FamilyConfig:
    return FamilyConfig(model=ModelConfig(name="ring-pump"), invariant="thouless-1d")


@pytest.fixture
def result(config) -> RunResult:
    mesh = circle(4)
    form = DiscreteForm(mesh, 1, {e: 0.25j for e in mesh.cells(1)})
    return RunResult.build(
        config,
        periods={"fundamental": 0.98j},
        estimate=0.98,
        residuals={"g(1,1)": 1e-12, "g(2,1)": 2e-12},
        form=form,
        seconds=1.5,
    )


def test_round_estimate():
    near = round_estimate(-0.97)
    assert near.value == -1
    assert near.distance == pytest.approx(0.03)
    far = round_estimate(0.5)
    assert far.value is None
    assert far.estimate == 0.5


def test_build_records_periods_and_cells(result, config):
    assert result.integer is not None and result.integer.value == 1
    assert result.periods["fundamental"] == (0.0, 0.98)
    assert [c.cell for c in result.form] == [(0, 1), (0, 3), (1, 2), (2, 3)]
    assert result.provenance.config_digest == config.digest()
    assert "numpy" in result.provenance.versions


def test_json_without_timing_is_deterministic(result, config):
    again = RunResult.build(
        config,
        periods={"fundamental": 0.98j},
        estimate=0.98,
        residuals={"g(1,1)": 1e-12, "g(2,1)": 2e-12},
        form=DiscreteForm(circle(4), 1, {e: 0.25j for e in circle(4).cells(1)}),
        seconds=7.0,
    )
    assert result.to_json(timing=False) == again.to_json(timing=False)
    assert "seconds" not in json.loads(result.to_json(timing=False))["provenance"]


def test_write_and_read(result, tmp_path):
    path = result.write(tmp_path / "out" / "run.json", csv_data=True)
    assert RunResult.read(path) == result
    rows = (tmp_path / "out" / "run.csv").read_text().splitlines()
    assert rows[0] == "cell,real,imag"
    assert len(rows) == 5
    with pytest.raises(ConfigError):
        RunResult.read(tmp_path / "missing.json")


def test_compare_runs(result, config):
    other = result.model_copy(
        update={"periods": {"fundamental": (0.0, 1.02)}, "residuals": {"g(1,1)": 2e-12}}
    )
    report = compare(result, other)
    assert report.period_differences["fundamental"] == pytest.approx(0.04)
    assert report.integers_agree is True
    assert report.residual_ratios == {"g(1,1)": pytest.approx(0.5)}


def test_compare_zero_residuals(result):
    a = result.model_copy(update={"residuals": {"g(1,1)": 1e-9}})
    b = result.model_copy(update={"residuals": {"g(1,1)": 0.0}})
    assert compare(a, b).residual_ratios["g(1,1)"] == math.inf
    assert compare(b, b).residual_ratios["g(1,1)"] == 0.0


def test_compare_rejects_different_invariants(result):
    other = result.model_copy(update={"invariant": "berry"})
    with pytest.raises(ConfigError):
        compare(result, other)
