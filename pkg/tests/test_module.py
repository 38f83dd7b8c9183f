import json
import sys

import pytest
from dijay import Container

from hiberry.__main__ import main, run
from hiberry.config import FamilyConfig, MeshConfig, ModelConfig, RuntimeConfig
from hiberry import lattice
from hiberry.errors import ConfigError, GeometryError
from hiberry.module import HiberryModule
from hiberry.results import RunResult
from hiberry.usecases import (
    ComputeData,
    ComputeInvariantUsecase,
    InvariantService,
    SelftestData,
    SelftestUsecase,
)


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.setenv("HIBERRY_THREADS", "1")
    monkeypatch.delenv("HIBERRY_EMIT_CSV", raising=False)


@pytest.fixture
def spin_config_path(tmp_path):
    path = tmp_path / "spin.json"
    path.write_text(
        json.dumps({"model": {"name": "spin"}, "mesh": {"manifold": "S2", "resolution": [4]}})
    )
    return path


async def test_container_shares_the_service():
    async with Container.from_module(HiberryModule) as container:
        usecase = await container.resolve(ComputeInvariantUsecase)
        service = await container.resolve(InvariantService)
        runtime = await container.resolve(RuntimeConfig)
        assert usecase.service is service
        assert service.runtime is runtime
        assert runtime.threads == 1


async def test_compute_single_spin_berry(tmp_path):
    config = FamilyConfig(
        model=ModelConfig(name="spin"), mesh=MeshConfig(manifold="S2", resolution=(4,))
    )
    async with Container.from_module(HiberryModule) as container:
        usecase = await container.resolve(ComputeInvariantUsecase)
        result = await usecase.execute(data=ComputeData(config=config, out=tmp_path / "spin.json"))
    assert result.integer is not None and result.integer.value == -1
    assert RunResult.read(tmp_path / "spin.json").integer == result.integer
    assert not (tmp_path / "spin.csv").exists()


async def test_thouless_needs_a_charge():
    config = FamilyConfig(
        model=ModelConfig(name="spin"),
        mesh=MeshConfig(manifold="S2", resolution=(1,)),
        invariant="thouless-1d",
    )
    async with Container.from_module(HiberryModule) as container:
        usecase = await container.resolve(ComputeInvariantUsecase)
        with pytest.raises(ConfigError):
            await usecase.execute(data=ComputeData(config=config))


async def test_quick_selftest_passes():
    async with Container.from_module(HiberryModule) as container:
        selftest = await container.resolve(SelftestUsecase)
        outcomes = await selftest.execute(data=SelftestData(level="quick", seed=3))
    assert [o.name for o in outcomes] == ["dg-lie", "homotopy", "constant-family"]
    assert all(o.passed for o in outcomes)


async def test_cli_compute_and_compare(spin_config_path, tmp_path, capsys):
    out = tmp_path / "result.json"
    assert await main(["compute", "--config", str(spin_config_path), "--out", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["invariant"] == "berry"
    assert await main(["compare", str(out), str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["integers_agree"] is True
    assert report["period_differences"]["fundamental"] == 0.0


async def test_cli_selftest(capsys):
    assert await main(["selftest", "--seed", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert all(line.startswith("ok") for line in lines)


def test_run_reports_config_errors(monkeypatch, tmp_path, capsys):
    missing = tmp_path / "absent.json"
    monkeypatch.setattr(sys, "argv", ["hiberry", "compute", "--config", str(missing)])
    with pytest.raises(SystemExit) as exc:
        run()
    assert exc.value.code == 2
    assert capsys.readouterr().err.startswith("ConfigError: Config file not found")


def test_runtime_dense_cap_reaches_the_solver_without_global_state():
    config = FamilyConfig(
        model=ModelConfig(name="ring-pump"),
        mesh=MeshConfig(manifold="S1", resolution=(4,)),
        invariant="thouless-1d",
    )
    service = InvariantService(RuntimeConfig(threads=1, dense_site_cap=1))
    assert service.spectral(config).dense_site_cap == 1
    assert config.spectral.dense_site_cap == lattice.DENSE_SITE_CAP
    with pytest.raises(GeometryError, match="dense cap of 1"):
        service.run(config)
    assert lattice.DENSE_SITE_CAP == 12


async def test_execute_takes_keyword_data_only():
    async with Container.from_module(HiberryModule) as container:
        selftest = await container.resolve(SelftestUsecase)
        with pytest.raises(TypeError):
            await selftest.execute(SelftestData(level="quick", seed=3))
