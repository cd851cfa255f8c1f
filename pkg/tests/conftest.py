import pytest

from mzbohm import runner
from mzbohm.scenario import ScenarioConfig, ScenarioKind, build_scenario

SEED = 42
N = 200


def _cfg(kind, **kw):
    base = dict(scenario=kind, seed=SEED, n=N, workers=1, oracle=True)
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture(scope="session")
def simple_cfg():
    return _cfg(ScenarioKind.SIMPLE)


@pytest.fixture(scope="session")
def ww_cfg():
    return _cfg(ScenarioKind.WW)


@pytest.fixture(scope="session")
def simple_scenario(simple_cfg):
    return build_scenario(simple_cfg)


@pytest.fixture(scope="session")
def ww_scenario(ww_cfg):
    return build_scenario(ww_cfg)


@pytest.fixture(scope="session")
def simple_run(simple_cfg):
    """Full simple-scenario run including the grid-oracle checks (slow, shared)."""
    return runner.run_scenario(simple_cfg)


@pytest.fixture(scope="session")
def ww_run(ww_cfg):
    """Full which-way run including the grid-oracle checks (slow, shared)."""
    return runner.run_scenario(ww_cfg)
