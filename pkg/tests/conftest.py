import copy

import pytest

from clcsim.battery import run_battery
from clcsim.cli import resolve_scenario
from clcsim.config import load_config, parse_config


def scenario_config(name: str) -> dict:
    return load_config(resolve_scenario(name))


def tiny_config(**overrides) -> dict:
    """A minimal valid config for unit-level runs; keyword args patch the
    top level, nested dicts are merged one level deep."""
    raw = {
        "name": "tiny",
        "seed": 1,
        "horizon": 60.0,
        "miners": 3,
        "checkpointers": 3,
        "t_byz": 1,
        "k": 2,
        "k_prime": 2,
        "kappa_sim": 1,
        "e": 24.0,
        "lambda_per_delta": 0.3,
    }
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(raw.get(key), dict):
            raw[key].update(val)
        else:
            raw[key] = val
    return parse_config(raw)


@pytest.fixture(scope="session")
def batteries():
    """Battery runner shared by the acceptance criteria; each scenario is
    run once per (name, seeds) and reused."""
    cache = {}

    def get(name: str, n_seeds: int):
        key = (name, n_seeds)
        if key not in cache:
            cfg = scenario_config(name)
            cache[key] = (cfg, run_battery(copy.deepcopy(cfg), n_seeds))
        return cache[key]

    return get
