"""Scenario configuration: one human-editable YAML file per scenario.

A config is canonicalized into a nested dict with every field present
(defaults filled, derived fields resolved), validated for cross-field
consistency, and carried verbatim in the trace header so replay sees
exactly what the run saw. parse -> dump -> parse is the identity on
canonical configs.
"""

from __future__ import annotations

import copy
import math
from typing import Any, Dict, List

import yaml

CONFIG_SCHEMA = "clcsim-scenario/1"


class ConfigError(ValueError):
    pass


DEFAULTS: Dict[str, Any] = {
    "schema": CONFIG_SCHEMA,
    "name": "unnamed",
    "kind": "simulation",  # simulation | mining-stats
    "seed": 0,
    "horizon": 5000.0,
    "delta": 1.0,
    "lambda_per_delta": 0.1,
    "beta": 0.0,
    "miners": 50,
    "checkpointers": 10,
    "t_byz": 3,
    "byz_checkpointers": 0,
    "byz_behavior": "silent",  # silent | equivocate | scripted
    "k": 12,
    "k_prime": 12,
    "kappa_sim": 16,
    "d_recency": None,  # default 8 * delta * ceil(sqrt(kappa_sim))
    "e": None,  # default 10 * d_recency
    "network": {
        "model": "M2",  # M2 (synchrony) | M1 (partial synchrony)
        "gst": 0.0,
        "pre_gst_policy": "maximal",  # maximal | uniform | two-halves
        # when > 0 and gst exceeds the horizon, delayed messages are force-
        # delivered at the horizon and the loop keeps running this much longer
        "flush_window": 0.0,
    },
    "participation": {
        "model": "U1",  # U1 (always on) | U2 (churn / fixed offline sets)
        "miner_floor": 1.0,
        "churn_on": 300.0,
        "churn_off": 150.0,
        "offline_checkpointers": [],
    },
    "adversary": {
        "strategy": "none",  # none | private-chain | tie-stress | grandpa-rollback
        "release_lead": 1,
        "attack_after": 0.0,
    },
    "variant": {
        "enforce_p2": True,
        "enforce_p3": True,
        "checkpoint_depth_override": None,
    },
    "liveness": {
        "c_const": 4.0,  # recovery-time multiplier on gst
        "offset": 700.0,  # calibrated start offset added to c_const * gst
        "fin_c": 0.0025,  # calibrated chain-growth rate floor for confirm-liveness
        "fin_cprime": 4.0,
    },
    "mining_stats": {
        "slots": 1000000,
        "typicality_seeds": 200,
        "typicality_slots": 1100,
        "epsilon": 0.2,
        "taus": [250, 500, 1000],
    },
    "checks": {
        "must_pass": [],
        "expect_violations": [],
    },
}

_SCALAR_TYPES = {
    "schema": str,
    "name": str,
    "kind": str,
    "seed": int,
    "horizon": (int, float),
    "delta": (int, float),
    "lambda_per_delta": (int, float),
    "beta": (int, float),
    "miners": int,
    "checkpointers": int,
    "t_byz": int,
    "byz_checkpointers": int,
    "byz_behavior": str,
    "k": int,
    "k_prime": int,
    "kappa_sim": int,
}


def parse_config(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Fill defaults, resolve derived fields, validate; returns canonical dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    cfg = _merge(copy.deepcopy(DEFAULTS), raw)
    if cfg["schema"] != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {cfg['schema']!r}")
    if cfg["d_recency"] is None:
        cfg["d_recency"] = 8.0 * cfg["delta"] * math.ceil(math.sqrt(cfg["kappa_sim"]))
    if cfg["e"] is None:
        cfg["e"] = 10.0 * cfg["d_recency"]
    _validate(cfg)
    return cfg


def load_config(path: str) -> Dict[str, Any]:
    with open(path) as f:
        raw = yaml.safe_load(f)
    return parse_config(raw or {})


def dump_config(cfg: Dict[str, Any]) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def apply_override(cfg: Dict[str, Any], dotted: str, value: str) -> Dict[str, Any]:
    """Apply a --set override like network.gst=500; value parsed as YAML."""
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"unknown config path {dotted!r}")
        node = node[key]
    leaf = keys[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown config path {dotted!r}")
    node[leaf] = yaml.safe_load(value)
    return parse_config(cfg)


def quorum(cfg: Dict[str, Any]) -> int:
    return 2 * cfg["t_byz"] + 1


def _merge(base: Any, override: Any) -> Any:
    if isinstance(base, dict):
        if not isinstance(override, dict):
            raise ConfigError(f"expected mapping, got {override!r}")
        out = dict(base)
        for key, val in override.items():
            if key not in base:
                raise ConfigError(f"unknown config key {key!r}")
            out[key] = _merge(base[key], val)
        return out
    return copy.deepcopy(override)


def _validate(cfg: Dict[str, Any]) -> None:
    errs: List[str] = []

    def bad(msg: str) -> None:
        errs.append(msg)

    for key, typ in _SCALAR_TYPES.items():
        if not isinstance(cfg[key], typ) or isinstance(cfg[key], bool):
            bad(f"{key} must be {typ}")
    if cfg["kind"] not in ("simulation", "mining-stats"):
        bad("kind must be simulation or mining-stats")
    if not errs:
        if cfg["horizon"] <= 0:
            bad("horizon must be positive")
        if cfg["delta"] <= 0:
            bad("delta must be positive")
        if cfg["lambda_per_delta"] <= 0:
            bad("lambda_per_delta must be positive")
        if not 0 <= cfg["beta"] < 1:
            bad("beta must be in [0, 1)")
        if cfg["miners"] < 1:
            bad("need at least one miner")
        if cfg["checkpointers"] < 1:
            bad("need at least one checkpointer")
        if cfg["t_byz"] < 0 or cfg["checkpointers"] < 2 * cfg["t_byz"] + 1:
            bad("checkpointers must cover a quorum: at least 2*t_byz + 1")
        if not 0 <= cfg["byz_checkpointers"] <= cfg["t_byz"]:
            bad("byz_checkpointers must be in [0, t_byz]")
        if cfg["byz_behavior"] not in ("silent", "equivocate", "scripted"):
            bad("byz_behavior must be silent, equivocate or scripted")
        if cfg["k"] < 1 or cfg["k_prime"] < 0:
            bad("k must be >= 1 and k_prime >= 0")
        if cfg["e"] <= 0 or cfg["d_recency"] <= 0:
            bad("e and d_recency must be positive")

        net = cfg["network"]
        if net["model"] not in ("M1", "M2"):
            bad("network.model must be M1 or M2")
        if net["model"] == "M1" and net["gst"] <= 0:
            bad("M1 requires a positive network.gst")
        if net["model"] == "M2" and net["gst"] != 0.0:
            bad("M2 must have network.gst = 0")
        if net["pre_gst_policy"] not in ("maximal", "uniform", "two-halves"):
            bad("network.pre_gst_policy must be maximal, uniform or two-halves")
        if not isinstance(net["flush_window"], (int, float)) or net["flush_window"] < 0:
            bad("network.flush_window must be >= 0")

        part = cfg["participation"]
        if part["model"] not in ("U1", "U2"):
            bad("participation.model must be U1 or U2")
        if not 0 < part["miner_floor"] <= 1:
            bad("participation.miner_floor must be in (0, 1]")
        if part["churn_on"] <= 0 or part["churn_off"] <= 0:
            bad("churn means must be positive")
        offline = part["offline_checkpointers"]
        if not isinstance(offline, list) or any(
            not isinstance(i, int) or not 0 <= i < cfg["checkpointers"] for i in offline
        ):
            bad("participation.offline_checkpointers must list checkpointer indices")
        if part["model"] == "U1" and (part["miner_floor"] != 1.0 or offline):
            bad("U1 means full participation; use U2 for churn or offline sets")

        adv = cfg["adversary"]
        if adv["strategy"] not in ("none", "private-chain", "tie-stress", "grandpa-rollback"):
            bad(f"unknown adversary.strategy {adv['strategy']!r}")
        if adv["release_lead"] < 1:
            bad("adversary.release_lead must be >= 1")
        if adv["strategy"] == "grandpa-rollback":
            if cfg["variant"]["checkpoint_depth_override"] != 0:
                bad("grandpa-rollback requires variant.checkpoint_depth_override = 0")
            if cfg["byz_checkpointers"] not in (0, cfg["t_byz"]):
                bad("grandpa-rollback drives t_byz scripted checkpointers (or none)")
            if cfg["byz_checkpointers"] > 0 and cfg["byz_behavior"] != "scripted":
                bad("grandpa-rollback requires byz_behavior = scripted")

        var = cfg["variant"]
        dep = var["checkpoint_depth_override"]
        if dep is not None and (not isinstance(dep, int) or dep < 0):
            bad("variant.checkpoint_depth_override must be null or a non-negative int")

        if cfg["byz_checkpointers"] > 0 and cfg["byz_behavior"] == "scripted" and \
                adv["strategy"] != "grandpa-rollback":
            bad("scripted checkpointers are only driven by grandpa-rollback")

        ms = cfg["mining_stats"]
        if ms["slots"] < 1 or ms["typicality_slots"] < 2 or ms["typicality_seeds"] < 1:
            bad("mining_stats sizes must be positive")
        if not 0 < ms["epsilon"] < 1:
            bad("mining_stats.epsilon must be in (0, 1)")
        if not all(isinstance(t, int) and t > 0 for t in ms["taus"]):
            bad("mining_stats.taus must be positive ints")

    if errs:
        raise ConfigError("; ".join(errs))
