"""The acceptance gate: eleven graded claims about the bundled scenario
library, one test and one printed verdict line per claim.

Seed counts and tolerances are pinned on purpose: loosening any of them
changes what the package promises, so it must never happen silently.
Batteries are shared through the session-scoped ``batteries`` fixture;
each (scenario, seeds) pair is simulated once for the whole gate."""

import copy

from clcsim import checkers
from clcsim.analytics import mining_stats_report
from clcsim.battery import summarize
from clcsim.cli import scenario_names
from clcsim.netsim import run_scenario

from conftest import scenario_config

SEEDS = 100

ALL_CONFIGS = {name: scenario_config(name) for name in scenario_names()}
SIM_SCENARIOS = sorted(
    name for name, cfg in ALL_CONFIGS.items() if cfg["kind"] == "simulation"
)

CORE_SAFETY = ("output-agreement", "checkpoint-chain", "fin-safety")


def _verdict(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num:02d} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    assert ok, line


def _default_variant(cfg: dict) -> bool:
    v = cfg["variant"]
    return (v["enforce_p2"] and v["enforce_p3"]
            and v["checkpoint_depth_override"] is None
            and cfg["k_prime"] == cfg["k"])


def _twin_bytes(cfg: dict):
    first = run_scenario(copy.deepcopy(cfg))
    second = run_scenario(copy.deepcopy(cfg))
    return first, first.to_bytes() == second.to_bytes()


def test_criterion_01_core_safety_sweep(batteries):
    bad = []
    for name in SIM_SCENARIOS:
        _, bat = batteries(name, SEEDS)
        for check in CORE_SAFETY:
            if bat["rates"][check] > 0:
                bad.append(f"{name}:{check}={bat['rates'][check]:.2f}")
    _verdict(
        1, not bad,
        f"agreement, checkpoint-chain and finalized-prefix safety clean over "
        f"{len(SIM_SCENARIOS)} scenarios x {SEEDS} seeds"
        + (f"; dirty: {bad}" if bad else ""))


def test_criterion_02_deep_reorg_freedom_under_churn_and_ties(batteries):
    cfg, bat = batteries("synchronous-tie-stress", SEEDS)
    assert cfg["beta"] == 0.45
    assert cfg["k"] == 12 and cfg["k_prime"] == 12
    assert cfg["network"]["gst"] == 0.0
    assert cfg["participation"]["model"] == "U2"
    assert cfg["participation"]["miner_floor"] == 0.25
    cp, ada = bat["rates"]["common-prefix"], bat["rates"]["ada-safety"]
    _verdict(
        2, cp == 0.0 and ada == 0.0,
        f"tie-stress at 45% power, 25% miner floor: common-prefix rate {cp:.2f}, "
        f"deep-confirmation rate {ada:.2f} over {SEEDS} seeds (need 0, 0)")


def test_criterion_03_shallow_confirmations_revert_with_replayable_witnesses(batteries):
    cfg, bat = batteries("partition-private-attack", SEEDS)
    assert cfg["k_prime"] == 4
    violating = [s for s in bat["per_seed"] if s["violations"]["ada-safety"]]
    frac = len(violating) / bat["seeds"]
    for entry in violating:
        run_cfg = copy.deepcopy(cfg)
        run_cfg["seed"] = entry["seed"]
        trace, identical = _twin_bytes(run_cfg)
        assert identical, f"seed {entry['seed']}: rerun diverged"
        found = len(checkers.check_ada_safety(checkers.RunView(trace)))
        assert found == entry["violations"]["ada-safety"], \
            f"seed {entry['seed']}: witness count changed on replay"
    _verdict(
        3, frac >= 0.5,
        f"depth-4 confirmations reverted in {frac:.0%} of {SEEDS} seeds "
        f"(need >= 50%); all {len(violating)} witnesses replayed byte-identically")


def test_criterion_04_finality_nested_inside_deep_confirmation(batteries):
    expected = {"synchronous-baseline", "synchronous-tie-stress", "ba-latency",
                "partition-maximal", "deadlock-flush", "micro-random"}
    covered = {n for n in SIM_SCENARIOS if _default_variant(ALL_CONFIGS[n])}
    assert covered == expected, covered
    bad = []
    for name in sorted(covered):
        _, bat = batteries(name, SEEDS)
        if bat["rates"]["nesting"] > 0:
            bad.append(f"{name}={bat['rates']['nesting']:.2f}")
    _verdict(
        4, not bad,
        f"finalized prefix nested in deep-confirmed prefix across "
        f"{len(covered)} default-rule scenarios x {SEEDS} seeds"
        + (f"; dirty: {bad}" if bad else ""))


def test_criterion_05_checkpoint_cadence_after_healing(batteries):
    cfg, bat = batteries("partition-maximal", SEEDS)
    assert cfg["liveness"]["c_const"] == 4.0
    assert cfg["liveness"]["offset"] == 700.0
    assert 0 < bat["liveness_start"] < cfg["horizon"]
    cadence = summarize(bat, cfg)["cadence"]
    lo, hi = cadence["gap_bounds"]
    assert lo == cfg["e"]
    assert hi == cfg["e"] + 10.0 * cfg["delta"] * cadence["p95_periods"]
    _verdict(
        5, cadence["ok"],
        f"post-heal cadence: {cadence['gaps']} gaps all within "
        f"[{lo:.0f}, {hi:.0f}] (p95 periods {cadence['p95_periods']}), "
        f"{len(cadence['bad_gaps'])} out of band, "
        f"{len(cadence['count_shortfall'])} seeds under the arrival floor")


def test_criterion_06_agreement_latency_bounds(batteries):
    cfg, bat = batteries("ba-latency", SEEDS)
    assert cfg["network"]["gst"] == 0.0
    assert cfg["participation"]["model"] == "U1"
    assert cfg["byz_checkpointers"] == 3 and cfg["byz_behavior"] == "silent"
    d = cfg["delta"]
    pool = bat["pooled"]
    assert pool["honest_leader_spans"] and pool["byz_led_stays"] and pool["periods"]
    span_max = max(pool["honest_leader_spans"])
    stay_max = max(pool["byz_led_stays"])
    mean_periods = sum(pool["periods"]) / len(pool["periods"])
    spread_max = max(pool["spreads"])
    ok = (span_max <= 6 * d and stay_max <= 8 * d
          and mean_periods <= 1.7 and spread_max <= d)
    _verdict(
        6, ok,
        f"honest-led iterations halt in <= {span_max:.1f}D (bound 6D), "
        f"silent-led periods advance in <= {stay_max:.1f}D (bound 8D), "
        f"mean periods {mean_periods:.2f} (bound 1.7), "
        f"halt spread <= {spread_max:.2f}D (bound 1D)")


def test_criterion_07_checkpoint_recency_tail(batteries):
    cfg, bat = batteries("partition-maximal", SEEDS)
    pool = bat["pooled"]
    byz_led, total = pool["leader_draws"]
    assert total > 0
    beta_leader = byz_led / total
    known = pool["recency"]
    unknown = pool["recency_unknown"]
    n = len(known) + unknown
    assert n >= 500
    d = cfg["delta"]
    overs = []
    ok = True
    for m in range(1, 6):
        exceed = (sum(1 for r in known if r > 8 * m * d) + unknown) / n
        bound = 1.5 * beta_leader ** m
        overs.append(f"m={m}: {exceed:.4f}<={bound:.4f}")
        ok = ok and exceed <= bound
    _verdict(
        7, ok,
        f"recency tail over {n} post-heal checkpoints "
        f"(faulty-leader rate {beta_leader:.2f}): " + "; ".join(overs))


def test_criterion_08_no_deadlock_through_forced_flush(batteries):
    cfg, bat = batteries("deadlock-flush", SEEDS)
    assert cfg["network"]["flush_window"] > 0
    assert cfg["network"]["gst"] > cfg["horizon"]
    stuck = [s["seed"] for s in bat["per_seed"]
             if s["min_flush_advancement"] < 1]
    progress_rate = bat["rates"]["progress"]
    _verdict(
        8, not stuck and progress_rate == 0.0,
        f"all checkpointers advance after the flush in {SEEDS}/{SEEDS} seeds "
        f"(stuck: {stuck}), progress violations {progress_rate:.2f}")


def test_criterion_09_mining_slot_statistics():
    cfg = scenario_config("mining-statistics")
    assert cfg["mining_stats"]["slots"] == 1000000
    assert cfg["mining_stats"]["epsilon"] == 0.2
    assert cfg["mining_stats"]["typicality_seeds"] == 200
    assert cfg["mining_stats"]["taus"] == [250, 500, 1000]
    rep = mining_stats_report(cfg)
    summary = rep["summary"]
    fr = rep["typicality"]["fractions"]
    ok_solo = summary["solo_rel_err"] <= 0.02
    ok_total = summary["total_rel_err"] <= 0.01
    ok_mono = fr["250"] <= fr["500"] <= fr["1000"]
    ok_typ = fr["500"] >= 0.95
    _verdict(
        9, ok_solo and ok_total and ok_mono and ok_typ,
        f"solo-slot mean off by {summary['solo_rel_err']:.4f} (bound 0.02), "
        f"total arrival mean off by {summary['total_rel_err']:.4f} (bound 0.01), "
        f"typical fractions 250/500/1000 = {fr['250']:.3f}/{fr['500']:.3f}/"
        f"{fr['1000']:.3f} (monotone: {ok_mono}; need >= 0.95 at 500: {ok_typ})")


def test_criterion_10_shallow_mark_rollback_and_its_guard(batteries):
    cfg_open, bat_open = batteries("grandpa-rollback", SEEDS)
    cfg_guard, bat_guard = batteries("grandpa-rollback-guarded", SEEDS)
    assert cfg_open["variant"]["checkpoint_depth_override"] == 0
    assert cfg_guard["variant"]["checkpoint_depth_override"] == 0
    assert cfg_open["variant"]["enforce_p3"] is False
    assert cfg_guard["variant"]["enforce_p3"] is True
    reverted = sum(
        1 for s in bat_open["per_seed"]
        if s["violations"]["ada-safety"] or s["violations"]["common-prefix"])
    frac = reverted / bat_open["seeds"]
    dirty_guarded = {n: r for n, r in bat_guard["rates"].items() if r > 0}
    _verdict(
        10, frac >= 0.5 and not dirty_guarded,
        f"shallow-mark rollback reverts deep confirmations in {frac:.0%} of "
        f"{SEEDS} seeds (need >= 50%); guarded arm violation rates: "
        f"{dirty_guarded or 'all zero'}")


def test_criterion_11_checker_oracles_and_byte_stable_reruns():
    micro = ALL_CONFIGS["micro-random"]
    dirty = 0
    for offset in range(50):
        run_cfg = copy.deepcopy(micro)
        run_cfg["seed"] = micro["seed"] + offset
        trace, identical = _twin_bytes(run_cfg)
        assert identical, f"micro seed {run_cfg['seed']}: rerun diverged"
        assert len(trace.records) <= 200, \
            f"micro seed {run_cfg['seed']}: {len(trace.records)} records"
        view = checkers.RunView(trace)
        cp = {(v["time"], v["node"])
              for v in checkers.check_common_prefix(view)}
        cp_ref = {(v["time"], v["node"])
                  for v in checkers.check_common_prefix_brute(view)}
        cq = {(v["time"], v["node"])
              for v in checkers.check_chain_quality(view)}
        cq_ref = {(v["time"], v["node"])
                  for v in checkers.check_chain_quality_brute(view)}
        assert cp == cp_ref, f"micro seed {run_cfg['seed']}: prefix flags differ"
        assert cq == cq_ref, f"micro seed {run_cfg['seed']}: quality flags differ"
        dirty += bool(cp or cq)
    twins = 0
    for name in SIM_SCENARIOS:
        for bump in (0, 57):
            run_cfg = copy.deepcopy(ALL_CONFIGS[name])
            run_cfg["seed"] += bump
            _, identical = _twin_bytes(run_cfg)
            assert identical, f"{name} seed {run_cfg['seed']}: rerun diverged"
            twins += 1
    _verdict(
        11, dirty > 0,
        f"50 micro traces match the reference checkers exactly "
        f"({dirty} with genuine violations); {twins} scenario/seed twin reruns "
        f"byte-identical")
