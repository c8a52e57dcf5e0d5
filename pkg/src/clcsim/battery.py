"""Multi-seed batteries: run one scenario across a seed range and pool
the per-run statistics that the bounds in the scenario library are
judged on.  Nothing heavy is retained per seed; a battery result is a
plain dict of rates and pooled samples."""

from __future__ import annotations

import copy
import math
from collections import defaultdict
from typing import Dict, List, Optional, Sequence

from . import checkers
from .netsim import run_scenario


def liveness_required(cfg: dict, start: float) -> int:
    """The minimum number of checkpoint arrivals a live run must produce
    at and after ``start``."""
    window = cfg["horizon"] - start
    if window <= 0:
        return 0
    period = cfg["e"] + 20.0 * cfg["delta"]
    return max(0, int(math.floor(window / period)) - 1)


def run_battery(cfg: dict, n_seeds: int,
                base_seed: Optional[int] = None) -> dict:
    """Run ``n_seeds`` consecutive seeds of one scenario and pool stats."""
    base = cfg["seed"] if base_seed is None else base_seed
    start = cfg["liveness"]["c_const"] * cfg["network"]["gst"] \
        + cfg["liveness"]["offset"]

    per_seed: List[dict] = []
    witness: Dict[str, int] = {}
    pooled_gaps: List[float] = []
    pooled_periods: List[int] = []
    pooled_spans: List[float] = []
    pooled_spreads: List[float] = []
    pooled_byz_stays: List[float] = []
    pooled_recency: List[float] = []
    recency_unknown = 0
    leader_draws = [0, 0]  # [byz, total] at or after the heal time

    for i in range(n_seeds):
        run_cfg = copy.deepcopy(cfg)
        run_cfg["seed"] = base + i
        trace = run_scenario(run_cfg)
        view = checkers.RunView(trace)
        results = {name: fn(view) for name, fn in checkers.CHECKS.items()}
        for name, violations in results.items():
            if violations and name not in witness:
                witness[name] = run_cfg["seed"]

        stats = checkers.ba_iteration_stats(view)
        arrivals = view.first_ckpt_times()
        arrival_by_iter = {it: t for it, t, _ in arrivals}
        settled_iters = {it for it, t in arrival_by_iter.items() if t >= start}
        for s in stats:
            if s["iteration"] < 2:
                continue
            pooled_spreads.append(s["spread"])
            if s["leader1_byz"] is False and s["full_spans"]:
                pooled_spans.append(max(s["full_spans"].values()))
            if s["iteration"] in settled_iters:
                pooled_periods.append(s["periods"])

        leaders = view.leader_events()
        for (it, p), (leader, t) in leaders.items():
            if t >= view.heal:
                leader_draws[1] += 1
                if leader in view.byz:
                    leader_draws[0] += 1
        stays = checkers.period_advancement(view)
        for node, it, p, entry, stay in stays:
            led = leaders.get((it, p))
            if led is not None and led[0] in view.byz:
                pooled_byz_stays.append(stay)

        live = checkers.liveness_gaps(view, start)
        live_times = [t for _, t in live["arrivals"]]
        pooled_gaps.extend(live["gaps"])

        for entry in checkers.checkpoint_recency(view):
            if entry["appear"] < view.heal:
                continue
            if entry["recency"] is None:
                recency_unknown += 1
            else:
                pooled_recency.append(entry["recency"])

        advancement = checkers.flush_advancement(view)
        per_seed.append({
            "seed": run_cfg["seed"],
            "violations": {n: len(v) for n, v in results.items()},
            "checkpoints": len(arrivals),
            "live_count": len(live_times),
            "live_required": liveness_required(cfg, start),
            "min_flush_advancement": min(advancement.values())
            if advancement else 0,
        })

    rates = {
        name: sum(1 for s in per_seed if s["violations"][name]) / n_seeds
        for name in checkers.CHECKS
    }
    return {
        "scenario": cfg["name"],
        "seeds": n_seeds,
        "base_seed": base,
        "per_seed": per_seed,
        "rates": rates,
        "witness": witness,
        "liveness_start": start,
        "pooled": {
            "gaps": pooled_gaps,
            "periods": pooled_periods,
            "honest_leader_spans": pooled_spans,
            "spreads": pooled_spreads,
            "byz_led_stays": pooled_byz_stays,
            "recency": pooled_recency,
            "recency_unknown": recency_unknown,
            "leader_draws": tuple(leader_draws),
        },
    }


def percentile(samples: Sequence[float], q: float) -> float:
    """Nearest-rank percentile; q in [0, 1]."""
    if not samples:
        raise ValueError("no samples")
    ordered = sorted(samples)
    rank = max(1, math.ceil(q * len(ordered)))
    return ordered[rank - 1]


def summarize(battery: dict, cfg: dict) -> dict:
    """Judge one battery against the scenario's own requirement lists and
    the cadence bounds; returns a verdict dict for reports."""
    must = list(cfg["checks"]["must_pass"])
    expected = list(cfg["checks"]["expect_violations"])
    rates = battery["rates"]
    must_bad = {n: rates[n] for n in must if rates[n] > 0}
    expected_rates = {n: rates[n] for n in expected}

    pooled = battery["pooled"]
    cadence = None
    if cfg["network"]["gst"] > 0 and battery["liveness_start"] < cfg["horizon"]:
        gaps = pooled["gaps"]
        periods = pooled["periods"]
        p95 = percentile(periods, 0.95) if periods else 1
        lo = cfg["e"]
        hi = cfg["e"] + 10.0 * cfg["delta"] * p95
        bad_gaps = [g for g in gaps if g < lo - 1e-9 or g > hi + 1e-9]
        shortfall = [
            (s["seed"], s["live_count"], s["live_required"])
            for s in battery["per_seed"] if s["live_count"] < s["live_required"]
        ]
        cadence = {
            "p95_periods": p95,
            "gap_bounds": (lo, hi),
            "gaps": len(gaps),
            "bad_gaps": bad_gaps,
            "count_shortfall": shortfall,
            "ok": not bad_gaps and not shortfall,
        }

    return {
        "scenario": battery["scenario"],
        "seeds": battery["seeds"],
        "must_pass_ok": not must_bad,
        "must_pass_bad_rates": must_bad,
        "expected_rates": expected_rates,
        "cadence": cadence,
    }
