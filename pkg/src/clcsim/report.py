"""Turn a finished run into artifacts: a canonical JSON report, a human
summary, CSV tables and rendered figures.

The JSON report is written with sorted keys so byte-stable reruns stay
byte-stable end to end.  Figures are rendered headless and written next
to the delimited outputs.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Dict, List, Optional

from . import analytics, checkers
from .trace import Trace


def build_report(trace: Trace) -> dict:
    """Summarize one simulation trace: check results, chain and
    checkpoint statistics, agreement latency and confirmation recency."""
    cfg = trace.config()
    view = checkers.RunView(trace)
    results = {name: fn(view) for name, fn in checkers.CHECKS.items()}

    must = list(cfg["checks"]["must_pass"])
    expected = list(cfg["checks"]["expect_violations"])
    failed = [n for n in must if results.get(n)]
    missing = [n for n in expected if not results.get(n)]

    blocks = [rec for rec in trace.by_kind("block") if rec[0] > 0.0]
    n_adv = sum(1 for rec in blocks if rec[4][4])
    n_withheld = sum(1 for rec in blocks if rec[4][5])

    arrivals = view.first_ckpt_times()
    gaps = [b[1] - a[1] for a, b in zip(arrivals, arrivals[1:])]

    stats = checkers.ba_iteration_stats(view)
    settled = [s for s in stats if s["iteration"] >= 2]
    stays = checkers.period_advancement(view)
    leaders = view.leader_events()
    byz_stays = [
        stay for node, it, p, entry, stay in stays
        if (it, p) in leaders and leaders[(it, p)][0] in view.byz
    ]

    recency = checkers.checkpoint_recency(view)
    rec_known = [r["recency"] for r in recency if r["recency"] is not None]

    honest_slots, adv_slots = analytics.trace_slot_counts(trace)
    honest_rate = (1.0 - cfg["beta"]) * cfg["lambda_per_delta"]
    slot_summary = analytics.summarize_slots(
        honest_slots, adv_slots, honest_rate, cfg["lambda_per_delta"])

    liveness = None
    if cfg["network"]["gst"] > 0.0:
        start = cfg["liveness"]["c_const"] * cfg["network"]["gst"] \
            + cfg["liveness"]["offset"]
        liveness = checkers.liveness_gaps(view, start)
        liveness = {
            "start": start,
            "arrivals": [t for _, t in liveness["arrivals"]],
            "gaps": liveness["gaps"],
        }

    report = {
        "scenario": cfg["name"],
        "seed": cfg["seed"],
        "kind": cfg["kind"],
        "checks": {
            name: {
                "violations": len(violations),
                "first": violations[0] if violations else None,
                "required_clean": name in must,
                "expected_dirty": name in expected,
            }
            for name, violations in sorted(results.items())
        },
        "verdict": {
            "ok": not failed,
            "must_pass_failed": failed,
            "expected_missing": missing,
        },
        "chain": {
            "blocks": len(blocks),
            "adversarial": n_adv,
            "withheld": n_withheld,
            "best_length": max(
                (view.tree.length(rec[4][0]) for rec in trace.by_kind("adopt")),
                default=1),
        },
        "checkpoints": {
            "count": len(arrivals),
            "first": arrivals[0][1] if arrivals else None,
            "last": arrivals[-1][1] if arrivals else None,
            "mean_gap": sum(gaps) / len(gaps) if gaps else None,
        },
        "ba": {
            "iterations_halted": len(stats),
            "mean_periods": (sum(s["periods"] for s in settled) / len(settled)
                             if settled else None),
            "max_full_span": max(
                (max(s["full_spans"].values()) for s in settled
                 if s["full_spans"]), default=None),
            "max_spread": max((s["spread"] for s in settled), default=None),
            "max_byz_led_stay": max(byz_stays, default=None),
        },
        "recency": {
            "count": len(recency),
            "unknown": len(recency) - len(rec_known),
            "max": max(rec_known, default=None),
        },
        "slots": slot_summary.as_dict(),
        "liveness": liveness,
    }
    return report


def render_text(report: dict) -> str:
    """A short human-readable summary of a report."""
    lines = [
        f"scenario: {report['scenario']} seed={report['seed']} ({report['kind']})",
        "verdict: " + ("ok" if report["verdict"]["ok"] else
                       "FAILED " + ",".join(report["verdict"]["must_pass_failed"])),
    ]
    if report["verdict"]["expected_missing"]:
        lines.append("expected violations missing: "
                     + ",".join(report["verdict"]["expected_missing"]))
    for name, entry in report["checks"].items():
        mark = "required" if entry["required_clean"] else (
            "expected" if entry["expected_dirty"] else "info")
        lines.append(f"  {name}: {entry['violations']} violations ({mark})")
    chain = report["chain"]
    lines.append(f"chain: {chain['blocks']} blocks "
                 f"({chain['adversarial']} adversarial, "
                 f"{chain['withheld']} withheld), best length {chain['best_length']}")
    ck = report["checkpoints"]
    lines.append(f"checkpoints: {ck['count']} (first {ck['first']}, "
                 f"mean gap {ck['mean_gap']})")
    ba = report["ba"]
    lines.append(f"agreement: {ba['iterations_halted']} iterations halted, "
                 f"mean periods {ba['mean_periods']}, "
                 f"max span {ba['max_full_span']}, max spread {ba['max_spread']}")
    return "\n".join(lines) + "\n"


def _write_csvs(outdir: str, trace: Trace, report: dict) -> None:
    view = checkers.RunView(trace)
    arrivals = view.first_ckpt_times()
    with open(os.path.join(outdir, "checkpoints.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "time", "block", "gap"])
        prev = None
        for iteration, t, block in arrivals:
            w.writerow([iteration, t, block, "" if prev is None else t - prev])
            prev = t

    stats = checkers.ba_iteration_stats(view)
    with open(os.path.join(outdir, "latency.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "leader1", "leader1_byz", "periods",
                    "spread", "max_full_span"])
        for s in stats:
            w.writerow([
                s["iteration"], s["leader1"], s["leader1_byz"], s["periods"],
                s["spread"],
                max(s["full_spans"].values()) if s["full_spans"] else "",
            ])

    recency = checkers.checkpoint_recency(view)
    with open(os.path.join(outdir, "recency.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "block", "appear", "recency"])
        for r in recency:
            w.writerow([r["iteration"], r["block"], r["appear"],
                        "" if r["recency"] is None else r["recency"]])

    honest, adv = analytics.trace_slot_counts(trace)
    solo = analytics.solo_indicators(honest)
    noise = analytics.noise_counts(honest, adv, solo)
    with open(os.path.join(outdir, "slots.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["slot", "honest", "adversarial", "solo", "noise"])
        for i in range(len(honest)):
            w.writerow([i + 1, honest[i], adv[i], solo[i], noise[i]])


def _render_figures(outdir: str, trace: Trace, report: dict) -> List[str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    view = checkers.RunView(trace)
    written: List[str] = []

    fig, ax = plt.subplots(figsize=(8, 4))
    for node, recs in sorted(view.by_node("adopt").items()):
        if node not in view.honest:
            continue
        ts = [r[0] for r in recs]
        ls = [r[4][1] for r in recs]
        ax.step(ts, ls, where="post", linewidth=0.5, alpha=0.4)
    arrivals = view.first_ckpt_times()
    if arrivals:
        ax.scatter([t for _, t, _ in arrivals],
                   [view.tree.length(b) for _, _, b in arrivals],
                   marker="x", color="red", zorder=3, label="checkpoints")
        ax.legend()
    ax.set_xlabel("time")
    ax.set_ylabel("held chain length")
    ax.set_title("chain growth")
    fig.tight_layout()
    path = os.path.join(outdir, "growth.png")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)

    gaps = [b[1] - a[1] for a, b in zip(arrivals, arrivals[1:])]
    if gaps:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.hist(gaps, bins=24, color="steelblue")
        ax.set_xlabel("gap between checkpoint arrivals")
        ax.set_ylabel("count")
        ax.set_title("checkpoint cadence")
        fig.tight_layout()
        path = os.path.join(outdir, "cadence.png")
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    stats = checkers.ba_iteration_stats(view)
    spans = [v for s in stats if s["iteration"] >= 2
             for v in s["full_spans"].values()]
    if spans:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.hist(spans, bins=24, color="darkseagreen")
        ax.set_xlabel("halt time minus first period entry")
        ax.set_ylabel("count")
        ax.set_title("agreement latency")
        fig.tight_layout()
        path = os.path.join(outdir, "latency.png")
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    honest, adv = analytics.trace_slot_counts(trace)
    if len(honest) >= 50:
        solo = analytics.solo_indicators(honest)
        window = max(10, len(solo) // 50)
        roll = [solo[max(0, i - window):i].mean()
                for i in range(window, len(solo) + 1)]
        fig, ax = plt.subplots(figsize=(8, 3.5))
        ax.plot(range(window, len(solo) + 1), roll, linewidth=0.8)
        ax.axhline(report["slots"]["expected_solo"], color="red",
                   linewidth=0.8, linestyle="--", label="expected")
        ax.set_xlabel("slot")
        ax.set_ylabel(f"solo rate ({window}-slot window)")
        ax.set_title("solo slot rate")
        ax.legend()
        fig.tight_layout()
        path = os.path.join(outdir, "slots.png")
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    return written


def render_mining_figures(outdir: str, payload: dict) -> List[str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written: List[str] = []
    fractions = payload["typicality"]["fractions"]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    taus = sorted(fractions, key=int)
    ax.bar(range(len(taus)), [fractions[t] for t in taus],
           tick_label=taus, color="steelblue")
    ax.axhline(0.95, color="red", linewidth=0.8, linestyle="--")
    ax.set_xlabel("minimum window (slots)")
    ax.set_ylabel("fraction of executions in band")
    ax.set_title("window typicality")
    fig.tight_layout()
    path = os.path.join(outdir, "typicality.png")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)
    return written


def write_outputs(outdir: str, trace: Trace, report: dict, *,
                  figures: bool = True, tables: bool = True,
                  with_trace: bool = True) -> None:
    """Write the full artifact set for one finished run."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "report.json"), "w") as f:
        json.dump(report, f, sort_keys=True, indent=1)
        f.write("\n")
    with open(os.path.join(outdir, "report.txt"), "w") as f:
        f.write(render_text(report))
    if with_trace:
        trace.write(os.path.join(outdir, "trace.ndjson"))
    if tables:
        _write_csvs(outdir, trace, report)
    if figures:
        _render_figures(outdir, trace, report)


def write_mining_outputs(outdir: str, cfg: dict, payload: dict, *,
                         figures: bool = True) -> None:
    """Artifacts for the sampled mining-statistics run kind."""
    os.makedirs(outdir, exist_ok=True)
    report = {
        "scenario": cfg["name"],
        "seed": cfg["seed"],
        "kind": cfg["kind"],
        "verdict": {"ok": True, "must_pass_failed": [], "expected_missing": []},
    }
    report.update(payload)
    with open(os.path.join(outdir, "report.json"), "w") as f:
        json.dump(report, f, sort_keys=True, indent=1)
        f.write("\n")
    with open(os.path.join(outdir, "typicality.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tau", "fraction_typical"])
        for tau, frac in sorted(payload["typicality"]["fractions"].items(),
                                key=lambda kv: int(kv[0])):
            w.writerow([tau, frac])
    if figures:
        render_mining_figures(outdir, payload)
