"""Slot statistics: frozen point values, hand-built indicator cases, and
window graders checked against quadratic reference implementations."""

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clcsim import analytics
from clcsim.config import apply_override, parse_config
from clcsim.trace import Trace

from conftest import scenario_config


def test_stable_seed_is_frozen_and_label_sensitive():
    assert analytics.stable_seed("x") == 5395104992458594383
    assert analytics.stable_seed("x") == analytics.stable_seed("x")
    assert analytics.stable_seed("x") != analytics.stable_seed("y")


def test_solo_rate_value_and_peak():
    assert analytics.solo_rate(0.1) == pytest.approx(0.0740818220681718, abs=1e-15)
    assert analytics.solo_rate(0.0) == 0.0
    # the rate peaks at one arrival per three slots
    peak = 1.0 / 3.0
    assert analytics.solo_rate(peak) > analytics.solo_rate(peak - 0.05)
    assert analytics.solo_rate(peak) > analytics.solo_rate(peak + 0.05)


def test_slot_of_boundaries():
    assert analytics.slot_of(0.5, 1.0) == 1
    assert analytics.slot_of(1.0, 1.0) == 1  # boundary joins the earlier slot
    assert analytics.slot_of(1.0 + 1e-9, 1.0) == 2
    assert analytics.slot_of(2.0, 1.0) == 2
    assert analytics.slot_of(0.0, 1.0) == 1
    assert analytics.slot_of(7.0, 3.5) == 2


def test_counts_from_times_buckets_and_clips():
    counts = analytics.counts_from_times([0.5, 1.0, 1.5, 2.0, 7.5], 1.0, 3)
    assert counts.tolist() == [2, 2, 0]


def test_solo_indicators_hand_case():
    honest = np.array([0, 1, 0, 0, 1, 1, 0, 1])
    assert analytics.solo_indicators(honest).tolist() == [0, 1, 0, 0, 0, 0, 0, 1]
    # edges only need their single inside neighbour quiet
    assert analytics.solo_indicators(np.array([1])).tolist() == [1]
    assert analytics.solo_indicators(np.array([1, 0, 1])).tolist() == [1, 0, 1]
    assert analytics.solo_indicators(np.array([1, 1])).tolist() == [0, 0]


def test_noise_counts_cover_everything_but_solos():
    honest = np.array([0, 1, 0, 2, 1])
    adv = np.array([1, 0, 0, 1, 0])
    solo = analytics.solo_indicators(honest)
    noise = analytics.noise_counts(honest, adv, solo)
    assert (solo + noise).tolist() == (honest + adv).tolist()
    assert noise.min() >= 0


def test_sample_counts_deterministic_and_calibrated():
    a = analytics.sample_counts("lbl", 0.3, 2000)
    b = analytics.sample_counts("lbl", 0.3, 2000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, analytics.sample_counts("other", 0.3, 2000))
    assert abs(a.mean() - 0.3) < 0.05


def _band_ok_brute(stream, center, tol, tau):
    n = len(stream)
    cum = np.concatenate(([0], np.cumsum(stream, dtype=np.float64)))
    for t1 in range(n + 1):
        for t2 in range(t1 + tau, n + 1):
            length = t2 - t1
            if abs(cum[t2] - cum[t1] - center * length) > tol * length + 1e-9:
                return False
    return True


def test_window_band_short_stream_passes():
    assert analytics.window_band_ok(np.array([100.0]), 0.1, 0.01, 5)


def test_window_band_hand_cases():
    flat = np.full(30, 2.0)
    assert analytics.window_band_ok(flat, 2.0, 0.01, 5)
    spiked = flat.copy()
    spiked[12] = 9.0
    assert not analytics.window_band_ok(spiked, 2.0, 0.01, 5)
    assert analytics.window_band_ok(spiked, 2.0, 2.0, 5)
    # a drought breaks the lower band
    dry = flat.copy()
    dry[3:9] = 0.0
    assert not analytics.window_band_ok(dry, 2.0, 0.2, 5)


@settings(max_examples=80, deadline=None)
@given(
    stream=st.lists(st.integers(min_value=0, max_value=3), max_size=40),
    center=st.sampled_from([0.2, 0.5, 1.0, 1.5]),
    tol=st.sampled_from([0.05, 0.3, 1.0]),
    tau=st.integers(min_value=1, max_value=6),
)
def test_window_band_matches_quadratic_reference(stream, center, tol, tau):
    arr = np.array(stream, dtype=np.float64)
    assert analytics.window_band_ok(arr, center, tol, tau) == _band_ok_brute(
        arr, center, tol, tau
    )


def test_is_typical_matches_brute_on_random_streams():
    rng = random.Random(1234)
    for trial in range(30):
        n = rng.randint(5, 30)
        honest = np.array([rng.randint(0, 1) for _ in range(n)])
        adv = np.array([rng.randint(0, 2) for _ in range(n)])
        solo = analytics.solo_indicators(honest)
        noise = analytics.noise_counts(honest, adv, solo)
        eps = rng.choice([0.1, 0.3, 0.6])
        tau = rng.choice([3, 5])
        got = analytics.is_typical(solo, noise, 0.3, 1.0, eps, tau)
        want = analytics.is_typical_brute(solo, noise, 0.3, 1.0, eps, tau)
        assert got == want, (trial, n, eps, tau)


def test_is_typical_crafted_cases_agree_with_brute():
    solo = np.tile([1, 0, 0], 20)
    noise = np.zeros_like(solo)
    mean = 1.0 / 3.0
    ok = analytics.is_typical(solo, noise, mean, mean, 0.5, 12)
    assert ok == analytics.is_typical_brute(solo, noise, mean, mean, 0.5, 12)
    assert ok
    burst = solo.copy()
    burst[30:35] = 1
    bad = analytics.is_typical(burst, noise, mean, mean, 0.5, 12)
    assert bad == analytics.is_typical_brute(burst, noise, mean, mean, 0.5, 12)
    assert not bad


def test_summarize_slots_arithmetic():
    honest = np.array([0, 1, 0, 1, 1, 0])
    adv = np.array([1, 0, 0, 0, 0, 0])
    summary = analytics.summarize_slots(honest, adv, 0.25, 0.5)
    solo = analytics.solo_indicators(honest)
    assert summary.slots == 6
    assert summary.mean_solo == pytest.approx(solo.mean())
    assert summary.mean_total == pytest.approx((honest + adv).mean())
    assert summary.expected_solo == pytest.approx(analytics.solo_rate(0.25))
    assert summary.expected_total == 0.5
    d = summary.as_dict()
    assert d["solo_rel_err"] == pytest.approx(
        abs(summary.mean_solo - summary.expected_solo) / summary.expected_solo
    )


def test_trace_slot_counts_split_by_miner_kind():
    cfg = parse_config({"name": "t", "seed": 1, "horizon": 4.0, "delta": 1.0,
                        "miners": 2, "checkpointers": 3, "t_byz": 1})
    trace = Trace({"config": cfg})
    trace.emit(0.0, "block", -2, (0, -1, 0, -2, False, False))
    trace.emit(0.4, "block", 3, (1, 0, 1, 3, False, False))
    trace.emit(1.0, "block", 4, (2, 1, 2, 4, False, False))
    trace.emit(1.2, "block", -1, (3, 2, 3, -1, True, True))
    trace.emit(3.9, "block", 3, (4, 3, 4, 3, False, False))
    honest, adv = analytics.trace_slot_counts(trace)
    assert honest.tolist() == [2, 0, 0, 1]
    assert adv.tolist() == [0, 1, 0, 0]


def _shrunk_stats_config():
    cfg = scenario_config("mining-statistics")
    for path, value in (
        ("mining_stats.slots", "50000"),
        ("mining_stats.typicality_seeds", "25"),
    ):
        cfg = apply_override(cfg, path, value)
    return cfg


def test_mining_stats_report_is_deterministic_and_calibrated():
    cfg = _shrunk_stats_config()
    rep = analytics.mining_stats_report(cfg)
    assert rep == analytics.mining_stats_report(cfg)
    summary = rep["summary"]
    assert summary["slots"] == 50000
    assert summary["solo_rel_err"] < 0.08
    assert summary["total_rel_err"] < 0.04
    fractions = rep["typicality"]["fractions"]
    taus = sorted(int(t) for t in fractions)
    values = [fractions[str(t)] for t in taus]
    assert all(0.0 <= v <= 1.0 for v in values)
    # longer minimum windows are easier to stay inside
    assert values == sorted(values)
