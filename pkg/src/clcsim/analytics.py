"""Mining-pattern statistics over fixed time slots.

Block arrivals are bucketed into slots of width delta.  A slot is a "solo"
slot when it holds exactly one honest block and the two neighbouring slots
hold none; every other mined block (adversarial, or honest but crowded)
counts toward the slot's noise tally.  Long-window concentration of both
streams is what the safety margins of the chain rules rest on, so the
module also grades executions by whether every window of at least tau
slots keeps both tallies inside a relative band.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np


def stable_seed(label: str) -> int:
    """Map a seed label to a fixed 64-bit integer, identically on any platform."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def solo_rate(honest_rate: float) -> float:
    """Expected fraction of solo slots when honest blocks arrive at
    ``honest_rate`` per slot: the slot must hold exactly one arrival and
    both neighbours must hold zero."""
    return honest_rate * math.exp(-3.0 * honest_rate)


def slot_of(time: float, delta: float) -> int:
    """1-based slot index of an arrival; a boundary hit belongs to the
    earlier slot."""
    return max(1, int(math.ceil(time / delta - 1e-12)))


def counts_from_times(times: Sequence[float], delta: float, slots: int) -> np.ndarray:
    """Per-slot arrival counts for the first ``slots`` slots."""
    out = np.zeros(slots, dtype=np.int64)
    for t in times:
        idx = slot_of(t, delta)
        if 1 <= idx <= slots:
            out[idx - 1] += 1
    return out


def trace_slot_counts(trace) -> Tuple[np.ndarray, np.ndarray]:
    """Split a run's mined blocks into per-slot honest and adversarial counts.

    Withheld blocks count at their mining time; the slot grid runs up to the
    mining horizon.
    """
    cfg = trace.config()
    delta = cfg["delta"]
    horizon = cfg["horizon"]
    slots = int(math.ceil(horizon / delta - 1e-12))
    honest_times: List[float] = []
    adv_times: List[float] = []
    for rec in trace.by_kind("block"):
        if rec[0] <= 0.0:
            continue
        adversarial = rec[4][4]
        (adv_times if adversarial else honest_times).append(rec[0])
    return (
        counts_from_times(honest_times, delta, slots),
        counts_from_times(adv_times, delta, slots),
    )


def solo_indicators(honest: np.ndarray) -> np.ndarray:
    """1 where a slot holds exactly one honest block and its neighbours hold
    none.  The first and last slot only need their single inside neighbour
    quiet."""
    one = honest == 1
    quiet = honest == 0
    left = np.empty_like(quiet)
    left[0] = True
    left[1:] = quiet[:-1]
    right = np.empty_like(quiet)
    right[-1] = True
    right[:-1] = quiet[1:]
    return (one & left & right).astype(np.int64)


def noise_counts(honest: np.ndarray, adv: np.ndarray, solo: np.ndarray) -> np.ndarray:
    """Adversarial blocks plus honest blocks that are not a slot's solo."""
    return honest + adv - solo


def sample_counts(label: str, rate: float, slots: int) -> np.ndarray:
    """Draw independent per-slot Poisson arrival counts."""
    rng = np.random.default_rng(stable_seed(label))
    return rng.poisson(rate, size=slots).astype(np.int64)


def window_band_ok(
    stream: np.ndarray, center: float, tolerance: float, tau: int
) -> bool:
    """True when every window of at least ``tau`` slots keeps the stream's
    sum within ``center*L +- tolerance*L``.

    With C the prefix-sum array, a window (t1, t2] breaks the upper band
    exactly when C[t2] - slope*t2 exceeds C[t1] - slope*t1 at slope
    center+tolerance, so a lagged running minimum settles all windows in one
    pass; the lower band mirrors it with a running maximum.
    """
    n = len(stream)
    if n < tau:
        return True
    cum = np.concatenate(([0], np.cumsum(stream, dtype=np.float64)))
    t = np.arange(n + 1, dtype=np.float64)
    hi = cum - (center + tolerance) * t
    lo = cum - (center - tolerance) * t
    run_min = np.minimum.accumulate(hi)
    run_max = np.maximum.accumulate(lo)
    if np.any(hi[tau:] > run_min[:-tau] + 1e-9):
        return False
    if np.any(lo[tau:] < run_max[:-tau] - 1e-9):
        return False
    return True


def is_typical(
    solo: np.ndarray,
    noise: np.ndarray,
    solo_mean: float,
    total_mean: float,
    eps: float,
    tau: int,
) -> bool:
    """Grade one execution: every window of at least tau slots must keep the
    solo sum within eps of its mean, the noise sum within the same absolute
    band (eps times the solo mean), and the combined sum within eps of the
    total arrival mean."""
    noise_mean = total_mean - solo_mean
    band = eps * solo_mean
    return (
        window_band_ok(solo, solo_mean, band, tau)
        and window_band_ok(noise, noise_mean, band, tau)
        and window_band_ok(solo + noise, total_mean, eps * total_mean, tau)
    )


def is_typical_brute(
    solo: np.ndarray,
    noise: np.ndarray,
    solo_mean: float,
    total_mean: float,
    eps: float,
    tau: int,
) -> bool:
    """Quadratic reference for :func:`is_typical`, for small inputs."""
    n = len(solo)
    noise_mean = total_mean - solo_mean
    cum_y = np.concatenate(([0], np.cumsum(solo, dtype=np.float64)))
    cum_z = np.concatenate(([0], np.cumsum(noise, dtype=np.float64)))
    for t1 in range(n + 1):
        for t2 in range(t1 + tau, n + 1):
            length = t2 - t1
            sy = cum_y[t2] - cum_y[t1]
            sz = cum_z[t2] - cum_z[t1]
            if abs(sy - solo_mean * length) > eps * solo_mean * length + 1e-9:
                return False
            if abs(sz - noise_mean * length) > eps * solo_mean * length + 1e-9:
                return False
            if abs(sy + sz - total_mean * length) > eps * total_mean * length + 1e-9:
                return False
    return True


@dataclass
class SlotSummary:
    """Point estimates for one long sampled execution."""

    slots: int
    mean_solo: float
    mean_total: float
    expected_solo: float
    expected_total: float

    @property
    def solo_rel_err(self) -> float:
        return abs(self.mean_solo - self.expected_solo) / self.expected_solo

    @property
    def total_rel_err(self) -> float:
        return abs(self.mean_total - self.expected_total) / self.expected_total

    def as_dict(self) -> Dict[str, float]:
        return {
            "slots": self.slots,
            "mean_solo": self.mean_solo,
            "mean_total": self.mean_total,
            "expected_solo": self.expected_solo,
            "expected_total": self.expected_total,
            "solo_rel_err": self.solo_rel_err,
            "total_rel_err": self.total_rel_err,
        }


def summarize_slots(
    honest: np.ndarray, adv: np.ndarray, honest_rate: float, total_rate: float
) -> SlotSummary:
    solo = solo_indicators(honest)
    noise = noise_counts(honest, adv, solo)
    return SlotSummary(
        slots=len(honest),
        mean_solo=float(solo.mean()),
        mean_total=float((solo + noise).mean()),
        expected_solo=solo_rate(honest_rate),
        expected_total=total_rate,
    )


def mining_stats_report(cfg: dict) -> dict:
    """The mining-stats run kind: one long execution for point estimates,
    then a battery of shorter executions graded for window typicality at
    each requested tau."""
    seed = cfg["seed"]
    beta = cfg["beta"]
    stats = cfg["mining_stats"]
    total_rate = cfg["lambda_per_delta"]
    honest_rate = (1.0 - beta) * total_rate

    slots = stats["slots"]
    honest = sample_counts(f"{seed}:slots:honest", honest_rate, slots)
    adv = sample_counts(f"{seed}:slots:adv", total_rate - honest_rate, slots)
    summary = summarize_slots(honest, adv, honest_rate, total_rate)

    eps = stats["epsilon"]
    taus = list(stats["taus"])
    n_seeds = stats["typicality_seeds"]
    short = stats["typicality_slots"]
    expected_solo = solo_rate(honest_rate)
    typical_hits = {tau: 0 for tau in taus}
    for idx in range(n_seeds):
        h = sample_counts(f"{seed}:typ:{idx}:honest", honest_rate, short)
        a = sample_counts(f"{seed}:typ:{idx}:adv", total_rate - honest_rate, short)
        y = solo_indicators(h)
        z = noise_counts(h, a, y)
        for tau in taus:
            if is_typical(y, z, expected_solo, total_rate, eps, tau):
                typical_hits[tau] += 1
    fractions = {tau: typical_hits[tau] / n_seeds for tau in taus}

    return {
        "summary": summary.as_dict(),
        "typicality": {
            "epsilon": eps,
            "seeds": n_seeds,
            "slots": short,
            "fractions": {str(tau): fractions[tau] for tau in taus},
        },
    }
