"""Onset-tolerance scoring of predicted against reference annotations.

Counting follows a per-state interval rule. For each truth onset y with
tolerance sigma:
  - predictions in [y - sigma, y + sigma) hit the onset: one TP if any,
    extras are FP;
  - predictions in the exclusion zone [y + sigma, y_next - sigma) are FP;
  - an unmatched onset is one FN.
Predictions of a state before its first tolerance window, i.e. in
[0, y_first - sigma), also count as FP (an explicit extension of the rule
above); the final exclusion zone ends at recording end minus sigma when the
end is known, otherwise it is open-ended. Sensitivity, positive predictivity
and F1 are reported in percent, pooled over recordings and also as
per-recording mean with standard error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .signal_io import STATES, Annotation


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __iadd__(self, other):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self


@dataclass
class CountingState:
    """TP/FP/FN per state for one recording (or a pooled set)."""

    per_state: dict = field(default_factory=lambda: {s: Counts() for s in STATES})

    def total(self) -> Counts:
        out = Counts()
        for c in self.per_state.values():
            out += c
        return out

    def merge(self, other: "CountingState"):
        for s in STATES:
            self.per_state[s] += other.per_state[s]
        return self


def _count_in(sorted_times: np.ndarray, lo: float, hi: float) -> int:
    """Predictions in the half-open interval [lo, hi)."""
    if hi <= lo:
        return 0
    return int(
        np.searchsorted(sorted_times, hi, side="left")
        - np.searchsorted(sorted_times, lo, side="left")
    )


def count_matches(
    truth: Annotation, pred: Annotation, sigma_s: float = 0.1, end_s: float = None
) -> CountingState:
    """Score predicted onsets against truth at tolerance sigma_s.

    end_s, when given, bounds the last exclusion zone at end_s - sigma_s
    (stray predictions within sigma of the recording end go uncounted, as do
    truth-free trailing stretches beyond it).
    """
    if sigma_s <= 0:
        raise ConfigError("sigma_s must be positive")
    out = CountingState()
    for state in STATES:
        t_times = truth.times(state)
        p_times = pred.times(state)
        counts = out.per_state[state]
        if len(t_times) == 0:
            counts.fp += len(p_times)
            continue
        counts.fp += _count_in(p_times, 0.0, t_times[0] - sigma_s)
        for i, y in enumerate(t_times):
            n1 = _count_in(p_times, y - sigma_s, y + sigma_s)
            if i + 1 < len(t_times):
                zone_end = t_times[i + 1] - sigma_s
            elif end_s is not None:
                zone_end = end_s - sigma_s
            else:
                zone_end = math.inf
            n2 = _count_in(p_times, y + sigma_s, zone_end)
            if n1 > 0:
                counts.tp += 1
                counts.fp += n1 - 1
            else:
                counts.fn += 1
            counts.fp += n2
    return out


@dataclass
class StateMetrics:
    sensitivity: float
    positive_predictivity: float
    f1: float
    counts: Counts


@dataclass
class MetricsReport:
    per_state: dict
    overall: StateMetrics
    flags: list = field(default_factory=list)


def _metrics_from(counts: Counts, label: str, flags: list) -> StateMetrics:
    if counts.tp + counts.fn > 0:
        se = 100.0 * counts.tp / (counts.tp + counts.fn)
    else:
        se = 0.0
        flags.append(f"undefined sensitivity ({label}): no truth onsets")
    if counts.tp + counts.fp > 0:
        ppv = 100.0 * counts.tp / (counts.tp + counts.fp)
    else:
        ppv = 0.0
        flags.append(f"undefined positive predictivity ({label}): no predictions")
    f1 = 2.0 * se * ppv / (se + ppv) if se + ppv > 0 else 0.0
    return StateMetrics(se, ppv, f1, counts)


def compute_metrics(counting: CountingState) -> MetricsReport:
    """Sensitivity / positive predictivity / F1 (percent), per state and overall."""
    flags = []
    per_state = {s: _metrics_from(counting.per_state[s], s, flags) for s in STATES}
    overall = _metrics_from(counting.total(), "overall", flags)
    return MetricsReport(per_state, overall, flags)


@dataclass
class AggregateReport:
    """Pooled counts plus across-recording mean and standard error."""

    pooled: MetricsReport
    n_recordings: int
    mean: dict         # metric name -> mean of per-recording overall values
    stderr: dict       # metric name -> sd/sqrt(n) with n-1 variance divisor
    per_recording: list


def aggregate(counting_states) -> AggregateReport:
    """Combine per-recording counts two ways: pooled and mean +/- stderr."""
    counting_states = list(counting_states)
    if not counting_states:
        raise DataError("nothing to aggregate")
    pooled = CountingState()
    for c in counting_states:
        pooled.merge(c)
    reports = [compute_metrics(c) for c in counting_states]
    values = {
        "sensitivity": np.array([r.overall.sensitivity for r in reports]),
        "positive_predictivity": np.array([r.overall.positive_predictivity for r in reports]),
        "f1": np.array([r.overall.f1 for r in reports]),
    }
    n = len(reports)
    mean = {k: float(v.mean()) for k, v in values.items()}
    stderr = {
        k: float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0 for k, v in values.items()
    }
    return AggregateReport(compute_metrics(pooled), n, mean, stderr, reports)


# ---------------------------------------------------------------------------
# paired t-test without a statistics dependency


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz's method)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) to ~1e-10 absolute accuracy."""
    if not (0.0 <= x <= 1.0):
        raise ConfigError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    front = math.exp(a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf_two_sided(t_stat: float, dof: int) -> float:
    """Two-sided tail probability of Student's t."""
    if dof < 1:
        raise ConfigError("degrees of freedom must be >= 1")
    return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t_stat * t_stat))


def paired_t_test(a, b):
    """Two-sided paired t-test; returns (t_statistic, p_value).

    Zero-variance differences degenerate: identical sequences give (0, 1),
    constant non-zero differences give (+/-inf, smallest normal float) with
    a RuntimeWarning.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigError("paired_t_test expects two equal-length 1-D sequences")
    n = len(a)
    if n < 2:
        raise DataError("paired_t_test needs at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        warnings.warn(
            "zero-variance differences: p-value capped at the float minimum", RuntimeWarning
        )
        return math.copysign(math.inf, mean), np.finfo(float).tiny
    t_stat = mean / (sd / math.sqrt(n))
    return t_stat, student_t_sf_two_sided(t_stat, n - 1)
