"""Onset scoring, aggregation, and the paired t-test."""

import math

import numpy as np
import pytest
import scipy.special
import scipy.stats

from heartseg.errors import ConfigError, DataError
from heartseg.evaluation import (
    AggregateReport,
    Counts,
    CountingState,
    aggregate,
    compute_metrics,
    count_matches,
    paired_t_test,
    regularized_incomplete_beta,
    student_t_sf_two_sided,
)
from heartseg.signal_io import STATES, Annotation


def _cyclic_annotation(rng, duration):
    onsets = []
    t = rng.uniform(0.05, 0.3)
    idx = 0
    while t < duration - 0.05:
        onsets.append((float(t), STATES[idx % 4]))
        t += rng.uniform(0.25, 0.5)
        idx += 1
    return Annotation(onsets=onsets)


def _perturbed(rng, truth):
    onsets = []
    for t, s in truth.onsets:
        if rng.random() < 0.15:
            continue
        onsets.append((max(0.001, t + rng.normal(0.0, 0.08)), s))
    for _ in range(3):
        onsets.append((float(rng.uniform(0.0, 10.0)), STATES[rng.integers(0, 4)]))
    return Annotation(onsets=sorted(onsets))


def _oracle_counts(truth, pred, sigma, end_s):
    """Score by walking every prediction through every zone explicitly."""
    result = {}
    for state in STATES:
        ts = sorted(t for t, s in truth.onsets if s == state)
        ps = sorted(t for t, s in pred.onsets if s == state)
        tp = fp = fn = 0
        if not ts:
            fp = len(ps)
        else:
            fp += sum(1 for p in ps if 0.0 <= p < ts[0] - sigma)
            for i, y in enumerate(ts):
                hits = sum(1 for p in ps if y - sigma <= p < y + sigma)
                if hits:
                    tp += 1
                    fp += hits - 1
                else:
                    fn += 1
                if i + 1 < len(ts):
                    hi = ts[i + 1] - sigma
                elif end_s is not None:
                    hi = end_s - sigma
                else:
                    hi = math.inf
                fp += sum(1 for p in ps if y + sigma <= p < hi)
        result[state] = (tp, fp, fn)
    return result


@pytest.mark.parametrize("end_s", [None, 10.0])
def test_count_matches_against_membership_oracle(rng, end_s):
    for _ in range(10):
        truth = _cyclic_annotation(rng, 10.0)
        pred = _perturbed(rng, truth)
        got = count_matches(truth, pred, sigma_s=0.1, end_s=end_s)
        want = _oracle_counts(truth, pred, 0.1, end_s)
        for state in STATES:
            c = got.per_state[state]
            assert (c.tp, c.fp, c.fn) == want[state], state


def test_count_matches_worked_example():
    truth = Annotation([(1.0, "S1"), (2.0, "S1"), (3.0, "S1")])
    pred = Annotation([(1.05, "S1"), (2.5, "S1"), (3.02, "S1")])
    counting = count_matches(truth, pred, sigma_s=0.1)
    c = counting.per_state["S1"]
    assert (c.tp, c.fp, c.fn) == (2, 1, 1)
    report = compute_metrics(counting)
    assert report.overall.sensitivity == pytest.approx(200.0 / 3.0)
    assert report.overall.positive_predictivity == pytest.approx(200.0 / 3.0)
    assert report.overall.f1 == pytest.approx(66.6666666667)


def test_count_matches_pre_first_zone():
    truth = Annotation([(1.0, "S1")])
    counting = count_matches(truth, Annotation([(0.3, "S1"), (0.95, "S1")]), sigma_s=0.1)
    c = counting.per_state["S1"]
    assert (c.tp, c.fp, c.fn) == (1, 1, 0)


def test_count_matches_end_bound():
    truth = Annotation([(1.0, "S1")])
    pred = Annotation([(5.0, "S1")])
    unbounded = count_matches(truth, pred, sigma_s=0.1).per_state["S1"]
    assert (unbounded.tp, unbounded.fp, unbounded.fn) == (0, 1, 1)
    bounded = count_matches(truth, pred, sigma_s=0.1, end_s=5.05).per_state["S1"]
    assert (bounded.tp, bounded.fp, bounded.fn) == (0, 0, 1)


def test_count_matches_extra_state_predictions():
    truth = Annotation([(1.0, "S1")])
    pred = Annotation([(1.0, "S2"), (2.0, "S2")])
    counting = count_matches(truth, pred)
    assert counting.per_state["S2"].fp == 2
    assert counting.per_state["S1"].fn == 1


def test_count_matches_sigma_validation():
    with pytest.raises(ConfigError):
        count_matches(Annotation([(1.0, "S1")]), Annotation([(1.0, "S1")]), sigma_s=0.0)


def test_compute_metrics_zero_denominators():
    counting = CountingState()
    counting.per_state["S1"] += Counts(tp=0, fp=3, fn=0)
    report = compute_metrics(counting)
    assert report.per_state["S1"].sensitivity == 0.0
    assert any("undefined sensitivity" in f for f in report.flags)


def _counting(tp, fp, fn):
    c = CountingState()
    c.per_state["S1"] += Counts(tp=tp, fp=fp, fn=fn)
    return c


def test_aggregate_two_recordings():
    # Overall sensitivities 80 and 100; pooled pools the raw counts.
    report = aggregate([_counting(4, 0, 1), _counting(3, 0, 0)])
    assert isinstance(report, AggregateReport)
    assert report.n_recordings == 2
    assert report.mean["sensitivity"] == pytest.approx(90.0)
    assert report.stderr["sensitivity"] == pytest.approx(10.0)
    assert report.pooled.overall.sensitivity == pytest.approx(100.0 * 7 / 8)


def test_aggregate_single_recording_has_zero_stderr():
    report = aggregate([_counting(4, 1, 1)])
    assert report.stderr["f1"] == 0.0
    assert report.mean["sensitivity"] == pytest.approx(80.0)


def test_aggregate_empty_rejected():
    with pytest.raises(DataError):
        aggregate([])


def test_incomplete_beta_against_scipy(rng):
    for _ in range(50):
        a = float(rng.uniform(0.3, 20.0))
        b = float(rng.uniform(0.3, 20.0))
        x = float(rng.uniform(0.0, 1.0))
        want = scipy.special.betainc(a, b, x)
        assert regularized_incomplete_beta(a, b, x) == pytest.approx(want, rel=1e-10, abs=1e-13)


def test_incomplete_beta_edges():
    assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
    assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0
    # Symmetry: I_x(a, b) = 1 - I_{1-x}(b, a)
    v = regularized_incomplete_beta(2.5, 4.0, 0.3)
    w = regularized_incomplete_beta(4.0, 2.5, 0.7)
    assert v == pytest.approx(1.0 - w, abs=1e-12)


def test_t_sf_against_scipy():
    for t in (0.0, 0.5, 1.0, 2.5, 4.0, -3.0):
        for dof in (1, 2, 5, 9, 30):
            want = 2.0 * scipy.stats.t.sf(abs(t), dof)
            assert student_t_sf_two_sided(t, dof) == pytest.approx(want, rel=1e-10)


def test_paired_t_test_against_scipy(rng):
    for _ in range(10):
        n = int(rng.integers(3, 12))
        a = rng.normal(90.0, 5.0, n)
        b = a + rng.normal(1.0, 2.0, n)
        t, p = paired_t_test(a, b)
        want = scipy.stats.ttest_rel(a, b)
        assert t == pytest.approx(want.statistic, rel=1e-10)
        assert p == pytest.approx(want.pvalue, rel=1e-9)


def test_paired_t_test_frozen_instance():
    # Worked instance, values checked out of band.
    a = [96.0, 94.5, 97.2, 95.1, 96.3]
    b = [94.8, 94.0, 95.9, 94.2, 95.6]
    t, p = paired_t_test(a, b)
    assert t == pytest.approx(6.147008563985763, rel=1e-12)
    assert p == pytest.approx(0.0035522946021367364, rel=1e-10)


def test_paired_t_test_identical_arrays():
    t, p = paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert t == 0.0
    assert p == 1.0


def test_paired_t_test_zero_variance_difference():
    with pytest.warns(RuntimeWarning):
        t, p = paired_t_test([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
    assert t == math.inf
    assert p < 1e-12


def test_paired_t_test_needs_two_samples():
    with pytest.raises(DataError):
        paired_t_test([1.0], [2.0])
    with pytest.raises(ConfigError):
        paired_t_test([1.0, 2.0], [1.0])
