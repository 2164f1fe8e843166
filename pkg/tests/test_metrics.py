import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldrobot import metrics
from fieldrobot.errors import EmptyInputError, FitUndefinedError
from fieldrobot.loop import SimLog
from oracles import one_pass_fit, one_pass_stats


def make_log(x, y, rx, ry):
    log = SimLog(columns=["t", "x", "y", "ref_x", "ref_y"])
    for i, row in enumerate(zip(x, y, rx, ry)):
        log.append({"t": 0.2 * i, "x": row[0], "y": row[1], "ref_x": row[2], "ref_y": row[3]})
    return log


def test_error_zero_on_reference():
    log = make_log([1, 2, 3], [0, 1, 0], [1, 2, 3], [0, 1, 0])
    assert np.array_equal(metrics.euclidean_error(log), [0, 0, 0])


def test_error_three_four_five():
    log = make_log([3.0] * 4, [4.0] * 4, [0.0] * 4, [0.0] * 4)
    assert np.array_equal(metrics.euclidean_error(log), [5.0] * 4)


def test_empty_log_raises():
    with pytest.raises(EmptyInputError):
        metrics.euclidean_error(SimLog(columns=["t", "x", "y", "ref_x", "ref_y"]))


def test_violations():
    assert metrics.count_violations(np.zeros(10)) == 0
    assert metrics.count_violations([0.1, 0.13, 0.2, 0.12, 0.0]) == 2
    with pytest.raises(ValueError):
        metrics.count_violations([0.1], 0.0)


def test_on_track_index():
    e = np.r_[np.full(5, 0.5), np.full(3, 0.05), 0.2, np.full(10, 0.05)]
    assert metrics.on_track_index(e) == 9
    assert metrics.on_track_index(np.full(9, 0.01)) is None


def test_fit_exact_line_and_anticorrelation():
    x = np.arange(5, 30, dtype=float)
    slope, intercept, r = metrics.linear_fit_and_r(np.column_stack([x, 2 * x + 1]))
    assert (slope, intercept, r) == pytest.approx((2, 1, 1), abs=1e-12)
    assert metrics.linear_fit_and_r(np.column_stack([x, -x]))[2] == pytest.approx(-1.0, abs=1e-12)


def test_fit_degenerate():
    with pytest.raises(FitUndefinedError):
        metrics.linear_fit_and_r([(3, 1), (3, 2)])
    with pytest.raises(FitUndefinedError):
        metrics.linear_fit_and_r([(3, 1)])


def test_fit_recovers_field_numbers():
    # residual orthogonal to the centered x, scaled to give the target correlation
    rng = np.random.default_rng(0)
    x = rng.uniform(8, 28, 53)
    e = rng.normal(size=53)
    xc = x - x.mean()
    e = e - e.mean()
    e -= (e @ xc) / (xc @ xc) * xc
    slope, intercept, r_target = 1.02, -0.86, 0.96
    sx = math.sqrt(xc @ xc)
    se = slope * sx * math.sqrt(1 / r_target**2 - 1)
    y = slope * x + intercept + e / math.sqrt(e @ e) * se
    got = metrics.linear_fit_and_r(np.column_stack([x, y]))
    assert got == pytest.approx((1.02, -0.86, 0.96), abs=1e-10)


def test_relative_error_examples():
    assert metrics.relative_error(17, 17) == 0.0
    assert metrics.relative_error(19, 20) == pytest.approx(-5.0)


def test_relative_stats_recover_field_numbers():
    rng = np.random.default_rng(1)
    z = rng.normal(size=53)
    z = (z - z.mean()) / z.std(ddof=1)
    eps = -3.78 + 6.76 * z
    human = rng.integers(10, 25, 53).astype(float)
    pairs = list(zip(human, human * (1 + eps / 100)))
    _, mean, std, _ = metrics.relative_error_stats(pairs)
    assert (mean, std) == pytest.approx((-3.78, 6.76), abs=1e-10)


def test_zero_human_count_skipped_with_warning():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        errs, mean, _, _ = metrics.relative_error_stats([(0, 3), (20, 19)])
    assert errs == pytest.approx([-5.0])
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-40, 40), min_size=1, max_size=200), st.sampled_from([1.0, 2.5, 5.0]))
def test_histogram_conserves_and_centres(values, width):
    edges, counts = metrics.histogram(values, width)
    assert counts.sum() == len(values)
    assert np.allclose(np.diff(edges), width)
    # zero sits in the middle of a bin
    k = np.searchsorted(edges, 0.0) - 1
    if 0 <= k < len(counts):
        assert (edges[k] + edges[k + 1]) / 2 == pytest.approx(0.0, abs=1e-12)
    v = np.asarray(values)
    assert np.all((v >= edges[0]) & (v < edges[-1]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 40), st.integers(0, 45)), min_size=3, max_size=80))
def test_statistics_match_one_pass_reference(pairs):
    hs = [h for h, _ in pairs]
    if len(set(hs)) < 2:
        return
    ys = [r for _, r in pairs]
    ref_fit = one_pass_fit(pairs)
    got = metrics.linear_fit_and_r(pairs)
    assert got[0] == pytest.approx(ref_fit[0], abs=1e-10)
    assert got[1] == pytest.approx(ref_fit[1], abs=1e-10)
    if len(set(ys)) > 1:
        assert got[2] == pytest.approx(ref_fit[2], abs=1e-10)
    errs, mean, std, _ = metrics.relative_error_stats(pairs)
    ref_mean, ref_std = one_pass_stats(errs)
    assert mean == pytest.approx(ref_mean, abs=1e-10)
    assert std == pytest.approx(ref_std, abs=1e-10)


def test_counting_report_fields():
    rep = metrics.counting_report([(10, 9), (20, 21), (15, 15)])
    assert sum(rep.hist_counts) == 3
    assert rep.relative_errors == pytest.approx([-10.0, 5.0, 0.0])
