import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mode_atlas.errors import DivergedStartError, InvalidInputError
from mode_atlas.gkde import SampleSet, draw_samples, kde_eval
from mode_atlas.modes import classify_regions, critical_points, find_modes, mean_shift, scale_space_check
from oracles import dense_grid_modes


def check_report_shape(s, report):
    locs = [c.location for c in report.criticals]
    kinds = [c.kind for c in report.criticals]
    assert all(b > a for a, b in zip(locs, locs[1:]))
    assert kinds[0] == "maximum" and kinds[-1] == "maximum"
    assert all(k != k2 for k, k2 in zip(kinds, kinds[1:]))
    assert report.mode_count == kinds.count("maximum") == kinds.count("minimum") + 1
    assert 1 <= report.mode_count <= s.n


def test_single_sample():
    for beta in (0.1, 1.0, 1e4):
        r = find_modes(SampleSet([0.0], beta))
        assert r.mode_count == 1
        assert r.criticals[0].location == pytest.approx(0.0, abs=1e-12)
        assert r.counts_by_region is None


def test_two_separated_samples():
    s = SampleSet([-1.0, 1.0], 9.0)
    r = find_modes(s)
    ref = dense_grid_modes(s.samples, s.beta)
    assert r.mode_count == 2
    np.testing.assert_allclose(r.maxima, ref, atol=1e-10)
    assert r.minima[0] == pytest.approx(0.0, abs=1e-12)
    check_report_shape(s, r)


def test_two_close_samples_unimodal():
    r = find_modes(SampleSet([-0.1, 0.1], 9.0))
    assert r.mode_count == 1
    assert r.maxima[0] == pytest.approx(0.0, abs=1e-12)


def test_critical_point_invariants(rng):
    s = SampleSet(rng.normal(size=40), 60.0)
    r = find_modes(s)
    check_report_shape(s, r)
    for c in r.criticals:
        curv = kde_eval(s, c.location, 2)
        assert (curv < 0) if c.kind == "maximum" else (curv > 0)
        assert abs(kde_eval(s, c.location, 1)) < 1e-8 * s.beta
        assert c.value == pytest.approx(kde_eval(s, c.location), rel=1e-14)


def test_all_criticals_inside_sample_range(rng):
    s = SampleSet(rng.normal(size=100), 300.0)
    r = find_modes(s)
    locs = np.array([c.location for c in r.criticals])
    assert locs.min() >= s.samples[0] and locs.max() <= s.samples[-1]


def test_oracle_equivalence_small(rng):
    for _ in range(60):
        n = int(rng.integers(1, 21))
        s = SampleSet(rng.normal(size=n), float(rng.uniform(0.5, 100)))
        r = find_modes(s)
        ref = dense_grid_modes(s.samples, s.beta)
        assert r.mode_count == ref.size
        np.testing.assert_allclose(r.maxima, ref, atol=1e-6)


def test_close_pair_near_fold_is_found():
    # a maximum and minimum 0.012 apart, closer than the h/8 scan step
    s = SampleSet([-1.06523588, -1.01544619, -0.59849116, 0.22265588], 35.70510079614975)
    r = find_modes(s)
    ref = dense_grid_modes(s.samples, s.beta)
    assert ref.size == 3 and r.mode_count == 3
    np.testing.assert_allclose(r.maxima, ref, atol=1e-6)
    check_report_shape(s, r)


def test_duplicate_samples_merge():
    s = SampleSet([0.0, 0.0, 0.0, 2.0], 50.0)
    r = find_modes(s)
    assert s.n == 4 and r.mode_count == 2


def test_grid_exact_zero_is_found():
    # the midpoint of a symmetric pair lands exactly on a scan-grid node
    s = SampleSet([-1.0, 1.0], 4.0)
    r = find_modes(s)
    assert [c.kind for c in r.criticals] == ["maximum", "minimum", "maximum"]
    assert r.minima[0] == 0.0


def test_translation_equivariance(rng):
    s = SampleSet(rng.normal(size=25), 40.0)
    for c in (0.37, -2.5, 10.0):
        a, b = find_modes(s), find_modes(s.shifted(c))
        assert a.mode_count == b.mode_count
        np.testing.assert_allclose([x.location + c for x in a.criticals], [x.location for x in b.criticals], atol=1e-9)


def test_negation_mirrors_modes(rng):
    s = SampleSet(rng.normal(size=25), 40.0)
    a, b = find_modes(s), find_modes(s.negated())
    np.testing.assert_allclose(np.sort(-a.maxima), b.maxima, atol=1e-9)


def test_sparse_tail_modes_are_found():
    # kernels far apart at high beta: P' underflows between them
    s = SampleSet([0.0, 1.0, 1.5, 5.0], 10_000.0)
    r = find_modes(s)
    assert r.mode_count == 4
    np.testing.assert_allclose(r.maxima, s.samples, atol=1e-12)


def test_monotone_in_beta(rng):
    for _ in range(20):
        x = rng.normal(size=30)
        counts = [find_modes(SampleSet(x, b)).mode_count for b in (4, 16, 64, 256, 1024)]
        assert counts == sorted(counts)


def test_regions_sum():
    s = draw_samples(2000, 100.0, 3)
    r = find_modes(s)
    assert sum(r.counts_by_region) == r.mode_count


def test_classify_regions_by_hand():
    from mode_atlas.kacrice import intervals_T

    b = intervals_T(10**4, 100.0)
    m = np.array([0.0, b.tprime_end, -(b.tprime_end + 0.01), b.t_end, b.t_end + 0.01])
    assert tuple(classify_regions(m, 10**4, 100.0)) == (2, 2, 1)
    assert classify_regions(m, 1, 100.0) is None
    # T empty puts every mode outside
    assert tuple(classify_regions(np.array([0.0, 1.0]), 10**4, 1e9)) == (0, 0, 2)


def test_report_to_dict():
    d = find_modes(SampleSet([-1.0, 1.0], 9.0)).to_dict()
    assert d["mode_count"] == 2 and len(d["criticals"]) == 3


def test_mean_shift_examples():
    assert mean_shift(SampleSet([0.0], 1.0), 0.5) == pytest.approx(0.0, abs=1e-9)
    s = SampleSet([-1.0, 1.0], 9.0)
    right = find_modes(s).maxima[-1]
    assert mean_shift(s, 0.9) == pytest.approx(right, abs=1e-6)
    assert mean_shift(s, 0.0) == 0.0


def test_mean_shift_increases_density(rng):
    s = SampleSet(rng.normal(size=30), 20.0)
    t = 0.3
    prev = kde_eval(s, t)
    for _ in range(50):
        t = mean_shift(s, t, max_iters=1)
        cur = kde_eval(s, t)
        assert cur >= prev * (1 - 1e-14)
        prev = cur


def test_mean_shift_errors():
    s = SampleSet([0.0], 1e6)
    with pytest.raises(DivergedStartError):
        mean_shift(s, 10.0)
    with pytest.raises(InvalidInputError):
        mean_shift(s, math.nan)
    with pytest.raises(InvalidInputError):
        mean_shift(s, 0.0, tol=0.0)


def test_mean_shift_limits_are_the_maxima(rng):
    for _ in range(20):
        n = int(rng.integers(1, 51))
        s = SampleSet(rng.normal(size=n), float(rng.uniform(1, 100)))
        maxima = find_modes(s).maxima
        limits = np.array([mean_shift(s, x) for x in s.samples])
        assert np.min(np.abs(limits[:, None] - maxima[None, :]), axis=1).max() < 1e-5
        assert np.min(np.abs(maxima[:, None] - limits[None, :]), axis=1).max() < 1e-5


def test_scale_space_trivial_thresholds(rng):
    for _ in range(200):
        s = SampleSet(rng.normal(size=int(rng.integers(1, 40))), float(rng.uniform(1, 500)))
        r = find_modes(s)
        a = max(abs(s.samples[0]), abs(s.samples[-1])) + 1
        assert scale_space_check(s, r, a)
        assert scale_space_check(s, r, -a)


def test_tail_bound_holds_at_sample_thresholds(rng):
    for _ in range(200):
        s = SampleSet(rng.normal(size=int(rng.integers(1, 40))), float(rng.uniform(1, 500)))
        m, x = find_modes(s).maxima, s.samples
        for a in x:
            assert np.count_nonzero(m > a) <= np.count_nonzero(x >= a)
            assert np.count_nonzero(m < a) <= np.count_nonzero(x <= a)


def test_tail_bound_fails_between_samples():
    # a bimodal pair: the left mode is pulled right of a threshold that sits
    # between it and its sample, so two modes lie beyond a with one sample
    s = SampleSet([0.0, 2.2], 1.0)
    r = find_modes(s)
    a = 0.5 * (0.0 + r.maxima[0])
    assert r.mode_count == 2 and r.maxima[0] > 0
    assert not scale_space_check(s, r, a)


def test_scale_space_check_counts_both_tails():
    s = SampleSet([-3.0, 0.0, 3.0], 100.0)
    r = find_modes(s)
    assert scale_space_check(s, r, 1.0)
    fewer = SampleSet([-3.0, 0.0, 0.0], 100.0)
    assert not scale_space_check(fewer, r, 1.0)


def test_critical_points_signs():
    locs, lefts = critical_points(SampleSet([-1.0, 1.0], 9.0))
    assert list(lefts) == [1, -1, 1]


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=15),
    st.floats(0.5, 200.0),
)
def test_find_modes_properties(xs, beta):
    s = SampleSet(xs, beta)
    r = find_modes(s)
    check_report_shape(s, r)
    for a in s.samples:
        assert np.count_nonzero(r.maxima > a) <= np.count_nonzero(s.samples >= a)
