import math

import numpy as np
import pytest
from scipy import stats

from llm_jury.errors import EmptySampleError, UndefinedStatisticError
from llm_jury.records import PairedScores
from llm_jury.resampling import (
    BootstrapSpec,
    GroupedSample,
    beta_binomial_exceedance,
    bootstrap_ci,
    bootstrap_win_rate,
    resample_draws,
)


def _pairs(seed=0, n=120, shift=0.3, cases=None):
    rng = np.random.default_rng(seed)
    ref = rng.integers(1, 6, n).astype(float)
    other = np.clip(ref - shift + rng.normal(0, 0.8, n), 1, 5)
    case_ids = cases or tuple(f"c{i // 2:03d}" for i in range(n))
    return PairedScores(case_ids, tuple(f"a{i % 2}" for i in range(n)), ref, other)


def test_draws_depend_only_on_seed_and_index():
    a = resample_draws(30, BootstrapSpec(10, seed=4))
    b = resample_draws(30, BootstrapSpec(25, seed=4))
    np.testing.assert_array_equal(a, b[:10])
    assert not np.array_equal(a, resample_draws(30, BootstrapSpec(10, seed=5)))


def test_case_level_resampling_keeps_case_rows_together():
    p = _pairs()
    g = GroupedSample.build(p.ref, p.other, list(p.case_ids))
    assert g.n_groups == 60
    for k in range(g.n_groups):
        rows = g.members[g.offsets[k] : g.offsets[k + 1]]
        assert len({p.case_ids[r] for r in rows}) == 1


def test_fast_path_matches_callable_path():
    p = _pairs(1)
    spec = BootstrapSpec(200, seed=3)
    fast = bootstrap_ci(p, "rmse", spec)
    slow = bootstrap_ci(p, lambda r, o: math.sqrt(np.mean((r - o) ** 2)), spec)
    np.testing.assert_allclose(fast.estimates, slow.estimates, rtol=1e-12)
    assert fast.point == pytest.approx(slow.point)


def test_interval_contains_point_and_levels_nest():
    res = bootstrap_ci(_pairs(2), "offset", BootstrapSpec(500, 0.95, seed=1))
    assert res.lo <= res.point <= res.hi
    lo68, hi68 = res.interval(0.68)
    assert res.lo <= lo68 <= hi68 <= res.hi
    assert res.n_skipped == 0 and res.method == "percentile"


def test_too_many_undefined_resamples_raise():
    # Two cases, one of them constant: spearman is undefined on many resamples.
    p = PairedScores(("a", "a", "b", "b"), ("x", "y", "x", "y"), np.array([1.0, 2, 3, 3]), np.array([1.0, 2, 3, 3]))
    with pytest.raises(UndefinedStatisticError, match="undefined on"):
        bootstrap_ci(p, "spearman", BootstrapSpec(200, seed=0))


def test_needs_two_groups():
    p = PairedScores(("a", "a"), ("x", "y"), np.array([1.0, 2.0]), np.array([2.0, 1.0]))
    with pytest.raises(EmptySampleError):
        bootstrap_ci(p, "offset")


def test_win_rate_delta_sign_and_alignment():
    p = _pairs(3)
    good = PairedScores(p.case_ids, p.agent_ids, p.ref, p.ref.copy())
    # Same keys in reverse order must align by (case, agent).
    rev = PairedScores(p.case_ids[::-1], p.agent_ids[::-1], p.ref[::-1], p.other[::-1])
    rep = bootstrap_win_rate(good, rev, "rmse", BootstrapSpec(200, seed=0))
    assert rep.win_pct == 100.0
    assert rep.delta > 0
    flipped = bootstrap_win_rate(rev, good, "rmse", BootstrapSpec(200, seed=0))
    assert flipped.win_pct == 0.0 and flipped.delta == pytest.approx(-rep.delta)


def test_win_rate_rejects_mismatched_keys():
    p = _pairs(4)
    q = p.subset(np.arange(len(p)) > 0)
    with pytest.raises(ValueError, match="same"):
        bootstrap_win_rate(p, q, "offset")


@pytest.mark.parametrize("counts", [(0, 10, 0, 10), (3, 20, 5, 12), (4, 95, 1, 6), (10, 10, 0, 3)])
def test_exceedance_exact_vs_monte_carlo(counts):
    k_a, n_a, k_b, n_b = counts
    rng = np.random.default_rng(0)
    a = stats.beta(1 + k_a, 1 + n_a - k_a).rvs(400_000, random_state=rng)
    b = stats.beta(1 + k_b, 1 + n_b - k_b).rvs(400_000, random_state=rng)
    got = beta_binomial_exceedance(*counts).p_exceed
    assert got == pytest.approx(float(np.mean(b > a)), abs=4e-3)
    assert got == pytest.approx(beta_binomial_exceedance(*counts, method="quadrature").p_exceed, abs=1e-9)


def test_exceedance_complement():
    p = beta_binomial_exceedance(2, 30, 5, 25).p_exceed
    q = beta_binomial_exceedance(5, 25, 2, 30).p_exceed
    assert p + q == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("bad", [(-1, 5, 1, 5), (6, 5, 1, 5), (1, 0, 1, 5), (1.0, 5, 1, 5)])
def test_exceedance_validates_counts(bad):
    with pytest.raises(ValueError):
        beta_binomial_exceedance(*bad)
