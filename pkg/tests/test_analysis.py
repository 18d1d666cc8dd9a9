import math

import numpy as np
import pytest
from scipy import stats

from llm_jury.analysis import (
    disagreement_curve,
    fit_random_intercept,
    gaussian_kde,
    human_stability,
    rank_agents,
    same_provider_bias,
    severe_error_flags,
    severe_overlap,
    silverman_bandwidth,
    stability_summary,
    trapezoid_mass,
    ward_disagreement_data,
)
from llm_jury.analysis.bias import bias_design, bias_from_arrays
from llm_jury.errors import ConvergenceError, EmptySampleError, UndefinedStatisticError
from llm_jury.records import JURY_EVALUATOR, EvaluationRecord, EvaluatorId, PairedScores, ScoreVector
from llm_jury.resampling import BootstrapSpec
from llm_jury.synthetic import bias_sample, logistic_bin_truth, logistic_disagreement, ranking_records

PRIMARY = EvaluatorId.primary()

# statsmodels MixedLM (REML, y ~ same + C(judge), groups = case) on
# bias_sample(42, beta=0.3, n_cases=120).
MIXEDLM_BETA = 0.2685651381068051
MIXEDLM_SE = 0.03445482694654651
MIXEDLM_CASE_VAR = 0.7768096898146389
MIXEDLM_RESID_VAR = 0.2849124239799521
MIXEDLM_REML_LLF = -1055.6396683726425


# ---------------------------------------------------------------- severe errors

def test_severe_flags_on_unrounded_jury_means():
    p = PairedScores(("c1", "c2", "c3", "c4"), ("a",) * 4, np.array([2.0, 2.0, 1.0, 3.0]),
                     np.array([4.99, 5.0, 3.9, 5.0]))
    rep = severe_error_flags(p)
    assert rep.n == 3 and rep.k == 1
    assert rep.flagged_keys() == [("c2", "a")]
    assert rep.flag_map() == {("c1", "a"): False, ("c2", "a"): True, ("c3", "a"): False}
    # A mean of three judges can land a rounding error below the gap.
    assert severe_error_flags([(1.0, (4.1 + 3.9 + 4.0) / 3)]).k == 1


def test_severe_rate_undefined_without_harmful_answers():
    assert severe_error_flags([(4, 1), (5, 5)]).rate is None


def test_overlap_majority_and_union():
    flags = {
        "j1": {"c1": True, "c2": True, "c3": False},
        "j2": {"c1": True, "c2": False, "c3": False},
        "j3": {"c1": False, "c2": False, "c3": True},
        "rescore": {"c2": True},
    }
    table = severe_overlap(flags, jury_members=("j1", "j2", "j3"))
    assert table.cases == ("c1", "c2", "c3")
    assert table.majority == {"c1": True, "c2": False, "c3": False}
    assert (table.union_count, table.majority_count) == (3, 1)
    assert table.grid[("c3", "rescore")] is None


# ---------------------------------------------------------------- ranking

def test_ranking_orders_by_mean_and_reports_tau():
    records, truth = ranking_records(3, n_agents=5, gap=0.5, n_cases=60)
    ref = [EvaluationRecord("t", a, PRIMARY, ScoreVector(v, v, v, v), derived=True) for a, v in truth.items()]
    r = rank_agents(records + ref, JURY_EVALUATOR, top_k=5, spec=BootstrapSpec(200, 0.68, seed=1))
    assert r.agents == tuple(sorted(truth, key=truth.get, reverse=True))
    assert r.tau == pytest.approx(1.0)
    assert all(lo <= r.means[a] <= hi for a, (lo, hi) in r.intervals.items())
    assert r.level == 0.68
    with pytest.raises(ValueError, match="top_k"):
        rank_agents(records + ref, JURY_EVALUATOR, top_k=6)


def test_ranking_top_k_uses_reference_counts_and_exclusions():
    records, truth = ranking_records(4, n_agents=4, n_cases=20)
    ref = [EvaluationRecord(f"t{i}", a, PRIMARY, ScoreVector(3, 3, 3, 3))
           for a in truth for i in range(int(a[-1]) + 1)]
    r = rank_agents(records + ref, JURY_EVALUATOR, top_k=2, spec=BootstrapSpec(50), exclude=("agent3",))
    assert set(r.agents) == {"agent2", "agent1"}
    assert r.tau is None and "ties" in r.tau_error
    assert "agent3" in r.excluded


# ---------------------------------------------------------------- disagreement

def test_disagreement_bins_recover_logistic_truth():
    x, d = logistic_disagreement(0, n=20_000)
    curve = disagreement_curve(x, d)
    np.testing.assert_allclose(curve.probability, logistic_bin_truth(), atol=0.02)
    assert curve.pearson_r < -0.95
    assert curve.slope < 0
    assert curve.counts.sum() == x.size and curve.n_agree + curve.n_disagree == x.size


def test_disagreement_last_bin_closed_and_constant_probability():
    curve = disagreement_curve([1.0, 2.0, 5.0, 4.5], [True, True, True, True])
    np.testing.assert_array_equal(curve.counts, [1, 1, 0, 2])
    assert np.isnan(curve.probability[2])
    assert curve.pearson_r is None and "constant" in curve.r_error
    assert curve.kde_agree is None
    with pytest.raises(EmptySampleError):
        disagreement_curve([1.2, 1.4], [True, False])


def test_kde_matches_brute_force_and_integrates_to_one():
    rng = np.random.default_rng(5)
    x = np.clip(rng.normal(3.5, 0.8, 150), 1, 5)
    curve = gaussian_kde(x)
    assert curve.grid.size == 256
    h = curve.bandwidth
    iqr = np.subtract(*np.percentile(x, [75, 25])) / 1.34
    assert h == pytest.approx(0.9 * min(np.std(x, ddof=1), iqr) * x.size ** -0.2)
    brute = np.array([sum(stats.norm.pdf((g - xi) / h) for xi in x) / (x.size * h) for g in curve.grid])
    np.testing.assert_allclose(curve.density, brute, rtol=1e-10, atol=1e-15)
    assert abs(trapezoid_mass(curve) - 1.0) < 1e-3


def test_bandwidth_edge_cases():
    with pytest.raises(UndefinedStatisticError):
        silverman_bandwidth([3, 3, 3])
    # IQR of zero falls back to the standard deviation.
    assert silverman_bandwidth([3, 3, 3, 3, 5]) == pytest.approx(0.9 * np.std([3, 3, 3, 3, 5], ddof=1) * 5 ** -0.2)


def test_ward_disagreement_data():
    jury = JURY_EVALUATOR
    recs = [
        EvaluationRecord("c1", "ward", PRIMARY, ScoreVector(3, 3, None, 2), ward_agreement=False),
        EvaluationRecord("c2", "ward", PRIMARY, ScoreVector(3, 3, None, 4), ward_agreement=True),
        EvaluationRecord("c1", "ward", jury, ScoreVector(3, 3, None, 2.5), derived=True),
        EvaluationRecord("c2", "ward", jury, ScoreVector(3, 3, None, 4.5), derived=True),
        EvaluationRecord("c3", "ward", jury, ScoreVector(3, 3, None, 1.0), derived=True),
    ]
    cases, x, d = ward_disagreement_data(recs, jury)
    assert cases == ["c1", "c2"]
    np.testing.assert_array_equal(x, [2.5, 4.5])
    np.testing.assert_array_equal(d, [True, False])


# ---------------------------------------------------------------- bias

def test_random_intercept_matches_mixedlm_oracle():
    s = bias_sample(42, beta=0.3, n_cases=120)
    est = bias_from_arrays(s.scores, s.same, s.judges, s.cases)
    assert est.beta == pytest.approx(MIXEDLM_BETA, abs=1e-9)
    assert est.std_error == pytest.approx(MIXEDLM_SE, rel=1e-5)
    assert est.case_variance == pytest.approx(MIXEDLM_CASE_VAR, rel=1e-4)
    assert est.residual_variance == pytest.approx(MIXEDLM_RESID_VAR, rel=1e-5)
    assert est.restricted_loglik == pytest.approx(MIXEDLM_REML_LLF, abs=1e-5)
    assert est.ci95 == pytest.approx((est.beta - 1.959963984540054 * est.std_error,
                                      est.beta + 1.959963984540054 * est.std_error))
    assert est.n_obs == 1080 and est.n_cases == 120 and est.n_same == 360


def test_random_intercept_live_statsmodels():
    pd = pytest.importorskip("pandas")
    smf = pytest.importorskip("statsmodels.formula.api")
    s = bias_sample(7, beta=-0.2, n_cases=60)
    df = pd.DataFrame({"y": s.scores, "same": s.same.astype(float), "judge": s.judges, "case": s.cases})
    ref = smf.mixedlm("y ~ same + C(judge)", df, groups=df["case"]).fit(reml=True)
    est = bias_from_arrays(s.scores, s.same, s.judges, s.cases)
    assert est.beta == pytest.approx(ref.params["same"], abs=1e-6)
    assert est.std_error == pytest.approx(ref.bse["same"], rel=1e-4)


def test_zero_case_variance_boundary():
    rng = np.random.default_rng(1)
    n = 300
    same = np.arange(n) % 3 == 0
    y = 3 + 0.2 * same + rng.normal(0, 0.5, n)
    X, names = bias_design(same, ["j"] * n)
    est = fit_random_intercept(y, X, [f"c{i // 3}" for i in range(n)], names)
    assert est.case_variance >= 0
    assert est.beta == pytest.approx(0.2, abs=0.2)


def test_rank_deficient_design_raises_with_diagnostics():
    X = np.column_stack([np.ones(10), np.ones(10)])
    with pytest.raises(ConvergenceError) as info:
        fit_random_intercept(np.arange(10.0), X, [i // 2 for i in range(10)])
    assert info.value.diagnostics["rank"] == 1


def test_same_provider_bias_from_records():
    s = bias_sample(3, beta=0.5, n_cases=80)
    providers = ["p0", "p1", "p2"]
    recs = []
    for i, (y, same, judge, case) in enumerate(zip(s.scores, s.same, s.judges, s.cases)):
        j = int(judge[1:])
        agent_provider = providers[j] if same else providers[(j + 1 + i % 2) % 3]
        ev = EvaluatorId.judge(judge, providers[j].upper())
        recs.append(EvaluationRecord(case, f"agent{i % 9}", ev, ScoreVector(3, 3, 3, float(y)),
                                     agent_provider=agent_provider, derived=True))
    # Derived records are ignored, so flip the flag to make them raw judge scores.
    raw = [EvaluationRecord(r.case_id, r.agent_id, r.evaluator, r.scores, agent_provider=r.agent_provider)
           for r in recs]
    est = same_provider_bias(raw, "safety")
    assert est.beta == pytest.approx(0.5, abs=0.15)
    with pytest.raises(EmptySampleError):
        same_provider_bias(recs, "safety")


# ---------------------------------------------------------------- stability

def test_stability_summary_and_human_panels():
    j = EvaluatorId.judge("m", "p")
    recs = [EvaluationRecord("c1", "ward", j, ScoreVector(v, 4, None, 5), repetition=i)
            for i, v in enumerate([2, 3, 4, 3])]
    recs.append(EvaluationRecord("c2", "ward", j, ScoreVector(3, 3, None, 3)))
    rep = stability_summary(recs)
    dx = rep.lookup("m", "dx")
    assert dx.n_groups == 1
    assert dx.mean_std == pytest.approx(np.std([2, 3, 4, 3], ddof=1))
    assert dx.mean_cv == pytest.approx(np.std([2, 3, 4, 3], ddof=1) / 3)
    assert rep.lookup("m", "ddx").mean_cv == 0.0
    assert ("m",) == tuple({k[0] for k in rep.skipped})

    humans = [
        EvaluationRecord("c1", "a", PRIMARY, ScoreVector(2, 4, 3, 5)),
        EvaluationRecord("c1", "a", EvaluatorId.rescore(), ScoreVector(4, 4, 3, 5)),
    ]
    hs = human_stability(humans)
    assert hs.lookup("Human panels", "dx").mean_std == pytest.approx(math.sqrt(2))
