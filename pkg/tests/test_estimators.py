from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwr.dataset import ColumnTable
from rwr.design import ResidualizationPlan, build_design, residualize, standard_term_sets
from rwr.estimators import (
    MED_METHODS,
    TV_METHODS,
    EffectReport,
    MediationSpec,
    TimeVaryingSpec,
    cde_label,
    estimate_conventional,
    estimate_g,
    estimate_iptw,
    estimate_mediation_g,
    estimate_mediation_rwr,
    estimate_rwr,
    iptw_weights,
)
from rwr.exceptions import DataError, EstimationError, RankDeficiencyWarning, SpecError
from rwr.montecarlo import MediationParams, mediation_spec, simulate_mediation_dataset
from rwr.numerics import RngStream, solve_least_squares

from conftest import TV, replace_column, tv_table
from oracles import normal_equations

ALL_TV = {
    **TV_METHODS,
    "rwr-saturated": lambda t, s: estimate_rwr(t, s, saturated=True),
}


def noiseless(table: ColumnTable, y) -> ColumnTable:
    return replace_column(table, "y", y)


class TestNoiselessRecovery:
    @pytest.mark.parametrize("method", sorted(ALL_TV))
    def test_additive_cte(self, method):
        t = tv_table(seed=2, n=300)
        t = noiseless(t, 0.2 * t["a1"] + 0.3 * t["a2"])
        r = ALL_TV[method](t, TV)
        assert r.cte == pytest.approx(0.5, abs=1e-8)
        assert r.dte == pytest.approx(0.2, abs=1e-8)
        assert r.pte_given_a1_0 == pytest.approx(0.3, abs=1e-8)
        assert r.ine == pytest.approx(0.0, abs=1e-8)

    @pytest.mark.parametrize("method", sorted(ALL_TV))
    def test_constant_outcome(self, method):
        t = noiseless(tv_table(seed=4, n=200), np.full(200, 3.0))
        r = ALL_TV[method](t, TV)
        for v in r.values().values():
            assert v == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize(
        "method,terms",
        [("conventional", "conventional"), ("rwr", "rwr-plain"), ("rwr-interact", "rwr-interact")],
    )
    def test_own_design_columns(self, method, terms):
        t = tv_table(seed=6, n=250)
        plan = ResidualizationPlan.two_period(["c1"], ["c2"], ["a1"])
        rt = residualize(t, plan)
        X = build_design(rt, standard_term_sets(terms, TV.policy()))
        beta = np.random.default_rng(1).normal(size=X.n_cols)
        coef = dict(zip(X.labels, beta))
        r = TV_METHODS[method](noiseless(t, X.values @ beta), TV)
        assert r.dte == pytest.approx(coef["a1"], abs=1e-8)
        assert r.pte_given_a1_0 == pytest.approx(coef["a2"], abs=1e-8)
        assert r.pte_given_a1_1 == pytest.approx(coef["a2"] + coef["a1:a2"], abs=1e-8)

    def test_g_own_design_columns(self):
        # Outcome built from the step-1 columns with an a1 effect that
        # step 2 can see once the proximal part is removed.
        t = tv_table(seed=8, n=400)
        y = 0.7 + 0.25 * t["c1"] + 0.4 * t["a1"] - 0.3 * t["c2"] + 0.35 * t["a2"] - 0.15 * t["a1"] * t["a2"]
        r = estimate_g(noiseless(t, y), TV)
        assert r.pte_given_a1_0 == pytest.approx(0.35, abs=1e-8)
        assert r.pte_given_a1_1 == pytest.approx(0.20, abs=1e-8)

    def test_iptw_own_design_columns(self):
        t = tv_table(seed=9, n=300)
        y = 1.0 + 0.4 * t["a1"] - 0.2 * t["a2"] + 0.5 * t["a1"] * t["a2"]
        r = estimate_iptw(noiseless(t, y), TV)
        assert (r.dte, r.pte_given_a1_0, r.pte_given_a1_1) == pytest.approx((0.4, -0.2, 0.3), abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), method=st.sampled_from(sorted(ALL_TV)))
def test_report_identities_exact(seed, method):
    t = tv_table(seed=seed, n=150, gamma=0.4, theta=0.3)
    r = ALL_TV[method](t, TV)
    assert r.cte == r.dte + r.pte_given_a1_1
    assert r.ine == r.pte_given_a1_1 - r.pte_given_a1_0


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 10**6),
    method=st.sampled_from(sorted(ALL_TV)),
    which=st.sampled_from(["c1", "c2"]),
    scale=st.sampled_from([-2.5, -1.0, 0.01, 3.0, 100.0]),
    shift=st.sampled_from([0.0, -7.0, 0.5, 1000.0]),
)
def test_confounder_affine_invariance(seed, method, which, scale, shift):
    t = tv_table(seed=seed, n=300, gamma=0.3, theta=0.2)
    u = replace_column(t, which, scale * t[which] + shift)
    a = ALL_TV[method](t, TV).values()
    b = ALL_TV[method](u, TV).values()
    for k in a:
        assert abs(a[k] - b[k]) < 1e-8


class TestIptw:
    def test_numerator_denominator_gives_unit_weights(self):
        t = tv_table(seed=11, n=400)
        w = iptw_weights(t, TV, denominator="numerator")
        np.testing.assert_array_equal(w, 1.0)
        r = estimate_iptw(t, TV, denominator="numerator")
        X = np.column_stack([np.ones(400), t["a1"], t["a2"], t["a1"] * t["a2"]])
        b = normal_equations(X, t["y"])
        assert r.dte == pytest.approx(b[1], abs=1e-10)
        assert r.pte_given_a1_0 == pytest.approx(b[2], abs=1e-10)
        assert r.ine == pytest.approx(b[3], abs=1e-10)

    def test_weights_stabilized(self):
        t = tv_table(seed=12, n=5000, gamma=0.3)
        w = iptw_weights(t, TV)
        assert np.all(w > 0)
        assert w.mean() == pytest.approx(1.0, abs=0.05)

    def test_rejects_continuous(self):
        t = tv_table(seed=1, n=100)
        spec = TimeVaryingSpec("y", "a1", "a2", ("c1",), ("c2",), treatment_kind="continuous")
        with pytest.raises(SpecError, match="binary"):
            estimate_iptw(t, spec)
        t2 = replace_column(t, "a2", t["a2"] + 0.1 * t["c1"])
        with pytest.raises(SpecError, match="non-binary"):
            estimate_iptw(t2, TV)

    def test_trimming(self):
        t = tv_table(seed=13, n=500, gamma=0.5)
        r = estimate_iptw(t, TV, trim_quantile=0.01)
        full = estimate_iptw(t, TV)
        assert r.diagnostics["weights"]["max"] <= full.diagnostics["weights"]["max"]
        with pytest.raises(SpecError):
            estimate_iptw(t, TV, trim_quantile=0.7)

    def test_separation_is_an_estimation_error(self):
        t = tv_table(seed=14, n=200)
        a1 = (t["c1"] > 0).astype(float)
        with pytest.raises(EstimationError, match="converge"):
            estimate_iptw(replace_column(t, "a1", a1), TV)

    def test_diagnostics(self):
        r = estimate_iptw(tv_table(seed=15, n=300), TV)
        assert set(r.diagnostics["probit"]) == {"a1 numerator", "a2 numerator", "a1 denominator", "a2 denominator"}
        assert all(v["converged"] for v in r.diagnostics["probit"].values())


class TestOthers:
    def test_conventional_matches_oracle(self):
        t = tv_table(seed=21, n=300)
        r = estimate_conventional(t, TV)
        X = np.column_stack([np.ones(300), t["c1"], t["a1"], t["c2"], t["a2"], t["a1"] * t["a2"]])
        b = normal_equations(X, t["y"])
        assert r.dte == pytest.approx(b[2], abs=1e-9)
        assert r.pte_given_a1_0 == pytest.approx(b[4], abs=1e-9)
        assert r.cte == pytest.approx(b[2] + b[4] + b[5], abs=1e-9)

    def test_rwr_matches_hand_rolled(self):
        t = tv_table(seed=22, n=300)
        c1r = t["c1"] - t["c1"].mean()
        Z = np.column_stack([np.ones(300), t["c1"], t["a1"]])
        c2r = t["c2"] - Z @ normal_equations(Z, t["c2"])
        a1, a2 = t["a1"], t["a2"]
        X = np.column_stack([np.ones(300), c1r, a1, c2r, a2, a1 * a2, a1 * c1r, a1 * c2r, a2 * c1r, a2 * c2r])
        b = normal_equations(X, t["y"])
        r = estimate_rwr(t, TV, interactions=True)
        assert (r.dte, r.pte_given_a1_0, r.pte_given_a1_1) == pytest.approx((b[2], b[4], b[4] + b[5]), abs=1e-9)
        assert r.diagnostics["moderation"]["a2:c1__res"] == pytest.approx(b[8], abs=1e-9)

    def test_continuous_treatments_accepted(self):
        rng = np.random.default_rng(3)
        n = 400
        c1 = rng.normal(size=n)
        a1 = 0.5 * c1 + rng.normal(size=n)
        c2 = 0.5 * c1 + 0.5 * a1 + rng.normal(size=n)
        a2 = 0.3 * c2 + rng.normal(size=n)
        y = 0.2 * a1 + 0.3 * a2 + c1 + c2 + rng.normal(size=n)
        t = ColumnTable({"c1": c1, "a1": a1, "c2": c2, "a2": a2, "y": y})
        spec = TimeVaryingSpec("y", "a1", "a2", ("c1",), ("c2",), "continuous")
        for name in ("conventional", "rwr", "rwr-interact"):
            assert np.isfinite(TV_METHODS[name](t, spec).cte)
        # Linear propensities lie in the span of the confounders and are dropped.
        with pytest.warns(RankDeficiencyWarning, match="__ps1"):
            r = estimate_g(noiseless(t, 0.2 * a1 + 0.3 * a2), spec)
        assert r.cte == pytest.approx(0.5, abs=1e-8)
        assert "g step 1" in r.diagnostics["dropped_columns"]

    def test_spec_validation(self):
        with pytest.raises(SpecError):
            TimeVaryingSpec("y", "a1", "a1")
        with pytest.raises(SpecError):
            TimeVaryingSpec("y", "a1", "a2", ("c1",), ("c1",))
        with pytest.raises(SpecError):
            TimeVaryingSpec("y", "a1", "a2", treatment_kind="ordinal")
        with pytest.raises(SpecError):
            MediationSpec("y", "d", "m", cde_mediator_value=float("inf"))

    def test_missing_columns(self):
        t = tv_table(seed=1, n=50).select(["a1", "a2", "y", "c1"])
        with pytest.raises(DataError, match="c2"):
            estimate_rwr(t, TV)

    def test_effect_column_collinear(self):
        t = tv_table(seed=1, n=100)
        t = replace_column(t, "a2", t["a1"].copy())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(EstimationError, match="collinear"):
                estimate_conventional(t, TV)

    def test_report_helpers(self):
        r = EffectReport.time_varying("x", 0.1, 0.2, 0.3, {})
        assert list(r.values()) == ["dte", "pte_given_a1_0", "pte_given_a1_1", "cte", "ine"]
        assert [r.label(k) for k in r.values()] == ["DTE", "PTE(0,1)", "PTE(1,1)", "CTE", "INE"]
        assert cde_label(0.5) == "CDE(1,0.5)"
        s = r.with_inference({"cte": 0.1}, {"cte": 0.5})
        assert s.se == {"cte": 0.1} and r.se == {}


def med_table(n=2000, seed=1, params=None, **overrides):
    return simulate_mediation_dataset(params or MediationParams(**overrides), n, RngStream(seed, 0, 0))


class TestMediation:
    SPEC = mediation_spec(0.5)

    @pytest.mark.parametrize("method", sorted(MED_METHODS))
    def test_noiseless_additive(self, method):
        rng = np.random.default_rng(2)
        n = 500
        x = rng.normal(size=n)
        d = (rng.uniform(size=n) < 0.5).astype(float)
        z = 0.5 * x + 0.5 * d + rng.normal(size=n)
        m = rng.normal(size=n)
        t = ColumnTable({"x": x, "d": d, "z": z, "m": m, "y": 0.1 * d + 0.2 * m})
        for mval in (0.0, 0.5, 3.0):
            r = MED_METHODS[method](t, mediation_spec(mval))
            assert r.cde == pytest.approx(0.1, abs=1e-8)
        if method != "g":
            # m independent of d: only the direct path carries an effect.
            assert r.total_effect == pytest.approx(0.1, abs=0.03)

    @pytest.mark.parametrize("interactions", [False, True])
    def test_cde_at_zero_is_treatment_coefficient(self, interactions):
        t = med_table(seed=3)
        r = estimate_mediation_rwr(t, mediation_spec(0.0), interactions)
        r5 = estimate_mediation_rwr(t, mediation_spec(0.5), interactions)
        assert r.cde_mediator_value == 0.0
        # The d:m coefficient carries the difference.
        assert r5.cde != r.cde
        plan = ResidualizationPlan.two_period(["x"], ["z"], ["d"])
        rt = residualize(t, plan)
        X = build_design(rt, standard_term_sets("med-rwr-interact" if interactions else "med-rwr-plain", mediation_spec().policy()))
        fit = solve_least_squares(X, rt["y"])
        assert r.cde == fit["d"]

    def test_label(self):
        r = estimate_mediation_g(med_table(seed=4), self.SPEC)
        assert r.label("cde") == "CDE(1,0.5)"
        assert r.label("total_effect") == "TotalEffect"
        assert list(r.values()) == ["total_effect", "cde"]

    def test_null_model(self):
        t = med_table(n=20000, seed=5, params=MediationParams.null())
        for name, est in MED_METHODS.items():
            r = est(t, self.SPEC)
            assert abs(r.cde) < 0.05, name
            assert abs(r.total_effect) < 0.05, name

    def test_analytic_truth(self):
        p = MediationParams()
        assert p.cde(1, 0.5) == pytest.approx(0.25)
        assert p.total_effect() == pytest.approx(0.45)
        assert MediationParams(moderated=True).cde(1, 0.5) == pytest.approx(0.25)

    def test_g_recovers_without_moderation(self):
        t = med_table(n=100_000, seed=8675309)
        r = estimate_mediation_g(t, self.SPEC)
        assert abs(r.cde - 0.25) < 0.02

    def test_moderation_diagnostics_recover_strength(self):
        t = med_table(n=100_000, seed=6, moderated=True)
        mod = estimate_mediation_rwr(t, self.SPEC, interactions=True).diagnostics["moderation"]
        assert mod["d:x__res"] == pytest.approx(0.5, abs=0.03)
        assert mod["m:x__res"] == pytest.approx(0.5, abs=0.03)
        assert mod["m:z__res"] == pytest.approx(0.5, abs=0.03)
