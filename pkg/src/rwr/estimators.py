"""Estimators of marginal effects for a two-period treatment and for mediation.

Time-varying estimators take a :class:`TimeVaryingSpec` and report the
distal effect ``DTE = E[Y(1,0) - Y(0,0)]``, the proximal effects
``PTE(a1, 1) = E[Y(a1,1) - Y(a1,0)]`` for ``a1 = 0, 1``, the cumulative
effect ``CTE = DTE + PTE(1,1)`` and the interaction ``INE = PTE(1,1) - PTE(0,1)``.

Mediation estimators take a :class:`MediationSpec` and report the total
effect and the controlled direct effect ``CDE(1, m)`` at a caller-supplied
mediator value.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Literal, Sequence

import numpy as np

from .dataset import ColumnTable, TreatmentKind, validate_treatment_column
from .design import (
    ResidualizationPlan,
    Term,
    TermPolicy,
    build_design,
    residualize,
    standard_term_sets,
    term,
)
from .exceptions import EstimationError, PositivityWarning, RankDeficiencyWarning, SpecError
from .numerics import (
    DesignMatrix,
    LeastSquaresFit,
    ProbitFit,
    fit_probit,
    solve_least_squares,
)

TV_ESTIMANDS = ("dte", "pte_given_a1_0", "pte_given_a1_1", "cte", "ine")
MED_ESTIMANDS = ("total_effect", "cde")

ESTIMAND_LABELS = {
    "dte": "DTE",
    "pte_given_a1_0": "PTE(0,1)",
    "pte_given_a1_1": "PTE(1,1)",
    "cte": "CTE",
    "ine": "INE",
    "total_effect": "TotalEffect",
}

# Internal names for propensity columns; the double underscore keeps them
# clear of user columns.
_PS1, _PS2 = "__ps1", "__ps2"


@dataclass(frozen=True)
class TimeVaryingSpec:
    """Column roles for data ordered ``{C1, A1, C2, A2, Y}``."""

    outcome: str
    treatment1: str
    treatment2: str
    baseline_confounders: tuple[str, ...] = ()
    post_confounders: tuple[str, ...] = ()
    treatment_kind: TreatmentKind = "binary"

    def __post_init__(self) -> None:
        object.__setattr__(self, "baseline_confounders", tuple(self.baseline_confounders))
        object.__setattr__(self, "post_confounders", tuple(self.post_confounders))
        roles = [self.outcome, self.treatment1, self.treatment2, *self.baseline_confounders, *self.post_confounders]
        if len(set(roles)) != len(roles):
            raise SpecError(f"variable roles overlap: {roles}")
        if self.treatment_kind not in ("binary", "continuous"):
            raise SpecError(f"unknown treatment kind {self.treatment_kind!r}")

    @property
    def columns(self) -> list[str]:
        return [self.outcome, self.treatment1, self.treatment2, *self.baseline_confounders, *self.post_confounders]

    def policy(self) -> TermPolicy:
        return TermPolicy(
            a1=self.treatment1,
            a2=self.treatment2,
            c1=self.baseline_confounders,
            c2=self.post_confounders,
            ps1=_PS1,
            ps2=_PS2,
        )


@dataclass(frozen=True)
class MediationSpec:
    """Column roles for data ordered ``{X, D, Z, M, Y}``."""

    outcome: str
    treatment: str
    mediator: str
    baseline_confounders: tuple[str, ...] = ()
    posttreatment_confounders: tuple[str, ...] = ()
    cde_mediator_value: float = 0.0
    treatment_kind: TreatmentKind = "binary"

    def __post_init__(self) -> None:
        object.__setattr__(self, "baseline_confounders", tuple(self.baseline_confounders))
        object.__setattr__(self, "posttreatment_confounders", tuple(self.posttreatment_confounders))
        roles = [self.outcome, self.treatment, self.mediator, *self.baseline_confounders, *self.posttreatment_confounders]
        if len(set(roles)) != len(roles):
            raise SpecError(f"variable roles overlap: {roles}")
        if not np.isfinite(self.cde_mediator_value):
            raise SpecError("cde_mediator_value must be finite")

    @property
    def columns(self) -> list[str]:
        return [self.outcome, self.treatment, self.mediator, *self.baseline_confounders, *self.posttreatment_confounders]

    def policy(self) -> TermPolicy:
        return TermPolicy(
            a1=self.treatment,
            c1=self.baseline_confounders,
            c2=self.posttreatment_confounders,
            mediator=self.mediator,
            ps1=_PS1,
            ps2=_PS2,
        )


def cde_label(m: float) -> str:
    return f"CDE(1,{float(m):g})"


@dataclass(frozen=True)
class EffectReport:
    """Point estimates with optional standard errors and p-values.

    Time-varying reports fill the five estimands in ``TV_ESTIMANDS``;
    mediation reports fill ``total_effect`` and ``cde``.
    """

    method: str
    dte: float | None = None
    pte_given_a1_0: float | None = None
    pte_given_a1_1: float | None = None
    cte: float | None = None
    ine: float | None = None
    total_effect: float | None = None
    cde: float | None = None
    cde_mediator_value: float | None = None
    se: dict[str, float] = field(default_factory=dict)
    p_value: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def time_varying(
        cls, method: str, dte: float, pte0: float, pte1: float, diagnostics: dict[str, Any]
    ) -> EffectReport:
        # CTE and INE are derived so both identities hold exactly in floating point.
        dte, pte0, pte1 = float(dte), float(pte0), float(pte1)
        return cls(
            method=method,
            dte=dte,
            pte_given_a1_0=pte0,
            pte_given_a1_1=pte1,
            cte=dte + pte1,
            ine=pte1 - pte0,
            diagnostics=diagnostics,
        )

    def values(self) -> dict[str, float]:
        """Estimand name to point estimate, in reporting order, skipping unset ones."""
        out = {}
        for name in TV_ESTIMANDS + MED_ESTIMANDS:
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        return out

    def label(self, name: str) -> str:
        if name == "cde":
            return cde_label(self.cde_mediator_value if self.cde_mediator_value is not None else 0.0)
        return ESTIMAND_LABELS[name]

    def with_inference(self, se: dict[str, float], p_value: dict[str, float]) -> EffectReport:
        return replace(self, se=dict(se), p_value=dict(p_value))


def _ols(X: DesignMatrix, y: np.ndarray, what: str, diagnostics: dict, weights=None) -> LeastSquaresFit:
    fit = solve_least_squares(X, y, weights)
    if fit.dropped_columns:
        diagnostics.setdefault("dropped_columns", {})[what] = list(fit.dropped_columns)
        warnings.warn(
            f"{what}: dropped collinear column(s) {list(fit.dropped_columns)}",
            RankDeficiencyWarning,
            stacklevel=3,
        )
    return fit


def _require_kept(fit: LeastSquaresFit, labels: Sequence[str], what: str) -> None:
    lost = [lbl for lbl in labels if lbl in fit.dropped_columns]
    if lost:
        raise EstimationError(f"{what}: effect column(s) {lost} are collinear with the design")


def _probit(table: ColumnTable, response: str, predictors: Sequence[str], what: str, diagnostics: dict) -> ProbitFit:
    X = build_design(table, [Term(), *(term(p) for p in predictors)])
    fit = fit_probit(X, table[response])
    diagnostics.setdefault("probit", {})[what] = {
        "converged": fit.converged,
        "iterations": fit.iterations,
        "log_likelihood": fit.log_likelihood,
    }
    if not fit.converged:
        raise EstimationError(f"probit model for {what} did not converge")
    return fit


def _propensity(
    table: ColumnTable, response: str, predictors: Sequence[str], kind: TreatmentKind, what: str, diagnostics: dict
) -> np.ndarray:
    """P(treatment = 1 | past) for binary treatments, E(treatment | past) otherwise."""
    if kind == "binary":
        return _probit(table, response, predictors, what, diagnostics).fitted_probabilities
    X = build_design(table, [Term(), *(term(p) for p in predictors)])
    return _ols(X, table[response], what, diagnostics).fitted


def _check_treatments(table: ColumnTable, names: Sequence[str], kind: TreatmentKind) -> None:
    for name in names:
        diag = validate_treatment_column(table, name, kind)
        if not diag.ok:
            raise SpecError(diag.message)


def _tv_setup(table: ColumnTable, spec: TimeVaryingSpec) -> None:
    table.require(spec.columns)
    _check_treatments(table, [spec.treatment1, spec.treatment2], spec.treatment_kind)


def _read_tv(fit: LeastSquaresFit, spec: TimeVaryingSpec, what: str) -> tuple[float, float, float]:
    a1 = term(spec.treatment1).label
    a2 = term(spec.treatment2).label
    a12 = term(spec.treatment1, spec.treatment2).label
    _require_kept(fit, [a1, a2, a12], what)
    b_a2, b_a12 = fit[a2], fit[a12]
    return fit[a1], b_a2, b_a2 + b_a12


def estimate_conventional(table: ColumnTable, spec: TimeVaryingSpec) -> EffectReport:
    """OLS of the outcome on treatments, raw confounders and ``a1:a2``."""
    _tv_setup(table, spec)
    diagnostics: dict[str, Any] = {}
    X = build_design(table, standard_term_sets("conventional", spec.policy()))
    fit = _ols(X, table[spec.outcome], "outcome model", diagnostics)
    dte, pte0, pte1 = _read_tv(fit, spec, "outcome model")
    return EffectReport.time_varying("conventional", dte, pte0, pte1, diagnostics)


def iptw_weights(
    table: ColumnTable,
    spec: TimeVaryingSpec,
    *,
    denominator: Literal["confounders", "numerator"] = "confounders",
    diagnostics: dict | None = None,
) -> np.ndarray:
    """Stabilized inverse-probability-of-treatment weights from four probit fits.

    Numerators model ``a1 ~ 1`` and ``a2 ~ a1``; denominators add the
    confounder history (``a1 ~ c1``, ``a2 ~ c1 + a1 + c2``). With
    ``denominator="numerator"`` the denominator fits are the numerator fits
    themselves and every weight is exactly 1.
    """
    diagnostics = {} if diagnostics is None else diagnostics
    a1n, a2n = spec.treatment1, spec.treatment2
    c1, c2 = spec.baseline_confounders, spec.post_confounders
    num1 = _probit(table, a1n, [], "a1 numerator", diagnostics)
    num2 = _probit(table, a2n, [a1n], "a2 numerator", diagnostics)
    if denominator == "numerator":
        den1, den2 = num1, num2
    elif denominator == "confounders":
        den1 = _probit(table, a1n, list(c1), "a1 denominator", diagnostics)
        den2 = _probit(table, a2n, [*c1, a1n, *c2], "a2 denominator", diagnostics)
    else:
        raise SpecError(f"unknown denominator option {denominator!r}")
    if den1.at_clamp or den2.at_clamp:
        diagnostics["positivity_warning"] = True
        warnings.warn(
            "denominator treatment probabilities reached the clamp boundary",
            PositivityWarning,
            stacklevel=2,
        )
    w = np.ones(table.n_rows)
    for a, num, den in ((table[a1n], num1, den1), (table[a2n], num2, den2)):
        pn, pd = num.fitted_probabilities, den.fitted_probabilities
        w = w * np.where(a == 1.0, pn / pd, (1.0 - pn) / (1.0 - pd))
    return w


def estimate_iptw(
    table: ColumnTable,
    spec: TimeVaryingSpec,
    *,
    denominator: Literal["confounders", "numerator"] = "confounders",
    trim_quantile: float | None = None,
) -> EffectReport:
    """Weighted least squares of the outcome on ``{1, a1, a2, a1:a2}`` with stabilized weights.

    ``trim_quantile=q`` clips weights to their ``[q, 1-q]`` quantiles; off
    by default.
    """
    if spec.treatment_kind != "binary":
        raise SpecError("IPTW requires binary treatments; continuous treatments are not supported")
    _tv_setup(table, spec)
    diagnostics: dict[str, Any] = {}
    w = iptw_weights(table, spec, denominator=denominator, diagnostics=diagnostics)
    if trim_quantile is not None:
        if not 0.0 < trim_quantile < 0.5:
            raise SpecError("trim_quantile must lie in (0, 0.5)")
        lo, hi = np.quantile(w, [trim_quantile, 1.0 - trim_quantile])
        w = np.clip(w, lo, hi)
    diagnostics["weights"] = {
        "mean": float(w.mean()),
        "min": float(w.min()),
        "max": float(w.max()),
        "sd": float(w.std(ddof=1)) if w.size > 1 else 0.0,
    }
    X = build_design(table, standard_term_sets("iptw", spec.policy()))
    fit = _ols(X, table[spec.outcome], "weighted outcome model", diagnostics, weights=w)
    dte, pte0, pte1 = _read_tv(fit, spec, "weighted outcome model")
    return EffectReport.time_varying("iptw", dte, pte0, pte1, diagnostics)


def estimate_g(table: ColumnTable, spec: TimeVaryingSpec) -> EffectReport:
    """Two-step g-estimation of a no-moderation nested mean model.

    Step 1 regresses the outcome on raw confounders, the propensity of each
    treatment, ``a1:ps2``, the treatments and ``a1:a2``; its ``a2`` and
    ``a1:a2`` coefficients are the proximal effects. Step 2 removes the
    estimated proximal effect from the outcome and regresses what is left on
    ``{1, c1, ps1, a1}``; the ``a1`` coefficient is the distal effect.
    """
    _tv_setup(table, spec)
    diagnostics: dict[str, Any] = {}
    a1n, a2n = spec.treatment1, spec.treatment2
    c1, c2 = spec.baseline_confounders, spec.post_confounders
    ps1 = _propensity(table, a1n, list(c1), spec.treatment_kind, "a1 propensity", diagnostics)
    ps2 = _propensity(table, a2n, [*c1, a1n, *c2], spec.treatment_kind, "a2 propensity", diagnostics)
    aug = table.with_columns({_PS1: ps1, _PS2: ps2})
    policy = spec.policy()

    X1 = build_design(aug, standard_term_sets("g-step1", policy))
    fit1 = _ols(X1, aug[spec.outcome], "g step 1", diagnostics)
    a2 = term(a2n).label
    a12 = term(a1n, a2n).label
    _require_kept(fit1, [a2, a12], "g step 1")
    b_a2, b_a12 = fit1[a2], fit1[a12]
    a1v, a2v = aug[a1n], aug[a2n]
    h = aug[spec.outcome] - a2v * (b_a2 + b_a12 * a1v)

    X2 = build_design(aug, standard_term_sets("g-step2", policy))
    fit2 = _ols(X2, h, "g step 2", diagnostics)
    a1 = term(a1n).label
    _require_kept(fit2, [a1], "g step 2")
    return EffectReport.time_varying("g", fit2[a1], b_a2, b_a2 + b_a12, diagnostics)


def _moderation_coefficients(fit: LeastSquaresFit, treatments: Sequence[str]) -> dict[str, float]:
    out = {}
    for label, coef in fit.coefficients.items():
        parts = label.split(":")
        if len(parts) > 1 and any(p in treatments for p in parts) and any(p.endswith("__res") for p in parts):
            out[label] = coef
    return out


def estimate_rwr(
    table: ColumnTable,
    spec: TimeVaryingSpec,
    interactions: bool = False,
    *,
    saturated: bool = False,
    binary_link: Literal["linear", "probit"] = "linear",
) -> EffectReport:
    """Regression-with-residuals.

    Stage 1 mean-centers the baseline confounders and residualizes the post
    confounders on the baseline confounders and ``a1``. Stage 2 regresses
    the outcome on the treatments, ``a1:a2`` and the residualized
    confounders; ``interactions=True`` adds every treatment by residualized
    confounder product and ``saturated=True`` (one confounder per period)
    fits the fully saturated model. Effects come from the treatment
    coefficients only; the moderation coefficients are returned in
    ``diagnostics["moderation"]``.
    """
    _tv_setup(table, spec)
    diagnostics: dict[str, Any] = {}
    a1n, a2n = spec.treatment1, spec.treatment2
    plan = ResidualizationPlan.two_period(
        spec.baseline_confounders, spec.post_confounders, [a1n], binary_link=binary_link
    )
    rt = residualize(table, plan)
    if saturated:
        method = "rwr-saturated"
    else:
        method = "rwr-interact" if interactions else "rwr-plain"
    X = build_design(rt, standard_term_sets(method, spec.policy()), plan=plan, treatments=[a1n, a2n])
    fit = _ols(X, rt[spec.outcome], "outcome model", diagnostics)
    dte, pte0, pte1 = _read_tv(fit, spec, "outcome model")
    diagnostics["moderation"] = _moderation_coefficients(fit, [a1n, a2n])
    name = "rwr" if method == "rwr-plain" else method
    return EffectReport.time_varying(name, dte, pte0, pte1, diagnostics)


def _med_setup(table: ColumnTable, spec: MediationSpec) -> None:
    table.require(spec.columns)
    _check_treatments(table, [spec.treatment], spec.treatment_kind)


def estimate_mediation_rwr(table: ColumnTable, spec: MediationSpec, interactions: bool = False) -> EffectReport:
    """Total effect and ``CDE(1, m)`` by regression-with-residuals.

    Baseline confounders are mean-centered and post-treatment confounders
    residualized on the baseline confounders and the treatment. The CDE is
    ``b_d + b_{d:m} * m`` from the outcome model; the total effect is the
    treatment coefficient from a regression on the treatment and the
    residualized baseline confounders (plus their products with treatment
    when ``interactions`` is set).
    """
    _med_setup(table, spec)
    diagnostics: dict[str, Any] = {}
    d, m = spec.treatment, spec.mediator
    plan = ResidualizationPlan.two_period(spec.baseline_confounders, spec.posttreatment_confounders, [d])
    rt = residualize(table, plan)
    policy = spec.policy()
    suffix = "interact" if interactions else "plain"

    Xt = build_design(rt, standard_term_sets(f"med-total-{suffix}", policy), plan=plan, treatments=[d])
    fit_t = _ols(Xt, rt[spec.outcome], "total effect model", diagnostics)
    d_lbl, dm_lbl = term(d).label, term(d, m).label
    _require_kept(fit_t, [d_lbl], "total effect model")

    Xc = build_design(rt, standard_term_sets(f"med-rwr-{suffix}", policy), plan=plan, treatments=[d, m])
    fit_c = _ols(Xc, rt[spec.outcome], "CDE model", diagnostics)
    _require_kept(fit_c, [d_lbl, dm_lbl], "CDE model")
    diagnostics["moderation"] = _moderation_coefficients(fit_c, [d, m])
    mval = float(spec.cde_mediator_value)
    return EffectReport(
        method="med-rwr-interact" if interactions else "med-rwr",
        total_effect=float(fit_t[d_lbl]),
        cde=float(fit_c[d_lbl] + fit_c[dm_lbl] * mval),
        cde_mediator_value=mval,
        diagnostics=diagnostics,
    )


def estimate_mediation_g(table: ColumnTable, spec: MediationSpec) -> EffectReport:
    """Total effect and ``CDE(1, m)`` by g-estimation of a no-moderation model.

    The treatment propensity ``ps_d`` is a probit on the baseline
    confounders (a linear fit for continuous treatments) and the mediator
    propensity ``ps_m`` a linear fit on the baseline confounders, treatment
    and post-treatment confounders. Step 1 regresses the outcome on
    ``{1, d, X, Z, d:m, d:ps_m, m}``; the outcome is then demediated,
    ``h = y - m b_m - d m b_{d:m}``, and regressed on ``{1, d, X, ps_d}``.
    The total effect is the ``d`` coefficient from a regression of the
    outcome on ``{1, d, X, ps_d}``.
    """
    _med_setup(table, spec)
    diagnostics: dict[str, Any] = {}
    d, m = spec.treatment, spec.mediator
    xs, zs = spec.baseline_confounders, spec.posttreatment_confounders
    ps_d = _propensity(table, d, list(xs), spec.treatment_kind, "treatment propensity", diagnostics)
    Xm = build_design(table, [Term(), *(term(v) for v in (*xs, d, *zs))])
    ps_m = _ols(Xm, table[m], "mediator propensity", diagnostics).fitted
    aug = table.with_columns({_PS1: ps_d, _PS2: ps_m})
    policy = spec.policy()

    X1 = build_design(aug, standard_term_sets("med-g-step1", policy))
    fit1 = _ols(X1, aug[spec.outcome], "g step 1", diagnostics)
    m_lbl, dm_lbl, d_lbl = term(m).label, term(d, m).label, term(d).label
    _require_kept(fit1, [m_lbl, dm_lbl], "g step 1")
    b_m, b_dm = fit1[m_lbl], fit1[dm_lbl]
    h = aug[spec.outcome] - aug[m] * b_m - aug[d] * aug[m] * b_dm

    X2 = build_design(aug, standard_term_sets("med-g-step2", policy))
    fit2 = _ols(X2, h, "g step 2", diagnostics)
    _require_kept(fit2, [d_lbl], "g step 2")
    fit0 = _ols(X2, aug[spec.outcome], "total effect model", diagnostics)
    _require_kept(fit0, [d_lbl], "total effect model")
    mval = float(spec.cde_mediator_value)
    return EffectReport(
        method="med-g",
        total_effect=float(fit0[d_lbl]),
        cde=float(fit2[d_lbl] + b_dm * mval),
        cde_mediator_value=mval,
        diagnostics=diagnostics,
    )


TV_METHODS: dict[str, Callable[[ColumnTable, TimeVaryingSpec], EffectReport]] = {
    "conventional": estimate_conventional,
    "iptw": estimate_iptw,
    "g": estimate_g,
    "rwr": lambda t, s: estimate_rwr(t, s, interactions=False),
    "rwr-interact": lambda t, s: estimate_rwr(t, s, interactions=True),
}

MED_METHODS: dict[str, Callable[[ColumnTable, MediationSpec], EffectReport]] = {
    "rwr": lambda t, s: estimate_mediation_rwr(t, s, interactions=False),
    "rwr-interact": lambda t, s: estimate_mediation_rwr(t, s, interactions=True),
    "g": estimate_mediation_g,
}
