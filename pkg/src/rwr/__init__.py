"""Regression-with-residuals estimation of marginal effects.

Estimates distal, proximal and cumulative effects of a two-period treatment
(and controlled direct effects in mediation analysis) when confounders are
affected by earlier treatment and may also moderate its effect.
"""

__version__ = "0.1.0"

from .bootstrap import BootstrapResult, bootstrap_block, bootstrap_iid
from .dataset import ColumnTable, read_csv, validate_treatment_column, write_csv
from .design import (
    Block,
    ResidualizationPlan,
    Term,
    TermPolicy,
    build_design,
    res,
    residualize,
    standard_term_sets,
    term,
)
from .estimators import (
    EffectReport,
    MediationSpec,
    TimeVaryingSpec,
    estimate_conventional,
    estimate_g,
    estimate_iptw,
    estimate_mediation_g,
    estimate_mediation_rwr,
    estimate_rwr,
)
from .montecarlo import (
    MediationParams,
    Scenario,
    ScenarioSummary,
    run_scenario,
    run_table,
    simulate_dataset,
    simulate_mediation_dataset,
)
from .numerics import (
    DesignMatrix,
    RngStream,
    draw_bernoulli,
    draw_normal,
    fit_probit,
    solve_least_squares,
    std_normal_cdf,
    std_normal_quantile,
)

__all__ = [
    "Block",
    "BootstrapResult",
    "ColumnTable",
    "DesignMatrix",
    "EffectReport",
    "MediationParams",
    "MediationSpec",
    "ResidualizationPlan",
    "RngStream",
    "Scenario",
    "ScenarioSummary",
    "Term",
    "TermPolicy",
    "TimeVaryingSpec",
    "bootstrap_block",
    "bootstrap_iid",
    "build_design",
    "draw_bernoulli",
    "draw_normal",
    "estimate_conventional",
    "estimate_g",
    "estimate_iptw",
    "estimate_mediation_g",
    "estimate_mediation_rwr",
    "estimate_rwr",
    "fit_probit",
    "read_csv",
    "res",
    "residualize",
    "run_scenario",
    "run_table",
    "simulate_dataset",
    "simulate_mediation_dataset",
    "solve_least_squares",
    "standard_term_sets",
    "std_normal_cdf",
    "std_normal_quantile",
    "term",
    "validate_treatment_column",
    "write_csv",
]
