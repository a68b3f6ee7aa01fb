"""Residualization (first stage) and term-based design matrices (second stage).

A :class:`Term` is a product of factors, each referring to a raw column or
to the residualized version of a confounder (stored as ``<name>__res``).
Products that multiply a treatment by two or more different residualized
confounders from the same time block are rejected: their moderation
cannot be decomposed into mean-zero residual terms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Literal, Sequence

import numpy as np

from .dataset import ColumnTable, is_binary
from .exceptions import DataError, DegenerateColumnWarning, DesignError, RankDeficiencyWarning
from .numerics import DesignMatrix, fit_probit, solve_least_squares

RES_SUFFIX = "__res"
INTERCEPT_LABEL = "(Intercept)"

# Relative norm below which a residual column is treated as identically zero.
ZERO_RESIDUAL_TOL = 1e-10


def res_name(name: str) -> str:
    return name + RES_SUFFIX


@dataclass(frozen=True, order=True)
class Factor:
    name: str
    residualized: bool = False

    @property
    def column(self) -> str:
        return res_name(self.name) if self.residualized else self.name


def raw(name: str) -> Factor:
    return Factor(name, False)


def res(name: str) -> Factor:
    return Factor(name, True)


@dataclass(frozen=True)
class Term:
    """Product of factors; the empty product is the intercept."""

    factors: tuple[Factor, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "factors", tuple(sorted(self.factors)))

    @property
    def label(self) -> str:
        if not self.factors:
            return INTERCEPT_LABEL
        return ":".join(sorted(f.column for f in self.factors))

    @property
    def is_intercept(self) -> bool:
        return not self.factors

    def __mul__(self, other: Term) -> Term:
        return Term(self.factors + other.factors)

    def __repr__(self) -> str:
        return f"Term({self.label})"


INTERCEPT = Term()


def term(*parts: str | Factor | Term) -> Term:
    """Build a term from column names (raw), factors or other terms."""
    factors: list[Factor] = []
    for p in parts:
        if isinstance(p, Term):
            factors.extend(p.factors)
        elif isinstance(p, Factor):
            factors.append(p)
        else:
            factors.append(raw(p))
    return Term(tuple(factors))


@dataclass(frozen=True)
class Block:
    """Confounders measured at one time point and the earlier variables they are regressed on."""

    confounders: tuple[str, ...]
    predictors: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "confounders", tuple(self.confounders))
        object.__setattr__(self, "predictors", tuple(self.predictors))


@dataclass(frozen=True)
class ResidualizationPlan:
    """Ordered residualization blocks.

    ``binary_link="probit"`` fits binary confounders with a probit first
    stage (residual = observed minus fitted probability) instead of the
    default linear model.
    """

    blocks: tuple[Block, ...]
    binary_link: Literal["linear", "probit"] = "linear"
    _block_of: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        blocks = tuple(self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if self.binary_link not in ("linear", "probit"):
            raise DesignError(f"unknown binary_link {self.binary_link!r}")
        block_of: dict[str, int] = {}
        for t, blk in enumerate(blocks):
            for c in blk.confounders:
                if c in block_of:
                    raise DesignError(f"confounder {c!r} appears in blocks {block_of[c]} and {t}")
                block_of[c] = t
        for t, blk in enumerate(blocks):
            if t == 0 and blk.predictors:
                raise DesignError("the first block is residualized on the intercept only")
            for p in blk.predictors:
                if block_of.get(p, -1) >= t:
                    raise DesignError(
                        f"block {t} predictor {p!r} is not measured before block {t}"
                    )
        object.__setattr__(self, "_block_of", block_of)

    @classmethod
    def two_period(
        cls,
        baseline: Sequence[str],
        post: Sequence[str],
        prior_treatments: Sequence[str],
        binary_link: Literal["linear", "probit"] = "linear",
    ) -> ResidualizationPlan:
        """Baseline confounders mean-centered; post confounders regressed on baseline + treatments."""
        blocks = [Block(tuple(baseline))]
        if post:
            blocks.append(Block(tuple(post), tuple(baseline) + tuple(prior_treatments)))
        return cls(tuple(blocks), binary_link)

    def block_of(self, confounder: str) -> int | None:
        return self._block_of.get(confounder)


def residualize(table: ColumnTable, plan: ResidualizationPlan) -> ColumnTable:
    """Append ``<c>__res`` for every confounder in ``plan``.

    Each confounder in block ``t`` is regressed on an intercept plus the
    block's predictors and replaced (in a new column) by its residual.
    Residuals that vanish to within ``ZERO_RESIDUAL_TOL`` of the
    confounder's norm are set to exactly zero with a warning.
    """
    needed = [c for blk in plan.blocks for c in blk.confounders + blk.predictors]
    table.require(needed)
    n = table.n_rows
    new: dict[str, np.ndarray] = {}
    for blk in plan.blocks:
        labels = (INTERCEPT_LABEL,) + blk.predictors
        X = DesignMatrix(labels, np.column_stack([np.ones(n)] + [table[p] for p in blk.predictors]))
        for c in blk.confounders:
            name = res_name(c)
            if name in table:
                raise DataError(f"column {name!r} already exists")
            y = table[c]
            if plan.binary_link == "probit" and is_binary(y) and 0 < y.sum() < n:
                pf = fit_probit(X, y)
                r = y - pf.fitted_probabilities
                dropped = pf.dropped_columns
            else:
                fit = solve_least_squares(X, y)
                r = fit.residuals
                dropped = fit.dropped_columns
            if dropped:
                warnings.warn(
                    f"residualizing {c!r}: dropped collinear predictor(s) {list(dropped)}",
                    RankDeficiencyWarning,
                    stacklevel=2,
                )
            if np.linalg.norm(r) <= ZERO_RESIDUAL_TOL * np.linalg.norm(y):
                warnings.warn(
                    f"residualized {c!r} has zero variance", DegenerateColumnWarning, stacklevel=2
                )
                r = np.zeros(n)
            new[name] = r
    return table.with_columns(new)


def build_design(
    table: ColumnTable,
    terms: Sequence[Term],
    *,
    plan: ResidualizationPlan | None = None,
    treatments: Iterable[str] = (),
    drop_degenerate: bool = True,
) -> DesignMatrix:
    """One column per term, the elementwise product of its factor columns.

    With ``plan`` and ``treatments`` given, terms multiplying a treatment by
    two different residualized confounders of the same block raise
    :class:`DesignError`. Terms containing an all-zero residualized column
    are dropped with a warning when ``drop_degenerate`` is set. Terms with
    identical labels (``a1:c`` and ``c:a1``) are merged.
    """
    treatments = set(treatments)
    n = table.n_rows
    labels: list[str] = []
    cols: list[np.ndarray] = []
    for t in terms:
        for f in t.factors:
            if f.column not in table:
                hint = " (residualize first)" if f.residualized else ""
                raise DesignError(f"unknown variable {f.column!r}{hint}")
        if plan is not None and any(f.name in treatments and not f.residualized for f in t.factors):
            by_block: dict[int | None, set[str]] = {}
            for f in t.factors:
                if f.residualized:
                    by_block.setdefault(plan.block_of(f.name), set()).add(f.name)
            for blk, names in by_block.items():
                if blk is not None and len(names) > 1:
                    raise DesignError(
                        f"inadmissible term {t.label}: treatment times contemporaneous "
                        f"residualized confounders {sorted(names)}"
                    )
        label = t.label
        if label in labels:
            continue
        if drop_degenerate and any(
            f.residualized and not np.any(table[f.column]) for f in t.factors
        ):
            warnings.warn(
                f"dropping term {label}: residualized factor has zero variance",
                DegenerateColumnWarning,
                stacklevel=2,
            )
            continue
        col = np.ones(n)
        for f in t.factors:
            col = col * table[f.column]
        labels.append(label)
        cols.append(col)
    if not cols:
        raise DesignError("no terms left in design")
    return DesignMatrix(tuple(labels), np.column_stack(cols))


METHODS = (
    "conventional",
    "iptw",
    "g-step1",
    "g-step2",
    "rwr-plain",
    "rwr-interact",
    "rwr-saturated",
    "med-total-plain",
    "med-total-interact",
    "med-rwr-plain",
    "med-rwr-interact",
    "med-g-step1",
    "med-g-step2",
)


@dataclass(frozen=True)
class TermPolicy:
    """Variable roles that resolve a canonical term set.

    For two-period designs ``a1``/``a2`` are the treatments and ``c1``/``c2``
    the confounders measured before each. For mediation designs ``a1`` is
    the treatment, ``mediator`` the mediator, ``c1`` the baseline and
    ``c2`` the post-treatment confounders. ``ps1``/``ps2`` name propensity
    columns used by g-estimation (the mediator propensity is ``ps2``).
    """

    a1: str
    a2: str | None = None
    c1: tuple[str, ...] = ()
    c2: tuple[str, ...] = ()
    mediator: str | None = None
    ps1: str = "ps1"
    ps2: str = "ps2"

    def __post_init__(self) -> None:
        object.__setattr__(self, "c1", tuple(self.c1))
        object.__setattr__(self, "c2", tuple(self.c2))


def _need(value: str | None, what: str, method: str) -> str:
    if value is None:
        raise DesignError(f"method {method!r} needs {what}")
    return value


def standard_term_sets(method: str, policy: TermPolicy) -> list[Term]:
    """Canonical regressor list of each estimator.

    ============== ==========================================================
    conventional   1, c1, a1, c2, a2, a1:a2 (raw confounders)
    iptw           1, a1, a2, a1:a2
    g-step1        1, c1, ps1, a1, c2, ps2, a1:ps2, a2, a1:a2
    g-step2        1, c1, ps1, a1
    rwr-plain      1, c1r, a1, c2r, a2, a1:a2
    rwr-interact   rwr-plain + every treatment x residualized-confounder product
    rwr-saturated  fully saturated model, one confounder per period only
    ============== ==========================================================

    Mediation sets use ``a1`` as the treatment ``d``, ``mediator`` as ``m``,
    ``c1`` as ``X`` and ``c2`` as ``Z``.
    """
    a1, a2 = policy.a1, policy.a2
    c1r = [term(res(c)) for c in policy.c1]
    c2r = [term(res(c)) for c in policy.c2]
    if method == "conventional":
        a2 = _need(a2, "a second treatment", method)
        return [INTERCEPT, *map(term, policy.c1), term(a1), *map(term, policy.c2), term(a2), term(a1, a2)]
    if method == "iptw":
        a2 = _need(a2, "a second treatment", method)
        return [INTERCEPT, term(a1), term(a2), term(a1, a2)]
    if method == "g-step1":
        a2 = _need(a2, "a second treatment", method)
        return [
            INTERCEPT,
            *map(term, policy.c1),
            term(policy.ps1),
            term(a1),
            *map(term, policy.c2),
            term(policy.ps2),
            term(a1, policy.ps2),
            term(a2),
            term(a1, a2),
        ]
    if method == "g-step2":
        return [INTERCEPT, *map(term, policy.c1), term(policy.ps1), term(a1)]
    if method == "rwr-plain":
        a2 = _need(a2, "a second treatment", method)
        return [INTERCEPT, *c1r, term(a1), *c2r, term(a2), term(a1, a2)]
    if method == "rwr-interact":
        a2 = _need(a2, "a second treatment", method)
        plain = standard_term_sets("rwr-plain", policy)
        extra = [term(a, c) for a, c in product((a1, a2), c1r + c2r)]
        return plain + extra
    if method == "rwr-saturated":
        a2 = _need(a2, "a second treatment", method)
        if len(policy.c1) != 1 or len(policy.c2) != 1:
            raise DesignError("rwr-saturated needs exactly one confounder per period")
        c1, c2 = c1r[0], c2r[0]
        return [
            INTERCEPT, c1, term(a1), term(a1, c1),
            c2, term(a1, c2), term(c1, c2), term(a1, c1, c2),
            term(a2), term(a1, a2), term(a2, c1), term(a1, a2, c1),
            term(a2, c2), term(a1, a2, c2), term(a2, c1, c2), term(a1, a2, c1, c2),
        ]  # fmt: skip
    if method == "med-total-plain":
        return [INTERCEPT, *c1r, term(a1)]
    if method == "med-total-interact":
        return [INTERCEPT, *c1r, term(a1), *(term(a1, x) for x in c1r)]
    if method == "med-rwr-plain":
        m = _need(policy.mediator, "a mediator", method)
        return [INTERCEPT, *c1r, term(a1), *c2r, term(m), term(a1, m)]
    if method == "med-rwr-interact":
        m = _need(policy.mediator, "a mediator", method)
        return [
            INTERCEPT,
            *c1r,
            term(a1),
            *(term(a1, x) for x in c1r),
            *c2r,
            *(term(a1, z) for z in c2r),
            *(term(x, z) for x, z in product(c1r, c2r)),
            term(m),
            term(a1, m),
            *(term(m, x) for x in c1r),
            *(term(a1, m, x) for x in c1r),
            *(term(m, z) for z in c2r),
            *(term(a1, m, z) for z in c2r),
        ]
    if method == "med-g-step1":
        m = _need(policy.mediator, "a mediator", method)
        return [
            INTERCEPT,
            term(a1),
            *map(term, policy.c1),
            *map(term, policy.c2),
            term(a1, m),
            term(a1, policy.ps2),
            term(m),
        ]
    if method == "med-g-step2":
        return [INTERCEPT, term(a1), *map(term, policy.c1), term(policy.ps1)]
    raise DesignError(f"unknown method {method!r}; expected one of {METHODS}")
