"""Simulation designs and the Monte Carlo driver for the estimator comparison.

Time-varying design (two periods, unobserved ``u``)::

    u, c1 ~ N(0, 1)
    a1 ~ Bernoulli(Phi(gamma * c1))
    c2 ~ N(0.5 u + 0.5 c1 + 0.5 a1, 1)
    a2 ~ Bernoulli(Phi(gamma * c1 + 0.5 a1 + gamma * c2))
    y  ~ N(0.5 u + gamma c1 + a1 (0.2 + theta c1) + gamma c2r
           + a2 (0.2 + 0.1 a1 + theta (c1 + c2r)), 1)

with ``c2r = c2 - (0.5 c1 + 0.5 a1)``, the deviation of ``c2`` from its mean
given ``(c1, a1)`` once ``u`` is integrated out. Every moderation term has
mean zero under any fixed treatment sequence, so
``E[Y(1,1) - Y(0,0)] = 0.2 + 0.2 + 0.1 = 0.5`` for all ``gamma`` and ``theta``.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import ColumnTable
from .estimators import (
    MED_METHODS,
    TV_METHODS,
    MediationSpec,
    TimeVaryingSpec,
)
from .exceptions import RWRError
from .numerics import RngStream, draw_bernoulli, draw_normal, std_normal_cdf

TRUE_CTE = 0.5

ESTIMATORS = ("conventional", "iptw", "g", "rwr", "rwr-interact")

ESTIMATOR_NAMES = {
    "conventional": "Conventional regression",
    "iptw": "IPTW estimation",
    "g": "G-estimation",
    "rwr": "RWR w/o interactions",
    "rwr-interact": "RWR w/ interactions",
}

TABLE_SEEDS = {1: 8675309, 2: 90210}

TV_SPEC = TimeVaryingSpec("y", "a1", "a2", ("c1",), ("c2",))


def simulate_dataset(
    gamma: float, theta: float, n: int, stream: RngStream, *, include_latent: bool = True
) -> ColumnTable:
    """One draw of the two-period design; columns ``u, c1, a1, c2, a2, y``."""
    u = draw_normal(stream, 0.0, 1.0, n)
    c1 = draw_normal(stream, 0.0, 1.0, n)
    a1 = draw_bernoulli(stream, std_normal_cdf(gamma * c1))
    c2 = draw_normal(stream, 0.5 * u + 0.5 * c1 + 0.5 * a1, 1.0)
    a2 = draw_bernoulli(stream, std_normal_cdf(gamma * c1 + 0.5 * a1 + gamma * c2))
    c2r = c2 - (0.5 * c1 + 0.5 * a1)
    mu = (
        0.5 * u
        + gamma * c1
        + a1 * (0.2 + theta * c1)
        + gamma * c2r
        + a2 * (0.2 + 0.1 * a1 + theta * (c1 + c2r))
    )
    y = draw_normal(stream, mu, 1.0)
    cols = [("u", u), ("c1", c1), ("a1", a1), ("c2", c2), ("a2", a2), ("y", y)]
    if not include_latent:
        cols = cols[1:]
    return ColumnTable(cols)


@dataclass(frozen=True)
class MediationParams:
    """Linear structural equations for the mediation design.

    ::

        x ~ N(0, 1);  u ~ N(0, 1) unobserved
        d ~ Bernoulli(Phi(d_on_x x))
        z = z_on_x x + z_on_d d + z_on_u u + e_z
        m = m_on_x x + m_on_d d + m_on_z z + e_m
        y = y_on_u u + y_on_x x + direct d + y_on_zres zr
            + (y_on_m + y_on_dm d) m + k (d x + m x + m zr) + e_y

    with ``zr = z - (z_on_x x + z_on_d d)`` and ``k = moderation_strength``
    when ``moderated`` else 0. ``u`` confounds ``z`` and ``y`` but neither
    treatment nor mediator, so both are sequentially ignorable. Because
    ``E[x] = 0`` and ``E[zr(d) | x] = 0`` for either ``d``, the moderation
    terms drop out of the controlled direct effect:
    ``CDE(1, m) = direct + y_on_dm * m`` (0.25 at ``m = 0.5`` by default).
    """

    d_on_x: float = 0.5
    z_on_x: float = 0.5
    z_on_d: float = 0.5
    z_on_u: float = 0.5
    m_on_x: float = 0.2
    m_on_d: float = 0.4
    m_on_z: float = 0.4
    y_on_u: float = 0.5
    y_on_x: float = 0.3
    direct: float = 0.15
    y_on_zres: float = 0.3
    y_on_m: float = 0.3
    y_on_dm: float = 0.2
    moderated: bool = False
    moderation_strength: float = 0.5

    @classmethod
    def null(cls) -> MediationParams:
        """Every structural coefficient zero."""
        return cls(**{f: 0.0 for f in cls.__dataclass_fields__ if f not in ("moderated",)})

    @property
    def moderation(self) -> float:
        return self.moderation_strength if self.moderated else 0.0

    def cde(self, d: float, m: float) -> float:
        return (self.direct + self.y_on_dm * m) * d

    def total_effect(self) -> float:
        """``E[Y(1, M(1)) - Y(0, M(0))]``.

        The mediator shifts by ``m_on_d + m_on_z z_on_d`` under treatment,
        and its covariances with ``x`` and ``zr`` do not depend on ``d``, so
        the moderation terms cancel here as well.
        """
        shift = self.m_on_d + self.m_on_z * self.z_on_d
        return self.direct + (self.y_on_m + self.y_on_dm) * shift


def simulate_mediation_dataset(
    params: MediationParams, n: int, stream: RngStream, *, include_latent: bool = False
) -> ColumnTable:
    """One draw of the mediation design; columns ``x, d, z, m, y`` (plus ``u``)."""
    p = params
    x = draw_normal(stream, 0.0, 1.0, n)
    u = draw_normal(stream, 0.0, 1.0, n)
    d = draw_bernoulli(stream, std_normal_cdf(p.d_on_x * x))
    zr = p.z_on_u * u + draw_normal(stream, 0.0, 1.0, n)
    z = p.z_on_x * x + p.z_on_d * d + zr
    m = p.m_on_x * x + p.m_on_d * d + p.m_on_z * z + draw_normal(stream, 0.0, 1.0, n)
    k = p.moderation
    mu = (
        p.y_on_u * u
        + p.y_on_x * x
        + p.direct * d
        + p.y_on_zres * zr
        + (p.y_on_m + p.y_on_dm * d) * m
        + k * (d * x + m * x + m * zr)
    )
    y = mu + draw_normal(stream, 0.0, 1.0, n)
    cols = [("x", x), ("d", d), ("z", z), ("m", m), ("y", y)]
    if include_latent:
        cols.insert(1, ("u", u))
    return ColumnTable(cols)


def mediation_spec(cde_at: float = 0.5) -> MediationSpec:
    return MediationSpec("y", "d", "m", ("x",), ("z",), cde_mediator_value=cde_at)


@dataclass(frozen=True)
class Scenario:
    gamma: float
    theta: float
    n: int = 500
    reps: int = 10_000
    master_seed: int = TABLE_SEEDS[1]
    estimators: tuple[str, ...] = ESTIMATORS
    scenario_id: int = 0

    def __post_init__(self) -> None:
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        unknown = [e for e in self.estimators if e not in TV_METHODS]
        if unknown:
            raise ValueError(f"unknown estimator(s) {unknown}")
        object.__setattr__(self, "estimators", tuple(self.estimators))


@dataclass(frozen=True)
class EstimatorSummary:
    """Bias, SD and RMSE of the CTE estimates about the true value 0.5.

    ``sd`` is ``None`` with fewer than two usable replications. ``rmse`` is
    the root mean squared error; ``rmse_decomposed`` recomputes it from
    ``bias**2 + sd**2 (r - 1) / r`` as a cross-check.
    """

    estimator: str
    bias: float
    sd: float | None
    rmse: float
    reps_used: int
    failures: int
    rmse_decomposed: float


@dataclass
class ScenarioSummary:
    scenario: Scenario
    summaries: dict[str, EstimatorSummary]
    estimates: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def __getitem__(self, estimator: str) -> EstimatorSummary:
        return self.summaries[estimator]


def summarize(estimator: str, estimates: np.ndarray, truth: float = TRUE_CTE) -> EstimatorSummary:
    ok = estimates[np.isfinite(estimates)]
    r = ok.size
    failures = estimates.size - r
    if r == 0:
        nan = float("nan")
        return EstimatorSummary(estimator, nan, None, nan, 0, failures, nan)
    err = ok - truth
    bias = float(err.mean())
    sd = float(ok.std(ddof=1)) if r > 1 else None
    rmse = float(np.sqrt(np.mean(err**2)))
    decomposed = math.sqrt(bias**2 + (sd**2 * (r - 1) / r if sd is not None else 0.0))
    return EstimatorSummary(estimator, bias, sd, rmse, r, failures, decomposed)


def _replication_block(
    gamma: float,
    theta: float,
    n: int,
    master_seed: int,
    scenario_id: int,
    estimators: Sequence[str],
    start: int,
    stop: int,
) -> np.ndarray:
    """CTE estimates for replications ``[start, stop)``; NaN marks a failed fit."""
    out = np.full((stop - start, len(estimators)), np.nan)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, r in enumerate(range(start, stop)):
            stream = RngStream(master_seed, scenario_id, r)
            data = simulate_dataset(gamma, theta, n, stream, include_latent=False)
            for j, name in enumerate(estimators):
                try:
                    out[i, j] = TV_METHODS[name](data, TV_SPEC).cte
                except (RWRError, np.linalg.LinAlgError, ValueError):
                    pass
    return out


def _chunks(reps: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(reps / (workers * 4)))
    return [(s, min(s + size, reps)) for s in range(0, reps, size)]


def _resolve_workers(threads: int | None) -> int:
    if threads is None:
        return os.cpu_count() or 1
    return max(1, int(threads))


def run_scenario(
    scenario: Scenario, *, threads: int | None = 1, executor: ProcessPoolExecutor | None = None
) -> ScenarioSummary:
    """Run every requested estimator on ``scenario.reps`` simulated datasets.

    Replication ``r`` always draws from ``RngStream(master_seed, scenario_id, r)``
    and all estimators see the same dataset. Results are collected by
    replication index, so they do not depend on ``threads``.
    """
    s = scenario
    workers = _resolve_workers(threads)
    args = (s.gamma, s.theta, s.n, s.master_seed, s.scenario_id, s.estimators)
    if workers == 1 and executor is None:
        est = _replication_block(*args, 0, s.reps)
    else:
        chunks = _chunks(s.reps, workers)
        own = executor is None
        pool = executor or ProcessPoolExecutor(max_workers=workers)
        try:
            futures = [pool.submit(_replication_block, *args, a, b) for a, b in chunks]
            est = np.vstack([f.result() for f in futures])
        finally:
            if own:
                pool.shutdown()
    estimates = {name: est[:, j] for j, name in enumerate(s.estimators)}
    summaries = {name: summarize(name, estimates[name]) for name in s.estimators}
    return ScenarioSummary(s, summaries, estimates)


def table_scenarios(
    which: int, *, master_seed: int | None = None, reps: int = 10_000, n: int = 500,
    estimators: Sequence[str] = ESTIMATORS,
) -> list[Scenario]:
    """The five scenarios of the confounding (1) or moderation (2) grid."""
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    seed = TABLE_SEEDS[which] if master_seed is None else master_seed
    out = []
    for k in range(1, 6):
        gamma, theta = (k / 10, 0.0) if which == 1 else (0.4, k / 10)
        out.append(Scenario(gamma, theta, n, reps, seed, tuple(estimators), scenario_id=10 * which + k))
    return out


def run_table(
    which: int,
    master_seed: int | None = None,
    reps: int = 10_000,
    n: int = 500,
    *,
    threads: int | None = 1,
    estimators: Sequence[str] = ESTIMATORS,
) -> list[ScenarioSummary]:
    """Table 1 varies confounding ``gamma = 0.1..0.5`` at ``theta = 0``;
    table 2 varies moderation ``theta = 0.1..0.5`` at ``gamma = 0.4``."""
    scenarios = table_scenarios(which, master_seed=master_seed, reps=reps, n=n, estimators=estimators)
    workers = _resolve_workers(threads)
    if workers == 1:
        return [run_scenario(s, threads=1) for s in scenarios]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [run_scenario(s, threads=workers, executor=pool) for s in scenarios]


def grid_rows(summaries: Sequence[ScenarioSummary]) -> list[dict]:
    """Flatten a grid into rows ordered by estimator, then scenario."""
    rows = []
    estimators = summaries[0].scenario.estimators if summaries else ()
    for name in estimators:
        for ss in summaries:
            e = ss[name]
            rows.append(
                {
                    "estimator": name,
                    "gamma": ss.scenario.gamma,
                    "theta": ss.scenario.theta,
                    "bias": e.bias,
                    "sd": e.sd,
                    "rmse": e.rmse,
                    "reps_used": e.reps_used,
                }
            )
    return rows


def run_mediation_replications(
    params: MediationParams,
    n: int,
    reps: int,
    master_seed: int,
    *,
    methods: Sequence[str] = ("rwr", "rwr-interact", "g"),
    cde_at: float = 0.5,
    scenario_id: int = 0,
) -> dict[str, dict[str, np.ndarray]]:
    """CDE and total-effect estimates of the mediation estimators over ``reps`` draws."""
    spec = mediation_spec(cde_at)
    out = {m: {"cde": np.full(reps, np.nan), "total_effect": np.full(reps, np.nan)} for m in methods}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for r in range(reps):
            data = simulate_mediation_dataset(params, n, RngStream(master_seed, scenario_id, r))
            for m in methods:
                try:
                    rep = MED_METHODS[m](data, spec)
                except (RWRError, np.linalg.LinAlgError, ValueError):
                    continue
                out[m]["cde"][r] = rep.cde
                out[m]["total_effect"][r] = rep.total_effect
    return out
