"""Nonparametric (row) and block (cluster) bootstrap standard errors.

Replicate ``b`` always draws from ``RngStream(seed, BOOTSTRAP_STREAM, b)``,
so results are identical whether replicates run serially or on a pool of
threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Literal, Mapping

import numpy as np

from .dataset import ColumnTable
from .estimators import EffectReport
from .exceptions import BootstrapError, DataError
from .numerics import RngStream, std_normal_cdf

BOOTSTRAP_STREAM = 7
MAX_FAILURE_SHARE = 0.10

PValueMethod = Literal["normal", "sign"]
Estimator = Callable[[ColumnTable], Any]


def estimand_values(result: Any) -> dict[str, float]:
    """Named estimates from an estimator's return value.

    Accepts an :class:`EffectReport`, a mapping of names to numbers, or a
    bare number (named ``"estimate"``).
    """
    if isinstance(result, EffectReport):
        return result.values()
    if isinstance(result, Mapping):
        return {str(k): float(v) for k, v in result.items()}
    return {"estimate": float(result)}


def normal_p_value(estimate: float, se: float) -> float:
    """Two-sided ``2 * Phi(-|estimate / se|)``."""
    if se > 0:
        return float(2.0 * std_normal_cdf(-abs(estimate / se)))
    return 1.0 if estimate == 0 else 0.0


def sign_p_value(replicates: np.ndarray) -> float:
    """Two-sided share of replicates on the far side of zero, ``2 * min(P(>0), P(<=0))``."""
    above = float(np.mean(replicates > 0))
    return min(1.0, 2.0 * min(above, 1.0 - above))


@dataclass(frozen=True)
class BootstrapResult:
    point_estimates: Any
    names: tuple[str, ...]
    replicate_matrix: np.ndarray
    se: dict[str, float]
    p_value: dict[str, float]
    reps: int
    seed: int
    failures: int
    pvalue_method: PValueMethod = "normal"

    def report(self) -> EffectReport:
        """The point report with standard errors and p-values attached."""
        if not isinstance(self.point_estimates, EffectReport):
            raise TypeError("point estimates are not an EffectReport")
        return self.point_estimates.with_inference(self.se, self.p_value)


def iid_indices(n: int, stream: RngStream) -> np.ndarray:
    return stream.integers(n, n)


def cluster_index(table: ColumnTable, cluster_column: str) -> list[np.ndarray]:
    """Row indices of each cluster, clusters ordered by first appearance."""
    table.require([cluster_column])
    ids = table[cluster_column]
    _, first, inverse = np.unique(ids, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    labels = rank[inverse]
    sort = np.argsort(labels, kind="stable")
    bounds = np.cumsum(np.bincount(labels, minlength=order.size))[:-1]
    return np.split(sort, bounds)


def block_indices(clusters: list[np.ndarray], stream: RngStream) -> np.ndarray:
    """Rows of ``len(clusters)`` clusters drawn with replacement, kept whole."""
    draws = stream.integers(len(clusters), len(clusters))
    return np.concatenate([clusters[g] for g in draws])


def _run(
    table: ColumnTable,
    estimator: Estimator,
    reps: int,
    seed: int,
    resample: Callable[[RngStream], np.ndarray],
    threads: int,
    pvalue: PValueMethod,
) -> BootstrapResult:
    if reps < 2:
        raise ValueError("reps must be at least 2")
    if pvalue not in ("normal", "sign"):
        raise ValueError(f"unknown p-value method {pvalue!r}")
    point = estimator(table)
    point_values = estimand_values(point)
    names = tuple(point_values)

    def one(b: int) -> np.ndarray | None:
        idx = resample(RngStream(seed, BOOTSTRAP_STREAM, b))
        try:
            vals = estimand_values(estimator(table.take(idx)))
        except Exception:  # noqa: BLE001 - any estimator failure skips the replicate
            return None
        row = np.array([vals.get(k, np.nan) for k in names], dtype=float)
        return row if np.all(np.isfinite(row)) else None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(reps)))
    else:
        rows = [one(b) for b in range(reps)]
    kept = [r for r in rows if r is not None]
    failures = reps - len(kept)
    if failures > MAX_FAILURE_SHARE * reps:
        raise BootstrapError(f"{failures} of {reps} bootstrap replicates failed")
    if len(kept) < 2:
        raise BootstrapError("fewer than two successful bootstrap replicates")
    mat = np.vstack(kept)
    sd = mat.std(axis=0, ddof=1)
    se = {k: float(sd[j]) for j, k in enumerate(names)}
    if pvalue == "normal":
        p = {k: normal_p_value(point_values[k], se[k]) for k in names}
    else:
        p = {k: sign_p_value(mat[:, j]) for j, k in enumerate(names)}
    return BootstrapResult(point, names, mat, se, p, reps, seed, failures, pvalue)


def bootstrap_iid(
    table: ColumnTable,
    estimator: Estimator,
    reps: int,
    seed: int,
    *,
    threads: int = 1,
    pvalue: PValueMethod = "normal",
) -> BootstrapResult:
    """Resample ``n`` rows with replacement ``reps`` times.

    The standard error of each estimand is the sample SD of its replicates.
    Replicates whose estimator raises (or returns non-finite values) are
    skipped and counted; more than 10% failures is an error.
    """
    n = table.n_rows
    return _run(table, estimator, reps, seed, lambda s: iid_indices(n, s), threads, pvalue)


def bootstrap_block(
    table: ColumnTable,
    cluster_column: str,
    estimator: Estimator,
    reps: int,
    seed: int,
    *,
    threads: int = 1,
    pvalue: PValueMethod = "normal",
) -> BootstrapResult:
    """Resample whole clusters with replacement.

    A cluster drawn ``k`` times contributes ``k`` copies of all its rows.
    With one row per cluster this draws exactly the rows
    :func:`bootstrap_iid` would under the same seed.
    """
    clusters = cluster_index(table, cluster_column)
    if len(clusters) < 2:
        raise DataError(f"block bootstrap needs at least two clusters in {cluster_column!r}")
    return _run(table, estimator, reps, seed, lambda s: block_indices(clusters, s), threads, pvalue)


def significance_stars(p: float | None) -> str:
    """``***`` p < .001, ``**`` p < .01, ``*`` p < .05, ``†`` p < .10."""
    if p is None or math.isnan(p):
        return ""
    for cut, mark in ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.10, "†")):
        if p < cut:
            return mark
    return ""
