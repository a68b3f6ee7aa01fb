"""Numerical kernels: weighted least squares, probit maximum likelihood,
standard-normal functions and reproducible random streams.

Everything here is a pure function of its inputs (``RngStream`` excepted,
which is a value owned by a single replication at a time).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special
from scipy.linalg import lapack

from .exceptions import DataError

#: Relative tolerance on a column's residual norm (after orthogonalizing it
#: against the columns before it) below which the column is dropped.
RANK_TOL = 1e-10

PROBIT_MAX_ITER = 25
PROBIT_DEVIANCE_TOL = 1e-8
PROB_CLAMP = 1e-10

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class DesignMatrix:
    """Labeled ``n x p`` regressor matrix.

    ``values`` is stored column-major friendly as a 2-D float array; the
    column with index ``j`` carries ``labels[j]``.
    """

    labels: tuple[str, ...]
    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("design values must be a 2-D array")
        labels = tuple(self.labels)
        if values.shape[1] != len(labels):
            raise DataError(
                f"{len(labels)} labels for a design with {values.shape[1]} columns"
            )
        if values.shape[0] < 1:
            raise DataError("design must have at least one row")
        if len(set(labels)) != len(labels):
            raise DataError(f"duplicate design labels: {labels}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_columns(cls, columns: Iterable[tuple[str, ArrayLike]]) -> DesignMatrix:
        pairs = list(columns)
        if not pairs:
            raise DataError("empty design")
        labels = tuple(label for label, _ in pairs)
        arrays = [np.asarray(v, dtype=float) for _, v in pairs]
        n = {a.shape for a in arrays}
        if len(n) != 1 or arrays[0].ndim != 1:
            raise DataError("design columns must be 1-D and of equal length")
        return cls(labels, np.column_stack(arrays))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def columns(self) -> list[tuple[str, NDArray[np.float64]]]:
        return [(label, self.values[:, j]) for j, label in enumerate(self.labels)]

    def column(self, label: str) -> NDArray[np.float64]:
        return self.values[:, self.labels.index(label)]


@dataclass(frozen=True)
class LeastSquaresFit:
    coefficients: dict[str, float]
    residuals: NDArray[np.float64]
    fitted: NDArray[np.float64]
    rank: int
    dropped_columns: tuple[str, ...] = ()

    def __getitem__(self, label: str) -> float:
        return self.coefficients[label]


@dataclass(frozen=True)
class ProbitFit:
    coefficients: dict[str, float]
    fitted_probabilities: NDArray[np.float64]
    converged: bool
    iterations: int
    log_likelihood: float
    dropped_columns: tuple[str, ...] = ()

    def __getitem__(self, label: str) -> float:
        return self.coefficients[label]

    @property
    def at_clamp(self) -> bool:
        """True if any fitted probability sits on the clamp boundary."""
        p = self.fitted_probabilities
        return bool(np.any(p <= PROB_CLAMP) or np.any(p >= 1.0 - PROB_CLAMP))


def _qr_solve(
    a: NDArray[np.float64], b: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Least squares for ``a @ x ~ b`` by Householder QR with in-order rank detection.

    Returns the full-length coefficient vector (zeros for dropped columns)
    and the boolean mask of retained columns.
    """
    p = a.shape[1]
    norms = np.sqrt(np.einsum("ij,ij->j", a, a))
    keep = norms > 0.0
    coef = np.zeros(p)
    if a.shape[0] >= p:
        qr, tau = _householder(a)
        # |R_jj| is the norm of column j after projecting out columns < j.
        keep &= np.abs(np.diagonal(qr)) > RANK_TOL * norms
        if keep.all():
            coef[:] = _householder_solve(qr, tau, b)
            return coef, keep
    else:
        keep &= _sequential_rank_mask(a, norms)
    if not keep.any():
        return coef, keep
    qr, tau = _householder(a[:, keep])
    coef[keep] = _householder_solve(qr, tau, b)
    return coef, keep


def _householder(a: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    qr, tau, _, info = lapack.dgeqrf(a)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgeqrf failed (info={info})")
    return qr, tau


def _householder_solve(qr, tau, b) -> NDArray[np.float64]:
    p = qr.shape[1]
    qtb, _, info = lapack.dormqr("L", "T", qr, tau, b[:, None], lwork=64)
    if info != 0:
        raise np.linalg.LinAlgError(f"dormqr failed (info={info})")
    x, info = lapack.dtrtrs(qr[:p, :p], qtb[:p, 0])
    if info != 0:
        raise np.linalg.LinAlgError(f"dtrtrs failed (info={info})")
    return x


def _sequential_rank_mask(a: NDArray[np.float64], norms: NDArray[np.float64]) -> NDArray[np.bool_]:
    # Wide designs (p > n): Gram-Schmidt with reorthogonalization.
    basis: list[NDArray[np.float64]] = []
    keep = np.zeros(a.shape[1], dtype=bool)
    for j in range(a.shape[1]):
        v = a[:, j].copy()
        for _ in range(2):
            for q in basis:
                v -= (q @ v) * q
        nv = np.linalg.norm(v)
        if norms[j] > 0 and nv > RANK_TOL * norms[j]:
            keep[j] = True
            basis.append(v / nv)
    return keep


def solve_least_squares(
    X: DesignMatrix, y: ArrayLike, weights: ArrayLike | None = None
) -> LeastSquaresFit:
    """Minimize ``sum_i w_i (y_i - x_i' b)^2`` by orthogonal decomposition.

    A column whose norm after orthogonalization against the preceding
    columns falls below ``RANK_TOL`` times its own norm is dropped: its
    coefficient is reported as 0 and its label listed in ``dropped_columns``.

    Raises
    ------
    DataError
        On a length mismatch, negative or all-zero weights, or an empty design.
    """
    if X.n_cols == 0:
        raise DataError("empty design")
    y = np.asarray(y, dtype=float)
    n = X.n_rows
    if y.shape != (n,):
        raise DataError(f"outcome has shape {y.shape}, design has {n} rows")
    a = X.values
    b = y
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise DataError(f"weights have shape {w.shape}, design has {n} rows")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DataError("weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise DataError("all weights are zero")
        sw = np.sqrt(w)
        a = a * sw[:, None]
        b = y * sw
    coef, keep = _qr_solve(a, b)
    fitted = X.values @ coef
    residuals = y - fitted
    return LeastSquaresFit(
        coefficients=dict(zip(X.labels, coef.tolist())),
        residuals=residuals,
        fitted=fitted,
        rank=int(keep.sum()),
        dropped_columns=tuple(lbl for lbl, k in zip(X.labels, keep) if not k),
    )


def std_normal_cdf(x: ArrayLike) -> NDArray[np.float64] | float:
    """Standard normal CDF."""
    return special.ndtr(x)


def std_normal_pdf(x: ArrayLike) -> NDArray[np.float64] | float:
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def std_normal_quantile(p: ArrayLike) -> NDArray[np.float64] | float:
    """Inverse of :func:`std_normal_cdf` on the open unit interval."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise ValueError("quantile requires 0 < p < 1")
    return special.ndtri(p)


def _probit_loglik(y: NDArray[np.float64], mu: NDArray[np.float64]) -> float:
    return float(np.sum(y * np.log(mu) + (1.0 - y) * np.log1p(-mu)))


def probit_log_likelihood(X: DesignMatrix, y: ArrayLike, beta: ArrayLike) -> float:
    """Probit log-likelihood at ``beta`` (probabilities clamped as in the fit)."""
    y = np.asarray(y, dtype=float)
    mu = np.clip(special.ndtr(X.values @ np.asarray(beta, dtype=float)), PROB_CLAMP, 1 - PROB_CLAMP)
    return _probit_loglik(y, mu)


def probit_score(X: DesignMatrix, y: ArrayLike, beta: ArrayLike) -> NDArray[np.float64]:
    """Analytic gradient of :func:`probit_log_likelihood` with respect to ``beta``."""
    y = np.asarray(y, dtype=float)
    eta = X.values @ np.asarray(beta, dtype=float)
    mu = np.clip(special.ndtr(eta), PROB_CLAMP, 1 - PROB_CLAMP)
    return X.values.T @ ((y - mu) * std_normal_pdf(eta) / (mu * (1.0 - mu)))


def fit_probit(
    X: DesignMatrix,
    y: ArrayLike,
    *,
    max_iter: int = PROBIT_MAX_ITER,
    tol: float = PROBIT_DEVIANCE_TOL,
) -> ProbitFit:
    """Probit regression by iteratively reweighted least squares.

    Iterates until the relative change in deviance drops below ``tol`` or
    ``max_iter`` iterations have run; in the latter case the fit is
    returned with ``converged=False`` and the caller decides what to do.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (X.n_rows,):
        raise DataError(f"response has shape {y.shape}, design has {X.n_rows} rows")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("probit response must be coded 0/1")
    if y.min() == y.max():
        raise DataError("probit response is constant")

    a = X.values
    eta = special.ndtri((y + 0.5) / 2.0)
    mu = special.ndtr(eta)
    dev_old = -2.0 * _probit_loglik(y, mu)
    coef = np.zeros(X.n_cols)
    keep = np.ones(X.n_cols, dtype=bool)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        dens = std_normal_pdf(np.clip(eta, -8.0, 8.0))
        var = mu * (1.0 - mu)
        z = eta + (y - mu) / dens
        sw = dens / np.sqrt(var)
        coef, keep = _qr_solve(a * sw[:, None], z * sw)
        eta = a @ coef
        mu = np.clip(special.ndtr(eta), PROB_CLAMP, 1.0 - PROB_CLAMP)
        dev = -2.0 * _probit_loglik(y, mu)
        if abs(dev - dev_old) / (abs(dev) + 0.1) < tol:
            converged = True
            break
        dev_old = dev
    return ProbitFit(
        coefficients=dict(zip(X.labels, coef.tolist())),
        fitted_probabilities=mu,
        converged=converged,
        iterations=it,
        log_likelihood=_probit_loglik(y, mu),
        dropped_columns=tuple(lbl for lbl, k in zip(X.labels, keep) if not k),
    )


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(master_seed, scenario_id, replication_id)``.

    The key is hashed by :class:`numpy.random.SeedSequence` into a Philox
    key, so streams for distinct replications are independent and can be
    created in any order.
    """

    master_seed: int
    scenario_id: int = 0
    replication_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("master_seed", "scenario_id", "replication_id"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {v!r}")
        if self.master_seed >= 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        seq = np.random.SeedSequence(
            int(self.master_seed), spawn_key=(int(self.scenario_id), int(self.replication_id))
        )
        self._gen = np.random.Generator(np.random.Philox(seq))

    def uniform(self, size: int | Sequence[int] | None = None):
        return self._gen.random(size)

    def standard_normal(self, size: int | Sequence[int] | None = None):
        return self._gen.standard_normal(size)

    def integers(self, high: int, size: int | Sequence[int] | None = None):
        """Uniform integers on ``[0, high)``."""
        return self._gen.integers(0, high, size=size)


def draw_normal(stream: RngStream, mean: ArrayLike = 0.0, sd: ArrayLike = 1.0, size=None):
    """Normal draws ``mean + sd * z``; ``size`` defaults to the broadcast shape of the inputs."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    if np.any(sd <= 0):
        raise ValueError("sd must be positive")
    if size is None:
        size = np.broadcast_shapes(mean.shape, sd.shape) or None
    z = stream.standard_normal(size)
    out = mean + sd * z
    return float(out) if np.ndim(out) == 0 else out


def draw_bernoulli(stream: RngStream, p: ArrayLike, size=None):
    """1 where a uniform draw falls below ``p``, else 0."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p must lie in [0, 1]")
    if size is None:
        size = p.shape or None
    out = (stream.uniform(size) < p).astype(float)
    return int(out) if np.ndim(out) == 0 else out
