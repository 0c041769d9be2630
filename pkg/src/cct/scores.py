"""Self-contained non-conformity score models.

Four deterministic families: least-squares absolute residual, k-NN
conformalized-quantile (CQR) score, k-NN one-class distance score, and an
IRLS-fitted L2-penalized logistic classifier used for probability scores and
density-ratio estimation.  Models are immutable after fitting; scoring is
pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class FitError(ValueError):
    """A score model could not be fitted on the given data."""


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def _standardizer(x: np.ndarray):
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return mean, sd


# -- linear absolute residual ----------------------------------------------


@dataclass(frozen=True)
class LinearResidualModel:
    """Least-squares fit; score is the absolute residual ``|y - x.beta - b|``."""

    coefficients: np.ndarray
    intercept: float

    def predict(self, x) -> np.ndarray:
        x = _as_matrix(x)
        return x @ self.coefficients + self.intercept

    def score(self, x, y) -> float:
        return float(self.score_many(np.atleast_2d(np.asarray(x, dtype=float)), [y])[0])

    def score_many(self, x, y) -> np.ndarray:
        return np.abs(np.asarray(y, dtype=float) - self.predict(x))


def fit_linear_residual(train_x, train_y, ridge: float = 1e-8) -> LinearResidualModel:
    """Fit by least squares, falling back to a tiny ridge penalty when the
    design matrix is rank deficient."""
    x = _as_matrix(train_x)
    y = np.asarray(train_y, dtype=float)
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise FitError("non-finite values in training data")
    n, d = x.shape
    if n < d + 1:
        raise FitError(f"need at least {d + 1} rows to fit {d} coefficients, got {n}")
    design = np.hstack([np.ones((n, 1)), x])
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < d + 1:
        gram = design.T @ design + ridge * np.eye(d + 1)
        try:
            beta = np.linalg.solve(gram, design.T @ y)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise FitError("degenerate design even after ridge fallback") from exc
    if not np.isfinite(beta).all():
        raise FitError("least-squares fit produced non-finite coefficients")
    return LinearResidualModel(coefficients=beta[1:], intercept=float(beta[0]))


# -- k-NN helpers ------------------------------------------------------------


def _knn_indices(train: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest training rows per query (Euclidean distance,
    ties broken by training-row index)."""
    sq = (
        np.einsum("ij,ij->i", queries, queries)[:, None]
        + np.einsum("ij,ij->i", train, train)[None, :]
        - 2.0 * queries @ train.T
    )
    # stable sort keeps row order among exactly tied distances
    return np.argsort(sq, axis=1, kind="stable")[:, :k]


# -- k-NN conformalized quantile regression ---------------------------------


@dataclass(frozen=True)
class KnnQuantileModel:
    """k-NN conditional quantile estimates feeding the CQR score."""

    train_covariates: np.ndarray
    train_responses: np.ndarray
    k: int
    lo: float
    hi: float
    _mean: np.ndarray = field(repr=False, default=None)
    _sd: np.ndarray = field(repr=False, default=None)

    def predict_quantiles(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Lower-interpolation empirical quantiles of the k nearest responses."""
        q = (_as_matrix(x) - self._mean) / self._sd
        idx = _knn_indices(self.train_covariates, q, self.k)
        neigh = np.sort(self.train_responses[idx], axis=1)
        lo_i = int(np.floor(self.lo * (self.k - 1)))
        hi_i = int(np.floor(self.hi * (self.k - 1)))
        return neigh[:, lo_i], neigh[:, hi_i]

    def score_many(self, x, y) -> np.ndarray:
        qlo, qhi = self.predict_quantiles(x)
        y = np.asarray(y, dtype=float)
        return np.maximum(qlo - y, y - qhi)


def fit_knn_quantile(train_x, train_y, k: int, lo: float = 0.05, hi: float = 0.95) -> KnnQuantileModel:
    x = _as_matrix(train_x)
    y = np.asarray(train_y, dtype=float)
    if x.shape[0] == 0:
        raise FitError("empty training set")
    if not (0.0 < lo < hi < 1.0):
        raise ValueError(f"need 0 < lo < hi < 1, got lo={lo}, hi={hi}")
    if k > x.shape[0] or k < 1:
        raise FitError(f"k={k} out of range for {x.shape[0]} training rows")
    mean, sd = _standardizer(x)
    return KnnQuantileModel(
        train_covariates=(x - mean) / sd,
        train_responses=y,
        k=k,
        lo=lo,
        hi=hi,
        _mean=mean,
        _sd=sd,
    )


def cqr_score(model: KnnQuantileModel, x, y) -> float:
    """CQR score ``max(q_lo(x) - y, y - q_hi(x))``; negative inside the band."""
    return float(model.score_many(np.atleast_2d(np.asarray(x, dtype=float)), [y])[0])


# -- k-NN one-class score ----------------------------------------------------


@dataclass(frozen=True)
class KnnOneClassModel:
    """Mean distance to the k nearest training points, in the raw coordinates."""

    train_covariates: np.ndarray
    k: int

    def score_many(self, x) -> np.ndarray:
        q = _as_matrix(x)
        idx = _knn_indices(self.train_covariates, q, self.k)
        diffs = q[:, None, :] - self.train_covariates[idx]
        dists = np.sqrt(np.einsum("ijk,ijk->ij", diffs, diffs))
        return dists.mean(axis=1)


def fit_knn_one_class(train_x, k: int) -> KnnOneClassModel:
    x = _as_matrix(train_x)
    if x.shape[0] == 0:
        raise FitError("empty training set")
    if k > x.shape[0] or k < 1:
        raise FitError(f"k={k} out of range for {x.shape[0]} training rows")
    return KnnOneClassModel(train_covariates=x, k=k)


def one_class_score(model: KnnOneClassModel, x) -> float:
    return float(model.score_many(np.atleast_2d(np.asarray(x, dtype=float)))[0])


# -- logistic regression (IRLS) ----------------------------------------------

_PROB_CLIP = 1e-12


@dataclass(frozen=True)
class LogisticModel:
    """L2-penalized logistic classifier fitted by IRLS.

    Features are standardized internally with training statistics; the
    reported ``weights``/``intercept`` act on the standardized scale.
    Predicted probabilities are clipped away from {0, 1}.
    """

    weights: np.ndarray
    intercept: float
    converged: bool
    iterations: int
    _mean: np.ndarray = field(repr=False, default=None)
    _sd: np.ndarray = field(repr=False, default=None)

    def _linear(self, x) -> np.ndarray:
        z = (_as_matrix(x) - self._mean) / self._sd
        return z @ self.weights + self.intercept

    def predict_proba(self, x) -> np.ndarray:
        p = 1.0 / (1.0 + np.exp(-self._linear(x)))
        return np.clip(p, _PROB_CLIP, 1.0 - _PROB_CLIP)

    def predict_odds_many(self, x) -> np.ndarray:
        p = self.predict_proba(x)
        return p / (1.0 - p)


def fit_logistic(
    features,
    labels,
    l2: float = 1e-4,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> LogisticModel:
    """Maximize the L2-penalized log-likelihood by IRLS.

    The intercept is not penalized.  Iterates until the penalized gradient
    norm falls below ``tol`` or ``max_iter`` is reached.
    """
    x = _as_matrix(features)
    y = np.asarray(labels, dtype=float)
    if set(np.unique(y)) - {0.0, 1.0}:
        raise ValueError("labels must be binary 0/1")
    if y.min() == y.max():
        raise FitError("both classes must be present")
    if l2 < 0:
        raise ValueError("l2 penalty must be nonnegative")
    mean, sd = _standardizer(x)
    z = (x - mean) / sd
    n, d = z.shape
    design = np.hstack([np.ones((n, 1)), z])
    pen = np.full(d + 1, l2)
    pen[0] = 0.0  # unpenalized intercept
    beta = np.zeros(d + 1)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = np.clip(design @ beta, -35.0, 35.0)
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = design.T @ (y - p) - pen * beta
        if np.linalg.norm(grad) <= tol:
            converged = True
            break
        w = np.maximum(p * (1.0 - p), 1e-10)
        hess = (design * w[:, None]).T @ design + np.diag(pen)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise FitError("singular IRLS system") from exc
        beta = beta + step
    return LogisticModel(
        weights=beta[1:],
        intercept=float(beta[0]),
        converged=converged,
        iterations=it,
        _mean=mean,
        _sd=sd,
    )


def predict_odds(model: LogisticModel, x) -> float:
    """Odds ``p / (1 - p)`` at one point; with equal class sizes this
    estimates the class-1-to-class-0 density ratio."""
    return float(model.predict_odds_many(np.atleast_2d(np.asarray(x, dtype=float)))[0])


def conditional_density_ratio_score(
    joint_model: LogisticModel, marginal_model: LogisticModel, x, y
) -> float:
    """Conditional density ratio estimate ``f_2(y|x) / f_1(y|x)``.

    ``joint_model`` distinguishes the two samples on ``(x, y)`` features and
    ``marginal_model`` on ``x`` alone (sample 1 labeled 0, sample 2 labeled
    1, equal class sizes); the ratio of their odds cancels the covariate
    shift and leaves the conditional ratio.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xy = np.concatenate([x, np.atleast_1d(np.asarray(y, dtype=float))])
    return predict_odds(joint_model, xy) / predict_odds(marginal_model, x)


def conditional_density_ratio_scores(
    joint_model: LogisticModel, marginal_model: LogisticModel, x, y
) -> np.ndarray:
    """Vectorized :func:`conditional_density_ratio_score`."""
    x = _as_matrix(x)
    xy = np.hstack([x, np.asarray(y, dtype=float).reshape(len(x), -1)])
    return joint_model.predict_odds_many(xy) / marginal_model.predict_odds_many(x)
