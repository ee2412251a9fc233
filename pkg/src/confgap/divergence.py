"""Distribution fitting and distance machinery.

Implements the Gaussian fit used as reference distribution, KL divergence
between Gaussians, Mahalanobis distance to a fitted distribution, and the
robustness metric (distance of one feature vector from a reference set) in
its two variants:

* ``PAIRWISE_MEAN``: mean Mahalanobis distance from the query vector to each
  reference row, using a fixed metric tensor supplied via the config.
* ``DISTRIBUTION_DIRECT``: single Mahalanobis distance to the Gaussian fitted
  on the reference rows themselves.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import FeatureMatrix, GaussianModel, default_ridge_eps

__all__ = [
    "RobustnessVariant",
    "RobustnessConfig",
    "fit_gaussian",
    "make_robustness_config",
    "kl_divergence",
    "mahalanobis",
    "robustness",
    "robustness_batch",
]


class RobustnessVariant(enum.Enum):
    PAIRWISE_MEAN = "pairwise_mean"
    DISTRIBUTION_DIRECT = "distribution_direct"


@dataclass(frozen=True)
class RobustnessConfig:
    """Which robustness variant to use, and the metric model backing it.

    ``metric_model`` supplies the precision matrix used as metric tensor by
    the pairwise variant; the direct variant refits on the reference rows and
    only reuses the model's ``ridge_eps``.
    """

    variant: RobustnessVariant
    metric_model: GaussianModel


def _as_rows(reference) -> np.ndarray:
    rows = reference.rows if isinstance(reference, FeatureMatrix) else np.asarray(reference, float)
    if rows.ndim != 2:
        raise ValueError(f"reference must be a 2-D matrix, got shape {rows.shape}")
    return rows


def _fit_rows(rows: np.ndarray, ridge_eps: float | None) -> GaussianModel:
    """Gaussian fit on raw rows.  A single row yields a degenerate model
    centered on it (zero covariance), which keeps leave-one-out loops over
    very small reference sets well defined."""
    n, f = rows.shape
    mean = rows.mean(axis=0)
    if n >= 2:
        centered = rows - mean
        cov = centered.T @ centered / (n - 1)
        cov = (cov + cov.T) / 2.0
    else:
        cov = np.zeros((f, f))
    eps = default_ridge_eps(cov) if ridge_eps is None else float(ridge_eps)
    if eps <= 0:
        raise ValueError(f"ridge_eps must be positive, got {eps}")
    eigvals = np.linalg.eigvalsh(cov)
    degenerate = bool(eigvals.min() < 1e-12 * max(1.0, float(eigvals.max())))
    precision = np.linalg.inv(cov + eps * np.eye(f))
    precision = (precision + precision.T) / 2.0
    return GaussianModel(mean, cov, precision, eps, degenerate=degenerate)


def fit_gaussian(features, ridge_eps: float | None = None) -> GaussianModel:
    """Fit mean and unbiased (N-1 divisor) covariance to the feature rows.

    ``ridge_eps`` defaults to 1e-8 * trace/F and is added to the diagonal
    before inversion; a zero-variance fit is returned flagged as degenerate
    rather than rejected.
    """
    rows = _as_rows(features)
    if rows.shape[0] < 2:
        raise ValueError(f"need at least 2 rows to fit a Gaussian, got {rows.shape[0]}")
    if not np.isfinite(rows).all():
        raise ValueError("feature rows contain non-finite values")
    return _fit_rows(rows, ridge_eps)


def make_robustness_config(
    source_features,
    variant: RobustnessVariant = RobustnessVariant.DISTRIBUTION_DIRECT,
    ridge_eps: float | None = None,
) -> RobustnessConfig:
    """Convenience constructor: fit the metric model on the source features."""
    return RobustnessConfig(variant, fit_gaussian(source_features, ridge_eps))


def kl_divergence(p: GaussianModel, r: GaussianModel) -> float:
    """KL divergence of distribution p from reference r:

        0.5 * [ln(det S_r / det S_p) - k + tr(S_r^-1 S_p) + dmu^T S_r^-1 dmu]

    with dmu = mu_r - mu_p and each covariance regularized by its own
    ridge_eps.  Asymmetric by construction; always >= 0 up to round-off.
    """
    if p.dim != r.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {r.dim}")
    k = p.dim
    eye = np.eye(k)
    sp = p.covariance + p.ridge_eps * eye
    sr = r.covariance + r.ridge_eps * eye
    sign_p, logdet_p = np.linalg.slogdet(sp)
    sign_r, logdet_r = np.linalg.slogdet(sr)
    if sign_p <= 0 or sign_r <= 0:
        raise ValueError("covariance not positive definite after regularization")
    sr_inv = r.precision
    dmu = r.mean - p.mean
    value = 0.5 * (
        logdet_r - logdet_p - k + float(np.trace(sr_inv @ sp)) + float(dmu @ sr_inv @ dmu)
    )
    return max(value, 0.0)


def mahalanobis(x, model: GaussianModel) -> float:
    """Distance of point x from the model: sqrt((x-mu)^T P (x-mu)) with the
    regularized precision P."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"dimension mismatch: point {x.shape} vs model ({model.dim},)")
    diff = x - model.mean
    q = float(diff @ model.precision @ diff)
    return float(np.sqrt(max(q, 0.0)))


def _pairwise_mean_batch(rows: np.ndarray, ref: np.ndarray, precision: np.ndarray) -> np.ndarray:
    # d(x, k)^2 = ||(x - k) L||^2 with P = L L^T, so distances reduce to
    # Euclidean geometry after mapping through the Cholesky factor.
    prec = (precision + precision.T) / 2.0
    chol = np.linalg.cholesky(prec)
    a = rows @ chol
    b = ref @ chol
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    np.clip(sq, 0.0, None, out=sq)
    return np.sqrt(sq).mean(axis=1)


def robustness_batch(rows, reference, config: RobustnessConfig) -> np.ndarray:
    """Vectorized robustness of many query rows against one reference set."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    ref = _as_rows(reference)
    if ref.shape[0] == 0:
        raise ValueError("reference set is empty")
    if rows.shape[1] != ref.shape[1]:
        raise ValueError(f"dimension mismatch: {rows.shape[1]} vs reference {ref.shape[1]}")
    if config.variant is RobustnessVariant.PAIRWISE_MEAN:
        if config.metric_model.dim != ref.shape[1]:
            raise ValueError("metric model dimension does not match features")
        return _pairwise_mean_batch(rows, ref, config.metric_model.precision)
    model = _fit_rows(ref, config.metric_model.ridge_eps)
    diff = rows - model.mean
    q = np.einsum("nf,fg,ng->n", diff, model.precision, diff)
    return np.sqrt(np.clip(q, 0.0, None))


def robustness(x, reference, config: RobustnessConfig) -> float:
    """Robustness of a single feature vector against a reference set.

    When x itself belongs to the reference population, pass the reference
    with that row removed (leave-one-out semantics); the divisor of the
    pairwise variant is always the number of reference rows given.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"x must be a vector, got shape {x.shape}")
    return float(robustness_batch(x[None, :], reference, config)[0])
