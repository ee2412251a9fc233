"""Domain conformal bound (DCB) calibration and conformance scoring (SDCD).

Calibration splits the labeled source features into a training half I_T and a
validation half I_V, measures the source's intrinsic robustness baseline
sigma on I_T (leave-one-out), turns I_V into residuals R_j = rho(x_j, I_T) -
sigma, and derives a conformance interval C from the sorted residuals.  A
target sample conforms when its own residual against the full source falls
inside C; the SDCD of a target domain is the conforming percentage.

Two interval constructions are supported:

* ``standard`` (default): d is the ceil((n+1)(1-alpha))-th smallest residual
  and C = [-sigma, d].  Residuals can never fall below -sigma (robustness is
  nonnegative), so this is the classical one-sided split-conformal bound and
  carries the finite-sample coverage guarantee >= 1 - alpha under
  exchangeability.
* ``paper``: d is the ceil((n/2+1)(1-alpha))-th smallest residual and
  C = [d - std(R), d + std(R)].  Kept for comparison; its empirical coverage
  on exchangeable data is substantially below 1 - alpha because the band is
  one residual standard deviation around a mid-quantile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FeatureMatrix, GaussianModel
from .divergence import (
    RobustnessConfig,
    RobustnessVariant,
    make_robustness_config,
    robustness_batch,
)
from .persistence import content_hash

__all__ = [
    "QUANTILE_STANDARD",
    "QUANTILE_PAPER",
    "DcbCalibration",
    "SdcdReport",
    "dcb_compute",
    "sdcd",
    "coverage_check",
]

QUANTILE_STANDARD = "standard"
QUANTILE_PAPER = "paper"


@dataclass(frozen=True)
class DcbCalibration:
    """Calibration artifact: robustness baseline, interval, and split metadata."""

    sigma: float
    interval_lo: float
    interval_hi: float
    alpha: float
    k_index: int
    split_seed: int
    n_train: int
    n_val: int
    robustness_config: RobustnessConfig
    feature_columns: tuple[str, ...]
    residual_std: float
    quantile_mode: str = QUANTILE_STANDARD
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        if self.interval_lo > self.interval_hi:
            raise ValueError(
                f"interval_lo {self.interval_lo} > interval_hi {self.interval_hi}"
            )
        if not (1 <= self.k_index <= self.n_val):
            raise ValueError(f"k_index {self.k_index} outside [1, {self.n_val}]")
        if self.quantile_mode not in (QUANTILE_STANDARD, QUANTILE_PAPER):
            raise ValueError(f"unknown quantile_mode {self.quantile_mode!r}")

    def to_payload(self) -> dict:
        metric = self.robustness_config.metric_model
        return {
            "sigma": float(self.sigma),
            "interval_lo": float(self.interval_lo),
            "interval_hi": float(self.interval_hi),
            "alpha": float(self.alpha),
            "k_index": int(self.k_index),
            "split_seed": int(self.split_seed),
            "n_train": int(self.n_train),
            "n_val": int(self.n_val),
            "residual_std": float(self.residual_std),
            "quantile_mode": self.quantile_mode,
            "degenerate": bool(self.degenerate),
            "feature_columns": list(self.feature_columns),
            "robustness": {
                "variant": self.robustness_config.variant.value,
                "metric": {
                    "mean": [float(v) for v in metric.mean],
                    "covariance": [[float(v) for v in row] for row in metric.covariance],
                    "ridge_eps": float(metric.ridge_eps),
                    "degenerate": bool(metric.degenerate),
                },
            },
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "DcbCalibration":
        met = payload["robustness"]["metric"]
        cov = np.asarray(met["covariance"], dtype=float)
        eps = float(met["ridge_eps"])
        precision = np.linalg.inv(cov + eps * np.eye(cov.shape[0]))
        precision = (precision + precision.T) / 2.0
        model = GaussianModel(
            np.asarray(met["mean"], dtype=float),
            cov,
            precision,
            eps,
            degenerate=bool(met["degenerate"]),
        )
        config = RobustnessConfig(
            RobustnessVariant(payload["robustness"]["variant"]), model
        )
        return cls(
            sigma=float(payload["sigma"]),
            interval_lo=float(payload["interval_lo"]),
            interval_hi=float(payload["interval_hi"]),
            alpha=float(payload["alpha"]),
            k_index=int(payload["k_index"]),
            split_seed=int(payload["split_seed"]),
            n_train=int(payload["n_train"]),
            n_val=int(payload["n_val"]),
            robustness_config=config,
            feature_columns=tuple(payload["feature_columns"]),
            residual_std=float(payload["residual_std"]),
            quantile_mode=str(payload["quantile_mode"]),
            degenerate=bool(payload["degenerate"]),
        )

    def fingerprint(self) -> str:
        return content_hash(self.to_payload())


@dataclass(frozen=True)
class SdcdReport:
    """Per-target conformance: percentage plus per-sample residuals."""

    target_name: str
    sdcd_percent: float
    residuals: tuple[tuple[str, float, bool], ...]
    calibration_ref: str

    def __post_init__(self):
        object.__setattr__(self, "residuals", tuple(self.residuals))
        if not self.residuals:
            raise ValueError("report needs at least one residual")
        expected = 100.0 * sum(1 for _, _, ok in self.residuals if ok) / len(self.residuals)
        if abs(expected - self.sdcd_percent) > 1e-9:
            raise ValueError(
                f"sdcd_percent {self.sdcd_percent} != in-bounds fraction {expected}"
            )

    def to_payload(self) -> dict:
        return {
            "target_name": self.target_name,
            "sdcd_percent": float(self.sdcd_percent),
            "residuals": [
                {"id": sid, "residual": float(r), "in_bounds": bool(ok)}
                for sid, r, ok in self.residuals
            ],
            "calibration_ref": self.calibration_ref,
        }


def _leave_one_out_robustness(rows: np.ndarray, config: RobustnessConfig) -> np.ndarray:
    out = np.empty(rows.shape[0])
    for i in range(rows.shape[0]):
        ref = np.delete(rows, i, axis=0)
        out[i] = robustness_batch(rows[i : i + 1], ref, config)[0]
    return out


def _quantile_index(n_val: int, alpha: float, mode: str) -> int:
    if mode == QUANTILE_PAPER:
        k = math.ceil((n_val / 2 + 1) * (1.0 - alpha))
    elif mode == QUANTILE_STANDARD:
        k = math.ceil((n_val + 1) * (1.0 - alpha))
    else:
        raise ValueError(f"unknown quantile_mode {mode!r}")
    return min(max(k, 1), n_val)


def dcb_compute(
    source_features: FeatureMatrix,
    alpha: float,
    config: RobustnessConfig,
    split_seed: int,
    quantile_mode: str = QUANTILE_STANDARD,
) -> DcbCalibration:
    """Calibrate the domain conformal bound on labeled source features.

    Deterministic given ``split_seed``: a uniform random permutation assigns
    rows to the two halves (an odd row goes to the training half).
    """
    n = source_features.n_rows
    if n < 4:
        raise ValueError(f"calibration needs at least 4 source rows, got {n}")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if config.metric_model.dim != source_features.n_cols:
        raise ValueError(
            f"metric model dimension {config.metric_model.dim} != "
            f"feature dimension {source_features.n_cols}"
        )

    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(n)
    n_train = (n + 1) // 2
    train_rows = source_features.rows[perm[:n_train]]
    val_rows = source_features.rows[perm[n_train:]]
    n_val = val_rows.shape[0]

    sigma = float(_leave_one_out_robustness(train_rows, config).mean())
    residuals = robustness_batch(val_rows, train_rows, config) - sigma
    residuals_sorted = np.sort(residuals)
    k = _quantile_index(n_val, alpha, quantile_mode)
    d = float(residuals_sorted[k - 1])
    residual_std = float(np.std(residuals, ddof=1)) if n_val > 1 else 0.0

    if quantile_mode == QUANTILE_PAPER:
        lo, hi = d - residual_std, d + residual_std
    else:
        lo, hi = -sigma, d
    if lo > hi:
        # All-identical degenerate features can put d slightly below -sigma
        # through round-off; collapse to a width-zero interval.
        lo = hi

    return DcbCalibration(
        sigma=sigma,
        interval_lo=lo,
        interval_hi=hi,
        alpha=float(alpha),
        k_index=k,
        split_seed=int(split_seed),
        n_train=n_train,
        n_val=n_val,
        robustness_config=config,
        feature_columns=source_features.columns,
        residual_std=residual_std,
        quantile_mode=quantile_mode,
        degenerate=bool(residual_std == 0.0),
    )


def _check_columns(columns, expected, what: str) -> None:
    columns = tuple(columns)
    expected = tuple(expected)
    if len(columns) != len(expected):
        raise ValueError(
            f"{what} has {len(columns)} columns, calibration expects {len(expected)}"
        )
    for i, (got, want) in enumerate(zip(columns, expected)):
        if got != want:
            raise ValueError(
                f"{what} column mismatch at index {i}: expected {want!r}, got {got!r}"
            )


def sdcd(
    target_features: FeatureMatrix,
    source_features: FeatureMatrix,
    calibration: DcbCalibration,
    target_name: str = "target",
) -> SdcdReport:
    """Score a target domain against a source calibration.

    Each target row's residual is its robustness against the full source
    feature matrix minus the calibrated sigma; it conforms when the residual
    lies inside the closed interval [interval_lo, interval_hi].
    """
    if target_features.n_rows == 0:
        raise ValueError("target feature matrix is empty")
    _check_columns(target_features.columns, calibration.feature_columns, "target")
    _check_columns(source_features.columns, calibration.feature_columns, "source")

    residuals = (
        robustness_batch(
            target_features.rows, source_features.rows, calibration.robustness_config
        )
        - calibration.sigma
    )
    in_bounds = (residuals >= calibration.interval_lo) & (
        residuals <= calibration.interval_hi
    )
    percent = 100.0 * float(in_bounds.sum()) / len(residuals)
    entries = tuple(
        (sid, float(r), bool(ok))
        for sid, r, ok in zip(target_features.ids, residuals, in_bounds)
    )
    return SdcdReport(
        target_name=target_name,
        sdcd_percent=percent,
        residuals=entries,
        calibration_ref=calibration.fingerprint(),
    )


def coverage_check(
    source_features: FeatureMatrix,
    alpha: float,
    n_trials: int,
    seed: int,
    variant: RobustnessVariant = RobustnessVariant.DISTRIBUTION_DIRECT,
    ridge_eps: float | None = None,
    quantile_mode: str = QUANTILE_STANDARD,
) -> float:
    """Empirical self-coverage under repeated random sub-splits.

    Each trial calibrates on a random two-thirds of the rows and scores the
    held-out third as if it were a target; returns the mean in-bounds rate.
    """
    n = source_features.n_rows
    if n < 12:
        raise ValueError(f"coverage check needs at least 12 rows, got {n}")
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")

    children = np.random.SeedSequence(seed).spawn(n_trials)
    rates = []
    for child in children:
        rng = np.random.default_rng(child)
        perm = rng.permutation(n)
        n_cal = (2 * n) // 3
        cal = source_features.take(perm[:n_cal])
        held = source_features.take(perm[n_cal:])
        config = make_robustness_config(cal, variant, ridge_eps)
        split_seed = int(child.generate_state(1)[0])
        calibration = dcb_compute(cal, alpha, config, split_seed, quantile_mode)
        report = sdcd(held, cal, calibration, target_name="held-out")
        rates.append(report.sdcd_percent / 100.0)
    return float(np.mean(rates))
