"""Knowledge refinement: feature fusion and SDCD-guided ablation search.

Ablation evaluates feature-column subsets across a list of (source, target)
pairs: for each candidate subset the source calibration is recomputed on the
reduced columns (same split seed throughout, so subset comparisons are not
confounded by split noise), the SDCD of every pair is rescored, and the
subset with the best average SDCD wins.  Greedy removal with
strict-improvement stopping is the default; exhaustive enumeration over at
most 12 removable columns serves as the ground-truth oracle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import combinations
from types import MappingProxyType

import numpy as np

from .conformal import QUANTILE_STANDARD, dcb_compute, sdcd
from .core import FeatureKind, FeatureMatrix
from .divergence import RobustnessVariant, make_robustness_config

__all__ = [
    "AblationStrategy",
    "AblationStep",
    "AblationTrace",
    "fuse",
    "ablation_search",
]

EXHAUSTIVE_MAX_COLUMNS = 12


class AblationStrategy(enum.Enum):
    GREEDY_SEQUENTIAL = "greedy_sequential"
    EXHAUSTIVE_SMALL = "exhaustive_small"


@dataclass(frozen=True)
class AblationStep:
    """One evaluation: which columns were removed and the resulting SDCDs.

    ``removed_columns`` is empty for the no-ablation baseline and may hold
    several names for exhaustive subsets or cumulative greedy evaluations.
    """

    removed_columns: tuple[str, ...]
    avg_sdcd: float
    per_pair_sdcd: MappingProxyType

    def __post_init__(self):
        object.__setattr__(self, "removed_columns", tuple(self.removed_columns))
        object.__setattr__(
            self, "per_pair_sdcd", MappingProxyType(dict(self.per_pair_sdcd))
        )
        values = list(self.per_pair_sdcd.values())
        if values and abs(float(np.mean(values)) - self.avg_sdcd) > 1e-9:
            raise ValueError("avg_sdcd is not the mean of per_pair_sdcd")

    def to_payload(self) -> dict:
        return {
            "removed_columns": list(self.removed_columns),
            "avg_sdcd": float(self.avg_sdcd),
            "per_pair_sdcd": {k: float(v) for k, v in self.per_pair_sdcd.items()},
        }


@dataclass(frozen=True)
class AblationTrace:
    steps: tuple[AblationStep, ...]
    best_subset: tuple[str, ...]
    best_avg_sdcd: float
    strategy: AblationStrategy

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "best_subset", tuple(self.best_subset))
        if not self.steps:
            raise ValueError("trace needs at least the baseline step")
        top = max(step.avg_sdcd for step in self.steps)
        if abs(top - self.best_avg_sdcd) > 1e-9:
            raise ValueError(f"best_avg_sdcd {self.best_avg_sdcd} != max step value {top}")

    def to_payload(self) -> dict:
        return {
            "steps": [s.to_payload() for s in self.steps],
            "best_subset": list(self.best_subset),
            "best_avg_sdcd": float(self.best_avg_sdcd),
            "strategy": self.strategy.value,
        }


def fuse(data: FeatureMatrix, knowledge: FeatureMatrix) -> FeatureMatrix:
    """Column-wise concatenation, data columns first, rows aligned by id."""
    if data.n_rows != knowledge.n_rows:
        raise ValueError(
            f"row count mismatch: data has {data.n_rows}, knowledge has {knowledge.n_rows}"
        )
    for i, (a, b) in enumerate(zip(data.ids, knowledge.ids)):
        if a != b:
            raise ValueError(f"sample id mismatch at row {i}: {a!r} vs {b!r}")
    rows = np.hstack([data.rows, knowledge.rows])
    return FeatureMatrix(
        data.columns + knowledge.columns, rows, FeatureKind.FUSED, data.ids
    )


def _evaluate_subset(
    pairs,
    kept_columns,
    alpha,
    variant,
    ridge_eps,
    split_seed,
    quantile_mode,
) -> tuple[float, dict[str, float]]:
    per_pair: dict[str, float] = {}
    for idx, (source, target) in enumerate(pairs):
        src = source.select(kept_columns)
        tgt = target.select(kept_columns)
        config = make_robustness_config(src, variant, ridge_eps)
        calibration = dcb_compute(src, alpha, config, split_seed, quantile_mode)
        report = sdcd(tgt, src, calibration, target_name=f"pair{idx}")
        per_pair[f"pair{idx}"] = report.sdcd_percent
    return float(np.mean(list(per_pair.values()))), per_pair


def ablation_search(
    pairs,
    removable,
    alpha: float,
    variant: RobustnessVariant = RobustnessVariant.DISTRIBUTION_DIRECT,
    ridge_eps: float | None = None,
    split_seed: int = 0,
    quantile_mode: str = QUANTILE_STANDARD,
    strategy: AblationStrategy = AblationStrategy.GREEDY_SEQUENTIAL,
) -> AblationTrace:
    """Search removable-column subsets for the best average SDCD.

    The trace records every evaluation, starting with the no-ablation
    baseline; the reported best is never below the baseline.  Ties between
    equally good removals break lexicographically by column name.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one (source, target) pair")
    columns = pairs[0][0].columns
    for source, target in pairs:
        if source.columns != columns or target.columns != columns:
            raise ValueError("all pair matrices must share the same columns")
    removable = tuple(removable)
    unknown = [c for c in removable if c not in columns]
    if unknown:
        raise ValueError(f"removable columns not in the matrices: {unknown}")
    if len(set(removable)) != len(removable):
        raise ValueError("removable column names must be unique")
    if strategy is AblationStrategy.EXHAUSTIVE_SMALL and len(removable) > EXHAUSTIVE_MAX_COLUMNS:
        raise ValueError(
            f"exhaustive search supports at most {EXHAUSTIVE_MAX_COLUMNS} removable "
            f"columns, got {len(removable)}"
        )

    def evaluate(removed: tuple[str, ...]) -> AblationStep:
        kept = [c for c in columns if c not in removed]
        avg, per_pair = _evaluate_subset(
            pairs, kept, alpha, variant, ridge_eps, split_seed, quantile_mode
        )
        return AblationStep(removed, avg, per_pair)

    steps: list[AblationStep] = [evaluate(())]
    best = steps[0]

    if strategy is AblationStrategy.GREEDY_SEQUENTIAL:
        committed: tuple[str, ...] = ()
        remaining = sorted(removable)
        while remaining:
            round_best: AblationStep | None = None
            for name in remaining:
                if len(committed) + 1 >= len(columns):
                    break  # never empty the feature set
                step = evaluate(committed + (name,))
                steps.append(step)
                if round_best is None or step.avg_sdcd > round_best.avg_sdcd:
                    round_best = step
            if round_best is None or round_best.avg_sdcd <= best.avg_sdcd:
                break
            best = round_best
            committed = round_best.removed_columns
            remaining = [c for c in remaining if c not in committed]
    else:
        for size in range(1, len(removable) + 1):
            if size >= len(columns):
                break
            for combo in combinations(sorted(removable), size):
                step = evaluate(combo)
                steps.append(step)
                if step.avg_sdcd > best.avg_sdcd:
                    best = step

    best_subset = tuple(c for c in columns if c not in best.removed_columns)
    return AblationTrace(
        steps=tuple(steps),
        best_subset=best_subset,
        best_avg_sdcd=best.avg_sdcd,
        strategy=strategy,
    )
