"""Shared domain types: samples, domains, feature matrices, and Gaussian models.

Everything here is immutable after construction (arrays are marked read-only),
so instances can be shared freely across threads and reused between pipeline
stages.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainKind",
    "FeatureKind",
    "DomainSample",
    "Domain",
    "FeatureMatrix",
    "GaussianModel",
    "default_ridge_eps",
    "validate_domain",
]


class DomainKind(enum.Enum):
    SOURCE = "source"
    TARGET = "target"


class FeatureKind(enum.Enum):
    DATA_DERIVED = "data_derived"
    KNOWLEDGE = "knowledge"
    FUSED = "fused"


def _frozen_array(values, ndim: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DomainSample:
    """One observation: an optional trajectory (T steps x S state variables),
    an optional knowledge vector, and an optional class label.

    Content rules (finiteness, minimum length, label presence) are checked by
    :func:`validate_domain`, which reports instead of raising.
    """

    id: str
    trajectory: np.ndarray | None = None
    knowledge: np.ndarray | None = None
    label: int | None = None

    def __post_init__(self):
        if self.trajectory is not None:
            object.__setattr__(
                self, "trajectory", _frozen_array(self.trajectory, 2, "trajectory")
            )
        if self.knowledge is not None:
            object.__setattr__(
                self, "knowledge", _frozen_array(self.knowledge, 1, "knowledge")
            )


@dataclass(frozen=True)
class Domain:
    """A named, ordered collection of samples.

    Source domains are expected to be fully labeled; target domains may be
    unlabeled.  ``knowledge_columns`` names the components of the samples'
    knowledge vectors, shared by every sample in the domain.
    """

    name: str
    samples: tuple[DomainSample, ...]
    kind: DomainKind
    knowledge_columns: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.knowledge_columns is not None:
            object.__setattr__(
                self, "knowledge_columns", tuple(str(c) for c in self.knowledge_columns)
            )

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        """Label vector; raises if any sample is unlabeled."""
        out = []
        for s in self.samples:
            if s.label is None:
                raise ValueError(f"sample {s.id!r} has no label")
            out.append(int(s.label))
        return np.asarray(out, dtype=int)


@dataclass(frozen=True)
class FeatureMatrix:
    """N x F matrix of per-sample feature vectors with named columns.

    Rows are aligned with ``ids``; ``source_kind`` records whether the
    features came from data, from knowledge vectors, or from fusing both.
    """

    columns: tuple[str, ...]
    rows: np.ndarray
    source_kind: FeatureKind
    ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(str(c) for c in self.columns))
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        rows = _frozen_array(self.rows, 2, "rows")
        object.__setattr__(self, "rows", rows)
        if rows.shape[1] != len(self.columns):
            raise ValueError(
                f"column count {rows.shape[1]} != name count {len(self.columns)}"
            )
        if rows.shape[0] != len(self.ids):
            raise ValueError(f"row count {rows.shape[0]} != id count {len(self.ids)}")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("column names must be unique")
        if not np.isfinite(rows).all():
            raise ValueError("feature matrix contains non-finite entries")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_cols(self) -> int:
        return self.rows.shape[1]

    def select(self, columns) -> "FeatureMatrix":
        """New matrix restricted to the given columns, in the given order."""
        columns = tuple(columns)
        index = {c: j for j, c in enumerate(self.columns)}
        missing = [c for c in columns if c not in index]
        if missing:
            raise ValueError(f"unknown columns: {missing}")
        take = [index[c] for c in columns]
        return FeatureMatrix(columns, self.rows[:, take], self.source_kind, self.ids)

    def take(self, indices) -> "FeatureMatrix":
        """New matrix restricted to the given row indices."""
        indices = np.asarray(indices, dtype=int)
        return FeatureMatrix(
            self.columns,
            self.rows[indices],
            self.source_kind,
            tuple(self.ids[i] for i in indices),
        )

    def replace_rows(self, rows) -> "FeatureMatrix":
        """Same columns/ids/kind with new row values (e.g. after adding noise)."""
        return FeatureMatrix(self.columns, rows, self.source_kind, self.ids)

    @classmethod
    def from_knowledge(cls, domain: Domain) -> "FeatureMatrix":
        """Assemble the knowledge matrix of a domain (one row per sample)."""
        if domain.knowledge_columns is None:
            raise ValueError(f"domain {domain.name!r} has no knowledge columns")
        rows, ids = [], []
        for s in domain.samples:
            if s.knowledge is None:
                raise ValueError(f"sample {s.id!r} has no knowledge vector")
            if len(s.knowledge) != len(domain.knowledge_columns):
                raise ValueError(
                    f"sample {s.id!r} knowledge length {len(s.knowledge)} != "
                    f"{len(domain.knowledge_columns)} columns"
                )
            rows.append(s.knowledge)
            ids.append(s.id)
        return cls(domain.knowledge_columns, np.vstack(rows), FeatureKind.KNOWLEDGE, tuple(ids))


def default_ridge_eps(covariance: np.ndarray) -> float:
    """Diagonal regularizer used before inverting a covariance matrix.

    Scales with the average variance (1e-8 * trace/F); floored at a tiny
    positive value so that an all-zero covariance still inverts.
    """
    cov = np.asarray(covariance, dtype=float)
    f = cov.shape[0]
    eps = 1e-8 * float(np.trace(cov)) / max(f, 1)
    return max(eps, 1e-12)


@dataclass(frozen=True)
class GaussianModel:
    """Mean + covariance fit, with a pre-computed regularized inverse.

    ``precision`` is the inverse of ``covariance + ridge_eps * I`` and is the
    metric tensor used for all Mahalanobis-type distances.  ``degenerate``
    marks fits whose covariance was singular at working precision.
    """

    mean: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray
    ridge_eps: float
    degenerate: bool = False

    def __post_init__(self):
        mean = _frozen_array(self.mean, 1, "mean")
        cov = _frozen_array(self.covariance, 2, "covariance")
        prec = _frozen_array(self.precision, 2, "precision")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "precision", prec)
        object.__setattr__(self, "ridge_eps", float(self.ridge_eps))
        f = mean.shape[0]
        if cov.shape != (f, f) or prec.shape != (f, f):
            raise ValueError("covariance/precision shape must match mean dimension")
        if not np.all(np.abs(cov - cov.T) <= 1e-10):
            raise ValueError("covariance is not symmetric within 1e-10")
        regularized = cov + self.ridge_eps * np.eye(f)
        eigmin = float(np.linalg.eigvalsh(regularized).min())
        if eigmin <= -1e-10 * max(1.0, float(np.abs(cov).max())):
            raise ValueError("covariance not positive semidefinite after regularization")
        residual = prec @ regularized - np.eye(f)
        if np.abs(residual).max() > 1e-6:
            raise ValueError("precision is not the inverse of the regularized covariance")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _knowledge_consensus_length(domain: Domain) -> int | None:
    """Expected knowledge length: declared columns, else the most common
    length among samples (ties break toward the smaller value, so the result
    does not depend on sample order)."""
    if domain.knowledge_columns is not None:
        return len(domain.knowledge_columns)
    lengths = [len(s.knowledge) for s in domain.samples if s.knowledge is not None]
    if not lengths:
        return None
    counts = Counter(lengths)
    best = max(counts.values())
    return min(n for n, c in counts.items() if c == best)


def validate_domain(domain: Domain) -> list[str]:
    """Check every domain invariant; returns violation descriptions.

    Never raises: a well-formed domain yields an empty list.  The result is
    order-independent (permuting samples yields the same violation set).
    """
    violations: list[str] = []
    is_source = domain.kind is DomainKind.SOURCE

    if is_source and len(domain.samples) < 4:
        violations.append("source requires ≥ 4 samples")

    consensus = _knowledge_consensus_length(domain)

    for s in domain.samples:
        if s.trajectory is None and s.knowledge is None:
            violations.append(f"sample {s.id}: needs a trajectory or a knowledge vector")
        if s.trajectory is not None:
            if s.trajectory.shape[0] < 2:
                violations.append(
                    f"sample {s.id}: trajectory has {s.trajectory.shape[0]} rows, need >= 2"
                )
            if not np.isfinite(s.trajectory).all():
                violations.append(f"sample {s.id}: trajectory contains non-finite values")
        if s.knowledge is not None:
            if not np.isfinite(s.knowledge).all():
                violations.append(f"sample {s.id}: knowledge contains non-finite values")
            if consensus is not None and len(s.knowledge) != consensus:
                violations.append(
                    f"sample {s.id}: knowledge length {len(s.knowledge)} differs from"
                    f" domain consensus {consensus}"
                )
        if is_source:
            if s.label is None:
                violations.append(f"sample {s.id}: missing label (source domains require labels)")
            elif int(s.label) < 0:
                violations.append(f"sample {s.id}: label must be a non-negative integer")

    return violations
