"""Data-derived causal-factor extraction via sparse dynamics identification.

Each sample's trajectory (T steps x S state variables) is regressed against a
library of candidate functions (monomials up to a maximum degree, optionally
sin/cos per state and a constant).  Sequential-thresholded ridge regression
(STRidge) prunes small coefficients and refits on the surviving support until
the support stabilizes; the flattened sparse coefficient matrix is the
sample's feature vector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .core import Domain, FeatureKind, FeatureMatrix

__all__ = [
    "CandidateLibrary",
    "StridgeParams",
    "SparseDynamicsModel",
    "ExtractionResult",
    "build_library",
    "estimate_derivatives",
    "stridge",
    "flatten_model",
    "extract_domain_features",
]


@dataclass(frozen=True)
class CandidateLibrary:
    """Configuration of the candidate-function library.

    Term order is deterministic: the constant (if enabled), then monomials by
    total degree 1..poly_max_degree (combinations with replacement within each
    degree), then sin per state, then cos per state.
    """

    poly_max_degree: int = 5
    include_trig: bool = True
    include_constant: bool = True

    def __post_init__(self):
        if self.poly_max_degree < 1:
            raise ValueError(f"poly_max_degree must be >= 1, got {self.poly_max_degree}")

    def monomial_exponents(self, n_states: int) -> list[tuple[int, ...]]:
        """Exponent vectors of all non-constant monomials, in column order."""
        out = []
        for degree in range(1, self.poly_max_degree + 1):
            for combo in combinations_with_replacement(range(n_states), degree):
                exps = [0] * n_states
                for i in combo:
                    exps[i] += 1
                out.append(tuple(exps))
        return out

    def term_names(self, n_states: int) -> list[str]:
        if n_states < 1:
            raise ValueError(f"n_states must be >= 1, got {n_states}")
        names = ["1"] if self.include_constant else []
        for exps in self.monomial_exponents(n_states):
            parts = []
            for i, e in enumerate(exps):
                if e == 1:
                    parts.append(f"x{i}")
                elif e > 1:
                    parts.append(f"x{i}^{e}")
            names.append("*".join(parts))
        if self.include_trig:
            names.extend(f"sin(x{i})" for i in range(n_states))
            names.extend(f"cos(x{i})" for i in range(n_states))
        return names

    def term_count(self, n_states: int) -> int:
        return len(self.term_names(n_states))


@dataclass(frozen=True)
class StridgeParams:
    """Knobs of the extraction pipeline.

    ``ds`` is the traversal-parameter step between trajectory rows.
    ``pca_rank``, when set, projects each trajectory onto its leading
    principal components before the library is built (experimental; default
    is the identity, i.e. no projection).
    """

    threshold: float = 0.05
    ridge_lambda: float = 1e-5
    max_iter: int = 20
    ds: float = 1.0
    pca_rank: int | None = None


@dataclass(frozen=True)
class SparseDynamicsModel:
    """STRidge output for one sample: S x L sparse coefficient matrix.

    Every coefficient is either exactly zero or at least ``threshold`` in
    magnitude.  ``flagged`` marks models where a singular restricted system
    forced a regularized fallback solve or the final residual was suspect.
    """

    library: CandidateLibrary | None
    xi: np.ndarray
    threshold: float
    ridge_lambda: float
    n_iterations: int
    flagged: bool = False

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float)
        if xi.ndim != 2:
            raise ValueError(f"xi must be 2-D (states x terms), got shape {xi.shape}")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    @property
    def n_states(self) -> int:
        return self.xi.shape[0]

    @property
    def n_terms(self) -> int:
        return self.xi.shape[1]


def build_library(trajectory, config: CandidateLibrary) -> np.ndarray:
    """Evaluate every library term row-wise on the trajectory.

    Returns the T x L design matrix; column j is term_names[j] evaluated on
    each trajectory row.
    """
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim == 1:
        traj = traj[:, None]
    if traj.ndim != 2:
        raise ValueError(f"trajectory must be 2-D, got shape {traj.shape}")
    t, s = traj.shape
    if t < 2 or s < 1:
        raise ValueError(f"trajectory must have T >= 2 and S >= 1, got {traj.shape}")
    finite_rows = np.isfinite(traj).all(axis=1)
    if not finite_rows.all():
        bad = int(np.flatnonzero(~finite_rows)[0])
        raise ValueError(f"trajectory contains non-finite values (first at row {bad})")

    cols = []
    if config.include_constant:
        cols.append(np.ones(t))
    for exps in config.monomial_exponents(s):
        col = np.ones(t)
        for i, e in enumerate(exps):
            if e:
                col = col * traj[:, i] ** e
        cols.append(col)
    if config.include_trig:
        for i in range(s):
            cols.append(np.sin(traj[:, i]))
        for i in range(s):
            cols.append(np.cos(traj[:, i]))
    return np.column_stack(cols)


def estimate_derivatives(trajectory, ds: float) -> np.ndarray:
    """Finite-difference derivative along the traversal parameter.

    Interior rows use central differences (x[t+1] - x[t-1]) / (2 ds);
    endpoints use one-sided first-order differences.
    """
    if not np.isfinite(ds) or ds <= 0:
        raise ValueError(f"ds must be a positive finite step, got {ds}")
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim == 1:
        traj = traj[:, None]
    if traj.shape[0] < 3:
        raise ValueError(f"need T >= 3 rows for central differences, got {traj.shape[0]}")
    out = np.empty_like(traj)
    out[1:-1] = (traj[2:] - traj[:-2]) / (2.0 * ds)
    out[0] = (traj[1] - traj[0]) / ds
    out[-1] = (traj[-1] - traj[-2]) / ds
    return out


def _ridge_solve(gram: np.ndarray, rhs: np.ndarray, lam: float) -> tuple[np.ndarray, bool]:
    """Solve (gram + lam I) c = rhs.  Cholesky verifies positive definiteness;
    a singular system falls back to an eigendecomposition pseudo-solve and is
    flagged."""
    a = gram + lam * np.eye(gram.shape[0])
    try:
        np.linalg.cholesky(a)
        return np.linalg.solve(a, rhs), False
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(a)
        cutoff = 1e-12 * max(float(w.max()), 1.0)
        inv_w = np.where(w > cutoff, 1.0 / np.where(w > cutoff, w, 1.0), 0.0)
        return v @ (inv_w * (v.T @ rhs)), True


def stridge(
    design,
    derivatives,
    threshold: float,
    ridge_lambda: float,
    max_iter: int = 20,
    library: CandidateLibrary | None = None,
) -> SparseDynamicsModel:
    """Sequential-thresholded ridge regression.

    Per state variable: ridge-solve the normal equations on the full library,
    zero every coefficient below ``threshold``, refit restricted to the
    surviving support, and repeat until the support is stable or ``max_iter``
    is reached.  With threshold 0 and ridge_lambda 0 this reduces to ordinary
    least squares on the full library.
    """
    theta = np.asarray(design, dtype=float)
    dx = np.asarray(derivatives, dtype=float)
    if dx.ndim == 1:
        dx = dx[:, None]
    if theta.ndim != 2 or dx.ndim != 2 or theta.shape[0] != dx.shape[0]:
        raise ValueError(
            f"design {theta.shape} and derivatives {dx.shape} must share their row count"
        )
    if not (np.isfinite(threshold) and threshold >= 0):
        raise ValueError(f"threshold must be finite and >= 0, got {threshold}")
    if not (np.isfinite(ridge_lambda) and ridge_lambda >= 0):
        raise ValueError(f"ridge_lambda must be finite and >= 0, got {ridge_lambda}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if not np.isfinite(theta).all() or not np.isfinite(dx).all():
        raise ValueError("design or derivatives contain non-finite values")
    t, n_terms = theta.shape
    n_states = dx.shape[1]
    if t < n_terms:
        warnings.warn(
            f"underdetermined regression: {t} rows < {n_terms} library terms",
            stacklevel=2,
        )

    gram = theta.T @ theta
    rhs_all = theta.T @ dx

    xi = np.zeros((n_states, n_terms))
    flagged = False
    iterations = 0
    for s_idx in range(n_states):
        rhs = rhs_all[:, s_idx]
        coef, flag = _ridge_solve(gram, rhs, ridge_lambda)
        flagged |= flag
        support = np.ones(n_terms, dtype=bool)
        n_it = 0
        for _ in range(max_iter):
            n_it += 1
            keep = support & (np.abs(coef) >= threshold)
            if np.array_equal(keep, support):
                break
            support = keep
            coef = np.zeros(n_terms)
            if support.any():
                sub, flag = _ridge_solve(
                    gram[np.ix_(support, support)], rhs[support], ridge_lambda
                )
                flagged |= flag
                coef[support] = sub
            else:
                break
        # max_iter may exhaust before the support settles; enforce sparsity.
        coef[np.abs(coef) < threshold] = 0.0
        residual = dx[:, s_idx] - theta @ coef
        if not np.isfinite(residual).all():
            flagged = True
        xi[s_idx] = coef
        iterations = max(iterations, n_it)

    return SparseDynamicsModel(
        library=library,
        xi=xi,
        threshold=float(threshold),
        ridge_lambda=float(ridge_lambda),
        n_iterations=iterations,
        flagged=flagged,
    )


def flatten_model(model: SparseDynamicsModel) -> tuple[np.ndarray, list[str]]:
    """Row-major flattening of the coefficient matrix.

    Returns (values, names) where names are "x<i>::<term>"; with no library
    attached, terms fall back to positional "t<j>" labels.
    """
    if model.library is not None:
        terms = model.library.term_names(model.n_states)
        if len(terms) != model.n_terms:
            raise ValueError(
                f"library describes {len(terms)} terms but xi has {model.n_terms}"
            )
    else:
        terms = [f"t{j}" for j in range(model.n_terms)]
    names = [f"x{i}::{term}" for i in range(model.n_states) for term in terms]
    return model.xi.ravel(order="C").copy(), names


def _pca_project(traj: np.ndarray, rank: int) -> np.ndarray:
    """Project a trajectory onto its leading principal components.

    Signs are fixed so the largest-magnitude loading of each component is
    positive, keeping the projection deterministic.
    """
    if rank < 1:
        raise ValueError(f"pca_rank must be >= 1, got {rank}")
    centered = traj - traj.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    rank = min(rank, vt.shape[0])
    comps = vt[:rank]
    for i in range(rank):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return centered @ comps.T


@dataclass(frozen=True)
class ExtractionResult:
    """Feature matrix plus the per-sample failures that were excluded."""

    features: FeatureMatrix
    exclusions: tuple[tuple[str, str], ...]


def extract_domain_features(
    domain: Domain,
    config: CandidateLibrary,
    params: StridgeParams,
) -> ExtractionResult:
    """One flattened sparse-dynamics model per sample.

    Per-sample failures (missing/short/non-finite trajectories, state-count
    mismatches) are excluded from the matrix and reported; the whole
    operation fails only when more than half of the samples fail.
    """
    if len(domain.samples) == 0:
        raise ValueError(f"domain {domain.name!r} has no samples")

    rows: list[np.ndarray] = []
    ids: list[str] = []
    columns: list[str] | None = None
    n_states_expected: int | None = None
    exclusions: list[tuple[str, str]] = []

    for sample in domain.samples:
        try:
            if sample.trajectory is None:
                raise ValueError("sample has no trajectory")
            traj = np.asarray(sample.trajectory, dtype=float)
            if params.pca_rank is not None:
                traj = _pca_project(traj, params.pca_rank)
            if n_states_expected is None:
                n_states_expected = traj.shape[1]
            elif traj.shape[1] != n_states_expected:
                raise ValueError(
                    f"state dimension {traj.shape[1]} != expected {n_states_expected}"
                )
            theta = build_library(traj, config)
            dx = estimate_derivatives(traj, params.ds)
            model = stridge(
                theta,
                dx,
                threshold=params.threshold,
                ridge_lambda=params.ridge_lambda,
                max_iter=params.max_iter,
                library=config,
            )
            values, names = flatten_model(model)
        except ValueError as exc:
            exclusions.append((sample.id, str(exc)))
            continue
        if columns is None:
            columns = names
        rows.append(values)
        ids.append(sample.id)

    if len(exclusions) * 2 > len(domain.samples):
        detail = "; ".join(f"{sid}: {why}" for sid, why in exclusions[:5])
        raise ValueError(
            f"extraction failed for {len(exclusions)}/{len(domain.samples)} samples ({detail})"
        )
    assert columns is not None
    features = FeatureMatrix(
        tuple(columns), np.vstack(rows), FeatureKind.DATA_DERIVED, tuple(ids)
    )
    return ExtractionResult(features=features, exclusions=tuple(exclusions))
