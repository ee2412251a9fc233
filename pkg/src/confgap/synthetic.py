"""Synthetic domain generators and desk-scale experiment harnesses.

Three dynamics families with closed-form trajectories keep sparse recovery
exact in the noiseless limit:

* ``linear_decay``         dx/ds = -a x                  (one causal parameter a)
* ``harmonic_oscillator``  dx0/ds = w x1, dx1/ds = -w x0 (parameter w)
* ``cubic``                dx/ds = b x - a x^3           (parameters a and b)

Labels are a fixed threshold function of the label-relevant parameter (a for
linear/cubic, w for the oscillator).  ``shift_level`` moves the target
domain's parameter distribution: the two single-parameter families shift the
label parameter itself; the cubic family shifts b only, so the target
introduces a parameter range the source never saw while the label mix stays
balanced.  That makes the cubic family the scenario of choice for the
conformance-vs-accuracy correlation experiments.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .causal_extract import CandidateLibrary, StridgeParams, extract_domain_features
from .conformal import QUANTILE_STANDARD, dcb_compute, sdcd
from .core import Domain, DomainKind, DomainSample
from .divergence import RobustnessVariant, make_robustness_config

__all__ = [
    "DYNAMICS_FAMILIES",
    "KnowledgeSignal",
    "ShiftScenario",
    "generate_scenario",
    "default_library",
    "default_stridge_params",
    "reference_classifier",
    "pearson",
    "ShiftSweepResult",
    "shift_sweep",
    "NoiseSweepResult",
    "noise_sweep",
    "build_shifted_targets",
    "radial_profile",
]


class KnowledgeSignal(enum.Enum):
    NONE = "none"
    GAP_CLOSING = "gap_closing"
    REDUNDANT = "redundant"


# Per-family constants: parameter distribution, label thresholds, trajectory
# step.  Thresholds sit at the terciles of the label parameter so the three
# classes stay balanced.
_FAMILY = {
    "linear_decay": {
        "ds": 0.01,
        "label_mean": 1.5,
        "label_std": 0.25,
        "thresholds": (1.392, 1.608),
        "n_states": 1,
    },
    "harmonic_oscillator": {
        "ds": 0.05,
        "label_mean": 1.0,
        "label_std": 0.15,
        "thresholds": (0.935, 1.065),
        "n_states": 2,
    },
    "cubic": {
        "ds": 0.01,
        "label_mean": 0.8,
        "label_std": 0.15,
        "thresholds": (0.735, 0.865),
        "nuisance_mean": -1.0,
        "nuisance_std": 0.2,
        "n_states": 1,
    },
}

DYNAMICS_FAMILIES = tuple(sorted(_FAMILY))

_KNOWLEDGE_COLUMNS = ("k_grade", "k_grade_curve", "k_cohort_norm", "k_texture")


@dataclass(frozen=True)
class ShiftScenario:
    """Recipe for one (source, target) pair of synthetic domains."""

    base_dynamics: str
    n_samples_per_domain: int
    shift_level: float = 0.0
    noise_sigma: float = 0.0
    knowledge_signal: KnowledgeSignal = KnowledgeSignal.NONE
    seed: int = 0
    n_steps: int = 200

    def __post_init__(self):
        if self.base_dynamics not in _FAMILY:
            raise ValueError(
                f"unknown dynamics {self.base_dynamics!r}; choose from {DYNAMICS_FAMILIES}"
            )
        if self.n_samples_per_domain < 4:
            raise ValueError("need at least 4 samples per domain")
        if self.shift_level < 0:
            raise ValueError(f"shift_level must be >= 0, got {self.shift_level}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.n_steps < 8:
            raise ValueError(f"n_steps must be >= 8, got {self.n_steps}")


def default_library() -> CandidateLibrary:
    return CandidateLibrary(poly_max_degree=5, include_trig=True, include_constant=True)


def default_stridge_params(base_dynamics: str) -> StridgeParams:
    return StridgeParams(
        threshold=0.05,
        ridge_lambda=1e-5,
        max_iter=20,
        ds=_FAMILY[base_dynamics]["ds"],
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -60, 60)))


def _draw_parameters(family: str, rng, n: int, shift: float):
    """Returns (label_param, shift_param) arrays; shift_param is the one the
    target domain displaces."""
    spec = _FAMILY[family]
    label = rng.normal(spec["label_mean"], spec["label_std"], n)
    label = np.clip(label, 0.2, None)
    if family == "cubic":
        nuisance = rng.normal(spec["nuisance_mean"], spec["nuisance_std"], n)
        nuisance = np.clip(nuisance, None, -0.2) - shift * spec["nuisance_std"]
        return label, nuisance
    shifted = label + shift * spec["label_std"]
    return shifted, shifted


def _labels_for(family: str, label_param: np.ndarray) -> np.ndarray:
    lo, hi = _FAMILY[family]["thresholds"]
    return np.digitize(label_param, [lo, hi]).astype(int)


def _trajectory(family: str, rng, label_p: float, shift_p: float, n_steps: int) -> np.ndarray:
    ds = _FAMILY[family]["ds"]
    t = np.arange(n_steps) * ds
    if family == "linear_decay":
        return (3.0 * np.exp(-shift_p * t))[:, None]
    if family == "harmonic_oscillator":
        amplitude = 2.5 + rng.normal(0.0, 0.1)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        w = shift_p
        x0 = amplitude * np.cos(w * t + phase)
        x1 = -amplitude * np.sin(w * t + phase)
        return np.column_stack([x0, x1])
    # cubic: dx/ds = b x - a x^3 solved in closed form via u = x^-2.
    a, b = label_p, shift_p
    x_init = 3.0
    u0 = 1.0 / x_init**2
    if abs(b) < 1e-9:
        u = u0 + 2.0 * a * t
    else:
        u = (u0 - a / b) * np.exp(-2.0 * b * t) + a / b
    u = np.clip(u, 1e-12, None)
    return (1.0 / np.sqrt(u))[:, None]


def _knowledge_rows(
    signal: KnowledgeSignal, family: str, rng, label_p: np.ndarray, shift_p: np.ndarray
) -> np.ndarray | None:
    """Four knowledge components in [0, 1].

    gap_closing components are identically distributed in the source and any
    shifted target: the grade components depend on the unshifted label
    parameter and the shifted parameter enters only after within-domain
    standardization, the way an expert grades severity relative to the cohort
    at hand.  redundant components re-expose the shifted parameter on the
    global scale, duplicating the gap already present in the data features.
    """
    if signal is KnowledgeSignal.NONE:
        return None
    spec = _FAMILY[family]
    za = (label_p - spec["label_mean"]) / spec["label_std"]
    n = len(label_p)
    if signal is KnowledgeSignal.GAP_CLOSING:
        k0 = _sigmoid(za + 0.1 * rng.normal(size=n))
        k1 = _sigmoid(za**2 - 1.0 + 0.1 * rng.normal(size=n))
        spread = shift_p.std()
        centered = (shift_p - shift_p.mean()) / (spread if spread > 0 else 1.0)
        k2 = _sigmoid(centered)
        k3 = rng.uniform(0.0, 1.0, n)
    else:
        mu = spec.get("nuisance_mean", spec["label_mean"])
        sd = spec.get("nuisance_std", spec["label_std"])
        k0 = _sigmoid((shift_p - mu) / sd)
        k1 = _sigmoid(za)
        k2 = _sigmoid(za + 0.1 * rng.normal(size=n))
        k3 = rng.uniform(0.0, 1.0, n)
    return np.column_stack([k0, k1, k2, k3])


def _build_domain(
    name: str,
    kind: DomainKind,
    prefix: str,
    spec: ShiftScenario,
    rng,
    shift: float,
) -> Domain:
    n = spec.n_samples_per_domain
    label_p, shift_p = _draw_parameters(spec.base_dynamics, rng, n, shift)
    labels = _labels_for(spec.base_dynamics, label_p)
    knowledge = _knowledge_rows(
        spec.knowledge_signal, spec.base_dynamics, rng, label_p, shift_p
    )
    samples = []
    for i in range(n):
        traj = _trajectory(
            spec.base_dynamics, rng, float(label_p[i]), float(shift_p[i]), spec.n_steps
        )
        if spec.noise_sigma > 0:
            traj = traj + rng.normal(0.0, spec.noise_sigma, traj.shape)
        samples.append(
            DomainSample(
                id=f"{prefix}-{i:04d}",
                trajectory=traj,
                knowledge=None if knowledge is None else knowledge[i],
                label=int(labels[i]),
            )
        )
    return Domain(
        name=name,
        samples=tuple(samples),
        kind=kind,
        knowledge_columns=None if knowledge is None else _KNOWLEDGE_COLUMNS,
    )


def generate_scenario(spec: ShiftScenario) -> tuple[Domain, Domain]:
    """Simulate one labeled source domain and one shifted target domain.

    Deterministic under ``spec.seed``; at shift_level 0 the two domains are
    statistically exchangeable (separate but identically configured draws).
    The target keeps its held-out labels so downstream accuracy can be scored.
    """
    src_seq, tgt_seq = np.random.SeedSequence(spec.seed).spawn(2)
    source = _build_domain(
        f"{spec.base_dynamics}-source",
        DomainKind.SOURCE,
        "src",
        spec,
        np.random.default_rng(src_seq),
        shift=0.0,
    )
    target = _build_domain(
        f"{spec.base_dynamics}-target",
        DomainKind.TARGET,
        "tgt",
        spec,
        np.random.default_rng(tgt_seq),
        shift=spec.shift_level,
    )
    return source, target


# ---------------------------------------------------------------------------
# Reference downstream classifier (fixed ERM learner)
# ---------------------------------------------------------------------------

def _fit_multinomial(x: np.ndarray, y: np.ndarray, l2: float = 1e-3, tol: float = 1e-6,
                     max_iter: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """L2-penalized multinomial logistic regression by damped Newton steps,
    iterated until the gradient norm falls below ``tol``.  Deterministic
    (zero initialization).  Returns (weights, class values)."""
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("training labels contain a single class")
    n, d = x.shape
    k = len(classes)
    onehot = (y[:, None] == classes[None, :]).astype(float)
    w = np.zeros((k, d))

    def objective(weights):
        logits = x @ weights.T
        logits -= logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(logits).sum(axis=1))
        nll = -(np.sum(onehot * logits) - log_z.sum()) / n
        # Bias column (last) is unpenalized.
        return nll + 0.5 * l2 * float(np.sum(weights[:, :-1] ** 2))

    for _ in range(max_iter):
        logits = x @ w.T
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        probs = expl / expl.sum(axis=1, keepdims=True)
        grad = (probs - onehot).T @ x / n
        grad[:, :-1] += l2 * w[:, :-1]
        if np.sqrt(np.sum(grad**2)) < tol:
            break
        # Exact Hessian of the multinomial NLL plus the L2 term.
        pk = probs[:, :, None] * probs[:, None, :]
        wn = -pk
        wn[:, np.arange(k), np.arange(k)] += probs
        hess = np.einsum("nkl,nd,ne->kdle", wn, x, x) / n
        hess = hess.reshape(k * d, k * d)
        reg = l2 * np.ones(d)
        reg[-1] = 0.0
        hess += np.diag(np.tile(reg, k)) + 1e-10 * np.eye(k * d)
        try:
            step = np.linalg.solve(hess, grad.reshape(-1)).reshape(k, d)
        except np.linalg.LinAlgError:
            step = grad
        base = objective(w)
        scale = 1.0
        for _ in range(30):
            candidate = w - scale * step
            if objective(candidate) <= base:
                w = candidate
                break
            scale *= 0.5
        else:
            break
    return w, classes


def _extract_xy(domain: Domain, library, params):
    result = extract_domain_features(domain, library, params)
    label_by_id = {s.id: s.label for s in domain.samples}
    y = np.asarray([label_by_id[sid] for sid in result.features.ids], dtype=int)
    if np.any(y < 0):
        raise ValueError(f"domain {domain.name!r} has unlabeled samples")
    return result.features, y


def reference_classifier(
    train: Domain,
    test: Domain,
    library: CandidateLibrary | None = None,
    params: StridgeParams | None = None,
    seed: int = 0,
) -> float:
    """Accuracy of the fixed ERM learner trained on one domain, scored on another.

    A multinomial linear model on standardized flattened dynamics features
    (L2 penalty 1e-3, Newton iterations to gradient norm < 1e-6); the result
    is deterministic, ``seed`` is accepted for interface stability only.
    """
    del seed
    if library is None:
        library = default_library()
    if params is None:
        params = default_stridge_params(_family_of(train))
    train_x, train_y = _extract_xy(train, library, params)
    test_x, test_y = _extract_xy(test, library, params)

    mean = train_x.rows.mean(axis=0)
    std = train_x.rows.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)

    def design(matrix):
        z = (matrix.rows - mean) / std
        return np.hstack([z, np.ones((z.shape[0], 1))])

    weights, classes = _fit_multinomial(design(train_x), train_y)
    logits = design(test_x) @ weights.T
    predictions = classes[np.argmax(logits, axis=1)]
    return float(np.mean(predictions == test_y))


def _family_of(domain: Domain) -> str:
    for family in _FAMILY:
        if domain.name.startswith(family):
            return family
    return "linear_decay"


def pearson(x, y) -> float:
    """Pearson correlation; 0.0 when either input has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need two equal-length vectors of at least 2 points")
    if x.std() == 0.0 or y.std() == 0.0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


# ---------------------------------------------------------------------------
# Shift sweep (conformance vs downstream accuracy)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftSweepResult:
    """Per-run conformance/accuracy points across a grid of shift levels."""

    points: tuple[tuple[float, int, float, float], ...]  # (level, rep, sdcd, accuracy)
    level_means: tuple[tuple[float, float, float], ...]  # (level, mean sdcd, mean acc)
    pearson_r: float

    def to_payload(self) -> dict:
        return {
            "points": [
                {"shift_level": l, "rep": r, "sdcd_percent": s, "accuracy": a}
                for l, r, s, a in self.points
            ],
            "level_means": [
                {"shift_level": l, "sdcd_percent": s, "accuracy": a}
                for l, s, a in self.level_means
            ],
            "pearson_r": float(self.pearson_r),
        }

    def to_csv(self, path) -> None:
        import csv as _csv
        from pathlib import Path as _Path

        path = _Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["shift_level", "rep", "sdcd_percent", "accuracy"])
            for level, rep, sdcd_value, acc in self.points:
                writer.writerow([level, rep, sdcd_value, acc])


def _scenario_feature_pipeline(scenario: ShiftScenario, library, params, alpha,
                               variant, ridge_eps, split_seed, quantile_mode):
    source, target = generate_scenario(scenario)
    src_feats = extract_domain_features(source, library, params).features
    tgt_feats = extract_domain_features(target, library, params).features
    config = make_robustness_config(src_feats, variant, ridge_eps)
    calibration = dcb_compute(src_feats, alpha, config, split_seed, quantile_mode)
    report = sdcd(tgt_feats, src_feats, calibration, target_name=target.name)
    accuracy = reference_classifier(source, target, library, params)
    return report.sdcd_percent, accuracy


def shift_sweep(
    base_dynamics: str,
    shift_levels,
    n_seeds: int,
    n_samples_per_domain: int,
    alpha: float,
    noise_sigma: float = 0.01,
    variant: RobustnessVariant = RobustnessVariant.DISTRIBUTION_DIRECT,
    ridge_eps: float | None = None,
    quantile_mode: str = QUANTILE_STANDARD,
    split_seed: int = 0,
    seed: int = 0,
    library: CandidateLibrary | None = None,
    params: StridgeParams | None = None,
) -> ShiftSweepResult:
    """Sweep shift levels, scoring SDCD and downstream accuracy per run.

    The reported Pearson correlation pools every (level, seed) run.
    """
    shift_levels = [float(v) for v in shift_levels]
    if not shift_levels or n_seeds < 1:
        raise ValueError("need at least one shift level and one seed")
    if library is None:
        library = default_library()
    if params is None:
        params = default_stridge_params(base_dynamics)

    children = iter(np.random.SeedSequence(seed).spawn(len(shift_levels) * n_seeds))
    points = []
    level_means = []
    for level in shift_levels:
        sdcds, accs = [], []
        for rep in range(n_seeds):
            child = next(children)
            scenario = ShiftScenario(
                base_dynamics=base_dynamics,
                n_samples_per_domain=n_samples_per_domain,
                shift_level=level,
                noise_sigma=noise_sigma,
                seed=int(child.generate_state(1)[0]),
            )
            sdcd_value, accuracy = _scenario_feature_pipeline(
                scenario, library, params, alpha, variant, ridge_eps,
                split_seed, quantile_mode,
            )
            points.append((level, rep, sdcd_value, accuracy))
            sdcds.append(sdcd_value)
            accs.append(accuracy)
        level_means.append((level, float(np.mean(sdcds)), float(np.mean(accs))))

    r = pearson([p[2] for p in points], [p[3] for p in points])
    return ShiftSweepResult(tuple(points), tuple(level_means), r)


def build_shifted_targets(
    base_dynamics: str,
    shift_levels,
    n_seeds: int,
    n_samples_per_domain: int,
    noise_sigma: float = 0.01,
    seed: int = 0,
) -> tuple[Domain, list[Domain]]:
    """One fixed source domain plus one target per (shift level, seed).

    Target names embed their shift level and replicate index so downstream
    tables stay readable.
    """
    shift_levels = [float(v) for v in shift_levels]
    if not shift_levels or n_seeds < 1:
        raise ValueError("need at least one shift level and one seed")
    root = np.random.SeedSequence(seed)
    src_seq, *children = root.spawn(1 + len(shift_levels) * n_seeds)
    base = ShiftScenario(
        base_dynamics=base_dynamics,
        n_samples_per_domain=n_samples_per_domain,
        shift_level=0.0,
        noise_sigma=noise_sigma,
        seed=int(src_seq.generate_state(1)[0]),
    )
    source, _ = generate_scenario(base)
    targets = []
    it = iter(children)
    for level in shift_levels:
        for rep in range(n_seeds):
            child = next(it)
            scenario = ShiftScenario(
                base_dynamics=base_dynamics,
                n_samples_per_domain=n_samples_per_domain,
                shift_level=level,
                noise_sigma=noise_sigma,
                seed=int(child.generate_state(1)[0]),
            )
            _, target = generate_scenario(scenario)
            renamed = Domain(
                name=f"{base_dynamics}-shift{level:g}-rep{rep}",
                samples=target.samples,
                kind=target.kind,
                knowledge_columns=target.knowledge_columns,
            )
            targets.append(renamed)
    return source, targets


# ---------------------------------------------------------------------------
# Noise sweep (PSNR degradation of the conformance signal)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSweepResult:
    """Conformance per (PSNR level, target) plus per-level correlation with
    the targets' clean reference accuracies."""

    rows: tuple[tuple[float, str, float, float], ...]  # (psnr_db, target, sdcd, accuracy)
    correlations: tuple[tuple[float, float], ...]      # (psnr_db, pearson r)

    def to_payload(self) -> dict:
        def enc(v: float):
            return "inf" if math.isinf(v) else float(v)

        return {
            "rows": [
                {"psnr_db": enc(p), "target": t, "sdcd_percent": s, "accuracy": a}
                for p, t, s, a in self.rows
            ],
            "correlations": [
                {"psnr_db": enc(p), "pearson_r": float(r)} for p, r in self.correlations
            ],
        }

    def to_csv(self, path) -> None:
        import csv as _csv
        from pathlib import Path as _Path

        path = _Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        corr = {p: r for p, r in self.correlations}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["psnr_db", "target", "sdcd_percent", "accuracy", "pearson_r"])
            for p, t, s, a in self.rows:
                writer.writerow(["inf" if math.isinf(p) else p, t, s, a, corr[p]])


def noise_sweep(
    source: Domain,
    targets,
    psnr_db_levels,
    alpha: float,
    variant: RobustnessVariant = RobustnessVariant.DISTRIBUTION_DIRECT,
    ridge_eps: float | None = None,
    quantile_mode: str = QUANTILE_STANDARD,
    split_seed: int = 0,
    seed: int = 0,
    library: CandidateLibrary | None = None,
    params: StridgeParams | None = None,
) -> NoiseSweepResult:
    """Degrade the extracted features with Gaussian noise at controlled PSNR.

    Noise sigma per level is peak / 10^(PSNR/20) with peak the largest
    absolute source feature value; level ``inf`` adds no noise.  Calibration
    and SDCD are recomputed per level on the noisy features, while each
    target's reference accuracy is computed once on clean data; the per-level
    Pearson correlation pairs noisy SDCD with clean accuracy across targets.
    """
    targets = list(targets)
    levels = [float(v) for v in psnr_db_levels]
    if not levels:
        raise ValueError("need at least one PSNR level")
    if not targets:
        raise ValueError("need at least one target domain")
    family = _family_of(source)
    if library is None:
        library = default_library()
    if params is None:
        params = default_stridge_params(family)

    src_feats = extract_domain_features(source, library, params).features
    target_feats = []
    accuracies = []
    for target in targets:
        target_feats.append(extract_domain_features(target, library, params).features)
        accuracies.append(reference_classifier(source, target, library, params))

    peak = float(np.abs(src_feats.rows).max())
    children = np.random.SeedSequence(seed).spawn(len(levels))

    rows = []
    correlations = []
    for level, child in zip(levels, children):
        rng = np.random.default_rng(child)
        sigma_noise = 0.0 if math.isinf(level) else peak / (10.0 ** (level / 20.0))
        if sigma_noise > 0:
            noisy_src = src_feats.replace_rows(
                src_feats.rows + rng.normal(0.0, sigma_noise, src_feats.rows.shape)
            )
            noisy_tgts = [
                tf.replace_rows(tf.rows + rng.normal(0.0, sigma_noise, tf.rows.shape))
                for tf in target_feats
            ]
        else:
            noisy_src = src_feats
            noisy_tgts = list(target_feats)
        config = make_robustness_config(noisy_src, variant, ridge_eps)
        calibration = dcb_compute(noisy_src, alpha, config, split_seed, quantile_mode)
        level_sdcds = []
        for target, noisy in zip(targets, noisy_tgts):
            report = sdcd(noisy, noisy_src, calibration, target_name=target.name)
            level_sdcds.append(report.sdcd_percent)
        for target, s_val, acc in zip(targets, level_sdcds, accuracies):
            rows.append((level, target.name, s_val, acc))
        r = pearson(level_sdcds, accuracies) if len(targets) >= 2 else float("nan")
        correlations.append((level, r))

    return NoiseSweepResult(tuple(rows), tuple(correlations))


# ---------------------------------------------------------------------------
# Radial profiles of 2-D scalar fields
# ---------------------------------------------------------------------------

def radial_profile(field, center, n_rays: int, samples_per_ray: int) -> np.ndarray:
    """Sample a scalar grid along equally-angled rays from a center point.

    Rays extend to the nearest grid boundary; bilinear interpolation along
    equally spaced radii produces a (samples_per_ray x n_rays) trajectory
    where each ray is one state variable and the radius is the traversal
    parameter.
    """
    grid = np.asarray(field, dtype=float)
    if grid.ndim != 2:
        raise ValueError(f"field must be a 2-D grid, got shape {grid.shape}")
    h, w = grid.shape
    row0, col0 = float(center[0]), float(center[1])
    if not (0.0 <= row0 <= h - 1 and 0.0 <= col0 <= w - 1):
        raise ValueError(f"center {center} lies outside the {h}x{w} grid")
    if n_rays < 1:
        raise ValueError(f"n_rays must be >= 1, got {n_rays}")
    if samples_per_ray < 2:
        raise ValueError(f"samples_per_ray must be >= 2, got {samples_per_ray}")

    r_max = min(row0, h - 1 - row0, col0, w - 1 - col0)
    radii = np.linspace(0.0, r_max, samples_per_ray)
    angles = 2.0 * math.pi * np.arange(n_rays) / n_rays

    out = np.empty((samples_per_ray, n_rays))
    for j, angle in enumerate(angles):
        rows = row0 + radii * math.sin(angle)
        cols = col0 + radii * math.cos(angle)
        r0 = np.clip(np.floor(rows).astype(int), 0, h - 2)
        c0 = np.clip(np.floor(cols).astype(int), 0, w - 2)
        fr = rows - r0
        fc = cols - c0
        out[:, j] = (
            grid[r0, c0] * (1 - fr) * (1 - fc)
            + grid[r0 + 1, c0] * fr * (1 - fc)
            + grid[r0, c0 + 1] * (1 - fr) * fc
            + grid[r0 + 1, c0 + 1] * fr * fc
        )
    return out
