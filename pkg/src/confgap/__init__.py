"""confgap: quantify the causal gap between a labeled source domain and
unlabeled targets.

The pipeline extracts causal-factor coefficient vectors from per-sample
trajectories via sparse dynamics identification, calibrates a distribution
free conformance bound on the source, scores targets by the percentage of
samples whose robustness residual conforms, and refines knowledge-vector
feature sets by conformance-guided ablation.
"""

from .causal_extract import (
    CandidateLibrary,
    ExtractionResult,
    SparseDynamicsModel,
    StridgeParams,
    build_library,
    estimate_derivatives,
    extract_domain_features,
    flatten_model,
    stridge,
)
from .conformal import (
    QUANTILE_PAPER,
    QUANTILE_STANDARD,
    DcbCalibration,
    SdcdReport,
    coverage_check,
    dcb_compute,
    sdcd,
)
from .core import (
    Domain,
    DomainKind,
    DomainSample,
    FeatureKind,
    FeatureMatrix,
    GaussianModel,
    default_ridge_eps,
    validate_domain,
)
from .divergence import (
    RobustnessConfig,
    RobustnessVariant,
    fit_gaussian,
    kl_divergence,
    mahalanobis,
    make_robustness_config,
    robustness,
    robustness_batch,
)
from .refinement import (
    AblationStep,
    AblationStrategy,
    AblationTrace,
    ablation_search,
    fuse,
)
from .synthetic import (
    KnowledgeSignal,
    NoiseSweepResult,
    ShiftScenario,
    ShiftSweepResult,
    build_shifted_targets,
    generate_scenario,
    noise_sweep,
    pearson,
    radial_profile,
    reference_classifier,
    shift_sweep,
)

__version__ = "0.1.0"
