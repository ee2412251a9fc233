"""Batch command-line front end.

Subcommands: extract, calibrate, sdcd, refine, simulate, sweep-noise,
coverage.  Artifacts go to files, summary tables to stdout, logs to stderr.
Exit codes: 0 success, 1 runtime/numerical failure, 2 usage/input error.
Every artifact embeds the fully resolved configuration, so there are no
silent defaults; the ``CONFGAP_SEED`` environment variable overrides the
calibration split seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import figures, persistence
from .causal_extract import CandidateLibrary, StridgeParams, extract_domain_features
from .conformal import (
    QUANTILE_PAPER,
    QUANTILE_STANDARD,
    DcbCalibration,
    coverage_check,
    dcb_compute,
    sdcd,
)
from .core import Domain, DomainKind, DomainSample, FeatureKind, FeatureMatrix
from .divergence import RobustnessVariant, make_robustness_config
from .persistence import ArtifactEnvelope, ArtifactError, ArtifactKind
from .refinement import AblationStrategy, ablation_search
from .synthetic import (
    KnowledgeSignal,
    ShiftScenario,
    build_shifted_targets,
    generate_scenario,
    noise_sweep,
    reference_classifier,
    shift_sweep,
)

__all__ = ["RunConfig", "main", "entrypoint"]


class UsageError(Exception):
    """Bad input or arguments; maps to exit code 2."""


@dataclass
class RunConfig:
    """Resolved run configuration, embedded verbatim in every artifact."""

    alpha: float = 0.05
    robustness_variant: str = "distribution_direct"
    ridge_eps: float | None = None
    quantile_mode: str = QUANTILE_STANDARD
    stridge_threshold: float = 0.05
    stridge_lambda: float = 1e-5
    stridge_max_iter: int = 20
    split_seed: int = 0
    poly_max_degree: int = 5
    include_trig: bool = True
    include_constant: bool = True

    def variant(self) -> RobustnessVariant:
        try:
            return RobustnessVariant(self.robustness_variant)
        except ValueError:
            raise UsageError(
                f"unknown robustness variant {self.robustness_variant!r}"
            ) from None

    def library(self) -> CandidateLibrary:
        return CandidateLibrary(
            poly_max_degree=self.poly_max_degree,
            include_trig=self.include_trig,
            include_constant=self.include_constant,
        )

    def stridge_params(self, ds: float = 1.0) -> StridgeParams:
        return StridgeParams(
            threshold=self.stridge_threshold,
            ridge_lambda=self.stridge_lambda,
            max_iter=self.stridge_max_iter,
            ds=ds,
        )

    def to_payload(self) -> dict:
        return dataclasses.asdict(self)


def _log(*parts) -> None:
    print(*parts, file=sys.stderr)


def _print_table(headers, rows) -> None:
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    line = "  ".join(h.ljust(w) for h, w in zip(cells[0], widths))
    print(line)
    print("  ".join("-" * w for w in widths))
    for row in cells[1:]:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--alpha", type=float, help="miscoverage level in (0, 1)")
    parser.add_argument(
        "--variant",
        choices=[v.value for v in RobustnessVariant],
        help="robustness variant",
    )
    parser.add_argument("--ridge-eps", type=float, help="covariance ridge regularizer")
    parser.add_argument(
        "--quantile-mode",
        choices=[QUANTILE_STANDARD, QUANTILE_PAPER],
        help="residual quantile/interval construction",
    )
    parser.add_argument("--threshold", type=float, help="sparsity threshold")
    parser.add_argument("--ridge-lambda", type=float, help="ridge penalty")
    parser.add_argument("--max-iter", type=int, help="max thresholding iterations")
    parser.add_argument("--seed", type=int, help="calibration split seed")
    parser.add_argument("--poly-degree", type=int, help="max monomial degree")
    parser.add_argument("--no-trig", action="store_true", help="drop sin/cos terms")
    parser.add_argument("--no-constant", action="store_true", help="drop the constant term")
    parser.add_argument("--no-figures", action="store_true", help="skip figure rendering")


_FLAG_MAP = {
    "alpha": "alpha",
    "variant": "robustness_variant",
    "ridge_eps": "ridge_eps",
    "quantile_mode": "quantile_mode",
    "threshold": "stridge_threshold",
    "ridge_lambda": "stridge_lambda",
    "max_iter": "stridge_max_iter",
    "seed": "split_seed",
    "poly_degree": "poly_max_degree",
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed config JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - fields
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for key, value in loaded.items():
            setattr(config, key, value)
    env_seed = os.environ.get("CONFGAP_SEED")
    if env_seed is not None:
        try:
            config.split_seed = int(env_seed)
        except ValueError:
            raise UsageError(f"CONFGAP_SEED must be an integer, got {env_seed!r}") from None
    for flag, field_name in _FLAG_MAP.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(config, field_name, value)
    if getattr(args, "no_trig", False):
        config.include_trig = False
    if getattr(args, "no_constant", False):
        config.include_constant = False
    if not (0.0 < config.alpha < 1.0):
        raise UsageError(f"alpha must lie in (0, 1), got {config.alpha}")
    config.variant()  # validates the name
    if config.quantile_mode not in (QUANTILE_STANDARD, QUANTILE_PAPER):
        raise UsageError(f"unknown quantile mode {config.quantile_mode!r}")
    return config


def _load_features_any(path) -> FeatureMatrix:
    """Feature matrices load from envelopes (*.json) or plain feature CSVs."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"feature file not found: {path}")
    if path.suffix == ".csv":
        return persistence.read_feature_csv(path)
    return persistence.load_features(path)


def _save_envelope(kind: ArtifactKind, payload: dict, path) -> ArtifactEnvelope:
    envelope = ArtifactEnvelope.make(kind, payload)
    persistence.save(envelope, path)
    _log(f"wrote {path}")
    return envelope


def _figure_path(output: Path) -> Path:
    name = output.name
    for suffix in (".confgap.json", ".json", ".csv"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
            break
    return output.parent / f"{name}.png"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_extract(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    source = Path(args.input)
    if source.is_dir():
        files = sorted(source.glob("*.csv"))
        if not files:
            raise UsageError(f"no trajectory CSVs in {source}")
    elif source.is_file():
        files = [source]
    else:
        raise UsageError(f"input not found: {source}")

    samples = []
    spacings = []
    for path in files:
        try:
            s_values, traj = persistence.read_trajectory_csv(path)
        except (ArtifactError, ValueError) as exc:
            raise UsageError(str(exc)) from None
        if len(s_values) >= 2:
            spacings.append(float(np.mean(np.diff(s_values))))
        samples.append(DomainSample(id=path.stem, trajectory=traj))
    if not spacings:
        raise UsageError("trajectories are too short to infer the s spacing")
    ds = spacings[0]
    if any(abs(d - ds) > 1e-6 * max(abs(ds), 1.0) for d in spacings):
        raise UsageError("trajectory files disagree on the s spacing")
    if ds <= 0:
        raise UsageError(f"non-positive s spacing {ds}")

    domain = Domain(name=source.stem, samples=tuple(samples), kind=DomainKind.TARGET)
    result = extract_domain_features(
        domain, config.library(), config.stridge_params(ds=ds)
    )
    for sid, reason in result.exclusions:
        _log(f"excluded {sid}: {reason}")

    extra = {
        "exclusions": [{"id": sid, "reason": reason} for sid, reason in result.exclusions],
        "config": config.to_payload(),
        "ds": ds,
    }
    persistence.save_features(result.features, args.output, extra=extra)
    _log(f"wrote {args.output}")
    _print_table(
        ["rows", "columns", "excluded"],
        [[result.features.n_rows, result.features.n_cols, len(result.exclusions)]],
    )
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    features = _load_features_any(args.features)
    robustness_config = make_robustness_config(
        features, config.variant(), config.ridge_eps
    )
    calibration = dcb_compute(
        features, config.alpha, robustness_config, config.split_seed, config.quantile_mode
    )
    payload = calibration.to_payload()
    payload["config"] = config.to_payload()
    _save_envelope(ArtifactKind.CALIBRATION, payload, args.output)
    _print_table(
        ["sigma", "interval_lo", "interval_hi", "k_index", "n_train", "n_val"],
        [[
            f"{calibration.sigma:.6g}",
            f"{calibration.interval_lo:.6g}",
            f"{calibration.interval_hi:.6g}",
            calibration.k_index,
            calibration.n_train,
            calibration.n_val,
        ]],
    )
    return 0


def _load_calibration(path) -> DcbCalibration:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"calibration not found: {path}")
    envelope = persistence.load(path)
    if envelope.kind is not ArtifactKind.CALIBRATION:
        raise UsageError(f"{path} is a {envelope.kind.value} artifact, expected calibration")
    return DcbCalibration.from_payload(envelope.payload)


def cmd_sdcd(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    target = _load_features_any(args.target)
    source = _load_features_any(args.source)
    calibration = _load_calibration(args.calibration)
    expected = calibration.feature_columns
    for what, matrix in (("target", target), ("source", source)):
        if len(matrix.columns) != len(expected):
            raise UsageError(
                f"{what} has {len(matrix.columns)} columns, calibration expects {len(expected)}"
            )
        for i, (got, want) in enumerate(zip(matrix.columns, expected)):
            if got != want:
                raise UsageError(
                    f"{what} column mismatch at index {i}: expected {want!r}, got {got!r}"
                )
    name = args.name or Path(args.target).stem.replace(".confgap", "")
    report = sdcd(target, source, calibration, target_name=name)
    if args.report:
        payload = report.to_payload()
        payload["config"] = config.to_payload()
        _save_envelope(ArtifactKind.SDCD_REPORT, payload, args.report)
        if not args.no_figures:
            figure = figures.render_sdcd_report(report, calibration, _figure_path(Path(args.report)))
            _log(f"wrote {figure}")
    _print_table(
        ["target", "samples", "in_bounds", "sdcd_percent"],
        [[
            report.target_name,
            len(report.residuals),
            sum(1 for _, _, ok in report.residuals if ok),
            f"{report.sdcd_percent:.2f}",
        ]],
    )
    return 0


def cmd_refine(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    manifest_path = Path(args.pairs)
    if not manifest_path.exists():
        raise UsageError(f"pairs manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed pairs manifest: {exc}") from None
    if not isinstance(manifest, list) or not manifest:
        raise UsageError("pairs manifest must be a non-empty JSON list")
    pairs = []
    for entry in manifest:
        if not isinstance(entry, dict) or "source" not in entry or "target" not in entry:
            raise UsageError("each pair needs 'source' and 'target' paths")
        base = manifest_path.parent
        pairs.append(
            (
                _load_features_any(base / entry["source"]),
                _load_features_any(base / entry["target"]),
            )
        )
    removable = [c for c in (args.removable or "").split(",") if c]
    columns = pairs[0][0].columns
    unknown = [c for c in removable if c not in columns]
    if unknown:
        raise UsageError(f"removable columns not present: {unknown}")
    strategy = (
        AblationStrategy.EXHAUSTIVE_SMALL
        if args.strategy == "exhaustive"
        else AblationStrategy.GREEDY_SEQUENTIAL
    )
    trace = ablation_search(
        pairs,
        removable,
        config.alpha,
        variant=config.variant(),
        ridge_eps=config.ridge_eps,
        split_seed=config.split_seed,
        quantile_mode=config.quantile_mode,
        strategy=strategy,
    )
    payload = trace.to_payload()
    payload["config"] = config.to_payload()
    _save_envelope(ArtifactKind.ABLATION_TRACE, payload, args.output)
    _print_table(
        ["step", "removed", "avg_sdcd"],
        [
            [i, ",".join(step.removed_columns) or "(baseline)", f"{step.avg_sdcd:.3f}"]
            for i, step in enumerate(trace.steps)
        ],
    )
    _print_table(
        ["best_avg_sdcd", "best_subset"],
        [[f"{trace.best_avg_sdcd:.3f}", ",".join(trace.best_subset)]],
    )
    return 0


def _parse_scenario(spec: dict) -> ShiftScenario:
    try:
        return ShiftScenario(
            base_dynamics=spec["base_dynamics"],
            n_samples_per_domain=int(spec["n_samples_per_domain"]),
            shift_level=float(spec.get("shift_level", 0.0)),
            noise_sigma=float(spec.get("noise_sigma", 0.0)),
            knowledge_signal=KnowledgeSignal(spec.get("knowledge_signal", "none")),
            seed=int(spec.get("seed", 0)),
            n_steps=int(spec.get("n_steps", 200)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed scenario spec: {exc}") from None


def _read_spec(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"spec file not found: {path}")
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed spec JSON: {exc}") from None
    if not isinstance(spec, dict):
        raise UsageError("spec must be a JSON object")
    return spec


def cmd_simulate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    spec = _read_spec(args.spec)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    if "shift_levels" in spec:
        levels = [float(v) for v in spec["shift_levels"]]
        n_seeds = int(spec.get("n_seeds", 20))
        base = _parse_scenario({**spec, "shift_level": 0.0})
        result = shift_sweep(
            base.base_dynamics,
            levels,
            n_seeds,
            base.n_samples_per_domain,
            config.alpha,
            noise_sigma=base.noise_sigma,
            variant=config.variant(),
            ridge_eps=config.ridge_eps,
            quantile_mode=config.quantile_mode,
            split_seed=config.split_seed,
            seed=base.seed,
        )
        csv_path = outdir / "shift_sweep.csv"
        result.to_csv(csv_path)
        _log(f"wrote {csv_path}")
        payload = result.to_payload()
        payload["config"] = config.to_payload()
        payload["table"] = "shift_sweep"
        _save_envelope(ArtifactKind.SWEEP_TABLE, payload, outdir / "shift_sweep.confgap.json")
        if not args.no_figures:
            figure = figures.render_shift_sweep(result, outdir / "shift_sweep.png")
            _log(f"wrote {figure}")
        _print_table(
            ["shift_level", "mean_sdcd", "mean_accuracy"],
            [[f"{l:g}", f"{s:.2f}", f"{a:.4f}"] for l, s, a in result.level_means],
        )
        _print_table(["pearson_r"], [[f"{result.pearson_r:.4f}"]])
        return 0

    scenario = _parse_scenario(spec)
    source, target = generate_scenario(scenario)
    persistence.save_domain(source, outdir / "source")
    persistence.save_domain(target, outdir / "target")
    _log(f"wrote domains under {outdir}")

    library = config.library()
    params = config.stridge_params(ds=_family_ds(scenario.base_dynamics))
    src_feats = extract_domain_features(source, library, params).features
    tgt_feats = extract_domain_features(target, library, params).features
    persistence.save_features(src_feats, outdir / "source_features.confgap.json",
                              extra={"config": config.to_payload()})
    persistence.save_features(tgt_feats, outdir / "target_features.confgap.json",
                              extra={"config": config.to_payload()})
    robustness_config = make_robustness_config(src_feats, config.variant(), config.ridge_eps)
    calibration = dcb_compute(
        src_feats, config.alpha, robustness_config, config.split_seed, config.quantile_mode
    )
    payload = calibration.to_payload()
    payload["config"] = config.to_payload()
    _save_envelope(ArtifactKind.CALIBRATION, payload, outdir / "calibration.confgap.json")
    report = sdcd(tgt_feats, src_feats, calibration, target_name=target.name)
    accuracy = reference_classifier(source, target, library, params)
    _print_table(
        ["scenario", "shift_level", "sdcd_percent", "accuracy"],
        [[
            scenario.base_dynamics,
            f"{scenario.shift_level:g}",
            f"{report.sdcd_percent:.2f}",
            f"{accuracy:.4f}",
        ]],
    )
    return 0


def _family_ds(base_dynamics: str) -> float:
    from .synthetic import default_stridge_params

    return default_stridge_params(base_dynamics).ds


def _parse_levels(text: str) -> list[float]:
    levels = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        levels.append(float("inf") if token.lower() == "inf" else float(token))
    if not levels:
        raise UsageError("no PSNR levels given")
    return levels


def cmd_sweep_noise(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    levels = _parse_levels(args.levels)

    if args.spec:
        spec = _read_spec(args.spec)
        base = _parse_scenario({**spec, "shift_level": 0.0})
        shift_levels = [float(v) for v in spec.get("shift_levels", [0.0, 1.0, 2.0, 3.0])]
        n_seeds = int(spec.get("n_seeds", 5))
        source, targets = build_shifted_targets(
            base.base_dynamics,
            shift_levels,
            n_seeds,
            base.n_samples_per_domain,
            noise_sigma=base.noise_sigma,
            seed=base.seed,
        )
        params = None
    elif args.source_dir:
        source = persistence.load_domain(args.source_dir, kind=DomainKind.SOURCE)
        if not args.target_dir:
            raise UsageError("need at least one --target-dir")
        targets = [
            persistence.load_domain(d, kind=DomainKind.TARGET) for d in args.target_dir
        ]
        params = config.stridge_params(ds=args.ds)
    else:
        raise UsageError("pass --spec or --source-dir/--target-dir")

    result = noise_sweep(
        source,
        targets,
        levels,
        config.alpha,
        variant=config.variant(),
        ridge_eps=config.ridge_eps,
        quantile_mode=config.quantile_mode,
        split_seed=config.split_seed,
        seed=config.split_seed,
        library=config.library(),
        params=params,
    )
    out = Path(args.output)
    result.to_csv(out)
    _log(f"wrote {out}")
    payload = result.to_payload()
    payload["config"] = config.to_payload()
    payload["table"] = "noise_sweep"
    _save_envelope(
        ArtifactKind.SWEEP_TABLE, payload, out.parent / (out.stem + ".confgap.json")
    )
    if not args.no_figures:
        figure = figures.render_noise_sweep(result, _figure_path(out))
        _log(f"wrote {figure}")
    _print_table(
        ["psnr_db", "pearson_r"],
        [["inf" if math.isinf(p) else f"{p:g}", f"{r:.4f}"] for p, r in result.correlations],
    )
    return 0


def cmd_coverage(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    features = _load_features_any(args.features)
    rate = coverage_check(
        features,
        config.alpha,
        args.trials,
        config.split_seed,
        variant=config.variant(),
        ridge_eps=config.ridge_eps,
        quantile_mode=config.quantile_mode,
    )
    _print_table(["trials", "alpha", "coverage"], [[args.trials, config.alpha, f"{rate:.4f}"]])
    return 0


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="confgap",
        description="Quantify the causal gap between a source domain and targets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="trajectory CSVs -> data-derived features artifact")
    p.add_argument("input", help="trajectory CSV file or directory of them")
    p.add_argument("-o", "--output", required=True, help="features artifact path")
    _add_common_options(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("calibrate", help="fit the domain conformal bound on source features")
    p.add_argument("features", help="source features (envelope or CSV)")
    p.add_argument("-o", "--output", required=True, help="calibration artifact path")
    _add_common_options(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sdcd", help="score a target domain against a calibration")
    p.add_argument("target", help="target features (envelope or CSV)")
    p.add_argument("source", help="source features (envelope or CSV)")
    p.add_argument("calibration", help="calibration artifact")
    p.add_argument("--report", help="write a report artifact here")
    p.add_argument("--name", help="target name for the report")
    _add_common_options(p)
    p.set_defaults(func=cmd_sdcd)

    p = sub.add_parser("refine", help="SDCD-guided ablation over feature columns")
    p.add_argument("--pairs", required=True, help="JSON manifest of {source, target} paths")
    p.add_argument("--removable", default="", help="comma-separated removable columns")
    p.add_argument("--strategy", choices=["greedy", "exhaustive"], default="greedy")
    p.add_argument("-o", "--output", required=True, help="trace artifact path")
    _add_common_options(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("simulate", help="run a synthetic scenario or shift sweep")
    p.add_argument("spec", help="scenario spec JSON")
    p.add_argument("--outdir", required=True, help="output directory")
    _add_common_options(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep-noise", help="PSNR noise sweep of the conformance signal")
    p.add_argument("--spec", help="synthetic scenario spec JSON")
    p.add_argument("--source-dir", help="source domain directory")
    p.add_argument("--target-dir", action="append", help="target domain directory (repeatable)")
    p.add_argument("--levels", default="inf,30,25,20,15,10,5,0", help="PSNR dB levels")
    p.add_argument("--ds", type=float, default=1.0, help="trajectory step for --source-dir mode")
    p.add_argument("-o", "--output", required=True, help="sweep CSV path")
    _add_common_options(p)
    p.set_defaults(func=cmd_sweep_noise)

    p = sub.add_parser("coverage", help="empirical self-coverage of a feature matrix")
    p.add_argument("features", help="source features (envelope or CSV)")
    p.add_argument("--trials", type=int, default=50)
    _add_common_options(p)
    p.set_defaults(func=cmd_coverage)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        _log(f"error: {exc}")
        return 2
    except (ArtifactError, FileNotFoundError) as exc:
        _log(f"error: {exc}")
        return 2
    except Exception as exc:  # runtime/numerical failure
        _log(f"failure: {type(exc).__name__}: {exc}")
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
