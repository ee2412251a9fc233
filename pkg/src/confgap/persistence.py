"""Versioned on-disk artifact store and file formats.

Artifacts are JSON envelopes (`<name>.confgap.json`) wrapping a kind-specific
payload.  Serialization is canonical: sorted keys, compact separators, and
shortest round-trip float decimals, so equal payloads always produce equal
bytes and a stable content hash.  Writes are atomic (temp file + rename).

Also hosts the delimited formats shared with the CLI: per-sample trajectory
CSVs (`s,x0,x1,...`), feature CSVs (`id,<column names>`), and the on-disk
domain layout used by the synthetic commands.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .core import Domain, DomainKind, DomainSample, FeatureKind, FeatureMatrix

__all__ = [
    "SCHEMA_VERSION",
    "ArtifactError",
    "ArtifactKind",
    "ArtifactEnvelope",
    "canonical_bytes",
    "content_hash",
    "save",
    "load",
    "features_to_payload",
    "features_from_payload",
    "save_features",
    "load_features",
    "write_feature_csv",
    "read_feature_csv",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "save_domain",
    "load_domain",
]

SCHEMA_VERSION = 1

# Inline matrices beyond this many entries move to a sidecar CSV.
SIDECAR_THRESHOLD = 1_000_000


class ArtifactError(ValueError):
    """Raised for malformed, tampered, or unsupported artifacts."""


class ArtifactKind(enum.Enum):
    CALIBRATION = "calibration"
    FEATURES = "features"
    SDCD_REPORT = "sdcd_report"
    ABLATION_TRACE = "ablation_trace"
    SWEEP_TABLE = "sweep_table"


def canonical_bytes(payload) -> bytes:
    """Canonical JSON encoding: sorted keys, compact, NaN/Inf rejected."""
    try:
        text = json.dumps(
            payload, sort_keys=True, separators=(",", ":"), allow_nan=False
        )
    except ValueError as exc:
        raise ArtifactError(f"payload is not canonically serializable: {exc}") from exc
    return text.encode("utf-8")


def content_hash(payload) -> str:
    return hashlib.sha256(canonical_bytes(payload)).hexdigest()


@dataclass(frozen=True)
class ArtifactEnvelope:
    schema_version: int
    kind: ArtifactKind
    created_at: str
    content_hash: str
    payload: dict

    @classmethod
    def make(cls, kind: ArtifactKind, payload: dict, created_at: str | None = None):
        if created_at is None:
            created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return cls(SCHEMA_VERSION, kind, created_at, content_hash(payload), payload)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(artifact: ArtifactEnvelope, path) -> None:
    """Write the envelope atomically in canonical form."""
    if content_hash(artifact.payload) != artifact.content_hash:
        raise ArtifactError("envelope content_hash does not match its payload")
    doc = {
        "schema_version": artifact.schema_version,
        "kind": artifact.kind.value,
        "created_at": artifact.created_at,
        "content_hash": artifact.content_hash,
        "payload": artifact.payload,
    }
    _atomic_write(Path(path), canonical_bytes(doc))


def load(path) -> ArtifactEnvelope:
    """Parse, hash-verify, and version-check an envelope."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"artifact not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"malformed artifact JSON in {path}: {exc}") from exc
    try:
        version = int(doc["schema_version"])
        kind = ArtifactKind(doc["kind"])
        created_at = str(doc["created_at"])
        declared = str(doc["content_hash"])
        payload = doc["payload"]
    except (KeyError, ValueError) as exc:
        raise ArtifactError(f"artifact {path} is missing envelope fields: {exc}") from exc
    if version > SCHEMA_VERSION:
        raise ArtifactError(
            f"artifact {path} has schema_version {version}, supported <= {SCHEMA_VERSION}"
        )
    actual = content_hash(payload)
    if actual != declared:
        raise ArtifactError(
            f"content hash mismatch in {path}: declared {declared[:12]}..., "
            f"recomputed {actual[:12]}..."
        )
    return ArtifactEnvelope(version, kind, created_at, declared, payload)


# ---------------------------------------------------------------------------
# Feature matrix payloads (with sidecar CSV for large matrices)
# ---------------------------------------------------------------------------

def features_to_payload(matrix: FeatureMatrix) -> dict:
    return {
        "columns": list(matrix.columns),
        "ids": list(matrix.ids),
        "rows": [[float(v) for v in row] for row in matrix.rows],
        "source_kind": matrix.source_kind.value,
    }


def features_from_payload(payload: dict, base_dir: Path | None = None) -> FeatureMatrix:
    columns = tuple(payload["columns"])
    kind = FeatureKind(payload["source_kind"])
    if "rows_csv" in payload:
        if base_dir is None:
            raise ArtifactError("sidecar feature payload needs a base directory")
        ref = payload["rows_csv"]
        csv_path = base_dir / ref["path"]
        if not csv_path.exists():
            raise ArtifactError(f"sidecar CSV missing: {csv_path}")
        data = csv_path.read_bytes()
        digest = hashlib.sha256(data).hexdigest()
        if digest != ref["sha256"]:
            raise ArtifactError(f"sidecar CSV hash mismatch for {csv_path}")
        matrix = read_feature_csv(csv_path, source_kind=kind)
        if matrix.columns != columns:
            raise ArtifactError("sidecar CSV columns do not match the envelope")
        return matrix
    rows = np.asarray(payload["rows"], dtype=float)
    if rows.size == 0:
        rows = rows.reshape(len(payload["ids"]), len(columns))
    return FeatureMatrix(columns, rows, kind, tuple(payload["ids"]))


def save_features(
    matrix: FeatureMatrix,
    path,
    kind: ArtifactKind = ArtifactKind.FEATURES,
    extra: dict | None = None,
    sidecar_threshold: int = SIDECAR_THRESHOLD,
) -> ArtifactEnvelope:
    """Persist a feature matrix, spilling large row data to a sidecar CSV."""
    path = Path(path)
    payload = features_to_payload(matrix)
    if matrix.rows.size > sidecar_threshold:
        stem = path.name
        for suffix in (".confgap.json", ".json"):
            if stem.endswith(suffix):
                stem = stem[: -len(suffix)]
                break
        sidecar_name = f"{stem}.features.csv"
        write_feature_csv(matrix, path.parent / sidecar_name)
        data = (path.parent / sidecar_name).read_bytes()
        payload.pop("rows")
        payload["rows_csv"] = {
            "path": sidecar_name,
            "sha256": hashlib.sha256(data).hexdigest(),
        }
    if extra:
        payload.update(extra)
    envelope = ArtifactEnvelope.make(kind, payload)
    save(envelope, path)
    return envelope


def load_features(path) -> FeatureMatrix:
    path = Path(path)
    envelope = load(path)
    return features_from_payload(envelope.payload, base_dir=path.parent)


# ---------------------------------------------------------------------------
# Delimited formats
# ---------------------------------------------------------------------------

def _format_value(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def write_feature_csv(matrix: FeatureMatrix, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *matrix.columns])
        for sid, row in zip(matrix.ids, matrix.rows):
            writer.writerow([sid, *(_format_value(v) for v in row)])


def read_feature_csv(path, source_kind: FeatureKind = FeatureKind.KNOWLEDGE) -> FeatureMatrix:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ArtifactError(f"empty feature CSV: {path}") from None
        if not header or header[0] != "id":
            raise ArtifactError(f"feature CSV {path} must start with an 'id' column")
        columns = tuple(header[1:])
        ids, rows = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(columns) + 1:
                raise ArtifactError(f"{path}:{lineno}: expected {len(columns) + 1} fields")
            ids.append(record[0])
            rows.append([float(v) for v in record[1:]])
    data = np.asarray(rows, dtype=float)
    if data.size == 0:
        data = data.reshape(len(ids), len(columns))
    return FeatureMatrix(columns, data, source_kind, tuple(ids))


def write_trajectory_csv(path, s_values, trajectory) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    traj = np.asarray(trajectory, dtype=float)
    s_values = np.asarray(s_values, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", *(f"x{i}" for i in range(traj.shape[1]))])
        for s, row in zip(s_values, traj):
            writer.writerow([_format_value(s), *(_format_value(v) for v in row)])


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (s values, T x S trajectory), ordered by the file's rows."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ArtifactError(f"empty trajectory CSV: {path}") from None
        if not header or header[0] != "s":
            raise ArtifactError(f"trajectory CSV {path} must start with an 's' column")
        s_values, rows = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise ArtifactError(f"{path}:{lineno}: expected {len(header)} fields")
            s_values.append(float(record[0]))
            rows.append([float(v) for v in record[1:]])
    if not rows:
        raise ArtifactError(f"trajectory CSV {path} has no data rows")
    return np.asarray(s_values, dtype=float), np.asarray(rows, dtype=float)


# ---------------------------------------------------------------------------
# On-disk domain layout
# ---------------------------------------------------------------------------

def save_domain(domain: Domain, directory) -> None:
    """Domain directory: trajectories/<id>.csv, labels.csv, knowledge.csv."""
    directory = Path(directory)
    traj_dir = directory / "trajectories"
    traj_dir.mkdir(parents=True, exist_ok=True)
    labeled = [s for s in domain.samples if s.label is not None]
    for sample in domain.samples:
        if sample.trajectory is not None:
            t = sample.trajectory.shape[0]
            write_trajectory_csv(
                traj_dir / f"{sample.id}.csv", np.arange(t, dtype=float), sample.trajectory
            )
    if labeled:
        with open(directory / "labels.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "label"])
            for sample in labeled:
                writer.writerow([sample.id, int(sample.label)])
    if domain.knowledge_columns is not None:
        matrix = FeatureMatrix.from_knowledge(domain)
        write_feature_csv(matrix, directory / "knowledge.csv")


def load_domain(directory, name: str | None = None, kind: DomainKind = DomainKind.SOURCE) -> Domain:
    directory = Path(directory)
    traj_dir = directory / "trajectories"
    if not traj_dir.is_dir():
        raise ArtifactError(f"no trajectories/ directory under {directory}")
    labels: dict[str, int] = {}
    labels_path = directory / "labels.csv"
    if labels_path.exists():
        with open(labels_path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for record in reader:
                labels[record["id"]] = int(record["label"])
    knowledge: dict[str, np.ndarray] = {}
    knowledge_columns = None
    knowledge_path = directory / "knowledge.csv"
    if knowledge_path.exists():
        kmatrix = read_feature_csv(knowledge_path)
        knowledge_columns = kmatrix.columns
        knowledge = {sid: kmatrix.rows[i] for i, sid in enumerate(kmatrix.ids)}
    samples = []
    for csv_path in sorted(traj_dir.glob("*.csv")):
        sid = csv_path.stem
        _, traj = read_trajectory_csv(csv_path)
        samples.append(
            DomainSample(
                id=sid,
                trajectory=traj,
                knowledge=knowledge.get(sid),
                label=labels.get(sid),
            )
        )
    if not samples:
        raise ArtifactError(f"no trajectory CSVs under {traj_dir}")
    return Domain(
        name=name or directory.name,
        samples=tuple(samples),
        kind=kind,
        knowledge_columns=knowledge_columns,
    )
