"""File formats and session loading.

Embeddings travel as a small binary format (magic ``JPCP``, little-endian
u32 version/N/D header, float32 row-major payload) with a CSV fallback that
stores the same float32-quantized values in full decimal precision, so both
encodings load to the identical embedding set. Annotations, constraints,
and transcripts are JSON; pipeline and sweep configs are TOML (JSON also
accepted); labels leave as RTTM and JSON.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .clustering import ClusteringConfig, DiarizationResult
from .constraints import ConstraintSet
from .data import EmbeddingSet, SegmentAnnotation
from .metrics import LabeledTranscript
from .pipeline import PipelineConfig
from .propagation import PropagationConfig
from .simulation import SimulationConfig, SweepSpec
from .ssdr import SsdrConfig

logger = logging.getLogger("jpcp")

MAGIC = b"JPCP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class DataFormatError(ValueError):
    """A file failed to parse or violated its declared shape."""


# ---------------------------------------------------------------------------
# embedding payloads


def write_embeddings_binary(path: str | Path, vectors: np.ndarray) -> None:
    v = np.ascontiguousarray(np.asarray(vectors, dtype=np.float32))
    if v.ndim != 2:
        raise ValueError(f"vectors must be 2-D, got shape {v.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, v.shape[0], v.shape[1]))
        fh.write(v.tobytes(order="C"))


def read_embeddings_binary(path: str | Path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise DataFormatError(
            f"{path}: file too short for header ({len(blob)} bytes)"
        )
    magic, version, n, d = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + 4 * n * d
    if len(blob) != expected:
        raise DataFormatError(
            f"{path}: payload size mismatch at offset {_HEADER.size}: "
            f"expected {expected} bytes for {n}x{d} float32, found {len(blob)}"
        )
    flat = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    if not np.isfinite(flat).all():
        bad = int(np.argmin(np.isfinite(flat)))
        raise DataFormatError(
            f"{path}: non-finite value at element {bad} "
            f"(offset {_HEADER.size + 4 * bad})"
        )
    return flat.astype(np.float64).reshape(n, d)


def write_embeddings_csv(path: str | Path, vectors: np.ndarray) -> None:
    # Quantize to float32 like the binary format, then write exact decimal
    # representations so both encodings load identically.
    v = np.asarray(vectors, dtype=np.float32).astype(np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in v:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def read_embeddings_csv(path: str | Path) -> np.ndarray:
    path = Path(path)
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError(
                    f"{path}: line {lineno} has {len(row)} values, expected {width}"
                )
            rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no embedding rows found")
    v = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(v).all():
        bad = int(np.argwhere(~np.isfinite(v))[0][0])
        raise DataFormatError(f"{path}: non-finite value in row {bad}")
    return v


# ---------------------------------------------------------------------------
# manifest and session


@dataclass(frozen=True)
class SessionManifest:
    """Declares a session's files and shapes; paths are resolved relative to
    the manifest location."""

    session_id: str
    embeddings_path: Path
    count: int
    dim: int
    hop_seconds: float = 1.5
    frame_seconds: float = 1.5
    annotations_path: Path | None = None
    constraints_path: Path | None = None
    transcript_path: Path | None = None
    tokenization: str = "whitespace"

    def __post_init__(self):
        if self.count < 1 or self.dim < 1:
            raise ValueError("count and dim must be >= 1")
        if self.hop_seconds <= 0 or self.frame_seconds <= 0:
            raise ValueError("hop_seconds and frame_seconds must be positive")
        if self.tokenization not in ("whitespace", "per-character"):
            raise ValueError(
                f"tokenization must be 'whitespace' or 'per-character', "
                f"got {self.tokenization!r}"
            )


def load_manifest(path: str | Path) -> SessionManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    base = path.parent
    try:
        emb = raw["embeddings"]
        manifest = SessionManifest(
            session_id=str(raw["session_id"]),
            embeddings_path=base / emb["path"],
            count=int(emb["count"]),
            dim=int(emb["dim"]),
            hop_seconds=float(emb.get("hop_seconds", 1.5)),
            frame_seconds=float(emb.get("frame_seconds", emb.get("hop_seconds", 1.5))),
            annotations_path=base / raw["annotations"] if raw.get("annotations") else None,
            constraints_path=base / raw["constraints"] if raw.get("constraints") else None,
            transcript_path=base / raw["transcript"] if raw.get("transcript") else None,
            tokenization=str(raw.get("tokenization", "whitespace")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad manifest: {exc}") from exc
    return manifest


@dataclass(frozen=True)
class LoadedSession:
    manifest: SessionManifest
    embeddings: EmbeddingSet
    annotations: list[SegmentAnnotation] | None
    constraints: ConstraintSet | None
    transcript: LabeledTranscript | None


def tokenize(text: str, mode: str) -> list[str]:
    if mode == "whitespace":
        return text.split()
    if mode == "per-character":
        return [ch for ch in text if not ch.isspace()]
    raise ValueError(f"unknown tokenization mode {mode!r}")


def load_annotations(path: str | Path) -> list[SegmentAnnotation]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise DataFormatError(f"{path}: expected a JSON array of segments")
    out = []
    for i, seg in enumerate(raw):
        try:
            out.append(
                SegmentAnnotation(
                    segment_id=int(seg.get("segment_id", i)),
                    start_time=float(seg["start_time"]),
                    end_time=float(seg["end_time"]),
                    is_dialogue=bool(seg["is_dialogue"]),
                    turn_change_points=tuple(
                        float(t) for t in seg.get("turn_change_points", [])
                    ),
                    speaker_label=(
                        str(seg["speaker_label"])
                        if seg.get("speaker_label") is not None
                        else None
                    ),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: segment {i}: {exc}") from exc
    return out


def save_annotations(path: str | Path, annotations: Sequence[SegmentAnnotation]) -> None:
    payload = [
        {
            "segment_id": a.segment_id,
            "start_time": a.start_time,
            "end_time": a.end_time,
            "is_dialogue": a.is_dialogue,
            "turn_change_points": list(a.turn_change_points),
            "speaker_label": a.speaker_label,
        }
        for a in annotations
    ]
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_constraints(path: str | Path) -> ConstraintSet:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    try:
        cs = ConstraintSet.from_pairs(
            must=raw.get("must", []), cannot=raw.get("cannot", [])
        )
        n = int(raw["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad constraint file: {exc}") from exc
    if cs.max_index() >= n:
        raise DataFormatError(
            f"{path}: constraint references index {cs.max_index()} but n={n}"
        )
    return cs


def save_constraints(path: str | Path, cs: ConstraintSet, n: int) -> None:
    payload = {
        "n": n,
        "must": sorted([list(p) for p in cs.must]),
        "cannot": sorted([list(p) for p in cs.cannot]),
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_transcript(
    path: str | Path, session_id: str = "", tokenization: str = "whitespace"
) -> LabeledTranscript:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    entries = raw.get("entries")
    if not isinstance(entries, list) or not entries:
        raise DataFormatError(f"{path}: transcript needs a nonempty 'entries' array")
    labels = []
    words = []
    for i, entry in enumerate(entries):
        try:
            labels.append(str(entry["speaker"]))
            if "words" in entry:
                words.append([str(w) for w in entry["words"]])
            elif "text" in entry:
                words.append(tokenize(str(entry["text"]), tokenization))
            else:
                words.append([])
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"{path}: entry {i}: {exc}") from exc
    return LabeledTranscript.from_entries(
        session=str(raw.get("session", session_id)), labels=labels, words=words
    )


def save_transcript(
    path: str | Path, session_id: str, labels: Sequence, words: Sequence[Sequence[str]]
) -> None:
    payload = {
        "session": session_id,
        "entries": [
            {"speaker": str(lab), "words": list(w)} for lab, w in zip(labels, words)
        ],
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_session(manifest: SessionManifest) -> LoadedSession:
    """Load every file the manifest declares and cross-check shapes."""
    path = manifest.embeddings_path
    if path.suffix == ".csv":
        vectors = read_embeddings_csv(path)
    else:
        vectors = read_embeddings_binary(path)
    if vectors.shape != (manifest.count, manifest.dim):
        raise DataFormatError(
            f"{path}: manifest declares {manifest.count}x{manifest.dim} but file "
            f"holds {vectors.shape[0]}x{vectors.shape[1]}"
        )
    embeddings = EmbeddingSet.from_vectors(
        vectors,
        normalize=True,
        hop_seconds=manifest.hop_seconds,
        frame_seconds=manifest.frame_seconds,
    )
    annotations = (
        load_annotations(manifest.annotations_path)
        if manifest.annotations_path
        else None
    )
    constraints = (
        load_constraints(manifest.constraints_path)
        if manifest.constraints_path
        else None
    )
    transcript = (
        load_transcript(
            manifest.transcript_path, manifest.session_id, manifest.tokenization
        )
        if manifest.transcript_path
        else None
    )
    if transcript is not None and len(transcript.labels) != len(embeddings):
        raise DataFormatError(
            f"{manifest.transcript_path}: {len(transcript.labels)} entries for "
            f"{len(embeddings)} embeddings"
        )
    if constraints is not None and constraints.max_index() >= len(embeddings):
        raise DataFormatError(
            f"{manifest.constraints_path}: constraint index out of range"
        )
    return LoadedSession(
        manifest=manifest,
        embeddings=embeddings,
        annotations=annotations,
        constraints=constraints,
        transcript=transcript,
    )


def write_session(
    out_dir: str | Path,
    session_id: str,
    embeddings: EmbeddingSet,
    labels: Sequence,
    annotations: Sequence[SegmentAnnotation],
    hop_seconds: float,
    frame_seconds: float,
) -> Path:
    """Materialize a synthetic session in the manifest layout; returns the
    manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_embeddings_binary(out / "embeddings.bin", embeddings.vectors)
    save_annotations(out / "annotations.json", annotations)
    words = embeddings.words or tuple(() for _ in range(len(embeddings)))
    save_transcript(out / "transcript.json", session_id, [f"spk{x}" for x in labels], words)
    manifest = {
        "session_id": session_id,
        "embeddings": {
            "path": "embeddings.bin",
            "count": len(embeddings),
            "dim": embeddings.dim,
            "hop_seconds": hop_seconds,
            "frame_seconds": frame_seconds,
        },
        "annotations": "annotations.json",
        "transcript": "transcript.json",
        "tokenization": "whitespace",
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest_path


# ---------------------------------------------------------------------------
# RTTM


def rttm_lines(
    result: DiarizationResult, embeddings: EmbeddingSet, session_id: str
) -> list[str]:
    """One RTTM line per maximal run of consecutive same-label embeddings."""
    labels = result.labels
    if len(labels) != len(embeddings):
        raise ValueError(
            f"{len(labels)} labels for {len(embeddings)} embeddings"
        )
    lines = []
    n = len(labels)
    run_start = 0
    for i in range(1, n + 1):
        if i < n and labels[i] == labels[i - 1]:
            continue
        start = float(embeddings.start_times[run_start])
        end = float(embeddings.end_times[i - 1])
        lines.append(
            f"SPEAKER {session_id} 1 {start:.2f} {end - start:.2f} "
            f"<NA> <NA> spk{int(labels[run_start])} <NA> <NA>"
        )
        run_start = i
    return lines


def write_rttm(
    path: str | Path,
    result: DiarizationResult,
    embeddings: EmbeddingSet,
    session_id: str,
) -> None:
    Path(path).write_text(
        "\n".join(rttm_lines(result, embeddings, session_id)) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# configs


def _read_config_file(path: str | Path) -> dict:
    path = Path(path)
    if path.suffix.lower() == ".json":
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise DataFormatError(f"{path}: invalid TOML: {exc}") from exc


def _pipeline_config_from_dict(raw: dict) -> PipelineConfig:
    ssdr_raw = raw.get("ssdr", {})
    prop_raw = raw.get("propagation", {})
    clus_raw = raw.get("clustering", {})
    cons_raw = raw.get("constraints", {})
    try:
        return PipelineConfig(
            variant=str(raw.get("variant", "ssdr+e2cpm")),
            row_keep_fraction=float(raw.get("row_keep_fraction", 0.3)),
            seed=int(raw.get("seed", 0)),
            ssdr=SsdrConfig(
                alpha=float(ssdr_raw.get("alpha", 1.0)),
                beta=float(ssdr_raw.get("beta", 1.0)),
                out_dim=(
                    int(ssdr_raw["out_dim"]) if ssdr_raw.get("out_dim") is not None else None
                ),
            ),
            propagation=PropagationConfig(
                lam=float(prop_raw.get("lambda", 0.5)),
                knn_k=(
                    int(prop_raw["knn_k"]) if prop_raw.get("knn_k") is not None else None
                ),
                theta_m=float(prop_raw.get("theta_m", 0.9)),
                theta_c=float(prop_raw.get("theta_c", 0.15)),
                augment_fraction=float(prop_raw.get("augment_fraction", 0.1)),
            ),
            clustering=ClusteringConfig(
                max_speakers=int(clus_raw.get("max_speakers", 16)),
                fixed_k=(
                    int(clus_raw["fixed_k"]) if clus_raw.get("fixed_k") is not None else None
                ),
                kmeans_restarts=int(clus_raw.get("kmeans_restarts", 10)),
            ),
            constraint_source=str(cons_raw.get("source", "auto")),
            constraint_rate=float(cons_raw.get("rate", 0.06)),
        )
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"bad pipeline config: {exc}") from exc


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    return _pipeline_config_from_dict(_read_config_file(path))


def _simulation_config_from_dict(raw: dict) -> SimulationConfig:
    sim = raw.get("simulation", raw)
    try:
        eps = sim.get("embeddings_per_speaker", (15, 30))
        return SimulationConfig(
            num_speakers=int(sim.get("num_speakers", 4)),
            embeddings_per_speaker=(int(eps[0]), int(eps[1])),
            dim=int(sim.get("dim", 64)),
            intra_speaker_spread=float(sim.get("intra_speaker_spread", 20.0)),
            inter_speaker_separation=float(sim.get("inter_speaker_separation", 25.0)),
            turn_structure=float(sim.get("turn_structure", 3.0)),
            seed=int(sim.get("seed", 0)),
        )
    except (TypeError, ValueError, IndexError) as exc:
        raise DataFormatError(f"bad simulation config: {exc}") from exc


def load_simulation_config(path: str | Path) -> tuple[SimulationConfig, str]:
    raw = _read_config_file(path)
    session_id = str(raw.get("session_id", "synthetic"))
    return _simulation_config_from_dict(raw), session_id


def load_sweep_spec(path: str | Path) -> SweepSpec:
    from .simulation import hard_instance

    raw = _read_config_file(path)
    try:
        spec = SweepSpec(
            constraint_rates=tuple(
                float(r) for r in raw.get("rates", (0.0, 0.01, 0.03, 0.06, 0.12))
            ),
            trials_per_rate=int(raw.get("trials_per_rate", 20)),
            pipeline_variant=str(raw.get("variant", "e2cpm")),
            simulation=(
                _simulation_config_from_dict(raw)
                if "simulation" in raw
                else hard_instance()
            ),
            pipeline=(
                _pipeline_config_from_dict(raw["pipeline"])
                if "pipeline" in raw
                else None
            ),
            base_seed=int(raw.get("base_seed", raw.get("seed", 0))),
        )
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"bad sweep spec: {exc}") from exc
    return spec


def dump_matrix_csv(path: str | Path, matrix: np.ndarray) -> None:
    """Full-precision row-major CSV dump for debugging."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.atleast_2d(np.asarray(matrix, dtype=np.float64)):
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")
