"""Command-line front door: diarize, simulate, sweep, eval.

Exit codes: 0 success, 1 usage error, 2 data/processing error. Set the
``JPCP_LOG`` environment variable (DEBUG/INFO/WARNING/ERROR) to control log
verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import session_io
from .constraints import ConstraintSet, build_constraints, simulate_constraints
from .metrics import LabeledTranscript, compute_report, format_report_table
from .pipeline import PipelineConfig, run_pipeline
from .session_io import DataFormatError
from .simulation import (
    generate_session,
    run_sweep,
    summarize_sweep,
    summary_csv_lines,
    sweep_csv_lines,
    FRAME_SECONDS,
    HOP_SECONDS,
)

logger = logging.getLogger("jpcp")

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage problems; this tool reserves 2
    # for data errors, so remap.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _configure_logging() -> None:
    level_name = os.environ.get("JPCP_LOG", "WARNING").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logger.setLevel(level)


def _json_dump(path: Path, payload) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _resolve_constraints(session, config: PipelineConfig):
    """Pick the constraint source per config; returns (ConstraintSet, name)."""
    source = config.constraint_source
    if source == "auto":
        if session.constraints is not None:
            source = "file"
        elif session.annotations is not None:
            source = "annotations"
        else:
            source = "none"
    if source == "none":
        return ConstraintSet.empty(), "none"
    if source == "file":
        if session.constraints is None:
            raise DataFormatError(
                "constraint source 'file' requires a constraints entry in the manifest"
            )
        return session.constraints, "file"
    if source == "annotations":
        if session.annotations is None:
            raise DataFormatError(
                "constraint source 'annotations' requires an annotations file"
            )
        return build_constraints(session.annotations, session.embeddings), "annotations"
    if source == "simulated":
        if session.transcript is None:
            raise DataFormatError(
                "constraint source 'simulated' requires ground-truth labels "
                "from a transcript file"
            )
        seed = int(np.random.SeedSequence([config.seed, 3]).generate_state(1)[0])
        cs = simulate_constraints(
            list(session.transcript.labels), config.constraint_rate, seed
        )
        return cs, "simulated"
    raise DataFormatError(f"unknown constraint source {source!r}")


def _cmd_diarize(args) -> int:
    manifest = session_io.load_manifest(args.manifest)
    session = session_io.load_session(manifest)
    config = (
        session_io.load_pipeline_config(args.config)
        if args.config
        else PipelineConfig()
    )
    if args.seed is not None:
        config = replace(config, seed=args.seed)

    constraints, source = _resolve_constraints(session, config)
    capture: dict | None = {} if args.dump_matrices else None
    result = run_pipeline(session.embeddings, constraints, config, capture=capture)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sid = manifest.session_id
    session_io.write_rttm(out / f"{sid}.rttm", result, session.embeddings, sid)
    _json_dump(
        out / f"{sid}_labels.json",
        {
            "session": sid,
            "num_speakers": result.num_speakers,
            "labels": [int(x) for x in result.labels],
        },
    )

    report = None
    if session.transcript is not None:
        pred_t = LabeledTranscript.from_entries(
            sid, [int(x) for x in result.labels], session.transcript.words
        )
        report = compute_report(
            [int(x) for x in result.labels],
            list(session.transcript.labels),
            pred_k=result.num_speakers,
            pred_transcript=pred_t,
            truth_transcript=session.transcript,
        )
        _json_dump(out / f"{sid}_metrics.json", report.as_dict())

    _json_dump(
        out / f"{sid}_run.json",
        _jsonable(
            {
                "session": sid,
                "config": config.as_dict(),
                "constraint_source": source,
                "constraints": {
                    "must": len(constraints.must),
                    "cannot": len(constraints.cannot),
                },
                "num_speakers": result.num_speakers,
            }
        ),
    )
    if capture is not None:
        for name, matrix in capture.items():
            session_io.dump_matrix_csv(out / f"{sid}_{name}.csv", matrix)
    if report is not None:
        print(format_report_table([(config.variant, report)]))
    else:
        print(f"{sid}: {result.num_speakers} speakers, {len(result.labels)} embeddings")
    return 0


def _cmd_simulate(args) -> int:
    cfg, session_id = session_io.load_simulation_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    embeddings, labels, annotations = generate_session(cfg)
    manifest_path = session_io.write_session(
        args.out,
        session_id,
        embeddings,
        labels,
        annotations,
        hop_seconds=HOP_SECONDS,
        frame_seconds=FRAME_SECONDS,
    )
    print(f"wrote {manifest_path} ({len(embeddings)} embeddings, "
          f"{len(set(labels))} speakers)")
    return 0


def _cmd_sweep(args) -> int:
    spec = session_io.load_sweep_spec(args.spec)
    rows = run_sweep(spec)
    summaries = summarize_sweep(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(
        "\n".join(sweep_csv_lines(rows)) + "\n", encoding="utf-8"
    )
    (out / "sweep_summary.csv").write_text(
        "\n".join(summary_csv_lines(summaries)) + "\n", encoding="utf-8"
    )
    for s in summaries:
        print(f"rate {s['rate']:g}: mean ARI {s['ari_mean']:.4f} "
              f"(+/- {s['ari_std']:.4f}) over {s['trials']} trials")
    return 0


def _load_labels_arg(path: str) -> tuple[list, int | None, LabeledTranscript | None]:
    """Accept either a diarize labels JSON or a transcript JSON."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{p}: invalid JSON: {exc}") from exc
    if isinstance(raw, dict) and "labels" in raw:
        labels = list(raw["labels"])
        k = int(raw["num_speakers"]) if "num_speakers" in raw else None
        return labels, k, None
    if isinstance(raw, dict) and "entries" in raw:
        transcript = session_io.load_transcript(p)
        return list(transcript.labels), None, transcript
    raise DataFormatError(
        f"{p}: expected a labels JSON ('labels') or transcript JSON ('entries')"
    )


def _cmd_eval(args) -> int:
    pred_labels, pred_k, pred_t = _load_labels_arg(args.pred)
    true_labels, true_k, true_t = _load_labels_arg(args.truth)
    if len(pred_labels) != len(true_labels):
        raise DataFormatError(
            f"prediction has {len(pred_labels)} labels, reference {len(true_labels)}"
        )
    if pred_t is None and true_t is not None:
        # word payloads come from the reference side when the prediction is a
        # bare label file
        pred_t = LabeledTranscript.from_entries("pred", pred_labels, true_t.words)
    report = compute_report(
        pred_labels,
        true_labels,
        pred_k=pred_k,
        true_k=true_k,
        pred_transcript=pred_t,
        truth_transcript=true_t,
    )
    if args.json:
        print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    else:
        print(format_report_table([("eval", report)]))
    if args.out:
        _json_dump(Path(args.out), report.as_dict())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jpcp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diarize", help="run the diarization back-end on a session")
    p.add_argument("--manifest", required=True, help="session manifest JSON")
    p.add_argument("--config", help="pipeline config (TOML or JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument(
        "--dump-matrices",
        action="store_true",
        help="write intermediate matrices as CSV for debugging",
    )
    p.set_defaults(func=_cmd_diarize)

    p = sub.add_parser("simulate", help="generate a synthetic session")
    p.add_argument("--config", required=True, help="simulation config (TOML or JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="run a constraint-rate sweep")
    p.add_argument("--spec", required=True, help="sweep spec (TOML or JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("eval", help="score prediction files against a reference")
    p.add_argument("--pred", required=True, help="labels or transcript JSON")
    p.add_argument("--truth", required=True, help="labels or transcript JSON")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.add_argument("--out", help="also write the report JSON here")
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, ValueError, OSError) as exc:
        print(f"jpcp {args.command}: error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
