import numpy as np
import pytest
from dataclasses import replace

from jpcp.constraints import build_constraints
from jpcp.simulation import (
    SimulationConfig,
    SweepSpec,
    generate_session,
    hard_instance,
    run_sweep,
    summarize_sweep,
    summary_csv_lines,
    sweep_csv_lines,
)


class TestGenerateSession:
    def test_single_speaker(self):
        cfg = SimulationConfig(num_speakers=1, embeddings_per_speaker=(5, 8), dim=8, seed=0)
        emb, labels, anns = generate_session(cfg)
        assert set(labels) == {0}
        assert all(not a.turn_change_points for a in anns)
        assert sum(len(a.turn_change_points) for a in anns) == 0

    def test_tight_spread_geometry(self):
        cfg = SimulationConfig(
            num_speakers=3,
            embeddings_per_speaker=(6, 9),
            dim=12,
            intra_speaker_spread=1e9,
            inter_speaker_separation=30.0,
            seed=1,
        )
        emb, labels, _ = generate_session(cfg)
        labels = np.asarray(labels)
        g = emb.vectors @ emb.vectors.T
        same = np.equal.outer(labels, labels)
        off = ~np.eye(len(labels), dtype=bool)
        assert g[same & off].min() > 1.0 - 1e-9
        assert g[~same].max() <= np.cos(np.radians(30.0)) + 1e-9

    def test_deterministic(self):
        cfg = SimulationConfig(num_speakers=4, embeddings_per_speaker=(4, 8), dim=8, seed=7)
        e1, l1, a1 = generate_session(cfg)
        e2, l2, a2 = generate_session(cfg)
        assert np.array_equal(e1.vectors, e2.vectors)
        assert l1 == l2
        assert a1 == a2

    def test_per_speaker_counts_in_range(self):
        cfg = SimulationConfig(num_speakers=5, embeddings_per_speaker=(6, 10), dim=8, seed=3)
        _, labels, _ = generate_session(cfg)
        for s in range(5):
            assert 6 <= labels.count(s) <= 10

    def test_infeasible_separation_errors(self):
        cfg = SimulationConfig(
            num_speakers=20, dim=2, inter_speaker_separation=170.0, seed=0,
            embeddings_per_speaker=(2, 3),
        )
        with pytest.raises(ValueError, match="centroids"):
            generate_session(cfg)

    def test_annotations_reconstruct_truth_constraints(self):
        cfg = SimulationConfig(num_speakers=3, embeddings_per_speaker=(4, 7), dim=8, seed=11)
        emb, labels, anns = generate_session(cfg)
        cs = build_constraints(anns, emb)
        for i, j in cs.must:
            assert labels[i] == labels[j]
        for i, j in cs.cannot:
            assert labels[i] != labels[j]
        # every adjacent cross-run pair is cannot-linked
        expected_cannot = {
            (i, i + 1) for i in range(len(labels) - 1) if labels[i] != labels[i + 1]
        }
        assert cs.cannot == frozenset(expected_cannot)

    def test_mean_run_length_tracks_turn_structure(self):
        target = 3.0
        total_runs = 0
        total_embeddings = 0
        for seed in range(1000):
            cfg = SimulationConfig(
                num_speakers=3,
                embeddings_per_speaker=(10, 14),
                dim=4,
                turn_structure=target,
                seed=seed,
            )
            _, labels, _ = generate_session(cfg)
            runs = 1 + sum(
                1 for a, b in zip(labels, labels[1:]) if a != b
            )
            total_runs += runs
            total_embeddings += len(labels)
        mean_run = total_embeddings / total_runs
        assert abs(mean_run - target) / target < 0.2


class TestSweep:
    def test_spec_validation(self):
        with pytest.raises(ValueError, match="sorted"):
            SweepSpec(constraint_rates=(0.1, 0.0))
        with pytest.raises(ValueError, match="trials"):
            SweepSpec(trials_per_rate=0)

    def test_sweep_determinism_and_csv_bytes(self):
        spec = SweepSpec(
            constraint_rates=(0.0, 0.5),
            trials_per_rate=2,
            pipeline_variant="e2cpm",
            simulation=SimulationConfig(
                num_speakers=3, embeddings_per_speaker=(5, 8), dim=8, seed=0
            ),
            base_seed=5,
        )
        rows1 = run_sweep(spec)
        rows2 = run_sweep(spec)
        assert sweep_csv_lines(rows1) == sweep_csv_lines(rows2)
        assert summary_csv_lines(summarize_sweep(rows1)) == summary_csv_lines(
            summarize_sweep(rows2)
        )

    def test_rate_zero_equals_acoustic_only(self):
        sim = SimulationConfig(
            num_speakers=3, embeddings_per_speaker=(6, 9), dim=8,
            intra_speaker_spread=6.0, seed=0,
        )
        base = dict(constraint_rates=(0.0,), trials_per_rate=3, simulation=sim, base_seed=9)
        acoustic = run_sweep(SweepSpec(pipeline_variant="acoustic-only", **base))
        constrained = run_sweep(SweepSpec(pipeline_variant="e2cpm", **base))
        a_mean = np.mean([r["ari"] for r in acoustic])
        c_mean = np.mean([r["ari"] for r in constrained])
        assert abs(a_mean - c_mean) < 1e-12

    def test_full_rate_dominates_zero_rate(self):
        sim = SimulationConfig(
            num_speakers=4, embeddings_per_speaker=(6, 9), dim=16,
            intra_speaker_spread=3.5, seed=0,
        )
        spec = SweepSpec(
            constraint_rates=(0.0, 1.0),
            trials_per_rate=4,
            pipeline_variant="ssdr+e2cpm",
            simulation=sim,
            base_seed=2,
        )
        rows = run_sweep(spec)
        summary = summarize_sweep(rows)
        assert summary[1]["ari_mean"] >= summary[0]["ari_mean"]
        assert summary[1]["ari_mean"] == pytest.approx(1.0)

    def test_csv_header_and_shape(self):
        spec = SweepSpec(
            constraint_rates=(0.0,),
            trials_per_rate=1,
            pipeline_variant="acoustic-only",
            simulation=SimulationConfig(
                num_speakers=2, embeddings_per_speaker=(4, 6), dim=4, seed=0
            ),
        )
        rows = run_sweep(spec)
        lines = sweep_csv_lines(rows)
        assert lines[0] == "rate,trial,variant,ari,nmi,spk_diff,text_der"
        assert len(lines) == 2

    def test_hard_instance_is_valid(self):
        cfg = hard_instance()
        emb, labels, _ = generate_session(replace(cfg, seed=1))
        assert len(set(labels)) == 8
        assert emb.dim == 64
