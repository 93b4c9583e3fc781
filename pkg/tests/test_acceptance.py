"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Numeric tolerances are fixed here, not tuned at runtime."""

import functools
import json
import sys
import time
from dataclasses import replace
from fractions import Fraction
from math import log
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from jpcp.affinity import apply_constraints, cosine_affinity, refine
from jpcp.cli import main as cli_main
from jpcp.constraints import ConstraintSet, simulate_constraints, to_constraint_matrix
from jpcp.metrics import (
    LabeledTranscript,
    adjusted_rand_index,
    cpwer,
    normalized_mutual_information,
)
from jpcp.pipeline import PipelineConfig, run_pipeline
from jpcp.propagation import PropagationConfig, e2cp, e2cp_iterative_oracle, e2cpm
from jpcp.simulation import (
    SimulationConfig,
    SweepSpec,
    generate_session,
    hard_instance,
    run_sweep,
    summarize_sweep,
)
from jpcp.ssdr import SsdrConfig, ssdr_project

FIXTURES = Path(__file__).parent / "fixtures"


def criterion(num, name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"ACCEPTANCE {num} ({name}): FAIL", file=sys.__stdout__)
                raise
            print(f"ACCEPTANCE {num} ({name}): PASS", file=sys.__stdout__)
            return result

        return wrapper

    return decorate


def random_affinity(rng, n):
    v = rng.normal(size=(n, max(3, n // 2)))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return cosine_affinity(v)


@criterion(1, "closed-form propagation matches iterative oracle")
def test_criterion_1_propagation_oracle():
    rng = np.random.default_rng(101)
    t0 = time.time()
    for _ in range(50):
        n = int(rng.integers(4, 51))
        a = random_affinity(rng, n)
        labels = [int(x) for x in rng.integers(0, 4, size=n)]
        rate = float(rng.uniform(0.05, 0.5))
        z = to_constraint_matrix(
            simulate_constraints(labels, rate, seed=int(rng.integers(1 << 31))), n
        )
        lam = float(rng.uniform(0.05, 0.9))
        closed = e2cp(z, a, lam)
        iterated = e2cp_iterative_oracle(z, a, lam, tol=1e-10)
        assert np.linalg.norm(closed - iterated) < 1e-6
    assert time.time() - t0 < 10.0


@criterion(2, "unconstrained projection spans the PCA subspace")
def test_criterion_2_ssdr_pca_subspace():
    rng = np.random.default_rng(202)
    for _ in range(20):
        d_in = int(rng.integers(8, 65))
        n = int(rng.integers(d_in + 10, 201))
        d_out = int(rng.integers(1, min(10, d_in)))
        v = rng.normal(size=(n, d_in))
        v /= np.linalg.norm(v, axis=1)[:, None]
        from jpcp.data import EmbeddingSet

        emb = EmbeddingSet.from_vectors(v)
        w, _ = ssdr_project(emb, ConstraintSet.empty(), SsdrConfig(out_dim=d_out))
        x = v - v.mean(axis=0)
        _, _, vt = np.linalg.svd(x, full_matrices=False)
        oracle = vt[:d_out].T
        assert subspace_angles(w, oracle).max() < 1e-6


@criterion(3, "constraint blending identities hold exactly")
def test_criterion_3_blend_identities():
    rng = np.random.default_rng(303)
    for trial in range(10):
        n = int(rng.integers(3, 40))
        a = random_affinity(rng, n)
        off = ~np.eye(n, dtype=bool)

        assert np.array_equal(apply_constraints(a, np.zeros((n, n))), a)

        forced_up = apply_constraints(a, np.ones((n, n)))
        assert np.all(forced_up == 1.0)

        z_down = -np.ones((n, n))
        np.fill_diagonal(z_down, 0.0)
        forced_down = apply_constraints(a, z_down)
        assert np.all(forced_down[off] == 0.0)
        assert np.all(np.diag(forced_down) == 1.0)


@criterion(4, "metric implementations match brute-force oracles")
def test_criterion_4_metric_oracles():
    rng = np.random.default_rng(404)

    def ari_oracle(pred, truth):
        n11 = n00 = n10 = n01 = 0
        n = len(pred)
        for i in range(n):
            for j in range(i + 1, n):
                sp, st = pred[i] == pred[j], truth[i] == truth[j]
                n11 += sp and st
                n10 += sp and not st
                n01 += st and not sp
                n00 += not sp and not st
        den = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00)
        if den == 0:
            return 1.0
        return float(Fraction(2 * (n11 * n00 - n10 * n01), den))

    def nmi_oracle(pred, truth):
        n = len(pred)

        def h(labels):
            counts = {}
            for x in labels:
                counts[x] = counts.get(x, 0) + 1
            return -sum((c / n) * log(c / n) for c in counts.values())

        hu, hv = h(pred), h(truth)
        mi = hu + hv - h(list(zip(pred, truth)))
        if hu == 0.0 and hv == 0.0:
            return 1.0
        if hu == 0.0 or hv == 0.0:
            return 0.0
        return mi / (hu * hv) ** 0.5

    for _ in range(1000):
        n = int(rng.integers(2, 9))
        pred = [int(x) for x in rng.integers(0, 4, size=n)]
        truth = [int(x) for x in rng.integers(0, 4, size=n)]
        assert adjusted_rand_index(pred, truth) == ari_oracle(pred, truth)
        assert abs(
            normalized_mutual_information(pred, truth) - nmi_oracle(pred, truth)
        ) <= 1e-12

    vocab = [f"t{i}" for i in range(10)]
    for _ in range(200):
        n_spk = int(rng.integers(1, 7))
        n_seg = int(rng.integers(n_spk, 2 * n_spk + 4))
        t_labels = list(range(n_spk)) + [
            int(x) for x in rng.integers(0, n_spk, size=n_seg - n_spk)
        ]
        p_labels = [int(x) for x in rng.integers(0, n_spk + 1, size=n_seg)]
        words = [
            [vocab[i] for i in rng.integers(0, 10, size=rng.integers(1, 4))]
            for _ in range(n_seg)
        ]
        truth = LabeledTranscript.from_entries("s", t_labels, words)
        pred = LabeledTranscript.from_entries("s", p_labels, words)
        assert cpwer(pred, truth, mapping="hungarian") == cpwer(
            pred, truth, mapping="exhaustive"
        )


@criterion(5, "constraint-rate sweep reproduces the published trend")
def test_criterion_5_sweep_trend():
    t0 = time.time()
    spec = SweepSpec(base_seed=0)  # default hard instance, 20 trials/rate
    assert spec.constraint_rates == (0.0, 0.01, 0.03, 0.06, 0.12)
    assert spec.trials_per_rate == 20

    acoustic = run_sweep(replace(spec, constraint_rates=(0.0,),
                                 pipeline_variant="acoustic-only"))
    ac_mean = float(np.mean([r["ari"] for r in acoustic]))

    rows = run_sweep(spec)
    summary = summarize_sweep(rows)
    means = [s["ari_mean"] for s in summary]

    # at rate 0 the constrained variant must coincide with acoustic-only
    assert means[0] == pytest.approx(ac_mean, abs=1e-12)
    # non-decreasing mean ARI across the rate grid
    for lo, hi in zip(means, means[1:]):
        assert hi >= lo - 1e-12, f"mean ARI decreased: {means}"
    # 6% of constraints recover at least 80% of the headroom
    assert means[3] >= ac_mean + 0.8 * (1.0 - ac_mean), (
        f"recovered only {(means[3] - ac_mean) / (1 - ac_mean):.3f} "
        f"of the gap (baseline {ac_mean:.4f}, 6% mean {means[3]:.4f})"
    )
    assert time.time() - t0 < 300.0


@criterion(6, "constrained pipeline ordering and speaker-count gains")
def test_criterion_6_table_ordering():
    pipeline = PipelineConfig(
        variant="ssdr+e2cpm",
        row_keep_fraction=0.1,
        propagation=PropagationConfig(lam=0.1, augment_fraction=0.0),
    )
    suite = []
    for i in range(20):
        seeds = np.random.SeedSequence([0, i]).generate_state(3)
        cfg = replace(
            hard_instance(),
            num_speakers=2 + (i % 7),
            intra_speaker_spread=4.25,
            seed=int(seeds[0]),
        )
        emb, labels, _ = generate_session(cfg)
        suite.append((emb, labels, int(seeds[1]), int(seeds[2])))

    def evaluate(variant, rate):
        aris, spk_diff = [], 0
        for emb, labels, cseed, pseed in suite:
            cs = simulate_constraints(labels, rate, seed=cseed) if rate else None
            cfg = replace(pipeline, variant=variant, seed=pseed)
            result = run_pipeline(emb, cs, cfg)
            aris.append(adjusted_rand_index(result.labels, labels))
            spk_diff += abs(result.num_speakers - len(set(labels)))
        return float(np.mean(aris)), spk_diff

    ac_ari, ac_spk = evaluate("acoustic-only", 0.0)
    ari6, spk6 = evaluate("ssdr+e2cpm", 0.06)
    ari12, spk12 = evaluate("ssdr+e2cpm", 0.12)

    assert ari12 >= ari6 >= ac_ari, (ac_ari, ari6, ari12)
    assert spk12 < ac_spk, f"SpkDiff did not drop: acoustic {ac_spk}, 12% {spk12}"


@criterion(7, "enhanced propagation reduces exactly to its base forms")
def test_criterion_7_reductions():
    cfg = replace(hard_instance(), num_speakers=4,
                  embeddings_per_speaker=(10, 14), seed=3)
    emb, labels, _ = generate_session(cfg)
    n = len(emb)
    cs = simulate_constraints(labels, 0.05, seed=4)

    a = refine(cosine_affinity(emb), 0.3)
    reduced = PropagationConfig(lam=0.4, knn_k=n - 1, augment_fraction=0.0)
    z = to_constraint_matrix(cs, n)
    assert np.array_equal(e2cpm(cs, a, reduced), e2cp(z, a, 0.4))

    base = PipelineConfig(variant="e2cp", seed=5,
                          propagation=PropagationConfig(lam=0.4, augment_fraction=0.0))
    full = replace(base, variant="e2cpm",
                   propagation=PropagationConfig(lam=0.4, knn_k=n - 1,
                                                 augment_fraction=0.0))
    r_base = run_pipeline(emb, cs, base)
    r_full = run_pipeline(emb, cs, full)
    assert np.array_equal(r_base.labels, r_full.labels)
    assert np.array_equal(r_base.eigenvalues, r_full.eigenvalues)

    acoustic = run_pipeline(emb, None, replace(base, variant="acoustic-only"))
    for variant in ("e2cp", "e2cpm"):
        constrained = run_pipeline(
            emb, ConstraintSet.empty(), replace(full, variant=variant)
        )
        assert np.array_equal(constrained.labels, acoustic.labels)
        assert np.array_equal(constrained.eigenvalues, acoustic.eigenvalues)


@criterion(8, "runs are byte-deterministic and match the golden fixture")
def test_criterion_8_determinism_and_golden(tmp_path):
    manifest = FIXTURES / "session" / "manifest.json"
    config = FIXTURES / "fixture_config.toml"
    out1, out2 = tmp_path / "d1", tmp_path / "d2"
    for out in (out1, out2):
        assert cli_main([
            "diarize", "--manifest", str(manifest),
            "--config", str(config), "--out", str(out),
        ]) == 0
    for name in ("fixture.rttm", "fixture_labels.json",
                 "fixture_metrics.json", "fixture_run.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    golden = (FIXTURES / "golden_fixture.rttm").read_bytes()
    assert (out1 / "fixture.rttm").read_bytes() == golden
    golden_labels = json.loads(
        (FIXTURES / "golden_fixture_labels.json").read_text()
    )
    assert json.loads((out1 / "fixture_labels.json").read_text()) == golden_labels

    spec_path = tmp_path / "spec.toml"
    spec_path.write_text(
        "\n".join([
            "rates = [0.0, 0.2]",
            "trials_per_rate = 2",
            'variant = "e2cpm"',
            "base_seed = 11",
            "[simulation]",
            "num_speakers = 3",
            "embeddings_per_speaker = [6, 9]",
            "dim = 16",
        ]) + "\n"
    )
    s1, s2 = tmp_path / "s1", tmp_path / "s2"
    for out in (s1, s2):
        assert cli_main(["sweep", "--spec", str(spec_path), "--out", str(out)]) == 0
    assert (s1 / "sweep.csv").read_bytes() == (s2 / "sweep.csv").read_bytes()
    assert (s1 / "sweep_summary.csv").read_bytes() == (
        s2 / "sweep_summary.csv"
    ).read_bytes()
