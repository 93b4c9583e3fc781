import numpy as np
import pytest

from jpcp.affinity import (
    apply_constraints,
    cosine_affinity,
    default_knn_k,
    knn_sparsify,
    normalized_laplacian,
    refine,
    scaled_adjacency,
    validate_affinity,
)


def random_affinity(n, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, max(2, n // 2)))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return cosine_affinity(v)


class TestCosineAffinity:
    def test_identical_vectors(self):
        v = np.tile([1.0, 0.0, 0.0], (2, 1))
        a = cosine_affinity(v)
        assert a == pytest.approx(np.ones((2, 2)))

    def test_antipodal_vectors(self):
        a = cosine_affinity(np.array([[1.0, 0.0], [-1.0, 0.0]]))
        assert a[0, 1] == pytest.approx(0.0)
        assert a[1, 0] == pytest.approx(0.0)

    def test_orthogonal_vectors(self):
        a = cosine_affinity(np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert a[0, 1] == pytest.approx(0.5)

    def test_zero_norm_error(self):
        with pytest.raises(ValueError, match="zero norm"):
            cosine_affinity(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_valid_affinity_contract(self):
        a = random_affinity(17, seed=3)
        validate_affinity(a)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(5)
        v = rng.normal(size=(12, 6))
        v /= np.linalg.norm(v, axis=1)[:, None]
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        assert np.abs(cosine_affinity(v) - cosine_affinity(v @ q)).max() < 1e-9


class TestRefine:
    def test_keep_all_is_identity(self):
        a = random_affinity(9, seed=1)
        assert np.array_equal(refine(a, 1.0), a)

    def test_hand_computed_3x3(self):
        a = np.array([[1.0, 0.9, 0.2], [0.9, 1.0, 0.8], [0.2, 0.8, 1.0]])
        out = refine(a, 0.5)
        # row medians: 0.9, 0.9, 0.8; entries strictly below are damped by
        # 0.01 and the result symmetrized
        expected = np.array(
            [[1.0, 0.9, 0.002], [0.9, 1.0, 0.404], [0.002, 0.404, 1.0]]
        )
        assert out == pytest.approx(expected, abs=1e-15)

    def test_postconditions(self):
        a = random_affinity(15, seed=2)
        out = refine(a, 0.3)
        assert np.array_equal(out, out.T)
        assert np.all(np.diag(out) == 1.0)
        validate_affinity(out)

    def test_bad_fraction(self):
        a = random_affinity(4)
        with pytest.raises(ValueError, match="row_keep_fraction"):
            refine(a, 0.0)


class TestApplyConstraints:
    def test_zero_is_identity_bitwise(self):
        a = random_affinity(13, seed=4)
        out = apply_constraints(a, np.zeros_like(a))
        assert np.array_equal(out, a)

    def test_plus_one_forces_one(self):
        a = random_affinity(6, seed=5)
        z = np.ones_like(a)
        out = apply_constraints(a, z)
        assert np.all(out == 1.0)

    def test_minus_one_forces_zero(self):
        a = random_affinity(6, seed=6)
        z = -np.ones_like(a)
        np.fill_diagonal(z, 0.0)
        out = apply_constraints(a, z)
        off = ~np.eye(6, dtype=bool)
        assert np.all(out[off] == 0.0)
        assert np.all(np.diag(out) == 1.0)

    def test_monotone_in_z(self):
        rng = np.random.default_rng(8)
        for trial in range(20):
            a = random_affinity(10, seed=trial)
            z = rng.uniform(-1, 1, size=(10, 10))
            z = (z + z.T) / 2
            out = apply_constraints(a, z)
            assert np.all(out[z >= 0] >= a[z >= 0] - 1e-12)
            assert np.all(out[z < 0] <= a[z < 0] + 1e-12)

    def test_out_of_range_z_rejected(self):
        a = random_affinity(4)
        z = np.zeros_like(a)
        z[0, 1] = z[1, 0] = 1.5
        with pytest.raises(ValueError, match="clamp"):
            apply_constraints(a, z)

    def test_output_contract(self):
        rng = np.random.default_rng(9)
        a = random_affinity(11, seed=10)
        z = rng.uniform(-1, 1, size=(11, 11))
        z = (z + z.T) / 2
        validate_affinity(apply_constraints(a, z))


class TestKnnSparsify:
    def test_full_k_is_identity(self):
        a = random_affinity(8, seed=11)
        assert np.array_equal(knn_sparsify(a, 7), a)

    def test_asymmetric_neighbor_halved(self):
        a = np.array([[1.0, 0.8, 0.3], [0.8, 1.0, 0.9], [0.3, 0.9, 1.0]])
        out = knn_sparsify(a, 1)
        # 0 keeps (0,1); 1 keeps (1,2); 2 keeps (2,1): entry (0,1) survives
        # in one direction only and is halved by the symmetrization
        expected = np.array([[1.0, 0.4, 0.0], [0.4, 1.0, 0.9], [0.0, 0.9, 1.0]])
        assert out == pytest.approx(expected, abs=1e-15)

    def test_symmetric_output(self):
        a = random_affinity(14, seed=12)
        out = knn_sparsify(a, 3)
        assert np.array_equal(out, out.T)
        assert np.all(np.diag(out) == 1.0)

    def test_k_out_of_range(self):
        a = random_affinity(5)
        with pytest.raises(ValueError, match="k must"):
            knn_sparsify(a, 5)
        with pytest.raises(ValueError, match="k must"):
            knn_sparsify(a, 0)

    def test_tie_break_lower_index(self):
        a = np.full((4, 4), 0.5)
        np.fill_diagonal(a, 1.0)
        out = knn_sparsify(a, 1)
        # every row keeps its lowest-index off-diagonal neighbor
        assert out[0, 1] == 0.5  # kept by both rows 0 and 1
        assert out[2, 0] == 0.25  # kept by row 2 only
        assert out[3, 0] == 0.25  # kept by row 3 only
        assert out[2, 3] == 0.0

    def test_default_k(self):
        assert default_knn_k(10) == 4
        assert default_knn_k(100) == 10
        assert default_knn_k(205) == 21
        assert default_knn_k(3) == 2  # capped at N - 1


class TestNormalizedLaplacian:
    def test_identity_affinity(self):
        out = normalized_laplacian(np.eye(4))
        assert np.array_equal(out, np.eye(4))

    def test_all_ones_2x2(self):
        out = normalized_laplacian(np.ones((2, 2)))
        assert out == pytest.approx(np.full((2, 2), 0.5))

    def test_spectral_radius_bounded(self):
        for seed in range(10):
            a = random_affinity(12, seed=seed)
            vals = np.linalg.eigvalsh(normalized_laplacian(a))
            assert np.abs(vals).max() <= 1.0 + 1e-9

    def test_zero_row_error_names_row(self):
        a = np.eye(3)
        a[1, 1] = 0.0
        with pytest.raises(ValueError):
            normalized_laplacian(a)

    def test_scaled_adjacency_isolates_zero_rows(self, caplog):
        a = np.eye(3)
        a[1, 1] = 0.0  # node 1 fully disconnected
        with caplog.at_level("WARNING", logger="jpcp"):
            out = scaled_adjacency(a, isolate_zero_rows=True)
        assert np.all(out[1, :] == 0.0)
        assert np.all(out[:, 1] == 0.0)
        assert out[0, 0] == 1.0 and out[2, 2] == 1.0
        assert any("isolated" in rec.message for rec in caplog.records)
