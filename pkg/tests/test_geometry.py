import numpy as np
import pytest

from gapkit.embedstore import PairedEmbeddingDataset, l2_normalize
from gapkit.errors import DataValidationError, ParameterError
from gapkit.geometry import (
    AlignmentConfig,
    align,
    compute_gap,
    mean_resultant_length,
    participation_ratio,
    pca_project,
    pre_normalization_gap,
)

from conftest import make_dataset, unit_rows


def _all_train(img, txt, c=2):
    n = img.shape[0]
    rng = np.random.default_rng(0)
    return PairedEmbeddingDataset(
        img, txt, rng.integers(0, c, n), np.zeros(n, dtype=np.uint8), "multiclass", c
    )


class TestComputeGap:
    def test_identical_modalities_zero_gap(self):
        rng = np.random.default_rng(0)
        rows = unit_rows(rng, 20, 6)
        geo = compute_gap(_all_train(rows, rows.copy()), "train")
        np.testing.assert_allclose(geo.delta, 0.0, atol=1e-15)
        assert geo.gap_norm == 0.0

    def test_single_pair(self):
        v = np.array([[1.0, 0.0, 0.0]])
        t = np.array([[0.0, 1.0, 0.0]])
        geo = compute_gap(_all_train(v, t), "train")
        np.testing.assert_allclose(geo.delta, v[0] - t[0], atol=1e-15)
        assert geo.r_image == pytest.approx(1.0, abs=1e-12)
        assert geo.r_text == pytest.approx(1.0, abs=1e-12)

    def test_hand_computed_centroids(self):
        v = l2_normalize(np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 1.0, 0]]))
        t = l2_normalize(np.array([[0, 0, 1.0], [0, 1.0, 1.0], [1.0, 0, 1.0]]))
        geo = compute_gap(_all_train(v, t), "train")
        expected = v.sum(axis=0) / 3 - t.sum(axis=0) / 3
        np.testing.assert_allclose(geo.delta, expected, atol=1e-9)
        assert geo.gap_norm == pytest.approx(np.linalg.norm(expected), abs=1e-9)

    def test_empty_split_named(self):
        ds = make_dataset(fractions=(1.0, 0.0, 0.0))
        with pytest.raises(DataValidationError, match="test"):
            compute_gap(ds, "test")

    def test_permutation_invariant(self):
        ds = make_dataset(n=40, seed=3)
        rng = np.random.default_rng(9)
        perm = rng.permutation(ds.n_samples)
        shuffled = PairedEmbeddingDataset(
            ds.image_embeddings[perm], ds.text_embeddings[perm],
            ds.labels[perm], ds.splits[perm], ds.task_kind, ds.class_count,
        )
        a, b = compute_gap(ds, "train"), compute_gap(shuffled, "train")
        np.testing.assert_allclose(a.delta, b.delta, atol=1e-12)
        assert abs(a.r_image - b.r_image) < 1e-12


class TestMeanResultantLength:
    def test_identical_vectors(self):
        rows = np.tile([0.6, 0.8], (10, 1))
        assert mean_resultant_length(rows) == pytest.approx(1.0, abs=1e-9)

    def test_antipodal_pair(self):
        rows = np.array([[1.0, 0.0], [-1.0, 0.0]])
        assert mean_resultant_length(rows) == pytest.approx(0.0, abs=1e-9)

    def test_uniform_high_dim_small(self):
        rng = np.random.default_rng(0)
        rows = unit_rows(rng, 10_000, 512)
        r = mean_resultant_length(rows)
        assert 0.0 <= r < 0.05
        # direct-mean oracle
        assert r == pytest.approx(float(np.linalg.norm(rows.mean(axis=0))), abs=1e-12)

    def test_non_unit_row_rejected(self):
        with pytest.raises(ParameterError):
            mean_resultant_length(np.array([[2.0, 0.0], [1.0, 0.0]]))

    def test_bounds(self):
        rng = np.random.default_rng(4)
        for n in (2, 5, 50):
            r = mean_resultant_length(unit_rows(rng, n, 7))
            assert 0.0 <= r <= 1.0 + 1e-9


class TestAlign:
    def test_lambda_zero_identity(self):
        ds = make_dataset(n=30, seed=1)
        geo = compute_gap(ds, "train")
        out = align(ds, AlignmentConfig(lam=0.0, delta=geo.delta))
        np.testing.assert_allclose(out.image_embeddings, ds.image_embeddings, atol=1e-7)
        np.testing.assert_allclose(out.text_embeddings, ds.text_embeddings, atol=1e-7)

    def test_lambda_one_centroids_coincide_pre_normalization(self):
        ds = make_dataset(n=200, seed=2, fractions=(1.0, 0.0, 0.0))
        geo = compute_gap(ds, "train")
        cfg = AlignmentConfig(lam=1.0, delta=geo.delta)
        img = ds.image_embeddings - 0.5 * geo.delta
        txt = ds.text_embeddings + 0.5 * geo.delta
        np.testing.assert_allclose(img.mean(axis=0), txt.mean(axis=0), atol=1e-6)
        assert pre_normalization_gap(ds, cfg, "train") < 1e-9

    @pytest.mark.parametrize("lam", [0.0, 0.25, 0.5, 0.75, 1.0])
    def test_residual_gap_is_linear_in_lambda(self, lam):
        ds = make_dataset(n=120, seed=3, fractions=(1.0, 0.0, 0.0))
        geo = compute_gap(ds, "train")
        residual = pre_normalization_gap(ds, AlignmentConfig(lam=lam, delta=geo.delta))
        assert residual == pytest.approx((1 - lam) * geo.gap_norm, abs=1e-9)

    def test_pairing_and_metadata_preserved(self):
        ds = make_dataset(n=25, seed=4)
        geo = compute_gap(ds, "train")
        out = align(ds, AlignmentConfig(lam=0.7, delta=geo.delta))
        np.testing.assert_array_equal(out.labels, ds.labels)
        np.testing.assert_array_equal(out.splits, ds.splits)
        # row i of the output is the shifted row i of the input
        shifted = l2_normalize(ds.image_embeddings - 0.35 * geo.delta)
        np.testing.assert_allclose(out.image_embeddings, shifted, atol=1e-12)

    def test_lambda_out_of_range(self):
        with pytest.raises(ParameterError, match="lambda"):
            AlignmentConfig(lam=1.5, delta=np.zeros(4))

    def test_dimension_mismatch(self):
        ds = make_dataset(d=8)
        with pytest.raises(ParameterError):
            align(ds, AlignmentConfig(lam=0.5, delta=np.ones(5)))


class TestPca:
    def test_rank_one_data(self):
        rng = np.random.default_rng(0)
        direction = np.array([1.0, 2.0, -1.0])
        coeffs = rng.standard_normal(30)
        rows = np.outer(coeffs, direction)
        rows[:, 0] += 5.0  # offset removed by centering
        ds = _all_train(rows[:15], rows[15:])
        proj = pca_project(ds, 2)
        total = proj.explained_variance.sum()
        assert proj.explained_variance[0] / total >= 1 - 1e-6

    def test_orthonormal_components(self):
        ds = make_dataset(n=40, d=10, seed=6)
        proj = pca_project(ds, 3)
        np.testing.assert_allclose(
            proj.components @ proj.components.T, np.eye(3), atol=1e-6
        )

    def test_2d_eigenvalues_against_closed_form(self):
        rng = np.random.default_rng(1)
        cov = np.array([[2.0, 1.0], [1.0, 1.0]])
        chol = np.linalg.cholesky(cov)
        rows = rng.standard_normal((4000, 2)) @ chol.T
        ds = _all_train(rows[:2000], rows[2000:])
        proj = pca_project(ds, 2)
        pooled = np.vstack([ds.image_embeddings, ds.text_embeddings])
        centered = pooled - pooled.mean(axis=0)
        s = centered.T @ centered / (len(pooled) - 1)
        # closed-form 2x2 eigenvalues
        tr, det = s[0, 0] + s[1, 1], s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
        disc = np.sqrt(tr * tr / 4 - det)
        expected = np.array([tr / 2 + disc, tr / 2 - disc])
        np.testing.assert_allclose(proj.explained_variance, expected, atol=1e-6)

    def test_variance_conservation_full_rank(self):
        ds = make_dataset(n=50, d=6, seed=7)
        proj = pca_project(ds, 6)
        pooled = np.vstack([ds.image_embeddings, ds.text_embeddings])
        total = pooled.var(axis=0, ddof=1).sum()
        assert proj.explained_variance.sum() == pytest.approx(total, rel=1e-6)

    def test_gram_route_when_wide(self):
        # d > 2N exercises the Gram-matrix path
        ds = make_dataset(n=5, d=64, seed=8)
        proj = pca_project(ds, 3)
        np.testing.assert_allclose(
            proj.components @ proj.components.T, np.eye(3), atol=1e-6
        )
        assert (np.diff(proj.explained_variance) <= 1e-12).all()

    def test_k_out_of_range(self):
        ds = make_dataset(n=10, d=4)
        with pytest.raises(ParameterError):
            pca_project(ds, 5)
        with pytest.raises(ParameterError):
            pca_project(ds, 0)

    def test_sign_convention_deterministic(self):
        ds = make_dataset(n=30, d=6, seed=9)
        a = pca_project(ds, 2)
        b = pca_project(ds, 2)
        np.testing.assert_array_equal(a.components, b.components)
        for row in a.components:
            assert row[np.abs(row).argmax()] > 0


def test_participation_ratio():
    assert participation_ratio(np.ones(5)) == pytest.approx(5.0)
    assert participation_ratio(np.array([1.0, 0, 0])) == pytest.approx(1.0)
