import numpy as np
import pytest
from scipy.stats import ortho_group

from src.schemas.exceptions import DimensionMismatchError, InsufficientDataError, InvalidInputError
from src.services.preprocess import (
    LdaTransform,
    length_normalize,
    length_normalize_rows,
    preprocess_rows,
    project,
    read_lda,
    scatter_matrices,
    train_lda,
    train_lda_arrays,
    write_lda,
)
from tests.conftest import make_set


def two_speaker_data(rng, n=200, dim=4):
    offsets = np.zeros(dim)
    offsets[0] = 3.0
    X = np.vstack([rng.standard_normal((n, dim)), rng.standard_normal((n, dim)) + offsets])
    labels = ["a"] * n + ["b"] * n
    return X, labels


class TestTrainLda:

    def test_two_class_fisher_direction(self, rng):
        X, labels = two_speaker_data(rng)
        lda = train_lda_arrays(X, labels, 1)
        assert lda.A.shape == (4, 1)
        assert abs(lda.A[0, 0]) > 0.99
        assert np.linalg.norm(lda.A[:, 0]) == pytest.approx(1.0, abs=1e-12)

    def test_single_speaker_rejected(self, rng):
        with pytest.raises(InsufficientDataError):
            train_lda_arrays(rng.standard_normal((10, 3)), ["a"] * 10, 1)

    def test_d_out_bounded_by_speakers(self, rng):
        X, labels = two_speaker_data(rng, n=20)
        with pytest.raises(InvalidInputError):
            train_lda_arrays(X, labels, 2)

    def test_deterministic_sign(self, rng):
        X, labels = two_speaker_data(rng)
        first = train_lda_arrays(X, labels, 1).A
        again = train_lda_arrays(X.copy(), list(labels), 1).A
        np.testing.assert_array_equal(first, again)
        nonzero = first[np.abs(first[:, 0]) > 1e-12, 0]
        assert nonzero[0] > 0

    def test_singular_within_scatter_is_ridged(self, rng):
        # Third coordinate is constant, so S_w is singular
        X, labels = two_speaker_data(rng, n=30, dim=3)
        X[:, 2] = 1.0
        lda = train_lda_arrays(X, labels, 1)
        assert np.all(np.isfinite(lda.A))

    def test_trace_ratio_beats_random_projections(self, rng):
        n_speakers, dim, d_out = 20, 8, 3
        means = rng.standard_normal((n_speakers, dim)) * np.linspace(3.0, 0.1, dim)
        X = np.vstack([means[s] + rng.standard_normal((10, dim)) for s in range(n_speakers)])
        labels = [f"s{s}" for s in range(n_speakers) for _ in range(10)]
        A = train_lda_arrays(X, labels, d_out).A
        s_b, s_w = scatter_matrices(X, labels)

        def ratio(P):
            return np.trace(P.T @ s_b @ P) / np.trace(P.T @ s_w @ P)

        best = ratio(A)
        for i in range(100):
            Q = ortho_group.rvs(dim, random_state=i)[:, :d_out]
            assert best >= ratio(Q) - 1e-12

    def test_from_ivector_set(self, rng):
        X, labels = two_speaker_data(rng, n=50)
        lda = train_lda(make_set(X, labels), 1)
        assert lda.d_in == 4 and lda.d_out == 1


class TestProjectAndNormalize:

    def test_identity_projection(self):
        w = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(project(w, LdaTransform(A=np.eye(3))), w)

    def test_coordinate_selection(self):
        lda = LdaTransform(A=np.array([[1.0], [0.0]]))
        np.testing.assert_array_equal(project(np.array([3.0, 4.0]), lda), [3.0])

    def test_matches_matrix_product(self, rng):
        A = rng.standard_normal((6, 4))
        w = rng.standard_normal(6)
        np.testing.assert_allclose(project(w, LdaTransform(A=A)), A.T @ w, rtol=1e-14)

    def test_projection_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            project(np.ones(3), LdaTransform(A=np.eye(2)))

    def test_length_normalize(self):
        np.testing.assert_allclose(length_normalize(np.array([3.0, 4.0])), [0.6, 0.8], atol=1e-15)

    def test_unit_vector_unchanged(self):
        w = np.array([0.0, 1.0, 0.0])
        np.testing.assert_array_equal(length_normalize(w), w)

    def test_zero_vector(self):
        with pytest.raises(InvalidInputError):
            length_normalize(np.zeros(4))
        with pytest.raises(InvalidInputError):
            length_normalize_rows(np.vstack([np.ones(4), np.zeros(4)]))

    def test_unit_norm_and_scale_invariance(self, rng):
        X = rng.standard_normal((500, 10)) * rng.uniform(1e-3, 1e3, (500, 1))
        normed = length_normalize_rows(X)
        np.testing.assert_allclose(np.linalg.norm(normed, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(length_normalize_rows(7.5 * X), normed, atol=1e-12)

    def test_pipeline_order(self, rng):
        A = rng.standard_normal((5, 2))
        X = rng.standard_normal((3, 5))
        expected = X @ A
        expected /= np.linalg.norm(expected, axis=1, keepdims=True)
        np.testing.assert_allclose(preprocess_rows(X, LdaTransform(A=A)), expected, atol=1e-14)

    def test_lda_round_trip(self, rng, tmp_path):
        lda = LdaTransform(A=rng.standard_normal((5, 2)))
        write_lda(lda, tmp_path / "lda.nmat")
        np.testing.assert_array_equal(read_lda(tmp_path / "lda.nmat").A, lda.A)
