import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import subspace_angles
from scipy.stats import multivariate_normal, norm, qmc

from src.schemas.exceptions import (
    CohortError,
    DimensionMismatchError,
    InsufficientDataError,
    InvalidInputError,
    UnknownIdError,
)
from src.schemas.vectors import ScoreSet, Trial
from src.services.gplda import (
    GpldaModel,
    TrainConfig,
    cohort_scores,
    read_gplda,
    score,
    score_matrix,
    score_pairs,
    score_trials,
    snorm,
    snorm_matrix,
    train_gplda,
    train_gplda_arrays,
    write_gplda,
)
from tests.conftest import make_set, sample_plda_data


def random_model(rng, k=4, n1=2) -> GpldaModel:
    B = rng.standard_normal((k, k))
    return GpldaModel(
        mean=rng.standard_normal(k) * 0.1,
        u1=rng.standard_normal((k, n1)),
        lam=np.linalg.inv(B @ B.T / k + 0.5 * np.eye(k)),
    )


def brute_force_llr(a, b, model: GpldaModel) -> float:
    """log N([a;b]; [m;m], H1 covariance) - log N(a) - log N(b)."""
    across = model.u1 @ model.u1.T
    total = across + np.linalg.inv(model.lam)
    joint = np.block([[total, across], [across, total]])
    mean2 = np.concatenate([model.mean, model.mean])
    return (
        multivariate_normal(mean2, joint).logpdf(np.concatenate([a, b]))
        - multivariate_normal(model.mean, total).logpdf(a)
        - multivariate_normal(model.mean, total).logpdf(b)
    )


class TestGpldaModel:

    def test_rejects_non_pd_precision(self):
        with pytest.raises(InvalidInputError):
            GpldaModel(mean=np.zeros(2), u1=np.ones((2, 1)), lam=np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_rejects_asymmetric_precision(self):
        with pytest.raises(InvalidInputError):
            GpldaModel(mean=np.zeros(2), u1=np.ones((2, 1)), lam=np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_rejects_too_many_eigenvoices(self):
        with pytest.raises(DimensionMismatchError):
            GpldaModel(mean=np.zeros(2), u1=np.ones((2, 3)), lam=np.eye(2))

    def test_round_trip(self, rng, tmp_path):
        model = random_model(rng)
        write_gplda(model, tmp_path / "plda.nmat")
        back = read_gplda(tmp_path / "plda.nmat")
        np.testing.assert_array_equal(back.u1, model.u1)
        np.testing.assert_array_equal(back.lam, model.lam)
        assert back.n1 == 2

    def test_equality_is_identity(self, rng, tmp_path):
        model = random_model(rng)
        write_gplda(model, tmp_path / "plda.nmat")
        back = read_gplda(tmp_path / "plda.nmat")
        assert model == model
        assert model != back
        assert model.kernel == model.kernel
        assert back.kernel != model.kernel


class TestScore:

    def test_no_speaker_subspace_scores_zero(self, rng):
        model = GpldaModel(mean=np.zeros(3), u1=np.zeros((3, 1)), lam=np.diag([1.0, 2.0, 3.0]))
        for _ in range(10):
            assert score(rng.standard_normal(3), rng.standard_normal(3), model) == pytest.approx(0.0, abs=1e-12)

    def test_symmetry(self, rng):
        model = random_model(rng, k=6, n1=3)
        for _ in range(50):
            a, b = rng.standard_normal(6), rng.standard_normal(6)
            assert abs(score(a, b, model) - score(b, a, model)) < 1e-10

    def test_matches_joint_gaussian(self, rng):
        model = random_model(rng, k=5, n1=2)
        for _ in range(20):
            a, b = rng.standard_normal(5), rng.standard_normal(5)
            assert score(a, b, model) == pytest.approx(brute_force_llr(a, b, model), abs=1e-9)

    def test_one_dimensional_quadrature(self):
        model = GpldaModel(mean=np.zeros(1), u1=np.array([[1.0]]), lam=np.array([[1.0]]))
        a = b = 0.5
        joint, _ = quad(lambda x: norm.pdf(a, x, 1.0) * norm.pdf(b, x, 1.0) * norm.pdf(x), -np.inf, np.inf)
        marginal = norm.pdf(a, 0.0, np.sqrt(2.0)) * norm.pdf(b, 0.0, np.sqrt(2.0))
        assert score(np.array([a]), np.array([b]), model) == pytest.approx(np.log(joint / marginal), abs=1e-6)

    def test_random_one_dimensional_models(self, rng):
        for _ in range(20):
            u, lam, m = rng.uniform(0.2, 2.0), rng.uniform(0.5, 4.0), rng.normal(0, 0.3)
            a, b = rng.normal(m, 1.0, 2)
            model = GpldaModel(mean=np.array([m]), u1=np.array([[u]]), lam=np.array([[lam]]))
            sd = 1.0 / np.sqrt(lam)
            joint, _ = quad(
                lambda x: norm.pdf(a, m + u * x, sd) * norm.pdf(b, m + u * x, sd) * norm.pdf(x),
                -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12,
            )
            total_sd = np.sqrt(u * u + 1.0 / lam)
            marginal = norm.pdf(a, m, total_sd) * norm.pdf(b, m, total_sd)
            assert score(np.array([a]), np.array([b]), model) == pytest.approx(np.log(joint / marginal), abs=1e-6)

    def test_two_dimensional_monte_carlo(self, rng):
        for i in range(20):
            model = random_model(rng, k=2, n1=1)
            a, b = rng.standard_normal(2), rng.standard_normal(2)
            u = qmc.Sobol(d=1, scramble=True, seed=i).random_base2(m=20)
            x = norm.ppf(np.clip(u, 1e-16, 1.0 - 1e-16))
            within = multivariate_normal(np.zeros(2), np.linalg.inv(model.lam))
            centres = model.mean + x @ model.u1.T
            total = multivariate_normal(model.mean, model.u1 @ model.u1.T + np.linalg.inv(model.lam))
            ratios = within.pdf(a - centres) * within.pdf(b - centres) / (total.pdf(a) * total.pdf(b))
            band = 3.0 * ratios.std() / np.sqrt(ratios.size)
            assert abs(np.exp(score(a, b, model)) - ratios.mean()) < band

    def test_batch_forms_agree(self, rng):
        model = random_model(rng, k=4, n1=2)
        E, T = rng.standard_normal((7, 4)), rng.standard_normal((9, 4))
        matrix = score_matrix(E, T, model)
        for i in range(7):
            for j in range(9):
                assert matrix[i, j] == pytest.approx(score(E[i], T[j], model), abs=1e-10)
        np.testing.assert_allclose(score_pairs(E[:5], T[:5], model), np.diag(matrix[:5, :5]), atol=1e-10)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatchError):
            score(np.ones(3), np.ones(4), random_model(rng, k=4))


class TestScoreTrials:

    def setup_method(self):
        rng = np.random.default_rng(7)
        self.model = random_model(rng, k=4, n1=2)
        self.enrolled = {f"e{i}": rng.standard_normal(4) for i in range(10)}
        self.tests = {f"t{i}": rng.standard_normal(4) for i in range(12)}

    def test_empty(self):
        assert len(score_trials([], self.enrolled, self.tests, self.model)) == 0

    def test_single(self):
        scores = score_trials([Trial(enrol_id="e3", test_id="t5")], self.enrolled, self.tests, self.model)
        assert scores.keys() == [("e3", "t5")]
        assert scores.scores[0] == pytest.approx(score(self.enrolled["e3"], self.tests["t5"], self.model), abs=1e-12)

    @pytest.mark.parametrize("workers", [1, 4])
    def test_matches_loop(self, workers):
        rng = np.random.default_rng(3)
        pairs = sorted({(f"e{rng.integers(10)}", f"t{rng.integers(12)}") for _ in range(200)})[:100]
        trials = [Trial(enrol_id=e, test_id=t) for e, t in pairs]
        scores = score_trials(trials, self.enrolled, self.tests, self.model, workers=workers)
        assert scores.keys() == pairs
        expected = [score(self.enrolled[e], self.tests[t], self.model) for e, t in pairs]
        np.testing.assert_allclose(scores.scores, expected, atol=1e-10)

    def test_worker_count_does_not_change_scores(self):
        trials = [Trial(enrol_id=e, test_id=t) for e in self.enrolled for t in self.tests]
        one = score_trials(trials, self.enrolled, self.tests, self.model, workers=1)
        many = score_trials(trials, self.enrolled, self.tests, self.model, workers=4)
        assert one.scores.tobytes() == many.scores.tobytes()

    def test_unknown_id(self):
        with pytest.raises(UnknownIdError) as exc:
            score_trials([Trial(enrol_id="nobody", test_id="t1")], self.enrolled, self.tests, self.model)
        assert "nobody" in exc.value.message


class TestSnorm:

    def test_standard_cohorts_are_identity(self):
        raw = ScoreSet.from_entries([("e", "t", 2.5), ("e", "u", -1.0)])
        out = snorm(raw, {"e": [-1.0, 1.0]}, {"t": [-1.0, 1.0], "u": [1.0, -1.0]})
        np.testing.assert_allclose(out.scores, raw.scores, atol=1e-15)

    def test_hand_evaluation(self):
        raw = ScoreSet.from_entries([("e", "t", 2.0)])
        out = snorm(raw, {"e": [0.0, 2.0]}, {"t": [-1.0, 1.0]})
        assert out.scores[0] == pytest.approx(1.5)

    def test_constant_cohort(self):
        raw = ScoreSet.from_entries([("e", "t", 2.0)])
        with pytest.raises(CohortError):
            snorm(raw, {"e": [1.0, 1.0, 1.0]}, {"t": [-1.0, 1.0]})

    def test_missing_cohort(self):
        raw = ScoreSet.from_entries([("e", "t", 2.0)])
        with pytest.raises(CohortError):
            snorm(raw, {}, {"t": [-1.0, 1.0]})

    def test_preserves_order_within_shared_cohorts(self, rng):
        cohort = list(rng.standard_normal(20))
        raw_scores = rng.standard_normal(30)
        raw = ScoreSet.from_entries([(f"e{i}", f"t{i}", s) for i, s in enumerate(raw_scores)])
        enrol = {f"e{i}": cohort for i in range(30)}
        test = {f"t{i}": cohort for i in range(30)}
        out = snorm(raw, enrol, test)
        np.testing.assert_array_equal(np.argsort(out.scores), np.argsort(raw_scores))

    def test_matrix_form_matches(self, rng):
        model = random_model(rng, k=3, n1=1)
        E, T, C = rng.standard_normal((4, 3)), rng.standard_normal((5, 3)), rng.standard_normal((30, 3))
        raw_matrix = score_matrix(E, T, model)
        enrol_ids, test_ids = [f"e{i}" for i in range(4)], [f"t{j}" for j in range(5)]
        raw = ScoreSet.from_entries([
            (enrol_ids[i], test_ids[j], raw_matrix[i, j]) for i in range(4) for j in range(5)
        ])
        out = snorm(raw, cohort_scores(enrol_ids, E, C, model), cohort_scores(test_ids, T, C, model))
        expected = snorm_matrix(raw_matrix, score_matrix(E, C, model), score_matrix(T, C, model))
        np.testing.assert_allclose(out.scores, expected.reshape(-1), atol=1e-12)


class TestTrainGplda:

    def test_mean_is_sample_mean(self, rng):
        X, labels = sample_plda_data(rng, 30, 4, rng.standard_normal((5, 2)), np.eye(5), mean=np.arange(5.0))
        model, _ = train_gplda_arrays(X, labels, TrainConfig(n1=2, em_iterations=3))
        np.testing.assert_allclose(model.mean, X.mean(axis=0), atol=1e-12)

    def test_log_likelihood_nondecreasing(self):
        for trial in range(50):
            rng = np.random.default_rng(100 + trial)
            k, n1 = 5, 2
            B = rng.standard_normal((k, k))
            X, labels = sample_plda_data(rng, 20, 3, rng.standard_normal((k, n1)), B @ B.T / k + 0.3 * np.eye(k))
            _, history = train_gplda_arrays(X, labels, TrainConfig(n1=n1, em_iterations=20, seed=trial))
            assert len(history) == 21
            assert np.all(np.diff(history) >= -1e-8)

    def test_parameter_recovery(self):
        rng = np.random.default_rng(2024)
        k, n1 = 8, 2
        u1_true = rng.standard_normal((k, n1)) * 1.5
        B = rng.standard_normal((k, k))
        within_true = B @ B.T / k + 0.5 * np.eye(k)
        X, labels = sample_plda_data(rng, 500, 8, u1_true, within_true)

        model, _ = train_gplda_arrays(X, labels, TrainConfig(n1=n1, em_iterations=20))
        assert np.degrees(subspace_angles(model.u1, u1_true).max()) < 10.0

        marginal_true = u1_true @ u1_true.T + within_true
        marginal_est = model.u1 @ model.u1.T + np.linalg.inv(model.lam)
        assert np.linalg.norm(marginal_est - marginal_true) / np.linalg.norm(marginal_true) < 0.10

    def test_same_speaker_scores_higher(self):
        rng = np.random.default_rng(5)
        u1 = rng.standard_normal((6, 2))
        X, labels = sample_plda_data(rng, 100, 4, u1, 0.5 * np.eye(6))
        model, _ = train_gplda_arrays(X, labels, TrainConfig(n1=2, em_iterations=10))
        test, test_labels = sample_plda_data(rng, 20, 2, u1, 0.5 * np.eye(6))
        same = [score(test[2 * s], test[2 * s + 1], model) for s in range(20)]
        different = [score(test[2 * s], test[2 * s + 2], model) for s in range(19)]
        assert np.mean(same) > np.mean(different)

    def test_deterministic(self, rng):
        X, labels = sample_plda_data(rng, 20, 3, rng.standard_normal((4, 2)), np.eye(4))
        first, _ = train_gplda_arrays(X, labels, TrainConfig(n1=2, em_iterations=5, seed=3))
        second, _ = train_gplda_arrays(X.copy(), list(labels), TrainConfig(n1=2, em_iterations=5, seed=3))
        assert first.u1.tobytes() == second.u1.tobytes()
        assert first.lam.tobytes() == second.lam.tobytes()

    def test_rank_deficient_scatter_is_seeded(self, rng):
        # Three speakers cannot span four eigenvoices
        X, labels = sample_plda_data(rng, 3, 10, rng.standard_normal((6, 4)), np.eye(6))
        model, history = train_gplda_arrays(X, labels, TrainConfig(n1=4, em_iterations=5, seed=1))
        assert model.u1.shape == (6, 4)
        assert np.all(np.isfinite(history))

    def test_too_few_speakers(self, rng):
        X = rng.standard_normal((6, 3))
        with pytest.raises(InsufficientDataError):
            train_gplda_arrays(X, ["a"] * 6, TrainConfig(n1=1))
        with pytest.raises(InsufficientDataError):
            train_gplda_arrays(X, ["a", "a", "b", "c", "d", "e"], TrainConfig(n1=1))

    def test_drops_speakers_below_minimum(self, rng):
        X, labels = sample_plda_data(rng, 10, 3, rng.standard_normal((4, 1)), np.eye(4))
        X = np.vstack([X, [100.0, 100.0, 100.0, 100.0]])
        labels = labels + ["lonely"]
        model, history = train_gplda_arrays(X, labels, TrainConfig(n1=1, em_iterations=3))
        np.testing.assert_allclose(model.mean, X.mean(axis=0), atol=1e-12)
        assert np.all(np.diff(history) >= -1e-8 * np.abs(history[:-1]))

        kept, _ = train_gplda_arrays(X[:-1], labels[:-1], TrainConfig(n1=1, em_iterations=3))
        assert not np.allclose(model.mean, kept.mean)

    def test_n1_above_dimension(self, rng):
        X, labels = sample_plda_data(rng, 10, 3, rng.standard_normal((3, 1)), np.eye(3))
        with pytest.raises(InvalidInputError):
            train_gplda_arrays(X, labels, TrainConfig(n1=4))

    def test_from_ivector_set(self, rng):
        X, labels = sample_plda_data(rng, 10, 3, rng.standard_normal((4, 1)), np.eye(4))
        model = train_gplda(make_set(X, labels), TrainConfig(n1=1, em_iterations=2))
        assert model.dim == 4
