import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from tubersense.classify import (
    ClassifierModel,
    cross_val_accuracy,
    fit_logistic,
    leave_one_pot_out,
    leave_one_pot_out_arrays,
    logistic_loss_and_grad,
    stage_dataset,
    stratified_folds,
    train_classifier,
    training_standardization,
)
from tubersense.constants import STAGES
from tubersense.errors import InsufficientReplicatesError, TrainingError, ValidationError

from conftest import clusters

class TestLossGradient:
    @pytest.mark.parametrize("seed", range(10))
    def test_central_difference(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.standard_normal((40, 4))
        Y = np.eye(3)[rng.integers(0, 3, 40)]
        p = rng.standard_normal(15)
        lam = 10 ** rng.uniform(-4, 1)
        _, g = logistic_loss_and_grad(p, Z, Y, lam)
        h = 1e-6
        fd = np.array([(logistic_loss_and_grad(p + h * e, Z, Y, lam)[0]
                        - logistic_loss_and_grad(p - h * e, Z, Y, lam)[0]) / (2 * h) for e in np.eye(15)])
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)

    def test_intercepts_unpenalized(self):
        Z = np.zeros((3, 2))
        Y = np.eye(3)
        p = np.concatenate([np.zeros(6), [1.0, 2.0, 3.0]])
        f0, _ = logistic_loss_and_grad(p, Z, Y, 0.0)
        f1, _ = logistic_loss_and_grad(p, Z, Y, 100.0)
        assert f0 == f1


class TestFit:
    def test_matches_reference_solver(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((90, 4)) + np.repeat(np.eye(3, 4) * 1.5, 30, axis=0)
        y = [STAGES[i] for i in np.repeat([0, 1, 2], 30)]
        lam = 0.05
        model = fit_logistic(X, y, lam)
        assert model.converged
        Z = model.standardize(X)
        ref = LogisticRegression(C=1 / (lam * len(y)), tol=1e-12, max_iter=10_000).fit(Z, y)
        order = [list(ref.classes_).index(c) for c in STAGES]
        np.testing.assert_allclose(model.weights, ref.coef_[order], atol=1e-5)
        # Intercepts are identified only up to a common shift.
        np.testing.assert_allclose(model.intercepts - model.intercepts.mean(),
                                   ref.intercept_[order] - ref.intercept_[order].mean(), atol=1e-5)

    def test_huge_penalty_predicts_prior(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((60, 4))
        y = ["early"] * 10 + ["middle"] * 35 + ["late"] * 15
        model = fit_logistic(X, y, 1e6)
        assert np.max(np.abs(model.weights)) < 1e-5
        assert set(model.predict(X)) == {"middle"}
        np.testing.assert_allclose(model.predict_proba(X[:1])[0], [10 / 60, 35 / 60, 15 / 60], atol=1e-4)

    def test_missing_class(self):
        X = np.random.default_rng(0).standard_normal((10, 4))
        with pytest.raises(TrainingError):
            fit_logistic(X, ["early"] * 5 + ["late"] * 5, 0.1)

    def test_unknown_label(self):
        with pytest.raises(ValidationError):
            fit_logistic(np.zeros((3, 4)), ["early", "middle", "autumn"], 0.1)

    def test_standardization_training_only(self):
        X = np.array([[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]])
        mu, sd = training_standardization(X)
        np.testing.assert_array_equal(mu, [3.0, 5.0])
        np.testing.assert_array_equal(sd, [2.0, 1.0])

    def test_probabilities_sum_to_one(self):
        X, y, _ = clusters(0, per_class=5, sd=2.0, pots=1)
        p = fit_logistic(X, y, 0.1).predict_proba(X)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


class TestFolds:
    def test_stratified_balance(self):
        yi = np.repeat([0, 1, 2], [13, 9, 20])
        f = stratified_folds(yi, 5, seed=3)
        for c in range(3):
            counts = np.bincount(f[yi == c], minlength=5)
            assert counts.max() - counts.min() <= 1
        assert np.bincount(f, minlength=5).max() - np.bincount(f, minlength=5).min() <= 1

    def test_seed_determinism(self):
        yi = np.repeat([0, 1, 2], 10)
        np.testing.assert_array_equal(stratified_folds(yi, 5, 7), stratified_folds(yi, 5, 7))


class TestTrain:
    def test_lambda_tie_goes_to_smaller(self):
        X, y, _ = clusters(2, per_class=10, pots=1)
        model = train_classifier(X, y, lambda_grid=(1.0, 0.01, 0.1))
        assert [s[0] for s in model.cv_scores] == [0.01, 0.1, 1.0]
        assert all(s[1] == 1.0 for s in model.cv_scores)
        assert model.l2_strength == 0.01

    def test_single_class(self):
        with pytest.raises(TrainingError):
            train_classifier(np.zeros((6, 4)), ["early"] * 6)

    def test_too_few_per_class(self):
        X = np.random.default_rng(0).standard_normal((7, 4))
        with pytest.raises(TrainingError):
            train_classifier(X, ["early"] * 3 + ["middle"] * 3 + ["late"])

    def test_returns_model(self):
        X, y, _ = clusters(3, per_class=10, pots=1)
        assert isinstance(train_classifier(X, y), ClassifierModel)


class TestLopo:
    def test_separable_clusters(self):
        X, y, g = clusters(0)
        res = leave_one_pot_out_arrays(X, y, g)
        assert res.n_folds == 4
        assert res.mean_accuracy == 1.0

    def test_shuffled_labels_chance(self):
        accs = []
        for seed in range(20):
            X, y, g = clusters(seed, per_class=10, sd=1.0)
            y = list(np.random.default_rng(1000 + seed).permutation(y))
            accs.append(leave_one_pot_out_arrays(X, y, g, lambda_grid=(0.01, 1.0), seed=seed).mean_accuracy)
        assert abs(np.mean(accs) - 1 / 3) <= 0.1

    def test_identical_features(self):
        X = np.ones((4 * 45, 4))
        days = np.tile(np.arange(1, 46), 4)
        y = [STAGES[(d - 1) // 15] for d in days]
        g = np.repeat([f"P{i}" for i in range(4)], 45).tolist()
        res = leave_one_pot_out_arrays(X, y, g, lambda_grid=(0.1,))
        assert res.mean_accuracy == pytest.approx(1 / 3)

    def test_affine_invariance(self):
        X, y, g = clusters(5, per_class=8, sd=3.0)
        A = X * np.array([1e3, -2.0, 0.5, 7.0]) + np.array([5.0, -1e4, 3.0, 0.0])
        a = leave_one_pot_out_arrays(X, y, g, lambda_grid=(0.1,))
        b = leave_one_pot_out_arrays(A, y, g, lambda_grid=(0.1,))
        np.testing.assert_allclose(a.accuracies, b.accuracies)
        ma = fit_logistic(X, y, 0.1)
        mb = fit_logistic(A, y, 0.1)
        np.testing.assert_array_equal(ma.predict(X), mb.predict(A))

    def test_one_pot(self):
        X, y, g = clusters(0, pots=1)
        with pytest.raises(InsufficientReplicatesError):
            leave_one_pot_out_arrays(X, y, g)

    def test_simulator_dataset(self, growth_run):
        res = leave_one_pot_out(growth_run["features"])
        assert res.n_folds == 4
        assert res.mean_accuracy >= 0.9
        assert res.mean_accuracy == pytest.approx(np.mean(res.accuracies))

    def test_stage_dataset(self, growth_run):
        X, y, g = stage_dataset(growth_run["features"][:45])
        assert X.shape == (45, 4)
        assert y.count("early") == y.count("middle") == y.count("late") == 15
        assert set(g) == {growth_run["features"][0].pot_id}

    def test_flat_loss_region_still_converges(self, growth_run):
        """A fold whose optimum sits where the loss no longer resolves Armijo decreases."""
        X, y, g = stage_dataset(growth_run["features"])
        keep = np.array(g) != "CB.L2"
        Xt, yt = X[keep], [v for v, k in zip(y, keep) if k]
        from tubersense.classify import _encode

        folds = stratified_folds(_encode(yt, STAGES), 5, 0)
        train = folds != 3
        model = fit_logistic(Xt[train], [v for v, k in zip(yt, train) if k], 1.0)
        assert model.converged and model.iterations < 500
