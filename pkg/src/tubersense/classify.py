"""Growth-stage classification from CFR features.

Multinomial logistic regression with an L2 penalty on the class weights
(intercepts are not penalized), trained by full-batch gradient descent.
The penalty strength is picked by stratified k-fold CV inside the training
set; generalization is measured by leave-one-pot-out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .constants import STAGES
from .errors import InsufficientReplicatesError, NumericalError, TrainingError, ValidationError
from .features import FeatureVector
from .model import stage_for_day

DEFAULT_LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
GD_TOL = 1e-8
GD_MAXITER = 5000
_FLAT_RTOL = 1e-14


@dataclass(frozen=True)
class ClassifierModel:
    classes: tuple
    weights: np.ndarray  # (n_classes, n_features), acts on standardized features
    intercepts: np.ndarray  # (n_classes,)
    l2_strength: float
    feature_means: np.ndarray
    feature_sds: np.ndarray
    iterations: int = 0
    converged: bool = True
    cv_scores: tuple = ()  # (lambda, mean CV accuracy) pairs

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.feature_means) / self.feature_sds

    def decision(self, X) -> np.ndarray:
        return self.standardize(X) @ self.weights.T + self.intercepts

    def predict_index(self, X) -> np.ndarray:
        return np.argmax(self.decision(X), axis=1)

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.classes, dtype=object)[self.predict_index(X)]

    def predict_proba(self, X) -> np.ndarray:
        z = self.decision(X)
        return np.exp(z - logsumexp(z, axis=1, keepdims=True))


def training_standardization(X: np.ndarray):
    """Column means and sample sds; zero-sd columns get sd 1 (map to 0)."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    return mu, sd


def logistic_loss_and_grad(params: np.ndarray, Z: np.ndarray, Y: np.ndarray, lam: float):
    """Mean cross-entropy plus ``lam/2 * ||W||^2`` and its gradient.

    ``params`` packs ``[W.ravel(), b]`` with ``W`` of shape (K, D); ``Y`` is
    one-hot (N, K).
    """
    n, d = Z.shape
    k = Y.shape[1]
    W = params[: k * d].reshape(k, d)
    b = params[k * d:]
    logits = Z @ W.T + b
    lse = logsumexp(logits, axis=1, keepdims=True)
    loss = float(np.mean(lse[:, 0] - np.sum(Y * logits, axis=1)) + 0.5 * lam * np.sum(W**2))
    R = (np.exp(logits - lse) - Y) / n
    gW = R.T @ Z + lam * W
    gb = R.sum(axis=0)
    return loss, np.concatenate([gW.ravel(), gb])


def _gradient_descent(fun, x0, tol=GD_TOL, maxiter=GD_MAXITER):
    """Barzilai-Borwein steps safeguarded by Armijo backtracking."""
    x = x0.copy()
    f, g = fun(x)
    step = 1.0
    it = 0
    while np.linalg.norm(g) >= tol and it < maxiter:
        gg = g @ g
        gnorm = math.sqrt(gg)
        t = step
        for _ in range(60):
            x_new = x - t * g
            f_new, g_new = fun(x_new)
            if not np.isfinite(f_new):
                raise NumericalError("non-finite classifier loss", x_new)
            if f_new <= f - 1e-4 * t * gg and f_new < f:
                break
            # Near the optimum the loss stops resolving the decrease; judge
            # the step by the gradient instead.
            if abs(f_new - f) <= _FLAT_RTOL * max(abs(f), 1.0) and np.linalg.norm(g_new) < gnorm:
                break
            t *= 0.5
        else:
            break
        s, yv = x_new - x, g_new - g
        sy = s @ yv
        step = (s @ s) / sy if sy > 1e-20 else 1.0
        x, f, g = x_new, f_new, g_new
        it += 1
    return x, it, bool(np.linalg.norm(g) < tol)


def _encode(y, classes):
    index = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([index[v] for v in y], dtype=int)
    except KeyError as exc:
        raise ValidationError(f"unknown class label {exc}") from None


def fit_logistic(X, y, lam: float, classes: Sequence = STAGES) -> ClassifierModel:
    """Fit at a fixed ``lam``. Every class in ``classes`` must appear in ``y``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValidationError("X must be (n_samples, n_features) matching y")
    if lam < 0:
        raise ValidationError(f"l2 strength must be >= 0, got {lam}")
    classes = tuple(classes)
    yi = _encode(y, classes)
    missing = [c for i, c in enumerate(classes) if not np.any(yi == i)]
    if missing:
        raise TrainingError(f"classes absent from training data: {missing}")
    mu, sd = training_standardization(X)
    Z = (X - mu) / sd
    k, d = len(classes), X.shape[1]
    Y = np.eye(k)[yi]
    params, it, ok = _gradient_descent(lambda p: logistic_loss_and_grad(p, Z, Y, lam), np.zeros(k * d + k))
    W = params[: k * d].reshape(k, d)
    return ClassifierModel(classes, W, params[k * d:], float(lam), mu, sd, it, ok)


def stratified_folds(yi: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold id per sample; each class is shuffled and dealt round-robin."""
    rng = np.random.default_rng(seed)
    fold_of = np.empty(yi.size, dtype=int)
    offset = 0
    for c in np.unique(yi):
        idx = np.flatnonzero(yi == c)
        rng.shuffle(idx)
        fold_of[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return fold_of


def cross_val_accuracy(X, y, lam: float, folds: int = 5, seed: int = 0, classes: Sequence = STAGES) -> float:
    X = np.asarray(X, dtype=float)
    yi = _encode(y, tuple(classes))
    fold_of = stratified_folds(yi, folds, seed)
    correct = 0
    for k in range(folds):
        test = fold_of == k
        if not test.any():
            continue
        model = fit_logistic(X[~test], [classes[i] for i in yi[~test]], lam, classes)
        correct += int(np.sum(model.predict_index(X[test]) == yi[test]))
    return correct / yi.size


def train_classifier(X, y, lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID, folds: int = 5,
                     seed: int = 0, classes: Sequence = STAGES) -> ClassifierModel:
    """Select lambda by stratified CV accuracy (ties -> smaller), refit on all data."""
    classes = tuple(classes)
    yi = _encode(y, classes)
    present = [c for i, c in enumerate(classes) if np.any(yi == i)]
    if len(present) < 2:
        raise TrainingError("need at least 2 classes to train")
    if len(present) < len(classes):
        raise TrainingError(f"classes absent from training data: {sorted(set(classes) - set(present))}")
    smallest = np.bincount(yi, minlength=len(classes)).min()
    if folds < 2 or smallest < 2:
        raise TrainingError(f"cross-validation needs >= 2 folds and >= 2 samples per class (min class size {smallest})")
    grid = sorted(float(v) for v in lambda_grid)
    if not grid:
        raise ValidationError("lambda_grid is empty")
    scores = [(lam, cross_val_accuracy(X, y, lam, folds, seed, classes)) for lam in grid]
    best_lam = max(scores, key=lambda s: (s[1], -s[0]))[0]
    model = fit_logistic(X, y, best_lam, classes)
    return ClassifierModel(
        model.classes, model.weights, model.intercepts, model.l2_strength,
        model.feature_means, model.feature_sds, model.iterations, model.converged, tuple(scores),
    )


def stage_dataset(features: Sequence[FeatureVector]):
    """``(X, stage labels, pot ids)`` from feature vectors."""
    X = np.array([fv.as_array() for fv in features], dtype=float).reshape(len(features), -1)
    y = [stage_for_day(fv.day) for fv in features]
    groups = [fv.pot_id for fv in features]
    return X, y, groups


@dataclass(frozen=True)
class LopoResult:
    pots: tuple
    accuracies: tuple
    lambdas: tuple
    mean_accuracy: float

    @property
    def n_folds(self) -> int:
        return len(self.pots)


def leave_one_pot_out_arrays(X, y, groups, lambda_grid=DEFAULT_LAMBDA_GRID, seed: int = 0,
                             folds: int = 5, classes: Sequence = STAGES) -> LopoResult:
    X = np.asarray(X, dtype=float)
    groups = np.asarray(groups, dtype=object)
    y = np.asarray(y, dtype=object)
    pots = list(dict.fromkeys(groups.tolist()))
    if len(pots) < 2:
        raise InsufficientReplicatesError(f"leave-one-pot-out needs >= 2 pots, got {len(pots)}")
    accs, lams = [], []
    for pot in pots:
        test = groups == pot
        model = train_classifier(X[~test], y[~test].tolist(), lambda_grid, folds, seed, classes)
        accs.append(float(np.mean(model.predict(X[test]) == y[test])))
        lams.append(model.l2_strength)
    return LopoResult(tuple(pots), tuple(accs), tuple(lams), float(np.mean(accs)))


def leave_one_pot_out(features: Sequence[FeatureVector], lambda_grid=DEFAULT_LAMBDA_GRID,
                      seed: int = 0, folds: int = 5) -> LopoResult:
    """Hold out each pot in turn; the mean is over pots (one fold per pot)."""
    X, y, groups = stage_dataset(features)
    return leave_one_pot_out_arrays(X, y, groups, lambda_grid, seed, folds)
