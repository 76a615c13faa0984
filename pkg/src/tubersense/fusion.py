"""Constrained linear fusion of standardized LTE heatmaps.

Weights live on the probability simplex through a softmax of free
parameters ``u``; the fit minimizes the mean squared error between the
weighted map sum and the binary truth with BFGS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AlignmentError, NumericalError, ValidationError, ZeroVarianceError
from .model import MetricHeatmap, OccupancyMap


def softmax(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    e = np.exp(u - u.max())
    return e / e.sum()


@dataclass(frozen=True)
class FusionWeights:
    u: np.ndarray
    w: np.ndarray = field(init=False)

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 1 or not np.all(np.isfinite(u)):
            raise ValidationError("u must be a finite vector")
        u.flags.writeable = False
        w = softmax(u)
        w.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls, n: int = 5) -> "FusionWeights":
        return cls(np.zeros(n))


@dataclass(frozen=True)
class OptimizerConfig:
    gtol: float = 1e-8
    maxiter: int = 500
    armijo_c: float = 1e-4
    max_halvings: int = 60
    multi_start: bool = True
    vertex_logit: float = 20.0
    stall_rtol: float = 1e-15


@dataclass(frozen=True)
class FusionFit:
    weights: FusionWeights
    train_loss: float
    iterations: int
    converged: bool
    start: int = 0  # index of the winning start (0 = init_u)
    start_losses: tuple = ()


def normalize_heatmap(hm: MetricHeatmap) -> MetricHeatmap:
    """Subtract the grid mean and divide by the sample (n-1) grid std."""
    v = hm.values
    if v.size < 2:
        raise ZeroVarianceError(f"{hm.metric_name}: need at least 2 cells to normalize")
    sd = v.std(ddof=1)
    if not sd > 0 or not math.isfinite(sd):
        raise ZeroVarianceError(f"{hm.metric_name}: constant heatmap (dead metric?)")
    return MetricHeatmap(hm.metric_name, (v - v.mean()) / sd, hm.spacing)


def _check_shapes(maps: Sequence[MetricHeatmap], shape=None):
    shapes = {m.grid_shape for m in maps}
    if shape is not None:
        shapes.add(tuple(shape))
    if len(shapes) != 1:
        raise AlignmentError(f"heatmap shapes differ: {sorted(shapes)}")


def design_matrix(maps: Sequence[MetricHeatmap]) -> np.ndarray:
    """Cells x metrics matrix (row-major cell order)."""
    _check_shapes(maps)
    return np.stack([m.values.ravel() for m in maps], axis=1)


def rescale_unit(values: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant map becomes all 0.5."""
    lo, hi = values.min(), values.max()
    if hi - lo <= 0:
        return np.full_like(values, 0.5, dtype=float)
    return np.clip((values - lo) / (hi - lo), 0.0, 1.0)


def fused_scores(maps: Sequence[MetricHeatmap], weights: FusionWeights) -> np.ndarray:
    """Raw weighted sum before rescaling."""
    if len(maps) != weights.w.size:
        raise AlignmentError(f"{len(maps)} maps but {weights.w.size} weights")
    _check_shapes(maps)
    return np.tensordot(weights.w, np.stack([m.values for m in maps]), axes=1)


def fuse(maps: Sequence[MetricHeatmap], weights: FusionWeights) -> OccupancyMap:
    """Weighted sum of normalized heatmaps, rescaled to [0, 1] within the pot."""
    return OccupancyMap(rescale_unit(fused_scores(maps, weights)), maps[0].spacing)


def loss_and_grad(u, X: np.ndarray, y: np.ndarray):
    """MSE of ``X @ softmax(u)`` against ``y`` and its gradient in ``u``."""
    w = softmax(u)
    r = X @ w - y
    loss = float(np.mean(r**2))
    g_w = 2.0 * (X.T @ r) / y.size
    grad = w * (g_w - w @ g_w)
    return loss, grad


def bfgs(fun: Callable, x0, config: OptimizerConfig = OptimizerConfig()):
    """Minimize ``fun(x) -> (f, grad)`` with BFGS and Armijo backtracking.

    Returns ``(x, f, iterations, converged)``. Non-finite values raise
    :class:`NumericalError` carrying the offending iterate.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalError("non-finite loss or gradient at start", x)
    n = x.size
    Hinv = np.eye(n)
    it = 0
    while np.linalg.norm(g) >= config.gtol and it < config.maxiter:
        p = -Hinv @ g
        slope = g @ p
        if slope >= 0:  # lost descent: restart from steepest descent
            Hinv = np.eye(n)
            p = -g
            slope = g @ p
        step = 1.0
        for _ in range(config.max_halvings):
            x_new = x + step * p
            f_new, g_new = fun(x_new)
            if not (np.isfinite(f_new) and np.all(np.isfinite(g_new))):
                raise NumericalError("non-finite loss or gradient", x_new)
            if f_new <= f + config.armijo_c * step * slope:
                break
            step *= 0.5
        else:
            break  # no acceptable step at machine precision
        s = x_new - x
        yk = g_new - g
        sy = s @ yk
        stalled = f - f_new <= config.stall_rtol * max(abs(f), 1.0)
        x, f, g = x_new, f_new, g_new
        it += 1
        if stalled:
            # Loss no longer resolvable in floating point (e.g. saturated softmax).
            break
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(yk):
            if it == 1:
                # Scale the initial inverse Hessian; lets saturated starts escape.
                Hinv = (sy / (yk @ yk)) * np.eye(n)
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, yk)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
    return x, float(f), it, bool(np.linalg.norm(g) < config.gtol)


def _stack_training(maps, truth):
    """Accept one pot (5 maps + truth) or parallel lists of pots (pooled fit)."""
    if isinstance(truth, OccupancyMap):
        pots = [(maps, truth)]
    else:
        pots = list(zip(maps, truth))
        if len(pots) != len(truth) or len(pots) != len(maps):
            raise AlignmentError("maps and truth lists differ in length")
    Xs, ys = [], []
    n_metrics = None
    for pot_maps, pot_truth in pots:
        _check_shapes(pot_maps, pot_truth.grid_shape)
        if not pot_truth.is_binary:
            raise ValidationError("training truth must be binary")
        if n_metrics is None:
            n_metrics = len(pot_maps)
        elif len(pot_maps) != n_metrics:
            raise AlignmentError("every pot needs the same metrics")
        Xs.append(design_matrix(pot_maps))
        ys.append(pot_truth.values.ravel())
    return np.vstack(Xs), np.concatenate(ys)


def vertex_losses(maps, truth) -> np.ndarray:
    """Training loss of each single metric (weight vector e_j)."""
    X, y = _stack_training(maps, truth)
    return np.mean((X - y[:, None]) ** 2, axis=0)


def fit_weights(maps, truth, init_u=None, config: OptimizerConfig = OptimizerConfig()) -> FusionFit:
    """Fit simplex weights by multi-start BFGS on the training MSE.

    Starts are ``init_u`` (default zeros) followed, when
    ``config.multi_start`` is set, by one start near each simplex vertex.
    The lowest final loss wins; ties go to the earliest start.
    """
    X, y = _stack_training(maps, truth)
    n = X.shape[1]
    u0 = np.zeros(n) if init_u is None else np.asarray(init_u, dtype=float)
    if u0.shape != (n,):
        raise AlignmentError(f"init_u must have {n} entries")
    starts = [u0]
    if config.multi_start:
        for j in range(n):
            v = np.zeros(n)
            v[j] = config.vertex_logit
            starts.append(v)

    def objective(u):
        return loss_and_grad(u, X, y)

    best = None
    losses = []
    for k, start in enumerate(starts):
        u, f, it, ok = bfgs(objective, start, config)
        losses.append(f)
        if best is None or f < best[1]:
            best = (u, f, it, ok, k)
    u, f, it, ok, k = best
    return FusionFit(FusionWeights(u), f, it, ok, k, tuple(losses))


def localize(fit: FusionFit, maps: Sequence[MetricHeatmap], truth: OccupancyMap,
             thresholds: Sequence[float] = (0.5,), tolerances_cm: Sequence[float] = (0.0, 5.1, 10.2)):
    """Evaluate every single metric and the fused map against ``truth``.

    Returns a list of :class:`~tubersense.evaluation.EvalReport`, one per
    (source, threshold); sources are metric names followed by ``"fused"``.
    """
    from .evaluation import evaluate_map

    _check_shapes(maps, truth.grid_shape)
    sources = [(m.metric_name, OccupancyMap(rescale_unit(m.values), m.spacing)) for m in maps]
    sources.append(("fused", fuse(maps, fit.weights)))
    reports = []
    for eta in thresholds:
        for name, pred in sources:
            reports.append(evaluate_map(pred, truth, eta, tolerances_cm, source=name))
    return reports
