"""Standardization, differencing, one-step forecasts, RMSPE and the VAR baseline."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .fit import EstimationError, FitResult, build_design, fit_ols
from .network import CommunityPartition, StageAdjacency, build_network, stage_adjacency
from .order import ModelOrder, OrderError, make_var_order, var_matrices
from .simulate import Realization
from .weights import StaticWeights, WeightsSequence


@dataclass(frozen=True)
class StandardizationParams:
    """Per-node centre and scale over the first ``T0`` observations.

    ``scale_i = sqrt(sum_{t <= T0} (X_it - mean_i)^2 / T0)``.
    """

    mean: np.ndarray
    scale: np.ndarray
    T0: int


def _values(panel) -> np.ndarray:
    if isinstance(panel, Realization):
        return np.where(panel.missing, np.nan, panel.values)
    return np.asarray(panel, dtype=float)


def standardize(panel, T0: int) -> tuple[np.ndarray, StandardizationParams]:
    """Centre and scale each node with statistics of the training window.

    The whole panel is transformed, so columns after ``T0`` are on the same
    scale. On the window every node has mean 0 and ``sum Y^2 = T0``.

    Raises
    ------
    ValueError
        If ``T0 < 2``, ``T0`` exceeds the panel length or a node is constant.
    """
    x = _values(panel)
    if T0 < 2 or T0 > x.shape[1]:
        raise ValueError(f"training window T0={T0} must lie in 2..{x.shape[1]}")
    train = x[:, :T0]
    mean = train.mean(axis=1)
    scale = np.sqrt(((train - mean[:, None]) ** 2).sum(axis=1) / T0)
    if np.any(~(scale > 0)):
        bad = np.flatnonzero(~(scale > 0)) + 1
        raise ValueError(f"zero variance for node(s) {bad.tolist()}")
    return (x - mean[:, None]) / scale[:, None], StandardizationParams(mean, scale, int(T0))


def unstandardize(y, params: StandardizationParams) -> np.ndarray:
    """Inverse of :func:`standardize` for a panel or a single forecast vector."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        return y * params.scale + params.mean
    return y * params.scale[:, None] + params.mean[:, None]


unstandardize_forecast = unstandardize


def difference(panel, lag: int = 1) -> np.ndarray:
    """``X_t - X_{t-lag}``; the result has ``T - lag`` columns."""
    x = _values(panel)
    if lag < 1:
        raise ValueError("lag must be positive")
    if x.shape[1] <= lag:
        raise ValueError(f"need more than {lag} observations to difference")
    return x[:, lag:] - x[:, :-lag]


def forecast_one_step(fit: FitResult | np.ndarray, order: ModelOrder, history,
                      weights: WeightsSequence | np.ndarray, part: CommunityPartition,
                      stages: Sequence[StageAdjacency]) -> np.ndarray:
    """Conditional mean ``sum_k Phi_k(T + 1 - k) X_{T+1-k}`` of the next observation.

    ``history`` is a :class:`Realization` (or ``d x T`` array with times
    ``1..T``); ``fit`` is a :class:`FitResult` or a free-parameter vector.
    """
    theta = fit.theta if isinstance(fit, FitResult) else np.asarray(fit, dtype=float)
    real = history if isinstance(history, Realization) else Realization(np.asarray(history, float))
    if real.T < order.p:
        raise ValueError(f"history has {real.T} observations, the model needs {order.p}")
    if real.missing[:, real.T - order.p:].any():
        raise ValueError("the last p observations must be complete")
    if isinstance(weights, np.ndarray):
        weights = StaticWeights(weights)
    t_next = int(real.times[-1]) + 1
    out = np.zeros(real.d)
    for k in range(1, order.p + 1):
        phi = var_matrices(order, theta, weights.at(t_next - k), stages, part).matrices[k - 1]
        out += phi @ real.values[:, real.T - k]
    return out


def naive_forecast(history) -> np.ndarray:
    """The last observation."""
    x = _values(history)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError("history is empty")
    return x[:, -1].copy()


def rmspe(forecast, actual) -> float:
    """Root mean-squared prediction error across nodes."""
    f = np.asarray(forecast, dtype=float)
    a = np.asarray(actual, dtype=float)
    if f.shape != a.shape:
        raise ValueError(f"shape mismatch {f.shape} vs {a.shape}")
    return float(np.sqrt(np.mean((f - a) ** 2)))


@dataclass(frozen=True)
class VarBaseline:
    """Unrestricted VAR(p) fitted as the all-pairs GNAR specialization.

    ``coefficients[k-1][i, j]`` is the effect of node ``j`` at lag ``k`` on node ``i``.
    """

    fit: FitResult
    order: ModelOrder
    coefficients: tuple[np.ndarray, ...]

    def forecast(self, history) -> np.ndarray:
        x = _values(history)
        p = len(self.coefficients)
        if x.shape[1] < p:
            raise ValueError("history shorter than the VAR order")
        return sum(a @ x[:, -k] for k, a in enumerate(self.coefficients, start=1))


def _var_setup(d: int):
    net = build_network([(i, j) for i in range(1, d + 1) for j in range(i + 1, d + 1)], d)
    stages = stage_adjacency(net, 1)
    w = np.where(stages[0].matrix, 1.0 / max(d - 1, 1), 0.0)
    return stages, w, CommunityPartition.from_labels(np.arange(1, d + 1), d)


def fit_var_baseline(panel, p: int) -> VarBaseline:
    """OLS fit of an unrestricted VAR(p) with one community per node.

    Raises
    ------
    EstimationError
        ``underdetermined`` when ``d p >= T - p``.
    """
    x = _values(panel)
    d, T = x.shape
    if p < 1:
        raise ValueError("p must be positive")
    if d * p >= T - p:
        raise EstimationError(f"underdetermined: a VAR({p}) with d={d} needs more than "
                              f"{d * p + p} observations, got {T}")
    if d < 2:
        raise ValueError("a VAR baseline needs at least two nodes")
    stages, w, part = _var_setup(d)
    order = make_var_order(d, p)
    design = build_design(Realization(x), order, w, part, stages)
    res = fit_ols(design)
    mats = var_matrices(order, res.theta, w, stages, part).matrices
    return VarBaseline(res, order, tuple(np.asarray(m) for m in mats))


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    n_params: int
    metrics: Mapping[str, float]


def comparison_csv(rows: Sequence[ComparisonRow], metrics: Sequence[str]) -> str:
    """Table with one row per metric and one column per model, plus parameter counts."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric"] + [r.model for r in rows])
    for m in metrics:
        w.writerow([m] + ["" if m not in r.metrics or r.metrics[m] is None
                          else f"{r.metrics[m]:.6g}" for r in rows])
    w.writerow(["n_params"] + [r.n_params for r in rows])
    return buf.getvalue()


__all__ = ["StandardizationParams", "standardize", "unstandardize", "unstandardize_forecast",
           "difference", "forecast_one_step", "naive_forecast", "rmspe", "VarBaseline",
           "fit_var_baseline", "ComparisonRow", "comparison_csv", "OrderError"]
