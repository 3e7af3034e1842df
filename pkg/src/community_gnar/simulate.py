"""Neighbourhood regressions, forward simulation and stationary parameter sampling."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import CommunityPartition, NetworkError, StageAdjacency, community_mask
from .order import (ModelOrder, OrderError, check_stationary_sufficient, check_theta,
                    coefficient_scales, param_layout, var_matrices)
from .weights import StaticWeights, WeightsSequence


class SimulationError(RuntimeError):
    """Raised when a simulated path stops being finite."""


@dataclass(frozen=True)
class Realization:
    """A ``d x T`` panel of values observed at times ``times``.

    Attributes
    ----------
    values : ndarray
        ``d x T`` matrix; missing cells may hold NaN.
    times : ndarray of int
        Time index of each column (default ``1..T``).
    missing : ndarray of bool, optional
        ``d x T`` flags of unobserved cells.
    """

    values: np.ndarray
    times: np.ndarray | None = None
    missing: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValueError("realization values must be a d x T matrix with T >= 1")
        object.__setattr__(self, "values", v)
        times = np.arange(1, v.shape[1] + 1) if self.times is None else np.asarray(self.times, dtype=np.int64)
        if times.shape != (v.shape[1],):
            raise ValueError("one time index per column")
        object.__setattr__(self, "times", times)
        miss = np.isnan(v) if self.missing is None else np.asarray(self.missing, dtype=bool) | np.isnan(v)
        object.__setattr__(self, "missing", miss)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(self.missing.any())


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian iid innovations with per-node standard deviations."""

    sigma: float | np.ndarray = 1.0
    seed: int = 2024

    def standard_deviations(self, d: int) -> np.ndarray:
        s = np.broadcast_to(np.asarray(self.sigma, dtype=float), (d,)).copy()
        if np.any(s <= 0):
            raise ValueError("noise standard deviations must be positive")
        return s

    def draw(self, steps: int, d: int) -> np.ndarray:
        """``steps x d`` innovations; identical seeds give identical streams."""
        rng = np.random.default_rng(self.seed)
        return rng.standard_normal((steps, d)) * self.standard_deviations(d)


def replication_seed(seed: int, index: int) -> int:
    """Per-replication seed ``seed XOR index``."""
    return int(seed) ^ int(index)


def default_burn_in(p: int) -> int:
    return max(50 * p, 200)


def neighborhood_regression(x: np.ndarray, w: np.ndarray, s: np.ndarray,
                            part: CommunityPartition | None = None, c: int | None = None,
                            c_tilde: int | None = None) -> np.ndarray:
    """Weighted r-stage neighbourhood average.

    Plain call returns ``(W . S_r) x``; with ``c`` it uses the community-masked
    weights; with ``c`` and ``c_tilde`` it returns ``xi_c . (W . S_r) x^{c_tilde}``
    where ``x^{c_tilde}`` keeps only the entries of community ``c_tilde``.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    if w.shape != (d, d) or s.shape != (d, d):
        raise NetworkError("dimension mismatch between series, weights and stage matrix")
    if c is None:
        return np.where(s, w, 0.0) @ x
    if part is None:
        raise NetworkError("community variants need a partition")
    if c_tilde is None:
        return np.where(s, community_mask(w, part, c), 0.0) @ x
    xt = np.where(part.indicator(c_tilde), x, 0.0)
    return np.where(part.indicator(c), np.where(s, w, 0.0) @ xt, 0.0)


def _check_inputs(order: ModelOrder, stages: Sequence[StageAdjacency], part: CommunityPartition):
    if part.n_communities != order.C:
        raise OrderError(f"order has {order.C} communities, partition has {part.n_communities}")
    if order.max_stage > len(stages):
        raise OrderError(f"order needs stage {order.max_stage}, only {len(stages)} available")
    for c, co in enumerate(order.communities, start=1):
        if part.sizes()[c - 1] == 0 and co.q > 0:
            warnings.warn(f"community {c} is empty", RuntimeWarning, stacklevel=3)


class _CompactStep:
    """Drift of the compact structural form, evaluated term by term."""

    def __init__(self, order, theta, weights, stages, part):
        self.full = order.expand(theta)
        self.coords = param_layout(order).coords
        self.weights = weights
        self.stages = stages
        self.part = part
        self.p = order.p
        self.cache: dict = {}

    def _ops(self, t: int) -> dict:
        key = self.weights.key(t)
        if key not in self.cache:
            w = self.weights.at(t)
            ops: dict = {}
            for j, co in enumerate(self.coords):
                coef = self.full[j]
                if coef == 0.0:
                    continue
                if co.kind == "alpha":
                    op = ("alpha", self.part.indicator(co.community))
                else:
                    op = (co.kind, w, self.stages[co.stage - 1].matrix, co.community, co.source)
                ops.setdefault(co.lag, []).append((coef, op))
            self.cache[key] = ops
        return self.cache[key]

    def drift(self, history: np.ndarray, col: int, t: int) -> np.ndarray:
        """Sum of alpha, beta and gamma components at time ``t`` (column ``col``)."""
        out = np.zeros(history.shape[0])
        for k in range(1, self.p + 1):
            x = history[:, col - k]
            for coef, op in self._ops(t - k).get(k, ()):
                if op[0] == "alpha":
                    out += coef * np.where(op[1], x, 0.0)
                elif op[0] == "beta":
                    out += coef * neighborhood_regression(x, op[1], op[2], self.part, op[3])
                else:
                    out += coef * neighborhood_regression(x, op[1], op[2], self.part, op[3], op[4])
        return out


def simulate(order: ModelOrder, theta, weights: WeightsSequence | np.ndarray,
             stages: Sequence[StageAdjacency], part: CommunityPartition, T: int,
             burn_in: int | None = None, noise: NoiseSpec | None = None,
             method: str = "compact") -> Realization:
    """Simulate ``T`` observations of a community-alpha GNAR process.

    The recursion starts from ``p`` zero vectors and ``burn_in`` steps are
    discarded; kept observations carry times ``1..T`` and the weights used for a
    lag-``k`` regressor are those of the lagged time ``t - k``.

    Parameters
    ----------
    method : {'compact', 'var'}
        ``'compact'`` sums the alpha, beta and gamma components through
        neighbourhood regressions; ``'var'`` uses the VAR matrices
        ``X_t = sum_k Phi_k(t - k) X_{t-k} + u_t``. Both consume the same noise.

    Raises
    ------
    SimulationError
        If the path becomes non-finite; the message names the first bad time.
    """
    theta = check_theta(order, theta)
    if isinstance(weights, np.ndarray):
        weights = StaticWeights(weights)
    _check_inputs(order, stages, part)
    if T < 1:
        raise ValueError("T must be positive")
    p = order.p
    burn = default_burn_in(p) if burn_in is None else int(burn_in)
    if not check_stationary_sufficient(order, theta).passed:
        scales = None
        if not weights.is_static and not order.is_tied:
            scales = coefficient_scales(order, weights, stages, part, range(1 - burn - p, T + 1))
        if scales is None or not check_stationary_sufficient(order, theta, scales).passed:
            warnings.warn("coefficients do not satisfy the sufficient stationarity condition",
                          RuntimeWarning, stacklevel=2)
    noise = noise or NoiseSpec()
    d = part.d
    steps = burn + T
    u = noise.draw(steps, d)
    x = np.zeros((d, p + steps))
    first_time = 1 - burn
    if method == "compact":
        step = _CompactStep(order, theta, weights, stages, part)
        for n in range(steps):
            col, t = p + n, first_time + n
            x[:, col] = step.drift(x, col, t) + u[n]
            if not np.all(np.isfinite(x[:, col])):
                raise SimulationError(f"non-finite values at time {t}")
    elif method == "var":
        phis: dict = {}

        def phi(t):
            key = weights.key(t)
            if key not in phis:
                phis[key] = var_matrices(order, theta, weights.at(t), stages, part).matrices
            return phis[key]

        for n in range(steps):
            col, t = p + n, first_time + n
            acc = u[n].copy()
            for k in range(1, p + 1):
                acc += phi(t - k)[k - 1] @ x[:, col - k]
            x[:, col] = acc
            if not np.all(np.isfinite(acc)):
                raise SimulationError(f"non-finite values at time {t}")
    else:
        raise ValueError(f"unknown simulation method {method!r}")
    return Realization(x[:, p + burn:], np.arange(1, T + 1))


def sample_stationary_params(order: ModelOrder, seed: int, total_mass: float = 0.9,
                             scales: np.ndarray | None = None) -> np.ndarray:
    """Random coefficients satisfying the sufficient stationarity condition.

    Each community's absolute coefficient mass ``total_mass`` is split over its
    ``q_c`` slots by a symmetric Dirichlet draw; signs are random except for
    ``alpha_{1,c}``, which is positive. With ``scales`` each magnitude is
    divided by its regressor's row-sum bound, so the scaled sum equals
    ``total_mass``.
    """
    if not 0 < total_mass < 1:
        raise ValueError("total_mass must lie in (0, 1)")
    if order.is_tied:
        raise OrderError("sampling supports untied orders only")
    rng = np.random.default_rng(seed)
    lay = param_layout(order)
    theta = np.zeros(order.q_full)
    for c in range(1, order.C + 1):
        sl = lay.community_slices[c - 1]
        n = sl.stop - sl.start
        mags = total_mass * rng.dirichlet(np.ones(n))
        signs = rng.choice([-1.0, 1.0], size=n)
        if scales is not None:
            sc = scales[sl]
            mags = mags / np.where(sc > 0, sc, 1.0)
        vals = mags * signs
        first_alpha = lay.index[next(co for co in lay.coords[sl] if co.kind == "alpha" and co.lag == 1)]
        vals[first_alpha - sl.start] = abs(vals[first_alpha - sl.start])
        theta[sl] = vals
    return theta
