"""Conditional least-squares design, OLS/GLS estimation and finite-sample error bounds."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .network import CommunityPartition, StageAdjacency, apply_missing
from .order import ModelOrder, OrderError, param_layout, term_matrices
from .simulate import Realization
from .weights import StaticWeights, WeightsSequence

COND_WARN = 1e10


class EstimationError(ValueError):
    """Raised for rank-deficient designs and invalid covariance inputs."""


@dataclass(frozen=True)
class DesignSystem:
    """Stacked linear model ``y = R theta + u``.

    Rows are node-time cells for ``t = p+1..T`` in time-major order (all nodes
    of one time before the next), minus dropped cells.

    Attributes
    ----------
    R : ndarray
        ``rows x n_params`` design in the order's free-parameter layout.
    R_full : ndarray
        ``rows x q_full`` design in the full coordinate layout.
    y : ndarray
        Response.
    row_nodes, row_times : ndarray of int
        0-based node index and column index (into the realization) of each row.
    row_community : ndarray of int
        Community of each row's node.
    n_dropped : int
        Cells removed because the response or an own lag was missing.
    """

    order: ModelOrder
    partition: CommunityPartition
    R: np.ndarray = field(repr=False)
    R_full: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    row_nodes: np.ndarray = field(repr=False)
    row_times: np.ndarray = field(repr=False)
    row_community: np.ndarray = field(repr=False)
    T: int
    n_dropped: int = 0

    @property
    def n_rows(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.order.p

    def community_rows(self, c: int) -> np.ndarray:
        return self.row_community == c

    def community_block(self, c: int) -> tuple[np.ndarray, np.ndarray]:
        """``(R_c, y_c)`` restricted to the rows of community ``c``."""
        sl = param_layout(self.order).community_slices[c - 1]
        rows = self.community_rows(c)
        return self.R_full[rows][:, sl], self.y[rows]


def build_design(real: Realization, order: ModelOrder, weights: WeightsSequence | np.ndarray,
                 part: CommunityPartition, stages: Sequence[StageAdjacency]) -> DesignSystem:
    """Assemble ``R`` and ``y`` from a realization.

    A lag-``k`` regressor at time ``t`` uses the weights of time ``t - k``; when
    nodes are missing at ``t - k`` their columns are zeroed and each
    neighbourhood renormalized. Rows whose response or own lagged value is
    missing are dropped.

    Raises
    ------
    OrderError
        If ``T <= p``, a community with a nonzero order is empty, or stages are
        insufficient.
    """
    if isinstance(weights, np.ndarray):
        weights = StaticWeights(weights)
    if part.n_communities != order.C:
        raise OrderError(f"order has {order.C} communities, partition has {part.n_communities}")
    if real.d != part.d:
        raise OrderError("realization and partition dimensions differ")
    if order.max_stage > len(stages):
        raise OrderError(f"order needs stage {order.max_stage}, only {len(stages)} available")
    sizes = part.sizes()
    for c, co in enumerate(order.communities, start=1):
        if sizes[c - 1] == 0 and co.q > 0:
            raise OrderError(f"community {c} is empty but has a nonzero order")
    p, T, d = order.p, real.T, real.d
    if T <= p:
        raise OrderError(f"need T > p (T={T}, p={p})")
    x = np.where(real.missing, 0.0, real.values)
    n_t = T - p
    q_full = order.q_full
    R3 = np.zeros((n_t, d, q_full))
    terms_cache: dict = {}
    for k in range(1, p + 1):
        cols = np.arange(p - k, T - k)  # lagged columns for responses p..T-1
        groups: dict = {}
        any_missing = real.missing[:, cols].any(axis=0)
        for idx, col in enumerate(cols):
            t = int(real.times[col])
            miss = (frozenset((np.flatnonzero(real.missing[:, col]) + 1).tolist())
                    if any_missing[idx] else frozenset())
            groups.setdefault((weights.key(t), miss), (t, []))[1].append(idx)
        for (wkey, miss), (t, idxs) in groups.items():
            if (wkey, miss) not in terms_cache:
                w = weights.at(t)
                if miss:
                    w = apply_missing(w, miss, stages)
                terms_cache[(wkey, miss)] = [tm for tm in term_matrices(order, w, stages, part)]
            idxs = np.asarray(idxs)
            xs = x[:, cols[idxs]]
            for term in terms_cache[(wkey, miss)]:
                if term.lag != k:
                    continue
                R3[idxs, :, term.index] = term.apply(xs).T
    y = x[:, p:].T.ravel()
    R_full = R3.reshape(n_t * d, q_full)
    row_nodes = np.tile(np.arange(d), n_t)
    row_times = np.repeat(np.arange(p, T), d)
    keep = ~real.missing[row_nodes, row_times]
    own_p = np.array([order.communities[c - 1].p for c in part.labels])
    for k in range(1, p + 1):
        lag_needed = own_p[row_nodes] >= k
        keep &= ~(lag_needed & real.missing[row_nodes, row_times - k])
    R_full = R_full[keep]
    y = y[keep]
    row_nodes, row_times = row_nodes[keep], row_times[keep]
    R = R_full if not order.is_tied else np.asarray(R_full @ order.tie_matrix().toarray())
    return DesignSystem(order, part, R, R_full, y, row_nodes, row_times,
                        part.labels[row_nodes], T, int((~keep).sum()))


@dataclass(frozen=True)
class FitResult:
    """Least-squares estimates with uncertainty summaries.

    Attributes
    ----------
    theta : ndarray
        Estimated free parameters.
    sigma2 : float
        Residual variance used for ``cov`` (see ``sigma2_convention``).
    sigma2_df, sigma2_mle : float
        ``||e||^2 / (rows - q)`` and ``||e||^2 / rows`` (rows = ``|K|(T - p)``
        without missing cells).
    cov, se, t_values : ndarray
        ``sigma2 (R^T R)^{-1}``, its root diagonal and ``theta / se``.
    residuals : ndarray
        ``y - R theta``.
    """

    order: ModelOrder
    labels: tuple[str, ...]
    theta: np.ndarray
    sigma2: float
    sigma2_df: float
    sigma2_mle: float
    sigma2_convention: str
    cov: np.ndarray = field(repr=False)
    se: np.ndarray = field(repr=False)
    t_values: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    n_rows: int = 0
    condition_number: float = 1.0
    regularized: bool = False
    community_sigma2: tuple[float, ...] = ()
    notes: tuple[str, ...] = ()
    community: int | None = None

    def coefficient(self, label: str) -> float:
        return float(self.theta[self.labels.index(label)])

    def to_dict(self) -> dict:
        coords = None
        if not self.order.is_tied:
            lay = param_layout(self.order)
            sl = lay.community_slices[self.community - 1] if self.community else slice(None)
            coords = lay.coords[sl]
        rows = []
        for i, lab in enumerate(self.labels):
            row = {"label": lab, "estimate": float(self.theta[i]), "se": float(self.se[i]),
                   "t": float(self.t_values[i])}
            if coords is not None:
                co = coords[i]
                row.update(kind=co.kind, lag=co.lag, stage=co.stage, community=co.community,
                           source=co.source or None)
            rows.append(row)
        return {"coefficients": rows, "sigma2": self.sigma2, "sigma2_df": self.sigma2_df,
                "sigma2_mle": self.sigma2_mle, "sigma2_convention": self.sigma2_convention,
                "n_rows": self.n_rows, "condition_number": self.condition_number,
                "regularized": self.regularized, "community_sigma2": list(self.community_sigma2),
                "notes": list(self.notes)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self, digits: int = 3) -> str:
        """Plain-text coefficient table: one column per coefficient."""
        width = max(max(len(lab) for lab in self.labels), digits + 4) + 2
        head = " " * 10 + "".join(lab.rjust(width) for lab in self.labels)
        lines = [head]
        for name, vals in (("Estimate", self.theta), ("Std. Err.", self.se), ("t value", self.t_values)):
            lines.append(name.ljust(10) + "".join(f"{v:.{digits}f}".rjust(width) for v in vals))
        return "\n".join(lines)


def _qr_solve(R: np.ndarray, y: np.ndarray, labels: Sequence[str]):
    """Least squares by pivoted QR; raises on rank deficiency."""
    n, q = R.shape
    if n < q:
        raise EstimationError(f"underdetermined design: {n} rows for {q} parameters")
    Q, U, piv = linalg.qr(R, mode="economic", pivoting=True)
    diag = np.abs(np.diag(U))
    tol = max(n, q) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < q:
        dependent = [labels[j] for j in sorted(piv[rank:])]
        raise EstimationError(f"rank-deficient design; dependent columns: {', '.join(dependent)}")
    z = linalg.solve_triangular(U, Q.T @ y)
    theta = np.empty(q)
    theta[piv] = z
    Uinv = linalg.solve_triangular(U, np.eye(q))
    inv_piv = np.empty((q, q))
    inv_piv[np.ix_(piv, piv)] = Uinv @ Uinv.T
    return theta, inv_piv


def _gram_inverse_ridge(R, y, ridge):
    q = R.shape[1]
    A = np.vstack([R, np.sqrt(ridge) * np.eye(q)])
    b = np.concatenate([y, np.zeros(q)])
    Q, U = np.linalg.qr(A)
    theta = linalg.solve_triangular(U, Q.T @ b)
    Uinv = linalg.solve_triangular(U, np.eye(q))
    return theta, Uinv @ Uinv.T


def _finish(order, labels, R, y, theta, gram_inv, sigma2_convention, regularized, notes,
            community_sigma2=(), community=None) -> FitResult:
    e = y - R @ theta
    rss = float(e @ e)
    n, q = R.shape
    s2_df = rss / (n - q) if n > q else float("nan")
    s2_mle = rss / n
    if sigma2_convention not in ("df", "mle"):
        raise ValueError("sigma2_convention must be 'df' or 'mle'")
    s2 = s2_df if sigma2_convention == "df" else s2_mle
    cov = s2 * gram_inv
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        tv = np.where(se > 0, theta / se, np.nan)
    cond = float(np.linalg.cond(R)) if n and q else 1.0
    notes = list(notes)
    if cond > COND_WARN:
        msg = f"design is near-singular (condition number {cond:.3g})"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        notes.append(msg)
    return FitResult(order, tuple(labels), theta, s2, s2_df, s2_mle, sigma2_convention, cov, se,
                     tv, e, n, cond, regularized, tuple(community_sigma2), tuple(notes), community)


def _community_sigma2(design: DesignSystem, residuals: np.ndarray) -> tuple[float, ...]:
    out = []
    for c in range(1, design.order.C + 1):
        rows = design.community_rows(c)
        n_c, q_c = int(rows.sum()), design.order.q_c[c - 1]
        ec = residuals[rows]
        out.append(float(ec @ ec / (n_c - q_c)) if n_c > q_c else float("nan"))
    return tuple(out)


def fit_ols(design: DesignSystem, sigma2_convention: str = "df",
            ridge: float | None = None) -> FitResult:
    """Ordinary least squares via QR.

    Parameters
    ----------
    sigma2_convention : {'df', 'mle'}
        Residual variance denominator: ``rows - q`` or ``rows``.
    ridge : float, optional
        Adds ``ridge * I`` to the Gram matrix (e.g. ``1e-8``); the result is
        marked ``regularized``.

    Raises
    ------
    EstimationError
        If the design is rank deficient (and no ridge is given).
    """
    labels = design.order.labels()
    if ridge:
        theta, gi = _gram_inverse_ridge(design.R, design.y, float(ridge))
        notes = [f"ridge {ridge:g} added to the Gram matrix"]
    else:
        theta, gi = _qr_solve(design.R, design.y, labels)
        notes = []
    res = _finish(design.order, labels, design.R, design.y, theta, gi, sigma2_convention,
                  bool(ridge), notes)
    if not design.order.is_tied:
        object.__setattr__(res, "community_sigma2", _community_sigma2(design, res.residuals))
    return res


def fit_community(design: DesignSystem, c: int, sigma2_convention: str = "df") -> FitResult:
    """Least squares on community ``c``'s block ``(R_c, y_c)`` alone.

    The estimate equals the ``c`` slice of :func:`fit_ols`; ``sigma2`` is the
    community residual variance and ``community_sigma2`` holds the pooled value
    for comparison.
    """
    if design.order.is_tied:
        raise OrderError("community fits need an untied order")
    if not 1 <= c <= design.order.C:
        raise OrderError(f"community {c} out of range")
    Rc, yc = design.community_block(c)
    if yc.size == 0:
        raise EstimationError(f"community {c} has no rows")
    lay = param_layout(design.order)
    labels = [co.label for co in lay.coords[lay.community_slices[c - 1]]]
    theta, gi = _qr_solve(Rc, yc, labels)
    res = _finish(design.order, labels, Rc, yc, theta, gi, sigma2_convention, False, [],
                  community=c)
    pooled = fit_ols(design, sigma2_convention)
    object.__setattr__(res, "community_sigma2", (pooled.sigma2,))
    return res


def _whitener(design: DesignSystem, sigma) -> list[tuple[np.ndarray, np.ndarray]]:
    """Row groups with their whitening factors ``L^{-1}`` (1-D for diagonal noise)."""
    n, d = design.n_rows, design.partition.d
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 0:
        s = np.full(d, float(s))
    if s.ndim == 1:
        if s.size == d:
            v = s[design.row_nodes]
        elif s.size == n:
            v = s
        else:
            raise EstimationError("variance vector must have length d or rows")
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise EstimationError("covariance is not positive definite")
        return [(np.arange(n), 1.0 / np.sqrt(v))]
    if s.ndim == 2 and s.shape == (d, d):
        blocks = []
        for t in np.unique(design.row_times):
            rows = np.flatnonzero(design.row_times == t)
            sub = s[np.ix_(design.row_nodes[rows], design.row_nodes[rows])]
            blocks.append((rows, _inv_chol(sub)))
        return blocks
    if s.ndim == 2 and s.shape == (n, n):
        return [(np.arange(n), _inv_chol(s))]
    raise EstimationError("unsupported covariance shape")


def _inv_chol(m: np.ndarray) -> np.ndarray:
    if not np.allclose(m, m.T, rtol=1e-12, atol=1e-14):
        raise EstimationError("covariance is not symmetric")
    try:
        L = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise EstimationError("covariance is not positive definite") from None
    return linalg.solve_triangular(L, np.eye(m.shape[0]), lower=True)


def fit_gls(design: DesignSystem, sigma) -> FitResult:
    """Generalized least squares ``(R^T S^{-1} R)^{-1} R^T S^{-1} y``.

    Parameters
    ----------
    sigma : float, ndarray
        Noise covariance: a scalar variance, per-node variances (length ``d``),
        per-row variances, a ``d x d`` block repeated at every time, or the full
        ``rows x rows`` matrix.

    Returns
    -------
    FitResult
        ``cov`` is ``(R^T S^{-1} R)^{-1}`` with no further scaling.
    """
    Rw = np.zeros_like(design.R)
    yw = np.zeros_like(design.y)
    for rows, Linv in _whitener(design, sigma):
        if Linv.ndim == 1:
            Rw[rows] = Linv[:, None] * design.R[rows]
            yw[rows] = Linv * design.y[rows]
        else:
            Rw[rows] = Linv @ design.R[rows]
            yw[rows] = Linv @ design.y[rows]
    labels = design.order.labels()
    theta, gi = _qr_solve(Rw, yw, labels)
    res = _finish(design.order, labels, design.R, design.y, theta, gi, "df", False,
                  ["covariance is (R^T S^-1 R)^-1"])
    se = np.sqrt(np.clip(np.diag(gi), 0, None))
    object.__setattr__(res, "cov", gi)
    object.__setattr__(res, "se", se)
    object.__setattr__(res, "t_values", theta / se)
    return res


@dataclass(frozen=True)
class AsymptoticCovariance:
    """Limit covariance of ``sqrt(|K|(T-p)) (theta_hat - theta_0)`` and the implied
    finite-sample covariance ``sigma2 (R^T R)^{-1}`` used for t-values."""

    limit: np.ndarray
    finite_sample: np.ndarray
    scale: float


def asymptotic_covariance(design: DesignSystem, sigma2_hat: float) -> AsymptoticCovariance:
    """Sample-average plug-in for the asymptotic covariance.

    With ``E(Z^T Z)`` estimated by ``R^T R / (T - p)`` the finite-sample
    covariance is ``sigma2 (R^T R)^{-1}`` and the limit matrix is that times
    ``|K| (T - p)``, the number of rows without missing cells.
    """
    gram = design.R.T @ design.R
    try:
        inv = linalg.inv(gram)
    except linalg.LinAlgError:
        raise EstimationError("singular Gram matrix") from None
    fin = float(sigma2_hat) * inv
    scale = float(design.partition.d * (design.T - design.p))
    return AsymptoticCovariance(scale * fin, fin, scale)


@dataclass(frozen=True)
class BoundReport:
    """Quantities of the finite-sample l2 error bound.

    Attributes
    ----------
    tau : float
        ``min_c lambda_min(R_c^T R_c)^2 / (|K_c| (T - p_c))``.
    gamma : float
        ``sqrt(n) max_j ||R_j||_2`` with ``n = min_c |K_c| (T - p_c)``.
    deterministic : float or None
        ``2 {tau K (T-p)}^{-1/2} (C q_max)^{1/2} ||R^T u||_inf`` when the noise
        is known.
    """

    tau: float
    tau_c: tuple[float, ...]
    gamma: float
    q_max: int
    q_total: int
    C: int
    K_min: int
    p: int
    T: int
    n: int
    sigma_u: float
    delta: float = 1.0
    deterministic: float | None = None
    rtu_inf: float | None = None

    @property
    def probabilistic_bound(self) -> float:
        return self.probabilistic(self.delta)

    @property
    def floor(self) -> float:
        return self.probability_floor(self.delta)

    @property
    def scale(self) -> float:
        return self.tau * self.K_min * (self.T - self.p)

    def probabilistic(self, delta: float) -> float:
        """Bound holding with probability at least :meth:`probability_floor`."""
        root = np.sqrt(np.log(self.q_total) / self.scale)
        return float(2 * np.sqrt(self.C * self.q_max) * self.sigma_u * self.gamma * np.sqrt(2)
                     * (root + delta))

    def probability_floor(self, delta: float) -> float:
        return float(1 - 2 * np.exp(-delta ** 2 * self.scale))

    def to_dict(self, deltas: Sequence[float] | None = None) -> dict:
        deltas = (self.delta,) if deltas is None else deltas
        return {"tau": self.tau, "tau_c": list(self.tau_c), "gamma": self.gamma,
                "q_max": self.q_max, "q_total": self.q_total, "C": self.C, "K_min": self.K_min,
                "p": self.p, "T": self.T, "n": self.n, "sigma_u": self.sigma_u,
                "deterministic_bound": self.deterministic, "rtu_inf": self.rtu_inf,
                "probabilistic": [{"delta": float(dl), "bound": self.probabilistic(dl),
                                   "probability_floor": self.probability_floor(dl)}
                                  for dl in deltas]}


def error_bound(design: DesignSystem, noise_sigma: float, delta: float = 1.0,
                theta_true=None) -> BoundReport:
    """Compute the bound quantities for a design.

    Parameters
    ----------
    noise_sigma : float
        Largest nodal noise standard deviation.
    delta : float
        Deviation level stored on the report; :meth:`BoundReport.probabilistic`
        evaluates any other value.
    theta_true : array_like, optional
        True coefficients; enables the deterministic bound with ``u = y - R theta``.
    """
    order = design.order
    if order.is_tied:
        raise OrderError("error bounds need an untied order")
    sizes = design.partition.sizes()
    taus = []
    for c in range(1, order.C + 1):
        Rc, _ = design.community_block(c)
        ev = np.linalg.eigvalsh(Rc.T @ Rc)
        lam = float(ev[0]) if ev.size else 0.0
        if lam < 0:
            warnings.warn(f"negative round-off eigenvalue {lam:.3g} clamped at 0", RuntimeWarning,
                          stacklevel=2)
            lam = 0.0
        taus.append(lam ** 2 / (sizes[c - 1] * (design.T - order.communities[c - 1].p)))
    tau = min(taus)
    if tau <= 0:
        raise EstimationError("tau is zero: some community block is rank deficient")
    n = int(min(sizes[c - 1] * (design.T - order.communities[c - 1].p) for c in range(1, order.C + 1)))
    gamma = float(np.sqrt(n) * np.max(np.linalg.norm(design.R_full, axis=0)))
    rep = BoundReport(tau, tuple(taus), gamma, order.q_max, order.q_full, order.C,
                      int(sizes.min()), order.p, design.T, n, float(noise_sigma), float(delta))
    if theta_true is not None:
        u = design.y - design.R_full @ np.asarray(theta_true, dtype=float)
        rtu = float(np.max(np.abs(design.R_full.T @ u)))
        det = 2 / np.sqrt(rep.scale) * np.sqrt(order.C * order.q_max) * rtu
        rep = BoundReport(**{**rep.__dict__, "deterministic": float(det), "rtu_inf": rtu})
    return rep
