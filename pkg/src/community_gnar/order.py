"""Model orders, parameter layout, VAR matrices and stationarity checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import sparse

from .network import CommunityPartition, StageAdjacency, community_mask, interaction_mask
from .weights import WeightsSequence

LAYOUT_VERSION = 1


class OrderError(ValueError):
    """Raised for invalid model orders or parameter vectors."""


@dataclass(frozen=True)
class CommunityOrder:
    """Order ``(p_c, [s_1(c), ..., s_p(c)], I_c)`` of one community.

    Attributes
    ----------
    p : int
        Maximum lag (at least 1).
    stages : tuple of int
        Stage depth ``s_k(c)`` for each lag ``k = 1..p``.
    interactions : tuple of int
        Communities whose neighbourhood regressions enter this community.
    """

    p: int
    stages: tuple[int, ...]
    interactions: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(int(s) for s in self.stages))
        object.__setattr__(self, "interactions", tuple(sorted(int(c) for c in self.interactions)))
        if int(self.p) < 1:
            raise OrderError("lag order p must be at least 1")
        if len(self.stages) != self.p:
            raise OrderError(f"need {self.p} stage depths, got {len(self.stages)}")
        if any(s < 0 for s in self.stages):
            raise OrderError("stage depths must be nonnegative")
        if len(set(self.interactions)) != len(self.interactions):
            raise OrderError("duplicate entries in interaction set")

    @property
    def q(self) -> int:
        return self.p + (1 + len(self.interactions)) * sum(self.stages)


class Coordinate(NamedTuple):
    """One coefficient: ``kind`` is 'alpha', 'beta' or 'gamma'."""

    kind: str
    lag: int
    stage: int
    community: int
    source: int  # interacting community for gamma, else 0

    @property
    def label(self) -> str:
        if self.kind == "alpha":
            return f"alpha[{self.lag},{self.community}]"
        if self.kind == "beta":
            return f"beta[{self.lag},{self.stage},{self.community}]"
        return f"gamma[{self.lag},{self.stage},{self.community}:{self.source}]"


@dataclass(frozen=True)
class ParameterLayout:
    """Bijection between coordinates and flat indices of the full parameter vector."""

    coords: tuple[Coordinate, ...]
    index: dict = field(repr=False)
    community_slices: tuple[slice, ...]

    def __len__(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class ModelOrder:
    """Community-wise GNAR order, optionally with tied coefficients.

    Attributes
    ----------
    communities : tuple of CommunityOrder
        One entry per community ``c = 1..C``.
    tie_map : tuple of int, optional
        For each full-layout index the free parameter it equals, or ``-1``
        when it is fixed at zero. ``None`` means every coordinate is free.
    free_labels : tuple of str, optional
        Names of the free parameters when ``tie_map`` is set.
    """

    communities: tuple[CommunityOrder, ...]
    tie_map: tuple[int, ...] | None = None
    free_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "communities", tuple(self.communities))
        C = len(self.communities)
        if C < 1:
            raise OrderError("need at least one community")
        for c, co in enumerate(self.communities, start=1):
            for ct in co.interactions:
                if ct == c:
                    raise OrderError(f"community {c} cannot interact with itself")
                if not 1 <= ct <= C:
                    raise OrderError(f"interaction {ct} of community {c} out of range 1..{C}")
        if self.tie_map is not None:
            tm = tuple(int(x) for x in self.tie_map)
            object.__setattr__(self, "tie_map", tm)
            if len(tm) != self.q_full:
                raise OrderError("tie map length must equal the full parameter count")
            n_free = max(tm) + 1 if tm else 0
            used = {x for x in tm if x >= 0}
            if used != set(range(n_free)):
                raise OrderError("tie map must use every free index")
            if self.free_labels is not None and len(self.free_labels) != n_free:
                raise OrderError("one label per free parameter")

    @property
    def C(self) -> int:
        return len(self.communities)

    @property
    def p(self) -> int:
        return max(co.p for co in self.communities)

    @property
    def q_c(self) -> tuple[int, ...]:
        return tuple(co.q for co in self.communities)

    @property
    def q_full(self) -> int:
        return sum(self.q_c)

    @property
    def q_max(self) -> int:
        return max(self.q_c)

    @property
    def n_params(self) -> int:
        if self.tie_map is None:
            return self.q_full
        return max(self.tie_map) + 1 if self.tie_map else 0

    @property
    def is_tied(self) -> bool:
        return self.tie_map is not None

    @property
    def max_stage(self) -> int:
        return max(max(co.stages, default=0) for co in self.communities)

    def layout(self) -> ParameterLayout:
        return param_layout(self)

    def labels(self) -> tuple[str, ...]:
        """Names of the free parameters."""
        if self.tie_map is None:
            return tuple(c.label for c in self.layout().coords)
        if self.free_labels is not None:
            return self.free_labels
        return tuple(f"theta[{i}]" for i in range(self.n_params))

    def tie_matrix(self) -> sparse.csr_matrix:
        """Sparse ``q_full x n_params`` matrix ``T`` with ``theta_full = T theta``."""
        if self.tie_map is None:
            return sparse.identity(self.q_full, format="csr")
        rows = [j for j, f in enumerate(self.tie_map) if f >= 0]
        cols = [f for f in self.tie_map if f >= 0]
        return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)),
                                 shape=(self.q_full, self.n_params))

    def expand(self, theta: np.ndarray) -> np.ndarray:
        """Full-layout coefficient vector from the free parameters."""
        theta = check_theta(self, theta)
        if self.tie_map is None:
            return theta.copy()
        tm = np.asarray(self.tie_map)
        return np.where(tm >= 0, theta[np.maximum(tm, 0)], 0.0)

    def community_free_indices(self, c: int) -> np.ndarray:
        """Free parameter indices entering community ``c``."""
        sl = self.layout().community_slices[c - 1]
        if self.tie_map is None:
            return np.arange(sl.start, sl.stop)
        return np.unique([f for f in self.tie_map[sl] if f >= 0])


def check_theta(order: ModelOrder, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != order.n_params:
        raise OrderError(f"parameter vector has length {theta.size}, layout needs {order.n_params}")
    return theta


def param_layout(order: ModelOrder) -> ParameterLayout:
    """Flat layout: community ascending, lag ascending; within a lag
    ``alpha``, then ``beta`` by stage, then ``gamma`` by stage and source community."""
    coords: list[Coordinate] = []
    slices = []
    for c, co in enumerate(order.communities, start=1):
        start = len(coords)
        for k in range(1, co.p + 1):
            coords.append(Coordinate("alpha", k, 0, c, 0))
            s = co.stages[k - 1]
            for r in range(1, s + 1):
                coords.append(Coordinate("beta", k, r, c, 0))
            for r in range(1, s + 1):
                for ct in co.interactions:
                    coords.append(Coordinate("gamma", k, r, c, ct))
        slices.append(slice(start, len(coords)))
    return ParameterLayout(tuple(coords), {co: i for i, co in enumerate(coords)}, tuple(slices))


def make_community_order(p: Sequence[int], stages: Sequence[Sequence[int]],
                         interactions: Sequence[Sequence[int]] | None = None) -> ModelOrder:
    """Order from per-community lists, e.g. ``([1, 2], [[1], [1, 1]])``."""
    if interactions is None:
        interactions = [()] * len(p)
    if not len(p) == len(stages) == len(interactions):
        raise OrderError("p, stages and interactions need one entry per community")
    return ModelOrder(tuple(CommunityOrder(int(pc), tuple(s), tuple(i))
                            for pc, s, i in zip(p, stages, interactions)))


def make_global_order(p: int, s: Sequence[int]) -> ModelOrder:
    """Global-alpha GNAR(p, [s_k]): one community holding every node."""
    return ModelOrder((CommunityOrder(int(p), tuple(s)),))


def make_local_order(d: int, p: int, s: Sequence[int]) -> ModelOrder:
    """Local-alpha GNAR(p, [s_k]) as ``d`` singleton communities.

    Each node has its own ``alpha_{k,i}``; all neighbourhood coefficients of a
    given ``(k, r)`` (within-community and every interaction) are tied to one
    shared ``beta_{k,r}``.
    """
    others = [tuple(j for j in range(1, d + 1) if j != i) for i in range(1, d + 1)]
    base = ModelOrder(tuple(CommunityOrder(p, tuple(s), others[i]) for i in range(d)))
    lay = param_layout(base)
    n_alpha = d * p
    shared = {}
    for k in range(1, p + 1):
        for r in range(1, s[k - 1] + 1):
            shared[(k, r)] = n_alpha + len(shared)
    tie = []
    for co in lay.coords:
        if co.kind == "alpha":
            tie.append((co.community - 1) * p + co.lag - 1)
        else:
            tie.append(shared[(co.lag, co.stage)])
    labels = [f"alpha[{k},{i}]" for i in range(1, d + 1) for k in range(1, p + 1)]
    labels += [f"beta[{k},{r}]" for (k, r) in shared]
    return ModelOrder(base.communities, tuple(tie), tuple(labels))


def make_var_order(d: int, p: int) -> ModelOrder:
    """Unrestricted VAR(p) as ``d`` singleton communities with full interactions.

    Intended for a complete graph (every pair at stage 1). The within-community
    coefficients of singletons have no regressor and are fixed at zero, leaving
    ``p * d**2`` free coefficients.
    """
    others = [tuple(j for j in range(1, d + 1) if j != i) for i in range(1, d + 1)]
    base = ModelOrder(tuple(CommunityOrder(p, (1,) * p, others[i]) for i in range(d)))
    tie, labels = [], []
    for co in param_layout(base).coords:
        if co.kind == "beta":
            tie.append(-1)
        else:
            tie.append(len(labels))
            labels.append(co.label)
    return ModelOrder(base.communities, tuple(tie), tuple(labels))


# ---------------------------------------------------------------------------
# regressor matrices


@dataclass(frozen=True)
class Term:
    """A regressor ``M X_{t-k}`` attached to full-layout index ``index``.

    ``matrix`` is ``None`` for autoregressive terms, whose effect is the
    diagonal given by ``mask``.
    """

    index: int
    lag: int
    mask: np.ndarray | None = None
    matrix: sparse.csr_matrix | None = None

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.matrix is None:
            return np.where(self.mask[:, None] if x.ndim == 2 else self.mask, x, 0.0)
        return self.matrix @ x

    def dense(self) -> np.ndarray:
        if self.matrix is None:
            return np.diag(self.mask.astype(float))
        return self.matrix.toarray()


def _stage(stages: Sequence[StageAdjacency], r: int) -> np.ndarray:
    if r > len(stages):
        raise OrderError(f"stage {r} requested but only {len(stages)} stages available")
    return stages[r - 1].matrix


def term_matrices(order: ModelOrder, w: np.ndarray, stages: Sequence[StageAdjacency],
                  part: CommunityPartition) -> list[Term]:
    """Regressor operators for every full-layout coordinate at weights ``w``."""
    if part.n_communities != order.C:
        raise OrderError(f"order has {order.C} communities, partition has {part.n_communities}")
    if w.shape != (part.d, part.d):
        raise OrderError("weights and partition dimensions differ")
    terms = []
    lay = param_layout(order)
    cache: dict = {}
    for j, co in enumerate(lay.coords):
        if co.kind == "alpha":
            terms.append(Term(j, co.lag, mask=part.indicator(co.community)))
            continue
        key = (co.kind, co.stage, co.community, co.source)
        if key not in cache:
            s = _stage(stages, co.stage)
            if co.kind == "beta":
                m = community_mask(w, part, co.community)
            else:
                m = interaction_mask(w, part, co.community, co.source)
            cache[key] = sparse.csr_matrix(np.where(s, m, 0.0))
        terms.append(Term(j, co.lag, matrix=cache[key]))
    return terms


# ---------------------------------------------------------------------------
# VAR representation and stationarity


@dataclass(frozen=True)
class VarMatrices:
    """Autoregressive matrices ``Phi_1..Phi_p`` for one weights matrix."""

    matrices: tuple[np.ndarray, ...]
    static: bool = True

    @property
    def p(self) -> int:
        return len(self.matrices)


def var_matrices(order: ModelOrder, theta, w, stages: Sequence[StageAdjacency],
                 part: CommunityPartition, t: int = 0) -> VarMatrices:
    """``Phi_k = sum_c [diag(alpha_{k,c} xi_c) + sum_r {beta W_c.S_r + sum gamma W_{c:c~}.S_r}]``.

    Parameters
    ----------
    w : ndarray or WeightsSequence
        Weights; a sequence is evaluated at time ``t`` and the result is
        flagged non-static unless the sequence is static.
    """
    static = True
    if isinstance(w, WeightsSequence):
        static = w.is_static
        w = w.at(t)
    full = order.expand(theta)
    d = part.d
    phis = [np.zeros((d, d)) for _ in range(order.p)]
    for term in term_matrices(order, np.asarray(w, dtype=float), stages, part):
        coef = full[term.index]
        if coef == 0.0:
            continue
        if term.matrix is None:
            phis[term.lag - 1][np.diag_indices(d)] += coef * term.mask
        else:
            phis[term.lag - 1] += coef * term.matrix.toarray()
    return VarMatrices(tuple(phis), static)


@dataclass(frozen=True)
class StationarityReport:
    """Per-community absolute coefficient sums and the resulting margin."""

    sums: tuple[float, ...]
    margin: float
    passed: bool


def coefficient_scales(order: ModelOrder, weights: WeightsSequence,
                       stages: Sequence[StageAdjacency], part: CommunityPartition,
                       times: Sequence[int]) -> np.ndarray:
    """Largest row sum of each coordinate's regressor over ``times``.

    Autoregressive coordinates get 1. With equal (row-normalized) weights every
    scale is at most 1; unnormalized weights can exceed it.
    """
    scales = np.zeros(order.q_full)
    for t in weights.distinct_keys(times).values():
        for term in term_matrices(order, weights.at(t), stages, part):
            if term.matrix is None:
                scales[term.index] = 1.0
            else:
                rs = np.abs(term.matrix).sum(axis=1).max() if term.matrix.nnz else 0.0
                scales[term.index] = max(scales[term.index], float(rs))
    return scales


def check_stationary_sufficient(order: ModelOrder, theta,
                                scales: np.ndarray | None = None) -> StationarityReport:
    """Sufficient condition: every community's absolute coefficient sum is below 1.

    For each community ``c`` sums ``|alpha_{k,c}| + |beta_{k,r,c}| + |gamma_{k,r,c:c~}|``
    over its coordinates. Tied parameters count once per community. Optional
    ``scales`` (see :func:`coefficient_scales`) weight each full coordinate by
    its regressor's largest row sum, which extends the condition to weights
    whose stage rows do not sum to one; it requires an untied order.
    """
    theta = check_theta(order, theta)
    lay = param_layout(order)
    sums = []
    for c in range(1, order.C + 1):
        if scales is not None:
            if order.is_tied:
                raise OrderError("coefficient scales need an untied order")
            sl = lay.community_slices[c - 1]
            sums.append(float(np.sum(np.abs(theta[sl]) * scales[sl])))
        else:
            sums.append(float(np.sum(np.abs(theta[order.community_free_indices(c)]))))
    top = max(sums)
    return StationarityReport(tuple(sums), 1.0 - top, bool(top < 1.0))


def companion_matrix(var: VarMatrices) -> np.ndarray:
    """``pd x pd`` companion matrix of ``Phi_1..Phi_p``."""
    p = var.p
    d = var.matrices[0].shape[0]
    comp = np.zeros((p * d, p * d))
    comp[:d, :] = np.hstack(var.matrices)
    if p > 1:
        comp[d:, :-d] = np.eye((p - 1) * d)
    return comp


@dataclass(frozen=True)
class CompanionReport:
    spectral_radius: float
    passed: bool


def check_stationary_companion(var: VarMatrices, tol: float = 1e-10) -> CompanionReport:
    """Spectral radius of the companion matrix; passes when below ``1 - tol``.

    Raises
    ------
    OrderError
        For matrices built from time-varying weights, where this check does
        not apply.
    """
    if not var.static:
        raise OrderError("companion check is not evaluated for time-varying weights")
    rho = float(np.max(np.abs(np.linalg.eigvals(companion_matrix(var)))))
    return CompanionReport(rho, bool(rho < 1.0 - tol))


# ---------------------------------------------------------------------------
# serialization


def order_to_dict(order: ModelOrder) -> dict:
    out = {"communities": [{"p": co.p, "s": list(co.stages), "interactions": list(co.interactions)}
                           for co in order.communities]}
    if order.tie_map is not None:
        out["tie_map"] = list(order.tie_map)
        if order.free_labels is not None:
            out["free_labels"] = list(order.free_labels)
    return out


def order_from_dict(doc: dict) -> ModelOrder:
    try:
        comms = tuple(CommunityOrder(int(c["p"]), tuple(c["s"]), tuple(c.get("interactions", ())))
                      for c in doc["communities"])
    except (KeyError, TypeError) as exc:
        raise OrderError(f"malformed order document: {exc}") from None
    tie = doc.get("tie_map")
    labels = doc.get("free_labels")
    return ModelOrder(comms, tuple(tie) if tie is not None else None,
                      tuple(labels) if labels is not None else None)


def model_to_json(order: ModelOrder, theta=None) -> str:
    doc = {"layout_version": LAYOUT_VERSION, **order_to_dict(order)}
    if theta is not None:
        doc["theta"] = [float(x) for x in check_theta(order, theta)]
    return json.dumps(doc, indent=2, sort_keys=True)


def model_from_json(text: str) -> tuple[ModelOrder, np.ndarray | None]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise OrderError(f"invalid JSON: {exc}") from None
    version = doc.get("layout_version", LAYOUT_VERSION)
    if version != LAYOUT_VERSION:
        raise OrderError(f"unsupported layout version {version}")
    order = order_from_dict(doc)
    theta = doc.get("theta")
    return order, (check_theta(order, theta) if theta is not None else None)
