"""Graphs, r-stage adjacency, community partitions and weight matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path


class NetworkError(ValueError):
    """Raised for invalid graph, partition or weight inputs."""


@dataclass(frozen=True)
class Network:
    """Undirected simple graph on nodes ``1..d``.

    Attributes
    ----------
    d : int
        Number of nodes.
    edges : tuple of (int, int)
        Sorted unordered pairs ``(i, j)`` with ``i < j`` (1-based).
    labels : tuple of str, optional
        Node labels, one per node.
    """

    d: int
    edges: tuple[tuple[int, int], ...]
    labels: tuple[str, ...] | None = None

    def adjacency(self) -> np.ndarray:
        """Boolean ``d x d`` adjacency matrix."""
        a = np.zeros((self.d, self.d), dtype=bool)
        for i, j in self.edges:
            a[i - 1, j - 1] = a[j - 1, i - 1] = True
        return a

    def index_of(self, label: str) -> int:
        """1-based index of a node label."""
        if self.labels is None:
            raise NetworkError("network has no node labels")
        try:
            return self.labels.index(label) + 1
        except ValueError:
            raise NetworkError(f"unknown node label {label!r}") from None


def build_network(edge_list: Iterable[tuple[int, int]], d: int,
                  labels: Sequence[str] | None = None) -> Network:
    """Build a deduplicated, self-loop-free network.

    Parameters
    ----------
    edge_list : iterable of (int, int)
        1-based node index pairs; order within a pair and repeats are ignored.
    d : int
        Number of nodes.
    labels : sequence of str, optional
        Node labels.

    Raises
    ------
    NetworkError
        On an out-of-range index or a self-loop.
    """
    if d < 1:
        raise NetworkError("node count must be positive")
    if labels is not None:
        labels = tuple(str(x) for x in labels)
        if len(labels) != d or len(set(labels)) != d:
            raise NetworkError("labels must be unique and one per node")
    pairs = set()
    for i, j in edge_list:
        i, j = int(i), int(j)
        for v in (i, j):
            if not 1 <= v <= d:
                raise NetworkError(f"node index {v} out of range 1..{d}")
        if i == j:
            raise NetworkError(f"self-loop at node {i}")
        pairs.add((min(i, j), max(i, j)))
    return Network(d=d, edges=tuple(sorted(pairs)), labels=labels)


@dataclass(frozen=True)
class StageAdjacency:
    """Indicator of node pairs at shortest-path distance exactly ``r``."""

    r: int
    matrix: np.ndarray = field(repr=False)


def distance_matrix(net: Network) -> np.ndarray:
    """All-pairs hop distances via breadth-first search.

    Unreachable pairs are ``-1``; the diagonal is 0.
    """
    a = net.adjacency()
    dist = shortest_path(csr_matrix(a.astype(float)), method="D", unweighted=True,
                         directed=False)
    out = np.where(np.isfinite(dist), dist, -1).astype(np.int64)
    return out


def stage_adjacency(net: Network, r_max_request: int) -> list[StageAdjacency]:
    """Stage matrices ``S_1..S_R`` with ``R = min(r_max_request, realised max distance)``."""
    dist = distance_matrix(net)
    realised = int(dist.max()) if dist.size else 0
    top = min(int(r_max_request), realised)
    return [StageAdjacency(r, dist == r) for r in range(1, top + 1)]


def max_stage(net: Network) -> int:
    """Longest finite shortest path in the network."""
    return max(int(distance_matrix(net).max()), 0)


@dataclass(frozen=True)
class CommunityPartition:
    """Disjoint labelling of nodes into communities ``1..C``.

    Attributes
    ----------
    labels : ndarray of int
        Community of each node (length ``d``).
    n_communities : int
        ``C``; communities may be empty.
    """

    labels: np.ndarray
    n_communities: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.ndim != 1:
            raise NetworkError("community labels must be a vector")
        if lab.size and (lab.min() < 1 or lab.max() > self.n_communities):
            raise NetworkError("community labels must lie in 1..C")
        object.__setattr__(self, "labels", lab)

    @classmethod
    def from_labels(cls, labels: Sequence[int], n_communities: int | None = None):
        lab = np.asarray(labels, dtype=np.int64)
        return cls(lab, int(n_communities if n_communities is not None else lab.max()))

    @classmethod
    def single(cls, d: int) -> "CommunityPartition":
        return cls(np.ones(d, dtype=np.int64), 1)

    @property
    def d(self) -> int:
        return int(self.labels.size)

    def indicator(self, c: int) -> np.ndarray:
        """Boolean membership vector of community ``c``."""
        self._check(c)
        return self.labels == c

    def members(self, c: int) -> np.ndarray:
        """0-based node indices in community ``c``."""
        return np.flatnonzero(self.indicator(c))

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_communities + 1)[1:]

    def _check(self, c: int) -> None:
        if not 1 <= c <= self.n_communities:
            raise NetworkError(f"community {c} out of range 1..{self.n_communities}")


def _stage_stack(stages: Sequence[StageAdjacency], d: int) -> np.ndarray:
    if not stages:
        return np.zeros((0, d, d), dtype=bool)
    return np.stack([s.matrix for s in stages])


def equal_weights(net: Network, stages: Sequence[StageAdjacency]) -> np.ndarray:
    """Weights ``1/|N_r(i)|`` for each ``r``-stage neighbour ``j`` of ``i``.

    Rows of isolated nodes are zero and unreachable pairs get weight 0.
    """
    w = np.zeros((net.d, net.d))
    for st in stages:
        s = st.matrix.astype(float)
        counts = s.sum(axis=1, keepdims=True)
        w += np.divide(s, counts, out=np.zeros_like(s), where=counts > 0)
    return w


def _renormalize(w: np.ndarray, stages: Sequence[StageAdjacency]) -> np.ndarray:
    out = np.zeros_like(w)
    covered = np.zeros(w.shape, dtype=bool)
    for st in stages:
        block = np.where(st.matrix, w, 0.0)
        sums = block.sum(axis=1, keepdims=True)
        out += np.divide(block, sums, out=np.zeros_like(block), where=sums > 0)
        covered |= st.matrix
    # entries outside every stage (unreachable) keep their value
    return np.where(covered, out, w)


def apply_missing(w: np.ndarray, missing_nodes: Iterable[int],
                  stages: Sequence[StageAdjacency]) -> np.ndarray:
    """Zero the columns of missing nodes and renormalize each ``(i, r)`` neighbourhood.

    Parameters
    ----------
    w : ndarray
        ``d x d`` weights.
    missing_nodes : iterable of int
        1-based indices of nodes unobserved at this time.
    stages : sequence of StageAdjacency
        Stages defining the neighbourhoods that are renormalized.
    """
    missing = sorted({int(m) for m in missing_nodes})
    if not missing:
        return np.array(w, dtype=float, copy=True)
    d = w.shape[0]
    for m in missing:
        if not 1 <= m <= d:
            raise NetworkError(f"missing node {m} out of range 1..{d}")
    out = np.array(w, dtype=float, copy=True)
    out[:, np.asarray(missing) - 1] = 0.0
    return _renormalize(out, stages)


def community_mask(w: np.ndarray, part: CommunityPartition, c: int,
                   renormalize: bool = False,
                   stages: Sequence[StageAdjacency] | None = None) -> np.ndarray:
    """Keep ``w_ij`` only for ``i`` and ``j`` both in community ``c``.

    With ``renormalize=True`` each surviving ``(i, r)`` neighbourhood is rescaled
    to sum to one, which needs ``stages``.
    """
    xi = part.indicator(c)
    out = np.where(np.outer(xi, xi), w, 0.0)
    if renormalize:
        if stages is None:
            raise NetworkError("renormalize requires stages")
        out = _renormalize(out, stages)
    return out


def interaction_mask(w: np.ndarray, part: CommunityPartition, c: int, c_tilde: int,
                     renormalize: bool = False,
                     stages: Sequence[StageAdjacency] | None = None) -> np.ndarray:
    """Keep ``w_ij`` only for ``i`` in community ``c`` and ``j`` in ``c_tilde``."""
    if c == c_tilde:
        raise NetworkError("interaction_mask needs two different communities; use community_mask")
    out = np.where(np.outer(part.indicator(c), part.indicator(c_tilde)), w, 0.0)
    if renormalize:
        if stages is None:
            raise NetworkError("renormalize requires stages")
        out = _renormalize(out, stages)
    return out
