"""Static and time-varying connection weights."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from .network import CommunityPartition, Network, NetworkError, distance_matrix


class WeightsSequence:
    """Map from time index to a ``d x d`` weights matrix.

    Subclasses implement :meth:`at`. :meth:`key` returns a hashable value
    shared by all times that emit the same matrix so callers can cache
    derived quantities.
    """

    is_static: bool = False

    def at(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def key(self, t: int) -> Hashable:
        return int(t)

    def distinct_keys(self, times: Sequence[int]) -> dict:
        """Group ``times`` by :meth:`key`; returns ``{key: first time}``."""
        out: dict = {}
        for t in times:
            out.setdefault(self.key(t), int(t))
        return out


@dataclass(frozen=True, eq=False)
class StaticWeights(WeightsSequence):
    """The same weights matrix at every time."""

    matrix: np.ndarray = field(repr=False)
    is_static = True

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise NetworkError("weights must be a square matrix")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise NetworkError("weights must be finite and nonnegative")
        if np.any(np.diag(m) != 0):
            raise NetworkError("weights must have a zero diagonal")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def at(self, t: int) -> np.ndarray:
        return self.matrix

    def key(self, t: int) -> Hashable:
        return 0


@dataclass(frozen=True, eq=False)
class PeriodicWeights(WeightsSequence):
    """Weights that repeat with an integer period.

    ``factory(phase)`` builds the matrix for ``phase = t mod period``; the
    phase reduction makes ``at(t + period)`` bit-identical to ``at(t)``.
    """

    period: int
    factory: Callable[[int], np.ndarray] = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def key(self, t: int) -> Hashable:
        return int(t) % self.period

    def at(self, t: int) -> np.ndarray:
        phase = self.key(t)
        if phase not in self._cache:
            m = np.asarray(self.factory(phase), dtype=float)
            m.setflags(write=False)
            self._cache[phase] = m
        return self._cache[phase]


def _preset_factors(period: int):
    w = np.pi / (period / 2.0)  # tπ/2 at period 4
    h = np.pi / period          # tπ/4 at period 4
    return (
        (lambda t: 1.0 + np.cos(t * w) + 0.1, 0.5),
        (lambda t: 1.0 + np.sin(t * w) + 0.1, 1.0),
        (lambda t: 1.0 + np.cos(t * h) * np.sin(t * h) + 0.1, 1.0),
    )


def periodic_weights_preset(net: Network, part: CommunityPartition, period: int = 4,
                            formulas: Sequence[tuple[Callable[[int], float], float]] | None = None
                            ) -> PeriodicWeights:
    """Seasonal weights depending on the target node's community.

    For a target ``j`` in community ``c`` the weight is
    ``f_c(t) * 2 ** (-rate_c * d_ij)`` with ``d_ij`` the hop distance;
    unreachable pairs and the diagonal are zero. The default three-community
    preset uses ``f = 1 + cos(tπ/2) + 0.1`` with rate 1/2, ``1 + sin(tπ/2) + 0.1``
    with rate 1, and ``1 + cos(tπ/4) sin(tπ/4) + 0.1`` with rate 1 (period 4).

    Parameters
    ----------
    formulas : sequence of (callable, float), optional
        One ``(f_c, rate_c)`` pair per community, overriding the preset.
    """
    if formulas is None:
        if part.n_communities != 3:
            raise NetworkError("the periodic preset needs exactly 3 communities; pass formulas")
        formulas = _preset_factors(period)
    if len(formulas) != part.n_communities:
        raise NetworkError("need one formula per community")
    if part.d != net.d:
        raise NetworkError("partition and network sizes differ")
    dist = distance_matrix(net)
    reach = dist > 0
    target = part.labels  # community of column j

    def factory(phase: int) -> np.ndarray:
        m = np.zeros((net.d, net.d))
        for c, (f, rate) in enumerate(formulas, start=1):
            cols = target == c
            block = float(f(phase)) * np.power(2.0, -rate * dist[:, cols].astype(float))
            m[:, cols] = np.where(reach[:, cols], block, 0.0)
        return m

    return PeriodicWeights(period=int(period), factory=factory)
