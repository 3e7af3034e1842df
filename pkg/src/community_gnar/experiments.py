"""Monte Carlo recovery study, error curves and empirical checks of the error bound."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fit import BoundReport, EstimationError, build_design, error_bound, fit_ols
from .network import (CommunityPartition, Network, StageAdjacency, build_network, equal_weights,
                      max_stage, stage_adjacency)
from .order import ModelOrder, coefficient_scales, make_community_order, param_layout
from .simulate import NoiseSpec, SimulationError, replication_seed, sample_stationary_params, simulate
from .weights import StaticWeights, WeightsSequence, periodic_weights_preset

#: Coefficients of the two-community five-node model used for the recovery table,
#: in layout order alpha[1,1], beta[1,1,1], alpha[1,2], beta[1,1,2], alpha[2,2], beta[2,1,2].
FIVE_NODE_THETA = (0.27, 0.18, 0.25, 0.30, 0.12, 0.20)
#: Reference Monte Carlo standard deviations for :data:`FIVE_NODE_THETA` at T = 100.
FIVE_NODE_REFERENCE_SD = (0.062, 0.109, 0.061, 0.098, 0.083, 0.127)
#: Coefficients of the same model used for its diagnostic plots.
FIVE_NODE_DIAGNOSTIC_THETA = (0.23, 0.47, 0.20, 0.30, 0.18, 0.27)
FIVE_NODE_EDGES = ((1, 4), (1, 5), (2, 3), (2, 4), (3, 4))
DEFAULT_T_GRID = (25, 50, 100, 200, 400, 800)


@dataclass(frozen=True)
class ModelSetup:
    """Everything needed to simulate and fit one model."""

    name: str
    network: Network
    partition: CommunityPartition
    order: ModelOrder
    weights: WeightsSequence
    stages: tuple[StageAdjacency, ...]

    @property
    def d(self) -> int:
        return self.network.d


def five_node_model() -> ModelSetup:
    """Five nodes, communities {2, 3, 4} and {1, 5}, orders (1, [1]) and (2, [1, 1])."""
    net = build_network(FIVE_NODE_EDGES, 5)
    stages = tuple(stage_adjacency(net, max_stage(net)))
    part = CommunityPartition.from_labels([2, 1, 1, 1, 2])
    order = make_community_order([1, 2], [[1], [1, 1]])
    return ModelSetup("five_node", net, part, order, StaticWeights(equal_weights(net, stages)), stages)


def usa_study_model(period: int = 4) -> ModelSetup:
    """Three-community model on the USA border network with periodic weights.

    Communities are the Red, Blue and Swing classification of the bundled
    election fixture; orders are (3, [2, 2, 1], {3}), (2, [3, 2], {3}) and
    (1, [3], {1, 2}), 35 coefficients in total.
    """
    from .dataio import load_election

    data = load_election()
    net = data.network
    stages = tuple(stage_adjacency(net, max_stage(net)))
    order = make_community_order([3, 2, 1], [[2, 2, 1], [3, 2], [3]], [[3], [3], [1, 2]])
    weights = periodic_weights_preset(net, data.partition, period)
    return ModelSetup("usa_study", net, data.partition, order, weights, stages)


def model_setup(name: str) -> ModelSetup:
    if name == "five_node":
        return five_node_model()
    if name == "usa_study":
        return usa_study_model()
    raise ValueError(f"unknown model {name!r}; choose five_node or usa_study")


def _streams(seed: int, index: int) -> tuple[int, int]:
    """Independent parameter and noise seeds for replication ``index``."""
    a, b = np.random.SeedSequence(replication_seed(seed, index)).generate_state(2)
    return int(a), int(b)


def _scales(setup: ModelSetup) -> np.ndarray:
    period = getattr(setup.weights, "period", 1)
    return coefficient_scales(setup.order, setup.weights, setup.stages, setup.partition,
                              range(period))


@dataclass(frozen=True)
class RecoveryConfig:
    """Settings of the recovery study.

    ``fixed_theta`` replaces the per-replication draw of true coefficients.
    """

    T_grid: tuple[int, ...] = DEFAULT_T_GRID
    replications: int = 50
    seed: int = 2024
    model: str = "usa_study"
    fixed_theta: tuple[float, ...] | None = None
    method: str = "var"
    burn_in: int | None = None
    total_mass: float = 0.9


@dataclass
class RecoveryResult:
    """Per-row errors plus the raw estimates.

    ``rows`` holds ``(T, replication, community, delta)`` with community a
    number or ``'all'`` for the whole model; failed fits have ``delta = nan``
    and an entry in ``failures``.
    """

    config: RecoveryConfig
    labels: tuple[str, ...]
    rows: list[tuple[int, int, str, float]] = field(default_factory=list)
    estimates: dict = field(default_factory=dict)
    truths: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "replication", "community", "delta"])
        for T, rep, c, delta in sorted(self.rows, key=lambda r: (r[0], r[1], r[2] == "all", r[2])):
            w.writerow([T, rep, c, f"{delta:.12g}"])
        return buf.getvalue()

    def medians(self) -> dict[str, dict[int, float]]:
        """Median delta per community (and ``'all'``) and ``T``, ignoring failures."""
        out: dict = {}
        for T, _, c, delta in self.rows:
            out.setdefault(c, {}).setdefault(T, []).append(delta)
        return {c: {T: float(np.nanmedian(v)) for T, v in sorted(by_T.items())}
                for c, by_T in out.items()}

    def estimate_array(self, T: int) -> np.ndarray:
        """``replications x q`` matrix of successful estimates at ``T``."""
        reps = sorted(k[1] for k in self.estimates if k[0] == T)
        return np.array([self.estimates[(T, r)] for r in reps]).reshape(len(reps), -1)


def _errors(order: ModelOrder, theta_hat: np.ndarray, theta0: np.ndarray) -> list[tuple[str, float]]:
    lay = param_layout(order)
    out = [(str(c), float(np.linalg.norm(theta_hat[sl] - theta0[sl])))
           for c, sl in enumerate(lay.community_slices, start=1)]
    out.append(("all", float(np.linalg.norm(theta_hat - theta0))))
    return out


def run_recovery_study(config: RecoveryConfig = RecoveryConfig(),
                       setup: ModelSetup | None = None) -> RecoveryResult:
    """Simulate, fit and record coefficient errors over a grid of sample sizes.

    Replication ``i`` of grid point ``j`` uses seed
    ``replication_seed(seed, j * replications + i)`` split into a parameter
    stream and a noise stream, so results do not depend on execution order.
    """
    setup = setup or model_setup(config.model)
    order = setup.order
    res = RecoveryResult(config, order.labels())
    scales = _scales(setup) if config.fixed_theta is None else None
    for j, T in enumerate(config.T_grid):
        for i in range(config.replications):
            s_theta, s_noise = _streams(config.seed, j * config.replications + i)
            if config.fixed_theta is not None:
                theta0 = np.asarray(config.fixed_theta, dtype=float)
            else:
                theta0 = sample_stationary_params(order, s_theta, config.total_mass, scales)
            try:
                real = simulate(order, theta0, setup.weights, setup.stages, setup.partition, T,
                                burn_in=config.burn_in, noise=NoiseSpec(1.0, s_noise),
                                method=config.method)
                fit = fit_ols(build_design(real, order, setup.weights, setup.partition,
                                           setup.stages))
            except (EstimationError, SimulationError, ValueError) as exc:
                res.failures[(T, i)] = str(exc)
                for c in [str(c) for c in range(1, order.C + 1)] + ["all"]:
                    res.rows.append((T, i, c, math.nan))
                continue
            res.estimates[(T, i)] = fit.theta
            res.truths[(T, i)] = theta0
            for c, delta in _errors(order, fit.theta, theta0):
                res.rows.append((T, i, c, delta))
    return res


@dataclass(frozen=True)
class BoundCheckConfig:
    deltas: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    replications: int = 500
    T: int = 200
    seed: int = 2024
    model: str = "usa_study"
    method: str = "var"
    total_mass: float = 0.9


@dataclass
class BoundCheckResult:
    """Per-replication errors and bounds, summarized per deviation level."""

    config: BoundCheckConfig
    errors: list[float] = field(default_factory=list)
    reports: list[BoundReport] = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    def deterministic_violations(self, slack: float = 1e-9) -> int:
        return sum(e > r.deterministic + slack for e, r in zip(self.errors, self.reports))

    def summary(self) -> list[dict]:
        out = []
        for delta in self.config.deltas:
            viol = sum(e > r.probabilistic(delta) for e, r in zip(self.errors, self.reports))
            ceilings = [min(1.0, 1.0 - r.probability_floor(delta)) for r in self.reports]
            n = len(self.reports)
            out.append({"delta": delta, "replications": n, "violations": int(viol),
                        "rate": viol / n if n else 0.0,
                        "ceiling_min": min(ceilings, default=1.0),
                        "ceiling_max": max(ceilings, default=1.0)})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "replications", "violations", "rate", "ceiling_min", "ceiling_max",
                    "deterministic_violations"])
        det = self.deterministic_violations()
        for s in self.summary():
            w.writerow([f"{s['delta']:g}", s["replications"], s["violations"], f"{s['rate']:.6g}",
                        f"{s['ceiling_min']:.6g}", f"{s['ceiling_max']:.6g}", det])
        return buf.getvalue()


def run_bound_check(config: BoundCheckConfig = BoundCheckConfig(),
                    setup: ModelSetup | None = None) -> BoundCheckResult:
    """Compare ``||theta_hat - theta_0||_2`` with the deterministic and probabilistic bounds.

    The noise is standard Gaussian, so ``sigma_u = 1``.
    """
    setup = setup or model_setup(config.model)
    order = setup.order
    scales = _scales(setup)
    out = BoundCheckResult(config)
    for i in range(config.replications):
        s_theta, s_noise = _streams(config.seed, i)
        theta0 = sample_stationary_params(order, s_theta, config.total_mass, scales)
        try:
            real = simulate(order, theta0, setup.weights, setup.stages, setup.partition, config.T,
                            noise=NoiseSpec(1.0, s_noise), method=config.method)
            design = build_design(real, order, setup.weights, setup.partition, setup.stages)
            fit = fit_ols(design)
            rep = error_bound(design, 1.0, theta_true=theta0)
        except (EstimationError, SimulationError, ValueError) as exc:
            out.failures[i] = str(exc)
            continue
        out.errors.append(float(np.linalg.norm(fit.theta - theta0)))
        out.reports.append(rep)
    return out


def render_curves_svg(medians: dict[str, dict[int, float]], width: int = 480,
                      height: int = 320) -> str:
    """Log-log line plot of median error against ``T``, one line per series."""
    series = {k: v for k, v in sorted(medians.items()) if v}
    pts = [(T, m) for v in series.values() for T, m in v.items() if m > 0 and np.isfinite(m)]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>']
    if pts:
        lx = [math.log(p[0]) for p in pts]
        ly = [math.log(p[1]) for p in pts]
        x0, x1 = min(lx), max(lx) + 1e-9
        y0, y1 = min(ly), max(ly) + 1e-9
        m = 40

        def sx(T):
            return m + (math.log(T) - x0) / (x1 - x0) * (width - 2 * m)

        def sy(v):
            return height - m - (math.log(v) - y0) / (y1 - y0) * (height - 2 * m)

        palette = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#000000"]
        for n, (name, v) in enumerate(series.items()):
            col = "#000000" if name == "all" else palette[n % (len(palette) - 1)]
            path = " ".join(f"{sx(T):.2f},{sy(e):.2f}" for T, e in v.items() if e > 0)
            out.append(f'<polyline points="{path}" fill="none" stroke="{col}" stroke-width="1.5"/>')
            out.append(f'<text x="{width - m + 4}" y="{20 + 14 * n}" font-size="11" '
                       f'font-family="sans-serif" fill="{col}">{name}</text>')
        for T in sorted({p[0] for p in pts}):
            out.append(f'<text x="{sx(T):.2f}" y="{height - 20}" font-size="10" '
                       f'text-anchor="middle" font-family="sans-serif">{T}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


__all__ = ["FIVE_NODE_THETA", "FIVE_NODE_REFERENCE_SD", "FIVE_NODE_DIAGNOSTIC_THETA",
           "FIVE_NODE_EDGES", "DEFAULT_T_GRID", "ModelSetup", "five_node_model",
           "usa_study_model", "model_setup", "RecoveryConfig", "RecoveryResult",
           "run_recovery_study", "BoundCheckConfig", "BoundCheckResult", "run_bound_check",
           "render_curves_svg"]
