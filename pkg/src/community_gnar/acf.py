"""Network autocorrelation diagnostics, Corbit tables and cross-correlations.

The network autocorrelation at lag ``h`` and stage ``r`` is

    nacf(h, r) = sum_{t=1}^{T-h} X_{t+h}' C_r X_t / sum_{t=1}^{T} X_t' C_r X_t,

with ``C_r = I + (A_r + A_r') / 2``, ``A_r = W . S_r`` and ``X`` demeaned per
node. It reduces to the classical sample ACF for a single node. The partial
version at lag ``h`` is the ``nacf(h, r)`` of residuals from a fitted
stage-uniform GNAR(h - 1, [r, ..., r]) model.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .network import CommunityPartition, NetworkError, StageAdjacency
from .order import make_global_order
from .simulate import Realization
from .weights import StaticWeights, WeightsSequence


class DiagnosticError(ValueError):
    """Raised for degenerate inputs to the correlation diagnostics."""


def _static_matrix(weights) -> np.ndarray:
    if isinstance(weights, WeightsSequence):
        if not weights.is_static:
            raise DiagnosticError("network autocorrelation needs static weights")
        return weights.at(0)
    return np.asarray(weights, dtype=float)


def _stage_matrix(stages: Sequence[StageAdjacency], r: int, d: int) -> np.ndarray:
    if r < 1:
        raise DiagnosticError("stage must be at least 1")
    if r > len(stages):
        return np.zeros((d, d), dtype=bool)
    return stages[r - 1].matrix


def _as_values(real) -> np.ndarray:
    if isinstance(real, Realization):
        return np.where(real.missing, np.nan, real.values)
    return np.asarray(real, dtype=float)


def white_noise_band(d: int, T: int) -> float:
    """Heuristic significance half-width ``3 / sqrt(d T)``."""
    return 3.0 / math.sqrt(d * T)


def _subset(values, w, s, nodes):
    if nodes is None:
        return values, w, s
    return values[nodes], w[np.ix_(nodes, nodes)], s[np.ix_(nodes, nodes)]


def _nacf_core(x: np.ndarray, w: np.ndarray, s: np.ndarray, h: int) -> float:
    d, T = x.shape
    if not 0 <= h <= T - 2:
        raise DiagnosticError(f"lag {h} outside 0..{T - 2}")
    xt = x - np.nanmean(x, axis=1, keepdims=True)
    xt = np.where(np.isnan(xt), 0.0, xt)
    a = np.where(s, w, 0.0)
    cr = np.eye(d) + 0.5 * (a + a.T)
    den = float(np.einsum("it,ij,jt->", xt, cr, xt))
    if abs(den) <= 1e-300 or not np.isfinite(den):
        raise DiagnosticError("zero denominator: series is constant")
    num = float(np.einsum("it,ij,jt->", xt[:, h:], cr, xt[:, : T - h]))
    return num / den


def _nodes(part: CommunityPartition | None, community: int | None):
    if community is None:
        return None
    if part is None:
        raise DiagnosticError("community variants need a partition")
    nodes = part.members(community)
    if nodes.size == 0:
        raise DiagnosticError(f"community {community} is empty")
    return nodes


def nacf(real, weights, stages: Sequence[StageAdjacency], h: int, r: int,
         community: int | None = None, part: CommunityPartition | None = None) -> float:
    """Network autocorrelation at lag ``h`` and stage ``r``.

    With ``community`` the series, weights and stage matrix are restricted to
    that community's nodes.
    """
    x = _as_values(real)
    w = _static_matrix(weights)
    s = _stage_matrix(stages, r, x.shape[0])
    return _nacf_core(*_subset(x, w, s, _nodes(part, community)), h)


def _partial_residuals(x: np.ndarray, w: np.ndarray, stages_sub: list[np.ndarray],
                       lags: int, r: int) -> np.ndarray:
    """Residual panel (``d x (T - lags)``) of a stage-uniform global-alpha fit.

    Regressors that vanish identically (stages without any pair) are dropped.
    """
    from .fit import build_design  # local import avoids a cycle

    d, T = x.shape
    order = make_global_order(lags, [r] * lags)
    st = [StageAdjacency(i + 1, m) for i, m in enumerate(stages_sub)]
    w0 = np.where(np.eye(d, dtype=bool), 0.0, w)
    try:
        design = build_design(Realization(x), order, StaticWeights(w0),
                              CommunityPartition.single(d), st)
    except ValueError as exc:
        raise DiagnosticError(f"partialling fit failed: {exc}") from None
    R = design.R[:, np.any(design.R != 0, axis=0)]
    if R.shape[0] <= R.shape[1]:
        raise DiagnosticError(f"partialling fit at lag {lags + 1} is underdetermined")
    coef = np.linalg.lstsq(R, design.y, rcond=None)[0]
    out = np.full((d, T - lags), np.nan)
    out[design.row_nodes, design.row_times - lags] = design.y - R @ coef
    return out


def pnacf(real, weights, stages: Sequence[StageAdjacency], h: int, r: int,
          community: int | None = None, part: CommunityPartition | None = None) -> float:
    """Partial network autocorrelation at lag ``h`` and stage ``r``.

    ``pnacf(1, r) = nacf(1, r)``. For ``h >= 2`` a global-alpha
    GNAR(h - 1, [r, ..., r]) model (restricted to the community's nodes when
    ``community`` is given) is fitted and ``nacf(h, r)`` of its residuals is
    returned. Each node is centred before the partialling fit, matching the
    centring used by :func:`nacf`.
    """
    if h < 1:
        raise DiagnosticError("partial autocorrelation needs h >= 1")
    x = _as_values(real)
    d = x.shape[0]
    w = _static_matrix(weights)
    nodes = _nodes(part, community)
    s = _stage_matrix(stages, r, d)
    if h == 1:
        return _nacf_core(*_subset(x, w, s, nodes), 1)
    x = x - np.nanmean(x, axis=1, keepdims=True)
    xs, ws, ss = _subset(x, w, s, nodes)
    sub = [(_stage_matrix(stages, i, d) if nodes is None
            else _stage_matrix(stages, i, d)[np.ix_(nodes, nodes)]) for i in range(1, r + 1)]
    resid = _partial_residuals(xs, ws, sub, h - 1, r)
    return _nacf_core(resid, ws, ss, h)


@dataclass(frozen=True)
class CorbitRow:
    kind: str
    lag: int
    stage: int
    community: str  # '' for the whole network, a community number, or 'mean'
    value: float


@dataclass(frozen=True)
class CorbitTable:
    """Grid of (P)NACF values by lag, stage and community."""

    kind: str
    rows: tuple[CorbitRow, ...]
    max_lag: int
    max_stage: int
    T: int
    d: int
    n_communities: int = 0
    band: float = field(default=float("nan"))

    def value(self, lag: int, stage: int, community: str = "") -> float:
        for row in self.rows:
            if row.lag == lag and row.stage == stage and row.community == str(community):
                return row.value
        raise KeyError((lag, stage, community))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "lag", "stage", "community", "value"])
        for row in self.rows:
            w.writerow([row.kind, row.lag, row.stage, row.community, f"{row.value:.12g}"])
        return buf.getvalue()


def corbit_data(real, weights, stages: Sequence[StageAdjacency], max_h: int, max_r: int,
                part: CommunityPartition | None = None, kind: str = "pnacf") -> CorbitTable:
    """Full ``(h, r)`` grid, plus per-community rows and their means when ``part`` is given.

    With a partition the table has ``max_h * max_r * (C + 1)`` rows: one per
    community and one ``'mean'`` row per ``(h, r)``.
    """
    if max_h < 1 or max_r < 1:
        raise DiagnosticError("max_h and max_r must be at least 1")
    if kind not in ("nacf", "pnacf"):
        raise DiagnosticError("kind must be 'nacf' or 'pnacf'")
    fn = nacf if kind == "nacf" else pnacf
    x = _as_values(real)
    d, T = x.shape
    rows = []
    for h in range(1, max_h + 1):
        for r in range(1, max_r + 1):
            if part is None:
                rows.append(CorbitRow(kind, h, r, "", fn(x, weights, stages, h, r)))
                continue
            vals = []
            for c in range(1, part.n_communities + 1):
                v = fn(x, weights, stages, h, r, community=c, part=part)
                vals.append(v)
                rows.append(CorbitRow(kind, h, r, str(c), v))
            rows.append(CorbitRow(kind, h, r, "mean", float(np.mean(vals))))
    return CorbitTable(kind, tuple(rows), max_h, max_r, T, d,
                       part.n_communities if part is not None else 0, white_noise_band(d, T))


def cross_correlation(real, h: int) -> np.ndarray:
    """Matrix with entry ``(i, j)`` the sample correlation of ``X_{i,t+h}`` and ``X_{j,t}``.

    The diagonal holds the autocorrelations; displays usually grey it out.
    """
    x = _as_values(real)
    d, T = x.shape
    if not 0 <= h <= T - 2:
        raise DiagnosticError(f"lag {h} outside 0..{T - 2}")
    lead = x[:, h:]
    lag = x[:, : T - h]
    lead = lead - lead.mean(axis=1, keepdims=True)
    lag = lag - lag.mean(axis=1, keepdims=True)
    sl = np.sqrt((lead ** 2).sum(axis=1))
    sg = np.sqrt((lag ** 2).sum(axis=1))
    if np.any(sl == 0) or np.any(sg == 0):
        raise DiagnosticError("a node has zero variance")
    out = (lead @ lag.T) / np.outer(sl, sg)
    if h == 0:
        out = 0.5 * (out + out.T)
        np.fill_diagonal(out, 1.0)
    return out


# ---------------------------------------------------------------------------
# SVG rendering


def _diverging(v: float, vmax: float) -> str:
    """Blue (negative) to white (0) to red (positive)."""
    t = 0.0 if vmax <= 0 else max(-1.0, min(1.0, v / vmax))
    if t >= 0:
        r, g, b = 255, round(255 * (1 - t)), round(255 * (1 - t))
    else:
        r, g, b = round(255 * (1 + t)), round(255 * (1 + t)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def render_corbit_svg(table: CorbitTable, style: dict | None = None) -> str:
    """Ring plot: rings are stages, sectors are lags, colour is the value.

    Each ``(lag, stage)`` cell sits at radius proportional to the stage and at
    the lag's angle. With communities, per-community points form a small ring
    around the cell and the community mean sits at its centre. The plot centre
    marks the zero reference. Output is byte-identical for identical input.
    """
    st = {"size": 480, "margin": 60, "point": 7.0, "font": 11}
    st.update(style or {})
    size, margin = int(st["size"]), int(st["margin"])
    cx = cy = size / 2
    ring = (size / 2 - margin) / max(table.max_stage, 1)
    vals = [abs(r.value) for r in table.rows if np.isfinite(r.value)]
    vmax = max(vals) if vals else 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" '
           f'height="{size + 40}" viewBox="0 0 {size} {size + 40}">',
           f'<rect x="0" y="0" width="{size}" height="{size + 40}" fill="#ffffff"/>',
           f'<text x="{cx:.2f}" y="18" font-size="{st["font"] + 2}" text-anchor="middle" '
           f'font-family="sans-serif">{table.kind.upper()}</text>']
    for r in range(1, table.max_stage + 1):
        out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r * ring:.2f}" fill="none" '
                   f'stroke="#bbbbbb" stroke-width="1"/>')
    for h in range(1, table.max_lag + 1):
        ang = 2 * math.pi * (h - 1) / max(table.max_lag, 1) - math.pi / 2
        x2 = cx + (table.max_stage + 0.4) * ring * math.cos(ang)
        y2 = cy + (table.max_stage + 0.4) * ring * math.sin(ang)
        out.append(f'<line x1="{cx:.2f}" y1="{cy:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                   f'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{x2:.2f}" y="{y2:.2f}" font-size="{st["font"]}" '
                   f'text-anchor="middle" font-family="sans-serif">lag {h}</text>')
    out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{st["point"]:.2f}" '
               f'fill="{_diverging(0.0, vmax)}" stroke="#000000" stroke-width="0.5"/>')
    cells: dict = {}
    for row in table.rows:
        cells.setdefault((row.lag, row.stage), []).append(row)
    for (h, r), rows in sorted(cells.items()):
        ang = 2 * math.pi * (h - 1) / max(table.max_lag, 1) - math.pi / 2
        px = cx + r * ring * math.cos(ang)
        py = cy + r * ring * math.sin(ang)
        comm = [row for row in rows if row.community not in ("", "mean")]
        centre = [row for row in rows if row.community in ("", "mean")]
        for i, row in enumerate(comm):
            a = 2 * math.pi * i / len(comm) - math.pi / 2
            qx = px + 1.8 * st["point"] * math.cos(a)
            qy = py + 1.8 * st["point"] * math.sin(a)
            out.append(f'<circle cx="{qx:.2f}" cy="{qy:.2f}" r="{0.7 * st["point"]:.2f}" '
                       f'fill="{_diverging(row.value, vmax)}" stroke="#333333" stroke-width="0.4"/>')
        for row in centre:
            out.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{st["point"]:.2f}" '
                       f'fill="{_diverging(row.value, vmax)}" stroke="#000000" stroke-width="0.6"/>')
    # legend: colour bar from -vmax to vmax
    lx, ly, lw = margin, size + 10, size - 2 * margin
    steps = 20
    for i in range(steps):
        v = -vmax + 2 * vmax * (i + 0.5) / steps
        out.append(f'<rect x="{lx + i * lw / steps:.2f}" y="{ly:.2f}" width="{lw / steps:.2f}" '
                   f'height="10" fill="{_diverging(v, vmax)}"/>')
    out.append(f'<text x="{lx:.2f}" y="{ly + 24:.2f}" font-size="{st["font"]}" '
               f'font-family="sans-serif">{-vmax:.3f}</text>')
    out.append(f'<text x="{lx + lw / 2:.2f}" y="{ly + 24:.2f}" font-size="{st["font"]}" '
               f'text-anchor="middle" font-family="sans-serif">0</text>')
    out.append(f'<text x="{lx + lw:.2f}" y="{ly + 24:.2f}" font-size="{st["font"]}" '
               f'text-anchor="end" font-family="sans-serif">{vmax:.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cross_correlation_svg(matrix: np.ndarray, cell: int = 12) -> str:
    """Heat map of a cross-correlation matrix with a grey diagonal."""
    d = matrix.shape[0]
    size = d * cell
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}">']
    for i in range(d):
        for j in range(d):
            fill = "#999999" if i == j else _diverging(float(matrix[i, j]), 1.0)
            out.append(f'<rect x="{j * cell}" y="{i * cell}" width="{cell}" height="{cell}" fill="{fill}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


__all__ = ["nacf", "pnacf", "corbit_data", "CorbitTable", "CorbitRow", "render_corbit_svg",
           "cross_correlation", "cross_correlation_svg", "white_noise_band", "DiagnosticError",
           "NetworkError"]
