"""CSV ingestion, party classification and the election analysis pipeline."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .acf import CorbitTable, corbit_data, render_corbit_svg, white_noise_band
from .fit import EstimationError, build_design, fit_ols
from .forecast import (ComparisonRow, comparison_csv, difference, fit_var_baseline,
                       forecast_one_step, naive_forecast, rmspe, standardize, unstandardize)
from .network import (CommunityPartition, Network, NetworkError, build_network, equal_weights,
                      max_stage, stage_adjacency)
from .order import (ModelOrder, make_community_order, make_global_order, make_local_order,
                    order_from_dict)
from .simulate import Realization

DATA_ENV = "COMMUNITY_GNAR_DATA"
RED, BLUE, SWING = 1, 2, 3


class DataError(ValueError):
    """Raised for malformed input files."""


# ---------------------------------------------------------------------------
# panels


@dataclass(frozen=True)
class Panel:
    """Labelled ``d x T`` panel.

    Attributes
    ----------
    nodes : tuple of str
        Unique node ids, one per row.
    times : tuple
        Strictly increasing time labels, one per column.
    values : ndarray
        ``d x T`` values; missing cells hold NaN.
    missing : ndarray of bool
    """

    nodes: tuple[str, ...]
    times: tuple
    values: np.ndarray = field(repr=False)
    missing: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.nodes), len(self.times)):
            raise DataError("panel values must be nodes x times")
        if len(set(self.nodes)) != len(self.nodes):
            raise DataError("duplicate node ids")
        if any(not a < b for a, b in zip(self.times, self.times[1:])):
            raise DataError("time labels must be strictly increasing")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "missing", np.asarray(self.missing, dtype=bool) | np.isnan(v))

    @property
    def d(self) -> int:
        return len(self.nodes)

    @property
    def T(self) -> int:
        return len(self.times)

    def reorder(self, nodes: Sequence[str]) -> "Panel":
        """Rows permuted to ``nodes``; every id must be present."""
        idx = {n: i for i, n in enumerate(self.nodes)}
        try:
            rows = [idx[n] for n in nodes]
        except KeyError as exc:
            raise DataError(f"node {exc.args[0]!r} not in panel") from None
        return Panel(tuple(nodes), self.times, self.values[rows], self.missing[rows])

    def to_realization(self) -> Realization:
        return Realization(self.values, np.arange(1, self.T + 1), self.missing)


def _time_key(label: str):
    try:
        return int(label)
    except ValueError:
        return label


def _number(text: str, where: str) -> float:
    if text.strip() == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"unparseable number {text!r} at {where}") from None


def read_panel_csv(path, schema: str = "long") -> Panel:
    """Read a panel.

    ``long``: header ``node,time,value`` (the second column may have any name,
    e.g. ``year``). ``wide``: header ``node,<t1>,<t2>,...`` with one row per
    node. Empty fields are missing cells.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if schema == "wide":
        times = tuple(_time_key(h) for h in header[1:])
        nodes, vals = [], []
        for n, r in enumerate(body, start=2):
            if len(r) != len(header):
                raise DataError(f"{path}:{n}: ragged row")
            nodes.append(r[0])
            vals.append([_number(v, f"{path}:{n}") for v in r[1:]])
        return Panel(tuple(nodes), times, np.array(vals, dtype=float).reshape(len(nodes), len(times)),
                     np.zeros((len(nodes), len(times)), dtype=bool))
    if schema != "long":
        raise DataError(f"unknown schema {schema!r}")
    if len(header) != 3:
        raise DataError(f"{path}: long schema needs node,time,value columns")
    cells: dict = {}
    nodes: list[str] = []
    times: set = set()
    for n, r in enumerate(body, start=2):
        if len(r) != 3:
            raise DataError(f"{path}:{n}: ragged row")
        node, t = r[0], _time_key(r[1])
        if (node, t) in cells:
            raise DataError(f"{path}:{n}: duplicate cell ({node}, {t})")
        cells[(node, t)] = _number(r[2], f"{path}:{n}")
        if node not in nodes:
            nodes.append(node)
        times.add(t)
    tl = tuple(sorted(times))
    vals = np.full((len(nodes), len(tl)), np.nan)
    ni = {v: i for i, v in enumerate(nodes)}
    ti = {v: i for i, v in enumerate(tl)}
    for (node, t), v in cells.items():
        vals[ni[node], ti[t]] = v
    return Panel(tuple(nodes), tl, vals, np.isnan(vals))


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_panel_csv(panel: Panel, path, schema: str = "long", time_name: str = "time") -> None:
    """Write a panel; floats use ``repr`` so reading back is exact."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        vals = np.where(panel.missing, np.nan, panel.values)
        if schema == "wide":
            w.writerow(["node"] + [str(t) for t in panel.times])
            for i, node in enumerate(panel.nodes):
                w.writerow([node] + [_fmt(v) for v in vals[i]])
        elif schema == "long":
            w.writerow(["node", time_name, "value"])
            for j, t in enumerate(panel.times):
                for i, node in enumerate(panel.nodes):
                    w.writerow([node, t, _fmt(vals[i, j])])
        else:
            raise DataError(f"unknown schema {schema!r}")


# ---------------------------------------------------------------------------
# networks and communities


def read_roster_csv(path) -> tuple[str, ...]:
    """Node ids from the first column of a CSV with a header."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return tuple(r[0] for r in rows[1:] if r)


def read_edges_csv(path, roster: Sequence[str] | None = None) -> Network:
    """Undirected network from a ``from,to`` CSV.

    Endpoints are resolved against ``roster`` (node ids in row order). Without
    a roster the endpoints must be 1-based integers and ``d`` is the largest.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0][:2]] != ["from", "to"]:
        raise DataError(f"{path}: expected header from,to")
    pairs = [(r[0].strip(), r[1].strip()) for r in rows[1:] if r]
    if roster is None:
        try:
            edges = [(int(a), int(b)) for a, b in pairs]
        except ValueError:
            raise DataError(f"{path}: labels need a roster") from None
        d = max((max(e) for e in edges), default=0)
        return build_network(edges, d)
    index = {lab: i + 1 for i, lab in enumerate(roster)}
    edges = []
    for a, b in pairs:
        for lab in (a, b):
            if lab not in index:
                raise NetworkError(f"unknown node label {lab!r}")
        edges.append((index[a], index[b]))
    return build_network(edges, len(roster), labels=tuple(roster))


def read_communities_csv(path, roster: Sequence[str]) -> CommunityPartition:
    """Partition from a ``node,community`` CSV with 1-based community numbers."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    found = {r[0]: int(r[1]) for r in rows[1:] if r}
    missing = [n for n in roster if n not in found]
    if missing:
        raise DataError(f"no community for node(s) {missing}")
    return CommunityPartition.from_labels([found[n] for n in roster])


def write_communities_csv(part: CommunityPartition, roster: Sequence[str], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "community"])
        for n, c in zip(roster, part.labels):
            w.writerow([n, int(c)])


def _is_republican(v) -> bool:
    if isinstance(v, str):
        v = v.strip().upper()
        if v not in ("R", "D"):
            raise DataError(f"winner must be 'R' or 'D', got {v!r}")
        return v == "R"
    return bool(v)


def classify_parties(win_records, threshold: float = 0.75) -> CommunityPartition:
    """Red (1) / Blue (2) / Swing (3) by share of Republican wins.

    ``win_records`` holds one equal-length record per node; each entry is
    ``'R'``/``'D'`` or truthy for a Republican win. A node is Red when its
    Republican share is at least ``threshold``, Blue when its Democratic share
    is, and Swing otherwise. The partition always has three communities.
    """
    recs = [[_is_republican(v) for v in r] for r in win_records]
    if not recs or any(len(r) == 0 for r in recs):
        raise DataError("empty win records")
    if len({len(r) for r in recs}) != 1:
        raise DataError("win records must have equal lengths")
    labels = []
    for r in recs:
        share = sum(r) / len(r)
        labels.append(RED if share >= threshold else BLUE if 1 - share >= threshold else SWING)
    return CommunityPartition.from_labels(labels, 3)


def read_winners_csv(path, roster: Sequence[str]) -> list[list[str]]:
    """Per-node winner records (``node,year,winner``) in year order."""
    panel: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            panel.setdefault(row["node"], {})[int(row["year"])] = row["winner"]
    missing = [n for n in roster if n not in panel]
    if missing:
        raise DataError(f"no winners for node(s) {missing}")
    return [[panel[n][y] for y in sorted(panel[n])] for n in roster]


def convert_mit_president(path, out_panel=None, out_winners=None) -> tuple[Panel, dict]:
    """Normalize the MIT Election Lab ``1976-2020-president.csv`` file.

    Republican share is the Republican candidate votes over ``totalvotes``
    times 100 per state and year; the winner is the larger of the Republican
    and Democratic totals. Returns the panel and ``{(state, year): winner}``.
    """
    rep: dict = {}
    dem: dict = {}
    total: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["state_po"], int(row["year"]))
            party = (row.get("party_simplified") or row.get("party_detailed") or "").upper()
            votes = float(row["candidatevotes"] or 0)
            total[key] = float(row["totalvotes"])
            if party == "REPUBLICAN":
                rep[key] = rep.get(key, 0.0) + votes
            elif party == "DEMOCRAT":
                dem[key] = dem.get(key, 0.0) + votes
    states = sorted({k[0] for k in total})
    years = sorted({k[1] for k in total})
    vals = np.full((len(states), len(years)), np.nan)
    winners = {}
    for (s, y), tv in total.items():
        vals[states.index(s), years.index(y)] = 100.0 * rep.get((s, y), 0.0) / tv
        winners[(s, y)] = "R" if rep.get((s, y), 0.0) > dem.get((s, y), 0.0) else "D"
    panel = Panel(tuple(states), tuple(years), vals, np.isnan(vals))
    if out_panel is not None:
        write_panel_csv(panel, out_panel, "long", "year")
    if out_winners is not None:
        with open(out_winners, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "year", "winner"])
            for y in years:
                for s in states:
                    if (s, y) in winners:
                        w.writerow([s, y, winners[(s, y)]])
    return panel, winners


# ---------------------------------------------------------------------------
# fixtures


def fixture_dir() -> Path:
    """Directory of the bundled fixtures; ``COMMUNITY_GNAR_DATA`` overrides it."""
    env = os.environ.get(DATA_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("community_gnar") / "data"))


def fixture_path(name: str) -> Path:
    p = fixture_dir() / name
    if not p.exists():
        raise FileNotFoundError(f"fixture {name} not found in {p.parent}")
    return p


@dataclass(frozen=True)
class ElectionData:
    """Election panel with its network and party classification, nodes sorted by id."""

    panel: Panel
    network: Network
    partition: CommunityPartition
    winners: tuple[tuple[str, ...], ...]


def load_election(panel_path=None, edges_path=None, roster_path=None, winners_path=None,
                  communities_path=None, threshold: float = 0.75) -> ElectionData:
    """Load the election inputs (bundled fixtures by default).

    Node order is the sorted node ids, so permuting rows of any input file
    leaves every downstream result unchanged.
    """
    roster_file = roster_path or fixture_path("usa_states.csv")
    roster = tuple(sorted(read_roster_csv(roster_file)))
    panel = read_panel_csv(panel_path or fixture_path("election_panel.csv"), "long").reorder(roster)
    net = read_edges_csv(edges_path or fixture_path("usa_edges.csv"), roster)
    if communities_path:
        part = read_communities_csv(communities_path, roster)
        winners: list = []
    else:
        winners = read_winners_csv(winners_path or fixture_path("election_winners.csv"), roster)
        part = classify_parties(winners, threshold)
    return ElectionData(panel, net, part, tuple(tuple(w) for w in winners))


# ---------------------------------------------------------------------------
# election pipeline

DEFAULT_ELECTION_CONFIG = {
    "panel": None,
    "edges": None,
    "roster": None,
    "winners": None,
    "communities": None,
    "threshold": 0.75,
    "T0": 11,
    "coefficient_window": "all",
    "weights": "equal",
    "community_order": {"p": [2, 2, 2], "stages": [[1, 0], [1, 0], [1, 0]]},
    "interaction_order": {"p": [2, 2, 2], "stages": [[1, 1], [1, 1], [1, 1]],
                          "interactions": [[2, 3], [1, 3], [1, 2]]},
    "global_order": {"p": 2, "stages": [1, 0]},
    "max_lag": 8,
    "max_stage": 3,
    "out_dir": None,
}


@dataclass
class ElectionReport:
    """Results of the election analysis; ``files`` maps names to artifact text."""

    summary: dict
    files: dict[str, str]

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name in sorted(self.files):
            p = out / name
            p.write_text(self.files[name])
            written.append(p)
        return written


def _load_config(config) -> dict:
    if config is None:
        cfg = {}
    elif isinstance(config, Mapping):
        cfg = dict(config)
    else:
        cfg = json.loads(Path(config).read_text())
    unknown = set(cfg) - set(DEFAULT_ELECTION_CONFIG)
    if unknown:
        raise DataError(f"unknown config keys: {sorted(unknown)}")
    return {**DEFAULT_ELECTION_CONFIG, **cfg}


def _order(spec: dict) -> ModelOrder:
    if "communities" in spec:
        return order_from_dict(spec)
    return make_community_order(spec["p"], spec["stages"], spec.get("interactions"))


def _corbit_bundle(x: np.ndarray, w, stages, part, max_h: int, max_r: int, prefix: str,
                   files: dict) -> dict:
    T = x.shape[1]
    max_h = min(max_h, (T - 1) // 2)  # partial values need T - h + 1 >= h + 2 residual columns
    out = {}
    for kind in ("nacf", "pnacf"):
        glob = corbit_data(x, w, stages, max_h, max_r, kind=kind)
        comm = corbit_data(x, w, stages, max_h, max_r, part=part, kind=kind)
        files[f"{prefix}{kind}.csv"] = glob.to_csv() + "".join(comm.to_csv().splitlines(True)[1:])
        files[f"{prefix}{kind}_corbit.svg"] = render_corbit_svg(glob)
        files[f"{prefix}{kind}_rcorbit.svg"] = render_corbit_svg(comm)
        out[kind] = (glob, comm)
    return out


def _lag_one_inside(tables: tuple[CorbitTable, CorbitTable], part: CommunityPartition) -> dict:
    glob, comm = tables
    d, T = glob.d, glob.T
    res = {"global": all(abs(r.value) < white_noise_band(d, T) for r in glob.rows if r.lag == 1)}
    for c in range(1, part.n_communities + 1):
        band = white_noise_band(int(part.sizes()[c - 1]), T)
        res[str(c)] = all(abs(r.value) < band for r in comm.rows
                          if r.lag == 1 and r.community == str(c))
    return res


def election_pipeline(config=None) -> ElectionReport:
    """End-to-end election analysis.

    Steps: load and classify, standardize with the first ``T0`` elections,
    fit the community and interaction models, forecast the last election with
    every model (raw and standardized fits), score RMSPE against the naive
    forecast, try the VAR baseline, and compute (P)NACF tables for the
    standardized and the differenced series. Every artifact is deterministic.
    """
    cfg = _load_config(config)
    data = load_election(cfg["panel"], cfg["edges"], cfg["roster"], cfg["winners"],
                         cfg["communities"], cfg["threshold"])
    panel, net, part = data.panel, data.network, data.partition
    if panel.missing.any():
        raise DataError("the election pipeline needs a complete panel")
    if cfg["weights"] != "equal":
        raise DataError("only equal weights are supported by the pipeline")
    x = panel.values
    d, T = x.shape
    T0 = int(cfg["T0"])
    if T0 >= T:
        raise DataError("T0 must leave at least one election to forecast")
    stages = stage_adjacency(net, max_stage(net))
    w = equal_weights(net, stages)
    y, sp = standardize(x, T0)
    files: dict[str, str] = {}
    summary: dict = {"d": d, "T": T, "T0": T0, "years": list(panel.times),
                     "r_max": max_stage(net), "community_sizes": part.sizes().tolist()}

    files["classification.csv"] = "node,community\n" + "".join(
        f"{n},{int(c)}\n" for n, c in zip(panel.nodes, part.labels))
    summary["swing_mean"] = float(x[part.members(SWING)].mean()) if part.sizes()[2] else None

    # coefficient tables
    window = y if cfg["coefficient_window"] == "all" else y[:, :T0]
    real_coef = Realization(window)
    com_order = _order(cfg["community_order"])
    int_order = _order(cfg["interaction_order"])
    com_fit = fit_ols(build_design(real_coef, com_order, w, part, stages))
    int_fit = fit_ols(build_design(real_coef, int_order, w, part, stages))
    files["community_fit.json"] = com_fit.to_json() + "\n"
    files["community_fit.txt"] = com_fit.table() + "\n"
    files["interaction_fit.json"] = int_fit.to_json() + "\n"
    files["interaction_fit.txt"] = int_fit.table() + "\n"
    summary["community_coefficients"] = dict(zip(com_fit.labels, com_fit.theta.tolist()))
    summary["community_t_values"] = dict(zip(com_fit.labels, com_fit.t_values.tolist()))
    summary["interaction_coefficients"] = dict(zip(int_fit.labels, int_fit.theta.tolist()))

    # forecasting comparison
    g = cfg["global_order"]
    models = {
        "global": (make_global_order(g["p"], g["stages"]), CommunityPartition.single(d)),
        "community": (com_order, part),
        "interaction": (int_order, part),
        "local": (make_local_order(d, g["p"], g["stages"]),
                  CommunityPartition.from_labels(np.arange(1, d + 1), d)),
    }
    actual = x[:, T0]
    naive = rmspe(naive_forecast(x[:, :T0]), actual)
    summary["naive_rmspe"] = naive
    rows = [ComparisonRow("naive", 0, {"rmspe_raw": naive, "rmspe_standardized": naive})]
    rmspes = {}
    for name, (order, mpart) in models.items():
        metrics = {}
        for label, series in (("rmspe_raw", x), ("rmspe_standardized", y)):
            hist = Realization(series[:, :T0])
            try:
                fit = fit_ols(build_design(hist, order, w, mpart, stages))
                fc = forecast_one_step(fit, order, hist, w, mpart, stages)
                if label == "rmspe_standardized":
                    fc = unstandardize(fc, sp)
                metrics[label] = rmspe(fc, actual)
            except (EstimationError, ValueError) as exc:
                metrics[label] = None
                summary.setdefault("failures", {})[f"{name}/{label}"] = str(exc)
        rmspes[name] = metrics
        rows.append(ComparisonRow(name, order.n_params, metrics))
    try:
        fit_var_baseline(x[:, :T0], 1)
        summary["var_baseline"] = "fitted"
    except EstimationError as exc:
        summary["var_baseline"] = str(exc)
    summary["rmspe"] = rmspes
    files["comparison.csv"] = comparison_csv(rows, ["rmspe_raw", "rmspe_standardized"])

    # diagnostics
    max_h, max_r = int(cfg["max_lag"]), int(cfg["max_stage"])
    _corbit_bundle(y, w, stages, part, max_h, max_r, "standardized_", files)
    dx = difference(x, 1)
    diff = _corbit_bundle(dx, w, stages, part, max_h, max_r, "differenced_", files)
    summary["differenced_lag1_inside_band"] = _lag_one_inside(diff["pnacf"], part)

    files["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    report = ElectionReport(summary, files)
    if cfg["out_dir"]:
        report.write(cfg["out_dir"])
    return report


__all__ = ["Panel", "DataError", "read_panel_csv", "write_panel_csv", "read_roster_csv",
           "read_edges_csv", "read_communities_csv", "write_communities_csv", "classify_parties",
           "read_winners_csv", "convert_mit_president", "fixture_dir", "fixture_path",
           "ElectionData", "load_election", "ElectionReport", "election_pipeline",
           "DEFAULT_ELECTION_CONFIG", "RED", "BLUE", "SWING"]
