"""Command-line interface: ``community-gnar <subcommand> ...``.

Exit codes: 0 on success, 2 on invalid input or usage, 1 on internal errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path


from . import acf, dataio, experiments, fit, forecast, network, order
from .simulate import NoiseSpec, Realization, simulate

DEFAULT_SEED = 2024


class UsageError(ValueError):
    """Invalid command-line input."""


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    p = out_dir / name
    p.write_text(text)
    return p


def _read_model(path: str):
    return order.model_from_json(Path(path).read_text())


def _network_inputs(edges: str, nodes: tuple[str, ...], communities: str | None):
    net = dataio.read_edges_csv(edges, nodes)
    stages = network.stage_adjacency(net, max(network.max_stage(net), 1))
    w = network.equal_weights(net, stages)
    part = (dataio.read_communities_csv(communities, nodes) if communities
            else network.CommunityPartition.single(len(nodes)))
    return net, stages, w, part


def _roster_from_edges(edges: str, roster: str | None) -> tuple[str, ...]:
    if roster:
        return dataio.read_roster_csv(roster)
    with open(edges, newline="") as fh:
        rows = [r for r in csv.reader(fh)][1:]
    try:
        d = max(max(int(a), int(b)) for a, b, *_ in rows)
    except ValueError:
        raise UsageError("labelled edge lists need --roster") from None
    return tuple(str(i) for i in range(1, d + 1))


def _panel(args) -> dataio.Panel:
    return dataio.read_panel_csv(args.panel, args.schema)


def cmd_simulate(args) -> None:
    mod, theta = _read_model(args.model)
    if theta is None:
        raise UsageError("the model file has no theta")
    nodes = _roster_from_edges(args.edges, args.roster)
    _, stages, w, part = _network_inputs(args.edges, nodes, args.communities)
    real = simulate(mod, theta, w, stages, part, args.T, burn_in=args.burn_in,
                 noise=NoiseSpec(args.sigma, args.seed))
    panel = dataio.Panel(nodes, tuple(range(1, args.T + 1)), real.values, real.missing)
    dataio.write_panel_csv(panel, args.out_dir / "panel.csv", args.schema)


def cmd_fit(args) -> None:
    panel = _panel(args)
    mod, _ = _read_model(args.order)
    _, stages, w, part = _network_inputs(args.edges, panel.nodes, args.communities)
    design = fit.build_design(panel.to_realization(), mod, w, part, stages)
    res = fit.fit_ols(design, args.sigma2)
    if args.format == "json":
        doc = res.to_dict()
        doc["model"] = json.loads(order.model_to_json(mod, res.theta))
        _write(args.out_dir, "fit.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        buf = io.StringIO()
        w_ = csv.writer(buf, lineterminator="\n")
        w_.writerow(["label", "estimate", "se", "t"])
        for lab, th, se, tv in zip(res.labels, res.theta, res.se, res.t_values):
            w_.writerow([lab, f"{th:.10g}", f"{se:.10g}", f"{tv:.10g}"])
        _write(args.out_dir, "fit.csv", buf.getvalue())
    _write(args.out_dir, "model.json", order.model_to_json(mod, res.theta) + "\n")
    print(res.table())


def cmd_stationarity(args) -> None:
    mod, theta = _read_model(args.model)
    if theta is None:
        raise UsageError("the model file has no theta")
    rep = order.check_stationary_sufficient(mod, theta)
    doc = {"sufficient": {"sums": list(rep.sums), "margin": rep.margin, "passed": rep.passed}}
    if args.edges:
        nodes = _roster_from_edges(args.edges, args.roster)
        _, stages, w, part = _network_inputs(args.edges, nodes, args.communities)
        comp = order.check_stationary_companion(order.var_matrices(mod, theta, w, stages, part))
        doc["companion"] = {"spectral_radius": comp.spectral_radius, "passed": comp.passed}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    _write(args.out_dir, "stationarity.json", text)
    print(text, end="")


def _diagnostics(args, kind: str) -> acf.CorbitTable:
    panel = _panel(args)
    _, stages, w, part = _network_inputs(args.edges, panel.nodes, args.communities)
    return acf.corbit_data(panel.to_realization(), w, stages, args.max_lag, args.max_stage,
                           part if args.communities else None, kind)


def cmd_nacf(args) -> None:
    table = _diagnostics(args, "nacf")
    _write(args.out_dir, "nacf.csv", table.to_csv())
    if args.svg:
        _write(args.out_dir, "nacf.svg", acf.render_corbit_svg(table))


def cmd_corbit(args) -> None:
    table = _diagnostics(args, args.kind)
    _write(args.out_dir, f"{args.kind}.csv", table.to_csv())
    _write(args.out_dir, f"{args.kind}_corbit.svg", acf.render_corbit_svg(table))


def cmd_forecast(args) -> None:
    panel = _panel(args)
    mod, theta = _read_model(args.model)
    if theta is None:
        raise UsageError("the model file has no theta")
    _, stages, w, part = _network_inputs(args.edges, panel.nodes, args.communities)
    real = panel.to_realization()
    T = real.T - args.holdout
    if T < mod.p:
        raise UsageError("not enough history after the holdout")
    hist = Realization(real.values[:, :T], real.times[:T], real.missing[:, :T])
    fc = forecast.forecast_one_step(theta, mod, hist, w, part, stages)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["node", "forecast"] + (["actual"] if args.holdout else []))
    for i, node in enumerate(panel.nodes):
        wr.writerow([node, f"{fc[i]:.10g}"] + ([f"{real.values[i, T]:.10g}"] if args.holdout else []))
    _write(args.out_dir, "forecast.csv", buf.getvalue())
    if args.holdout:
        doc = {"rmspe": forecast.rmspe(fc, real.values[:, T]),
               "naive_rmspe": forecast.rmspe(forecast.naive_forecast(hist), real.values[:, T])}
        _write(args.out_dir, "rmspe.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
        print(json.dumps(doc, sort_keys=True))


def cmd_bound(args) -> None:
    panel = _panel(args)
    mod, theta = _read_model(args.model)
    _, stages, w, part = _network_inputs(args.edges, panel.nodes, args.communities)
    design = fit.build_design(panel.to_realization(), mod, w, part, stages)
    rep = fit.error_bound(design, args.sigma, args.delta,
                          theta_true=theta if args.true_theta else None)
    text = json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n"
    _write(args.out_dir, "bound.json", text)
    print(text, end="")


def cmd_study(args) -> None:
    cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    cfg.setdefault("seed", args.seed)
    if args.kind == "recovery":
        for key in ("T_grid", "fixed_theta"):
            if cfg.get(key) is not None:
                cfg[key] = tuple(cfg[key])
        res = experiments.run_recovery_study(experiments.RecoveryConfig(**cfg))
        _write(args.out_dir, "recovery.csv", res.to_csv())
        _write(args.out_dir, "recovery_medians.svg", experiments.render_curves_svg(res.medians()))
    else:
        if cfg.get("deltas") is not None:
            cfg["deltas"] = tuple(cfg["deltas"])
        res = experiments.run_bound_check(experiments.BoundCheckConfig(**cfg))
        _write(args.out_dir, "bound_check.csv", res.to_csv())


def cmd_election(args) -> None:
    cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    cfg["out_dir"] = str(args.out_dir)
    rep = dataio.election_pipeline(cfg)
    print(rep.files["community_fit.txt"], end="")
    print(rep.files["comparison.csv"], end="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="community-gnar",
                                     description="Community-alpha GNAR modelling of network time series.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed (default 2024)")
    common.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    net = argparse.ArgumentParser(add_help=False)
    net.add_argument("--edges", required=True, help="edge CSV with header from,to")
    net.add_argument("--communities", help="community CSV with header node,community")
    panel = argparse.ArgumentParser(add_help=False)
    panel.add_argument("--panel", required=True, help="panel CSV")
    panel.add_argument("--schema", choices=("long", "wide"), default="long")
    diag = argparse.ArgumentParser(add_help=False)
    diag.add_argument("--max-lag", type=int, default=5)
    diag.add_argument("--max-stage", type=int, default=3)

    sub = parser.add_subparsers(dest="command", metavar="command")
    p = sub.add_parser("simulate", parents=[common, net], help="simulate a panel from a model JSON")
    p.add_argument("--model", required=True, help="model JSON with order and theta")
    p.add_argument("--roster", help="node roster CSV for labelled edge lists")
    p.add_argument("-T", type=int, required=True)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--schema", choices=("long", "wide"), default="long")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common, net, panel], help="least-squares fit")
    p.add_argument("--order", required=True, help="order (or model) JSON")
    p.add_argument("--sigma2", choices=("df", "mle"), default="df",
                   help="residual variance denominator: rows - q (df) or rows")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("stationarity", parents=[common], help="stationarity checks")
    p.add_argument("--model", required=True)
    p.add_argument("--edges", help="edge CSV; enables the companion-matrix check")
    p.add_argument("--communities")
    p.add_argument("--roster")
    p.set_defaults(func=cmd_stationarity)

    p = sub.add_parser("nacf", parents=[common, net, panel, diag], help="network autocorrelation grid")
    p.add_argument("--svg", action="store_true", help="also write a ring plot")
    p.set_defaults(func=cmd_nacf)

    p = sub.add_parser("corbit", parents=[common, net, panel, diag], help="Corbit table and plot")
    p.add_argument("--kind", choices=("nacf", "pnacf"), default="pnacf")
    p.set_defaults(func=cmd_corbit)

    p = sub.add_parser("forecast", parents=[common, net, panel], help="one-step forecast")
    p.add_argument("--model", required=True, help="fitted model JSON")
    p.add_argument("--holdout", type=int, default=0,
                   help="forecast column T - holdout + 1 and score it when holdout > 0")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("bound", parents=[common, net, panel], help="error-bound report")
    p.add_argument("--model", required=True, help="order or model JSON")
    p.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--true-theta", action="store_true",
                   help="treat the model's theta as the truth for the deterministic bound")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("study", parents=[common], help="Monte Carlo studies")
    p.add_argument("--config", help="JSON with RecoveryConfig or BoundCheckConfig fields")
    p.add_argument("--kind", choices=("recovery", "bound"), default="recovery")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("election", parents=[common], help="election analysis bundle")
    p.add_argument("--config", help="pipeline JSON config (defaults use the bundled fixtures)")
    p.set_defaults(func=cmd_election)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args.func(args)
    except (ValueError, FileNotFoundError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
