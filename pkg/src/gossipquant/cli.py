"""Command-line front end: experiment subcommands writing CSV + figures.

Every subcommand is deterministic given its config (including the seed):
rerunning with the same inputs produces byte-identical CSV output.  A nonzero
exit code signals an invariant violation or invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import theory
from .consensus import ALGORITHMS
from .graph import (
    Graph,
    build_topology,
    complete_graph,
    cycle_graph,
    edge_probabilities,
    sample_edge_stream,
    spectral_summary,
)
from .ranktrim import TrimInterval, true_ranks
from .harness import (
    ExperimentConfig,
    exact_quantile,
    experiment_data,
    run_depth_experiment,
    run_experiment,
    run_sync_compare,
    run_trim_experiment,
    substream,
)
from .metrics import write_curves_csv, write_rows_csv, write_summary_csv
from .objectives import pinball_family
from .plotting import plot_bound_check, plot_series
from .regress import generate_regression_problem, oracle_baselines, run_trimmed_gd
from .theory import bernstein_bound, empirical_deviation, hoeffding_bound, verify_gap_identity


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _write_run_json(outdir: Path, payload: dict) -> None:
    with open(outdir / "run.json", "w") as fh:
        json.dump(_jsonable(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _figure_paths(outdir: Path, stem: str, svg: bool) -> list[Path]:
    paths = [outdir / f"{stem}.png"]
    if svg:
        paths.append(outdir / f"{stem}.svg")
    return paths


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _experiment_config(defaults: ExperimentConfig, args) -> ExperimentConfig:
    payload = defaults.to_dict()
    payload.update(_load_config_file(args.config))
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.budget is not None:
        payload["budget"] = args.budget
    if args.trials is not None:
        payload["trials"] = args.trials
    return ExperimentConfig.from_dict(payload)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file overriding the defaults")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--budget", type=int, default=None)
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--svg", action="store_true", help="also render figures as SVG")


def _outdir(args, name: str) -> Path:
    out = Path(args.out) if args.out else Path("out") / name
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    defaults = ExperimentConfig()
    cfg = _experiment_config(defaults, args)
    result = run_experiment(cfg)
    outdir = _outdir(args, "simulate")
    write_curves_csv(outdir / "curves.csv", {ALGORITHMS[k].label: v for k, v in result.per_trial.items()})
    write_summary_csv(outdir / "summary.csv", result.aggregates)
    for path in _figure_paths(outdir, "figure", args.svg):
        plot_series(result.aggregates, path, title="Consensus error vs activations")
    _write_run_json(outdir, {"config": cfg.to_dict(), "truth": result.truth, "info": result.info})
    for series in result.aggregates:
        print(f"{series.label}: final mean error {series.final_mean:.6g}"
              + (" [diverged]" if series.diverged else ""))
    return 0


def cmd_geomed(args) -> int:
    defaults = ExperimentConfig(
        objective={"kind": "geomedian"},
        data={"kind": "contaminated_gaussian_2d", "contamination": 0.3},
        algorithms=("lite_admm", "dapd", "async_admm"),
        budget=100_000,
    )
    cfg = _experiment_config(defaults, args)
    result = run_experiment(cfg)
    outdir = _outdir(args, "geomed")
    write_curves_csv(outdir / "curves.csv", {ALGORITHMS[k].label: v for k, v in result.per_trial.items()})
    write_summary_csv(outdir / "summary.csv", result.aggregates)
    for path in _figure_paths(outdir, "figure", args.svg):
        plot_series(result.aggregates, path, title="Geometric-median error vs activations")
    _write_run_json(outdir, {"config": cfg.to_dict(), "truth": result.truth, "info": result.info})
    for series in result.aggregates:
        print(f"{series.label}: final mean error {series.final_mean:.6g}")
    return 0


def cmd_trim(args) -> int:
    defaults = ExperimentConfig()
    cfg = _experiment_config(defaults, args)
    result = run_trim_experiment(cfg)
    outdir = _outdir(args, "trim")
    write_summary_csv(outdir / "summary.csv", result.aggregates)
    write_summary_csv(outdir / "weights.csv", result.weight_aggregates)
    write_curves_csv(outdir / "curves.csv", result.per_trial)
    hline = {"corrupted mean": result.corrupted_error}
    for path in _figure_paths(outdir, "figure", args.svg):
        plot_series(result.aggregates, path, title="Trimmed-mean error vs activations", hlines=hline)
    for path in _figure_paths(outdir, "weights", args.svg):
        plot_series(result.weight_aggregates, path, title="Trimming-weight error", logy=False)
    _write_run_json(outdir, {
        "config": cfg.to_dict(),
        "info": result.info,
        "final_weight_mae": result.final_weight_mae,
    })
    for series in result.aggregates:
        print(f"{series.label}: final mean error {series.final_mean:.6g} "
              f"(corrupted mean error {result.corrupted_error:.6g})")
    zero = sum(1 for v in result.final_weight_mae["quantile"] if v == 0.0)
    print(f"quantile weights exactly correct at the end in {zero}/{cfg.trials} trials")
    return 0


def cmd_depth(args) -> int:
    defaults = ExperimentConfig(
        objective={"kind": "quantile", "alpha": 0.31},
        data={"kind": "contaminated_gaussian_2d", "contamination": 0.2},
        trials=5,
        budget=100_000,
        trim_alpha=0.31,
    )
    cfg = _experiment_config(defaults, args)
    result = run_depth_experiment(cfg)
    outdir = _outdir(args, "depth")
    write_summary_csv(outdir / "summary.csv", result.aggregates)
    write_curves_csv(outdir / "curves.csv", result.per_trial)
    for path in _figure_paths(outdir, "figure", args.svg):
        plot_series(result.aggregates, path, title="Depth estimation and trimming")
    _write_run_json(outdir, {"config": cfg.to_dict(), "info": result.info})
    for series in result.aggregates:
        print(f"{series.label}: final mean error {series.final_mean:.6g}")
    return 0


def cmd_spectral(args) -> int:
    payload = _load_config_file(args.config)
    max_n = int(payload.get("max_n", 5))
    seed = args.seed if args.seed is not None else int(payload.get("seed", 0))
    outdir = _outdir(args, "spectral")
    rows = []
    worst = 0.0
    for n in range(2, max_n + 1):
        for graph, name in _connected_graphs(n):
            gap, c, agree = verify_gap_identity(graph)
            worst = max(worst, abs(gap - c))
            rows.append((name, n, graph.num_edges, gap, c, abs(gap - c), agree))
    for name, graph in (("cycle-6", cycle_graph(6)),
                        ("complete-5", complete_graph(5)),
                        ("geometric-6", build_topology("geometric", 6, seed=seed, radius=0.7))):
        if graph.n <= theory.MAX_CHAIN_NODES:
            gap, c, agree = verify_gap_identity(graph)
            worst = max(worst, abs(gap - c))
            rows.append((name, graph.n, graph.num_edges, gap, c, abs(gap - c), agree))
    write_rows_csv(outdir / "spectral.csv",
                   ["graph", "n", "edges", "chain_gap", "laplacian_gap", "abs_diff", "agree"],
                   rows)
    for path in _figure_paths(outdir, "figure", args.svg):
        _plot_gap_identity(rows, path)
    _write_run_json(outdir, {"max_n": max_n, "graphs": len(rows), "worst_abs_diff": worst})
    agree_all = all(r[-1] for r in rows)
    print(f"gap identity on {len(rows)} graphs: worst |difference| = {worst:.3e}, "
          f"{'all agree' if agree_all else 'DISAGREEMENT FOUND'}")
    if not agree_all:
        return 1
    return 0


def _connected_graphs(n: int):
    """All labeled connected graphs on n nodes (edge subsets of K_n)."""
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for bits in range(1, 1 << len(pairs)):
        edges = tuple(pairs[b] for b in range(len(pairs)) if bits >> b & 1)
        try:
            graph = Graph(n=n, edges=edges)
        except Exception:
            continue
        yield graph, f"n{n}-{bits:0{len(pairs)}b}"


def _plot_gap_identity(rows, path) -> None:
    import matplotlib.pyplot as plt

    chain = [r[3] for r in rows]
    laplacian = [r[4] for r in rows]
    fig, ax = plt.subplots(figsize=(4.8, 4.2))
    ax.scatter(laplacian, chain, s=12, alpha=0.6)
    lim = (0.0, max(max(chain), max(laplacian)) * 1.05)
    ax.plot(lim, lim, "k--", linewidth=1.0)
    ax.set_xlabel("weighted-Laplacian gap")
    ax.set_ylabel("interchange-chain gap")
    ax.set_title("Spectral gap identity")
    ax.grid(True, alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def cmd_bounds(args) -> int:
    payload = _load_config_file(args.config)
    alpha = float(payload.get("alpha", 0.25))
    ts = [int(t) for t in payload.get("ts", (50, 200, 1000))]
    trials = args.trials if args.trials is not None else int(payload.get("trials", 2000))
    seed = args.seed if args.seed is not None else int(payload.get("seed", 7))
    outdir = _outdir(args, "bounds")
    graphs = {"complete-4": complete_graph(4), "cycle-5": cycle_graph(5)}
    rows = []
    all_ok = True
    for gname, graph in graphs.items():
        dist = edge_probabilities(graph)
        data = substream(seed, 11).permutation(np.arange(1.0, graph.n + 1.0))
        ranks = true_ranks(data)
        interval = TrimInterval.for_sample(graph.n, alpha)
        gamma = np.minimum(np.abs(ranks - interval.b1), np.abs(ranks - interval.b2))
        c = spectral_summary(graph, dist).gap
        rprime = (ranks - 1.0) / graph.n
        freqs = empirical_deviation(graph, data, alpha, ts, trials=trials, seed=seed, dist=dist)
        for t in ts:
            freq, half = freqs[t]
            for k in range(graph.n):
                hoeff = hoeffding_bound(c, t, float(gamma[k]), graph.n)
                bern = bernstein_bound(c, t, float(gamma[k]), float(rprime[k] * (1 - rprime[k])), graph.n)
                ok = bool(freq[k] <= hoeff + half[k] and freq[k] <= bern + half[k])
                all_ok = all_ok and ok
                rows.append({
                    "graph": gname, "t": t, "node": k,
                    "frequency": float(freq[k]), "ci_half_width": float(half[k]),
                    "hoeffding": hoeff, "bernstein": bern, "satisfied": ok,
                })
    write_rows_csv(outdir / "bounds.csv",
                   ["graph", "t", "node", "frequency", "ci_half_width", "hoeffding", "bernstein", "satisfied"],
                   [tuple(r[k] for k in ("graph", "t", "node", "frequency", "ci_half_width",
                                         "hoeffding", "bernstein", "satisfied")) for r in rows])
    for path in _figure_paths(outdir, "figure", args.svg):
        plot_bound_check(rows, path, title="Deviation frequency vs bound")
    _write_run_json(outdir, {"alpha": alpha, "ts": ts, "trials": trials, "seed": seed,
                             "all_satisfied": all_ok})
    print(f"concentration bounds satisfied on {sum(r['satisfied'] for r in rows)}/{len(rows)} checks")
    return 0 if all_ok else 1


def cmd_regress(args) -> int:
    payload = _load_config_file(args.config)
    n = int(payload.get("n", 101))
    p = float(payload.get("p", 3.0))
    alpha = float(payload.get("alpha", 0.2))
    rho = float(payload.get("rho", 0.05))
    budget = args.budget if args.budget is not None else int(payload.get("budget", 200_000))
    seed = args.seed if args.seed is not None else int(payload.get("seed", 110))
    outdir = _outdir(args, "regress")
    graph = build_topology("geometric", n, seed=substream(seed, 0), target_edges=5 * n)
    problem = generate_regression_problem(n, substream(seed, 1))
    stream = sample_edge_stream(edge_probabilities(graph), budget, substream(seed, 2))
    results = {}
    for rule in ("rank", "quantile", "oracle"):
        results[rule] = run_trimmed_gd(problem, graph, rule, rho=rho, budget=budget,
                                       p=p, alpha=alpha, edge_stream=stream)
    baselines = oracle_baselines(problem)
    base_err = {name: float(np.linalg.norm(theta - problem.theta_true))
                for name, theta in baselines.items()}
    rows = []
    for rule, res in results.items():
        for act, err in zip(res.series.activations, res.series.mean):
            rows.append((res.series.label, int(act), err))
    write_rows_csv(outdir / "regress.csv", ["method", "activation", "error"], rows)
    for path in _figure_paths(outdir, "figure", args.svg):
        plot_series([res.series for res in results.values()], path,
                    title=f"Trimmed gradient descent (p={p:g})",
                    hlines={"corrupted LS": base_err["CorruptedLeastSquares"]})
    _write_run_json(outdir, {
        "n": n, "p": p, "alpha": alpha, "rho": rho, "budget": budget, "seed": seed,
        "final_errors": {rule: res.series.final_mean for rule, res in results.items()},
        "diverged": {rule: res.diverged for rule, res in results.items()},
        "baseline_errors": base_err,
    })
    for rule, res in results.items():
        print(f"{res.series.label}: final error {res.series.final_mean:.6g}"
              + (" [diverged]" if res.diverged else ""))
    for name, err in base_err.items():
        print(f"{name}: error {err:.6g}")
    return 0


def cmd_sync_compare(args) -> int:
    defaults = ExperimentConfig()
    cfg = _experiment_config(defaults, args)
    result = run_sync_compare(cfg)
    outdir = _outdir(args, "sync-compare")
    rows = []
    for idx, uses in enumerate(result.graph_uses.tolist()):
        rows.append((uses, result.async_aggregate.mean[idx], result.async_aggregate.std[idx],
                     result.sync_aggregate.mean[idx], result.sync_aggregate.std[idx]))
    write_rows_csv(outdir / "compare.csv",
                   ["graph_uses", "async_mean", "async_std", "sync_mean", "sync_std"], rows)

    # small instrumented run so the diagnostic trace ships with the report
    values, _ = experiment_data(cfg)
    diag_values = values[:11]
    diag = theory.run_sync_diagnostics(build_topology("cycle", 11), pinball_family(diag_values, 0.5),
                                       rho=0.5, rounds=2000, x_star=exact_quantile(diag_values, 0.5),
                                       stop_residual=1e-10, stop_gap=1e-10)
    theory.write_diagnostics_csv(outdir / "diagnostics.csv", diag)

    sync_plot = result.sync_aggregate
    async_plot = result.async_aggregate
    async_plot.activations = result.graph_uses
    for path in _figure_paths(outdir, "figure", args.svg):
        plot_series([async_plot, sync_plot], path,
                    title="Asynchronous vs synchronous (per full graph use)",
                    xlabel="full graph uses")
    _write_run_json(outdir, {"config": cfg.to_dict(), "info": result.info,
                             "final_async": result.async_aggregate.final_mean,
                             "final_sync": result.sync_aggregate.final_mean})
    print(f"final error per graph use: async {result.async_aggregate.final_mean:.6g}, "
          f"sync {result.sync_aggregate.final_mean:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gossipquant",
        description="Decentralized quantile estimation and robust trimming over gossip networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "simulate": (cmd_simulate, "compare consensus algorithms on quantile/median estimation"),
        "trim": (cmd_trim, "trimmed-mean estimation with gossip weight rules"),
        "depth": (cmd_depth, "depth estimation, its quantile, and depth-trimmed means"),
        "geomed": (cmd_geomed, "geometric-median estimation on 2-D data"),
        "spectral": (cmd_spectral, "interchange-chain spectral gap identity report"),
        "bounds": (cmd_bounds, "concentration bounds vs Monte-Carlo deviation frequencies"),
        "regress": (cmd_regress, "robust regression via gradient trimming"),
        "sync-compare": (cmd_sync_compare, "asynchronous vs synchronous per full graph use"),
    }
    for name, (handler, help_text) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        _add_common_flags(p)
        p.set_defaults(handler=handler)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except Exception as exc:  # invariant violations exit nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
