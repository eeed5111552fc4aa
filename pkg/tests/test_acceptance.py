"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line with its headline numbers (run pytest with
-s to see them) and enforces the stated tolerances and runtime budgets.
Criteria 5-7 and 11 share the default network protocol: a 101-node geometric
graph with 507 edges, 80/20 contaminated Gaussian observations, per-trial
step sizes drawn uniformly from [0.1, 1.0], and 20 trials.
"""

import json
import math
import time

import numpy as np
import pytest

from gossipquant import consensus
from gossipquant.cli import main as cli_main
from gossipquant.graph import (
    Graph,
    build_topology,
    complete_graph,
    cycle_graph,
    edge_probabilities,
    sample_edge_stream,
)
from gossipquant.harness import (
    ExperimentConfig,
    contaminated_gaussian,
    exact_median,
    exact_quantile,
    run_experiment,
    run_sync_compare,
    run_trim_experiment,
    substream,
)
from gossipquant.metrics import aggregate_series, checkpoint_grid
from gossipquant.objectives import EuclideanDistanceObjective, PinballObjective, pinball_family
from gossipquant.ranktrim import DepthQuantileState, TrimInterval, depth_quantile_step, exact_l2_depths, true_ranks
from gossipquant.regress import generate_regression_problem, oracle_baselines, run_trimmed_gd
from gossipquant.theory import (
    empirical_deviation,
    hoeffding_bound,
    run_sync_diagnostics,
    verify_gap_identity,
)

from oracles import euclidean_prox_oracle, pinball_prox_oracle

MASTER_SEED = 20240


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"[criterion {criterion:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {criterion} failed: {detail}"


# ---------------------------------------------------------------------------
# Shared default protocol (criteria 5, 6, 7, 11)
# ---------------------------------------------------------------------------

def default_config(**overrides) -> ExperimentConfig:
    base = dict(
        topology={"kind": "geometric", "n": 101, "target_edges": 507},
        objective={"kind": "quantile", "alpha": 0.5},
        data={"kind": "contaminated_gaussian", "contamination": 0.2},
        algorithms=("lite_admm", "dapd", "async_admm"),
        trials=20,
        budget=200_000,
        rho={"kind": "uniform", "low": 0.1, "high": 1.0},
        seed=MASTER_SEED,
        eval_points=40,
    )
    base.update(overrides)
    return ExperimentConfig.from_dict(base)


@pytest.fixture(scope="module")
def fig1_runs():
    """Comparison runs on the default protocol, with checkpoints at 1e5/2e5."""
    cfg = default_config()
    from gossipquant.harness import (
        build_experiment_graph,
        draw_rho,
        experiment_data,
        trial_assignment,
        trial_edge_stream,
    )
    graph = build_experiment_graph(cfg)
    dist = edge_probabilities(graph)
    values, mask = experiment_data(cfg)
    truth = exact_median(values)
    grid = np.unique(np.concatenate([checkpoint_grid(cfg.budget, cfg.eval_points), [100_000]]))
    per_algo = {name: [] for name in ("lite_admm", "dapd", "async_admm")}
    per_beta_edge = {beta: [] for beta in (0.5, 1.0, 2.0)}
    t0 = time.monotonic()
    for trial in range(cfg.trials):
        node_values = values[trial_assignment(cfg, trial)]
        objectives = pinball_family(node_values, 0.5)
        rho = draw_rho(cfg, trial)
        stream = trial_edge_stream(cfg, trial, dist)
        for name in per_algo:
            per_algo[name].append(consensus.run(
                name, graph, objectives, truth, budget=cfg.budget, rho=rho,
                edge_stream=stream, checkpoints=grid))
        for beta in per_beta_edge:
            per_beta_edge[beta].append(consensus.run(
                "edge_admm", graph, objectives, truth, budget=100_000, rho=beta,
                edge_stream=stream, checkpoints=grid[grid <= 100_000]))
    return {
        "config": cfg,
        "grid": grid,
        "elapsed": time.monotonic() - t0,
        "aggregates": {name: aggregate_series(runs) for name, runs in per_algo.items()},
        "edge_aggregates": {beta: aggregate_series(runs) for beta, runs in per_beta_edge.items()},
    }


class TestCriterion1:
    def test_prox_oracle_equivalence(self):
        start = time.monotonic()
        rng = np.random.default_rng(MASTER_SEED)
        worst_pinball = 0.0
        for _ in range(1000):
            a = rng.uniform(-2, 2)
            alpha = rng.uniform(0.1, 0.9)
            gamma = rng.uniform(0.05, 1.5)
            beta = alpha / (1 - alpha)
            z = a + gamma * (1 + beta) * rng.uniform(-3, 3)
            got = PinballObjective(a, alpha).prox(z, gamma)
            worst_pinball = max(worst_pinball, abs(got - pinball_prox_oracle(a, alpha, gamma, z)))
        worst_euclid = 0.0
        for _ in range(200):
            d = int(rng.integers(2, 4))
            a = rng.normal(size=d)
            v = rng.normal(size=d) * 2
            lam = rng.uniform(0.1, 2.0)
            got = EuclideanDistanceObjective(a).prox(v, lam)
            worst_euclid = max(worst_euclid, float(np.linalg.norm(got - euclidean_prox_oracle(a, v, lam))))
        elapsed = time.monotonic() - start
        ok = worst_pinball <= 1e-8 and worst_euclid <= 1e-6 and elapsed < 10.0
        report(1, ok, f"pinball dev {worst_pinball:.2e} (<=1e-8), euclidean dev "
                      f"{worst_euclid:.2e} (<=1e-6), {elapsed:.1f}s (<10s)")


class TestCriterion2:
    def test_synchronous_theory_suite(self):
        start = time.monotonic()
        worst_slack = -math.inf
        worst_round = 0
        all_ok = True
        for kind in ("geometric", "cycle"):
            for n in (5, 11, 21):
                if kind == "geometric":
                    target = min(2 * n, n * (n - 1) // 2 - 1)
                    g = build_topology("geometric", n, seed=substream(MASTER_SEED, 50, n),
                                       target_edges=target)
                else:
                    g = cycle_graph(n)
                values, _ = contaminated_gaussian(n, 0.2, substream(MASTER_SEED, 51, n))
                objs = pinball_family(values, 0.5)
                x_star = exact_median(values)
                fstar = sum(o.value(x_star) for o in objs)
                for rho in (0.1, 0.5, 1.0):
                    diag = run_sync_diagnostics(g, objs, rho=rho, rounds=10_000, x_star=x_star,
                                                stop_residual=1e-4, stop_gap=1e-4)
                    worst_slack = max(worst_slack, diag.max_decrement_violation)
                    worst_round = max(worst_round, diag.rounds_run)
                    converged = (math.sqrt(diag.residual_sq[-1]) < 1e-4
                                 and diag.gap[-1] < 1e-4 * (1 + abs(fstar))
                                 and diag.rounds_run <= 10_000)
                    all_ok = all_ok and converged and diag.cumulative_residual_bound_ok
        elapsed = time.monotonic() - start
        ok = all_ok and worst_slack <= 1e-9 and elapsed < 120.0
        report(2, ok, f"max decrement slack {worst_slack:.2e} (<=1e-9), slowest run "
                      f"{worst_round} rounds (<=1e4), {elapsed:.1f}s (<2min)")


class TestCriterion3:
    @staticmethod
    def _connected_graphs(n):
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        for bits in range(1, 1 << len(pairs)):
            edges = tuple(pairs[b] for b in range(len(pairs)) if bits >> b & 1)
            try:
                yield Graph(n=n, edges=edges)
            except Exception:
                continue

    def test_gap_identity_exhaustive(self):
        start = time.monotonic()
        worst = 0.0
        count = 0
        all_agree = True
        for n in (2, 3, 4, 5):
            for g in self._connected_graphs(n):
                gap, c, agree = verify_gap_identity(g, tol=1e-10)
                worst = max(worst, abs(gap - c))
                all_agree = all_agree and agree
                count += 1
        gap_k3, c_k3, _ = verify_gap_identity(complete_graph(3))
        exact_k3 = abs(gap_k3 - 1.0) <= 1e-10 and abs(c_k3 - 1.0) <= 1e-10
        elapsed = time.monotonic() - start
        ok = all_agree and exact_k3 and elapsed < 60.0
        report(3, ok, f"{count} connected graphs on n<=5, worst |gap - c| = {worst:.2e} "
                      f"(<=1e-10), triangle gap exactly 1, {elapsed:.1f}s (<1min)")


class TestCriterion4:
    def test_concentration_bounds(self):
        start = time.monotonic()
        trials = 3000
        alpha = 0.25
        ts = [50, 200, 1000]
        margin = math.inf
        all_ok = True
        for g in (complete_graph(4), cycle_graph(5)):
            dist = edge_probabilities(g)
            data = substream(MASTER_SEED, 60, g.n).permutation(np.arange(1.0, g.n + 1.0))
            ranks = true_ranks(data)
            interval = TrimInterval.for_sample(g.n, alpha)
            gamma = np.minimum(np.abs(ranks - interval.b1), np.abs(ranks - interval.b2))
            from gossipquant.graph import spectral_summary
            c = spectral_summary(g, dist).gap
            freqs = empirical_deviation(g, data, alpha, ts, trials=trials,
                                        seed=MASTER_SEED + g.n, dist=dist)
            for t in ts:
                freq, half = freqs[t]
                for k in range(g.n):
                    bound = hoeffding_bound(c, t, float(gamma[k]), g.n)
                    all_ok = all_ok and freq[k] <= bound + half[k]
                    margin = min(margin, bound + half[k] - freq[k])
        elapsed = time.monotonic() - start
        ok = all_ok and elapsed < 120.0
        report(4, ok, f"deviation frequencies within bounds on K4 and C5 at t={ts}, "
                      f"min slack {margin:.3g}, {trials} trials, {elapsed:.1f}s (<2min)")


class TestCriterion5:
    def test_desk_scale_comparison(self, fig1_runs):
        agg = fig1_runs["aggregates"]
        lite = agg["lite_admm"]
        initial = lite.mean[0]
        final_lite = lite.final_mean
        final_dapd = agg["dapd"].final_mean
        final_async = agg["async_admm"].final_mean
        elapsed = fig1_runs["elapsed"]
        ok = (final_lite <= final_dapd + 1e-12 and final_lite <= final_async + 1e-12
              and final_lite <= 0.1 * initial and elapsed < 300.0)
        report(5, ok, f"final MAE lite {final_lite:.3g} <= dapd {final_dapd:.3g}, "
                      f"async {final_async:.3g}; decay {final_lite / initial:.2%} of initial "
                      f"(<=10%), {elapsed:.0f}s (<5min)")


class TestCriterion6:
    def test_edge_admm_fails_where_lite_converges(self, fig1_runs):
        lite = fig1_runs["aggregates"]["lite_admm"]
        grid = fig1_runs["grid"]
        idx_1e5 = int(np.where(grid == 100_000)[0][0])
        initial = lite.mean[0]
        lite_at_1e5 = lite.mean[idx_1e5]
        stalled = {}
        for beta, agg in fig1_runs["edge_aggregates"].items():
            stalled[beta] = agg.final_mean
        ok = (all(v > 0.5 * initial for v in stalled.values())
              and lite_at_1e5 < 0.1 * initial)
        detail = ", ".join(f"beta={b:g}: {v / initial:.0%}" for b, v in sorted(stalled.items()))
        report(6, ok, f"edge-ADMM MAE after 1e5 stays above 50% of initial ({detail}); "
                      f"lite at 1e5 is {lite_at_1e5 / initial:.2%} of initial (<10%)")


class TestCriterion7:
    def test_trimming_protocol(self):
        cfg = default_config(trim_alpha=0.3)
        result = run_trim_experiment(cfg)
        zero_trials = sum(1 for v in result.final_weight_mae["quantile"] if v == 0.0)
        finals = {s.label: s.final_mean for s in result.aggregates}
        ok = (zero_trials >= 18
              and finals["TrimmedMeanQuantile"] < result.corrupted_error
              and finals["Median"] < result.corrupted_error)
        report(7, ok, f"quantile weights exactly correct in {zero_trials}/20 trials (>=18); "
                      f"trimmed-mean err {finals['TrimmedMeanQuantile']:.3g} and median err "
                      f"{finals['Median']:.3g} below corrupted-mean err {result.corrupted_error:.3g}")


class TestCriterion8:
    def test_depth_estimation_and_quantile(self):
        n, alpha = 50, 0.25
        rng = substream(MASTER_SEED, 70)
        points = rng.normal(size=(n, 2))
        graph = build_topology("geometric", n, seed=substream(MASTER_SEED, 71), target_edges=150)
        stream = sample_edge_stream(edge_probabilities(graph), 100_000, substream(MASTER_SEED, 72))
        joint = DepthQuantileState.init(points, alpha)
        for e in stream.tolist():
            depth_quantile_step(joint, e, graph, rho=0.5)
        exact = exact_l2_depths(points)
        depth_err = float(np.max(np.abs(joint.depth.depths() - exact)))
        target = exact_quantile(exact, alpha)
        quant_err = float(np.abs(joint.x - target).mean())
        ok = depth_err < 1e-2 and quant_err < 5e-2
        report(8, ok, f"max depth error {depth_err:.2e} (<1e-2) after 1e5 activations; "
                      f"joint quantile error {quant_err:.2e} (<5e-2)")


class TestCriterion9:
    def test_geometric_median_comparison(self):
        cfg = default_config(
            objective={"kind": "geomedian"},
            data={"kind": "contaminated_gaussian_2d", "contamination": 0.3},
            budget=100_000,
        )
        result = run_experiment(cfg)
        finals = {s.label: s.final_mean for s in result.aggregates}
        ok = (finals["LiteADMM"] <= finals["DAPD"] + 1e-12
              and finals["LiteADMM"] <= finals["AsyncADMM"] + 1e-12
              and finals["LiteADMM"] <= 0.5)
        report(9, ok, f"final distance to iteratively-reweighted reference: lite "
                      f"{finals['LiteADMM']:.3g} (<=0.5), dapd {finals['DAPD']:.3g}, "
                      f"async {finals['AsyncADMM']:.3g}")


class TestCriterion10:
    def test_robust_regression(self):
        seed, n, rho, budget = 110, 101, 0.05, 200_000
        graph = build_topology("geometric", n, seed=substream(seed, 0), target_edges=5 * n)
        problem = generate_regression_problem(n, substream(seed, 1))
        stream = sample_edge_stream(edge_probabilities(graph), budget, substream(seed, 2))
        runs = {}
        for rule, p in (("oracle", 3.0), ("rank", 3.0), ("rank", 4.0), ("quantile", 3.0)):
            runs[(rule, p)] = run_trimmed_gd(problem, graph, rule, rho=rho, budget=budget,
                                             p=p, edge_stream=stream)
        base = oracle_baselines(problem)
        base_err = {k: float(np.linalg.norm(v - problem.theta_true)) for k, v in base.items()}
        oracle_final = runs[("oracle", 3.0)].series.final_mean
        rank_final = runs[("rank", 3.0)].series.final_mean
        quant_final = runs[("quantile", 3.0)].series.final_mean
        ok = (runs[("rank", 4.0)].diverged
              and not runs[("rank", 3.0)].diverged
              and not runs[("quantile", 3.0)].diverged
              and rank_final <= 2.0 * oracle_final
              and quant_final <= 2.0 * oracle_final
              and base_err["CorruptedLeastSquares"] >= 5.0 * base_err["OracleRegression"])
        report(10, ok, f"p=4 rank rule diverged; p=3 finals rank {rank_final:.3g}, quantile "
                       f"{quant_final:.3g} within 2x of oracle run {oracle_final:.3g}; corrupted "
                       f"LS {base_err['CorruptedLeastSquares']:.3g} >= 5x oracle "
                       f"{base_err['OracleRegression']:.3g}")


class TestCriterion11:
    def test_async_at_or_below_sync_per_graph_use(self):
        result = run_sync_compare(default_config())
        final_async = result.async_aggregate.final_mean
        final_sync = result.sync_aggregate.final_mean
        ok = final_async <= final_sync + 1e-12
        report(11, ok, f"per full graph use, final MAE async {final_async:.3g} <= "
                       f"sync {final_sync:.3g}")


class TestCriterion12:
    def test_every_subcommand_is_byte_deterministic(self, tmp_path):
        sim_cfg = {
            "topology": {"kind": "geometric", "n": 15, "target_edges": 30},
            "objective": {"kind": "quantile", "alpha": 0.5},
            "data": {"kind": "contaminated_gaussian", "contamination": 0.2},
            "algorithms": ["lite_admm", "dapd"],
            "trials": 2,
            "budget": 2000,
            "seed": 5,
            "eval_points": 8,
        }
        depth_cfg = dict(sim_cfg, objective={"kind": "quantile", "alpha": 0.27},
                         data={"kind": "contaminated_gaussian_2d", "contamination": 0.2},
                         trim_alpha=0.27, trials=1, budget=1500,
                         topology={"kind": "geometric", "n": 16, "target_edges": 36})
        geo_cfg = dict(sim_cfg, objective={"kind": "geomedian"},
                       data={"kind": "contaminated_gaussian_2d", "contamination": 0.3},
                       algorithms=["lite_admm"], trials=1, budget=1500)
        plans = {
            "simulate": (sim_cfg, ["curves.csv", "summary.csv"]),
            "trim": (sim_cfg, ["curves.csv", "summary.csv", "weights.csv"]),
            "depth": (depth_cfg, ["curves.csv", "summary.csv"]),
            "geomed": (geo_cfg, ["curves.csv", "summary.csv"]),
            "spectral": ({"max_n": 4}, ["spectral.csv"]),
            "bounds": ({"ts": [20, 50], "trials": 200, "alpha": 0.25}, ["bounds.csv"]),
            "regress": ({"n": 101, "p": 3.0, "budget": 8000, "seed": 110}, ["regress.csv"]),
            "sync-compare": (dict(sim_cfg, budget=4000), ["compare.csv", "diagnostics.csv"]),
        }
        mismatches = []
        for command, (cfg, files) in plans.items():
            cfg_path = tmp_path / f"{command}.json"
            cfg_path.write_text(json.dumps(cfg))
            outs = []
            for attempt in ("a", "b"):
                out = tmp_path / f"{command}-{attempt}"
                code = cli_main([command, "--config", str(cfg_path), "--out", str(out)])
                assert code == 0, f"{command} exited {code}"
                outs.append(out)
            for name in files:
                if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
                    mismatches.append(f"{command}/{name}")
        ok = not mismatches
        report(12, ok, "byte-identical CSV across reruns for all 8 subcommands"
                       + ("" if ok else f"; mismatches: {mismatches}"))
