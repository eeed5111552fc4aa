import math

import numpy as np
import pytest

from gossipquant.consensus import LiteAdmmState, SyncAdmmState, lite_admm_step
from gossipquant.graph import Graph, complete_graph, cycle_graph, edge_probabilities, geometric_graph
from gossipquant.objectives import pinball_family
from gossipquant.theory import (
    SaddleError,
    aggregate_dual_pairing,
    bernstein_bound,
    build_interchange_chain,
    chain_spectral_gap,
    empirical_deviation,
    hoeffding_bound,
    lyapunov,
    objective_gap,
    residual_norm,
    run_sync_diagnostics,
    solve_saddle_dual,
    verify_gap_identity,
    write_diagnostics_csv,
)

from oracles import binomial_ci_half_width


def path_graph(n):
    return Graph(n=n, edges=tuple((k, k + 1) for k in range(n - 1)))


class TestSaddleDuals:
    def test_two_node_hand_solve(self):
        g = path_graph(2)
        objs = pinball_family([0.0, 2.0], 0.5)
        saddle = solve_saddle_dual(g, objs, 0.0)
        assert np.allclose(saddle.node_slopes, [1.0, -1.0])
        assert np.allclose(saddle.y, [[1.0, -1.0]])

    def test_star_leaf_duals_equal_leaf_slopes(self):
        # center holds the optimum anchor; each leaf has a single edge
        edges = tuple((0, k) for k in range(1, 5))
        g = Graph(n=5, edges=edges)
        objs = pinball_family([1.0, 0.0, 0.5, 2.0, 3.0], 0.5)
        saddle = solve_saddle_dual(g, objs, 1.0)
        for e, (i, j) in enumerate(g.edges):
            leaf = j
            assert saddle.y[e, 1] == pytest.approx(saddle.node_slopes[leaf])

    def test_random_tree_node_sums(self):
        rng = np.random.default_rng(1)
        edges = ((0, 1), (1, 2), (1, 3), (3, 4), (3, 5))
        g = Graph(n=6, edges=edges)
        data = np.sort(rng.normal(size=6))
        objs = pinball_family(data, 0.5)
        x_star = np.sort(data)[3]  # ceil(0.5 * 6) = 3rd order stat... unique for alpha below
        objs = pinball_family(data, 0.45)
        x_star = np.sort(data)[math.ceil(0.45 * 6) - 1]
        saddle = solve_saddle_dual(g, objs, x_star)
        sums = np.zeros(6)
        for e, (i, j) in enumerate(g.edges):
            sums[i] += saddle.y[e, 0]
            sums[j] += saddle.y[e, 1]
        assert np.max(np.abs(sums - saddle.node_slopes)) < 1e-10
        assert np.max(np.abs(saddle.y[:, 0] + saddle.y[:, 1])) == 0.0

    def test_non_optimal_point_rejected(self):
        g = path_graph(3)
        objs = pinball_family([0.0, 1.0, 2.0], 0.5)
        with pytest.raises(SaddleError):
            solve_saddle_dual(g, objs, 2.0)  # max point is not the median


class TestLyapunov:
    def _instance(self, n=5, rho=0.5, alpha=0.5, seed=0):
        rng = np.random.default_rng(seed)
        data = rng.normal(10, 3, size=n)
        data[-1] += 25.0
        g = cycle_graph(n)
        objs = pinball_family(data, alpha)
        x_star = float(np.sort(data)[math.ceil(alpha * n) - 1])
        return g, objs, x_star, rho

    def test_zero_at_saddle(self):
        g, objs, x_star, rho = self._instance()
        saddle = solve_saddle_dual(g, objs, x_star)
        state = SyncAdmmState(x=np.full(g.n, x_star), mu=np.zeros(g.n), y=saddle.y.copy())
        assert lyapunov(state, saddle, rho, g) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("rho", [0.1, 0.5, 1.0])
    @pytest.mark.parametrize("n", [2, 3, 5, 11])
    def test_decrement_inequality_every_round(self, n, rho):
        rng = np.random.default_rng(n)
        data = np.sort(rng.normal(0, 2, size=n))
        g = path_graph(n) if n <= 3 else cycle_graph(n)
        alpha = 0.45
        objs = pinball_family(data, alpha)
        x_star = float(np.sort(data)[math.ceil(alpha * n) - 1])
        diag = run_sync_diagnostics(g, objs, rho=rho, rounds=300, x_star=x_star)
        assert diag.max_decrement_violation <= 1e-9
        assert diag.cumulative_residual_bound_ok

    def test_residual_and_gap_vanish(self):
        g, objs, x_star, rho = self._instance(n=11, seed=3)
        diag = run_sync_diagnostics(g, objs, rho=rho, rounds=10_000, x_star=x_star,
                                    stop_residual=1e-6, stop_gap=1e-6)
        assert math.sqrt(diag.residual_sq[-1]) < 1e-6
        fstar = sum(obj.value(x_star) for obj in objs)
        assert diag.gap[-1] < 1e-6 * (1 + abs(fstar))


class TestResidualAndGap:
    def test_residual_zero_at_consensus(self):
        g = complete_graph(4)
        assert residual_norm(np.full(4, 3.3), g) == 0.0

    def test_gap_zero_at_optimum(self):
        objs = pinball_family([0.0, 1.0, 2.0], 0.5)
        assert objective_gap(np.full(3, 1.0), objs, 1.0) == 0.0

    def test_residual_counts_both_endpoints(self):
        g = path_graph(2)
        x = np.array([0.0, 2.0])
        # z = 1, r = (1, -1) stacked -> norm sqrt(2)
        assert residual_norm(x, g) == pytest.approx(math.sqrt(2.0))


class TestDualPairingDiagnostic:
    def test_zero_for_zero_duals(self):
        g = cycle_graph(6)
        x = np.random.default_rng(0).normal(size=6)
        assert aggregate_dual_pairing(x, np.zeros(6), g) == 0.0

    def test_nonnegative(self):
        g = cycle_graph(6)
        rng = np.random.default_rng(1)
        assert aggregate_dual_pairing(rng.normal(size=6), rng.normal(size=6), g) >= 0.0

    def test_decreasing_trend_on_regular_graph(self):
        # on a degree-regular graph the stationary aggregates sum to zero, so
        # the pairing diagnostic heads to zero along the run
        rng = np.random.default_rng(5)
        data = np.sort(rng.normal(10, 3, size=11))
        g = cycle_graph(11)
        objs = pinball_family(data, 0.5)
        dist = edge_probabilities(g)
        state = LiteAdmmState.init(g, objs, 0.8)
        stream = rng.choice(g.num_edges, size=60_000, p=dist.probs)
        trace = []
        for t, e in enumerate(stream.tolist(), 1):
            lite_admm_step(state, e, g, objs, 0.8)
            if t % 5000 == 0:
                trace.append(aggregate_dual_pairing(state.x, state.mu, g))
        assert trace[-1] < 0.05 * max(trace)


class TestInterchangeChain:
    def test_two_node_chain(self):
        g = path_graph(2)
        chain = build_interchange_chain(g)
        assert np.allclose(chain.matrix, [[0.0, 1.0], [1.0, 0.0]])

    def test_triangle_gap_is_one(self):
        chain = build_interchange_chain(complete_graph(3))
        evals = np.sort(np.linalg.eigvalsh(chain.matrix))
        assert evals[-1] == pytest.approx(1.0)
        assert evals[-2] == pytest.approx(0.0, abs=1e-12)  # signed second-largest
        assert evals[0] == pytest.approx(-1.0)  # parity alternation
        assert chain_spectral_gap(chain) == pytest.approx(1.0)

    def test_symmetric_doubly_stochastic(self):
        g = geometric_graph(5, radius=0.8, seed=3)
        chain = build_interchange_chain(g)
        assert np.allclose(chain.matrix, chain.matrix.T)
        assert np.allclose(chain.matrix.sum(axis=1), 1.0)
        assert np.all(np.diag(chain.matrix) == 0.0)

    def test_state_space_cap(self):
        with pytest.raises(ValueError):
            build_interchange_chain(complete_graph(8))

    def test_gap_identity_examples(self):
        gap, c, agree = verify_gap_identity(complete_graph(3))
        assert (gap, c, agree) == (pytest.approx(1.0), pytest.approx(1.0), True)
        gap, c, agree = verify_gap_identity(path_graph(3))
        assert gap == pytest.approx(0.5, abs=1e-12)
        assert agree
        gap, c, agree = verify_gap_identity(complete_graph(4))
        assert agree
        assert gap == pytest.approx(2.0 / 3.0, abs=1e-12)


class TestBounds:
    def test_vacuous_at_zero_deviation(self):
        assert hoeffding_bound(0.5, 100, 0.0, 11) == 2.0

    def test_frozen_value(self):
        # exponent (2 / (2 - 0.5)) * 0.5 * 1e4 * 100 / 101^2 = (2e6/3) / 10201
        expected_exponent = (2.0 / 1.5) * 0.5 * 1e4 * 100.0 / 101**2
        assert expected_exponent == pytest.approx(65.35306996, abs=1e-6)
        assert hoeffding_bound(0.5, 1e4, 10.0, 101) == pytest.approx(2.0 * math.exp(-expected_exponent), rel=1e-12)

    def test_monotone_in_time_and_deviation(self):
        b = [hoeffding_bound(0.4, t, 2.0, 7) for t in (10, 100, 1000)]
        assert b[0] > b[1] > b[2]
        g = [hoeffding_bound(0.4, 100, gamma, 7) for gamma in (0.5, 1.0, 2.0)]
        assert g[0] > g[1] > g[2]

    def test_bernstein_shrinks_with_variance(self):
        loose = bernstein_bound(0.4, 500, 1.5, 0.25, 7)
        tight = bernstein_bound(0.4, 500, 1.5, 0.01, 7)
        assert tight < loose

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            hoeffding_bound(0.0, 10, 1.0, 5)
        with pytest.raises(ValueError):
            bernstein_bound(0.5, 0, 1.0, 0.1, 5)


class TestEmpiricalDeviation:
    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            empirical_deviation(complete_graph(3), [1.0, 2.0, 3.0], 0.25, [10], trials=0)

    def test_long_horizon_frequencies_vanish(self):
        g = complete_graph(3)
        out = empirical_deviation(g, [1.0, 2.0, 3.0], 0.3, [2000], trials=200, seed=0)
        freq, _ = out[2000]
        assert np.all(freq <= 0.05)

    def test_bounded_by_hoeffding_on_triangle(self):
        g = complete_graph(3)
        data = np.array([3.0, 1.0, 2.0])
        alpha = 0.3
        c = 1.0  # triangle chain gap
        out = empirical_deviation(g, data, alpha, [20, 100], trials=1500, seed=1)
        from gossipquant.ranktrim import TrimInterval, true_ranks
        interval = TrimInterval.for_sample(3, alpha)
        ranks = true_ranks(data)
        gamma = np.minimum(np.abs(ranks - interval.b1), np.abs(ranks - interval.b2))
        for t, (freq, half) in out.items():
            for k in range(3):
                assert freq[k] <= hoeffding_bound(c, t, gamma[k], 3) + half[k]
                assert half[k] == pytest.approx(binomial_ci_half_width(freq[k], 1500))

    def test_weight_error_under_the_bound_curve(self):
        # weight disagreement implies a rank deviation past gamma, so the mean
        # absolute weight error sits below the same exponential curve
        from gossipquant.graph import edge_probabilities, spectral_summary
        from gossipquant.ranktrim import GoRankState, TrimInterval, gorank_sync_round, rank_weight, true_ranks
        g = complete_graph(4)
        dist = edge_probabilities(g)
        data = np.array([4.0, 1.0, 3.0, 2.0])
        alpha = 0.25
        interval = TrimInterval.for_sample(4, alpha)
        ranks = true_ranks(data)
        gamma = np.minimum(np.abs(ranks - interval.b1), np.abs(ranks - interval.b2))
        truth = np.array([rank_weight(r, interval) for r in ranks])
        c = spectral_summary(g, dist).gap
        rng = np.random.default_rng(2)
        ts = (60, 240)
        trials = 500
        err = {t: np.zeros(4) for t in ts}
        for _ in range(trials):
            state = GoRankState.init(data)
            state.aux = data[rng.permutation(4)].copy()  # stationary start
            for s in range(1, max(ts) + 1):
                edge = g.edges[rng.choice(g.num_edges, p=dist.probs)]
                gorank_sync_round(state, edge, s)
                if s in ts:
                    weights = np.array([rank_weight(r, interval) for r in state.ranks()])
                    err[s] += np.abs(weights - truth)
        for t in ts:
            mae = err[t] / trials
            for k in range(4):
                ci = binomial_ci_half_width(mae[k], trials)
                assert mae[k] <= hoeffding_bound(c, t, gamma[k], 4) + ci


class TestDiagnosticsCsv:
    def test_columns_and_lengths(self, tmp_path):
        g = cycle_graph(5)
        data = np.array([0.0, 1.0, 2.0, 3.0, 10.0])
        objs = pinball_family(data, 0.5)
        diag = run_sync_diagnostics(g, objs, rho=0.5, rounds=20, x_star=2.0)
        path = tmp_path / "diag.csv"
        write_diagnostics_csv(path, diag)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "round,lyapunov,residual_sq,objective_gap,dual_pairing"
        assert len(lines) == len(diag.lyapunov) + 1
