"""Decentralized quantile estimation and robust trimming over gossip networks.

A simulator library plus CLI covering: gossip topologies and their spectra,
closed-form proximal objectives (pinball and Euclidean distance), six
consensus-optimization algorithms with a uniform run interface, swap-based
rank/depth estimation with adaptive trimming, robust regression via gradient
trimming, and executable checks of the supporting theory (Lyapunov descent,
interchange-chain spectral identity, concentration bounds).
"""

from .graph import (
    EdgeDistribution,
    Graph,
    SpectralSummary,
    build_topology,
    complete_graph,
    cycle_graph,
    edge_probabilities,
    geometric_graph,
    sample_edge,
    sample_edge_stream,
    spectral_summary,
    watts_strogatz_graph,
    weighted_laplacian,
)
from .objectives import (
    EuclideanDistanceObjective,
    PinballObjective,
    euclidean_family,
    pinball_family,
)
from .consensus import (
    ALGORITHMS,
    AsyncAdmmState,
    DapdState,
    EdgeAdmmState,
    LiteAdmmState,
    SubgradState,
    SyncAdmmState,
    async_admm_step,
    dapd_step,
    edge_admm_step,
    lite_admm_step,
    run,
    run_sync,
    subgradient_step,
    sync_step,
)
from .ranktrim import (
    DepthQuantileState,
    GoDepthState,
    GoRankState,
    GoTrimState,
    QuantileTrimRule,
    RankTrimRule,
    TrimInterval,
    depth_quantile_step,
    exact_l2_depths,
    exact_trimmed_mean,
    godepth_step,
    gorank_async_step,
    gorank_sync_round,
    gotrim_step,
    oracle_trim_weights,
    quantile_weight,
    rank_weight,
    true_ranks,
    weight_error,
)
from .theory import (
    InterchangeChain,
    SaddlePoint,
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
)
from .harness import (
    ExperimentConfig,
    exact_median,
    exact_quantile,
    exact_target,
    generate_data,
    geometric_median,
    run_depth_experiment,
    run_experiment,
    run_sync_compare,
    run_trim_experiment,
)
from .metrics import MetricSeries, aggregate_series, checkpoint_grid
from .regress import (
    RegressionProblem,
    generate_regression_problem,
    oracle_baselines,
    run_trimmed_gd,
)

__version__ = "0.1.0"
