"""Dynamic group detection by temporal groupness-graph clustering."""

__version__ = "0.1.0"

from .clustering import (  # noqa: E402
    ModularityParams,
    Partition,
    brute_force_optimal,
    cnm_greedy,
    label_propagation,
    louvain,
    modularity,
)
from .evaluation import EvalConfig, EvalReport, evaluate_dynamic, evaluate_static, overlap_ratio  # noqa: E402
from .graph import (  # noqa: E402
    NodeId,
    TemporalGroupnessGraph,
    WeightedGraph,
    aggregate_static_graph,
    build_framewise,
    knn_pairs,
    link_temporal,
)
from .groupness import (  # noqa: E402
    HeadWeights,
    PairFeatures,
    PairObservation,
    extract_pair_features,
    ingest_scores,
    score_pair,
    train_head,
)
from .groups import DynamicGroups, StaticGroups, dynamic_to_static, partition_to_dynamic  # noqa: E402
from .scenario import GroupEvent, Scenario, SimConfig, corrupt_tracks, simulate  # noqa: E402
