"""Mixed-membership community generation and spectral recovery for
tripartite tagging hypergraphs.

The package generates synthetic (user, tag, resource) hypergraphs from a
mixed-membership model and recovers the community weights of every node in
two stages: a matricization rank test finds resource nodes that belong to a
single community, and a whitened 3-star count tensor over those nodes is
decomposed by a robust power iteration to reveal the memberships.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractViolationError,
    DimensionError,
    FolkcommError,
    InfeasibleThresholdsError,
    NoPureNodesError,
    NumericalError,
    RankDeficiencyError,
)
from .linalg import (
    MatricizationShape,
    khatri_rao,
    kronecker,
    ksvd,
    mat,
    projector,
    top_two_singvals,
    vec,
)
from .model import (
    ConnectivityPair,
    HypergraphSample,
    MembershipMatrix,
    ModelParams,
    PartitionSpec,
    TensorBlocks,
    make_partition,
)
from .generate import (
    expected_adjacency,
    expected_three_star,
    hyperedge_prob,
    sample_hypergraph_collapsed,
    sample_hypergraph_latent,
    sample_memberships,
)
from .puredetect import (
    RankTestConfig,
    build_projection,
    detect_pure_nodes,
    heuristic_thresholds,
    oracle_thresholds,
    rank_test_node,
)
from .tensordecomp import (
    EigenResult,
    WhiteningBundle,
    build_whitening,
    reconstruct_memberships,
    tensor_eigen,
    three_star_tensor,
    threshold_memberships,
)
from .evaluate import (
    RecoveryReport,
    align_columns,
    assumption_report,
    l1_max_row_error,
    l2_max_row_error,
    sweep,
    theoretical_error_bound,
)
from .pipeline import RunOptions, run_oracle, run_sweep, run_trial
