"""Structure recovery for discrete latent bipartite graphical models.

Build a model (noisy-or, link-function effect families, pairwise energy
models, or raw conditional tables), compile it to its exact observed-data
probability tensor, and recover the number of latent variables and the
binary loading graph by inspecting ranks of tensor unfoldings.  A
finite-sample pipeline runs the same recovery on empirical tensors with
spectral-gap rank decisions.
"""

from .empirical import (
    RankDecisionConfig,
    SampleSet,
    empirical_tensor,
    estimate_rank_gap,
    merge_samples,
    read_samples,
    recover_graph_empirical,
    recover_graph_from_tensor,
    sample,
    spec_hash,
    write_samples,
)
from .errors import (
    GenerationError,
    GraphUnfoldError,
    NumericOverflowError,
    ParameterDomainError,
    SizeBudgetError,
)
from .linalg import RankReport, khatri_rao, kronecker, kruskal_rank, numerical_rank
from .model import (
    AllEffect,
    BipartiteGraph,
    CardinalitySpec,
    Cpt,
    EdgeInfluenceReport,
    ExplicitCpts,
    GeneralRbm,
    LatentJoint,
    MainEffect,
    MainInteraction,
    ModelSpec,
    NoisyOr,
    SingleParentRankReport,
    check_edge_influence,
    check_single_parent_rank,
    compile_model,
    model_from_json,
    model_to_json,
    permute_observed,
    planted_graph,
    random_model,
    validate_model,
)
from .recover import (
    MembershipTestRecord,
    PairTestRecord,
    RecoveryResult,
    find_pure_children,
    fill_multi_parent_rows,
    pair_rank_marginal,
    recover_graph,
    result_to_json,
)
from .tensor import (
    LatentJointTable,
    PopTensor,
    UnfoldedMatrix,
    conditional_matrix,
    dump_tensor,
    latent_joint_table,
    load_tensor,
    marginal,
    population_tensor,
    unfold,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
