"""Data-adaptive, query-aware subspace-collision nearest neighbor search.

The index projects vectors through an entropy-balanced spectral transform,
splits the result into subspaces, and keeps one two-codebook inverted
multi-index per subspace. Queries count per-subspace collisions, pick a
per-query score threshold, and re-rank the survivors exactly.
"""

from .bench import (
    ActivationTiming,
    BenchmarkReport,
    Metrics,
    ParetoReport,
    compare_activations,
    mre,
    mre_with_skips,
    pareto_report,
    recall,
    run_benchmark,
    write_activation_csv,
    write_metrics_csv,
    write_pareto_csv,
)
from .clustering import KMeansModel, assign, kmeans
from .dataio import (
    GroundTruth,
    compute_ground_truth,
    load_ground_truth,
    read_vectors,
    sample_subset,
    save_ground_truth,
    split_queries,
    write_vectors,
)
from .engine import (
    CandidateSet,
    IndexParams,
    QueryParams,
    SearchResult,
    TacoIndex,
    attach_transformed,
    build_index,
    count_collisions,
    knn_query,
    load_index,
    rerank,
    save_index,
    sc_linear_query,
    sc_linear_scores,
    select_candidates,
    serialize_index,
)
from .errors import (
    ConvergenceError,
    CorruptionError,
    DimensionMismatchError,
    EmptyInputError,
    FormatError,
    InsufficientDataError,
    NumericError,
    ParameterError,
    StateError,
    TacoError,
    UnsupportedVersionError,
)
from .imi import (
    ActivationResult,
    InvertedMultiIndex,
    build_subspace_index,
    linear_dynamic_activation,
    scalable_dynamic_activation,
    sorted_centroid_distances,
)
from .spectral import (
    CovarianceModel,
    EigenSystem,
    SubspaceAllocation,
    TransformModel,
    allocate_eigensystem,
    eigendecompose,
    fit_covariance,
    fit_transform_model,
    jacobi_eigh,
    transform_points,
)
from .synth import make_clustered

__version__ = "0.1.0"
