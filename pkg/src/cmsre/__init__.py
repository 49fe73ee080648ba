"""Co-regularized multi-view sparse reconstruction embedding.

Per-view sparse neighbor reconstruction, spectral embedding of the induced
reconstruction operators, and an alternating co-regularized
eigendecomposition that couples the views, plus a classification/retrieval
evaluation harness and a batch CLI.
"""

from .dataset import (
    MultiViewDataset,
    NeighborIndex,
    ViewMatrix,
    build_neighbor_index,
    concatenate_views,
    load_dataset,
    normalize_view,
)
from .embedding import (
    CmsreConfig,
    Embedding,
    ReconstructionOperator,
    TraceRecord,
    build_operator,
    coreg_update_view,
    disagreement,
    fit_cmsre,
    principal_angles,
    reconstruction_objective,
    single_view_embed,
    symmetric_eigendecomposition,
    termination_reason,
)
from .errors import CmsreError, ConvergenceError, DatasetError, NumericalError
from .evaluation import (
    ClassificationReport,
    RetrievalReport,
    SplitPlan,
    evaluate_classification,
    knn_classify_1nn,
    make_split_plan,
    relevance_from_labels,
    retrieve,
    sweep_lambda,
)
from .sparse_coding import (
    CodingConfig,
    CoefficientMatrix,
    SparseCode,
    code_objective,
    oracle_code,
    solve_code,
    solve_view_codes,
)
from .synthetic import generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "CmsreConfig",
    "CmsreError",
    "ClassificationReport",
    "CodingConfig",
    "CoefficientMatrix",
    "ConvergenceError",
    "DatasetError",
    "Embedding",
    "MultiViewDataset",
    "NeighborIndex",
    "NumericalError",
    "ReconstructionOperator",
    "RetrievalReport",
    "SparseCode",
    "SplitPlan",
    "TraceRecord",
    "ViewMatrix",
    "build_neighbor_index",
    "build_operator",
    "code_objective",
    "concatenate_views",
    "coreg_update_view",
    "disagreement",
    "evaluate_classification",
    "fit_cmsre",
    "generate_synthetic",
    "knn_classify_1nn",
    "load_dataset",
    "make_split_plan",
    "normalize_view",
    "oracle_code",
    "principal_angles",
    "reconstruction_objective",
    "relevance_from_labels",
    "retrieve",
    "single_view_embed",
    "solve_code",
    "solve_view_codes",
    "sweep_lambda",
    "symmetric_eigendecomposition",
    "termination_reason",
]
