"""Granulated statistical-invariant classifiers.

Train binary classifiers by clustering the training set into granules,
building one rank-one statistical invariant per granule from v-values,
and solving the regularized least-squares system in closed form. The
identity-weighted (LSSVM) and full-V-matrix (VSVM) models are available
as degenerate modes of the same machinery.
"""

from .dataset import (
    Dataset,
    FoldPlan,
    ScalingParams,
    apply_scaling,
    generate_ndc,
    invert_scaling,
    kfold_split,
    load_csv,
    load_sparse,
    minmax_scale,
)
from .errors import DataError, LugsiError, NumericError
from .evaluation import (
    CVConfig,
    EvalReport,
    GridSpec,
    accuracy,
    benchmark_scaling,
    cluster_sweep,
    cross_validate,
    default_c_values,
    default_delta_values,
    default_m_values,
    grid_search,
)
from .granulation import Granulation, assign_to_granules, kmeans_granulate
from .invariants import (
    GranuleInvariant,
    MeasureSpec,
    granule_v_vectors,
    normalized_granule_invariants,
    unit_granule_invariants,
    v_matrix,
    v_value,
)
from .kernels import KernelSpec, gram_block, kernel_eval
from .solver import (
    FitDiagnostics,
    KernelModel,
    LinearModel,
    decision_value,
    decision_values,
    fit_kernel_lugsi,
    fit_linear_lugsi,
    fit_lssvm,
    fit_vsvm,
    load_model,
    predict_label,
    predict_labels,
    save_model,
    solve_spd,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FoldPlan",
    "ScalingParams",
    "apply_scaling",
    "generate_ndc",
    "invert_scaling",
    "kfold_split",
    "load_csv",
    "load_sparse",
    "minmax_scale",
    "DataError",
    "LugsiError",
    "NumericError",
    "CVConfig",
    "EvalReport",
    "GridSpec",
    "accuracy",
    "benchmark_scaling",
    "cluster_sweep",
    "cross_validate",
    "default_c_values",
    "default_delta_values",
    "default_m_values",
    "grid_search",
    "Granulation",
    "assign_to_granules",
    "kmeans_granulate",
    "GranuleInvariant",
    "MeasureSpec",
    "granule_v_vectors",
    "normalized_granule_invariants",
    "unit_granule_invariants",
    "v_matrix",
    "v_value",
    "KernelSpec",
    "gram_block",
    "kernel_eval",
    "FitDiagnostics",
    "KernelModel",
    "LinearModel",
    "decision_value",
    "decision_values",
    "fit_kernel_lugsi",
    "fit_linear_lugsi",
    "fit_lssvm",
    "fit_vsvm",
    "load_model",
    "predict_label",
    "predict_labels",
    "save_model",
    "solve_spd",
    "__version__",
]
