"""Kronecker-structured covariance and precision estimation for tensor data.

The package fits covariance and inverse-covariance models whose structure
is a Kronecker product, a Kronecker sum, or a squared Kronecker sum over
the tensor modes, along with the unstructured baselines they are compared
against. It ships synthetic PDE-driven data generators, evaluation
metrics, a precision-based forward predictor, and a benchmark harness
that drives the full generate / fit / score loop.
"""

from .estimators import (
    METHOD_KEYS,
    METHODS,
    RATE_RULES,
    EstimatorConfig,
    FitResult,
    GraphicalLasso,
    KroneckerPCA,
    MethodSpec,
    NearestKroneckerProduct,
    SGPalm,
    TensorLasso,
    TeraLasso,
    canonical_method,
    glasso,
    graphical_lasso,
    kp_ls,
    kpca,
    kron_pca,
    lambda_from_rate,
    nearest_kron_product,
    objective,
    sg_palm,
    smooth_gradients,
    sylvester_palm,
    tensor_lasso,
    tera_lasso,
    teralasso,
    tlasso,
)
from .evaluation import (
    LinearPredictor,
    PredictorBlocks,
    SupportPattern,
    extract_support,
    forward_predict,
    frob_error,
    ind_lasso,
    mcc,
    nrmse,
    predictor_blocks,
)
from .formats import (
    read_mwt,
    read_triplets,
    write_mwt,
    write_pgm,
    write_triplets,
)
from .generators import (
    PROCESS_NAMES,
    GroundTruth,
    ProcessSpec,
    build_process,
    sample_gaussian,
    sample_process,
)
from .harness import (
    DEFAULT_C_GRID,
    METRIC_NAMES,
    ExperimentSpec,
    MethodPlan,
    PredictionPlan,
    ResultRecord,
    emit_heatmap,
    emit_table,
    failed_cells,
    run_experiment,
)
from .multiway import (
    MultiwayTensor,
    mode_gram,
    mode_k_product,
    refold,
    sample_covariance,
    unfold,
    unvec,
    vec_tensor,
)
from .structured import (
    FactorSet,
    StructuredMatrix,
    eig_kron_sum,
    partial_trace,
    rearrange,
    rearrange_inverse,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_C_GRID",
    "EstimatorConfig",
    "ExperimentSpec",
    "FactorSet",
    "FitResult",
    "GraphicalLasso",
    "GroundTruth",
    "KroneckerPCA",
    "LinearPredictor",
    "METHODS",
    "METHOD_KEYS",
    "METRIC_NAMES",
    "MethodPlan",
    "MethodSpec",
    "MultiwayTensor",
    "NearestKroneckerProduct",
    "PROCESS_NAMES",
    "PredictionPlan",
    "PredictorBlocks",
    "ProcessSpec",
    "RATE_RULES",
    "ResultRecord",
    "SGPalm",
    "StructuredMatrix",
    "SupportPattern",
    "TensorLasso",
    "TeraLasso",
    "build_process",
    "canonical_method",
    "eig_kron_sum",
    "emit_heatmap",
    "emit_table",
    "extract_support",
    "failed_cells",
    "forward_predict",
    "frob_error",
    "glasso",
    "graphical_lasso",
    "ind_lasso",
    "kp_ls",
    "kpca",
    "kron_pca",
    "lambda_from_rate",
    "mcc",
    "mode_gram",
    "mode_k_product",
    "nearest_kron_product",
    "nrmse",
    "objective",
    "partial_trace",
    "predictor_blocks",
    "read_mwt",
    "read_triplets",
    "rearrange",
    "rearrange_inverse",
    "refold",
    "run_experiment",
    "sample_covariance",
    "sample_gaussian",
    "sample_process",
    "sg_palm",
    "smooth_gradients",
    "sylvester_palm",
    "tensor_lasso",
    "tera_lasso",
    "teralasso",
    "tlasso",
    "unfold",
    "unvec",
    "vec_tensor",
    "write_mwt",
    "write_pgm",
    "write_triplets",
]
