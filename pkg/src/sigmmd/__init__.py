"""Kernel mean embeddings of stochastic processes via the signature kernel.

Core pieces: the signature-kernel PDE solver and Gram fields (sigkernel),
the higher-order embedding recursion and MMD estimators (higherorder), a
permutation two-sample test (mmdtest), conditional-independence testing
(condind), kPC skeleton discovery (causal), distribution regression (dr),
and seeded data generators (datagen).
"""

from .paths import (
    Ensemble,
    Path,
    increments,
    load_csv_dir,
    load_jsonl,
    pool,
    resample,
    restrict,
    save_csv_dir,
    save_jsonl,
    stack_coords,
    time_augment,
)
from .errors import NumericError, ValidationError
from .sigkernel import (
    GramField,
    PdeGrid,
    first_order_gram,
    load_gram_field,
    pde_solve,
    save_gram_field,
    static_kernel_gram,
    truncated_sig_kernel,
)
from .higherorder import (
    HigherOrderConfig,
    MmdEstimate,
    higher_order_gram,
    higher_order_mmd,
    inner_prod_pred_kme,
)
from .mmdtest import TestReport, two_sample_test
from .condind import (
    CiStatistic,
    ci_test,
    conditional_kme_weights,
    hs_conditional_criterion,
    hsic_criterion,
)
from .causal import CausalGraph, kpc_skeleton
from .dr import (
    Bag,
    CvResult,
    DrModel,
    cv_grid_search,
    fit_krr,
    mmd_matrix,
    predict,
    process_kernel_matrix,
)
from .datagen import (
    GenSpec,
    gen_brownian,
    gen_fbm,
    gen_fig3,
    gen_spring_system,
    generate,
)

__version__ = "0.1.0"

__all__ = [
    "Bag",
    "CausalGraph",
    "CiStatistic",
    "CvResult",
    "DrModel",
    "Ensemble",
    "GenSpec",
    "GramField",
    "HigherOrderConfig",
    "MmdEstimate",
    "NumericError",
    "Path",
    "PdeGrid",
    "TestReport",
    "ValidationError",
    "ci_test",
    "conditional_kme_weights",
    "cv_grid_search",
    "first_order_gram",
    "fit_krr",
    "gen_brownian",
    "gen_fbm",
    "gen_fig3",
    "gen_spring_system",
    "generate",
    "higher_order_gram",
    "higher_order_mmd",
    "hs_conditional_criterion",
    "hsic_criterion",
    "increments",
    "inner_prod_pred_kme",
    "kpc_skeleton",
    "load_csv_dir",
    "load_gram_field",
    "load_jsonl",
    "mmd_matrix",
    "pde_solve",
    "pool",
    "predict",
    "process_kernel_matrix",
    "resample",
    "restrict",
    "save_csv_dir",
    "save_gram_field",
    "save_jsonl",
    "stack_coords",
    "static_kernel_gram",
    "time_augment",
    "truncated_sig_kernel",
    "two_sample_test",
]
