"""Kriging on permutations and partial rankings."""
from .permutation import (
    Distance,
    Permutation,
    apply,
    compose,
    cross_distances,
    cycle_cn,
    distance,
    distance_matrix,
    from_ranking,
    identity,
    inverse,
    kendall_naive,
    parse_permutation,
    random_permutation,
    to_ranking,
)
from .kernels import (
    KernelParams,
    ParamBox,
    UnsupportedDistanceError,
    feature_inner,
    feature_map,
    gram_gradient,
    gram_matrix,
    kernel,
    kernel_nugget,
)
from .partial import (
    PartialRanking,
    TopKRanking,
    compatible_set,
    d_avg,
    d_avg_bruteforce,
    d_avg_hamming_coset,
    d_avg_topk,
    kernel_averaged_oracle,
    kernel_partial,
    kernel_partial_normalized,
    parse_partial_ranking,
    topk_alignment,
)
from .gp import (
    FitOptions,
    GPFit,
    NumericalError,
    TrainingSet,
    condition,
    fisher_matrix,
    fit_mle,
    likelihood_gradient,
    load_model,
    neg_log_likelihood,
    predict,
    sample_gp,
    save_model,
)

__version__ = "0.1.0"
