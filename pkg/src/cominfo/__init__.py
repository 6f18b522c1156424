"""Common-information toolkit for finite bivariate distributions."""

from .bounds import (
    BoundReport,
    SearchOptions,
    check_condition_star,
    common_entropy,
    g_alpha,
    g_infinity,
    gamma_lb,
    gamma_lb_objective,
    gamma_ub,
    gamma_ub_objective,
    is_pseudo_product,
    multiletter_gamma,
    nonneg_alpha_rank,
    wyner_ci,
    wyner_objective,
)
from .closed_forms import (
    DsbsParams,
    binary_entropy,
    dsbs_decomposition,
    dsbs_exact_ci,
    dsbs_joint,
    dsbs_lb_analytic,
    dsbs_wyner_ci,
    gaussian_exact_ub,
    gaussian_li_elgamal_ub,
    gaussian_wyner,
)
from .dist import (
    BudgetError,
    Channel,
    Decomposition,
    FiniteDist,
    JointDist,
    ShapeMismatchError,
    entropy,
    mutual_information,
    normalize,
    normalize_joint,
    product_lift,
    renyi_divergence,
    renyi_entropy,
    synthesize,
    tv_distance,
)
from .synthesis import (
    Codebook,
    SplitCode,
    build_split_code,
    build_truncated_codebook,
    covering_dinf,
    exact_synthesis_rate,
    is_strongly_typical,
    mixture_lambda,
    mixture_split,
    superblock_rate_check,
    synthesized_dist,
)
from .cli import run_covering_experiment
from .transport import (
    TransportPlan,
    compose_conditional_couplings,
    max_cross_entropy,
    min_expected_cross_entropy,
    solve_transport,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
