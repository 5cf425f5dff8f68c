"""Heavy-tailed AR(1) estimation with missing data.

Maximum-likelihood estimation of a Student's-t AR(1) model from a partially
observed series, via stochastic-approximation EM with a two-stage Gibbs
kernel, plus simulation, imputation, prediction, and Monte-Carlo benchmarks.
"""
from .backend import active_backend, available_backends, set_backend, use_backend
from .errors import DataError, NumericalError, TailarError
from .model import (
    LatentState,
    MissingBlock,
    ObservedSeries,
    Params,
    SuffStats,
    apply_missing,
    find_missing_blocks,
    q_value,
    simulate_ar1,
    student_t_logpdf,
    sufficient_statistics,
)
from .sampler import (
    BlockConditional,
    block_conditional,
    gibbs_step,
    sample_gamma,
    sample_missing,
    sample_tau,
)
from .saem import (
    FitResult,
    ImputeResult,
    SaemConfig,
    digamma,
    fit,
    gaussian_em_fit,
    impute,
    initialize,
    m_step,
    nu_solve,
    sa_update,
    step_size,
)
from .experiments import (
    McReport,
    PredictionResult,
    RobustnessReport,
    draw_outlier_positions,
    inject_innovation_outliers,
    mc_mse,
    predict_one_step,
    robustness_experiment,
)

__version__ = "0.1.0"
