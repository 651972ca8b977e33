"""Bayesian loss reserving with skew heavy-tailed scale-mixture models."""

from .triangle import (
    FUTURE,
    HOLDOUT,
    OBSERVED,
    LogTriangle,
    Triangle,
    TriangleError,
    calendar_index,
    cumulative,
    holdout_split,
    load_chan2008,
    log_transform,
    parse_triangle,
    serialize_triangle,
    summary_stats,
)
from .model import (
    BETA_SLASH,
    GAMMA_T,
    INVGAMMA_VG,
    POINT,
    MixingFamily,
    ModelSpec,
    MomentNotDefinedError,
    NuPrior,
    ParameterState,
    Priors,
    e_lambda_pow,
    init_state,
    kappa_to_rho,
    marginal_kurtosis,
    marginal_mean,
    marginal_skewness,
    marginal_variance,
    mixing_prior_logdensity,
    prior_scenario,
    rho_to_kappa,
    spec_from_code,
)
from .distributions import GigParams, make_rng, spawn_rngs
from .mcmc import (
    DEFAULT_CHAIN_CONFIG,
    AdaptiveState,
    ChainConfig,
    ChainOutput,
    FitData,
    NumericalAbortError,
    log_joint,
    run_chain,
)
from .reserving import PredictiveDraws, chain_ladder, predictive_draws, reserve_quantiles
from .evaluate import (
    ScoreReport,
    bayesian_residuals,
    crps_from_draws,
    ess,
    geweke_cd,
    interval_score,
    rmspe,
    score_report,
    wci,
)
from .simulate import SEC31_PRESET, TruthConfig, simulate_triangle

__version__ = "0.1.0"
