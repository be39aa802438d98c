"""
ATV-GARCH: GARCH models with an additive, smoothly time-varying intercept,
quasi-maximum-likelihood estimation and LM tests for the number of
logistic transitions.
"""
from atvgarch.data import DatasetConfig, SummaryStats, load_returns, summary
from atvgarch.estimation import (
    FitConfig,
    FitResult,
    eta_from_gamma,
    fit,
    gamma_from_eta,
    heuristic_start,
    standard_errors,
)
from atvgarch.exceptions import (
    ATVGarchError,
    DegenerateQuantiles,
    EmptySeries,
    InfeasibleStart,
    NonPositivePrice,
    NonPositiveVariance,
    ParseError,
    RankDeficientRegressors,
)
from atvgarch.likelihood import (
    LikelihoodEval,
    ScoreMatrix,
    build_score_matrix,
    loglik,
    score,
    score_theta1,
    score_theta2,
    taylor_regressors,
)
from atvgarch.model import (
    AtvGarchSpec,
    GarchParams,
    InnovationDist,
    SeriesData,
    TransitionParams,
    VarianceInit,
    conditional_variance_path,
    logistic_transition,
    simulate,
)
from atvgarch.montecarlo import (
    DGPS,
    DgpConfig,
    McExperiment,
    McResult,
    emit_curves,
    run_power,
    run_size,
)
from atvgarch.testing import (
    SpecificationTrace,
    TestResult,
    chi2_upper_tail,
    lm_quadratic_form,
    lm_test,
    robust_lm_test,
    sequential_specify,
)

__version__ = "0.1.0"
