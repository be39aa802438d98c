"""
Gaussian quasi log-likelihood, analytic variance derivatives and the
auxiliary regressors used by the misspecification tests.

All derivative recursions share the autoregressive structure of the variance
equation, ``D[t] = c[t] + sum_j b_j D[t-j]``, and are evaluated as a single
linear filter over the sample with zero presample derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np

from atvgarch.exceptions import NonPositiveVariance
from atvgarch.model import (
    AtvGarchSpec,
    SeriesData,
    VarianceInit,
    _ar_filter,
    _lagged,
    conditional_variance_path,
    logistic_derivatives,
)

__all__ = [
    "LikelihoodEval",
    "ScoreMatrix",
    "loglik",
    "variance_derivatives",
    "score_theta1",
    "score_theta2",
    "score",
    "taylor_regressors",
    "build_score_matrix",
    "numeric_variance_derivatives",
    "observation_hessian",
    "evaluate_vector",
]

SlopeParam = Literal["gamma", "eta"]


def _values(series: Union[SeriesData, np.ndarray]) -> np.ndarray:
    return series.values if isinstance(series, SeriesData) else np.asarray(series, dtype=float)


@dataclass(frozen=True)
class LikelihoodEval:
    """Per-observation log-likelihood terms with variances and standardized residuals."""

    lt: np.ndarray
    sigma2: np.ndarray
    z: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.lt))

    @property
    def mean(self) -> float:
        return float(np.mean(self.lt))

    @property
    def T(self) -> int:
        return self.lt.size


@dataclass(frozen=True)
class ScoreMatrix:
    """
    Rows are ``(r1t, r2t)`` for t = 1..T.

    ``r1`` holds the null-model scores (GARCH block first, then transitions),
    ``r2`` the three Taylor-polynomial regressors and ``e`` the residuals
    ``Z_t^2 - 1``.
    """

    r1: np.ndarray
    r2: np.ndarray
    e: np.ndarray

    @property
    def S(self) -> np.ndarray:
        return np.hstack([self.r1, self.r2])

    @property
    def k(self) -> int:
        return self.r1.shape[1] + self.r2.shape[1]

    @property
    def T(self) -> int:
        return self.e.size


def loglik(
    series: Union[SeriesData, np.ndarray],
    spec: AtvGarchSpec,
    init: VarianceInit = VarianceInit(),
) -> LikelihoodEval:
    """
    Gaussian quasi log-likelihood, ``l_t = -0.5 (log sigma2_t + X_t^2 / sigma2_t)``.

    Constants are omitted.
    """
    x = _values(series)
    sigma2 = conditional_variance_path(x, spec, init)
    lt = -0.5 * (np.log(sigma2) + x * x / sigma2)
    return LikelihoodEval(lt, sigma2, x / np.sqrt(sigma2))


def _transition_columns(u, theta, off, n_tr, slope_param):
    """Direct (non-recursive) derivative columns of g(u) w.r.t. each transition block."""
    cols = np.empty((u.size, 3 * n_tr))
    for l in range(n_tr):
        amp, s, c = theta[off + 3 * l : off + 3 * l + 3]
        gamma = s / (1.0 - s) if slope_param == "eta" else s
        G, dG_dgamma, dG_dc = logistic_derivatives(u, gamma, c)
        cols[:, 3 * l] = G
        if slope_param == "eta":
            cols[:, 3 * l + 1] = amp * dG_dgamma / (1.0 - s) ** 2
        else:
            cols[:, 3 * l + 1] = amp * dG_dgamma
        cols[:, 3 * l + 2] = amp * dG_dc
    return cols


def evaluate_vector(
    x: np.ndarray,
    theta: np.ndarray,
    p: int,
    q: int,
    presample: tuple[float, float],
    slope_param: SlopeParam = "gamma",
    derivatives: bool = True,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Variance path and its Jacobian for a raw parameter vector.

    ``theta`` is laid out as ``[a0, a_1..a_p, b_1..b_q, (a0_l, s_l, c_l)...]``
    where ``s_l`` is the slope gamma or its transform eta = gamma / (1 + gamma).
    No parameter validation is done; this is the optimizer's inner loop.
    """
    T = x.size
    sigma2_0, x2_0 = presample
    n_tr = (theta.size - 1 - p - q) // 3
    off = 1 + p + q
    u = np.arange(1, T + 1) / T
    x2 = x * x
    arch = theta[1 : 1 + p]
    garch = theta[1 + p : off]

    tcols = _transition_columns(u, theta, off, n_tr, slope_param) if n_tr else None
    drive = np.full(T, theta[0])
    if n_tr:
        drive = drive + tcols[:, 0::3] @ theta[off::3]
    lag_x2 = [_lagged(x2, x2_0, i) for i in range(1, p + 1)]
    for a, lx in zip(arch, lag_x2):
        drive = drive + a * lx
    sigma2 = _ar_filter(drive, garch, sigma2_0)
    if not derivatives:
        return sigma2, None

    C = np.empty((T, theta.size))
    C[:, 0] = 1.0
    for i, lx in enumerate(lag_x2):
        C[:, 1 + i] = lx
    for j in range(q):
        C[:, 1 + p + j] = _lagged(sigma2, sigma2_0, j + 1)
    if n_tr:
        C[:, off:] = tcols
    return sigma2, _ar_filter(C, garch)


def variance_derivatives(
    series: Union[SeriesData, np.ndarray],
    spec: AtvGarchSpec,
    init: VarianceInit = VarianceInit(),
    slope_param: SlopeParam = "gamma",
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(sigma2, dsigma2)`` with ``dsigma2`` of shape ``(T, n_params)``."""
    x = _values(series)
    theta = spec.to_vector()
    if slope_param == "eta":
        theta[1 + spec.p + spec.q + 1 :: 3] = theta[1 + spec.p + spec.q + 1 :: 3] / (
            1.0 + theta[1 + spec.p + spec.q + 1 :: 3]
        )
    sigma2, D = evaluate_vector(x, theta, spec.p, spec.q, init.presample(x), slope_param)
    if not np.all(sigma2 > 0):
        raise NonPositiveVariance("conditional variance path is not strictly positive")
    return sigma2, D


def score_theta2(
    series: Union[SeriesData, np.ndarray],
    spec: AtvGarchSpec,
    init: VarianceInit = VarianceInit(),
) -> np.ndarray:
    """Derivatives of sigma2_t w.r.t. ``(a0, a_1..a_p, b_1..b_q)``, shape ``(T, 1+p+q)``."""
    _, D = variance_derivatives(series, spec, init)
    return D[:, : 1 + spec.p + spec.q]


def score_theta1(
    series: Union[SeriesData, np.ndarray],
    spec: AtvGarchSpec,
    init: VarianceInit = VarianceInit(),
    slope_param: SlopeParam = "gamma",
) -> np.ndarray:
    """
    Derivatives of sigma2_t w.r.t. the transition parameters.

    Columns come in blocks of three per transition: amplitude, slope, location.
    """
    if spec.L < 1:
        raise ValueError("score_theta1 requires at least one transition")
    _, D = variance_derivatives(series, spec, init, slope_param)
    return D[:, 1 + spec.p + spec.q :]


def score(
    series: Union[SeriesData, np.ndarray],
    spec: AtvGarchSpec,
    init: VarianceInit = VarianceInit(),
    slope_param: SlopeParam = "gamma",
) -> np.ndarray:
    """Per-observation score of ``l_t``, ``0.5 (Z_t^2 - 1) dsigma2_t / sigma2_t``."""
    x = _values(series)
    sigma2, D = variance_derivatives(x, spec, init, slope_param)
    e = x * x / sigma2 - 1.0
    return 0.5 * (e / sigma2)[:, None] * D


def taylor_regressors(
    series: Union[SeriesData, np.ndarray],
    spec: AtvGarchSpec,
    init: VarianceInit = VarianceInit(),
    sigma2: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Regressors ``r2t = (1/sigma2_t) sum_{j=0}^{t-1} b^j tau_{t-j}``.

    ``tau_s = (s/T, (s/T)^2, (s/T)^3)``; the geometric sum stops at the first
    observation. With q > 1 the full GARCH lag polynomial is used.
    """
    x = _values(series)
    if sigma2 is None:
        sigma2 = conditional_variance_path(x, spec, init)
    u = np.arange(1, x.size + 1) / x.size
    tau = np.column_stack([u, u**2, u**3])
    return _ar_filter(tau, spec.garch.garch) / sigma2[:, None]


def build_score_matrix(series: Union[SeriesData, np.ndarray], fit) -> ScoreMatrix:
    """
    Stack null scores and Taylor regressors for a fitted null model.

    ``fit`` is a :class:`atvgarch.estimation.FitResult` (anything with
    ``spec`` and ``init`` attributes works). Transition slopes enter through
    the estimation transform eta; column scaling does not affect the tests.
    """
    x = _values(series)
    sigma2, D = variance_derivatives(x, fit.spec, fit.init, slope_param="eta")
    r1 = D / sigma2[:, None]
    r2 = taylor_regressors(x, fit.spec, fit.init, sigma2=sigma2)
    return ScoreMatrix(r1, r2, x * x / sigma2 - 1.0)


def numeric_variance_derivatives(
    series: Union[SeriesData, np.ndarray],
    spec: AtvGarchSpec,
    init: VarianceInit = VarianceInit(),
    rel_step: float = 1e-6,
) -> np.ndarray:
    """Central finite-difference Jacobian of the variance path (any p, q)."""
    x = _values(series)
    theta = spec.to_vector()
    pre = init.presample(x)
    D = np.empty((x.size, theta.size))
    for i in range(theta.size):
        h = rel_step * max(abs(theta[i]), 1e-3)
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        sp, _ = evaluate_vector(x, tp, spec.p, spec.q, pre, derivatives=False)
        sm, _ = evaluate_vector(x, tm, spec.p, spec.q, pre, derivatives=False)
        D[:, i] = (sp - sm) / (2 * h)
    return D


def observation_hessian(
    series: Union[SeriesData, np.ndarray],
    spec: AtvGarchSpec,
    init: VarianceInit = VarianceInit(),
    rel_step: float = 1e-5,
) -> np.ndarray:
    """
    Average of the per-observation Hessian terms

        (1 - Z^2) d2sigma2 / sigma2 + (2 Z^2 - 1) (dsigma2/sigma2)(dsigma2/sigma2)'

    with second derivatives of sigma2 from differences of the analytic
    Jacobian. This equals ``-2 d^2 L_T / dtheta dtheta'`` and is kept as a
    numerical cross-check; the tests use the outer product of scores.
    """
    x = _values(series)
    theta = spec.to_vector()
    pre = init.presample(x)
    sigma2, D = evaluate_vector(x, theta, spec.p, spec.q, pre)
    k = theta.size
    D2 = np.empty((x.size, k, k))
    for i in range(k):
        h = rel_step * max(abs(theta[i]), 1e-3)
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        _, Dp = evaluate_vector(x, tp, spec.p, spec.q, pre)
        _, Dm = evaluate_vector(x, tm, spec.p, spec.q, pre)
        D2[:, i, :] = (Dp - Dm) / (2 * h)
    D2 = 0.5 * (D2 + D2.transpose(0, 2, 1))
    z2 = x * x / sigma2
    s = D / sigma2[:, None]
    H = np.einsum("t,tij->ij", (1.0 - z2) / sigma2, D2)
    H += np.einsum("t,ti,tj->ij", 2.0 * z2 - 1.0, s, s)
    return H / x.size
