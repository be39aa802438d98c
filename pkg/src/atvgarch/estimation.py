"""
Constrained quasi-maximum-likelihood estimation of (ATV-)GARCH models.

Transition slopes are estimated through ``eta = gamma / (1 + gamma)`` so the
optimizer works on a bounded interval. The series is rescaled to unit mean
square before optimization; intercept and amplitude estimates are mapped back,
which makes fits equivariant to the units of the data.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Union

import numpy as np
from scipy.optimize import approx_fprime, minimize, nnls

from atvgarch.exceptions import InfeasibleStart
from atvgarch.likelihood import evaluate_vector
from atvgarch.model import (
    AtvGarchSpec,
    GarchParams,
    SeriesData,
    TransitionParams,
    VarianceInit,
    logistic_derivatives,
)

__all__ = [
    "FitConfig",
    "FitResult",
    "fit",
    "gamma_from_eta",
    "eta_from_gamma",
    "standard_errors",
    "heuristic_start",
    "MIN_OBS",
]

logger = logging.getLogger(__name__)

MIN_OBS = 50
# lower bound for ARCH/GARCH coefficients and intercept (normalized units)
COEF_EPS = 1e-12
# margins for the strict inequalities
PERSISTENCE_EPS = 1e-8
LOCATION_GAP = 1e-4
POSITIVITY_EPS = 1e-10
_GRID_POINTS = 256
_PENALTY = 1e10
_MAX_RESTARTS = 4
# floor of the coordinate scaling in the convergence test (unit mean square data)
TYPICAL_SIZE = 1e-2
# cube root of machine epsilon, the usual relative-gradient tolerance
GTOL = float(np.finfo(float).eps ** (1.0 / 3.0))


def gamma_from_eta(eta):
    """Slope ``gamma = eta / (1 - eta)`` for ``eta`` in (0, 1)."""
    eta = np.asarray(eta, dtype=float)
    if np.any((eta <= 0) | (eta >= 1)):
        raise ValueError("eta must lie in the open interval (0, 1)")
    out = eta / (1.0 - eta)
    return out if out.ndim else float(out)


def eta_from_gamma(gamma):
    """Inverse of :func:`gamma_from_eta`, ``eta = gamma / (1 + gamma)``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be positive")
    out = gamma / (1.0 + gamma)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class FitConfig:
    """
    Optimizer settings.

    Parameters
    ----------
    max_iter : int
        Maximum number of SLSQP iterations.
    ftol : float
        SLSQP precision goal on the (unit-scale) mean log-likelihood.
    gtol : float
        Tolerance on the KKT stationarity residual, with each coordinate scaled
        by the parameter's magnitude (floored at 0.01 on unit mean square
        data); reported, and used to flag non-convergence.
    variance_init : str, optional
        Presample mode; ``None`` picks sample variance for L = 0 and the first
        squared observation otherwise.
    start : {"user", "heuristic"}
        Starting-value strategy used when no start is passed to :func:`fit`.
    eta_bounds : tuple of float
        Bounds on eta; (0, 1) corresponds to gamma in (0, inf).
    compute_se : bool
        Compute plain and sandwich standard errors after the fit.
    """

    max_iter: int = 500
    ftol: float = 1e-12
    gtol: float = GTOL
    variance_init: Optional[str] = None
    start: Literal["user", "heuristic"] = "heuristic"
    eta_bounds: tuple[float, float] = (1e-3, 1.0 - 1e-5)
    compute_se: bool = True

    def __post_init__(self) -> None:
        if self.max_iter < 1 or self.ftol <= 0 or self.gtol <= 0:
            raise ValueError("iteration limit and tolerances must be positive")
        lo, hi = self.eta_bounds
        if not 0.0 < lo < hi < 1.0:
            raise ValueError("eta bounds must satisfy 0 < lower < upper < 1")

    def init_for(self, L: int) -> VarianceInit:
        if self.variance_init is None:
            return VarianceInit.for_null(L)
        return VarianceInit(self.variance_init)


@dataclass(frozen=True)
class FitResult:
    """Estimates and diagnostics of a QML fit."""

    spec: AtvGarchSpec
    init: VarianceInit
    loglik: float
    sigma2: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    converged: bool
    n_iter: int
    message: str = ""
    grad_norm: float = float("nan")
    se: Optional[np.ndarray] = None
    robust_se: Optional[np.ndarray] = None
    start: Optional[AtvGarchSpec] = field(default=None, repr=False)
    eta_bounds: tuple[float, float] = (1e-3, 1.0 - 1e-5)

    @property
    def T(self) -> int:
        return self.z.size

    @property
    def L(self) -> int:
        return self.spec.L

    @property
    def eta(self) -> tuple[float, ...]:
        return tuple(eta_from_gamma(tr.slope) for tr in self.spec.transitions)

    @property
    def params(self) -> np.ndarray:
        """Estimates in the estimation parameterization (eta instead of gamma)."""
        return _to_eta_vector(self.spec)

    @property
    def param_names(self) -> list[str]:
        return self.spec.param_names(slope_name="eta")

    @property
    def at_bound(self) -> tuple[bool, ...]:
        lo, hi = self.eta_bounds
        return tuple(e - lo < 1e-6 or hi - e < 1e-6 for e in self.eta)

    @property
    def loglik_mean(self) -> float:
        return self.loglik / self.T

    def summary_table(self) -> list[dict]:
        se = self.se if self.se is not None else np.full(self.params.size, np.nan)
        rse = self.robust_se if self.robust_se is not None else np.full(self.params.size, np.nan)
        return [
            {"name": n, "estimate": float(v), "se": float(s), "robust_se": float(r)}
            for n, v, s, r in zip(self.param_names, self.params, se, rse)
        ]

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "L": self.L,
            "p": self.spec.p,
            "q": self.spec.q,
            "variance_init": self.init.mode,
            "loglik": self.loglik,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "message": self.message,
            "grad_norm": self.grad_norm,
            "gamma": [tr.slope for tr in self.spec.transitions],
            "at_bound": list(self.at_bound),
            "params": self.summary_table(),
        }


def _to_eta_vector(spec: AtvGarchSpec) -> np.ndarray:
    theta = spec.to_vector()
    off = 1 + spec.p + spec.q
    theta[off + 1 :: 3] = eta_from_gamma(theta[off + 1 :: 3]) if spec.L else theta[off + 1 :: 3]
    return theta


def _from_eta_vector(phi: np.ndarray, p: int, q: int) -> AtvGarchSpec:
    theta = np.array(phi, dtype=float)
    off = 1 + p + q
    if theta.size > off:
        theta[off + 1 :: 3] = gamma_from_eta(theta[off + 1 :: 3])
    return AtvGarchSpec.from_vector(theta, p, q)


def _scale_vector(phi: np.ndarray, p: int, q: int, factor: float) -> np.ndarray:
    """Multiply intercept and amplitudes by ``factor`` (variance units)."""
    out = np.array(phi, dtype=float)
    off = 1 + p + q
    out[0] *= factor
    out[off::3] *= factor
    return out


class _Objective:
    """Negative mean log-likelihood and gradient with a one-point cache."""

    def __init__(self, x, p, q, presample):
        self.x, self.p, self.q, self.pre = x, p, q, presample
        self.x2 = x * x
        self._key = None
        self._val = None

    def __call__(self, phi):
        key = phi.tobytes()
        if key != self._key:
            self._key = key
            self._val = self._evaluate(phi)
        return self._val

    def _evaluate(self, phi):
        sigma2, D = evaluate_vector(self.x, phi, self.p, self.q, self.pre, "eta")
        if not (np.all(sigma2 > 0) and np.all(np.isfinite(sigma2)) and np.all(np.isfinite(D))):
            return _PENALTY, np.zeros_like(phi)
        z2 = self.x2 / sigma2
        f = 0.5 * np.mean(np.log(sigma2) + z2)
        g = -0.5 * ((z2 - 1.0) / sigma2) @ D / self.x.size
        return float(f), g


def _bounds(p, q, L, eta_bounds):
    b = [(COEF_EPS, None)] + [(COEF_EPS, 1.0)] * (p + q)
    for _ in range(L):
        b += [(None, None), eta_bounds, (0.0, 1.0)]
    return b


def _constraints(p, q, L, T):
    n = 1 + p + q + 3 * L
    off = 1 + p + q
    cons = []
    lin = np.zeros(n)
    lin[1:off] = -1.0
    cons.append(
        {
            "type": "ineq",
            "fun": lambda phi: np.array([1.0 - PERSISTENCE_EPS - np.sum(phi[1:off])]),
            "jac": lambda phi: lin[None, :],
        }
    )
    if L == 0:
        return cons

    if L > 1:
        A = np.zeros((L - 1, n))
        for l in range(L - 1):
            A[l, off + 3 * l + 2] = -1.0
            A[l, off + 3 * (l + 1) + 2] = 1.0
        cons.append(
            {
                "type": "ineq",
                "fun": lambda phi: A @ phi - LOCATION_GAP,
                "jac": lambda phi: A,
            }
        )

    m = min(T, _GRID_POINTS)
    idx = np.unique(np.round(np.linspace(1, T, m)).astype(int))
    u = idx / T

    def pos_parts(phi):
        vals = np.full(u.size, phi[0])
        J = np.zeros((u.size, n))
        J[:, 0] = 1.0
        for l in range(L):
            amp, eta, c = phi[off + 3 * l : off + 3 * l + 3]
            gamma = eta / (1.0 - eta)
            G, dg, dc = logistic_derivatives(u, gamma, c)
            vals += amp * G
            J[:, off + 3 * l] = G
            J[:, off + 3 * l + 1] = amp * dg / (1.0 - eta) ** 2
            J[:, off + 3 * l + 2] = amp * dc
        return vals, J

    cons.append(
        {
            "type": "ineq",
            "fun": lambda phi: pos_parts(phi)[0] - POSITIVITY_EPS,
            "jac": lambda phi: pos_parts(phi)[1],
        }
    )
    if L > 1:

        def centers(phi):
            amps = phi[off::3]
            gammas = phi[off + 1 :: 3] / (1.0 - phi[off + 1 :: 3])
            locs = phi[off + 2 :: 3]
            out = np.full(L, phi[0])
            for a, g_, c in zip(amps, gammas, locs):
                out += a / (1.0 + np.exp(-np.clip(g_ * (locs - c), -700, 700)))
            return out - POSITIVITY_EPS

        cons.append({"type": "ineq", "fun": centers})
    return cons


def _is_feasible(spec: AtvGarchSpec, T: int) -> bool:
    g = spec.garch
    if g.persistence >= 1.0 or g.intercept <= 0:
        return False
    if any(a <= 0 for a in g.arch) or any(b <= 0 for b in g.garch):
        return False
    return spec.is_positive(T)


def _kkt_residual(phi, grad, bounds, constraints, act_tol=1e-8):
    """
    Stationarity residual of the KKT conditions in magnitude-scaled coordinates.

    Coordinates are scaled by ``max(|phi_i|, TYPICAL_SIZE)``, so the test
    measures the change in the objective per relative change in each
    parameter. Multipliers of the active bounds and constraints are fitted by
    nonnegative least squares; the residual norm is returned.
    """
    s = np.maximum(np.abs(phi), TYPICAL_SIZE)
    cols = []
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None and phi[i] - lo <= act_tol * max(1.0, abs(lo)):
            e = np.zeros(phi.size)
            e[i] = 1.0
            cols.append(e)
        if hi is not None and hi - phi[i] <= act_tol * max(1.0, abs(hi)):
            e = np.zeros(phi.size)
            e[i] = -1.0
            cols.append(e)
    for con in constraints:
        vals = np.atleast_1d(con["fun"](phi))
        active = vals <= act_tol
        if not active.any():
            continue
        if "jac" in con:
            J = np.atleast_2d(con["jac"](phi))
        else:
            J = approx_fprime(phi, con["fun"], 1e-8)
            J = J.reshape(vals.size, phi.size)
        cols.extend(J[active])
    gs = grad * s
    if not cols:
        return float(np.linalg.norm(gs))
    A = np.array(cols).T * s[:, None]
    _, resid = nnls(A, gs)
    return float(resid)


def fit(
    series: Union[SeriesData, np.ndarray],
    L: int = 0,
    config: FitConfig = FitConfig(),
    start: Optional[AtvGarchSpec] = None,
    p: int = 1,
    q: int = 1,
) -> FitResult:
    """
    Quasi-maximum-likelihood fit of an ATV-GARCH(p, q) model with L transitions.

    Parameters
    ----------
    series : SeriesData or ndarray
        Returns X_1..X_T, T >= 50.
    L : int
        Number of logistic transitions.
    config : FitConfig
        Optimizer settings.
    start : AtvGarchSpec, optional
        Starting values. When omitted the heuristic start is used.
    p, q : int
        GARCH orders; ignored when ``start`` is given.

    Returns
    -------
    FitResult
        Never violates the parameter constraints. Non-convergence is flagged
        through ``converged`` rather than raised.

    Raises
    ------
    InfeasibleStart
        If ``start`` violates the constraints or does not have L transitions.
    """
    x = series.values if isinstance(series, SeriesData) else np.asarray(series, dtype=float)
    T = x.size
    if T < MIN_OBS:
        raise ValueError(f"at least {MIN_OBS} observations are required, got {T}")
    if L < 0:
        raise ValueError("L must be nonnegative")
    init = config.init_for(L)

    if start is None:
        if config.start == "user":
            raise ValueError("config requests user-supplied starting values but none were given")
        start = heuristic_start(x, L, p=p, q=q, config=config)
    else:
        if start.L != L:
            raise InfeasibleStart(f"start has {start.L} transitions, expected {L}")
        if not _is_feasible(start, T):
            raise InfeasibleStart("starting values violate the parameter constraints")
    p, q = start.p, start.q
    lo_eta, hi_eta = config.eta_bounds
    if any(not lo_eta <= eta_from_gamma(tr.slope) <= hi_eta for tr in start.transitions):
        raise InfeasibleStart("starting slope lies outside the eta bounds")

    scale2 = float(np.mean(x * x))
    if not scale2 > 0:
        raise ValueError("series has zero mean square")
    xn = x / np.sqrt(scale2)
    pre = init.presample(xn)
    objective = _Objective(xn, p, q, pre)
    bounds = _bounds(p, q, L, config.eta_bounds)
    phi0 = _scale_vector(_to_eta_vector(start), p, q, 1.0 / scale2)
    f0, _ = objective(phi0)

    constraints = _constraints(p, q, L, T)
    phi, n_iter = phi0, 0
    # SLSQP restarts reset the quasi-Newton matrix, which tightens the final gradient
    for _ in range(_MAX_RESTARTS):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(
                objective,
                phi,
                jac=True,
                method="SLSQP",
                bounds=bounds,
                constraints=constraints,
                options={"maxiter": max(config.max_iter - n_iter, 1), "ftol": config.ftol},
            )
        n_iter += int(res.get("nit", 0))
        phi = np.array(res.x, dtype=float)
        for i, (lo, hi) in enumerate(bounds):
            phi[i] = np.clip(phi[i], -np.inf if lo is None else lo, np.inf if hi is None else hi)
        if not res.success or n_iter >= config.max_iter:
            break
        if _kkt_residual(phi, objective(phi)[1], bounds, constraints) <= config.gtol:
            break
    converged = bool(res.success)
    message = str(res.message)

    try:
        spec = _from_eta_vector(_scale_vector(phi, p, q, scale2), p, q)
        feasible = _is_feasible(spec, T)
    except ValueError:
        spec, feasible = start, False
    f1, g1 = objective(phi) if feasible else (np.inf, None)
    if not feasible or not f1 <= f0:
        logger.debug("optimizer returned an infeasible or worse point; keeping start")
        spec, phi, converged = start, phi0, False
        message = "returned start: optimizer result infeasible or not an improvement"
        f1, g1 = f0, objective(phi0)[1]
    grad_norm = _kkt_residual(phi, g1, bounds, constraints)
    if converged and grad_norm > config.gtol:
        converged = False
        message = f"KKT residual {grad_norm:.3g} exceeds gtol"

    sigma2, _ = evaluate_vector(x, spec.to_vector(), p, q, init.presample(x), derivatives=False)
    lt = -0.5 * (np.log(sigma2) + x * x / sigma2)
    result = FitResult(
        spec=spec,
        init=init,
        loglik=float(np.sum(lt)),
        sigma2=sigma2,
        z=x / np.sqrt(sigma2),
        converged=converged,
        n_iter=n_iter,
        message=message,
        grad_norm=grad_norm,
        start=start,
        eta_bounds=config.eta_bounds,
    )
    if config.compute_se:
        se, rse = standard_errors(x, result)
        result = replace(result, se=se, robust_se=rse)
    return result


def _mean_score(x, phi, p, q, pre):
    sigma2, D = evaluate_vector(x, phi, p, q, pre, "eta")
    st = 0.5 * ((x * x / sigma2 - 1.0) / sigma2)[:, None] * D
    return st


def standard_errors(
    series: Union[SeriesData, np.ndarray], fit_result: FitResult, rel_step: float = 1e-5
) -> tuple[np.ndarray, np.ndarray]:
    """
    Plain and sandwich standard errors in the estimation parameterization.

    The Hessian of the mean log-likelihood is obtained by central differences
    of the analytic score. Plain errors use ``(-H)^{-1} / T``; robust errors
    use ``H^{-1} S H^{-1} / T`` with ``S`` the mean outer product of the
    per-observation scores. Returns NaN vectors when the Hessian is singular.
    """
    x = series.values if isinstance(series, SeriesData) else np.asarray(series, dtype=float)
    T = x.size
    spec = fit_result.spec
    p, q = spec.p, spec.q
    pre = fit_result.init.presample(x)
    phi = fit_result.params
    k = phi.size
    H = np.empty((k, k))
    for i in range(k):
        h = rel_step * max(abs(phi[i]), 1e-3)
        if i >= 1 + p + q and (i - 1 - p - q) % 3 == 1:
            h = min(h, 0.5 * (1.0 - phi[i]), 0.5 * phi[i])
        pp, pm = phi.copy(), phi.copy()
        pp[i] += h
        pm[i] -= h
        H[:, i] = (_mean_score(x, pp, p, q, pre).mean(0) - _mean_score(x, pm, p, q, pre).mean(0)) / (2 * h)
    H = 0.5 * (H + H.T)
    st = _mean_score(x, phi, p, q, pre)
    S = st.T @ st / T
    nan = np.full(k, np.nan)
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return nan, nan.copy()
    if not np.all(np.isfinite(Hinv)) or np.linalg.cond(H) > 1e14:
        return nan, nan.copy()
    plain = np.diag(-Hinv) / T
    robust = np.diag(Hinv @ S @ Hinv) / T
    with np.errstate(invalid="ignore"):
        return np.where(plain > 0, np.sqrt(np.abs(plain)), np.nan), np.sqrt(np.abs(robust))


def heuristic_start(
    series: Union[SeriesData, np.ndarray],
    L: int,
    p: int = 1,
    q: int = 1,
    config: FitConfig = FitConfig(),
    null_fit: Optional[FitResult] = None,
) -> AtvGarchSpec:
    """
    Feasible starting values.

    L = 0: intercept 0.05 var(X), ARCH 0.05 and GARCH 0.85 (split evenly over
    the lags). L >= 1: GARCH part of the fitted L = 0 model, amplitudes of
    half its intercept with alternating signs (halved until the intercept stays
    positive), eta = 0.8 and equally spaced locations.
    """
    x = series.values if isinstance(series, SeriesData) else np.asarray(series, dtype=float)
    var = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
    if not var > 0:
        var = float(np.mean(x * x)) or 1.0
    if L == 0:
        garch = GarchParams(0.05 * var, (0.05 / p,) * p, (0.85 / q,) * q)
        return AtvGarchSpec(garch)

    if null_fit is None:
        null_fit = fit(x, 0, replace(config, compute_se=False, start="heuristic"), p=p, q=q)
    garch = null_fit.spec.garch
    gamma = gamma_from_eta(0.8)
    T = x.size
    amp = 0.5 * garch.intercept
    for _ in range(60):
        trs = tuple(
            TransitionParams(amp if l % 2 == 0 else -amp, gamma, (l + 1) / (L + 1))
            for l in range(L)
        )
        spec = AtvGarchSpec(garch, trs)
        if spec.is_positive(T) and spec.min_intercept(T) > POSITIVITY_EPS * 10:
            return spec
        amp *= 0.5
    return spec
