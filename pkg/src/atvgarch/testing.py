"""
LM tests of L transitions against L + 1 and the specific-to-general
specification procedure.

Both statistics are computed by auxiliary regressions on the null scores
``r1t`` and the Taylor regressors ``r2t`` (see :mod:`atvgarch.likelihood`).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

import numpy as np
from scipy.special import gammaincc

from atvgarch.estimation import FitConfig, FitResult, fit, heuristic_start
from atvgarch.exceptions import RankDeficientRegressors
from atvgarch.likelihood import ScoreMatrix, build_score_matrix
from atvgarch.model import SeriesData

__all__ = [
    "TestResult",
    "TraceEntry",
    "SpecificationTrace",
    "chi2_upper_tail",
    "lm_test",
    "robust_lm_test",
    "lm_quadratic_form",
    "sequential_specify",
    "format_pvalue",
    "TAYLOR_ORDER",
]

logger = logging.getLogger(__name__)

TAYLOR_ORDER = 3
RANK_RCOND = 1e-10
Variant = Literal["LM", "robust-LM"]


@dataclass(frozen=True)
class TestResult:
    """Outcome of an LM-type test of L transitions against L + 1."""

    __test__ = False  # not a pytest class

    variant: Variant
    statistic: float
    pvalue: float
    null_L: int
    T: int
    df: int = TAYLOR_ORDER
    ssr0: Optional[float] = None
    ssr1: Optional[float] = None

    def rejects(self, level: float) -> bool:
        return self.pvalue < level

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "null_L": self.null_L,
            "T": self.T,
            "statistic": self.statistic,
            "df": self.df,
            "pvalue": self.pvalue,
            "ssr0": self.ssr0,
            "ssr1": self.ssr1,
        }


def chi2_upper_tail(x: float, df: int = TAYLOR_ORDER) -> float:
    """``P(chi2(df) > x)`` through the regularized upper incomplete gamma function."""
    if x < 0:
        raise ValueError("statistic must be nonnegative")
    return float(gammaincc(0.5 * df, 0.5 * x))


def format_pvalue(p: float, decimals: int = 3) -> str:
    """Fixed-decimal p-value; values below 1e-16 print as zero."""
    return f"{0.0 if p < 1e-16 else p:.{decimals}f}"


def _column_basis(X: np.ndarray, rcond: float = RANK_RCOND) -> np.ndarray:
    """Orthonormal basis of the column space of X (columns equilibrated first)."""
    norms = np.linalg.norm(X, axis=0)
    keep = norms > 0
    if not keep.any():
        return np.zeros((X.shape[0], 0))
    Xs = X[:, keep] / norms[keep]
    U, s, _ = np.linalg.svd(Xs, full_matrices=False)
    rank = int(np.sum(s > rcond * s[0]))
    return U[:, :rank]


def _residual(y: np.ndarray, basis: np.ndarray) -> np.ndarray:
    if basis.shape[1] == 0:
        return np.array(y, dtype=float, copy=True)
    return y - basis @ (basis.T @ y)


def _check_tested_block(w: np.ndarray, r2: np.ndarray) -> None:
    """The Taylor block must keep full rank after projecting out the null scores."""
    ref = np.linalg.norm(r2, axis=0)
    if np.any(np.linalg.norm(w, axis=0) <= RANK_RCOND * np.maximum(ref, np.finfo(float).tiny)):
        raise RankDeficientRegressors("Taylor regressors are spanned by the null scores")
    if _column_basis(w).shape[1] < w.shape[1]:
        raise RankDeficientRegressors("Taylor regressors are collinear after projection")


def _scores(series, null_fit, scores: Optional[ScoreMatrix]) -> ScoreMatrix:
    if scores is not None:
        return scores
    return build_score_matrix(series, null_fit)


def lm_test(
    series: Union[SeriesData, np.ndarray],
    null_fit: FitResult,
    orthogonalize: bool = True,
    scores: Optional[ScoreMatrix] = None,
) -> TestResult:
    """
    TR^2 form of the LM test.

    ``e_t = Z_t^2 - 1`` is first orthogonalized against the null scores
    (``orthogonalize=True``), ``SSR0 = sum e_t^2``; ``e_t`` is then regressed
    on ``(r1t, r2t)`` giving ``SSR1`` and ``LM = T (SSR0 - SSR1) / SSR0``.

    Raises
    ------
    RankDeficientRegressors
        If the Taylor regressors are collinear with the null scores.
    """
    sm = _scores(series, null_fit, scores)
    T = sm.T
    B1 = _column_basis(sm.r1)
    e = _residual(sm.e, B1) if orthogonalize else sm.e
    w = _residual(sm.r2, B1)
    _check_tested_block(w, sm.r2)
    Bw = _column_basis(w)
    ssr0 = float(e @ e)
    # residual on (r1, r2) = residual of e on r1 then on the projected r2
    resid = _residual(_residual(e, B1), Bw)
    ssr1 = float(resid @ resid)
    stat = max(T * (ssr0 - ssr1) / ssr0, 0.0)
    return TestResult("LM", stat, chi2_upper_tail(stat), null_fit.L, T, ssr0=ssr0, ssr1=ssr1)


def robust_lm_test(
    series: Union[SeriesData, np.ndarray],
    null_fit: FitResult,
    orthogonalize: bool = True,
    scores: Optional[ScoreMatrix] = None,
) -> TestResult:
    """
    Robust LM test by auxiliary regressions.

    ``r2t`` is regressed component-wise on ``r1t`` giving residuals ``w_t``;
    then a constant 1 is regressed on ``(Z_t^2 - 1) w_t`` and
    ``LMr = T - SSR``.
    """
    sm = _scores(series, null_fit, scores)
    T = sm.T
    B1 = _column_basis(sm.r1)
    e = _residual(sm.e, B1) if orthogonalize else sm.e
    w = _residual(sm.r2, B1)
    _check_tested_block(w, sm.r2)
    X = e[:, None] * w
    coef, *_ = np.linalg.lstsq(X, np.ones(T), rcond=None)
    resid = 1.0 - X @ coef
    ssr = float(resid @ resid)
    stat = T - ssr
    if stat < -1e-8 * T:
        raise ArithmeticError(f"robust LM statistic is negative ({stat})")
    stat = max(stat, 0.0)
    return TestResult("robust-LM", stat, chi2_upper_tail(stat), null_fit.L, T, ssr1=ssr)


def lm_quadratic_form(
    series: Union[SeriesData, np.ndarray],
    null_fit: FitResult,
    scores: Optional[ScoreMatrix] = None,
) -> TestResult:
    """
    LM statistic as the quadratic form ``0.5 e'S (S'S)^{-1} S'e``.

    Asymptotically equivalent to :func:`lm_test` under Gaussian errors.
    """
    sm = _scores(series, null_fit, scores)
    w = _residual(sm.r2, _column_basis(sm.r1))
    _check_tested_block(w, sm.r2)
    B = _column_basis(sm.S)
    proj = B.T @ sm.e
    stat = 0.5 * float(proj @ proj)
    return TestResult("LM", stat, chi2_upper_tail(stat), null_fit.L, sm.T)


@dataclass(frozen=True)
class TraceEntry:
    L: int
    fit: FitResult = field(repr=False)
    lm: Optional[TestResult]
    robust: Optional[TestResult]
    decision: Literal["reject", "accept", "nonconvergence", "test-failed"]
    at_bound: bool = False


@dataclass(frozen=True)
class SpecificationTrace:
    """Sequence of fitted nulls, their tests and the selected number of transitions."""

    entries: tuple[TraceEntry, ...]
    selected_L: Optional[int]
    level: float
    variant: Variant

    def rows(self) -> list[dict]:
        out = []
        for en in self.entries:
            g = en.fit.spec.garch
            row = {
                "null_L": en.L,
                "LM": en.lm.statistic if en.lm else np.nan,
                "LM_pvalue": en.lm.pvalue if en.lm else np.nan,
                "LMr": en.robust.statistic if en.robust else np.nan,
                "LMr_pvalue": en.robust.pvalue if en.robust else np.nan,
                "alpha1": g.arch[0],
                "beta1": g.garch[0] if g.q else 0.0,
                "persistence": g.persistence,
                "decision": en.decision,
                "converged": en.fit.converged,
                "at_bound": en.at_bound,
            }
            out.append(row)
        return out

    def format_table(self) -> str:
        head = f"{'Null':<14}{'LM':>9}{'p-value':>9}{'LMr':>9}{'p-value':>9}" \
               f"{'alpha1':>8}{'beta1':>8}{'a1+b1':>8}  decision"
        lines = [head, "-" * len(head)]
        for r in self.rows():
            name = f"{r['null_L']} transition" + ("" if r["null_L"] == 1 else "s")
            lines.append(
                f"{name:<14}{r['LM']:>9.3f}{format_pvalue(r['LM_pvalue']):>9}"
                f"{r['LMr']:>9.3f}{format_pvalue(r['LMr_pvalue']):>9}"
                f"{r['alpha1']:>8.3f}{r['beta1']:>8.3f}{r['persistence']:>8.3f}  {r['decision']}"
            )
        lines.append(f"selected L = {self.selected_L} (level {self.level}, {self.variant})")
        return "\n".join(lines)


def sequential_specify(
    series: Union[SeriesData, np.ndarray],
    max_L: int = 3,
    level: float = 0.05,
    config: FitConfig = FitConfig(),
    variant: Variant = "robust-LM",
) -> SpecificationTrace:
    """
    Specific-to-general selection of the number of transitions.

    Fits L = 0, 1, ... and tests each against L + 1; stops at the first
    non-rejection (selecting that L) or once ``max_L`` has been fitted.
    A non-converged fit ends the trace without a selection.
    """
    if max_L < 1:
        raise ValueError("max_L must be at least 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if variant not in ("LM", "robust-LM"):
        raise ValueError(f"unknown variant {variant!r}")
    x = series.values if isinstance(series, SeriesData) else np.asarray(series, dtype=float)
    entries: list[TraceEntry] = []
    selected = None
    null0 = None
    for L in range(max_L + 1):
        start = heuristic_start(x, L, config=config, null_fit=null0)
        fr = fit(x, L, config, start=start)
        if L == 0:
            null0 = fr
        bound = any(fr.at_bound)
        if not fr.converged:
            entries.append(TraceEntry(L, fr, None, None, "nonconvergence", bound))
            break
        try:
            sm = build_score_matrix(x, fr)
            lm = lm_test(x, fr, scores=sm)
            rob = robust_lm_test(x, fr, scores=sm)
        except RankDeficientRegressors as exc:
            logger.warning("tests undefined at L=%d: %s", L, exc)
            entries.append(TraceEntry(L, fr, None, None, "test-failed", bound))
            break
        chosen = rob if variant == "robust-LM" else lm
        reject = chosen.rejects(level)
        entries.append(TraceEntry(L, fr, lm, rob, "reject" if reject else "accept", bound))
        if not reject or L == max_L:
            selected = L
            break
    return SpecificationTrace(tuple(entries), selected, level, variant)
