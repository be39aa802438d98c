"""
ATV-GARCH parameterization, transition functions and the variance recursion.

The conditional variance is

    sigma2[t] = a0 + g(t/T) + sum_i a_i X[t-i]^2 + sum_j b_j sigma2[t-j]

with ``g(u) = sum_l a0_l G(u; gamma_l, c_l)`` a linear combination of logistic
transitions in rescaled time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Union

import numpy as np
from scipy.signal import lfilter, lfiltic

from atvgarch.exceptions import NonPositiveVariance

__all__ = [
    "TransitionParams",
    "GarchParams",
    "AtvGarchSpec",
    "InnovationDist",
    "SeriesData",
    "VarianceInit",
    "logistic_transition",
    "logistic_derivatives",
    "intercept_g",
    "conditional_variance_path",
    "simulate",
    "simulate_path",
]

# grid used to check pointwise positivity when no sample length is given
_POSITIVITY_GRID = np.linspace(0.0, 1.0, 2001)


@dataclass(frozen=True)
class TransitionParams:
    """One logistic transition: amplitude, slope (gamma) and location (c)."""

    amplitude: float
    slope: float
    location: float

    def __post_init__(self) -> None:
        if not self.slope > 0:
            raise ValueError(f"transition slope must be positive, got {self.slope}")
        if not 0.0 <= self.location <= 1.0:
            raise ValueError(
                f"transition location must lie in [0, 1], got {self.location}"
            )


@dataclass(frozen=True)
class GarchParams:
    """
    Coefficients of the GARCH(p, q) part.

    Zero ARCH/GARCH coefficients are accepted so that degenerate recursions can
    be evaluated; the estimator keeps them strictly positive.
    """

    intercept: float
    arch: tuple[float, ...] = (0.05,)
    garch: tuple[float, ...] = (0.85,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "arch", tuple(float(a) for a in self.arch))
        object.__setattr__(self, "garch", tuple(float(b) for b in self.garch))
        if not self.intercept > 0:
            raise ValueError(f"intercept must be positive, got {self.intercept}")
        if len(self.arch) == 0:
            raise ValueError("at least one ARCH coefficient is required")
        if any(a < 0 for a in self.arch) or any(b < 0 for b in self.garch):
            raise ValueError("ARCH and GARCH coefficients must be nonnegative")
        if self.persistence >= 1.0:
            raise ValueError(
                f"persistence sum(alpha) + sum(beta) must be < 1, got {self.persistence}"
            )

    @property
    def p(self) -> int:
        return len(self.arch)

    @property
    def q(self) -> int:
        return len(self.garch)

    @property
    def persistence(self) -> float:
        return float(sum(self.arch) + sum(self.garch))

    @property
    def unconditional_variance(self) -> float:
        return self.intercept / (1.0 - self.persistence)


@dataclass(frozen=True)
class AtvGarchSpec:
    """
    Full ATV-GARCH parameterization.

    Transition locations must be strictly increasing. Pointwise positivity of
    ``intercept + g(u)`` is *not* enforced at construction (invalid points are
    legitimately visited by callers); use :meth:`min_intercept` or
    :meth:`is_positive` to check it.
    """

    garch: GarchParams
    transitions: tuple[TransitionParams, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "transitions", tuple(self.transitions))
        locs = [tr.location for tr in self.transitions]
        if any(b <= a for a, b in zip(locs[:-1], locs[1:])):
            raise ValueError(f"transition locations must be strictly increasing: {locs}")

    @classmethod
    def from_values(
        cls,
        intercept: float,
        arch: Union[float, Sequence[float]],
        garch: Union[float, Sequence[float]],
        transitions: Sequence[tuple[float, float, float]] = (),
    ) -> "AtvGarchSpec":
        """Build a spec from plain numbers; transitions are (amplitude, slope, location)."""
        arch = (arch,) if np.isscalar(arch) else tuple(arch)
        garch = (garch,) if np.isscalar(garch) else tuple(garch)
        return cls(
            GarchParams(intercept, arch, garch),
            tuple(TransitionParams(*tr) for tr in transitions),
        )

    @property
    def L(self) -> int:
        return len(self.transitions)

    @property
    def p(self) -> int:
        return self.garch.p

    @property
    def q(self) -> int:
        return self.garch.q

    @property
    def n_params(self) -> int:
        return 1 + self.p + self.q + 3 * self.L

    def param_names(self, slope_name: str = "gamma") -> list[str]:
        names = ["alpha0"]
        names += [f"alpha{i + 1}" for i in range(self.p)]
        names += [f"beta{j + 1}" for j in range(self.q)]
        for l in range(self.L):
            names += [f"alpha0{l + 1}", f"{slope_name}{l + 1}", f"c{l + 1}"]
        return names

    def to_vector(self) -> np.ndarray:
        """Parameters as ``[a0, a_1..a_p, b_1..b_q, (a0_l, gamma_l, c_l)...]``."""
        g = self.garch
        vals = [g.intercept, *g.arch, *g.garch]
        for tr in self.transitions:
            vals += [tr.amplitude, tr.slope, tr.location]
        return np.array(vals, dtype=float)

    @classmethod
    def from_vector(cls, theta: Sequence[float], p: int = 1, q: int = 1) -> "AtvGarchSpec":
        theta = np.asarray(theta, dtype=float)
        n_tr, rem = divmod(theta.size - 1 - p - q, 3)
        if rem or n_tr < 0:
            raise ValueError(f"parameter vector of length {theta.size} does not match p={p}, q={q}")
        garch = GarchParams(float(theta[0]), tuple(theta[1 : 1 + p]), tuple(theta[1 + p : 1 + p + q]))
        off = 1 + p + q
        trs = tuple(
            TransitionParams(*(float(v) for v in theta[off + 3 * l : off + 3 * l + 3]))
            for l in range(n_tr)
        )
        return cls(garch, trs)

    def null_skeleton(self, n_transitions: int = 0) -> "AtvGarchSpec":
        """The same spec keeping only the first ``n_transitions`` transitions."""
        return AtvGarchSpec(self.garch, self.transitions[:n_transitions])

    def intercept_path(self, u: np.ndarray) -> np.ndarray:
        return self.garch.intercept + intercept_g(u, self)

    def min_intercept(self, T: Optional[int] = None) -> float:
        """Minimum of ``a0 + g(u)`` over the sample grid t/T (or a fine grid) plus centers."""
        if self.L == 0:
            return self.garch.intercept
        u = _POSITIVITY_GRID if T is None else np.arange(1, T + 1) / T
        centers = np.array([tr.location for tr in self.transitions])
        return float(np.min(self.intercept_path(np.concatenate([u, centers]))))

    def is_positive(self, T: Optional[int] = None) -> bool:
        return self.min_intercept(T) > 0


@dataclass(frozen=True)
class InnovationDist:
    """Unit-variance innovation distribution (standard normal or scaled Student t)."""

    kind: Literal["normal", "t"] = "normal"
    df: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ("normal", "t"):
            raise ValueError(f"unknown innovation distribution {self.kind!r}")
        if self.kind == "t" and (self.df is None or not self.df > 4):
            raise ValueError("Student t innovations require df > 4")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "normal":
            return rng.standard_normal(size)
        return rng.standard_t(self.df, size) * np.sqrt((self.df - 2.0) / self.df)


@dataclass(frozen=True)
class SeriesData:
    """Observed or simulated returns X_1..X_T."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        x = np.ascontiguousarray(self.values, dtype=float).copy()
        if x.ndim != 1:
            raise ValueError("series must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise ValueError("series contains NaN or inf")
        x.setflags(write=False)
        object.__setattr__(self, "values", x)

    @property
    def T(self) -> int:
        return self.values.size

    @property
    def rescaled_time(self) -> np.ndarray:
        return np.arange(1, self.T + 1) / self.T

    def scaled(self, factor: float) -> "SeriesData":
        return SeriesData(self.values * factor)

    def __len__(self) -> int:
        return self.T


@dataclass(frozen=True)
class VarianceInit:
    """
    Presample values of sigma2 and X^2.

    ``sample-variance`` sets both to the sample variance of the series,
    ``first-obs-squared`` to X_1^2 and ``fixed`` uses the given numbers.
    """

    mode: Literal["sample-variance", "first-obs-squared", "fixed"] = "sample-variance"
    sigma2: Optional[float] = None
    x2: Optional[float] = None

    def __post_init__(self) -> None:
        if self.mode not in ("sample-variance", "first-obs-squared", "fixed"):
            raise ValueError(f"unknown variance init mode {self.mode!r}")
        if self.mode == "fixed" and (self.sigma2 is None or self.x2 is None):
            raise ValueError("fixed variance init requires sigma2 and x2")

    @classmethod
    def for_null(cls, n_transitions: int) -> "VarianceInit":
        """Sample variance for a stationary null, first squared value otherwise."""
        return cls("sample-variance" if n_transitions == 0 else "first-obs-squared")

    def presample(self, x: np.ndarray) -> tuple[float, float]:
        if self.mode == "fixed":
            return float(self.sigma2), float(self.x2)
        if self.mode == "first-obs-squared":
            v = float(x[0] ** 2)
        else:
            v = float(np.var(x, ddof=1)) if x.size > 1 else float(x[0] ** 2)
        return v, v


def logistic_transition(u, slope: float, location: float):
    """
    Logistic transition ``1 / (1 + exp(-slope (u - location)))``.

    Evaluated through the branch with a nonpositive exponent, so it does not
    overflow for very steep transitions.
    """
    z = slope * (np.asarray(u, dtype=float) - location)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def logistic_derivatives(u, slope: float, location: float):
    """Return ``(G, dG/dslope, dG/dlocation)`` at rescaled times ``u``."""
    u = np.asarray(u, dtype=float)
    G = logistic_transition(u, slope, location)
    GG = G * (1.0 - G)
    return G, GG * (u - location), -GG * slope


def intercept_g(u, spec: AtvGarchSpec):
    """Time-varying intercept contribution ``sum_l a0_l G_l(u)``."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    for tr in spec.transitions:
        out = out + tr.amplitude * logistic_transition(u, tr.slope, tr.location)
    return out if out.ndim else float(out)


def _lagged(x2: np.ndarray, presample: float, lag: int) -> np.ndarray:
    """x2[t - lag] for t = 0..T-1 with presample fill."""
    if lag == 0:
        return x2
    return np.concatenate([np.full(min(lag, x2.size), presample), x2[: x2.size - lag]])


def _ar_filter(drive: np.ndarray, garch: Sequence[float], presample: float = 0.0) -> np.ndarray:
    """Solve y[t] = drive[t] + sum_j b_j y[t-j] along axis 0 with constant presample."""
    if len(garch) == 0:
        return np.array(drive, dtype=float)
    a = np.concatenate([[1.0], -np.asarray(garch, dtype=float)])
    zi = lfiltic([1.0], a, np.full(len(garch), presample))
    if drive.ndim == 1:
        y, _ = lfilter([1.0], a, drive, zi=zi)
        return y
    if presample != 0.0:
        raise ValueError("matrix filtering supports zero presample only")
    return lfilter([1.0], a, drive, axis=0)


def conditional_variance_path(
    series: Union[SeriesData, np.ndarray],
    spec: AtvGarchSpec,
    init: VarianceInit = VarianceInit(),
    check: bool = True,
) -> np.ndarray:
    """
    Conditional variances sigma2[1..T].

    Raises
    ------
    NonPositiveVariance
        If any variance is not strictly positive and finite (with ``check``).
    """
    x = series.values if isinstance(series, SeriesData) else np.asarray(series, dtype=float)
    T = x.size
    sigma2_0, x2_0 = init.presample(x)
    u = np.arange(1, T + 1) / T
    x2 = x * x
    drive = spec.intercept_path(u)
    for i, a in enumerate(spec.garch.arch, start=1):
        drive = drive + a * _lagged(x2, x2_0, i)
    sigma2 = _ar_filter(drive, spec.garch.garch, sigma2_0)
    if check and not (np.all(sigma2 > 0) and np.all(np.isfinite(sigma2))):
        raise NonPositiveVariance("conditional variance path is not strictly positive")
    return sigma2


def simulate_path(
    spec: AtvGarchSpec,
    T: int,
    dist: InnovationDist = InnovationDist(),
    burn_in: int = 200,
    seed: Union[int, np.random.SeedSequence, np.random.Generator, None] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[float, float]]:
    """
    Simulate returns, variances and innovations for the retained sample.

    The burn-in uses the intercept frozen at its value for t = 1, and the
    recursion starts from the unconditional variance of the GARCH part.

    Returns
    -------
    x, sigma2, z : ndarray
        Retained returns, conditional variances and innovations.
    presample : tuple
        ``(sigma2_0, x2_0)`` carried into the first retained observation.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = spec.garch
    p, q = g.p, g.q
    n = burn_in + T
    z = dist.draw(rng, n)
    omega = np.empty(n)
    omega[:burn_in] = spec.intercept_path(np.array([1.0 / T]))[0]
    omega[burn_in:] = spec.intercept_path(np.arange(1, T + 1) / T)

    v0 = g.unconditional_variance
    m = max(p, q)
    s2 = [v0] * m + [0.0] * n
    xx = [v0] * m + [0.0] * n
    arch, garch = g.arch, g.garch
    zl = z.tolist()
    om = omega.tolist()
    for t in range(n):
        k = t + m
        v = om[t]
        for i in range(p):
            v += arch[i] * xx[k - 1 - i]
        for j in range(q):
            v += garch[j] * s2[k - 1 - j]
        s2[k] = v
        xx[k] = v * zl[t] * zl[t]
    sigma2 = np.array(s2[m + burn_in :])
    x = np.sqrt(sigma2) * z[burn_in:]
    k0 = m + burn_in
    presample = (s2[k0 - 1], xx[k0 - 1])
    return x, sigma2, z[burn_in:], presample


def simulate(
    spec: AtvGarchSpec,
    T: int,
    dist: InnovationDist = InnovationDist(),
    burn_in: int = 200,
    seed: Union[int, np.random.SeedSequence, np.random.Generator, None] = None,
) -> SeriesData:
    """Simulate ``T`` retained observations of X_t = sigma_t Z_t."""
    x, _, _, _ = simulate_path(spec, T, dist, burn_in, seed)
    return SeriesData(x)
