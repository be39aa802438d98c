"""
Monte Carlo size and power experiments for the LM tests.

Every replication draws from its own ``SeedSequence(base_seed, spawn_key=(rep,))``
stream, so results do not depend on how replications are spread over worker
processes.
"""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd

from atvgarch.estimation import FitConfig, fit
from atvgarch.exceptions import ATVGarchError
from atvgarch.likelihood import build_score_matrix
from atvgarch.model import AtvGarchSpec, InnovationDist, simulate
from atvgarch.testing import lm_test, robust_lm_test

__all__ = [
    "DgpConfig",
    "DGPS",
    "McExperiment",
    "McResult",
    "run_replication",
    "run_experiment",
    "run_size",
    "run_power",
    "emit_curves",
    "write_curves",
    "default_workers",
    "LEVEL_GRID",
    "VARIANTS",
]

logger = logging.getLogger(__name__)

LEVEL_GRID = tuple(round(0.001 * i, 3) for i in range(1, 101))
VARIANTS = ("LM", "robust-LM")
WORKERS_ENV = "ATVGARCH_WORKERS"

# replication status codes
OK, NONCONVERGED, FAILED = 0, 1, 2


@dataclass(frozen=True)
class DgpConfig:
    name: str
    spec: AtvGarchSpec
    dist: InnovationDist = InnovationDist()

    @property
    def L(self) -> int:
        return self.spec.L


def _dgp(name, a0l=(), dist=InnovationDist(), garch=(0.005, 0.05, 0.8)):
    return DgpConfig(name, AtvGarchSpec.from_values(*garch, transitions=a0l), dist)


DGPS: dict[str, DgpConfig] = {
    d.name: d
    for d in [
        _dgp("DGP1", garch=(0.1, 0.1, 0.85)),
        _dgp("DGP2", garch=(0.05, 0.05, 0.9)),
        _dgp("DGP3"),
        _dgp("DGP3t", dist=InnovationDist("t", 5.0)),
        _dgp("DGP4", [(0.015, 10.0, 0.5)]),
        _dgp("DGP5", [(0.005, 10.0, 0.5)]),
        _dgp("DGP6", [(0.0025, 10.0, 0.5)]),
        _dgp("DGP7", [(0.015, 5.0, 0.5)]),
        _dgp("DGP8", [(0.005, 5.0, 0.5)]),
        _dgp("DGP9", [(0.0025, 5.0, 0.5)]),
        _dgp("DGP10", [(0.01, 10.0, 0.25), (-0.01, 10.0, 0.75)]),
        _dgp("DGP11", [(0.005, 10.0, 0.25), (0.005, 10.0, 0.75)]),
    ]
}


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class McExperiment:
    """
    Parameters
    ----------
    dgp : str
        Key in :data:`DGPS`.
    sample_sizes : sequence of int
        Values of T.
    reps : int
        Replications per sample size.
    null_L : int
        Number of transitions of the fitted null model.
    levels : sequence of float
        Nominal significance levels.
    start : {"true", "heuristic"}
        Null fits start at the DGP values (first ``null_L`` transitions) or at
        the heuristic start.
    """

    dgp: str
    sample_sizes: tuple[int, ...] = (1000, 2500, 5000)
    reps: int = 1000
    null_L: int = 0
    burn_in: int = 200
    levels: tuple[float, ...] = LEVEL_GRID
    base_seed: int = 12345
    start: Literal["true", "heuristic"] = "true"

    def __post_init__(self) -> None:
        if self.dgp not in DGPS:
            raise ValueError(f"unknown DGP {self.dgp!r}; choose from {sorted(DGPS)}")
        object.__setattr__(self, "sample_sizes", tuple(int(t) for t in self.sample_sizes))
        object.__setattr__(self, "levels", tuple(float(a) for a in self.levels))
        if self.reps < 1:
            raise ValueError("reps must be positive")
        if self.null_L < 0 or self.null_L > DGPS[self.dgp].L:
            raise ValueError("null_L must lie between 0 and the DGP's number of transitions")
        if any(not 0.0 <= a < 1.0 for a in self.levels):
            raise ValueError("levels must lie in [0, 1)")
        if self.start not in ("true", "heuristic"):
            raise ValueError(f"unknown start strategy {self.start!r}")

    @property
    def config(self) -> DgpConfig:
        return DGPS[self.dgp]


def run_replication(dgp: str, T: int, rep: int, base_seed: int, null_L: int,
                    burn_in: int = 200, start: str = "true") -> tuple:
    """
    One replication: simulate, fit the null, run both tests.

    Returns ``(status, lm_stat, lm_pvalue, robust_stat, robust_pvalue)``.
    """
    cfg = DGPS[dgp]
    seed = np.random.SeedSequence(base_seed, spawn_key=(rep,))
    x = simulate(cfg.spec, T, cfg.dist, burn_in, seed=seed)
    start_spec = cfg.spec.null_skeleton(null_L) if start == "true" else None
    nan = float("nan")
    try:
        fr = fit(x, null_L, FitConfig(compute_se=False), start=start_spec)
        if not fr.converged:
            return NONCONVERGED, nan, nan, nan, nan
        sm = build_score_matrix(x, fr)
        lm = lm_test(x, fr, scores=sm)
        rob = robust_lm_test(x, fr, scores=sm)
    except (ATVGarchError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        logger.debug("replication %d of %s at T=%d failed: %s", rep, dgp, T, exc)
        return FAILED, nan, nan, nan, nan
    return OK, lm.statistic, lm.pvalue, rob.statistic, rob.pvalue


def _run_chunk(args) -> list[tuple]:
    dgp, T, reps, base_seed, null_L, burn_in, start = args
    return [run_replication(dgp, T, r, base_seed, null_L, burn_in, start) for r in reps]


@dataclass
class McResult:
    """Per-replication statistics and derived rejection frequencies."""

    experiment: McExperiment
    records: dict[int, np.ndarray] = field(default_factory=dict)
    elapsed: dict[int, float] = field(default_factory=dict)

    _COLS = {"status": 0, "LM": 1, "LM_pvalue": 2, "robust-LM": 3, "robust-LM_pvalue": 4}

    def statistics(self, T: int, variant: str, converged_only: bool = True) -> np.ndarray:
        rec = self.records[T]
        vals = rec[:, self._COLS[variant]]
        return vals[rec[:, 0] == OK] if converged_only else vals

    def pvalues(self, T: int, variant: str) -> np.ndarray:
        rec = self.records[T]
        return rec[rec[:, 0] == OK, self._COLS[f"{variant}_pvalue"]]

    def n_converged(self, T: int) -> int:
        return int(np.sum(self.records[T][:, 0] == OK))

    def n_nonconverged(self, T: int) -> int:
        return int(np.sum(self.records[T][:, 0] == NONCONVERGED))

    def n_failed(self, T: int) -> int:
        return int(self.records[T].shape[0] - self.n_converged(T))

    def rejection_frequency(self, T: int, variant: str, level: float) -> float:
        p = self.pvalues(T, variant)
        if p.size == 0:
            return float("nan")
        return float(np.count_nonzero(p < level)) / p.size

    def mc_se(self, T: int, variant: str, level: float) -> float:
        n = self.n_converged(T)
        f = self.rejection_frequency(T, variant, level)
        return float(np.sqrt(f * (1.0 - f) / n)) if n else float("nan")

    def table(self) -> pd.DataFrame:
        rows = []
        for T in sorted(self.records):
            for variant in VARIANTS:
                for a in self.experiment.levels:
                    rows.append(
                        {
                            "dgp": self.experiment.dgp,
                            "T": T,
                            "variant": variant,
                            "nominal_level": a,
                            "rejection_freq": self.rejection_frequency(T, variant, a),
                            "mc_se": self.mc_se(T, variant, a),
                            "n_converged": self.n_converged(T),
                            "n_failed": self.n_failed(T),
                        }
                    )
        return pd.DataFrame(rows)

    def to_csv(self, path: Union[str, Path]) -> None:
        self.table().to_csv(path, index=False, lineterminator="\n")


def _chunks(n: int, k: int) -> list[range]:
    size = max(1, -(-n // k))
    return [range(i, min(i + size, n)) for i in range(0, n, size)]


def run_experiment(experiment: McExperiment, workers: Optional[int] = None) -> McResult:
    """Run all replications of an experiment, serially or over worker processes."""
    workers = default_workers() if workers is None else max(1, int(workers))
    ex = experiment
    result = McResult(ex)
    for T in ex.sample_sizes:
        t0 = time.perf_counter()
        if workers == 1:
            rows = _run_chunk((ex.dgp, T, range(ex.reps), ex.base_seed, ex.null_L, ex.burn_in, ex.start))
        else:
            # several chunks per worker keeps the pool busy; order is restored by concatenation
            tasks = [
                (ex.dgp, T, chunk, ex.base_seed, ex.null_L, ex.burn_in, ex.start)
                for chunk in _chunks(ex.reps, 4 * workers)
            ]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = [row for part in pool.map(_run_chunk, tasks) for row in part]
        result.records[T] = np.array(rows, dtype=float).reshape(-1, 5)
        result.elapsed[T] = time.perf_counter() - t0
        logger.info(
            "%s T=%d: %d/%d converged in %.1fs",
            ex.dgp, T, result.n_converged(T), ex.reps, result.elapsed[T],
        )
    return result


def run_size(experiment: McExperiment, workers: Optional[int] = None) -> McResult:
    """Empirical size: the fitted null has as many transitions as the DGP."""
    if experiment.null_L != experiment.config.L:
        raise ValueError(
            f"size experiments need null_L equal to the DGP's L ({experiment.config.L})"
        )
    return run_experiment(experiment, workers)


def run_power(experiment: McExperiment, workers: Optional[int] = None) -> McResult:
    """Empirical (not size-adjusted) power: the null has fewer transitions than the DGP."""
    if experiment.null_L >= experiment.config.L:
        raise ValueError("power experiments need null_L below the DGP's number of transitions")
    return run_experiment(experiment, workers)


def emit_curves(
    result: McResult, kind: Literal["size-discrepancy", "size-power"]
) -> pd.DataFrame:
    """
    Plot-ready curves over the nominal level grid.

    ``size-discrepancy`` gives empirical minus nominal rejection rate,
    ``size-power`` the empirical rejection rate itself.
    """
    if kind not in ("size-discrepancy", "size-power"):
        raise ValueError(f"unknown curve kind {kind!r}")
    tab = result.table()
    value = tab["rejection_freq"]
    if kind == "size-discrepancy":
        value = value - tab["nominal_level"]
    return pd.DataFrame(
        {
            "dgp": tab["dgp"],
            "T": tab["T"],
            "variant": tab["variant"],
            "kind": kind,
            "nominal": tab["nominal_level"],
            "value": value,
        }
    )


def write_curves(
    result: McResult, directory: Union[str, Path], kinds: Iterable[str] = ("size-discrepancy", "size-power")
) -> list[Path]:
    """Write one ``curves_<dgp>_<T>_<variant>_<kind>.csv`` file per curve."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for kind in kinds:
        curves = emit_curves(result, kind)
        for (dgp, T, variant), grp in curves.groupby(["dgp", "T", "variant"], sort=True):
            path = directory / f"curves_{dgp}_{T}_{variant}_{kind}.csv"
            grp[["nominal", "value"]].to_csv(path, index=False, lineterminator="\n")
            paths.append(path)
    return paths
