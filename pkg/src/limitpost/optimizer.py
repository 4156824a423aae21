"""The projected stochastic-approximation learner for the posting distance.

One price path is consumed per reassessment step: the distance moves against
the gradient integrand evaluated on that path and is clamped back into the
book-depth interval.  Running (Ruppert-Polyak) averages of the iterates and
full per-step diagnostics (step size, projection residual) are recorded so
boundary sticking and noise levels are visible after the fact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .cost import PathBatch, curve_samples, gradient_integrand
from .errors import NumericFault
from .market import ExecutionSetup, IntensityModel, PenaltySpec
from .paths import PricePath, star_discrepancy

__all__ = [
    "StepSchedule",
    "StepRecord",
    "SaTrajectory",
    "sa_step",
    "run_sa",
    "polyak_average",
    "martingale_increments",
    "MeanReversionProbe",
    "mean_reversion_probe",
    "replay_step_diagnostics",
]


@dataclass(frozen=True)
class StepSchedule:
    """Gain sequence gamma_1 / n**rho.

    The exponent must lie in (1/2, 1]: that keeps the total gain divergent
    while the squared gains stay summable, which the almost-sure convergence
    of the learner requires.
    """

    gamma1: float
    rho: float = 1.0

    def __post_init__(self) -> None:
        if not (self.gamma1 > 0.0 and math.isfinite(self.gamma1)):
            raise ValueError(f"gamma1 must be finite and > 0, got {self.gamma1}")
        if not (0.5 < self.rho <= 1.0):
            raise ValueError(
                f"rho must lie in (1/2, 1] (divergent gain, summable squares), got {self.rho}"
            )

    def gamma(self, n: int) -> float:
        if n < 1:
            raise ValueError(f"step index starts at 1, got {n}")
        return self.gamma1 / float(n) ** self.rho


class StepRecord(NamedTuple):
    """Diagnostics of one update."""

    gradient_sample: float
    gamma: float
    projection_active: bool
    residual: float


def sa_step(
    delta: float,
    step_index: int,
    schedule: StepSchedule,
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    path: PricePath,
    formula: str = "auto",
) -> tuple[float, StepRecord]:
    """One projected update from iterate ``step_index`` (0-based).

    The residual is the projection correction per unit gain: zero whenever
    the raw update already lands inside the depth interval.
    """
    if not (0.0 <= delta <= setup.delta_max):
        raise ValueError(f"iterate {delta} outside [0, {setup.delta_max}]")
    gamma = schedule.gamma(step_index + 1)
    sample = gradient_integrand(setup, model, penalty, delta, path, formula)
    if not math.isfinite(sample):
        raise NumericFault(
            f"non-finite gradient sample at step {step_index + 1}, delta={delta:.6g}, "
            f"path initial={path.initial:.6g} terminal={path.terminal:.6g}"
        )
    raw = delta - gamma * sample
    clamped = min(max(raw, 0.0), setup.delta_max)
    residual = 0.0 if clamped == raw else (clamped - delta) / gamma + sample
    return clamped, StepRecord(
        gradient_sample=sample,
        gamma=gamma,
        projection_active=clamped != raw,
        residual=residual,
    )


@dataclass(frozen=True, eq=False)
class SaTrajectory:
    """Iterates delta_0..delta_N, their running means, and per-step records."""

    iterates: np.ndarray
    averaged: np.ndarray
    gradient_samples: np.ndarray
    gammas: np.ndarray
    residuals: np.ndarray
    projection_active: np.ndarray

    def __post_init__(self) -> None:
        n = self.iterates.size
        if self.averaged.size != n:
            raise ValueError("averaged must match iterates")
        for name in ("gradient_samples", "gammas", "residuals", "projection_active"):
            if getattr(self, name).size != n - 1:
                raise ValueError(f"{name} must hold one entry per step")

    @property
    def n_steps(self) -> int:
        return int(self.iterates.size - 1)

    @property
    def final(self) -> float:
        return float(self.iterates[-1])

    @property
    def final_averaged(self) -> float:
        return float(self.averaged[-1])

    def write_csv(self, path: str | Path) -> None:
        """Schema ``n,delta,delta_avg,H,gamma,proj_residual``; row 0 carries
        the starting iterate with zeroed step fields."""
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["n", "delta", "delta_avg", "H", "gamma", "proj_residual"])
            writer.writerow([0, f"{self.iterates[0]:.17g}", f"{self.averaged[0]:.17g}", "0", "0", "0"])
            for i in range(1, self.iterates.size):
                writer.writerow(
                    [
                        i,
                        f"{self.iterates[i]:.17g}",
                        f"{self.averaged[i]:.17g}",
                        f"{self.gradient_samples[i - 1]:.17g}",
                        f"{self.gammas[i - 1]:.17g}",
                        f"{self.residuals[i - 1]:.17g}",
                    ]
                )


def polyak_average(iterates: Sequence[float]) -> np.ndarray:
    """Running arithmetic means of the iterates."""
    arr = np.asarray(iterates, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot average an empty iterate list")
    return np.cumsum(arr) / np.arange(1.0, arr.size + 1.0)


def martingale_increments(trajectory: SaTrajectory, curve) -> np.ndarray:
    """Noise part of each update: the gradient sample minus the mean field.

    The mean field is interpolated from an estimated cost curve's gradient at
    the iterate each step started from.  A systematic drift in these
    increments points at a biased curve or a broken source, not at noise.
    """
    reference = np.interp(trajectory.iterates[:-1], curve.deltas, curve.gradient)
    return trajectory.gradient_samples - reference


def run_sa(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    schedule: StepSchedule,
    n_steps: int,
    source,
    delta0: float | None = None,
    formula: str = "auto",
) -> SaTrajectory:
    """Run the learner for ``n_steps`` updates, one source path each.

    ``delta0`` defaults to the middle of the depth interval.  The trajectory
    is a deterministic function of the configuration and the source's seeds.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    delta = setup.delta_max / 2.0 if delta0 is None else float(delta0)
    if not (0.0 <= delta <= setup.delta_max):
        raise ValueError(f"delta0 = {delta} outside [0, {setup.delta_max}]")
    iterates = np.empty(n_steps + 1)
    samples = np.empty(n_steps)
    gammas = np.empty(n_steps)
    residuals = np.empty(n_steps)
    active = np.zeros(n_steps, dtype=bool)
    iterates[0] = delta
    consumed = 0
    for i, path in enumerate(source.iter_paths(n_steps)):
        delta, record = sa_step(delta, i, schedule, setup, model, penalty, path, formula)
        iterates[i + 1] = delta
        samples[i] = record.gradient_sample
        gammas[i] = record.gamma
        residuals[i] = record.residual
        active[i] = record.projection_active
        consumed += 1
    if consumed != n_steps:
        raise NumericFault(f"source yielded {consumed} paths, {n_steps} steps requested")
    return SaTrajectory(
        iterates=iterates,
        averaged=polyak_average(iterates),
        gradient_samples=samples,
        gammas=gammas,
        residuals=residuals,
        projection_active=active,
    )


@dataclass(frozen=True, eq=False)
class MeanReversionProbe:
    """Signs of gradient * (delta - delta_star) across the grid.

    Positivity (beyond noise) off the target is the drift condition that
    pulls the learner home; ``failures`` marks grid points where it is
    violated by more than three standard errors.
    """

    deltas: np.ndarray
    values: np.ndarray
    standard_errors: np.ndarray
    failures: np.ndarray


def mean_reversion_probe(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    delta_grid: np.ndarray,
    delta_star: float,
    source,
    n_paths: int,
    threads: int = 1,
) -> MeanReversionProbe:
    if not (0.0 < delta_star < setup.delta_max):
        raise ValueError(f"reference target must be interior, got {delta_star}")
    delta_grid = np.asarray(delta_grid, dtype=float)
    batch = PathBatch.from_source(model, source, n_paths)
    samples = curve_samples(
        setup, model, penalty, delta_grid, batch, threads=threads, want=frozenset({"gradient"})
    )["gradient"]
    signed = samples * (delta_grid[:, None] - delta_star)
    values = signed.mean(axis=1)
    ses = signed.std(axis=1, ddof=1) / math.sqrt(samples.shape[1])
    failures = values < -3.0 * ses
    return MeanReversionProbe(
        deltas=delta_grid, values=values, standard_errors=ses, failures=failures
    )


def replay_step_diagnostics(
    paths: Sequence[PricePath],
    schedule: StepSchedule,
    upper: float,
    checkpoints: Sequence[int] | None = None,
    corner_samples: int = 20_000,
    seed: int = 0,
) -> list[tuple[int, float, float]]:
    """Averaging-mode step diagnostics on a replay prefix.

    For a growing prefix of the replayed windows, estimates the star
    discrepancy of the window vectors (a lower bound above dimension two)
    and reports ``(n, D*_n, n * D*_n * gamma_n)``.  The last column must tend
    to zero for the averaging-mode convergence conditions; a non-decreasing
    trend is a red flag for the chosen schedule.
    """
    if not paths:
        raise ValueError("need at least one replay window")
    if checkpoints is None:
        n = len(paths)
        checkpoints = sorted({max(2, n // 8), max(2, n // 4), max(2, n // 2), n})
    vectors = np.stack([p.values for p in paths])
    out = []
    for n in checkpoints:
        if n < 1 or n > len(paths):
            raise ValueError(f"checkpoint {n} outside 1..{len(paths)}")
        result = star_discrepancy(
            vectors[:n], upper=upper, corner_samples=corner_samples, seed=seed
        )
        out.append((n, result.value, n * result.value * schedule.gamma(n)))
    return out
