"""Sweep and minimization of the average (peak) AoI over the preemption
probability for a fixed arrival rate and service law."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import SystemConfig, average_aoi, average_paoi
from .errors import AoiqError
from .simulator import SimConfig, run

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_ENDPOINT_TIE_REL = 1e-9


@dataclass(frozen=True)
class SweepRow:
    """One point of a preemption-probability sweep."""

    theta: float
    avg_aoi: float
    avg_paoi: float
    sim_avg_aoi: float | None = None
    sim_avg_paoi: float | None = None
    sim_se_aoi: float | None = None
    sim_se_paoi: float | None = None
    error: str | None = None


@dataclass(frozen=True)
class Optimum:
    """Result of minimizing over the preemption probability."""

    theta_star: float
    objective_value: float
    objective: str
    grid_resolution: int
    refine_tolerance: float


def _objective_fn(objective: str):
    if objective == "aoi":
        return average_aoi
    if objective == "paoi":
        return average_paoi
    raise ValueError(f"objective must be 'aoi' or 'paoi', got {objective!r}")


def sweep_theta(
    arrival_rate: float,
    service,
    grid,
    with_sim: bool = False,
    sim_deliveries: int = 200_000,
    sim_warmup: int = 1_000,
    seed: int = 0,
) -> list[SweepRow]:
    """Evaluate the average AoI and peak AoI on a grid of preemption
    probabilities; rows are pure functions of their inputs and a failed row
    does not abort the sweep.

    With ``with_sim``, each row also carries simulated estimates produced from
    a per-row child stream of ``seed``.
    """
    grid = [float(g) for g in grid]
    if any(not 0.0 <= g <= 1.0 for g in grid):
        raise ValueError(f"grid values must lie in [0, 1], got {grid}")
    if sorted(set(grid)) != grid:
        raise ValueError("grid must be sorted and free of duplicates")
    seeds = np.random.SeedSequence(seed).generate_state(max(len(grid), 1))
    rows = []
    for i, theta in enumerate(grid):
        try:
            cfg = SystemConfig(arrival_rate, theta, service)
            row = SweepRow(theta, average_aoi(cfg), average_paoi(cfg))
        except AoiqError as exc:
            rows.append(SweepRow(theta, math.nan, math.nan, error=str(exc)))
            continue
        if with_sim:
            summary = run(
                SimConfig(cfg, deliveries=sim_deliveries, warmup_deliveries=sim_warmup,
                          seed=int(seeds[i]))
            )
            row = SweepRow(
                theta,
                row.avg_aoi,
                row.avg_paoi,
                sim_avg_aoi=summary.avg_aoi,
                sim_avg_paoi=summary.avg_paoi,
                sim_se_aoi=summary.se_avg_aoi,
                sim_se_paoi=summary.se_avg_paoi,
            )
        rows.append(row)
    return rows


def _golden_section(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Minimize f on [lo, hi] to interval width tol; returns (x, f(x))."""
    x1 = hi - _INV_GOLDEN * (hi - lo)
    x2 = lo + _INV_GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_GOLDEN * (hi - lo)
            f2 = f(x2)
    x = 0.5 * (lo + hi)
    return x, f(x)


def optimize_theta(
    arrival_rate: float,
    service,
    objective: str = "aoi",
    grid_points: int = 101,
    refine_tolerance: float = 1e-4,
) -> Optimum:
    """Minimize the chosen objective over the preemption probability.

    A coarse grid scan guards against multiple local minima (unimodality is
    not guaranteed); the bracket around the grid argmin is then refined by
    golden-section search, and both endpoints are always compared explicitly.
    Ties within 1e-9 relative resolve toward the simpler endpoint policy.
    """
    fn = _objective_fn(objective)

    def f(theta: float) -> float:
        return fn(SystemConfig(arrival_rate, theta, service))

    grid = np.linspace(0.0, 1.0, grid_points)
    values = np.array([f(th) for th in grid])
    i = int(np.argmin(values))
    best_theta, best_value = float(grid[i]), float(values[i])
    if 0 < i < grid_points - 1:
        x, fx = _golden_section(f, float(grid[i - 1]), float(grid[i + 1]), refine_tolerance)
        if fx < best_value:
            best_theta, best_value = x, fx
    for endpoint in (0.0, 1.0):
        v = float(values[0]) if endpoint == 0.0 else float(values[-1])
        if v < best_value * (1.0 - _ENDPOINT_TIE_REL) or (
            abs(v - best_value) <= _ENDPOINT_TIE_REL * abs(best_value)
        ):
            best_theta, best_value = endpoint, v
    return Optimum(
        theta_star=best_theta,
        objective_value=best_value,
        objective=objective,
        grid_resolution=grid_points,
        refine_tolerance=refine_tolerance,
    )
