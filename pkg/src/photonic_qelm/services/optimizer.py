"""Model-free tuning of the measurement projection.

Alternating coordinate descent driven by central finite differences of a measured
loss, plus exhaustive landscape scans. All angles are in degrees and every setting
handed to an evaluator lies on the configured angle grid.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from ..optics import (
    DEFAULT_ANGLE_GRID,
    MeasurementSettings,
    coordinate_names,
    get_coordinate,
    snap_angle,
    with_coordinate,
    wrap_angle,
)
from ..schemas import GridAxis, OptimizerConfig
from .losses import LossEvaluationError, LossEvaluator, LossResult, ProjectionSettings

logger = logging.getLogger(__name__)


class GridCollisionError(ValueError):
    """Raised when snapping collapses both finite-difference points onto one angle."""


def finite_diff_gradient(
    loss: LossEvaluator,
    settings: ProjectionSettings,
    coordinate: str,
    epsilon: float,
    grid: float = DEFAULT_ANGLE_GRID,
) -> float:
    """Central difference along one coordinate, the others held fixed, per radian.

    ``epsilon`` and ``grid`` are in degrees. Both displaced angles are snapped to
    ``grid``; the quotient divides by their actual separation in radians, which equals
    2ε whenever ε is itself on the grid.
    """

    center = get_coordinate(settings, coordinate)
    plus = snap_angle(center + epsilon, grid)
    minus = snap_angle(center - epsilon, grid)
    if plus == minus:
        raise GridCollisionError(
            f"finite-difference step {epsilon} collapses on grid {grid} at {coordinate}={center}"
        )
    upper = loss(with_coordinate(settings, coordinate, plus)).loss
    lower = loss(with_coordinate(settings, coordinate, minus)).loss
    return (upper - lower) / math.radians(plus - minus)


@dataclass(frozen=True, slots=True)
class TraceRecord:
    evaluation: int
    sweep: int
    iteration: int
    coordinate: str
    angles: dict[str, float]
    loss: float
    gradient: float | None
    best_loss: float


@dataclass
class OptimizationTrace:
    initial: ProjectionSettings
    records: list[TraceRecord] = field(default_factory=list)
    best_settings: ProjectionSettings = ()
    best_loss: float = math.inf
    evaluations: int = 0
    converged: bool = False
    budget_exhausted: bool = False
    failed: bool = False
    error: str | None = None


class _BudgetExhausted(Exception):
    pass


class _RetriesExceeded(Exception):
    pass


@dataclass
class _CountingEvaluator:
    """Counts evaluations, enforces the evaluation cap and the retry budget."""

    loss: LossEvaluator
    cfg: OptimizerConfig
    evaluations: int = 0
    failures: int = 0

    def __call__(self, settings: ProjectionSettings) -> LossResult:
        while True:
            cap = self.cfg.max_evaluations
            if cap is not None and self.evaluations >= cap:
                raise _BudgetExhausted
            self.evaluations += 1
            try:
                return self.loss(settings)
            except LossEvaluationError as exc:
                self.failures += 1
                logger.warning("loss evaluation failed (%d so far): %s", self.failures, exc)
                if self.failures > self.cfg.retry_budget:
                    raise _RetriesExceeded(str(exc)) from exc

    def with_seed(self, seed: int) -> LossEvaluator:
        return self.loss.with_seed(seed)


def default_coordinates(lines: int) -> tuple[str, ...]:
    """θ then φ on one line; on two lines only the HWPs, with the QWPs pinned."""

    if lines == 1:
        return ("theta", "phi")
    return tuple(f"theta{i}" for i in range(1, lines + 1))


def _angles(settings: ProjectionSettings) -> dict[str, float]:
    names = coordinate_names(len(settings))
    return {name: get_coordinate(settings, name) for name in names}


def coordinate_descent(
    loss: LossEvaluator,
    init: Sequence[MeasurementSettings],
    cfg: OptimizerConfig,
) -> OptimizationTrace:
    """Alternating one-coordinate updates ν_k ← snap(ν_k − η ∂ℒ/∂ν_k).

    The gradient is per radian, so the step η·∂ℒ/∂ν_k is converted to degrees before
    snapping. Each coordinate is iterated until the loss fails to improve ``patience``
    times in a row (or ``max_iters_per_coordinate`` is hit) and is then fixed at its
    best-seen value. Sweeps repeat until a full sweep brings no improvement. Steps
    shorter than one grid step are lengthened to one grid step; angles wrap into
    [0°, 180°).
    """

    grid = cfg.angle_grid
    coords = tuple(cfg.coordinates or default_coordinates(len(init)))
    current: ProjectionSettings = tuple(
        MeasurementSettings(wrap_angle(s.theta, grid), wrap_angle(s.phi, grid), grid)
        for s in init
    )
    trace = OptimizationTrace(initial=current, best_settings=current)
    evaluate = _CountingEvaluator(loss, cfg)

    try:
        best_loss = evaluate(current).loss
        trace.best_loss = best_loss
        trace.records.append(
            TraceRecord(evaluate.evaluations, 0, 0, "init", _angles(current), best_loss, None,
                        best_loss)
        )
        for sweep in range(1, cfg.max_sweeps + 1):
            improved = False
            for coord in coords:
                value = best_value = get_coordinate(current, coord)
                stale = 0
                for iteration in range(1, cfg.max_iters_per_coordinate + 1):
                    point = with_coordinate(current, coord, value)
                    gradient = finite_diff_gradient(evaluate, point, coord, cfg.fd_step, grid)
                    step = math.degrees(-cfg.learning_rate * gradient)
                    if step == 0.0 or not math.isfinite(step):
                        stale += 1
                        if stale >= cfg.patience:
                            break
                        continue
                    if grid > 0.0 and abs(step) < grid:
                        step = math.copysign(grid, step)
                    value = wrap_angle(value + step, grid)
                    trial_loss = evaluate(with_coordinate(current, coord, value)).loss
                    if trial_loss < best_loss - cfg.improvement_floor:
                        best_loss, best_value = trial_loss, value
                        stale, improved = 0, True
                    else:
                        stale += 1
                    trial = with_coordinate(current, coord, value)
                    trace.records.append(
                        TraceRecord(evaluate.evaluations, sweep, iteration, coord,
                                    _angles(trial), trial_loss, gradient, best_loss)
                    )
                    logger.debug(
                        "sweep %d %s=%.1f loss=%.6g grad=%.6g", sweep, coord, value,
                        trial_loss, gradient,
                    )
                    if stale >= cfg.patience:
                        break
                current = with_coordinate(current, coord, best_value)
                trace.best_settings, trace.best_loss = current, best_loss
            logger.info("sweep %d finished: best loss %.6g", sweep, best_loss)
            if not improved:
                trace.converged = True
                break
    except _BudgetExhausted:
        trace.budget_exhausted = True
        logger.info("evaluation budget of %s exhausted", cfg.max_evaluations)
    except _RetriesExceeded as exc:
        trace.failed = True
        trace.error = str(exc)
        logger.warning("coordinate descent aborted: %s", exc)

    trace.evaluations = evaluate.evaluations
    return trace


@dataclass(frozen=True)
class LandscapeGrid:
    """Loss over a 2-D grid of two coordinates; failed cells hold NaN."""

    coordinates: tuple[str, str]
    axis1: tuple[float, ...]
    axis2: tuple[float, ...]
    evaluated1: tuple[float, ...]
    evaluated2: tuple[float, ...]
    losses: NDArray[np.float64]
    sigma: NDArray[np.float64]
    failures: tuple[tuple[int, int, str], ...] = ()

    @property
    def argmin(self) -> tuple[int, int] | None:
        """Row-major first minimum (ties go to the earliest cell); None if every cell failed."""

        if np.all(np.isnan(self.losses)):
            return None
        flat = int(np.nanargmin(self.losses))
        return divmod(flat, self.losses.shape[1])

    @property
    def best_loss(self) -> float | None:
        cell = self.argmin
        return None if cell is None else float(self.losses[cell])

    def cell_settings(self, base: ProjectionSettings, i: int, j: int) -> ProjectionSettings:
        first, second = self.coordinates
        return with_coordinate(
            with_coordinate(base, first, self.evaluated1[i]), second, self.evaluated2[j]
        )


def derive_seed(seed: int, *indices: int) -> int:
    """Independent child seed for a cell, resample or split."""

    return int(np.random.SeedSequence([seed, *indices]).generate_state(1, np.uint64)[0])


def landscape_scan(
    loss: LossEvaluator,
    base: Sequence[MeasurementSettings],
    axis1: GridAxis,
    axis2: GridAxis,
    coordinates: Sequence[str] = ("theta", "phi"),
    *,
    repeats: int = 1,
    seed: int = 0,
    threads: int = 1,
    grid: float = DEFAULT_ANGLE_GRID,
) -> LandscapeGrid:
    """Evaluate the loss on every cell; cells use independent derived noise streams.

    With ``repeats > 1`` each cell reports the mean and sample standard deviation of
    repeated noisy evaluations. A failing cell is recorded and left as NaN.
    """

    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    first, second = coordinates
    base = tuple(MeasurementSettings(s.theta, s.phi, grid) for s in base)
    nominal1, nominal2 = tuple(axis1.values()), tuple(axis2.values())
    evaluated1 = tuple(snap_angle(v, grid) for v in nominal1)
    evaluated2 = tuple(snap_angle(v, grid) for v in nominal2)
    n2 = len(evaluated2)

    def run_cell(index: int) -> tuple[float, float, str | None]:
        i, j = divmod(index, n2)
        settings = with_coordinate(
            with_coordinate(base, first, evaluated1[i]), second, evaluated2[j]
        )
        evaluator = loss.with_seed(derive_seed(seed, index))
        try:
            samples = [evaluator(settings).loss for _ in range(repeats)]
        except LossEvaluationError as exc:
            return math.nan, math.nan, str(exc)
        spread = float(np.std(samples, ddof=1)) if repeats > 1 else 0.0
        return float(np.mean(samples)), spread, None

    n_cells = len(evaluated1) * n2
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run_cell, range(n_cells)))

    losses = np.array([r[0] for r in results]).reshape(len(evaluated1), n2)
    sigma = np.array([r[1] for r in results]).reshape(len(evaluated1), n2)
    failures = tuple(
        (*divmod(index, n2), r[2]) for index, r in enumerate(results) if r[2] is not None
    )
    if failures:
        logger.warning("%d of %d landscape cells failed", len(failures), n_cells)
    logger.info("landscape scan of %d cells done", n_cells)
    return LandscapeGrid(
        coordinates=(first, second),
        axis1=nominal1,
        axis2=nominal2,
        evaluated1=evaluated1,
        evaluated2=evaluated2,
        losses=losses,
        sigma=sigma,
        failures=failures,
    )


__all__ = [
    "GridCollisionError",
    "LandscapeGrid",
    "OptimizationTrace",
    "TraceRecord",
    "coordinate_descent",
    "default_coordinates",
    "derive_seed",
    "finite_diff_gradient",
    "landscape_scan",
]
