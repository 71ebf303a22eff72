"""Dose-response estimation by weighted polynomial least squares.

Fits a polynomial in the treatment (cubic by default) by weighted least
squares, evaluates the fitted curve and its exact derivative on a grid, and
attaches bootstrap standard errors obtained by re-running the whole pipeline
(weight estimation included) on unit-level resamples.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from numpy.polynomial import polynomial as npoly

from .data import Dataset
from .errors import (
    EbctError,
    ExtrapolationWarning,
    RankDeficientDesign,
    ResampleDegenerate,
)
from .solver import SolverOptions
from .weighting import estimate_weights

# Normal critical value for a two-sided test at the 10% level.
_Z_10PCT = 1.645


def fit_wls(y, design, w) -> np.ndarray:
    """Coefficients minimizing the weighted residual sum of squares.

    Solves the normal equations with a Cholesky factorization; the weight
    scale is irrelevant (doubling all weights changes nothing).

    Raises:
        RankDeficientDesign: the design is rank deficient under the weights.
    """
    y = np.ravel(np.asarray(y, dtype=float))
    design = np.asarray(design, dtype=float)
    w = np.ravel(np.asarray(w, dtype=float))
    weighted = design * w[:, None]
    gram = weighted.T @ design
    rhs = weighted.T @ y
    try:
        factor = scipy.linalg.cho_factor(gram)
    except scipy.linalg.LinAlgError:
        raise RankDeficientDesign(
            "design matrix is rank deficient under the weight metric"
        ) from None
    return scipy.linalg.cho_solve(factor, rhs)


def default_grid(treatment, points: int = 50) -> np.ndarray:
    """Evaluation grid: equally spaced between the 2nd and 98th percentiles.

    Keeps the fit away from the unstable tails of the treatment distribution.
    """
    lo, hi = np.percentile(np.asarray(treatment, dtype=float), [2.0, 98.0])
    return np.linspace(lo, hi, points)


@dataclass(frozen=True)
class DrfFit:
    """Polynomial dose-response fit with derivatives on a grid.

    Derivatives come from exact differentiation of the fitted coefficients
    (intercept first). ``derivative_se`` and ``significant_10pct`` stay None
    until a bootstrap run fills them in.
    """

    degree: int
    coefficients: np.ndarray
    grid: np.ndarray
    drf_values: np.ndarray
    drf_derivatives: np.ndarray
    derivative_se: Optional[np.ndarray] = None
    significant_10pct: Optional[np.ndarray] = None

    def __post_init__(self):
        grid = np.ravel(np.asarray(self.grid, dtype=float))
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "coefficients", np.ravel(np.asarray(self.coefficients, dtype=float)))

    def write_csv(self, path) -> None:
        """Plot-ready CSV with columns t, drf, derivative, se, significant."""
        se = self.derivative_se
        sig = self.significant_10pct
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t", "drf", "derivative", "se", "significant"])
            for i, t in enumerate(self.grid):
                writer.writerow(
                    [
                        repr(float(t)),
                        repr(float(self.drf_values[i])),
                        repr(float(self.drf_derivatives[i])),
                        "" if se is None else repr(float(se[i])),
                        "" if sig is None else int(sig[i]),
                    ]
                )


def estimate_drf(
    dataset: Dataset,
    weights,
    degree: int = 3,
    grid=None,
) -> DrfFit:
    """Weighted polynomial fit of the outcome on the treatment.

    The design is [1, T, ..., T^degree] on the original treatment scale.
    Points outside the observed treatment range trigger a non-fatal
    ExtrapolationWarning.
    """
    if dataset.outcome is None:
        raise ValueError("dataset has no outcome column")
    if degree < 1:
        raise ValueError("degree must be at least 1")
    t = dataset.treatment
    grid = default_grid(t) if grid is None else np.ravel(np.asarray(grid, dtype=float))
    if grid.size and (grid.min() < t.min() or grid.max() > t.max()):
        warnings.warn(
            "grid extends beyond the observed treatment range; dose-response "
            "values there are extrapolated",
            ExtrapolationWarning,
            stacklevel=2,
        )
    w = weights.weights if hasattr(weights, "weights") else np.asarray(weights, dtype=float)
    design = npoly.polyvander(t, degree)
    coefficients = fit_wls(dataset.outcome, design, w)
    return DrfFit(
        degree=degree,
        coefficients=coefficients,
        grid=grid,
        drf_values=npoly.polyval(grid, coefficients),
        drf_derivatives=npoly.polyval(grid, npoly.polyder(coefficients)),
    )


@dataclass(frozen=True)
class DrfPipeline:
    """Names the weighting method and fit settings a bootstrap must re-run."""

    method: str = "ebct"
    degree: int = 3
    truncation: Optional[float] = None
    solver_options: Optional[SolverOptions] = None

    def derivatives(self, dataset: Dataset, grid) -> np.ndarray:
        weights = estimate_weights(
            dataset, self.method, truncation=self.truncation, options=self.solver_options
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ExtrapolationWarning)
            fit = estimate_drf(dataset, weights, degree=self.degree, grid=grid)
        return fit.drf_derivatives


def bootstrap_statistic(
    n_units: int,
    statistic: Callable[[np.ndarray], np.ndarray],
    replications: int,
    seed: int,
    max_draw_factor: int = 10,
) -> np.ndarray:
    """Unit-level bootstrap of an arbitrary statistic.

    Draws index vectors with replacement and stacks ``statistic(indices)``
    row-wise. A replicate that raises a pipeline error (constant column after
    resampling, infeasible solve, ...) is redrawn; each draw derives its
    generator from (seed, attempt index) so results do not depend on
    execution order.

    Raises:
        ResampleDegenerate: more than ``max_draw_factor * replications``
            draws were needed.
    """
    if replications < 2:
        raise ValueError("at least 2 bootstrap replications are required")
    rows = []
    attempt = 0
    while len(rows) < replications:
        if attempt >= max_draw_factor * replications:
            raise ResampleDegenerate(
                f"{attempt} resampling attempts produced only {len(rows)} "
                f"usable replicates out of {replications}"
            )
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(attempt,)))
        indices = rng.integers(0, n_units, size=n_units)
        attempt += 1
        try:
            rows.append(np.ravel(np.asarray(statistic(indices), dtype=float)))
        except (EbctError, np.linalg.LinAlgError):
            continue
    return np.vstack(rows)


@dataclass(frozen=True)
class BootstrapResult:
    derivative_se: np.ndarray
    significant_10pct: np.ndarray
    replications: int
    point_derivatives: np.ndarray = field(repr=False, default=None)


def bootstrap_se(
    dataset: Dataset,
    pipeline: DrfPipeline,
    replications: int,
    grid,
    seed: int,
    interval: str = "normal",
) -> BootstrapResult:
    """Bootstrap standard errors for the dose-response derivative.

    Resamples units with replacement and re-runs the full pipeline (weight
    estimation included) per replicate, which propagates weight-estimation
    uncertainty. The SE at each grid point is the sample standard deviation
    (denominator B-1) across replicates; a point is flagged significant at
    the 10% level when |derivative| / SE exceeds 1.645. ``interval="percentile"``
    flags points whose central 90% bootstrap interval excludes zero instead.
    """
    if interval not in ("normal", "percentile"):
        raise ValueError(f"unknown interval rule {interval!r}")
    grid = np.ravel(np.asarray(grid, dtype=float))
    point = pipeline.derivatives(dataset, grid)
    draws = bootstrap_statistic(
        dataset.n,
        lambda idx: pipeline.derivatives(dataset.subset(idx), grid),
        replications,
        seed,
    )
    se = draws.std(axis=0, ddof=1)
    if interval == "normal":
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.abs(point) / se
        significant = np.where(np.isnan(ratio), False, ratio > _Z_10PCT)
    else:
        lo, hi = np.percentile(draws, [5.0, 95.0], axis=0)
        significant = (lo > 0) | (hi < 0)
    return BootstrapResult(
        derivative_se=se,
        significant_10pct=significant.astype(bool),
        replications=replications,
        point_derivatives=point,
    )


def attach_bootstrap(fit: DrfFit, result: BootstrapResult) -> DrfFit:
    """Return the fit with bootstrap SEs and significance flags filled in."""
    return replace(
        fit,
        derivative_se=result.derivative_se,
        significant_10pct=result.significant_10pct,
    )
