"""Newton solver for the entropy-balancing dual.

The primal problem minimizes the Kullback-Leibler divergence of unit weights
from base weights subject to zero weighted means of every balance column
(treatment, covariates, cross-products) and a sum-to-one constraint. Its
Lagrange dual collapses to an unconstrained convex program in the 2K+1
multipliers gamma:

    J(gamma) = log( sum_i q_i * exp(gamma . g_i) )

which this module minimizes by damped Newton steps. Far from the optimum,
steps pass an Armijo backtracking line search; once the certifiable decrease
falls below the objective's float resolution, full Newton steps are accepted
on gradient decrease instead. At the optimum the gradient of J is the vector
of weighted balance-column means, so the gradient tolerance directly bounds
the residual imbalance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .data import BalancingWeights, StandardizedSample
from .errors import (
    InfeasibleConstraints,
    NonFiniteDual,
    NotConverged,
    SingularHessian,
    ThresholdInfeasible,
)

# Dual iterates beyond this norm signal an infeasible constraint set (the
# continuous-treatment analog of empty common support).
_GAMMA_BOUND = 1e6

_MIN_STEP = 1e-14


@dataclass(frozen=True)
class SolverOptions:
    """Tuning knobs for the Newton iteration.

    ``gradient_tolerance`` is an infinity-norm bound on the dual gradient in
    standardized units; the default keeps weighted correlations at zero to
    reporting precision.
    """

    gradient_tolerance: float = 1e-8
    max_iterations: int = 200
    ridge: float = 1e-9
    line_search_shrink: float = 0.5
    armijo_c: float = 1e-4

    def __post_init__(self):
        if self.gradient_tolerance <= 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if not 0 < self.line_search_shrink < 1:
            raise ValueError("line_search_shrink must lie in (0, 1)")
        if self.armijo_c <= 0:
            raise ValueError("armijo_c must be positive")


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    dual_value_trace: list
    final_gradient_norm: float


def _prepare_base_weights(n: int, base_weights) -> np.ndarray:
    if base_weights is None:
        return np.full(n, 1.0 / n)
    q = np.ravel(np.asarray(base_weights, dtype=float))
    if q.size != n:
        raise ValueError(f"base_weights has length {q.size}, expected {n}")
    if np.any(q <= 0) or not np.all(np.isfinite(q)):
        raise ValueError("base_weights must be strictly positive and finite")
    return q


def _log_scores(gamma, matrix, log_q) -> np.ndarray:
    s = matrix @ np.asarray(gamma, dtype=float) + log_q
    if not np.all(np.isfinite(s)):
        raise NonFiniteDual("dual exponent overflowed; multipliers are pathological")
    return s


def _softmax(s: np.ndarray) -> np.ndarray:
    z = np.exp(s - s.max())
    return z / z.sum()


def dual_objective(gamma, sample: StandardizedSample, base_weights=None) -> float:
    """Value of J(gamma) = log sum_i q_i exp(gamma . g_i).

    Evaluated with a max-shift so no representable gamma overflows; this is
    the negated dual, so the solver minimizes it.
    """
    matrix = sample.constraint_matrix
    q = _prepare_base_weights(sample.n, base_weights)
    s = _log_scores(gamma, matrix, np.log(q))
    m = s.max()
    return float(m + np.log(np.exp(s - m).sum()))


def dual_gradient(gamma, sample: StandardizedSample, base_weights=None) -> np.ndarray:
    """Gradient of J: the weighted means of the balance columns at gamma.

    Uses the implied weights w_i(gamma), base weights included in numerator
    and denominator alike.
    """
    matrix = sample.constraint_matrix
    q = _prepare_base_weights(sample.n, base_weights)
    w = _softmax(_log_scores(gamma, matrix, np.log(q)))
    return matrix.T @ w


def dual_hessian(gamma, sample: StandardizedSample, base_weights=None) -> np.ndarray:
    """Hessian of J: the weighted covariance of the balance columns at gamma.

    Positive semidefinite by construction.
    """
    matrix = sample.constraint_matrix
    q = _prepare_base_weights(sample.n, base_weights)
    w = _softmax(_log_scores(gamma, matrix, np.log(q)))
    mean = matrix.T @ w
    return (matrix * w[:, None]).T @ matrix - np.outer(mean, mean)


def recover_weights(gamma, sample: StandardizedSample, base_weights=None) -> np.ndarray:
    """Weights implied by the multipliers: w_i = q_i e^{gamma.g_i} / Z.

    Strictly positive and normalized to sum one; any constant factor on the
    base weights cancels.
    """
    matrix = sample.constraint_matrix
    q = _prepare_base_weights(sample.n, base_weights)
    return _softmax(_log_scores(gamma, matrix, np.log(q)))


def solve(
    sample: StandardizedSample,
    base_weights=None,
    options: Optional[SolverOptions] = None,
) -> tuple:
    """Solve for entropy-balancing weights.

    Damped Newton with an analytic Hessian (plus a tiny ridge); the accepted
    dual values are non-increasing up to float rounding. On success the
    weighted mean of every balance column is below the gradient tolerance,
    which makes the weighted Pearson correlation between treatment and each
    covariate zero to numerical precision.

    Returns:
        (BalancingWeights, ConvergenceReport)

    Raises:
        NotConverged: iteration limit reached; the exception carries the last
            iterate for callers that want to accept it.
        InfeasibleConstraints: the dual diverged, meaning no strictly
            positive weights can satisfy the constraints.
        SingularHessian: only possible when ridge is forced to zero.
    """
    opts = options or SolverOptions()
    matrix = sample.constraint_matrix
    n, m = matrix.shape
    q = _prepare_base_weights(n, base_weights)
    q = q / q.sum()
    log_q = np.log(q)

    def objective(g):
        s = _log_scores(g, matrix, log_q)
        top = s.max()
        return float(top + np.log(np.exp(s - top).sum()))

    gamma = np.zeros(m)
    value = objective(gamma)
    grad = matrix.T @ _softmax(_log_scores(gamma, matrix, log_q))
    trace = [value]
    iterations = 0

    for _ in range(opts.max_iterations):
        grad_norm = float(np.abs(grad).max())
        if grad_norm <= opts.gradient_tolerance:
            break

        weights = _softmax(_log_scores(gamma, matrix, log_q))
        mean = matrix.T @ weights
        hessian = (matrix * weights[:, None]).T @ matrix - np.outer(mean, mean)
        if opts.ridge:
            hessian = hessian + opts.ridge * np.eye(m)
        try:
            factor = scipy.linalg.cho_factor(hessian)
        except scipy.linalg.LinAlgError:
            raise SingularHessian(
                "dual Hessian is singular; rerun with a positive ridge"
            ) from None
        direction = -scipy.linalg.cho_solve(factor, grad)
        slope = float(grad @ direction)

        accepted = None
        if -slope <= 1e-13 * (1.0 + abs(value)):
            # Local phase: the certifiable Armijo decrease (half the Newton
            # decrement squared) is below the objective's float resolution,
            # so objective comparisons are pure noise. Take the full Newton
            # step as long as it shrinks the gradient.
            candidate = gamma + direction
            cand_grad = matrix.T @ _softmax(_log_scores(candidate, matrix, log_q))
            if float(np.abs(cand_grad).max()) < grad_norm:
                accepted = (candidate, objective(candidate))
        else:
            step = 1.0
            while step >= _MIN_STEP:
                candidate = gamma + step * direction
                cand_value = objective(candidate)
                if cand_value <= value + opts.armijo_c * step * slope:
                    accepted = (candidate, cand_value)
                    break
                step *= opts.line_search_shrink
        if accepted is None:
            # Numerical floor reached; leave the loop and let the final
            # gradient check decide.
            break

        gamma, value = accepted
        grad = matrix.T @ _softmax(_log_scores(gamma, matrix, log_q))
        iterations += 1
        trace.append(value)
        if float(np.linalg.norm(gamma)) > _GAMMA_BOUND:
            raise InfeasibleConstraints(
                "dual multipliers diverged; the balance constraints admit no "
                "strictly positive weights"
            )

    grad_norm = float(np.abs(grad).max())
    converged = grad_norm <= opts.gradient_tolerance
    report = ConvergenceReport(
        converged=converged,
        iterations=iterations,
        dual_value_trace=trace,
        final_gradient_norm=grad_norm,
    )
    weights = BalancingWeights(
        weights=_softmax(_log_scores(gamma, matrix, log_q)),
        base_weights=q,
        gamma=gamma,
        converged=converged,
        iterations=iterations,
        final_gradient_norm=grad_norm,
        method_tag="ebct",
    )
    if not converged:
        raise NotConverged(weights, report)
    return weights, report


def truncate_and_rebalance(
    sample: StandardizedSample,
    weights: BalancingWeights,
    threshold: float,
    max_rounds: int = 100,
    options: Optional[SolverOptions] = None,
) -> BalancingWeights:
    """Cap extreme weights and re-solve until no weight exceeds the threshold.

    Each round caps weights at ``threshold``, renormalizes, and re-runs the
    solver with the capped weights as base weights. The result still satisfies
    the balance constraints within tolerance but concentrates less mass on
    single units. Stops once the maximum weight is at or below the threshold
    (within 1e-10) or after ``max_rounds``; the excess over the threshold
    shrinks geometrically, so the default round budget is generous.

    Raises:
        ThresholdInfeasible: threshold below 1/n (no weight vector summing to
            one can satisfy the cap).
        NotConverged: propagated from an inner solve.
    """
    n = weights.n
    if threshold < 1.0 / n:
        raise ThresholdInfeasible(
            f"threshold {threshold} is below 1/n = {1.0 / n}"
        )
    if max_rounds < 0:
        raise ValueError("max_rounds must be non-negative")

    current = weights
    for _ in range(max_rounds):
        if current.weights.max() <= threshold + 1e-10:
            break
        capped = np.minimum(current.weights, threshold)
        capped = capped / capped.sum()
        current, _ = solve(sample, base_weights=capped, options=options)
    return current
