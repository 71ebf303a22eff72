"""Front door mapping a method name to estimated balancing weights."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .data import BalancingWeights, Dataset, standardize, uniform_weights
from .ipw import ipw_weights
from .solver import SolverOptions, solve, truncate_and_rebalance

METHODS = ("ebct", "ipw", "uniform")


def cap_weights(weights: BalancingWeights, threshold: float) -> BalancingWeights:
    """Iteratively cap weights at a threshold and renormalize.

    Plain capping without re-solving any constraints; used for optional IPW
    robustness runs. Entropy-balancing weights should go through
    ``truncate_and_rebalance`` instead so balance is restored.
    """
    w = weights.weights.copy()
    n = w.size
    if threshold < 1.0 / n:
        raise ValueError(f"threshold {threshold} is below 1/n = {1.0 / n}")
    for _ in range(100):
        if w.max() <= threshold + 1e-12:
            break
        w = np.minimum(w, threshold)
        w = w / w.sum()
    return BalancingWeights(
        weights=w,
        base_weights=weights.base_weights,
        gamma=weights.gamma,
        converged=weights.converged,
        iterations=weights.iterations,
        final_gradient_norm=weights.final_gradient_norm,
        method_tag=weights.method_tag,
    )


def estimate_weights(
    dataset: Dataset,
    method: str,
    truncation: Optional[float] = None,
    options: Optional[SolverOptions] = None,
) -> BalancingWeights:
    """Estimate weights for one of the supported methods.

    ``method`` is one of ``ebct``, ``ipw`` or ``uniform`` (``unweighted`` is
    accepted as an alias for ``uniform``). A truncation threshold triggers
    truncate-and-rebalance for ebct and a simple cap-and-renormalize for ipw.
    """
    name = method.lower()
    if name == "unweighted":
        name = "uniform"
    if name == "uniform":
        return uniform_weights(dataset.n)
    if name == "ipw":
        weights = ipw_weights(dataset)
        if truncation is not None:
            weights = cap_weights(weights, truncation)
        return weights
    if name == "ebct":
        sample = standardize(dataset)
        weights, _ = solve(sample, options=options)
        if truncation is not None:
            weights = truncate_and_rebalance(sample, weights, truncation, options=options)
        return weights
    raise ValueError(f"unknown weighting method {method!r}")
