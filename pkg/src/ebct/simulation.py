"""Monte-Carlo study: data-generating process, scenarios, bias/RMSE tables.

The generated selection problem has ten partially correlated covariates, a
treatment that is linear in all of them plus normal noise, and an outcome
with a constant unit treatment effect. Scenario cells vary the sample size,
the selection-noise scale, the outcome nonlinearity and the covariate set
handed to the weighting step; each cell aggregates bias and RMSE in percent
of the true effect over independent replications.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset
from .diagnostics import balance_report
from .drf import fit_wls
from .errors import EbctError, NegativeBase, ScenarioDegenerate
from .weighting import estimate_weights

SAMPLE_SIZES = (200, 500, 1000)
SELECTION_SCALES = (4.0, 2.0)
OUTCOME_ETAS = (1.0, 1.25, 1.5)
SPECIFICATIONS = (1, 2, 3)
METHODS = ("unweighted", "ipw", "ebct")

TRUE_EFFECT = 1.0

# Treatment equation coefficients on X1..X10.
_TREATMENT_COEF = np.array([1.0, 0.6, 1.2, 1.0, 0.5, 1.0, 0.8, 0.8, 0.8, 0.8])

# Outcome noise scale, read as a standard deviation.
_OUTCOME_NOISE_SD = 5.0

# Covariance of the jointly normal block X7..X10.
_NORMAL_BLOCK_COV = np.full((4, 4), 0.2) + 0.8 * np.eye(4)
_NORMAL_BLOCK_CHOL = np.linalg.cholesky(_NORMAL_BLOCK_COV)


def replication_rng(master_seed: int, replicate_index: int) -> np.random.Generator:
    """Independent generator for one replication.

    Streams derive from (master_seed, replicate index) through the seed
    sequence spawn mechanism, so results never depend on scheduling or
    thread count.
    """
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(replicate_index,))
    )


def gen_covariates(n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw the ten-covariate design.

    X1 ~ U[0,5]; X2 ~ chi-squared(2); X3..X5 are indicators cutting one
    latent standard normal at -1, 0 and 1 (the upper interval is the omitted
    reference); X6 ~ Bernoulli(0.5); X7..X10 are jointly standard normal
    with pairwise covariance 0.2.
    """
    x = np.empty((n, 10))
    x[:, 0] = rng.uniform(0.0, 5.0, size=n)
    x[:, 1] = rng.chisquare(2.0, size=n)
    latent = rng.standard_normal(n)
    x[:, 2] = latent <= -1.0
    x[:, 3] = (latent > -1.0) & (latent <= 0.0)
    x[:, 4] = (latent > 0.0) & (latent <= 1.0)
    x[:, 5] = rng.binomial(1, 0.5, size=n)
    x[:, 6:10] = rng.standard_normal((n, 4)) @ _NORMAL_BLOCK_CHOL.T
    return x


def gen_treatment(x: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Treatment intensity: linear index in X1..X10 plus sigma * N(0,1) noise."""
    if x.shape[1] != 10:
        raise ValueError("expected 10 covariate columns")
    return x @ _TREATMENT_COEF + sigma * rng.standard_normal(x.shape[0])


def gen_outcome(x: np.ndarray, t: np.ndarray, eta: float, rng: np.random.Generator) -> np.ndarray:
    """Outcome with unit treatment effect: (X1+X2)^eta + X5 + X6 + X7 + T + noise."""
    if x.shape[1] != 10:
        raise ValueError("expected 10 covariate columns")
    base = x[:, 0] + x[:, 1]
    if np.any(base < 0):
        raise NegativeBase("X1 + X2 went negative; power transform undefined")
    noise = rng.normal(0.0, _OUTCOME_NOISE_SD, size=x.shape[0])
    return base**eta + x[:, 4] + x[:, 5] + x[:, 6] + t + noise


def apply_specification(x: np.ndarray, spec: int) -> np.ndarray:
    """Covariate matrix handed to the weighting step.

    Specification 1 is the correct set; 2 mis-measures X1 and X7 (square
    root and square); 3 additionally drops X2, putting X8 squared in its
    place.
    """
    if x.shape[1] != 10:
        raise ValueError("expected 10 covariate columns")
    if spec == 1:
        return x.copy()
    out = x.copy()
    out[:, 0] = np.sqrt(x[:, 0])
    out[:, 6] = x[:, 6] ** 2
    if spec == 2:
        return out
    if spec == 3:
        out[:, 1] = x[:, 7] ** 2
        return out
    raise ValueError(f"unknown specification {spec!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation cell."""

    n: int
    sigma: float
    eta: float
    spec: int
    replications: int = 1000
    methods: tuple = METHODS
    master_seed: int = 0

    def __post_init__(self):
        if self.n not in SAMPLE_SIZES:
            raise ValueError(f"n must be one of {SAMPLE_SIZES}")
        if float(self.sigma) not in SELECTION_SCALES:
            raise ValueError(f"sigma must be one of {SELECTION_SCALES}")
        if float(self.eta) not in OUTCOME_ETAS:
            raise ValueError(f"eta must be one of {OUTCOME_ETAS}")
        if self.spec not in SPECIFICATIONS:
            raise ValueError(f"spec must be one of {SPECIFICATIONS}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        methods = tuple(self.methods)
        unknown = set(methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "methods", methods)


@dataclass(frozen=True)
class ReplicationRecord:
    """Per-method outcome of a single replication."""

    estimate: float
    max_abs_correlation: float
    max_weight_share: float
    failed: bool = False

    @classmethod
    def failure(cls) -> "ReplicationRecord":
        return cls(
            estimate=float("nan"),
            max_abs_correlation=float("nan"),
            max_weight_share=float("nan"),
            failed=True,
        )


def run_replication(config: ScenarioConfig, replicate_index: int) -> dict:
    """One DGP draw followed by weighting and a linear effect regression.

    For each method: estimate weights on the specification's covariate set,
    regress the outcome on an intercept and the treatment by weighted least
    squares, and record the slope together with balance diagnostics. A
    method failure (non-convergence, infeasibility) is recorded without
    aborting the replication. Deterministic given (master_seed, index).
    """
    rng = replication_rng(config.master_seed, replicate_index)
    x = gen_covariates(config.n, rng)
    t = gen_treatment(x, config.sigma, rng)
    y = gen_outcome(x, t, config.eta, rng)
    x_weighting = apply_specification(x, config.spec)
    weight_data = Dataset(treatment=t, covariates=x_weighting, outcome=y)
    design = np.column_stack([np.ones(config.n), t])

    records = {}
    for method in config.methods:
        try:
            weights = estimate_weights(weight_data, method)
            slope = fit_wls(y, design, weights.weights)[1]
            report = balance_report(weights, weight_data)
            records[method] = ReplicationRecord(
                estimate=float(slope),
                max_abs_correlation=report.max_abs_correlation,
                max_weight_share=report.max_weight_share,
            )
        except (EbctError, np.linalg.LinAlgError):
            records[method] = ReplicationRecord.failure()
    return records


@dataclass(frozen=True)
class MethodSummary:
    """Bias and RMSE in percent of the true effect, plus balance averages."""

    bias_pct: float
    rmse_pct: float
    mean_max_abs_correlation: float
    mean_max_weight_share: float
    failures: int
    estimates: np.ndarray


@dataclass(frozen=True)
class ScenarioResult:
    config: ScenarioConfig
    per_method: dict

    @property
    def failures(self) -> int:
        return sum(summary.failures for summary in self.per_method.values())


def _summarize(estimates, correlations, shares, failures) -> MethodSummary:
    estimates = np.asarray(estimates, dtype=float)
    errors = estimates - TRUE_EFFECT
    return MethodSummary(
        bias_pct=float(abs(errors.mean()) * 100.0),
        rmse_pct=float(np.sqrt(np.mean(errors**2)) * 100.0),
        mean_max_abs_correlation=float(np.mean(correlations)),
        mean_max_weight_share=float(np.mean(shares)),
        failures=failures,
        estimates=estimates,
    )


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    """Aggregate one cell over its replications.

    Failed replicates are excluded per method; the scenario aborts if any
    method loses more than 5% of them.
    """
    collected = {
        method: {"estimates": [], "correlations": [], "shares": [], "failures": 0}
        for method in config.methods
    }
    for index in range(config.replications):
        records = run_replication(config, index)
        for method, record in records.items():
            bucket = collected[method]
            if record.failed:
                bucket["failures"] += 1
            else:
                bucket["estimates"].append(record.estimate)
                bucket["correlations"].append(record.max_abs_correlation)
                bucket["shares"].append(record.max_weight_share)

    per_method = {}
    for method, bucket in collected.items():
        if bucket["failures"] > 0.05 * config.replications:
            raise ScenarioDegenerate(
                f"method {method!r} failed {bucket['failures']} of "
                f"{config.replications} replications"
            )
        per_method[method] = _summarize(
            bucket["estimates"], bucket["correlations"], bucket["shares"], bucket["failures"]
        )
    return ScenarioResult(config=config, per_method=per_method)


def paper_grid(
    sizes: Sequence[int] = SAMPLE_SIZES,
    replications: int = 1000,
    methods: Sequence[str] = METHODS,
    seed: int = 0,
) -> list:
    """The full scenario cross: sizes x selection scales x etas x specs.

    Every cell gets an independent integer master seed derived from the base
    seed and the cell's position, so regenerating the grid with the same seed
    reproduces every cell bit for bit.
    """
    configs = []
    index = 0
    for n in sizes:
        for sigma in SELECTION_SCALES:
            for eta in OUTCOME_ETAS:
                for spec in SPECIFICATIONS:
                    cell_seed = int(
                        np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(
                            1, np.uint64
                        )[0]
                    )
                    configs.append(
                        ScenarioConfig(
                            n=n,
                            sigma=sigma,
                            eta=eta,
                            spec=spec,
                            replications=replications,
                            methods=tuple(methods),
                            master_seed=cell_seed,
                        )
                    )
                    index += 1
    return configs


def run_grid(configs: Sequence[ScenarioConfig], jobs: int = 1) -> list:
    """Run scenario cells, optionally across processes.

    Cells are independent; results come back in input order regardless of
    worker count, so output files do not depend on parallelism.
    """
    configs = list(configs)
    if jobs <= 1 or len(configs) <= 1:
        return [run_scenario(config) for config in configs]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(run_scenario, configs))


def write_grid_csv(results: Sequence[ScenarioResult], path) -> None:
    """One row per scenario and method, full-precision numerics."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "n",
                "sigma",
                "eta",
                "spec",
                "method",
                "bias_pct",
                "rmse_pct",
                "mean_max_abs_corr",
                "mean_max_weight_share",
                "failures",
            ]
        )
        for result in results:
            config = result.config
            for method in config.methods:
                summary = result.per_method[method]
                writer.writerow(
                    [
                        config.n,
                        repr(config.sigma),
                        repr(config.eta),
                        config.spec,
                        method,
                        repr(summary.bias_pct),
                        repr(summary.rmse_pct),
                        repr(summary.mean_max_abs_correlation),
                        repr(summary.mean_max_weight_share),
                        summary.failures,
                    ]
                )


_METHOD_LABELS = {"unweighted": "Unweighted", "ipw": "IPW", "ebct": "EBCT"}


def render_grid_table(results: Sequence[ScenarioResult]) -> str:
    """Text table per sample size: bias/RMSE columns over the (sigma, eta) cross.

    The unweighted row ignores the weighting specification, so it is printed
    once (from the specification-1 cells) above the per-specification blocks.
    """
    by_key = {}
    sizes = []
    for result in results:
        config = result.config
        if config.n not in sizes:
            sizes.append(config.n)
        by_key[(config.n, config.sigma, config.eta, config.spec)] = result

    col_pairs = [
        (sigma, eta) for sigma in SELECTION_SCALES for eta in OUTCOME_ETAS
    ]
    label_width = 18
    cell_width = 9

    def row_for(n, spec, method) -> str:
        cells = []
        for sigma, eta in col_pairs:
            result = by_key.get((n, sigma, eta, spec))
            summary = result.per_method.get(method) if result else None
            if summary is None:
                cells.append("." .rjust(cell_width) * 2)
            else:
                cells.append(
                    f"{summary.bias_pct:>{cell_width}.2f}{summary.rmse_pct:>{cell_width}.2f}"
                )
        return _METHOD_LABELS[method].ljust(label_width) + "".join(cells)

    lines = []
    for n in sizes:
        specs_present = sorted(
            {key[3] for key in by_key if key[0] == n}
        )
        methods_present = []
        for key, result in by_key.items():
            if key[0] == n:
                for method in result.config.methods:
                    if method not in methods_present:
                        methods_present.append(method)

        lines.append(f"Simulated bias and RMSE in percent of the true effect (N={n})")
        header = "".ljust(label_width)
        subheader = "".ljust(label_width)
        for sigma, eta in col_pairs:
            header += f"s={sigma:g} e={eta:g}".center(2 * cell_width)
            subheader += "Bias".rjust(cell_width) + "RMSE".rjust(cell_width)
        lines.append(header)
        lines.append(subheader)
        if "unweighted" in methods_present and specs_present:
            lines.append(row_for(n, specs_present[0], "unweighted"))
        for spec in specs_present:
            lines.append(f"Specification {spec}")
            for method in methods_present:
                if method == "unweighted":
                    continue
                lines.append(row_for(n, spec, method))
        lines.append("")
    return "\n".join(lines)
