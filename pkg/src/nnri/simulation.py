"""Monte Carlo study of the imputed total and its variance estimators.

Each replicate draws a fresh population, a stratified sample, response
indicators, imputes within strata and records the point estimate, the true
total, and every requested variance estimate. Aggregation compares the mean
variance estimate with the Monte Carlo variance of the estimation error
``T_hat - T`` and counts how often each interval covers the replicate's own
population total.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .design import DEFAULT_FRACTIONS, SampleDesign, draw_sample
from .errors import ConfigurationError, NNRIError
from .imputation import checked_imputed_total, impute, match_donors
from .popgen import STRATA_BOUNDARIES, PopulationConfig, Scenario, generate_population
from .response import ResponseMechanism, draw_response, parse_mechanism
from .smooth import fit_ratio, fit_sigma, predict_m
from .streams import derive_seed, substream
from .variance import (
    Z975,
    naive_variance,
    parse_method,
    ve_direct,
    ve_modeled,
    ve_negligible,
    vm_jackknife,
    vm_stratified,
)

log = logging.getLogger(__name__)

NAIVE = "NAIVE"
DEFAULT_METHODS = ("NAIVE", "PARAM1", "PARAM2", "NONPARAM", "PARAM1(M)", "PARAM2(M)", "NONPARAM(M)")


def canonical_method(name: str) -> str:
    if name.strip().upper() == NAIVE:
        return NAIVE
    ratio, sigma = parse_method(name)
    return ratio.upper() + ("(M)" if sigma == "modeled" else "")


@dataclass(frozen=True)
class StudyConfig:
    scenario: Scenario = Scenario.UNIFORM_100K
    population_size: int = 1000
    replicates: int = 500
    mechanism: ResponseMechanism = field(default_factory=lambda: parse_mechanism("mcar75"))
    methods: tuple[str, ...] = DEFAULT_METHODS
    seed: int = 20240101
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    allocation: str = "ceil"
    strata_boundaries: tuple[float, ...] | None = None
    n_knots: int = 10
    lam_grid: tuple[float, ...] | None = None
    ve_mode: str = "full"
    vm_mode: str = "analytic"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        object.__setattr__(self, "mechanism", parse_mechanism(self.mechanism))
        if self.strata_boundaries is None:
            object.__setattr__(self, "strata_boundaries", STRATA_BOUNDARIES[self.scenario])
        object.__setattr__(self, "strata_boundaries", tuple(float(b) for b in self.strata_boundaries))
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if self.lam_grid is not None:
            object.__setattr__(self, "lam_grid", tuple(float(v) for v in self.lam_grid))
        if self.replicates < 2:
            raise ConfigurationError("replicates: B must be at least 2")
        if not self.methods:
            raise ConfigurationError("methods: list must not be empty")
        object.__setattr__(self, "methods", tuple(canonical_method(m) for m in self.methods))
        if self.ve_mode not in ("full", "negligible-f"):
            raise ConfigurationError(f"ve_mode: unknown value {self.ve_mode!r}")
        if self.vm_mode not in ("analytic", "jackknife"):
            raise ConfigurationError(f"vm_mode: unknown value {self.vm_mode!r}")
        if not self.name:
            object.__setattr__(
                self, "name", f"{self.scenario.value}-{self.mechanism.name}-n{self.population_size}"
            )

    def population_config(self, b: int) -> PopulationConfig:
        return PopulationConfig(
            scenario=self.scenario,
            population_size=self.population_size,
            strata_boundaries=self.strata_boundaries,
            seed=derive_seed(self.seed, b, "population"),
        )

    @property
    def design(self) -> SampleDesign:
        return SampleDesign(self.fractions, self.allocation)


@dataclass
class ReplicateResult:
    b: int
    ok: bool
    truth: np.ndarray | None = None
    estimate: np.ndarray | None = None
    variances: dict[str, np.ndarray] = field(default_factory=dict)
    error: str = ""


def _variance_for(method, sample, delta, kappa, values, fits, cfg):
    if method == NAIVE:
        return naive_variance(values, sample)
    ratio, sigma = parse_method(method)
    if ratio not in fits:
        gam = {"n_knots": cfg.n_knots}
        if cfg.lam_grid is not None:
            gam["lam_grid"] = np.asarray(cfg.lam_grid)
        fits[ratio] = fit_ratio(ratio, sample.x, sample.y, delta, sample.weight, sample.stratum,
                                **(gam if ratio == "nonparam" else {}))
    fit = fits[ratio]
    m_hat = predict_m(fit, sample.x, sample.stratum)
    vm = vm_stratified(m_hat, sample) if cfg.vm_mode == "analytic" else vm_jackknife(m_hat, sample)
    if sigma == "direct":
        s2 = np.where(delta[:, None], (sample.y - m_hat) ** 2, 0.0)
        if cfg.ve_mode == "full":
            return vm + ve_direct(sample.weight, delta, kappa, sample.y - m_hat)
        return vm + ve_negligible(sample.weight, delta, kappa, s2)
    sig = fit_sigma(ratio.upper() + "M", fit, sample.x, sample.y, delta, sample.stratum,
                    n_knots=cfg.n_knots, lam_grid=cfg.lam_grid)
    if cfg.ve_mode == "full":
        return vm + ve_modeled(sample.weight, delta, kappa, sig.sigma2)
    return vm + ve_negligible(sample.weight, delta, kappa, sig.sigma2)


def run_replicate(config: StudyConfig, b: int) -> ReplicateResult:
    """One population -> sample -> response -> imputation -> estimation pass."""
    try:
        pop = generate_population(config.population_config(b))
        sample = draw_sample(pop, config.design, substream(config.seed, b, "sample"))
        delta = draw_response(sample, config.mechanism, substream(config.seed, b, "response")).astype(bool)
        assignment = match_donors(sample.x, delta, sample.cell, sample.ids)
        imp = impute(sample.x, sample.y, delta, assignment, weight=sample.weight)
        estimate = checked_imputed_total(sample.weight, sample.y, delta, imp)
        fits = {}
        variances = {
            m: _variance_for(m, sample, delta, imp.kappa, imp.values, fits, config)
            for m in config.methods
        }
    except NNRIError as exc:
        log.warning("replicate %d failed: %s", b, exc)
        return ReplicateResult(b, False, error=str(exc))
    return ReplicateResult(b, True, pop.true_totals, estimate, variances)


@dataclass
class MethodSummary:
    method: str
    item: int
    mean_variance: float
    empirical_variance: float
    relative_bias: float
    relative_bias_se: float
    coverage: float
    coverage_halfwidth: float


@dataclass
class StudyReport:
    config: StudyConfig
    summaries: list[MethodSummary]
    mean_estimate: np.ndarray
    mean_truth: np.ndarray
    bias_se: np.ndarray
    empirical_variance: np.ndarray
    completed: int
    failed: int

    def get(self, method: str, item: int) -> MethodSummary:
        method = canonical_method(method)
        for s in self.summaries:
            if s.method == method and s.item == item:
                return s
        raise KeyError((method, item))

    def relative_bias(self, method: str) -> np.ndarray:
        T = self.mean_truth.size
        return np.array([self.get(method, t + 1).relative_bias for t in range(T)])

    def coverage(self, method: str) -> np.ndarray:
        T = self.mean_truth.size
        return np.array([self.get(method, t + 1).coverage for t in range(T)])

    def point_bias_z(self) -> np.ndarray:
        """(mean estimate - mean truth) in units of its Monte Carlo standard error."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.mean_estimate - self.mean_truth) / self.bias_se

    def rows(self):
        cfg = self.config
        for s in self.summaries:
            yield {
                "scenario": cfg.scenario.value,
                "mechanism": cfg.mechanism.name,
                "N": cfg.population_size,
                "B": self.completed,
                "method": s.method,
                "item": f"Y{s.item}",
                "relative_bias": s.relative_bias,
                "relative_bias_se": s.relative_bias_se,
                "coverage": s.coverage,
                "coverage_halfwidth": s.coverage_halfwidth,
                "mean_variance": s.mean_variance,
                "empirical_variance": s.empirical_variance,
                "mean_estimate": float(self.mean_estimate[s.item - 1]),
                "mean_truth": float(self.mean_truth[s.item - 1]),
            }

    def write_csv(self, path):
        rows = list(self.rows())
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)

    def write_coverage_plot_data(self, path):
        """Coverage with binomial Monte Carlo bounds, one row per method and item."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scenario", "mechanism", "method", "item", "coverage_pct",
                             "lower_pct", "upper_pct", "nominal_pct"])
            for s in self.summaries:
                writer.writerow([self.config.scenario.value, self.config.mechanism.name, s.method,
                                 f"Y{s.item}", 100 * s.coverage,
                                 100 * (s.coverage - s.coverage_halfwidth),
                                 100 * (s.coverage + s.coverage_halfwidth), 95.0])

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["scenario"] = self.config.scenario.value
        cfg["mechanism"] = {"name": self.config.mechanism.name, "kind": self.config.mechanism.kind,
                            "probs": list(self.config.mechanism.probs)}
        return {
            "config": cfg,
            "scale": "total",
            "completed": self.completed,
            "failed": self.failed,
            "mean_estimate": self.mean_estimate.tolist(),
            "mean_truth": self.mean_truth.tolist(),
            "bias_se": self.bias_se.tolist(),
            "empirical_variance": self.empirical_variance.tolist(),
            "summaries": [asdict(s) for s in self.summaries],
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def table(self) -> str:
        """Relative biases, one line per method, negatives in parentheses."""
        T = self.mean_truth.size
        head = f"{'Method':<12}" + "".join(f"{'Y' + str(t + 1):>9}" for t in range(T))
        lines = [head]
        for m in self.config.methods:
            rb = self.relative_bias(m)
            cells = "".join(f"{_fmt_rb(v):>9}" for v in rb)
            lines.append(f"{m:<12}{cells}")
        return "\n".join(lines)


def _fmt_rb(v):
    if not np.isfinite(v):
        return "NA"
    return f"({abs(v):.2f})" if v < 0 else f"{v:.2f}"


def relative_bias(variance_estimates, point_estimates, truths=None):
    """``mean(V_hat) / V_emp - 1`` per column.

    ``V_emp`` is the sample variance of ``point_estimates - truths`` (or of
    the point estimates alone when ``truths`` is None). Columns with zero
    empirical variance give NaN.
    """
    v = np.asarray(variance_estimates, dtype=float)
    err = np.asarray(point_estimates, dtype=float)
    if truths is not None:
        err = err - np.asarray(truths, dtype=float)
    if err.shape[0] < 2:
        raise ConfigurationError("relative bias needs at least two replicates")
    emp = err.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(emp > 0, v.mean(axis=0) / np.where(emp > 0, emp, 1.0) - 1.0, np.nan)


def coverage(lower, upper, truths):
    """Fraction of intervals containing the truth, with a 95% binomial half-width."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    truths = np.asarray(truths, dtype=float)
    hit = (lower <= truths) & (truths <= upper)
    rate = hit.mean(axis=0)
    half = Z975 * np.sqrt(rate * (1 - rate) / hit.shape[0])
    return rate, half


def summarize(config: StudyConfig, results: list[ReplicateResult]) -> StudyReport:
    good = [r for r in results if r.ok]
    failed = len(results) - len(good)
    if len(good) < 2:
        raise ConfigurationError("fewer than two replicates completed")
    est = np.array([r.estimate for r in good])
    truth = np.array([r.truth for r in good])
    err = est - truth
    emp = err.var(axis=0, ddof=1)
    B = len(good)
    summaries = []
    for m in config.methods:
        V = np.array([r.variances[m] for r in good])
        rb = relative_bias(V, est, truth)
        # delta-method s.e. of mean(V)/emp, treating the two as independent
        with np.errstate(divide="ignore", invalid="ignore"):
            rb_se = (1 + rb) * np.sqrt(V.var(axis=0, ddof=1) / B / V.mean(axis=0) ** 2 + 2.0 / (B - 1))
        half = Z975 * np.sqrt(V)
        cov, cov_half = coverage(est - half, est + half, truth)
        for t in range(est.shape[1]):
            summaries.append(MethodSummary(m, t + 1, float(V[:, t].mean()), float(emp[t]),
                                           float(rb[t]), float(rb_se[t]), float(cov[t]),
                                           float(cov_half[t])))
    return StudyReport(
        config=config,
        summaries=summaries,
        mean_estimate=est.mean(axis=0),
        mean_truth=truth.mean(axis=0),
        bias_se=err.std(axis=0, ddof=1) / np.sqrt(B),
        empirical_variance=emp,
        completed=B,
        failed=failed,
    )


def run_study(config: StudyConfig, threads: int = 1, progress=None) -> StudyReport:
    """Run ``config.replicates`` replicates and aggregate them in replicate order."""
    idx = range(config.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda b: run_replicate(config, b), idx))
    else:
        results = []
        for b in idx:
            results.append(run_replicate(config, b))
            if progress is not None:
                progress(b + 1, config.replicates)
    return summarize(config, results)
