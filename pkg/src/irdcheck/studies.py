"""Replication-study drivers: repeated synthetic datasets, fits, decisions.

Each replicate simulates a dataset, obtains leave-one-out draws for every
fitted model (inverse direction via importance-resampling cross-validation,
forward direction via the analytic leave-one-out predictives), runs the
discrepancy machinery and records both acceptance verdicts.  Agreement is
the percentage of replicates whose observed discrepancy falls inside the
credible region of its reference distribution.

Replicates run independently on derived random streams and results are
merged by replicate index, so aggregates do not depend on scheduling order.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.stats import kstest, wasserstein_distance

from .core import (
    ConfigError,
    CovariatePrior,
    Dataset,
    ExponentialPrior,
    FlatPositivePrior,
    IRDError,
    ModelSpec,
    RngLike,
    RngStream,
    StudyAbortError,
    UniformPrior,
    as_generator,
    spawn_seedseqs,
)
from .discrepancy import DiscrepancyReport, assemble_reference, assess, write_reference_csv
from .irmcmc import IRMCMCConfig, XValDraws, brute_force_xval, run_irmcmc
from .mcmc import MCMCConfig
from .zoo import (
    GeneratorSpec,
    build_model,
    forward_predictive_sample,
    prior_from_dict,
    prior_to_dict,
    simulate_dataset,
)

__all__ = [
    "FitSpec",
    "StudyScenario",
    "StudyResult",
    "run_study",
    "run_prior_flatness_study",
    "run_variable_selection_study",
    "run_overfit_demo",
    "OverfitDemoResult",
    "run_calibration_study",
    "CalibrationResult",
    "run_timing_comparison",
    "TimingComparison",
    "desk_irmcmc_config",
    "scenario_from_dict",
    "scenario_to_dict",
    "write_replicates_csv",
]

# stream slots per replicate: 0 = simulation, 1.. = one per fitted model
_STREAMS_PER_REPLICATE = 8
_MAX_REDRAWS = 1000


@dataclass(frozen=True)
class FitSpec:
    """One fitted model: family, covariate prior and (for polynomials) degree."""

    family: str
    x_prior: CovariatePrior
    degree: int | None = None
    label: str | None = None

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        return self.family if self.degree is None else f"{self.family}_deg{self.degree}"


@dataclass(frozen=True)
class StudyScenario:
    """Everything one replication study needs, serialisable to JSON.

    ``require_identifiable`` redraws datasets until every leave-one-out count
    sum is positive; flat improper covariate priors need this for the
    leave-one-out posteriors to be proper.
    """

    name: str
    generator: GeneratorSpec
    fitted_models: tuple[FitSpec, ...]
    direction: Literal["inverse", "forward"]
    replicates: int
    irmcmc: IRMCMCConfig
    base_seed: int = 0
    credible_level: float = 0.97
    measure: str = "T1"
    alpha: float = 0.03
    require_identifiable: bool = False
    max_failure_fraction: float = 0.02

    def validate(self) -> None:
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.direction not in ("inverse", "forward"):
            raise ConfigError(f"unknown direction {self.direction!r}")
        if not self.fitted_models:
            raise ConfigError("need at least one fitted model")
        if len(self.fitted_models) > _STREAMS_PER_REPLICATE - 1:
            raise ConfigError(
                f"at most {_STREAMS_PER_REPLICATE - 1} fitted models per scenario"
            )
        if self.direction == "forward":
            for fit in self.fitted_models:
                if fit.family not in ("poisson", "geometric"):
                    raise ConfigError(
                        "forward direction supports poisson and geometric fits"
                    )
        self.generator.validate()
        self.irmcmc.validate()


@dataclass
class StudyResult:
    """Per-replicate records plus per-model agreement percentages."""

    scenario_name: str
    records: list[dict]
    failures: list[dict]
    agreement: dict[str, float]
    n_replicates: int
    wall_time: float
    redraws: int = 0

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "n_replicates": self.n_replicates,
            "agreement_percent": self.agreement,
            "n_failures": len(self.failures),
            "redraws": self.redraws,
            "wall_time_s": self.wall_time,
        }


def desk_irmcmc_config(
    n_retained: int = 1000,
    burn_in: int = 800,
    n_resample: int = 50,
    conditional_draws: int = 20,
    conditional_burn: int = 50,
    conditional_thin: int = 2,
    thin: int = 1,
) -> IRMCMCConfig:
    """Desk-scale settings sized for repeated simulation studies."""
    return IRMCMCConfig(
        n_resample=n_resample,
        conditional_draws=conditional_draws,
        pilot=MCMCConfig(
            n_iterations=burn_in + n_retained * thin, burn_in=burn_in, thin=thin
        ),
        conditional=MCMCConfig(
            n_iterations=conditional_burn + conditional_draws * conditional_thin,
            burn_in=conditional_burn,
            thin=conditional_thin,
        ),
    )


def _identifiable(data: Dataset) -> bool:
    """Every leave-one-out count sum must be positive."""
    totals = data.response_totals
    s = int(totals.sum())
    return bool(np.all(s - totals >= 1))


def _simulate_replicate(scenario: StudyScenario, r: int) -> tuple[Dataset, int]:
    g = RngStream(scenario.base_seed, r * _STREAMS_PER_REPLICATE).generator()
    redraws = 0
    data = simulate_dataset(scenario.generator, g)
    if scenario.require_identifiable:
        while not _identifiable(data):
            redraws += 1
            if redraws > _MAX_REDRAWS:
                raise StudyAbortError(
                    f"replicate {r}: no identifiable dataset in {_MAX_REDRAWS} redraws"
                )
            data = simulate_dataset(scenario.generator, g)
    return data, redraws


def _geometric_forward_sample(
    data: Dataset, i: int, size: int, rng: RngLike
) -> np.ndarray:
    """Forward leave-one-out predictive draws for the geometric fit.

    The flat-prior parameter posterior given the retained cases has no closed
    form; it is discretised on a log grid (deterministic quadrature) and the
    predictive is sampled by composition.
    """
    g = as_generator(rng)
    keep = np.arange(data.n) != i
    y = np.asarray(data.responses[keep], dtype=float)
    x = data.covariates[keep]
    center = (y.sum() + 0.5) / x.sum()
    grid = center * np.exp(np.linspace(-12.0, 12.0, 600))
    mu = grid[:, None] * x[None, :]
    lp = (y[None, :] * np.log(mu) - (y[None, :] + 1.0) * np.log1p(mu)).sum(axis=1)
    lp += np.log(grid)  # equal log-spacing: d(theta) = theta * d(log theta)
    w = np.exp(lp - lp.max())
    w /= w.sum()
    thetas = g.choice(grid, size=size, p=w)
    p = 1.0 / (1.0 + thetas * float(data.covariates[i]))
    return (g.geometric(p) - 1).astype(np.int64)


def _forward_draws(fit: FitSpec, data: Dataset, n_draws: int, rng: RngLike) -> XValDraws:
    """Leave-one-out response predictive draws, packaged like covariate draws."""
    children = spawn_seedseqs(rng, data.n)
    per_case: dict[int, np.ndarray] = {}
    for i in range(data.n):
        if fit.family == "poisson":
            draws = forward_predictive_sample(data, i, n_draws, children[i])
        else:
            draws = _geometric_forward_sample(data, i, n_draws, children[i])
        per_case[i] = draws.astype(float)
    return XValDraws(
        observed=np.asarray(data.responses, dtype=float),
        per_case=per_case,
        per_case_theta={},
        weight_ess={i: float(n_draws) for i in range(data.n)},
        max_weight_share={i: 1.0 / n_draws for i in range(data.n)},
        pilot_case=None,
    )


def _xval_for_fit(
    scenario: StudyScenario, fit: FitSpec, data: Dataset, rng: RngLike
) -> XValDraws:
    if scenario.direction == "forward":
        n_draws = scenario.irmcmc.n_resample * scenario.irmcmc.conditional_draws
        return _forward_draws(fit, data, n_draws, rng)
    model = build_model(fit.family, fit.x_prior, fit.degree)
    return run_irmcmc(model, data, scenario.irmcmc, rng)


def _replicate_worker(args: tuple[StudyScenario, int]) -> tuple[int, list[dict], list[dict], int]:
    scenario, r = args
    rows: list[dict] = []
    failures: list[dict] = []
    data, redraws = _simulate_replicate(scenario, r)
    for mi, fit in enumerate(scenario.fitted_models):
        stream = RngStream(scenario.base_seed, r * _STREAMS_PER_REPLICATE + 1 + mi)
        try:
            xval = _xval_for_fit(scenario, fit, data, stream)
            report = assess(
                xval,
                scenario.measure,
                alpha=scenario.alpha,
                credible_level=scenario.credible_level,
            )
        except IRDError as err:
            failures.append({"replicate": r, "model": fit.name, "error": str(err)})
            continue
        rows.append(
            {
                "replicate": r,
                "model": fit.name,
                "t_observed": report.t_observed,
                "p": report.p,
                "p_ird": report.p_ird,
                "decision": report.decision,
                "in_credible_region": report.in_credible_region,
            }
        )
    return r, rows, failures, redraws


def run_study(
    scenario: StudyScenario, jobs: int = 1, progress: bool = False
) -> StudyResult:
    """Run every replicate, aggregate agreement, enforce the failure cap.

    Raises
    ------
    StudyAbortError
        When any fitted model accumulates more failed replicates than
        ``scenario.max_failure_fraction`` allows.
    """
    scenario.validate()
    t0 = time.perf_counter()
    tasks = [(scenario, r) for r in range(scenario.replicates)]
    results: list[tuple[int, list[dict], list[dict], int]] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for out in pool.map(_replicate_worker, tasks, chunksize=4):
                results.append(out)
                if progress and len(results) % 50 == 0:
                    print(f"  {scenario.name}: {len(results)}/{scenario.replicates}")
    else:
        for t in tasks:
            results.append(_replicate_worker(t))
            if progress and len(results) % 50 == 0:
                print(f"  {scenario.name}: {len(results)}/{scenario.replicates}")
    results.sort(key=lambda item: item[0])

    records = [row for _, rows, _, _ in results for row in rows]
    failures = [f for _, _, fails, _ in results for f in fails]
    redraws = sum(rd for _, _, _, rd in results)

    cap = max(1, math.ceil(scenario.max_failure_fraction * scenario.replicates))
    fail_counts: dict[str, int] = {}
    for f in failures:
        fail_counts[f["model"]] = fail_counts.get(f["model"], 0) + 1
    for model_name, count in fail_counts.items():
        if count > cap:
            raise StudyAbortError(
                f"{scenario.name}: {count} failed replicates for {model_name} "
                f"(cap {cap}); first error: "
                f"{next(f['error'] for f in failures if f['model'] == model_name)}"
            )

    agreement: dict[str, float] = {}
    for fit in scenario.fitted_models:
        rows = [rec for rec in records if rec["model"] == fit.name]
        if rows:
            agreement[fit.name] = 100.0 * sum(
                rec["in_credible_region"] for rec in rows
            ) / len(rows)
        else:
            agreement[fit.name] = float("nan")

    return StudyResult(
        scenario_name=scenario.name,
        records=records,
        failures=failures,
        agreement=agreement,
        n_replicates=scenario.replicates,
        wall_time=time.perf_counter() - t0,
        redraws=redraws,
    )


# ---------------------------------------------------------------------------
# Named studies


def run_prior_flatness_study(
    lambdas: list[float],
    replicates: int,
    n: int = 10,
    irmcmc: IRMCMCConfig | None = None,
    base_seed: int = 0,
    jobs: int = 1,
    progress: bool = False,
) -> dict[float, StudyResult]:
    """Poisson truth, exponential covariate law, flat improper covariate prior.

    The fitted prior ignores the true covariate scale; agreement should climb
    toward the credible level as the true law flattens (large means).
    """
    out: dict[float, StudyResult] = {}
    for k, lam in enumerate(lambdas):
        scenario = StudyScenario(
            name=f"prior_flatness_lambda{lam}",
            generator=GeneratorSpec(
                true_model="poisson",
                covariate_law=ExponentialPrior(lam),
                n=n,
                theta_range=(0.0, 1.0),
            ),
            fitted_models=(FitSpec("poisson", FlatPositivePrior()),),
            direction="inverse",
            replicates=replicates,
            irmcmc=irmcmc or desk_irmcmc_config(),
            base_seed=base_seed + 1000 * k,
            require_identifiable=True,
        )
        out[lam] = run_study(scenario, jobs=jobs, progress=progress)
    return out


def run_variable_selection_study(
    replicates: int,
    n: int = 10,
    irmcmc: IRMCMCConfig | None = None,
    base_seed: int = 0,
    jobs: int = 1,
    progress: bool = False,
) -> StudyResult:
    """Quadratic Poisson truth fitted with polynomial means of degree 1, 2, 3."""
    scenario = StudyScenario(
        name="variable_selection",
        generator=GeneratorSpec(
            true_model="polynomial_poisson",
            theta_true=(0.5, 0.5),
            covariate_law=UniformPrior(0.0, 10.0),
            n=n,
        ),
        fitted_models=tuple(
            FitSpec("polynomial_poisson", UniformPrior(0.0, 10.0), degree=d)
            for d in (1, 2, 3)
        ),
        direction="inverse",
        replicates=replicates,
        irmcmc=irmcmc or desk_irmcmc_config(),
        base_seed=base_seed,
    )
    return run_study(scenario, jobs=jobs, progress=progress)


@dataclass
class OverfitDemoResult:
    """Outcome of the overfitting demonstration.

    ``decision`` is the credible-region verdict for the overdispersed fit: a
    small observed discrepancy sitting in the far left tail of its reference
    is evidence against the model, not for it.
    """

    report: DiscrepancyReport
    decision: str
    t_percentile: float
    sanity_report: DiscrepancyReport | None = None

    @property
    def rejected_from_left_tail(self) -> bool:
        return self.decision == "reject" and self.t_observed < self.report.reference.t_mean

    @property
    def t_observed(self) -> float:
        return self.report.t_observed


def run_overfit_demo(
    theta: float = 15.0,
    seed: int = 0,
    n: int = 10,
    covariate_law: CovariatePrior | None = None,
    x_prior: CovariatePrior | None = None,
    irmcmc: IRMCMCConfig | None = None,
    reference_csv: str | None = None,
    with_sanity_fit: bool = False,
) -> OverfitDemoResult:
    """Poisson truth fitted by the overdispersed geometric model.

    With an unbounded covariate prior the geometric fit's posteriors track
    the observed covariates but are far wider than the data demand, so the
    observed discrepancy lands deep in the left tail of its reference
    distribution: too *small* to be plausible.  The credible-region rule
    rejects; a rule keyed only to the magnitude of the discrepancy would not.
    A bounded prior instead truncates the posteriors and pulls their means
    toward the support's centre, which washes the left-tail signature out.
    """
    law = covariate_law or UniformPrior(1.0, 2.0)
    prior = x_prior or FlatPositivePrior()
    gen = GeneratorSpec(
        true_model="poisson", theta_true=(theta,), covariate_law=law, n=n
    )
    config = irmcmc or desk_irmcmc_config()
    data = simulate_dataset(gen, RngStream(seed, 0))
    model = build_model("geometric", prior)
    xval = run_irmcmc(model, data, config, RngStream(seed, 1))
    report = assess(xval)
    decision = "accept" if report.in_credible_region else "reject"
    t_percentile = float(np.mean(report.reference.t_draws <= report.t_observed))
    if reference_csv is not None:
        write_reference_csv(report.reference, reference_csv)
    sanity = None
    if with_sanity_fit:
        true_model = build_model("poisson", prior)
        xval_true = run_irmcmc(true_model, data, config, RngStream(seed, 2))
        sanity = assess(xval_true)
    return OverfitDemoResult(
        report=report,
        decision=decision,
        t_percentile=t_percentile,
        sanity_report=sanity,
    )


@dataclass
class CalibrationResult:
    """Distribution of the reference-exceedance probability across replicates."""

    p_values: np.ndarray
    ks_statistic: float
    ks_pvalue: float
    level: float = 0.01

    @property
    def passed(self) -> bool:
        return self.ks_pvalue > self.level


def run_calibration_study(
    scenario: StudyScenario, jobs: int = 1, progress: bool = False
) -> CalibrationResult:
    """Collect per-replicate exceedance probabilities and test uniformity.

    The scenario must fit the true model (family and covariate prior matching
    the generator); under the truth the exceedance probability is uniform, so
    a KS test against Uniform(0,1) checks the whole pipeline's calibration.
    """
    scenario.validate()
    if scenario.replicates < 2:
        raise ConfigError("calibration needs at least 2 replicates")
    if len(scenario.fitted_models) != 1:
        raise ConfigError("calibration uses exactly one fitted model")
    result = run_study(scenario, jobs=jobs, progress=progress)
    p_values = np.array([rec["p_ird"] for rec in result.records])
    ks = kstest(p_values, "uniform")
    return CalibrationResult(
        p_values=p_values,
        ks_statistic=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
    )


@dataclass
class TimingComparison:
    """Wall-times and per-case distances for the two cross-validation routes."""

    seconds_irmcmc: float
    seconds_brute_force: float
    w1_by_case: dict[int, float]
    report: DiscrepancyReport

    @property
    def speedup(self) -> float:
        return self.seconds_brute_force / self.seconds_irmcmc

    @property
    def max_w1(self) -> float:
        return max(self.w1_by_case.values())


def run_timing_comparison(
    model: ModelSpec,
    data: Dataset,
    config: IRMCMCConfig,
    brute_config: MCMCConfig,
    rng: RngStream,
) -> TimingComparison:
    """Time the one-pilot route against the n-fold baseline on one dataset."""
    t0 = time.perf_counter()
    xval = run_irmcmc(model, data, config, RngStream(rng.seed, rng.stream_id))
    t_fast = time.perf_counter() - t0
    t0 = time.perf_counter()
    brute = brute_force_xval(
        model, data, brute_config, RngStream(rng.seed, rng.stream_id + 1)
    )
    t_slow = time.perf_counter() - t0
    w1 = {
        i: float(wasserstein_distance(xval.per_case[i], brute.per_case[i]))
        for i in xval.per_case
    }
    return TimingComparison(
        seconds_irmcmc=t_fast,
        seconds_brute_force=t_slow,
        w1_by_case=w1,
        report=assess(xval),
    )


# ---------------------------------------------------------------------------
# Serialisation


def write_replicates_csv(result: StudyResult, path) -> None:
    """Per-replicate rows with a stable column order."""
    cols = ["replicate", "model", "t_observed", "p", "p_ird", "decision", "in_credible_region"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for rec in result.records:
            w.writerow([rec[c] for c in cols])


def _mcmc_config_from_dict(d: dict) -> MCMCConfig:
    return MCMCConfig(
        n_iterations=int(d.get("n_iterations", 10_000)),
        burn_in=int(d.get("burn_in", 5_000)),
        thin=int(d.get("thin", 1)),
        proposal_scales=tuple(d["proposal_scales"]) if d.get("proposal_scales") else None,
        adapt=bool(d.get("adapt", True)),
        adapt_target_acceptance=float(d.get("adapt_target_acceptance", 0.44)),
    )


def _irmcmc_config_from_dict(d: dict) -> IRMCMCConfig:
    cfg = IRMCMCConfig(
        pilot_case=d.get("pilot_case", "auto"),
        n_resample=int(d.get("n_resample", 100)),
        conditional_draws=int(d.get("conditional_draws", 10)),
        with_replacement=bool(d.get("with_replacement", False)),
    )
    if "pilot" in d:
        cfg = replace(cfg, pilot=_mcmc_config_from_dict(d["pilot"]))
    if "conditional" in d:
        cfg = replace(cfg, conditional=_mcmc_config_from_dict(d["conditional"]))
    return cfg


def _generator_from_dict(d: dict) -> GeneratorSpec:
    return GeneratorSpec(
        true_model=d["true_model"],
        covariate_law=prior_from_dict(d["covariate_law"]),
        n=int(d["n"]),
        theta_true=tuple(d["theta_true"]) if d.get("theta_true") else None,
        theta_range=tuple(d["theta_range"]) if d.get("theta_range") else None,
    )


def scenario_from_dict(d: dict) -> StudyScenario:
    """Build a scenario from the JSON-compatible layout used by the CLI."""
    try:
        fits = tuple(
            FitSpec(
                family=f["family"],
                x_prior=prior_from_dict(f["x_prior"]),
                degree=f.get("degree"),
                label=f.get("label"),
            )
            for f in d["fitted_models"]
        )
        return StudyScenario(
            name=d.get("name", "study"),
            generator=_generator_from_dict(d["generator"]),
            fitted_models=fits,
            direction=d.get("direction", "inverse"),
            replicates=int(d.get("replicates", 1)),
            irmcmc=_irmcmc_config_from_dict(d.get("irmcmc", {})),
            base_seed=int(d.get("base_seed", 0)),
            credible_level=float(d.get("credible_level", 0.97)),
            measure=d.get("measure", "T1"),
            alpha=float(d.get("alpha", 0.03)),
            require_identifiable=bool(d.get("require_identifiable", False)),
            max_failure_fraction=float(d.get("max_failure_fraction", 0.02)),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad scenario config: {err}") from err


def scenario_to_dict(s: StudyScenario) -> dict:
    gen = {
        "true_model": s.generator.true_model,
        "covariate_law": prior_to_dict(s.generator.covariate_law),
        "n": s.generator.n,
    }
    if s.generator.theta_true is not None:
        gen["theta_true"] = list(s.generator.theta_true)
    if s.generator.theta_range is not None:
        gen["theta_range"] = list(s.generator.theta_range)
    return {
        "name": s.name,
        "generator": gen,
        "fitted_models": [
            {
                "family": f.family,
                "x_prior": prior_to_dict(f.x_prior),
                "degree": f.degree,
                "label": f.label,
            }
            for f in s.fitted_models
        ],
        "direction": s.direction,
        "replicates": s.replicates,
        "irmcmc": {
            "pilot_case": s.irmcmc.pilot_case,
            "n_resample": s.irmcmc.n_resample,
            "conditional_draws": s.irmcmc.conditional_draws,
            "with_replacement": s.irmcmc.with_replacement,
            "pilot": {
                "n_iterations": s.irmcmc.pilot.n_iterations,
                "burn_in": s.irmcmc.pilot.burn_in,
                "thin": s.irmcmc.pilot.thin,
            },
            "conditional": {
                "n_iterations": s.irmcmc.conditional.n_iterations,
                "burn_in": s.irmcmc.conditional.burn_in,
                "thin": s.irmcmc.conditional.thin,
            },
        },
        "base_seed": s.base_seed,
        "credible_level": s.credible_level,
        "measure": s.measure,
        "alpha": s.alpha,
        "require_identifiable": s.require_identifiable,
        "max_failure_fraction": s.max_failure_fraction,
    }
