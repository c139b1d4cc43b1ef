"""Discrepancy measures, reference distributions and the accept/reject rules.

Observed covariates are compared against the leave-one-out posteriors through
standardised deviations: T1 sums their squares, T2 sums their absolute
values, T3 takes the maximum.  Joint reference draws are assembled by
aligning draw indices across cases, one draw per case per joint vector.

Two acceptance notions are computed side by side.  The posterior-probability
rule accepts when the mass of the standardised epsilon-ball around the
observed value exceeds 1/2; the credible-region rule accepts when the
observed value falls inside the shortest interval holding the requested
reference mass.  The second is one-sided-aware: an observed discrepancy far
in the *left* tail (overfitting) fails it even though the value is small.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import (
    DegenerateReferenceError,
    DimensionError,
    TooFewDrawsError,
)
from .irmcmc import XValDraws

__all__ = [
    "t1",
    "t2",
    "t3",
    "MEASURES",
    "ReferenceDistribution",
    "DiscrepancyReport",
    "assemble_reference",
    "choose_epsilon",
    "posterior_probability",
    "decide",
    "hpd_interval",
    "credible_region_check",
    "case_outlier_check",
    "p_ird",
    "assess",
    "write_reference_csv",
]


def _standardized(x_obs, case_means, case_variances) -> np.ndarray:
    x = np.asarray(x_obs, dtype=float)
    m = np.asarray(case_means, dtype=float)
    v = np.asarray(case_variances, dtype=float)
    if not (x.shape == m.shape == v.shape) or x.ndim != 1:
        raise DimensionError(
            f"shapes differ: x{x.shape}, means{m.shape}, variances{v.shape}"
        )
    bad = np.flatnonzero(v <= 0.0)
    if bad.size:
        raise DegenerateReferenceError(
            f"zero posterior variance for case(s) {bad.tolist()}"
        )
    return (x - m) / np.sqrt(v)


def t1(x_obs, case_means, case_variances) -> float:
    """Sum of squared standardised deviations of the observed values."""
    z = _standardized(x_obs, case_means, case_variances)
    return float(np.square(z).sum())


def t2(x_obs, case_means, case_variances) -> float:
    """Sum of absolute standardised deviations."""
    z = _standardized(x_obs, case_means, case_variances)
    return float(np.abs(z).sum())


def t3(x_obs, case_means, case_variances) -> float:
    """Largest absolute standardised deviation over the cases."""
    z = _standardized(x_obs, case_means, case_variances)
    return float(np.abs(z).max())


MEASURES = {"T1": t1, "T2": t2, "T3": t3}


@dataclass(frozen=True)
class ReferenceDistribution:
    """Reference draws of a discrepancy measure and the observed value.

    ``t_draws[j]`` evaluates the measure on the j-th joint draw, built by
    taking draw ``j`` from every case; ``n_joint_draws`` is the common draw
    count after truncation to the shortest case.
    """

    measure: str
    t_draws: np.ndarray
    t_observed: float
    case_means: np.ndarray
    case_variances: np.ndarray

    @property
    def n_joint_draws(self) -> int:
        return int(self.t_draws.shape[0])

    @property
    def t_mean(self) -> float:
        return float(self.t_draws.mean())

    @property
    def t_variance(self) -> float:
        """Sample variance of the reference draws."""
        return float(self.t_draws.var(ddof=1))


def assemble_reference(
    xval: XValDraws,
    measure: Literal["T1", "T2", "T3"] = "T1",
) -> ReferenceDistribution:
    """Build the reference distribution of a measure from cross-validation draws.

    Per-case means and variances come from every available draw; joint draws
    are aligned by index and truncated (with a warning) to the shortest case.
    """
    if measure not in MEASURES:
        raise DimensionError(f"unknown measure {measure!r}; pick one of {sorted(MEASURES)}")
    cases = sorted(xval.per_case)
    lengths = {len(xval.per_case[i]) for i in cases}
    if len(lengths) > 1:
        warnings.warn(
            f"unequal draw counts {sorted(lengths)}; truncating to {min(lengths)}",
            stacklevel=2,
        )
    means = np.array([float(np.mean(xval.per_case[i])) for i in cases])
    variances = np.array([float(np.var(xval.per_case[i], ddof=1)) for i in cases])
    bad = [cases[k] for k in np.flatnonzero(variances <= 0.0)]
    if bad:
        raise DegenerateReferenceError(
            f"case(s) {bad} have zero draw variance; the check is vacuous"
        )
    mat = xval.case_matrix()
    z = (mat - means) / np.sqrt(variances)
    if measure == "T1":
        t_draws = np.square(z).sum(axis=1)
    elif measure == "T2":
        t_draws = np.abs(z).sum(axis=1)
    else:
        t_draws = np.abs(z).max(axis=1)
    observed = np.asarray(xval.observed, dtype=float)
    t_obs = MEASURES[measure](observed, means, variances)
    return ReferenceDistribution(
        measure=measure,
        t_draws=np.asarray(t_draws, dtype=float),
        t_observed=t_obs,
        case_means=means,
        case_variances=variances,
    )


def _quantile(sorted_vals: np.ndarray, q: float) -> float:
    """Linear-interpolation empirical quantile on pre-sorted values."""
    n = sorted_vals.shape[0]
    h = (n - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, n - 1)
    return float(sorted_vals[lo] + (h - lo) * (sorted_vals[hi] - sorted_vals[lo]))


def choose_epsilon(reference: ReferenceDistribution, alpha: float = 0.03) -> float:
    """Rule-of-thumb epsilon: the (1 - alpha) percentile of |T| in sd units.

    Under an adequate model the observed discrepancy sits near zero, so the
    standardised distance behaves like ``|T(ref)| / sd(T(ref))``; its upper
    percentile is a reasonable ball radius.  ``alpha`` defaults to 0.03,
    mirroring the 97% credible-level convention.
    """
    if not 0.0 < alpha < 1.0:
        raise DimensionError("alpha must be in (0, 1)")
    if reference.n_joint_draws < 2:
        raise TooFewDrawsError("need at least 2 reference draws")
    sd = math.sqrt(reference.t_variance)
    if sd == 0.0:
        raise DegenerateReferenceError("reference draws have zero variance")
    vals = np.sort(np.abs(reference.t_draws) / sd)
    return _quantile(vals, 1.0 - alpha)


def posterior_probability(reference: ReferenceDistribution, epsilon: float) -> float:
    """Reference mass of the standardised epsilon-ball around the observed value."""
    if epsilon < 0.0:
        raise DimensionError("epsilon must be >= 0")
    sd = math.sqrt(reference.t_variance)
    if sd == 0.0:
        raise DegenerateReferenceError("reference draws have zero variance")
    dist = np.abs(reference.t_draws - reference.t_observed) / sd
    return float(np.mean(dist <= epsilon))


def decide(p: float) -> Literal["accept", "reject"]:
    """Accept exactly when p > 1/2 (ties reject)."""
    if not 0.0 <= p <= 1.0:
        raise DimensionError(f"p={p} outside [0, 1]")
    return "accept" if p > 0.5 else "reject"


def hpd_interval(draws, level: float) -> tuple[float, float]:
    """Shortest closed interval containing ``ceil(level * J)`` sorted draws."""
    if not 0.0 < level < 1.0:
        raise DimensionError("level must be in (0, 1)")
    d = np.sort(np.asarray(draws, dtype=float))
    j = d.shape[0]
    m = math.ceil(level * j)
    if m < 1 or j < 2:
        raise TooFewDrawsError("not enough draws for an HPD interval")
    m = min(m, j)
    widths = d[m - 1 :] - d[: j - m + 1]
    k = int(np.argmin(widths))
    return float(d[k]), float(d[k + m - 1])


def credible_region_check(
    reference: ReferenceDistribution, level: float = 0.97
) -> bool:
    """True when the observed value sits inside the shortest level-mass interval."""
    lo, hi = hpd_interval(reference.t_draws, level)
    return lo <= reference.t_observed <= hi


_SPLIT_GAP_FRACTION = 0.10


def case_outlier_check(
    x_i: float, draws_i, level: float
) -> tuple[list[tuple[float, float]], bool]:
    """Single-case check: is the observed value inside its own HPD region?

    The region is the shortest sorted window holding ``ceil(level * J)``
    draws; when that window straddles a pronounced internal gap (>10% of the
    window length, a bimodality signal) it is split into two intervals
    covering the same draws.
    """
    d = np.sort(np.asarray(draws_i, dtype=float))
    if d.shape[0] < 100:
        raise TooFewDrawsError(f"need >= 100 draws, have {d.shape[0]}")
    if not 0.0 < level < 1.0:
        raise DimensionError("level must be in (0, 1)")
    j = d.shape[0]
    m = min(math.ceil(level * j), j)
    widths = d[m - 1 :] - d[: j - m + 1]
    k = int(np.argmin(widths))
    window = d[k : k + m]
    lo, hi = float(window[0]), float(window[-1])
    intervals = [(lo, hi)]
    if hi > lo:
        gaps = np.diff(window)
        g = int(np.argmax(gaps))
        if gaps[g] > _SPLIT_GAP_FRACTION * (hi - lo):
            intervals = [(lo, float(window[g])), (float(window[g + 1]), hi)]
    inside = any(a <= x_i <= b for a, b in intervals)
    return intervals, inside


def p_ird(reference: ReferenceDistribution) -> float:
    """Fraction of reference draws strictly exceeding the observed value."""
    if reference.n_joint_draws < 1:
        raise TooFewDrawsError("empty reference")
    return float(np.mean(reference.t_draws > reference.t_observed))


@dataclass(frozen=True)
class DiscrepancyReport:
    """Everything the adequacy check produces for one measure.

    ``decision`` follows the posterior-probability rule (accept iff p > 1/2);
    ``in_credible_region`` is the credible-region verdict used by the
    replication studies and the overfitting check.
    """

    measure: str
    t_observed: float
    reference: ReferenceDistribution
    epsilon: float
    p: float
    decision: str
    credible_level: float
    credible_interval: tuple[float, float]
    in_credible_region: bool
    p_ird: float

    def to_dict(self) -> dict:
        return {
            "measure": self.measure,
            "t_observed": self.t_observed,
            "p": self.p,
            "epsilon": self.epsilon,
            "decision": self.decision,
            "credible_level": self.credible_level,
            "credible_interval_low": self.credible_interval[0],
            "credible_interval_high": self.credible_interval[1],
            "in_credible_region": self.in_credible_region,
            "p_ird": self.p_ird,
            "reference_mean": self.reference.t_mean,
            "reference_sd": math.sqrt(self.reference.t_variance),
            "n_joint_draws": self.reference.n_joint_draws,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def assess(
    xval: XValDraws,
    measure: Literal["T1", "T2", "T3"] = "T1",
    alpha: float = 0.03,
    credible_level: float = 0.97,
) -> DiscrepancyReport:
    """Assemble the reference and apply both acceptance rules."""
    ref = assemble_reference(xval, measure)
    eps = choose_epsilon(ref, alpha)
    p = posterior_probability(ref, eps)
    interval = hpd_interval(ref.t_draws, credible_level)
    return DiscrepancyReport(
        measure=measure,
        t_observed=ref.t_observed,
        reference=ref,
        epsilon=eps,
        p=p,
        decision=decide(p),
        credible_level=credible_level,
        credible_interval=interval,
        in_credible_region=interval[0] <= ref.t_observed <= interval[1],
        p_ird=p_ird(ref),
    )


def write_reference_csv(reference: ReferenceDistribution, path) -> None:
    """Dump reference draws as ``j,t_value`` rows (for external plotting)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "t_value"])
        for j, v in enumerate(reference.t_draws):
            w.writerow([j, repr(float(v))])
