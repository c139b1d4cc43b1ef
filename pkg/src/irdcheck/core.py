"""Core contracts: datasets, model specifications, seeded RNG streams and
the log-space posterior kernels everything else is built on.

The central asymmetry: responses carry a probability model, covariates do
not.  A :class:`ModelSpec` bundles the per-case response log-likelihood with
priors for the parameter vector and for a single unknown covariate, which is
all the sampling machinery needs.  All kernels are computed in log space and
``-inf`` propagates absorbingly through every factor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

NEG_INF = float("-inf")

__all__ = [
    "IRDError",
    "DimensionError",
    "DataError",
    "ConfigError",
    "ChainInitError",
    "DegenerateWeightsError",
    "DegenerateReferenceError",
    "TooFewDrawsError",
    "StudyAbortError",
    "Interval",
    "UniformPrior",
    "ExponentialPrior",
    "FlatPositivePrior",
    "NormalPrior",
    "Dataset",
    "SamplerHints",
    "ModelSpec",
    "RngStream",
    "log_xval_kernel",
    "log_full_kernel",
    "write_dataset_csv",
    "read_dataset_csv",
]


# ---------------------------------------------------------------------------
# Errors


class IRDError(Exception):
    """Base class for all package errors."""


class DimensionError(IRDError):
    """Array lengths or parameter dimensions do not match a contract."""


class DataError(IRDError):
    """A dataset violates its invariants."""


class ConfigError(IRDError):
    """A configuration object is internally inconsistent."""


class ChainInitError(IRDError):
    """No finite-kernel initial state was found.

    ``coordinate`` names the offending coordinate ("x_tilde", "theta[k]" or
    "likelihood" when the priors are fine but no state has finite likelihood).
    """

    def __init__(self, message: str, coordinate: str | None = None):
        super().__init__(message)
        self.coordinate = coordinate


class DegenerateWeightsError(IRDError):
    """Importance weights are too degenerate to resample from."""

    def __init__(self, message: str, case: int | None = None, ess: float = 0.0):
        super().__init__(message)
        self.case = case
        self.ess = ess


class DegenerateReferenceError(IRDError):
    """A reference distribution (or one of its cases) has zero variance."""


class TooFewDrawsError(IRDError):
    """Not enough draws for the requested computation."""


class StudyAbortError(IRDError):
    """Too many per-replicate failures; the study result is not trustworthy."""


# ---------------------------------------------------------------------------
# Supports and covariate priors


@dataclass(frozen=True)
class Interval:
    """Open interval used as a support declaration."""

    lower: float = NEG_INF
    upper: float = math.inf

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ConfigError(f"empty interval ({self.lower}, {self.upper})")

    def contains(self, x: float) -> bool:
        return self.lower < x < self.upper

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    @property
    def midpoint(self) -> float:
        if not self.bounded:
            raise IRDError("midpoint of an unbounded interval")
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class UniformPrior:
    """Proper uniform density on an open interval."""

    lower: float
    upper: float

    @property
    def support(self) -> Interval:
        return Interval(self.lower, self.upper)

    def log_density(self, x: float) -> float:
        if self.lower < x < self.upper:
            return -math.log(self.upper - self.lower)
        return NEG_INF

    def initial_point(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.lower, self.upper, size=size)


@dataclass(frozen=True)
class ExponentialPrior:
    """Exponential density parameterised by its mean."""

    mean: float

    @property
    def support(self) -> Interval:
        return Interval(0.0, math.inf)

    def log_density(self, x: float) -> float:
        if x <= 0.0:
            return NEG_INF
        return -math.log(self.mean) - x / self.mean

    def initial_point(self) -> float:
        return self.mean * math.log(2.0)  # median

    def sample(self, rng: np.random.Generator, size=None):
        return rng.exponential(self.mean, size=size)


@dataclass(frozen=True)
class FlatPositivePrior:
    """Improper flat prior on (0, inf), represented as log-density 0.

    Never normalised and cannot be sampled from.
    """

    @property
    def support(self) -> Interval:
        return Interval(0.0, math.inf)

    def log_density(self, x: float) -> float:
        return 0.0 if x > 0.0 else NEG_INF

    def initial_point(self) -> float:
        return 1.0

    def sample(self, rng: np.random.Generator, size=None):
        raise IRDError("improper flat prior cannot be sampled")


@dataclass(frozen=True)
class NormalPrior:
    """Gaussian density on the whole real line."""

    mean: float
    sd: float

    @property
    def support(self) -> Interval:
        return Interval()

    def log_density(self, x: float) -> float:
        z = (x - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * math.log(2.0 * math.pi)

    def initial_point(self) -> float:
        return self.mean

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mean, self.sd, size=size)


CovariatePrior = UniformPrior | ExponentialPrior | FlatPositivePrior | NormalPrior


# ---------------------------------------------------------------------------
# Dataset


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Paired observed responses and covariates.

    Responses are non-negative integer counts, either one scalar per case
    (shape ``(n,)``) or one count vector per case (shape ``(n, m)``).
    Covariates are one real value per case.  Instances are immutable and safe
    to share across workers.

    Parameters
    ----------
    responses : array-like
        Counts; integer dtype, entries >= 0.
    covariates : array-like
        Reals, same leading length as ``responses``.
    """

    responses: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.responses)
        x = np.asarray(self.covariates, dtype=float)
        if y.ndim not in (1, 2):
            raise DataError(f"responses must be 1- or 2-dimensional, got ndim={y.ndim}")
        if x.ndim != 1:
            raise DataError(f"covariates must be 1-dimensional, got ndim={x.ndim}")
        if y.shape[0] != x.shape[0]:
            raise DimensionError(
                f"{y.shape[0]} responses but {x.shape[0]} covariates"
            )
        if y.shape[0] < 1:
            raise DataError("dataset needs at least one case")
        if not np.issubdtype(y.dtype, np.integer):
            yi = np.asarray(y, dtype=np.int64)
            if not np.array_equal(yi, y):
                raise DataError("response counts must be integers")
            y = yi
        if np.any(y < 0):
            raise DataError("response counts must be >= 0")
        if not np.all(np.isfinite(x)):
            raise DataError("covariates must be finite")
        object.__setattr__(self, "responses", _readonly(y))
        object.__setattr__(self, "covariates", _readonly(x))

    @property
    def n(self) -> int:
        return int(self.covariates.shape[0])

    @property
    def response_totals(self) -> np.ndarray:
        """Per-case count totals (the counts themselves for scalar responses)."""
        if self.responses.ndim == 1:
            return self.responses
        return self.responses.sum(axis=1)

    def drop_case(self, i: int) -> "Dataset":
        keep = np.arange(self.n) != i
        return Dataset(self.responses[keep], self.covariates[keep])


# ---------------------------------------------------------------------------
# Model specification


@dataclass(frozen=True)
class SamplerHints:
    """Optional per-coordinate tuning handed to the samplers.

    ``theta_init`` maps ``(data, left_out_case_or_None)`` to a parameter
    vector (typically a method-of-moments guess); when absent the engine
    falls back to 1.0 per coordinate, clipped into support.
    """

    x_scale: float | None = None
    theta_scales: tuple[float, ...] | None = None
    x_init: float | None = None
    theta_init: Callable[["Dataset", int | None], np.ndarray] | None = None


@dataclass(frozen=True)
class ModelSpec:
    """Pluggable inverse-regression model.

    ``log_likelihood_case(y_i, x_i, theta)`` must return ``-inf`` exactly when
    the triple violates support, never a non-finite positive value, and must
    be deterministic and side-effect free.  Priors may be improper (constant
    0 on the support); the package never attempts to normalise them.

    The two optional vectorised hooks are pure performance plumbing and must
    agree with ``log_likelihood_case``:

    * ``log_likelihood_cases(responses, covariates, theta)`` -> per-case
      log-likelihoods at a fixed ``theta``;
    * ``log_likelihood_batch(y_i, x, theta)`` -> log-likelihood of one case
      evaluated under ``N`` states, with ``x`` scalar or shape ``(N,)`` and
      ``theta`` shape ``(N, theta_dim)``.
    """

    name: str
    theta_dim: int
    covariate_support: Interval
    log_likelihood_case: Callable
    log_prior_theta: Callable
    log_prior_x: Callable
    theta_supports: tuple[Interval, ...]
    sampler_hints: SamplerHints = field(default_factory=SamplerHints)
    log_likelihood_cases: Callable | None = None
    log_likelihood_batch: Callable | None = None

    def __post_init__(self):
        if len(self.theta_supports) != self.theta_dim:
            raise DimensionError(
                f"{len(self.theta_supports)} theta supports for theta_dim={self.theta_dim}"
            )

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.theta_dim,):
            raise DimensionError(
                f"theta has shape {theta.shape}, expected ({self.theta_dim},)"
            )
        return theta

    def theta_in_support(self, theta: np.ndarray) -> bool:
        return all(s.contains(t) for s, t in zip(self.theta_supports, theta))


# ---------------------------------------------------------------------------
# Reproducible random streams


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible source of randomness.

    Identical ``(seed, stream_id)`` pairs reproduce identical draw sequences;
    distinct ``stream_id`` values give statistically independent streams.
    """

    seed: int
    stream_id: int = 0

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed_sequence())


RngLike = RngStream | np.random.SeedSequence | np.random.Generator


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, np.random.SeedSequence):
        return np.random.default_rng(rng)
    if isinstance(rng, RngStream):
        return rng.generator()
    raise ConfigError(f"cannot build a generator from {type(rng).__name__}")


def spawn_seedseqs(rng: RngLike, n: int) -> list[np.random.SeedSequence]:
    """Derive ``n`` independent child sequences from a stream, deterministically."""
    if isinstance(rng, RngStream):
        root = rng.seed_sequence()
    elif isinstance(rng, np.random.SeedSequence):
        root = rng
    else:
        raise ConfigError("child streams need an RngStream or SeedSequence root")
    return root.spawn(n)


# ---------------------------------------------------------------------------
# Kernels


def _check_case_index(data: Dataset, i: int) -> int:
    i = int(i)
    if not 0 <= i < data.n:
        raise DimensionError(f"case index {i} outside 0..{data.n - 1}")
    return i


def _retained_loglik(model: ModelSpec, responses, covariates, theta) -> float:
    """Sum of per-case log-likelihoods; -inf absorbing."""
    if model.log_likelihood_cases is not None:
        vals = np.asarray(model.log_likelihood_cases(responses, covariates, theta), dtype=float)
        if np.any(np.isneginf(vals)):
            return NEG_INF
        return float(vals.sum())
    total = 0.0
    for yj, xj in zip(responses, covariates):
        v = model.log_likelihood_case(yj, xj, theta)
        if v == NEG_INF:
            return NEG_INF
        total += v
    return total


def log_xval_kernel(model: ModelSpec, data: Dataset, i: int, x_tilde: float, theta) -> float:
    """Unnormalised log-kernel of the leave-one-out covariate posterior.

    Evaluates ``log[pi(x_tilde, theta) f(y_i | x_tilde, theta)
    prod_{j != i} f(y_j | x_j, theta)]``, the joint kernel of the unknown
    covariate for case ``i`` and the parameters, with every other case's
    covariate held at its observed value.  Support violations anywhere give
    ``-inf``.
    """
    i = _check_case_index(data, i)
    theta = model.check_theta(theta)
    lp = model.log_prior_x(x_tilde)
    if lp == NEG_INF:
        return NEG_INF
    lpt = model.log_prior_theta(theta)
    if lpt == NEG_INF:
        return NEG_INF
    lp += lpt
    loo = model.log_likelihood_case(data.responses[i], x_tilde, theta)
    if loo == NEG_INF:
        return NEG_INF
    keep = np.arange(data.n) != i
    retained = _retained_loglik(model, data.responses[keep], data.covariates[keep], theta)
    if retained == NEG_INF:
        return NEG_INF
    return lp + loo + retained


def log_full_kernel(model: ModelSpec, data: Dataset, x_tilde_all, theta) -> float:
    """Joint log-kernel with every covariate treated as unknown.

    Only used for small-instance oracle checks; the assessment pipeline works
    through the leave-one-out kernels instead.
    """
    x_all = np.asarray(x_tilde_all, dtype=float)
    if x_all.shape != (data.n,):
        raise DimensionError(f"x_tilde_all has shape {x_all.shape}, expected ({data.n},)")
    theta = model.check_theta(theta)
    lp = model.log_prior_theta(theta)
    if lp == NEG_INF:
        return NEG_INF
    for xv in x_all:
        v = model.log_prior_x(xv)
        if v == NEG_INF:
            return NEG_INF
        lp += v
    like = _retained_loglik(model, data.responses, x_all, theta)
    if like == NEG_INF:
        return NEG_INF
    return lp + like


# ---------------------------------------------------------------------------
# Dataset CSV round-trip


def write_dataset_csv(data: Dataset, path) -> None:
    """Write ``case,y[,y2,...],x`` rows; integers exact, reals via repr."""
    y = data.responses
    m = 1 if y.ndim == 1 else y.shape[1]
    header = ["case"] + ["y" if k == 0 else f"y{k + 1}" for k in range(m)] + ["x"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(data.n):
            counts = [int(y[i])] if y.ndim == 1 else [int(v) for v in y[i]]
            w.writerow([i, *counts, repr(float(data.covariates[i]))])


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "case" or rows[0][-1] != "x":
        raise DataError(f"{path}: expected header case,y[,y2,...],x")
    m = len(rows[0]) - 2
    ys, xs = [], []
    for row in rows[1:]:
        if not row:
            continue
        counts = [int(v) for v in row[1 : 1 + m]]
        ys.append(counts[0] if m == 1 else counts)
        xs.append(float(row[-1]))
    return Dataset(np.asarray(ys, dtype=np.int64), np.asarray(xs, dtype=float))
