"""Concrete model constructors, data generators and analytic oracles.

Count-regression families for the simulation studies (Poisson, Geometric and
polynomial-mean Poisson, all with flat improper parameter priors) plus the
multinomial-Dirichlet species-composition model.  The Poisson/flat-prior
family admits closed-form leave-one-out posteriors, which the test suite and
the brute-force comparisons lean on heavily.

Conventions: the Geometric family counts failures before the first success
(support 0, 1, 2, ...), so its mean matches the Poisson mean ``theta * x``
while its variance ``theta*x*(1 + theta*x)`` always exceeds it.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import gammaln
from scipy.stats import beta as beta_dist

from .core import (
    NEG_INF,
    ConfigError,
    CovariatePrior,
    DataError,
    Dataset,
    ExponentialPrior,
    FlatPositivePrior,
    Interval,
    ModelSpec,
    NormalPrior,
    RngLike,
    SamplerHints,
    UniformPrior,
    as_generator,
)

__all__ = [
    "poisson_model",
    "geometric_model",
    "polynomial_poisson_model",
    "chironomid_model",
    "build_model",
    "GeneratorSpec",
    "ChironomidSpec",
    "simulate_dataset",
    "simulate_chironomid",
    "cv_theta_exact",
    "cv_x_exact_logpdf",
    "cv_x_exact_sample",
    "forward_predictive_logpmf",
    "forward_predictive_sample",
    "response_curve",
    "prior_from_dict",
    "prior_to_dict",
]

logger = logging.getLogger(__name__)

_POSITIVE = Interval(0.0, math.inf)


def _count_mom(data: Dataset, left_out: int | None) -> np.ndarray:
    """Method-of-moments guess for a mean of the form theta * x."""
    y = np.asarray(data.responses, dtype=float)
    x = data.covariates
    if left_out is not None:
        keep = np.arange(data.n) != left_out
        y, x = y[keep], x[keep]
    return np.array([(y.sum() + 0.5) / x.sum()])


def poisson_model(x_prior: CovariatePrior = FlatPositivePrior()) -> ModelSpec:
    """Counts with mean and variance both equal to ``theta * x``.

    Flat improper prior on ``theta > 0``.  With the flat covariate prior the
    leave-one-out posteriors are available in closed form (see
    :func:`cv_theta_exact` and :func:`cv_x_exact_logpdf`).
    """

    def loglik(y, x, theta):
        mu = theta[0] * x
        if mu <= 0.0:
            return NEG_INF
        return float(y) * math.log(mu) - mu - math.lgamma(float(y) + 1.0)

    def loglik_cases(Y, X, theta):
        mu = theta[0] * np.asarray(X, dtype=float)
        y = np.asarray(Y, dtype=float)
        out = np.full(mu.shape, NEG_INF)
        ok = mu > 0.0
        out[ok] = y[ok] * np.log(mu[ok]) - mu[ok] - gammaln(y[ok] + 1.0)
        return out

    def loglik_batch(y, x, thetas):
        mu = thetas[:, 0] * np.asarray(x, dtype=float)
        out = np.full(mu.shape, NEG_INF)
        ok = mu > 0.0
        yv = float(y)
        out[ok] = yv * np.log(mu[ok]) - mu[ok] - math.lgamma(yv + 1.0)
        return out

    return ModelSpec(
        name="poisson",
        theta_dim=1,
        covariate_support=x_prior.support,
        log_likelihood_case=loglik,
        log_prior_theta=lambda th: 0.0 if th[0] > 0.0 else NEG_INF,
        log_prior_x=x_prior.log_density,
        theta_supports=(_POSITIVE,),
        sampler_hints=SamplerHints(x_init=x_prior.initial_point(), theta_init=_count_mom),
        log_likelihood_cases=loglik_cases,
        log_likelihood_batch=loglik_batch,
    )


def geometric_model(x_prior: CovariatePrior = FlatPositivePrior()) -> ModelSpec:
    """Counts with success probability ``1 / (1 + theta * x)``.

    Same mean ``theta * x`` as the Poisson family but variance
    ``theta*x*(1 + theta*x)``; the two families drift apart as ``theta``
    grows.  Flat improper prior on ``theta > 0``.
    """

    def loglik(y, x, theta):
        mu = theta[0] * x
        if mu <= 0.0:
            return NEG_INF
        yv = float(y)
        return yv * math.log(mu) - (yv + 1.0) * math.log1p(mu)

    def loglik_cases(Y, X, theta):
        mu = theta[0] * np.asarray(X, dtype=float)
        y = np.asarray(Y, dtype=float)
        out = np.full(mu.shape, NEG_INF)
        ok = mu > 0.0
        out[ok] = y[ok] * np.log(mu[ok]) - (y[ok] + 1.0) * np.log1p(mu[ok])
        return out

    def loglik_batch(y, x, thetas):
        mu = thetas[:, 0] * np.asarray(x, dtype=float)
        out = np.full(mu.shape, NEG_INF)
        ok = mu > 0.0
        yv = float(y)
        out[ok] = yv * np.log(mu[ok]) - (yv + 1.0) * np.log1p(mu[ok])
        return out

    return ModelSpec(
        name="geometric",
        theta_dim=1,
        covariate_support=x_prior.support,
        log_likelihood_case=loglik,
        log_prior_theta=lambda th: 0.0 if th[0] > 0.0 else NEG_INF,
        log_prior_x=x_prior.log_density,
        theta_supports=(_POSITIVE,),
        sampler_hints=SamplerHints(x_init=x_prior.initial_point(), theta_init=_count_mom),
        log_likelihood_cases=loglik_cases,
        log_likelihood_batch=loglik_batch,
    )


def polynomial_poisson_model(
    degree: int, x_prior: CovariatePrior = UniformPrior(0.0, 10.0)
) -> ModelSpec:
    """Poisson counts with mean ``theta_1 x + ... + theta_D x^D``.

    Flat priors on each ``theta_d > 0``; used for the variable-selection
    study where nested degrees compete.
    """
    if degree not in (1, 2, 3):
        raise ConfigError("degree must be 1, 2 or 3")
    D = degree

    def mean_fn(x, theta):
        return sum(theta[d] * x ** (d + 1) for d in range(D))

    def loglik(y, x, theta):
        mu = mean_fn(x, theta)
        if mu <= 0.0:
            return NEG_INF
        return float(y) * math.log(mu) - mu - math.lgamma(float(y) + 1.0)

    def loglik_cases(Y, X, theta):
        x = np.asarray(X, dtype=float)
        mu = sum(theta[d] * x ** (d + 1) for d in range(D))
        y = np.asarray(Y, dtype=float)
        out = np.full(mu.shape, NEG_INF)
        ok = mu > 0.0
        out[ok] = y[ok] * np.log(mu[ok]) - mu[ok] - gammaln(y[ok] + 1.0)
        return out

    def loglik_batch(y, x, thetas):
        x = np.asarray(x, dtype=float)
        mu = sum(thetas[:, d] * x ** (d + 1) for d in range(D))
        out = np.full(mu.shape, NEG_INF)
        ok = mu > 0.0
        yv = float(y)
        out[ok] = yv * np.log(mu[ok]) - mu[ok] - math.lgamma(yv + 1.0)
        return out

    def theta_init(data: Dataset, left_out: int | None) -> np.ndarray:
        y = np.asarray(data.responses, dtype=float)
        x = data.covariates
        if left_out is not None:
            keep = np.arange(data.n) != left_out
            y, x = y[keep], x[keep]
        total = y.sum() + 0.5
        return np.array([total / (D * max((x ** (d + 1)).sum(), 1e-12)) for d in range(D)])

    return ModelSpec(
        name=f"polynomial_poisson_deg{D}",
        theta_dim=D,
        covariate_support=x_prior.support,
        log_likelihood_case=loglik,
        log_prior_theta=lambda th: 0.0 if np.all(th > 0.0) else NEG_INF,
        log_prior_x=x_prior.log_density,
        theta_supports=tuple(_POSITIVE for _ in range(D)),
        sampler_hints=SamplerHints(x_init=x_prior.initial_point(), theta_init=theta_init),
        log_likelihood_cases=loglik_cases,
        log_likelihood_batch=loglik_batch,
    )


# ---------------------------------------------------------------------------
# Species-composition model (multinomial counts, Dirichlet abundances)


@dataclass(frozen=True)
class ChironomidSpec:
    """Shape of the synthetic species-composition problem.

    Per-site count vectors over ``m_species`` follow a multinomial whose
    relative abundances are Dirichlet with concentrations given by a unimodal
    Gaussian response curve per species.  Defaults mirror the 62-lake,
    52-species survey scale; ``site_total`` fixes each site's count total.
    """

    n_sites: int = 62
    m_species: int = 52
    site_total: int = 100
    x_prior: NormalPrior = field(default_factory=lambda: NormalPrior(11.19, 1.11))
    alpha_low: float = 0.1
    alpha_high: float = 50.0
    beta_prior: NormalPrior = field(default_factory=lambda: NormalPrior(11.19, 1.57))
    gamma_shape: float = 9.0
    gamma_rate: float = 3.0

    def validate(self) -> None:
        if self.n_sites < 2 or self.m_species < 2:
            raise ConfigError("need at least 2 sites and 2 species")
        if self.site_total < 1:
            raise ConfigError("site_total must be positive")
        if not 0 < self.alpha_low < self.alpha_high:
            raise ConfigError("need 0 < alpha_low < alpha_high")
        if self.gamma_shape <= 0 or self.gamma_rate <= 0:
            raise ConfigError("gamma prior parameters must be positive")


def response_curve(x, alpha, beta, gamma):
    """Expected relative-abundance weight: ``alpha * exp(-((x-beta)/gamma)^2)``.

    Peaks at ``x = beta`` with height ``alpha``; ``gamma`` is the tolerance.
    """
    z = (np.asarray(x, dtype=float) - beta) / gamma
    return alpha * np.exp(-np.square(z))


def _split_psi(theta: np.ndarray, m: int):
    return theta[:m], theta[m : 2 * m], theta[2 * m :]


def chironomid_model(spec: ChironomidSpec) -> ModelSpec:
    """Species-composition model with relative abundances integrated out.

    Marginalising the Dirichlet abundances against the multinomial counts
    gives a Dirichlet-multinomial likelihood per site, leaving
    ``theta = (alpha_1..m, beta_1..m, gamma_1..m)``.  Everything is computed
    in log space; the linear-space form overflows at survey scale.
    """
    spec.validate()
    m = spec.m_species

    def _concentrations(x, theta):
        a, b, gmm = _split_psi(theta, m)
        return response_curve(x, a, b, gmm)

    def _dirmult(y: np.ndarray, lam: np.ndarray) -> float:
        lam_tot = lam.sum()
        if not lam_tot > 0.0:
            return NEG_INF
        y_tot = float(y.sum())
        logc = math.lgamma(y_tot + 1.0) - float(gammaln(y + 1.0).sum())
        terms = gammaln(y + lam) - gammaln(lam)
        terms = np.where(y > 0, terms, 0.0)
        val = (
            logc
            + float(gammaln(lam_tot))
            - float(gammaln(y_tot + lam_tot))
            + float(terms.sum())
        )
        return val if math.isfinite(val) else NEG_INF

    def loglik(y, x, theta):
        y = np.asarray(y, dtype=float)
        if y.shape != (m,):
            raise DataError(f"expected a count vector of length {m}, got {y.shape}")
        return _dirmult(y, _concentrations(x, theta))

    def loglik_cases(Y, X, theta):
        y = np.asarray(Y, dtype=float)
        a, b, gmm = _split_psi(theta, m)
        x = np.asarray(X, dtype=float)[:, None]
        lam = a * np.exp(-np.square((x - b) / gmm))  # (n, m)
        lam_tot = lam.sum(axis=1)
        y_tot = y.sum(axis=1)
        logc = gammaln(y_tot + 1.0) - gammaln(y + 1.0).sum(axis=1)
        terms = np.where(y > 0, gammaln(y + lam) - gammaln(lam), 0.0)
        out = logc + gammaln(lam_tot) - gammaln(y_tot + lam_tot) + terms.sum(axis=1)
        out[~(lam_tot > 0.0)] = NEG_INF
        return np.where(np.isfinite(out), out, NEG_INF)

    def loglik_batch(y, x, thetas):
        y = np.asarray(y, dtype=float)
        a = thetas[:, :m]
        b = thetas[:, m : 2 * m]
        gmm = thetas[:, 2 * m :]
        x = np.asarray(x, dtype=float)
        xcol = x[:, None] if x.ndim == 1 else x
        lam = a * np.exp(-np.square((xcol - b) / gmm))  # (N, m)
        lam_tot = lam.sum(axis=1)
        y_tot = float(y.sum())
        logc = math.lgamma(y_tot + 1.0) - float(gammaln(y + 1.0).sum())
        terms = np.where(y > 0, gammaln(y + lam) - gammaln(lam), 0.0)
        out = logc + gammaln(lam_tot) - gammaln(y_tot + lam_tot) + terms.sum(axis=1)
        out[~(lam_tot > 0.0)] = NEG_INF
        return np.where(np.isfinite(out), out, NEG_INF)

    log_unif = -math.log(spec.alpha_high - spec.alpha_low)
    k, r = spec.gamma_shape, spec.gamma_rate
    gamma_const = k * math.log(r) - math.lgamma(k)
    bp = spec.beta_prior

    def log_prior_theta(theta):
        a, b, gmm = _split_psi(theta, m)
        if np.any(a <= spec.alpha_low) or np.any(a >= spec.alpha_high):
            return NEG_INF
        if np.any(gmm <= 0.0):
            return NEG_INF
        lp = m * log_unif
        zb = (b - bp.mean) / bp.sd
        lp += float(
            -0.5 * np.square(zb).sum()
            - m * (math.log(bp.sd) + 0.5 * math.log(2.0 * math.pi))
        )
        lp += float(m * gamma_const + ((k - 1.0) * np.log(gmm) - r * gmm).sum())
        return lp

    def theta_init(data, left_out):
        a0 = math.sqrt(spec.alpha_low * spec.alpha_high)
        return np.concatenate(
            [
                np.full(m, a0),
                np.full(m, bp.mean),
                np.full(m, k / r),
            ]
        )

    supports = (
        tuple(Interval(spec.alpha_low, spec.alpha_high) for _ in range(m))
        + tuple(Interval() for _ in range(m))
        + tuple(_POSITIVE for _ in range(m))
    )

    return ModelSpec(
        name=f"chironomid_m{m}",
        theta_dim=3 * m,
        covariate_support=spec.x_prior.support,
        log_likelihood_case=loglik,
        log_prior_theta=log_prior_theta,
        log_prior_x=spec.x_prior.log_density,
        theta_supports=supports,
        sampler_hints=SamplerHints(
            x_init=spec.x_prior.initial_point(),
            theta_init=theta_init,
            x_scale=1.0,
        ),
        log_likelihood_cases=loglik_cases,
        log_likelihood_batch=loglik_batch,
    )


# ---------------------------------------------------------------------------
# Data generators


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for one synthetic count-regression dataset.

    Either ``theta_true`` fixes the parameters or ``theta_range`` draws a
    scalar parameter uniformly per dataset.  ``covariate_law`` must be a
    proper distribution (uniform or exponential).
    """

    true_model: Literal["poisson", "geometric", "polynomial_poisson"]
    covariate_law: CovariatePrior
    n: int
    theta_true: tuple[float, ...] | None = None
    theta_range: tuple[float, float] | None = None

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if self.true_model not in ("poisson", "geometric", "polynomial_poisson"):
            raise ConfigError(f"unknown true_model {self.true_model!r}")
        if (self.theta_true is None) == (self.theta_range is None):
            raise ConfigError("give exactly one of theta_true or theta_range")
        if self.theta_true is not None and any(t <= 0 for t in self.theta_true):
            raise ConfigError("theta_true entries must be positive")
        if self.theta_range is not None:
            lo, hi = self.theta_range
            if not 0 <= lo < hi:
                raise ConfigError("theta_range must satisfy 0 <= low < high")
        if isinstance(self.covariate_law, FlatPositivePrior):
            raise ConfigError("covariate_law must be proper")


def simulate_dataset(spec: GeneratorSpec, rng: RngLike) -> Dataset:
    """Draw covariates from the law, then counts from the true model."""
    spec.validate()
    g = as_generator(rng)
    x = np.asarray(spec.covariate_law.sample(g, size=spec.n), dtype=float)
    if spec.theta_true is not None:
        theta = np.asarray(spec.theta_true, dtype=float)
    else:
        lo, hi = spec.theta_range
        theta = np.array([g.uniform(lo, hi)])
    if spec.true_model == "poisson":
        y = g.poisson(theta[0] * x)
    elif spec.true_model == "geometric":
        p = 1.0 / (1.0 + theta[0] * x)
        y = g.geometric(p) - 1  # failures before first success
    else:
        mu = sum(theta[d] * x ** (d + 1) for d in range(theta.shape[0]))
        y = g.poisson(mu)
    return Dataset(np.asarray(y, dtype=np.int64), x)


_LAMBDA_FLOOR = 1e-12


def simulate_chironomid(spec: ChironomidSpec, rng: RngLike) -> Dataset:
    """Draw response parameters and temperatures from the priors, then counts.

    Concentrations below 1e-12 are floored (and logged) before the Dirichlet
    draw; count totals are fixed at ``spec.site_total`` per site.
    """
    spec.validate()
    g = as_generator(rng)
    m, n = spec.m_species, spec.n_sites
    alpha = g.uniform(spec.alpha_low, spec.alpha_high, size=m)
    beta = spec.beta_prior.sample(g, size=m)
    gamma = g.gamma(spec.gamma_shape, 1.0 / spec.gamma_rate, size=m)
    x = spec.x_prior.sample(g, size=n)
    lam = alpha * np.exp(-np.square((x[:, None] - beta) / gamma))
    n_floored = int((lam < _LAMBDA_FLOOR).sum())
    if n_floored:
        logger.info("floored %d tiny Dirichlet concentrations", n_floored)
        lam = np.maximum(lam, _LAMBDA_FLOOR)
    y = np.empty((n, m), dtype=np.int64)
    for i in range(n):
        p = g.dirichlet(lam[i])
        p = np.maximum(p, 0.0)
        p /= p.sum()
        y[i] = g.multinomial(spec.site_total, p)
    return Dataset(y, x)


# ---------------------------------------------------------------------------
# Closed-form leave-one-out oracles (Poisson family, flat priors)


def _check_scalar_counts(data: Dataset) -> None:
    if data.responses.ndim != 1:
        raise DataError("closed forms require scalar count responses")


def cv_theta_exact(data: Dataset, i: int) -> tuple[float, float]:
    """Gamma (shape, rate) of the parameter's leave-one-out posterior.

    Valid for the Poisson model with flat priors on both the parameter and
    the held-out covariate: shape is the count sum and rate the covariate sum
    over the retained cases.
    """
    _check_scalar_counts(data)
    keep = np.arange(data.n) != i
    shape = float(data.responses[keep].sum())
    rate = float(data.covariates[keep].sum())
    if shape == 0.0:
        warnings.warn(
            f"case {i}: retained counts sum to zero; the leave-one-out "
            "posterior is improper",
            stacklevel=2,
        )
    return shape, rate


def cv_x_exact_logpdf(data: Dataset, i: int, x_tilde):
    """Log-density of the held-out covariate's leave-one-out posterior.

    Poisson model, flat priors.  Normalised: integrates to 1 over (0, inf).
    Accepts scalar or array ``x_tilde``; values <= 0 give ``-inf``.
    """
    _check_scalar_counts(data)
    keep = np.arange(data.n) != i
    a = float(data.responses[keep].sum())  # retained count sum
    s = float(data.covariates[keep].sum())  # retained covariate sum
    y_i = float(data.responses[i])
    total = a + y_i
    lognorm = (
        a * math.log(s)
        + math.lgamma(total + 1.0)
        - math.lgamma(y_i + 1.0)
        - math.lgamma(a)
    )
    x = np.asarray(x_tilde, dtype=float)
    out = np.full(x.shape, NEG_INF)
    ok = x > 0.0
    out[ok] = lognorm + y_i * np.log(x[ok]) - (total + 1.0) * np.log(x[ok] + s)
    return float(out) if out.ndim == 0 else out


def cv_x_exact_sample(data: Dataset, i: int, size: int, rng: RngLike) -> np.ndarray:
    """Inverse-CDF samples of the held-out covariate posterior.

    Uses the Beta representation ``x/(x+s) ~ Beta(y_i + 1, a)`` with ``a``
    the retained count sum and ``s`` the retained covariate sum.
    """
    _check_scalar_counts(data)
    keep = np.arange(data.n) != i
    a = float(data.responses[keep].sum())
    s = float(data.covariates[keep].sum())
    if a <= 0.0:
        raise DataError(f"case {i}: improper posterior (retained counts sum to 0)")
    g = as_generator(rng)
    b = beta_dist.ppf(g.random(size), float(data.responses[i]) + 1.0, a)
    b = np.clip(b, 1e-15, 1.0 - 1e-15)
    return s * b / (1.0 - b)


def forward_predictive_logpmf(data: Dataset, i: int, y_tilde):
    """Log-mass of the forward leave-one-out predictive for case ``i``.

    Poisson model, flat parameter prior: dropping case ``i``'s response
    leaves a Gamma(counts+1, covariate sum) posterior for the rate parameter,
    and mixing the Poisson against it gives a negative binomial with that
    shape.  Accepts scalar or array ``y_tilde``.
    """
    _check_scalar_counts(data)
    keep = np.arange(data.n) != i
    shape = float(data.responses[keep].sum()) + 1.0
    rate = float(data.covariates[keep].sum())
    x_i = float(data.covariates[i])
    y = np.asarray(y_tilde, dtype=float)
    logp = (
        gammaln(y + shape)
        - math.lgamma(shape)
        - gammaln(y + 1.0)
        + shape * math.log(rate / (rate + x_i))
        + y * math.log(x_i / (rate + x_i))
    )
    return float(logp) if logp.ndim == 0 else logp


def forward_predictive_sample(data: Dataset, i: int, size: int, rng: RngLike) -> np.ndarray:
    """Inverse-CDF samples from the forward leave-one-out predictive pmf."""
    g = as_generator(rng)
    keep = np.arange(data.n) != i
    shape = float(data.responses[keep].sum()) + 1.0
    rate = float(data.covariates[keep].sum())
    x_i = float(data.covariates[i])
    mean = shape * x_i / rate
    sd = math.sqrt(mean * (1.0 + x_i / rate))
    cap = int(mean + 20.0 * sd + 50.0)
    grid = np.arange(cap + 1)
    pmf = np.exp(forward_predictive_logpmf(data, i, grid))
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, g.random(size), side="left").astype(np.int64)


# ---------------------------------------------------------------------------
# Registry and config parsing


def build_model(family: str, x_prior: CovariatePrior, degree: int | None = None) -> ModelSpec:
    """Resolve a family name (plus covariate prior) to a ModelSpec."""
    if family == "poisson":
        return poisson_model(x_prior)
    if family == "geometric":
        return geometric_model(x_prior)
    if family == "polynomial_poisson":
        if degree is None:
            raise ConfigError("polynomial_poisson needs a degree")
        return polynomial_poisson_model(degree, x_prior)
    raise ConfigError(f"unknown model family {family!r}")


def prior_from_dict(d: dict) -> CovariatePrior:
    kind = d.get("kind")
    if kind == "uniform":
        return UniformPrior(float(d["lower"]), float(d["upper"]))
    if kind == "exponential":
        return ExponentialPrior(float(d["mean"]))
    if kind == "flat":
        return FlatPositivePrior()
    if kind == "normal":
        return NormalPrior(float(d["mean"]), float(d["sd"]))
    raise ConfigError(f"unknown prior kind {kind!r}")


def prior_to_dict(p: CovariatePrior) -> dict:
    if isinstance(p, UniformPrior):
        return {"kind": "uniform", "lower": p.lower, "upper": p.upper}
    if isinstance(p, ExponentialPrior):
        return {"kind": "exponential", "mean": p.mean}
    if isinstance(p, FlatPositivePrior):
        return {"kind": "flat"}
    if isinstance(p, NormalPrior):
        return {"kind": "normal", "mean": p.mean, "sd": p.sd}
    raise ConfigError(f"cannot serialise prior {type(p).__name__}")
