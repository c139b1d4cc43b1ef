"""Importance-resampling cross-validation of covariate posteriors.

One expensive pilot chain is run for a single case; every other case's
leave-one-out posterior is then reached by importance-reweighting the pilot's
parameter draws, resampling (without replacement by default) and drawing the
unknown covariate from its fast fixed-parameter conditional.  A brute-force
n-fold sampler is kept alongside as the correctness oracle and timing
baseline.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import (
    NEG_INF,
    ConfigError,
    Dataset,
    DegenerateWeightsError,
    DimensionError,
    ModelSpec,
    RngLike,
    as_generator,
    spawn_seedseqs,
)
from .mcmc import Chain, MCMCConfig, _conditional_chains, run_pilot_chain

__all__ = [
    "IRMCMCConfig",
    "XValDraws",
    "select_pilot_case",
    "importance_log_weight",
    "resample_indices",
    "run_irmcmc",
    "brute_force_xval",
    "write_xval_csv",
    "write_weight_diagnostics_csv",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IRMCMCConfig:
    """Settings for one importance-resampling cross-validation run.

    ``n_resample`` parameter draws are selected per case and ``conditional_draws``
    covariate values are sampled for each of them, so every case ends up with
    ``n_resample * conditional_draws`` draws.  The ``conditional`` run length
    is governed by its burn-in and thinning; its ``n_iterations`` is ignored.
    """

    pilot_case: int | Literal["auto"] = "auto"
    n_resample: int = 100
    conditional_draws: int = 10
    with_replacement: bool = False
    pilot: MCMCConfig = field(default_factory=MCMCConfig)
    conditional: MCMCConfig = field(
        default_factory=lambda: MCMCConfig(n_iterations=150, burn_in=100, thin=5)
    )

    def validate(self) -> None:
        if self.n_resample < 1 or self.conditional_draws < 1:
            raise ConfigError("n_resample and conditional_draws must be positive")
        self.pilot.validate()
        if self.conditional.burn_in < 0 or self.conditional.thin < 1:
            raise ConfigError("invalid conditional chain settings")
        if not self.with_replacement and self.n_resample > self.pilot.n_retained:
            raise ConfigError(
                "without replacement needs n_resample <= retained pilot draws"
            )


@dataclass
class XValDraws:
    """Per-case draws from the leave-one-out covariate posteriors.

    ``observed`` holds the values the draws are checked against (covariates
    for inverse runs; the same container carries response draws for forward
    checks).  The pilot case's draws come straight from the pilot chain, so
    its weights are uniform and its weight ESS equals the pilot draw count.
    """

    observed: np.ndarray
    per_case: dict[int, np.ndarray]
    per_case_theta: dict[int, np.ndarray]
    weight_ess: dict[int, float]
    max_weight_share: dict[int, float]
    pilot_case: int | None = None

    @property
    def n_cases(self) -> int:
        return len(self.per_case)

    @property
    def n_joint_draws(self) -> int:
        return min(len(v) for v in self.per_case.values())

    def case_matrix(self) -> np.ndarray:
        """Draws aligned by index: column per case, truncated to the minimum length."""
        j = self.n_joint_draws
        cases = sorted(self.per_case)
        return np.column_stack([self.per_case[i][:j] for i in cases])


def select_pilot_case(data: Dataset) -> int:
    """Index whose covariate is closest to the median of X (ties: smallest)."""
    if data.n < 2:
        raise ConfigError("pilot-case selection needs at least 2 cases")
    med = float(np.median(data.covariates))
    return int(np.argmin(np.abs(data.covariates - med)))


def importance_log_weight(
    model: ModelSpec,
    data: Dataset,
    i_star: int,
    i: int,
    x_tilde_star: float,
    theta,
) -> float:
    """Log importance weight carrying a pilot draw from case ``i_star`` to case ``i``.

    The weight is the likelihood ratio
    ``f(y_i* | x_i*, th) f(y_i | xt, th) / [f(y_i* | xt, th) f(y_i | x_i, th)]``
    with ``xt`` the pilot draw of the unknown covariate.  Any support
    violation among the four factors gives ``-inf``.
    """
    if not 0 <= i_star < data.n or not 0 <= i < data.n:
        raise DimensionError(f"case indices ({i_star}, {i}) outside 0..{data.n - 1}")
    if i == i_star:
        return 0.0
    theta = model.check_theta(theta)
    ll = model.log_likelihood_case
    terms = (
        ll(data.responses[i_star], data.covariates[i_star], theta),
        ll(data.responses[i], x_tilde_star, theta),
        ll(data.responses[i_star], x_tilde_star, theta),
        ll(data.responses[i], data.covariates[i], theta),
    )
    if NEG_INF in terms:
        return NEG_INF
    return terms[0] + terms[1] - terms[2] - terms[3]


def _batch_loglik(model: ModelSpec, y, x, thetas: np.ndarray) -> np.ndarray:
    if model.log_likelihood_batch is not None:
        return np.asarray(model.log_likelihood_batch(y, x, thetas), dtype=float)
    xs = np.broadcast_to(np.asarray(x, dtype=float), (thetas.shape[0],))
    return np.array(
        [model.log_likelihood_case(y, xv, th) for xv, th in zip(xs, thetas)]
    )


def case_log_weights(
    model: ModelSpec,
    data: Dataset,
    i_star: int,
    i: int,
    pilot_x: np.ndarray,
    pilot_theta: np.ndarray,
    _shared: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Vectorised log-weights of all pilot states for case ``i``.

    ``_shared`` caches the two factors that do not depend on ``i``.
    """
    if _shared is None:
        a = _batch_loglik(model, data.responses[i_star], data.covariates[i_star], pilot_theta)
        c = _batch_loglik(model, data.responses[i_star], pilot_x, pilot_theta)
    else:
        a, c = _shared
    b = _batch_loglik(model, data.responses[i], pilot_x, pilot_theta)
    d = _batch_loglik(model, data.responses[i], data.covariates[i], pilot_theta)
    bad = np.isneginf(a) | np.isneginf(b) | np.isneginf(c) | np.isneginf(d)
    lw = a + b - c - d
    lw[bad] = NEG_INF
    return lw


def _weight_summary(log_weights: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Normalised weights with their ESS and largest share."""
    finite = np.isfinite(log_weights)
    if not finite.any():
        raise DegenerateWeightsError("all importance weights are zero", ess=0.0)
    w = np.zeros_like(log_weights)
    w[finite] = np.exp(log_weights[finite] - log_weights[finite].max())
    w /= w.sum()
    ess = 1.0 / float(np.square(w).sum())
    return ess, float(w.max()), w


def resample_indices(
    log_weights,
    K: int,
    with_replacement: bool,
    rng: RngLike,
) -> np.ndarray:
    """Select ``K`` state indices proportionally to importance weights.

    With replacement this is a single multinomial draw.  Without replacement
    the draw is sequential: pick one index with probability proportional to
    its weight, remove it, renormalise, repeat -- so ``K`` equal to the number
    of states returns a weighted random permutation.
    """
    lw = np.asarray(log_weights, dtype=float)
    if K < 1:
        raise ConfigError("K must be positive")
    g = as_generator(rng)
    ess, _, w = _weight_summary(lw)
    n_finite = int(np.isfinite(lw).sum())
    if with_replacement:
        return g.choice(lw.shape[0], size=K, replace=True, p=w)
    if n_finite < K:
        raise DegenerateWeightsError(
            f"only {n_finite} finite weights for K={K} without replacement",
            ess=ess,
        )
    w = w.copy()
    out = np.empty(K, dtype=int)
    for k in range(K):
        w_sum = w.sum()
        if w_sum <= 0.0:
            raise DegenerateWeightsError(
                "weights exhausted during sequential resampling", ess=ess
            )
        out[k] = g.choice(w.shape[0], p=w / w_sum)
        w[out[k]] = 0.0
    return out


def _even_indices(n: int, count: int) -> np.ndarray:
    """Evenly spaced indices into 0..n-1 (repeats when count > n)."""
    return np.clip(np.linspace(0, n - 1, num=count).round().astype(int), 0, n - 1)


def run_irmcmc(
    model: ModelSpec,
    data: Dataset,
    config: IRMCMCConfig,
    rng: RngLike,
) -> XValDraws:
    """Sample every leave-one-out covariate posterior from one pilot run.

    Steps: (1) pick the pilot case and sample ``(x_tilde, theta)`` from its
    leave-one-out posterior; (2) for every other case compute importance
    weights over all pilot states and resample ``n_resample`` parameter
    vectors; (3) for each resampled vector draw ``conditional_draws``
    covariate values at fixed parameters.  Deterministic given ``rng``; each
    case consumes an independent child stream so results do not depend on
    scheduling order.
    """
    config.validate()
    if data.n < 2:
        raise ConfigError("cross-validation needs at least 2 cases")
    i_star = config.pilot_case
    if i_star == "auto":
        i_star = select_pilot_case(data)
        logger.info("pilot case auto-selected by median proximity: %d", i_star)
    if not 0 <= i_star < data.n:
        raise ConfigError(f"pilot_case={i_star} outside 0..{data.n - 1}")

    children = spawn_seedseqs(rng, data.n + 1)
    pilot = run_pilot_chain(model, data, i_star, config.pilot, children[0])
    N = pilot.n_retained
    K, M = config.n_resample, config.conditional_draws

    per_case: dict[int, np.ndarray] = {}
    per_theta: dict[int, np.ndarray] = {}
    ess_by_case: dict[int, float] = {}
    share_by_case: dict[int, float] = {}

    # the pilot case keeps its own chain draws (weights are identically 1)
    per_case[i_star] = pilot.x[_even_indices(N, K * M)].copy()
    per_theta[i_star] = pilot.theta[_even_indices(N, K)].copy()
    ess_by_case[i_star] = float(N)
    share_by_case[i_star] = 1.0 / N

    # factors shared by every case's weight vector
    a = _batch_loglik(model, data.responses[i_star], data.covariates[i_star], pilot.theta)
    c = _batch_loglik(model, data.responses[i_star], pilot.x, pilot.theta)
    shared = (a, c)

    for i in range(data.n):
        if i == i_star:
            continue
        g = as_generator(children[1 + i])
        lw = case_log_weights(model, data, i_star, i, pilot.x, pilot.theta, shared)
        try:
            ess, share, _ = _weight_summary(lw)
            idx = resample_indices(lw, K, config.with_replacement, g)
        except DegenerateWeightsError as err:
            raise DegenerateWeightsError(
                f"case {i}: {err}", case=i, ess=err.ess
            ) from err
        thetas = pilot.theta[idx]
        draws, _ = _conditional_chains(
            model, data.responses[i], thetas, M, config.conditional, g
        )
        per_case[i] = draws.reshape(-1)
        per_theta[i] = thetas.copy()
        ess_by_case[i] = ess
        share_by_case[i] = share

    return XValDraws(
        observed=data.covariates.copy(),
        per_case=per_case,
        per_case_theta=per_theta,
        weight_ess=ess_by_case,
        max_weight_share=share_by_case,
        pilot_case=i_star,
    )


def brute_force_xval(
    model: ModelSpec,
    data: Dataset,
    config: MCMCConfig,
    rng: RngLike,
) -> XValDraws:
    """n-fold sampler: one independent pilot-style chain per case.

    The expensive baseline; used as correctness oracle and for timing
    comparisons.  Each case gets its own child stream.
    """
    config.validate()
    children = spawn_seedseqs(rng, data.n)
    per_case: dict[int, np.ndarray] = {}
    per_theta: dict[int, np.ndarray] = {}
    ess: dict[int, float] = {}
    share: dict[int, float] = {}
    for i in range(data.n):
        chain = run_pilot_chain(model, data, i, config, children[i])
        per_case[i] = chain.x.copy()
        per_theta[i] = chain.theta.copy()
        ess[i] = float(chain.n_retained)
        share[i] = 1.0 / chain.n_retained
    return XValDraws(
        observed=data.covariates.copy(),
        per_case=per_case,
        per_case_theta=per_theta,
        weight_ess=ess,
        max_weight_share=share,
        pilot_case=None,
    )


def write_xval_csv(xval: XValDraws, path) -> None:
    """Dump draws as ``case,draw_index,x_tilde`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "draw_index", "x_tilde"])
        for i in sorted(xval.per_case):
            for j, v in enumerate(xval.per_case[i]):
                w.writerow([i, j, repr(float(v))])


def write_weight_diagnostics_csv(xval: XValDraws, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "weight_ess", "max_weight_share"])
        for i in sorted(xval.weight_ess):
            w.writerow([i, repr(float(xval.weight_ess[i])), repr(float(xval.max_weight_share[i]))])
