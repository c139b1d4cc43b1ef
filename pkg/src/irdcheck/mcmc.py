"""Coordinate-wise random-walk Metropolis machinery.

One engine serves two jobs: pilot runs over the joint state
``(x_tilde, theta)`` targeting a leave-one-out posterior kernel, and fast
fixed-``theta`` sampling of a single covariate.  Positive-support coordinates
are updated on the log scale with the Jacobian correction; proposal scales
adapt toward a target acceptance rate during burn-in only, so retained draws
always come from a fixed kernel.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    NEG_INF,
    ChainInitError,
    ConfigError,
    Dataset,
    ModelSpec,
    RngLike,
    TooFewDrawsError,
    as_generator,
    _retained_loglik,
)

__all__ = [
    "MCMCConfig",
    "Chain",
    "run_pilot_chain",
    "sample_conditional_x",
    "diagnostics",
    "DiagnosticsSummary",
    "write_chain_csv",
]

_ADAPT_BATCH = 25
_DEFAULT_SCALE = 0.5


@dataclass(frozen=True)
class MCMCConfig:
    """Run-length and proposal settings for one Metropolis chain.

    ``proposal_scales`` overrides the model's sampler hints; order is the
    covariate first, then each parameter coordinate.
    """

    n_iterations: int = 10_000
    burn_in: int = 5_000
    thin: int = 1
    proposal_scales: tuple[float, ...] | None = None
    adapt: bool = True
    adapt_target_acceptance: float = 0.44

    def validate(self) -> None:
        if self.n_iterations <= 0:
            raise ConfigError("n_iterations must be positive")
        if not 0 <= self.burn_in < self.n_iterations:
            raise ConfigError("need 0 <= burn_in < n_iterations")
        if self.thin <= 0:
            raise ConfigError("thin must be positive")
        if self.n_retained < 1:
            raise ConfigError("no retained draws: (n_iterations - burn_in)/thin < 1")
        if not 0.0 < self.adapt_target_acceptance < 1.0:
            raise ConfigError("adapt_target_acceptance must be in (0, 1)")
        if self.proposal_scales is not None and any(s <= 0 for s in self.proposal_scales):
            raise ConfigError("proposal scales must be positive")

    @property
    def n_retained(self) -> int:
        return (self.n_iterations - self.burn_in) // self.thin


@dataclass(frozen=True)
class Chain:
    """Retained draws of ``(x_tilde, theta)`` plus bookkeeping.

    ``acceptance_rates`` are post-burn-in, one entry for the covariate
    followed by one per parameter coordinate.  Every retained state has a
    finite log-kernel by construction.
    """

    x: np.ndarray
    theta: np.ndarray
    log_kernel_trace: np.ndarray
    acceptance_rates: np.ndarray
    proposal_scales: np.ndarray
    pilot_case: int | None = None

    @property
    def n_retained(self) -> int:
        return int(self.x.shape[0])

    @property
    def states(self):
        return list(zip(self.x, self.theta))


def _propose(value: float, scale: float, log_step: bool, z: float) -> tuple[float, float]:
    """One random-walk proposal; returns (new value, log Jacobian term)."""
    if log_step:
        new = value * math.exp(scale * z)
        return new, math.log(new) - math.log(value)
    return value + scale * z, 0.0


def _initial_theta(model: ModelSpec, data: Dataset, left_out: int | None) -> np.ndarray:
    hints = model.sampler_hints
    if hints.theta_init is not None:
        theta = np.atleast_1d(np.asarray(hints.theta_init(data, left_out), dtype=float))
    else:
        theta = np.ones(model.theta_dim)
    # clip into support, staying away from the edges
    out = np.empty(model.theta_dim)
    for c, (t, s) in enumerate(zip(theta, model.theta_supports)):
        if s.contains(t):
            out[c] = t
        elif s.bounded:
            out[c] = s.midpoint
        elif math.isfinite(s.lower):
            out[c] = s.lower + 1.0
        elif math.isfinite(s.upper):
            out[c] = s.upper - 1.0
        else:
            out[c] = 0.0
    return out


def _initial_x(model: ModelSpec) -> float:
    if model.sampler_hints.x_init is not None:
        return float(model.sampler_hints.x_init)
    sup = model.covariate_support
    if sup.bounded:
        return sup.midpoint
    if math.isfinite(sup.lower):
        return sup.lower + 1.0
    if math.isfinite(sup.upper):
        return sup.upper - 1.0
    return 0.0


def _blame_coordinate(model: ModelSpec, x: float, theta: np.ndarray) -> str:
    if model.log_prior_x(x) == NEG_INF:
        return "x_tilde"
    for c, (t, s) in enumerate(zip(theta, model.theta_supports)):
        if not s.contains(t):
            return f"theta[{c}]"
    if model.log_prior_theta(theta) == NEG_INF:
        return "theta"
    return "likelihood"


def _scales(model: ModelSpec, config: MCMCConfig) -> np.ndarray:
    p = model.theta_dim
    if config.proposal_scales is not None:
        sc = np.asarray(config.proposal_scales, dtype=float)
        if sc.shape != (p + 1,):
            raise ConfigError(f"expected {p + 1} proposal scales, got {sc.shape}")
        return sc.copy()
    hints = model.sampler_hints
    sc = np.full(p + 1, _DEFAULT_SCALE)
    if hints.x_scale is not None:
        sc[0] = hints.x_scale
    elif model.covariate_support.bounded and model.covariate_support.lower < 0:
        sc[0] = 0.25 * (model.covariate_support.upper - model.covariate_support.lower)
    if hints.theta_scales is not None:
        sc[1:] = np.asarray(hints.theta_scales, dtype=float)
    return sc


def run_pilot_chain(
    model: ModelSpec,
    data: Dataset,
    i_star: int,
    config: MCMCConfig,
    rng: RngLike,
) -> Chain:
    """Sample the joint leave-one-out posterior of ``(x_tilde, theta)``.

    Targets the kernel with case ``i_star``'s covariate unknown and all other
    covariates fixed at their observed values.  Coordinate-wise Gaussian
    random walk; deterministic given ``rng``.

    Raises
    ------
    ChainInitError
        If no finite-kernel starting state is found after a bounded search.
    """
    config.validate()
    if not 0 <= i_star < data.n:
        raise ConfigError(f"i_star={i_star} outside 0..{data.n - 1}")
    g = as_generator(rng)
    p = model.theta_dim
    y_star = data.responses[i_star]
    keep = np.arange(data.n) != i_star
    y_rest, x_rest = data.responses[keep], data.covariates[keep]

    loglik = model.log_likelihood_case

    def retained(theta):
        return _retained_loglik(model, y_rest, x_rest, theta)

    x = _initial_x(model)
    theta = _initial_theta(model, data, i_star)
    lpx = model.log_prior_x(x)
    lpt = model.log_prior_theta(theta)
    lploo = loglik(y_star, x, theta) if lpx > NEG_INF and lpt > NEG_INF else NEG_INF
    lpret = retained(theta) if lploo > NEG_INF else NEG_INF
    tries = 0
    while NEG_INF in (lpx, lpt, lploo, lpret):
        if tries >= 100:
            raise ChainInitError(
                f"no finite-kernel initial state after {tries} attempts "
                f"(offending coordinate: {_blame_coordinate(model, x, theta)})",
                coordinate=_blame_coordinate(model, x, theta),
            )
        tries += 1
        x = _jitter(_initial_x(model), model.covariate_support, g, tries)
        theta = np.array(
            [
                _jitter(t0, s, g, tries)
                for t0, s in zip(_initial_theta(model, data, i_star), model.theta_supports)
            ]
        )
        lpx = model.log_prior_x(x)
        lpt = model.log_prior_theta(theta)
        lploo = loglik(y_star, x, theta) if lpx > NEG_INF and lpt > NEG_INF else NEG_INF
        lpret = retained(theta) if lploo > NEG_INF else NEG_INF

    scales = _scales(model, config)
    x_log = model.covariate_support.lower >= 0
    th_log = [s.lower >= 0 for s in model.theta_supports]

    n_keep = config.n_retained
    xs = np.empty(n_keep)
    thetas = np.empty((n_keep, p))
    lks = np.empty(n_keep)

    accept_post = np.zeros(p + 1)
    batch_acc = np.zeros(p + 1)
    batch_n = 0
    n_batches = 0
    kept = 0
    post = 0

    for t in range(1, config.n_iterations + 1):
        in_burn = t <= config.burn_in
        z = g.standard_normal(p + 1)
        u = g.random(p + 1)

        # covariate move: only the prior and the left-out likelihood change
        x_new, jac = _propose(x, scales[0], x_log, z[0])
        lpx_new = model.log_prior_x(x_new)
        if lpx_new > NEG_INF:
            lploo_new = loglik(y_star, x_new, theta)
            delta = (lpx_new + lploo_new) - (lpx + lploo) + jac
            if delta >= 0 or (delta > NEG_INF and u[0] < math.exp(delta)):
                x, lpx, lploo = x_new, lpx_new, lploo_new
                batch_acc[0] += 1
                if not in_burn:
                    accept_post[0] += 1

        # parameter moves, one coordinate at a time
        for c in range(p):
            t_new, jac = _propose(theta[c], scales[1 + c], th_log[c], z[1 + c])
            if not model.theta_supports[c].contains(t_new):
                continue
            theta_prop = theta.copy()
            theta_prop[c] = t_new
            lpt_new = model.log_prior_theta(theta_prop)
            if lpt_new == NEG_INF:
                continue
            lploo_new = loglik(y_star, x, theta_prop)
            if lploo_new == NEG_INF:
                continue
            lpret_new = retained(theta_prop)
            delta = (
                (lpt_new + lploo_new + lpret_new) - (lpt + lploo + lpret) + jac
            )
            if delta >= 0 or (delta > NEG_INF and u[1 + c] < math.exp(delta)):
                theta, lpt, lploo, lpret = theta_prop, lpt_new, lploo_new, lpret_new
                batch_acc[1 + c] += 1
                if not in_burn:
                    accept_post[1 + c] += 1

        batch_n += 1
        if in_burn and config.adapt and batch_n == _ADAPT_BATCH:
            n_batches += 1
            step = 1.0 / math.sqrt(n_batches)
            rates = batch_acc / _ADAPT_BATCH
            scales *= np.exp(step * (rates - config.adapt_target_acceptance))
            np.clip(scales, 1e-6, 1e6, out=scales)
            batch_acc[:] = 0.0
            batch_n = 0
        elif batch_n == _ADAPT_BATCH:
            batch_acc[:] = 0.0
            batch_n = 0

        if not in_burn:
            post += 1
            if post % config.thin == 0 and kept < n_keep:
                xs[kept] = x
                thetas[kept] = theta
                lks[kept] = lpx + lpt + lploo + lpret
                kept += 1

    n_post = config.n_iterations - config.burn_in
    return Chain(
        x=xs[:kept],
        theta=thetas[:kept],
        log_kernel_trace=lks[:kept],
        acceptance_rates=accept_post / max(n_post, 1),
        proposal_scales=scales,
        pilot_case=i_star,
    )


def _start_candidates(x0: float, support) -> np.ndarray:
    """Coarse spread of starting points covering the support's scale range."""
    if support.bounded:
        lo, hi = support.lower, support.upper
        qs = np.linspace(0.02, 0.98, 13)
        return lo + qs * (hi - lo)
    if support.lower >= 0:
        base = x0 if x0 > 0 else 1.0
        return base * np.exp(np.linspace(-6.0, 6.0, 13))
    return x0 + np.linspace(-12.0, 12.0, 13)


def _jitter(value: float, support, g: np.random.Generator, attempt: int) -> float:
    """Perturb an initial value inside its support, widening with attempts."""
    if support.bounded:
        return float(g.uniform(support.lower, support.upper))
    width = 0.25 * attempt
    if support.lower >= 0:
        v = value if value > 0 else 1.0
        return float(v * math.exp(width * g.standard_normal()))
    return float(value + width * g.standard_normal())


def sample_conditional_x(
    model: ModelSpec,
    y_i,
    theta,
    M: int,
    config: MCMCConfig,
    rng: RngLike,
) -> np.ndarray:
    """Draw ``M`` covariate values from ``pi(x | y_i, theta)`` at fixed theta.

    The target is the covariate prior times the single-case likelihood; the
    total iteration count is ``config.burn_in + M * config.thin`` (the
    configured ``n_iterations`` is ignored).
    """
    theta = model.check_theta(theta)
    if not model.theta_in_support(theta) or model.log_prior_theta(theta) == NEG_INF:
        raise ConfigError("theta outside support for conditional sampling")
    if M < 1:
        raise ConfigError("M must be positive")
    g = as_generator(rng)
    draws, _ = _conditional_chains(
        model, y_i, theta[None, :], M, config, g, n_chains=1
    )
    return draws[0]


def _conditional_chains(
    model: ModelSpec,
    y_i,
    thetas: np.ndarray,
    M: int,
    config: MCMCConfig,
    g: np.random.Generator,
    n_chains: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run one fixed-theta covariate chain per row of ``thetas`` in lockstep.

    Returns ``(draws, acceptance)`` with draws of shape ``(K, M)``.  All K
    chains share iteration counts; vectorised over chains so the per-case
    cost in the resampling loop stays flat.
    """
    K = thetas.shape[0] if n_chains is None else n_chains
    burn = config.burn_in
    thin = config.thin
    n_iter = burn + M * thin

    batch = model.log_likelihood_batch
    sup = model.covariate_support
    x_log = sup.lower >= 0

    def target(xv: np.ndarray) -> np.ndarray:
        lp = np.array([model.log_prior_x(v) for v in xv])
        ok = lp > NEG_INF
        if batch is not None:
            if np.any(ok):
                lp[ok] += batch(y_i, xv[ok], thetas[ok])
        else:
            for k in np.flatnonzero(ok):
                lp[k] += model.log_likelihood_case(y_i, xv[k], thetas[k])
        return lp

    # start each chain at the best of a coarse candidate grid; a shared
    # far-off start would bias every chain the same way under short burn-in
    x0 = _initial_x(model)
    candidates = _start_candidates(x0, sup)
    cand_lp = np.stack([target(np.full(K, c)) for c in candidates])
    best = np.argmax(cand_lp, axis=0)
    x = candidates[best]
    lp = cand_lp[best, np.arange(K)]
    tries = 0
    while np.any(lp == NEG_INF):
        if tries >= 100:
            raise ChainInitError(
                "no finite-kernel start for conditional covariate chain "
                "(offending coordinate: x_tilde)",
                coordinate="x_tilde",
            )
        tries += 1
        bad = lp == NEG_INF
        x[bad] = [_jitter(x0, sup, g, tries) for _ in range(int(bad.sum()))]
        lp = target(x)

    scale = _scales(model, config)[0]
    scales = np.full(K, scale)
    draws = np.empty((K, M))
    batch_acc = np.zeros(K)
    n_batches = 0
    kept = 0
    post = 0

    for t in range(1, n_iter + 1):
        in_burn = t <= burn
        z = g.standard_normal(K)
        u = g.random(K)
        if x_log:
            x_new = x * np.exp(scales * z)
            jac = np.log(x_new) - np.log(x)
        else:
            x_new = x + scales * z
            jac = 0.0
        lp_new = target(x_new)
        delta = lp_new - lp + jac
        acc = delta >= np.log(np.maximum(u, 1e-300))
        acc &= lp_new > NEG_INF
        x = np.where(acc, x_new, x)
        lp = np.where(acc, lp_new, lp)
        batch_acc += acc

        if in_burn and config.adapt and t % _ADAPT_BATCH == 0:
            n_batches += 1
            step = 1.0 / math.sqrt(n_batches)
            rates = batch_acc / _ADAPT_BATCH
            scales *= np.exp(step * (rates - config.adapt_target_acceptance))
            np.clip(scales, 1e-6, 1e6, out=scales)
            batch_acc[:] = 0.0
        elif t % _ADAPT_BATCH == 0:
            batch_acc[:] = 0.0

        if not in_burn:
            post += 1
            if post % thin == 0 and kept < M:
                draws[:, kept] = x
                kept += 1

    return draws, batch_acc


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass(frozen=True)
class DiagnosticsSummary:
    """Per-coordinate effective sample size, split R-hat and flags.

    Coordinate order: covariate first, then each parameter.  ``degenerate``
    marks constant coordinates (their ESS is reported as 0, never NaN);
    ``superefficient`` marks anticorrelated chains whose ESS exceeds the
    number of retained draws.
    """

    ess: np.ndarray
    split_rhat: np.ndarray
    acceptance_rates: np.ndarray
    degenerate: np.ndarray
    superefficient: np.ndarray

    @property
    def n_coords(self) -> int:
        return int(self.ess.shape[0])


def _ess_1d(z: np.ndarray) -> tuple[float, bool, bool]:
    n = z.shape[0]
    var = z.var()
    if var == 0.0:
        return 0.0, True, False
    zc = z - z.mean()
    f = np.fft.rfft(zc, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n].real / n
    rho = acov / acov[0]
    # Geyer initial positive sequence on paired autocorrelations
    tau = -1.0
    prev = math.inf
    for k in range(0, n // 2):
        gamma = rho[2 * k] + (rho[2 * k + 1] if 2 * k + 1 < n else 0.0)
        if gamma <= 0.0:
            break
        gamma = min(gamma, prev)
        prev = gamma
        tau += 2.0 * gamma
    tau = max(tau, 1.0 / n)
    ess = n / tau
    return float(ess), False, ess > n


def _split_rhat_1d(z: np.ndarray) -> float:
    n = z.shape[0] // 2
    halves = np.stack([z[:n], z[-n:]])
    W = halves.var(axis=1, ddof=1).mean()
    if W == 0.0:
        return 1.0
    B = n * halves.mean(axis=1).var(ddof=1)
    var_hat = (n - 1) / n * W + B / n
    return float(math.sqrt(var_hat / W))


def diagnostics(chain: Chain) -> DiagnosticsSummary:
    """ESS, split R-hat and acceptance rates for a retained chain."""
    n = chain.n_retained
    if n < 4:
        raise TooFewDrawsError(f"need >= 4 retained states, have {n}")
    cols = [chain.x] + [chain.theta[:, c] for c in range(chain.theta.shape[1])]
    ess = np.empty(len(cols))
    rhat = np.empty(len(cols))
    degen = np.zeros(len(cols), dtype=bool)
    superef = np.zeros(len(cols), dtype=bool)
    for k, col in enumerate(cols):
        ess[k], degen[k], superef[k] = _ess_1d(np.asarray(col, dtype=float))
        rhat[k] = _split_rhat_1d(np.asarray(col, dtype=float))
    return DiagnosticsSummary(
        ess=ess,
        split_rhat=rhat,
        acceptance_rates=chain.acceptance_rates.copy(),
        degenerate=degen,
        superefficient=superef,
    )


def write_chain_csv(chain: Chain, path) -> None:
    """Dump retained states as ``iter,x_tilde,theta_1,...,theta_p,log_kernel``."""
    p = chain.theta.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "x_tilde"] + [f"theta_{c + 1}" for c in range(p)] + ["log_kernel"])
        for t in range(chain.n_retained):
            w.writerow(
                [t, repr(float(chain.x[t]))]
                + [repr(float(v)) for v in chain.theta[t]]
                + [repr(float(chain.log_kernel_trace[t]))]
            )
