"""Scratch validation: pilot chain vs Gamma, IRMCMC vs exact cv posterior."""
import time

import numpy as np
from scipy import stats

from irdcheck import (
    Dataset, RngStream, MCMCConfig, IRMCMCConfig, run_pilot_chain,
    run_irmcmc, brute_force_xval, cv_theta_exact, cv_x_exact_sample,
    poisson_model, FlatPositivePrior, UniformPrior, desk_irmcmc_config,
    diagnostics,
)

rng = np.random.default_rng(7)
n = 6
x = rng.uniform(0.5, 3.0, n)
y = rng.poisson(2.0 * x)
while (y.sum() - y) .min() < 1:
    y = rng.poisson(2.0 * x)
data = Dataset(y, x)
print("data  y:", y, " x:", np.round(x, 3))

model = poisson_model(FlatPositivePrior())
i_star = 2

# 1. pilot theta marginal vs Gamma
cfg = MCMCConfig(n_iterations=2000 + 5 * 2000, burn_in=2000, thin=5)
t0 = time.perf_counter()
chain = run_pilot_chain(model, data, i_star, cfg, RngStream(11, 0))
dt = time.perf_counter() - t0
shape, rate = cv_theta_exact(data, i_star)
ks = stats.kstest(chain.theta[:, 0], "gamma", args=(shape, 0, 1.0 / rate))
print(f"\npilot: {dt*1e3:.0f} ms for {cfg.n_iterations} iters, acc={np.round(chain.acceptance_rates,2)}")
print(f"theta KS vs Gamma({shape:.0f},{rate:.2f}): D={ks.statistic:.4f} p={ks.pvalue:.3f}")
d = diagnostics(chain)
print("ess:", np.round(d.ess, 0), "rhat:", np.round(d.split_rhat, 3))

# 2. IRMCMC x draws vs exact inverse-CDF samples
cfg_ir = desk_irmcmc_config(n_retained=2000, burn_in=1000, n_resample=100,
                            conditional_draws=10, conditional_burn=60, conditional_thin=5)
t0 = time.perf_counter()
xv = run_irmcmc(model, data, cfg_ir, RngStream(12, 0))
dt = time.perf_counter() - t0
print(f"\nirmcmc: {dt*1e3:.0f} ms; pilot case {xv.pilot_case}; ess per case:",
      {k: round(v) for k, v in xv.weight_ess.items()})
for i in range(n):
    oracle = cv_x_exact_sample(data, i, 4000, RngStream(99, i))
    ks2 = stats.ks_2samp(xv.per_case[i], oracle)
    print(f"  case {i}: KS D={ks2.statistic:.4f} p={ks2.pvalue:.3f} "
          f"(mean {xv.per_case[i].mean():.3f} vs oracle {oracle.mean():.3f})")

# 3. desk-scale timing for study budget
cfg_fast = desk_irmcmc_config()
t0 = time.perf_counter()
for r in range(5):
    run_irmcmc(model, data, cfg_fast, RngStream(100, r))
print(f"\ndesk-scale irmcmc per run: {(time.perf_counter()-t0)/5*1e3:.0f} ms (n=6)")
