"""Tune C1 configs: multi-instance KS of IRMCMC draws vs exact samples."""
import time
import numpy as np
from scipy import stats

from irdcheck import (
    Dataset, RngStream, run_irmcmc, cv_theta_exact, cv_x_exact_sample,
    poisson_model, FlatPositivePrior, desk_irmcmc_config, MCMCConfig,
    run_pilot_chain,
)

model = poisson_model(FlatPositivePrior())

def make_instance(g):
    n = int(g.integers(4, 11))
    theta = g.uniform(1.5, 5.0)
    while True:
        x = g.uniform(0.8, 2.5, n)
        y = g.poisson(theta * x)
        if y.max() <= 20 and (y.sum() - y).min() >= 1:
            return Dataset(y, x)

cfg = desk_irmcmc_config(n_retained=4000, burn_in=1500, thin=2,
                         n_resample=150, conditional_draws=7,
                         conditional_burn=150, conditional_thin=10)

master = np.random.default_rng(2024)
t0 = time.perf_counter()
all_d, all_p, ess_min = [], [], []
for k in range(8):
    data = make_instance(master)
    xv = run_irmcmc(model, data, cfg, RngStream(500 + k, 0))
    ess_min.append(min(xv.weight_ess.values()))
    for i in range(data.n):
        oracle = cv_x_exact_sample(data, i, 1050, RngStream(999, 100 * k + i))
        ks = stats.ks_2samp(xv.per_case[i], oracle)
        all_d.append(ks.statistic); all_p.append(ks.pvalue)
print(f"{time.perf_counter()-t0:.1f}s for 8 instances")
all_p = np.array(all_p)
print(f"cases: {len(all_p)}, worst p: {all_p.min():.4f}, n below 0.01: {(all_p<0.01).sum()}, "
      f"n below 0.05: {(all_p<0.05).sum()}")
print("min weight ess per instance:", [round(e) for e in ess_min])

# pilot theta KS across instances (criterion half 1)
master = np.random.default_rng(2024)
pcfg = MCMCConfig(n_iterations=1500 + 2000 * 4, burn_in=1500, thin=4)
ps = []
for k in range(8):
    data = make_instance(master)
    i_star = int(np.argmin(np.abs(data.covariates - np.median(data.covariates))))
    ch = run_pilot_chain(model, data, i_star, pcfg, RngStream(700 + k, 0))
    shape, rate = cv_theta_exact(data, i_star)
    ks = stats.kstest(ch.theta[:, 0], "gamma", args=(shape, 0, 1.0 / rate))
    ps.append(ks.pvalue)
print("pilot theta KS p-values:", np.round(ps, 3))
