"""Overfit demo with flat x-tilde prior, across covariate laws."""
import time
import numpy as np

from irdcheck import UniformPrior, FlatPositivePrior
from irdcheck.studies import run_overfit_demo

for law, tag in [(UniformPrior(1.0, 2.0), "law U(1,2)"), (UniformPrior(0.0, 10.0), "law U(0,10)")]:
    rejects, left_tail, percs = 0, 0, []
    t0 = time.perf_counter()
    n_seeds = 30
    for seed in range(n_seeds):
        demo = run_overfit_demo(theta=15.0, seed=seed, covariate_law=law,
                                x_prior=FlatPositivePrior())
        rejects += demo.decision == "reject"
        left_tail += demo.t_percentile < 0.05
        percs.append(demo.t_percentile)
    print(f"flat prior, {tag}: reject {rejects}/{n_seeds}, below 5th pct {left_tail}/{n_seeds}, "
          f"median pct {np.median(percs):.3f}, max {np.max(percs):.3f} "
          f"({time.perf_counter()-t0:.0f}s)")

# sanity leg: fit the true Poisson model instead -> accept
demo = run_overfit_demo(theta=15.0, seed=0, covariate_law=UniformPrior(1.0, 2.0),
                        x_prior=FlatPositivePrior(), with_sanity_fit=True)
print("sanity: geometric decision:", demo.decision,
      "| poisson in_credible:", demo.sanity_report.in_credible_region,
      "t_obs", round(demo.sanity_report.t_observed, 2),
      "ref_mean", round(demo.sanity_report.reference.t_mean, 2))
