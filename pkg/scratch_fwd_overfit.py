"""Mini Table S-1 (forward) + overfit demo covariate-law comparison."""
import time
import numpy as np

from irdcheck import UniformPrior, GeneratorSpec, desk_irmcmc_config
from irdcheck.studies import FitSpec, StudyScenario, run_study, run_overfit_demo

R = 300
for theta in (0.1, 15.0):
    scenario = StudyScenario(
        name=f"s1_fwd_theta{theta}",
        generator=GeneratorSpec(
            true_model="geometric", theta_true=(theta,),
            covariate_law=UniformPrior(1.0, 2.0), n=10,
        ),
        fitted_models=(
            FitSpec("poisson", UniformPrior(1.0, 2.0)),
            FitSpec("geometric", UniformPrior(1.0, 2.0)),
        ),
        direction="forward",
        replicates=R,
        irmcmc=desk_irmcmc_config(),
        base_seed=11,
    )
    t0 = time.perf_counter()
    res = run_study(scenario)
    print(f"forward theta={theta}: {time.perf_counter()-t0:.0f}s "
          f"agreement={ {k: round(v,1) for k,v in res.agreement.items()} } "
          f"failures={len(res.failures)}")

print()
for law, tag in [(UniformPrior(0.0, 10.0), "U(0,10)"), (UniformPrior(1.0, 2.0), "U(1,2)")]:
    rejects, left_tail = 0, 0
    t0 = time.perf_counter()
    n_seeds = 20
    for seed in range(n_seeds):
        demo = run_overfit_demo(theta=15.0, seed=seed, covariate_law=law)
        rejects += demo.decision == "reject"
        left_tail += demo.t_percentile < 0.05
    print(f"overfit {tag}: reject {rejects}/{n_seeds}, t below 5th pct {left_tail}/{n_seeds} "
          f"({time.perf_counter()-t0:.0f}s)")
