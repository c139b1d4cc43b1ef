"""Mini Table S-2: inverse direction, geometric truth, both fits."""
import sys
import time
import numpy as np

from irdcheck import (
    UniformPrior, GeneratorSpec, desk_irmcmc_config,
)
from irdcheck.studies import FitSpec, StudyScenario, run_study

R = int(sys.argv[1]) if len(sys.argv) > 1 else 120
theta = float(sys.argv[2]) if len(sys.argv) > 2 else 5.0

scenario = StudyScenario(
    name=f"s2_theta{theta}",
    generator=GeneratorSpec(
        true_model="geometric",
        theta_true=(theta,),
        covariate_law=UniformPrior(1.0, 2.0),
        n=10,
    ),
    fitted_models=(
        FitSpec("poisson", UniformPrior(1.0, 2.0)),
        FitSpec("geometric", UniformPrior(1.0, 2.0)),
    ),
    direction="inverse",
    replicates=R,
    irmcmc=desk_irmcmc_config(),
    base_seed=7,
)
t0 = time.perf_counter()
res = run_study(scenario)
dt = time.perf_counter() - t0
print(f"theta={theta} R={R}: {dt:.1f}s ({dt/R*1000:.0f} ms/replicate)")
print("agreement:", {k: round(v, 1) for k, v in res.agreement.items()})
print("failures:", len(res.failures))
