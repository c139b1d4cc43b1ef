"""Diagnose true-model under-coverage: p_ird shape + config sensitivity."""
import sys
import time
import numpy as np

from irdcheck import UniformPrior, GeneratorSpec, desk_irmcmc_config
from irdcheck.studies import FitSpec, StudyScenario, run_study

theta = float(sys.argv[1]) if len(sys.argv) > 1 else 5.0
R = int(sys.argv[2]) if len(sys.argv) > 2 else 150

def run(tag, cfg):
    scenario = StudyScenario(
        name=tag,
        generator=GeneratorSpec(
            true_model="geometric", theta_true=(theta,),
            covariate_law=UniformPrior(1.0, 2.0), n=10,
        ),
        fitted_models=(FitSpec("geometric", UniformPrior(1.0, 2.0)),),
        direction="inverse",
        replicates=R,
        irmcmc=cfg,
        base_seed=7,
    )
    t0 = time.perf_counter()
    res = run_study(scenario)
    p = np.array([r["p_ird"] for r in res.records])
    hist = np.histogram(p, bins=10, range=(0, 1))[0]
    print(f"{tag}: {time.perf_counter()-t0:.0f}s agree={res.agreement['geometric']:.1f} "
          f"p_ird deciles={hist}")

run("desk(K50,M20,thin2)", desk_irmcmc_config())
run("K100,M15,thin3", desk_irmcmc_config(
    n_resample=100, conditional_draws=15, conditional_burn=60, conditional_thin=3))
run("K200,M10,thin4,N2000", desk_irmcmc_config(
    n_retained=2000, burn_in=800, n_resample=200, conditional_draws=10,
    conditional_burn=80, conditional_thin=4))
