"""Command-line front end.

Subcommands: ``simulate`` (dataset CSV), ``xval`` (leave-one-out draws),
``assess`` (adequacy report), ``study`` / ``calibrate`` (replication runs)
and ``bench`` (one-pilot vs n-fold timing).  Every subcommand takes
``--config FILE`` (JSON), ``--seed``, ``--out DIR`` and ``--jobs``.

Exit codes: 0 success, 2 configuration error, 3 study abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import ConfigError, IRDError, RngStream, StudyAbortError, read_dataset_csv, write_dataset_csv
from .discrepancy import assess, write_reference_csv
from .irmcmc import run_irmcmc, write_weight_diagnostics_csv, write_xval_csv
from .studies import (
    _irmcmc_config_from_dict,
    _mcmc_config_from_dict,
    FitSpec,
    run_calibration_study,
    run_study,
    run_timing_comparison,
    scenario_from_dict,
    write_replicates_csv,
)
from .zoo import (
    ChironomidSpec,
    GeneratorSpec,
    build_model,
    chironomid_model,
    prior_from_dict,
    simulate_chironomid,
    simulate_dataset,
)


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    out = _outdir(args)
    if cfg.get("kind", "regression") == "chironomid":
        spec = ChironomidSpec(
            n_sites=int(cfg.get("n_sites", 62)),
            m_species=int(cfg.get("m_species", 52)),
            site_total=int(cfg.get("site_total", 100)),
        )
        data = simulate_chironomid(spec, RngStream(args.seed))
    else:
        gen = GeneratorSpec(
            true_model=cfg["true_model"],
            covariate_law=prior_from_dict(cfg["covariate_law"]),
            n=int(cfg["n"]),
            theta_true=tuple(cfg["theta_true"]) if cfg.get("theta_true") else None,
            theta_range=tuple(cfg["theta_range"]) if cfg.get("theta_range") else None,
        )
        data = simulate_dataset(gen, RngStream(args.seed))
    path = out / "dataset.csv"
    write_dataset_csv(data, path)
    _write_json(out / "result.json", {"dataset": str(path), "n": data.n})
    print(f"wrote {path}")
    return 0


def _fit_from_config(cfg: dict) -> FitSpec:
    f = cfg["model"]
    return FitSpec(
        family=f["family"],
        x_prior=prior_from_dict(f["x_prior"]),
        degree=f.get("degree"),
        label=f.get("label"),
    )


def _xval_from_config(cfg: dict, seed: int):
    data = read_dataset_csv(cfg["dataset"])
    fit = _fit_from_config(cfg)
    model = build_model(fit.family, fit.x_prior, fit.degree)
    config = _irmcmc_config_from_dict(cfg.get("irmcmc", {}))
    return run_irmcmc(model, data, config, RngStream(seed)), data


def _cmd_xval(args) -> int:
    cfg = _load_config(args.config)
    out = _outdir(args)
    xval, _ = _xval_from_config(cfg, args.seed)
    write_xval_csv(xval, out / "xval.csv")
    write_weight_diagnostics_csv(xval, out / "weights.csv")
    _write_json(
        out / "result.json",
        {
            "pilot_case": xval.pilot_case,
            "n_cases": xval.n_cases,
            "draws_per_case": xval.n_joint_draws,
            "min_weight_ess": min(xval.weight_ess.values()),
        },
    )
    print(f"wrote {out / 'xval.csv'}")
    return 0


def _cmd_assess(args) -> int:
    cfg = _load_config(args.config)
    out = _outdir(args)
    xval, _ = _xval_from_config(cfg, args.seed)
    report = assess(
        xval,
        cfg.get("measure", "T1"),
        alpha=float(cfg.get("alpha", 0.03)),
        credible_level=float(cfg.get("credible_level", 0.97)),
    )
    _write_json(out / "result.json", report.to_dict())
    write_reference_csv(report.reference, out / "reference.csv")
    print(report.to_json())
    return 0


def _cmd_study(args) -> int:
    cfg = _load_config(args.config)
    out = _outdir(args)
    scenario = scenario_from_dict(cfg)
    if args.seed is not None and "base_seed" not in cfg:
        from dataclasses import replace

        scenario = replace(scenario, base_seed=args.seed)
    result = run_study(scenario, jobs=args.jobs, progress=True)
    _write_json(out / "result.json", result.to_dict())
    write_replicates_csv(result, out / "replicates.csv")
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def _cmd_calibrate(args) -> int:
    cfg = _load_config(args.config)
    out = _outdir(args)
    scenario = scenario_from_dict(cfg)
    result = run_calibration_study(scenario, jobs=args.jobs)
    payload = {
        "n": int(result.p_values.shape[0]),
        "ks_statistic": result.ks_statistic,
        "ks_pvalue": result.ks_pvalue,
        "passed_at_0.01": result.passed,
    }
    _write_json(out / "result.json", payload)
    np.savetxt(out / "p_ird.csv", result.p_values, header="p_ird", comments="")
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    out = _outdir(args)
    spec = ChironomidSpec(
        n_sites=int(cfg.get("n_sites", 62)),
        m_species=int(cfg.get("m_species", 10)),
        site_total=int(cfg.get("site_total", 100)),
    )
    data = simulate_chironomid(spec, RngStream(args.seed, 0))
    model = chironomid_model(spec)
    config = _irmcmc_config_from_dict(cfg.get("irmcmc", {}))
    brute = _mcmc_config_from_dict(cfg.get("brute", cfg.get("irmcmc", {}).get("pilot", {})))
    timing = run_timing_comparison(model, data, config, brute, RngStream(args.seed, 1))
    payload = {
        "seconds_irmcmc": timing.seconds_irmcmc,
        "seconds_brute_force": timing.seconds_brute_force,
        "speedup": timing.speedup,
        "max_wasserstein1": timing.max_w1,
        "report": timing.report.to_dict(),
    }
    _write_json(out / "result.json", payload)
    print(json.dumps(payload, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irdcheck",
        description="Adequacy checks for Bayesian inverse-regression models",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "simulate": _cmd_simulate,
        "xval": _cmd_xval,
        "assess": _cmd_assess,
        "study": _cmd_study,
        "calibrate": _cmd_calibrate,
        "bench": _cmd_bench,
    }
    for name, fn in handlers.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(handler=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except StudyAbortError as err:
        print(f"study aborted: {err}", file=sys.stderr)
        return 3
    except (ConfigError, FileNotFoundError, KeyError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except IRDError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
