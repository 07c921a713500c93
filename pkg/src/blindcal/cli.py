"""Command-line front end: ``blindcal run | analyze | ensemble``.

Exit codes: 0 success, 2 configuration error, 3 violated modelling
assumption, 4 numerical divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from blindcal import __version__, kernel
from blindcal.config import load_config, preset_names
from blindcal.errors import AssumptionError, ConfigError, DivergenceError
from blindcal.simharness import (
    equivalent_stack,
    fit_rate,
    monte_carlo,
    run,
    write_ensemble_csv,
    write_metrics_csv,
    write_trajectory_csv,
)
from blindcal.spectral import analysis_report, assemble_mean_B

log = logging.getLogger("blindcal")

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_DIVERGENCE = 0, 2, 3, 4

PLOT_RUN = """\
# gnuplot script generated by blindcal {version}
set datafile separator ","
set terminal pngcairo size 900,600
set key off
set output "gains.png"
set xlabel "t"; set ylabel "g_hat"
plot for [i=0:{last}] "trajectory.csv" using 1:(column(2)==i ? column(5) : 1/0) with lines
set output "offsets.png"
set ylabel "f_hat"
plot for [i=0:{last}] "trajectory.csv" using 1:(column(2)==i ? column(6) : 1/0) with lines
set output "metrics.png"
set key on; set logscale y; set ylabel "metric"
plot "metrics.csv" using 1:2 with lines title "spread", \\
     "metrics.csv" using 1:3 with lines title "dist to limit", \\
     "metrics.csv" using 1:4 with lines title "projected MSE"
"""

PLOT_ENSEMBLE = """\
# gnuplot script generated by blindcal {version}
set datafile separator ","
set terminal pngcairo size 900,600
set output "ensemble.png"
set logscale xy; set xlabel "t"; set ylabel "mean-square consensus error"
plot "ensemble.csv" using 1:2:3 with yerrorbars title "mean +- 95% CI"
"""


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_manifest(out: Path, loaded, command, started, outputs, extra=None):
    cfg = loaded.sim
    (out / "config.ini").write_text(loaded.text)
    manifest = {
        "tool": "blindcal",
        "version": __version__,
        "command": command,
        "config_source": loaded.source,
        "config_file": "config.ini",
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "rounds": cfg.rounds,
        "kernel": kernel.BACKEND,
        "outputs": sorted(outputs),
        "started": started,
        "finished": _now(),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_run(loaded, out: Path):
    started = _now()
    cfg = loaded.sim.validate()
    traj = run(cfg, validate=False)
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_metrics_csv(traj, out / "metrics.csv")
    (out / "plot.gp").write_text(PLOT_RUN.format(version=__version__, last=cfg.n - 1))
    _write_manifest(out, loaded, "run", started, ["trajectory.csv", "metrics.csv", "plot.gp"],
                    {"final_spread": float(traj.spread[-1]), "final_dist_limit": float(traj.dist_limit[-1])})
    print(f"run: {cfg.rounds} rounds, final spread {traj.spread[-1]:.3e}, "
          f"distance to predicted limit {traj.dist_limit[-1]:.3e} -> {out}")


def cmd_analyze(loaded, out: Path):
    started = _now()
    cfg = loaded.sim.validate()
    rho0 = equivalent_stack(cfg.theta0, cfg.alpha, cfg.beta)
    pinned = None
    if cfg.pinned:
        fixed = list(cfg.pinned)
        pinned = (cfg.graph, fixed, rho0[fixed])
    try:
        dyn = assemble_mean_B((cfg.alpha, cfg.beta), cfg.graph, cfg.signal, lag=cfg.effective_lag,
                              link_up_p=cfg.noise.link_up_p)
    except AssumptionError:
        if not cfg.pinned:
            raise
        from blindcal.spectral import pinned_limit

        report = {"mean_dynamics": None, "pinned_limit": pinned_limit(*pinned).tolist()}
    else:
        meas = cfg.noise.meas_var if np.any(cfg.noise.meas_var > 0) else None
        report = analysis_report(dyn, rho0=rho0, pinned=pinned, meas_var=meas, variant=cfg.variant,
                                 signal=cfg.signal)
    report["variant"] = cfg.variant
    (out / "analysis.json").write_text(json.dumps(report, indent=2) + "\n")
    _write_manifest(out, loaded, "analyze", started, ["analysis.json"])
    if report.get("spectrum") is not None:
        lam = np.array([complex(*z) for z in report["spectrum"]])
        print("eigenvalues of mean dynamics:", " ".join(f"{z.real:.6g}{z.imag:+.3g}j" for z in lam))
    if report.get("safe_step_bound") is not None:
        print(f"safe constant step: {report['safe_step_bound']:.4g} "
              f"(mean dynamics alone: {report['safe_step_bound_mean']:.4g})")
    if "predicted_limit" in report:
        print("predicted common limit (g, f):", report["predicted_limit"])
    if "noise_bias" in report and report["noise_bias"]["consensus_failure_predicted"]:
        print("measurement-noise bias breaks the zero row sums: consensus failure predicted")
    print(f"analysis -> {out / 'analysis.json'}")


def cmd_ensemble(loaded, out: Path):
    started = _now()
    cfg = loaded.sim.validate()
    stats = monte_carlo(cfg, loaded.runs, workers=loaded.workers)
    write_ensemble_csv(stats, out / "ensemble.csv")
    (out / "plot.gp").write_text(PLOT_ENSEMBLE.format(version=__version__))
    summary = {
        "runs": stats.runs,
        "final_mse_mean": float(stats.mse_mean[-1]),
        "final_mse_ci": float(stats.mse_ci[-1]),
        "final_g_median": float(stats.g_median[-1]),
    }
    if cfg.schedule.decreasing and cfg.rounds >= 10:
        fit = fit_rate(stats, cfg.schedule)
        summary["rate"] = {
            "sigma_hat": fit.sigma_hat,
            "window": list(fit.window),
            "sigma": fit.sigma,
            "checkpoints": list(fit.checkpoints),
            "ratios": list(fit.ratios),
            "monotone": fit.monotone,
        }
    (out / "rate.json").write_text(json.dumps(summary, indent=2) + "\n")
    _write_manifest(out, loaded, "ensemble", started, ["ensemble.csv", "rate.json", "plot.gp"],
                    {"runs": stats.runs})
    line = f"ensemble: {stats.runs} runs, final MSE {stats.mse_mean[-1]:.3e} +- {stats.mse_ci[-1]:.1e}"
    if "rate" in summary:
        line += f", sigma_hat {summary['rate']['sigma_hat']:.3f}, monotone {summary['rate']['monotone']}"
    print(line + f" -> {out}")


COMMANDS = {"run": cmd_run, "analyze": cmd_analyze, "ensemble": cmd_ensemble}


def build_parser():
    p = argparse.ArgumentParser(prog="blindcal", description="Blind calibration of sensor networks by consensus.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "simulate one run and write trajectory/metrics CSVs"),
                        ("analyze", "write the spectral analysis of the mean dynamics"),
                        ("ensemble", "Monte Carlo ensemble with a convergence-rate fit")):
        c = sub.add_parser(name, help=help_)
        src = c.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="INI configuration file")
        src.add_argument("--preset", help=f"bundled preset ({', '.join(preset_names())})")
        c.add_argument("--out", default="out", help="output directory (default: ./out)")
        c.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
        c.add_argument("--rounds", type=int, help="number of rounds (overrides run.rounds)")
        c.add_argument("--runs", type=int, help="ensemble size (overrides run.runs)")
        c.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key, e.g. --set schedule.delta=0.02")
        c.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.set)
    for flag, key in (("seed", "run.seed"), ("rounds", "run.rounds"), ("runs", "run.runs")):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{key}={value}")
    try:
        loaded = load_config(args.config, args.preset, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](loaded, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
