"""Command-line front end: simulate, verify, filter-step and analyze."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from daecbf import __version__
from daecbf.config import COMMANDS, MODES, ConfigError, RunConfig, load_file, parse_override, resolve
from daecbf.errors import DaeCbfError

EXIT_OK, EXIT_VIOLATED, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
DEFAULT_OUT = "daecbf-out"

log = logging.getLogger("daecbf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="daecbf", description="DAE-aware control barrier function toolkit")
    parser.add_argument("--version", action="version", version=f"daecbf {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--benchmark", help="preset name: wind_turbine or manipulator")
        src.add_argument("--config", help="JSON run configuration")
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--dt", type=float)
        p.add_argument("--horizon", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out")
        p.add_argument("--checks", help="comma-separated subset of correctness,interior,boundary")
        p.add_argument("--override", action="append", default=[], metavar="K=V")
    return parser


def _setup_logging():
    level = os.environ.get("DAECBF_LOG", "error").strip().lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"DAECBF_LOG must be one of {', '.join(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("daecbf").setLevel(LOG_LEVELS[level])


def config_from_args(args) -> RunConfig:
    file_values = load_file(args.config) if args.config else None
    flags = {
        "benchmark": args.benchmark,
        "mode": args.mode,
        "dt": args.dt,
        "horizon": args.horizon,
        "seed": args.seed,
        "samples": args.samples,
        "threads": args.threads,
        "out": args.out,
        "checks": args.checks,
        "overrides": dict(parse_override(o) for o in args.override),
    }
    return resolve(args.command, file_values, flags)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(out: Path, name: str, obj):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(_dump(obj))


def _manifest(cfg: RunConfig, preset, outputs):
    return {
        "tool": "daecbf",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.to_dict(),
        "preset": {"name": preset.name, "parameters": dict(preset.params)},
        "outputs": sorted(outputs),
    }


def _preset(cfg: RunConfig):
    from daecbf.benchmarks import get_preset

    return get_preset(cfg.benchmark, cfg.overrides)


def _projected(cfg: RunConfig, preset):
    from daecbf.projection import ProjectedDynamics

    return ProjectedDynamics(
        preset.system, probes=preset.probes, rank_tol=cfg.rank_tol, manifold_tol=cfg.manifold_tol
    )


def _box(cfg: RunConfig, preset):
    if cfg.box_lo is None:
        return preset.domain_box
    lo, hi = np.asarray(cfg.box_lo), np.asarray(cfg.box_hi)
    if lo.size != preset.system.n_x or hi.size != preset.system.n_x or np.any(lo > hi):
        raise ConfigError("box_lo/box_hi must have one entry per state with lo <= hi")
    return lo, hi


def cmd_analyze(cfg: RunConfig) -> int:
    from daecbf.dae import analyze_index

    preset = _preset(cfg)
    t0 = time.perf_counter()
    res = analyze_index(preset.system, preset.probes, rank_tol=cfg.rank_tol, strict=False)
    log.info("analysis took %.3f s", time.perf_counter() - t0)
    out = {
        "benchmark": preset.name,
        "nu": res.nu,
        "d_prime": res.d_prime,
        "d": res.d,
        "j_a_rank": res.j_a_rank,
        "regular": res.regular,
        "offending_probes": list(res.offending),
        "probes": int(preset.probes.shape[0]),
    }
    sys.stdout.write(_dump(out))
    if cfg.out:
        out_dir = Path(cfg.out)
        _write(out_dir, "analysis.json", out)
        _write(out_dir, "manifest.json", _manifest(cfg, preset, ["analysis.json"]))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    from daecbf.simulator import run

    preset = _preset(cfg)
    scenario = preset.scenario(cfg.mode, dt=cfg.dt, horizon=cfg.horizon, policy=cfg.policy)
    pd = _projected(cfg, preset) if cfg.mode != "unaware" else None
    traj = run(scenario, pd)
    out_dir = Path(cfg.out or DEFAULT_OUT)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj.write_csv(out_dir / "trajectory.csv")
    _write(out_dir, "summary.json", traj.summary)
    _write(out_dir, "manifest.json", _manifest(cfg, preset, ["trajectory.csv", "summary.json"]))
    sys.stdout.write(_dump(traj.summary))
    return EXIT_OK


def _state(cfg: RunConfig, preset):
    from daecbf.simulator import consistent_init

    n_d, n_x = preset.system.n_d, preset.system.n_x
    if cfg.state is None:
        return consistent_init(preset.system, preset.x_d0, preset.x_a_guess)
    x = np.asarray(cfg.state, dtype=float)
    if x.size == n_d:
        return consistent_init(preset.system, x, preset.x_a_guess)
    if x.size == n_x:
        return x
    raise ConfigError(f"state must have {n_d} (differential) or {n_x} (full) entries")


def cmd_filter_step(cfg: RunConfig) -> int:
    from daecbf.filter import aware_filter, dae_unaware_filter

    preset = _preset(cfg)
    x = _state(cfg, preset)
    u_nom = np.asarray(preset.nominal(x), dtype=float)
    out = {"benchmark": preset.name, "mode": cfg.mode, "x": x.tolist(), "u_nom": u_nom.tolist()}
    if cfg.mode == "nominal":
        out.update(status="Nominal", u=u_nom.tolist(), active_set=[])
    else:
        if cfg.mode == "aware":
            res = aware_filter(_projected(cfg, preset), preset.spec, x, u_nom)
        else:
            res = dae_unaware_filter(preset.system, preset.unaware_spec, x, u_nom)
        out.update(
            status=res.status.value,
            u=None if res.u is None else np.asarray(res.u).tolist(),
            active_set=[int(i) for i in res.active_set],
            objective=float(res.objective) if np.isfinite(res.objective) else None,
            certificate=None if res.certificate is None else res.certificate.to_dict(),
        )
    sys.stdout.write(_dump(out))
    if cfg.out:
        out_dir = Path(cfg.out)
        _write(out_dir, "filter_step.json", out)
        _write(out_dir, "manifest.json", _manifest(cfg, preset, ["filter_step.json"]))
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    from daecbf.verifier import VerificationReport, verify_correctness, verify_feasibility

    preset = _preset(cfg)
    box = _box(cfg, preset)
    threads = cfg.threads or os.cpu_count() or 1
    parts = {}
    if "correctness" in cfg.checks:
        parts["correctness"] = verify_correctness(
            preset.system,
            preset.spec,
            box,
            starts=cfg.starts,
            seed=cfg.seed,
            grid_points=cfg.grid_points,
            x_a_grid_guesses=preset.x_a_grid_guesses,
            threads=threads,
        )
    for kind in ("interior", "boundary"):
        if kind in cfg.checks:
            parts[kind] = verify_feasibility(
                _projected(cfg, preset),
                preset.spec,
                box,
                kind=kind.capitalize(),
                samples=cfg.samples,
                seed=cfg.seed,
                boundary_band=cfg.boundary_band,
                threads=threads,
            )
    report = VerificationReport(**parts)
    out_dir = Path(cfg.out or DEFAULT_OUT)
    # Wall times vary run to run, so they live in timing.json; report.json stays reproducible.
    _write(out_dir, "report.json", report.to_dict(timing=False))
    _write(out_dir, "timing.json", report.timings())
    _write(out_dir, "manifest.json", _manifest(cfg, preset, ["report.json", "timing.json"]))
    sys.stdout.write(report.to_json(timing=False) + "\n")
    return EXIT_OK if report.certified else EXIT_VIOLATED


HANDLERS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "filter-step": cmd_filter_step,
    "verify": cmd_verify,
}


def _message(exc) -> str:
    # KeyError's str() wraps the message in quotes.
    return str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc)


def run_command(argv) -> int:
    try:
        args = build_parser().parse_args(list(argv))
        _setup_logging()
        cfg = config_from_args(args)
    except (UsageError, ConfigError, KeyError) as exc:
        sys.stderr.write(f"daecbf: error: {_message(exc)}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    try:
        return HANDLERS[cfg.command](cfg)
    except (ConfigError, KeyError) as exc:
        sys.stderr.write(f"daecbf: error: {_message(exc)}\n")
        return EXIT_USAGE
    except (DaeCbfError, RuntimeError, ValueError, ArithmeticError, OSError) as exc:
        log.debug("runtime failure", exc_info=True)
        sys.stderr.write(f"daecbf: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
