"""
``fde-lab`` command line.

Exit codes: 0 when every applicable audit passes, 1 on an audit failure,
2 on configuration or usage errors, 3 on solver failures. Errors are
written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from fdelab.audit.records import FAIL
from fdelab.cli_report.config import ExperimentConfig, dump_config, load_config
from fdelab.cli_report.pipeline import (
    make_domain,
    run_audit,
    run_rescaled_probe,
    step_config,
    initial_data,
)
from fdelab.cli_report.report import write_report
from fdelab.discretization import laplacian
from fdelab.errors import ConfigError, SolverError
from fdelab.evolution import run_to_extinction
from fdelab.serialization import dumps, write_csv, write_json
from fdelab.spectral import hopf_ratio, linearized_spectrum, principal_eigenpair
from fdelab.steady_states import shoot_omega, solve_lane_emden

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
COMMANDS = ("eigen", "steady", "omega", "evolve", "rescale", "audit", "report", "all")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fde-lab", description="Fast diffusion experiments and audits.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("-c", "--config", required=True, help="experiment TOML file")
    parser.add_argument("--refine", type=int, default=1, help="uniform refinement factor")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, help="seed of the random Sobolev corpus")
    return parser


def _emit(obj):
    sys.stdout.write(dumps(obj))


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_eigen(cfg: ExperimentConfig) -> int:
    domain = make_domain(cfg)
    lam, phi = principal_eigenpair(laplacian(domain))
    lo, hi = hopf_ratio(phi)
    out = _out_dir(cfg)
    write_json({"domain": domain.describe(), "lambda1": lam, "phi1": phi.values.tolist()},
               out / "phi1.json")
    _emit({"lambda1": lam, "hopf_ratio": [lo, hi]})
    return EXIT_OK


def cmd_steady(cfg: ExperimentConfig) -> int:
    domain = make_domain(cfg)
    p = cfg.model.p
    ss = solve_lane_emden(domain, p)
    spec = linearized_spectrum(ss.S, p, cfg.rescaled.n_modes)
    out = _out_dir(cfg)
    payload = {
        "p": p,
        "residual": ss.residual_norm,
        "hopf_envelope": list(ss.hopf_envelope),
        "linearized_eigenvalues": spec.eigenvalues.tolist(),
    }
    write_json({**payload, "domain": domain.describe(), "S": ss.S.values.tolist()},
               out / "steady.json")
    _emit(payload)
    return EXIT_OK


def cmd_omega(cfg: ExperimentConfig) -> int:
    try:
        prof = shoot_omega(cfg.omega.p, cfg.omega.steps)
    except ValueError as exc:
        raise ConfigError(str(exc), field="omega.p") from exc
    out = _out_dir(cfg)
    write_csv(out / "omega.csv", ("theta", "omega"), zip(prof.theta_nodes, prof.omega))
    _emit({"p": prof.p, "gamma": prof.gamma, "sigma": prof.shooting_slope,
           "residual": prof.residual, "symmetry_defect": prof.symmetry_defect,
           "max_omega": float(np.max(prof.omega))})
    return EXIT_OK


def cmd_evolve(cfg: ExperimentConfig) -> int:
    domain = make_domain(cfg)
    traj = run_to_extinction(initial_data(cfg, domain), cfg.model.p, step_config(cfg))
    out = _out_dir(cfg)
    (out / "series").mkdir(exist_ok=True)
    traj.to_csv(out / "series" / "cdp.csv")
    if "json" in cfg.output.formats:
        traj.to_json(out / "cdp_snapshots.json")
    _emit({"steps": len(traj) - 1, "T_star": traj.extinction.T_star,
           "fit_residual": traj.extinction.fit_residual})
    return EXIT_OK


def cmd_rescale(cfg: ExperimentConfig) -> int:
    domain = make_domain(cfg)
    ss = solve_lane_emden(domain, cfg.model.p)
    traj, rel, mode = run_rescaled_probe(cfg, ss, step_config(cfg))
    out = _out_dir(cfg)
    (out / "series").mkdir(exist_ok=True)
    traj.to_csv(out / "series" / "rescaled.csv")
    if "json" in cfg.output.formats:
        traj.to_json(out / "rescaled_snapshots.json")
    _emit({"steps": len(traj) - 1, "mode": mode,
           "eigenvalue": float(rel.eigenvalues[mode])})
    return EXIT_OK


def _audit(cfg: ExperimentConfig, series: bool) -> int:
    records, runs = run_audit(cfg)
    out = _out_dir(cfg)
    trajs = {"cdp": runs.cdp, "rescaled": runs.rescaled} if series else {}
    write_report(records, trajs, out)
    counts = {s: sum(r.status == s for r in records) for s in ("pass", "fail", "inapplicable")}
    _emit({"records": len(records), **counts})
    return EXIT_AUDIT if any(r.status == FAIL for r in records) else EXIT_OK


def cmd_all(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    (out / "config.toml").write_text(dump_config(cfg), encoding="utf-8")
    cmd_eigen(cfg)
    cmd_steady(cfg)
    if cfg.omega.enabled:
        cmd_omega(cfg)
    return _audit(cfg, series=True)


HANDLERS = {
    "eigen": cmd_eigen,
    "steady": cmd_steady,
    "omega": cmd_omega,
    "evolve": cmd_evolve,
    "rescale": cmd_rescale,
    "audit": lambda cfg: _audit(cfg, series=False),
    "report": lambda cfg: _audit(cfg, series=True),
    "all": cmd_all,
}


def _error(kind: str, exc: Exception, **extra) -> None:
    payload = {"error": kind, "message": str(exc), **extra}
    sys.stderr.write(json.dumps(payload, sort_keys=True, default=str) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        if args.refine != 1:
            cfg = cfg.refined(args.refine)
        if args.out:
            cfg = cfg.with_output(args.out)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return HANDLERS[args.command](cfg)
    except ConfigError as exc:
        _error("config", exc, field=exc.field, line=exc.line)
        return EXIT_CONFIG
    except SolverError as exc:
        diag = {k: v for k, v in exc.diagnostics.items() if k != "last_iterate"}
        _error("solver", exc, diagnostics=diag, type=type(exc).__name__)
        return EXIT_SOLVER
    except OSError as exc:
        _error("io", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
