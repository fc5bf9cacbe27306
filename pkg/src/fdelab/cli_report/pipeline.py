"""Wires the numerical modules together for one configured experiment."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fdelab import audit
from fdelab.audit.checks import check_p_plus_1_structure, sample_nodes
from fdelab.cli_report.config import ExperimentConfig
from fdelab.discretization import Domain, ScalarField, build_domain, laplacian
from fdelab.errors import ConfigError
from fdelab.evolution import StepConfig, Trajectory, run_rescaled, run_to_extinction
from fdelab.spectral import (
    SpectrumSet,
    linearized_spectrum,
    principal_eigenpair,
    to_relative_basis,
)
from fdelab.steady_states import SteadyState, separable_solution, solve_lane_emden


@dataclass
class Runs:
    """Everything computed for one configuration at one resolution."""

    domain: Domain
    steady: SteadyState
    cdp: Trajectory
    rescaled: Trajectory
    spectrum: SpectrumSet
    mode: int


def make_domain(cfg: ExperimentConfig) -> Domain:
    d = cfg.domain
    return build_domain(d.dim, d.extents, d.cells)


def step_config(cfg: ExperimentConfig) -> StepConfig:
    t = cfg.time
    return StepConfig(dt=t.dt0, newton_tol=t.newton_tol, newton_max=t.newton_max,
                      extinction_rel=t.extinction_rel, kappa=t.kappa, fit_window=t.fit_window,
                      r_list=tuple(sorted(cfg.audit.r_list)))


def initial_data(cfg: ExperimentConfig, domain: Domain, steady: SteadyState | None = None) -> ScalarField:
    ini = cfg.model.initial_data
    p = cfg.model.p
    if ini.kind == "separable":
        steady = solve_lane_emden(domain, p) if steady is None else steady
        return separable_solution(steady, ini.T_star, 0.0)
    if ini.kind == "eigen_bump":
        _, phi = principal_eigenpair(laplacian(domain))
        return phi * ini.amplitude
    if ini.kind == "gaussian_bump":
        def f(*xs):
            total = 0.0
            for b in ini.bumps:
                r2 = sum((x - c) ** 2 for x, c in zip(xs, b.center))
                total = total + b.height * np.exp(-r2 / b.width**2)
            return total
        return domain.evaluate(f)
    try:
        data = json.loads(Path(ini.path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load initial data: {exc}", field="model.initial_data.path") from exc
    values = np.asarray(data["values"] if isinstance(data, dict) else data, dtype=float)
    if values.shape != (domain.n_nodes,):
        raise ConfigError(f"initial data needs {domain.n_nodes} nodal values, got {values.size}",
                          field="model.initial_data.path")
    if np.any(values < 0):
        raise ConfigError("initial data must be nonnegative", field="model.initial_data.path")
    values = values.copy()
    values[~domain.interior_mask] = 0.0
    return ScalarField(domain, values)


def run_rescaled_probe(cfg: ExperimentConfig, steady: SteadyState, cfg_step: StepConfig):
    """Rescaled run from ``S (1 + ε e)`` with ``e`` the first stable relative mode."""
    p = cfg.model.p
    rs = cfg.rescaled
    spec = linearized_spectrum(steady.S, p, rs.n_modes)
    rel = to_relative_basis(spec)
    mode = rel.first_positive()
    S = steady.S
    e = rel.fields[mode].interior
    v0 = S.domain.from_interior(S.interior * (1.0 + rs.perturbation * e))
    traj = run_rescaled(v0, p, rs.ds, rs.steps, cfg_step)
    return traj, rel, mode


def compute_runs(cfg: ExperimentConfig) -> Runs:
    domain = make_domain(cfg)
    steady = solve_lane_emden(domain, cfg.model.p)
    cfg_step = step_config(cfg)
    u0 = initial_data(cfg, domain, steady)
    cdp = run_to_extinction(u0, cfg.model.p, cfg_step)
    rtraj, rel, mode = run_rescaled_probe(cfg, steady, cfg_step)
    return Runs(domain, steady, cdp, rtraj, rel, mode)


def audit_records(cfg: ExperimentConfig, runs: Runs) -> list[audit.AuditRecord]:
    p = cfg.model.p
    a = cfg.audit
    params = audit.AuditParams.build(cfg.domain.dim, p, a.r, a.q)
    tr = runs.cdp
    recs = [
        audit.check_smoothing(tr, params),
        audit.check_extinction_bound(tr),
        audit.check_harnack_special(tr),
        audit.check_harnack_general(tr, params, a.samples),
        audit.check_representation(tr, sample_nodes(runs.domain, a.representation_points),
                                   a.t0_frac, a.t1_frac),
        audit.check_benilan_crandall(tr),
        audit.check_energy_dissipation(runs.rescaled, cfg.time.newton_tol),
        audit.check_mode_decay(runs.rescaled, runs.spectrum, runs.mode),
        audit.check_ancient_bounds(runs.rescaled, a.r),
        audit.check_weighted_sobolev_on(runs.domain, params.q_star, a.seed, a.sobolev_fields),
    ]
    recs += [audit.check_norm_monotonicity(tr, r) for r in sorted(set(a.r_list)) if r >= p]
    recs += check_p_plus_1_structure(tr)
    return recs


def run_audit(cfg: ExperimentConfig) -> tuple[list[audit.AuditRecord], Runs]:
    """All records, sorted by ``check_id``; drift attached when ``audit.refine``."""
    runs = compute_runs(cfg)
    records = audit_records(cfg, runs)
    if cfg.audit.refine:
        fine_cfg = cfg.refined(2)
        fine = audit_records(fine_cfg, compute_runs(fine_cfg))
        by_id = {r.check_id: r for r in fine}
        records = [audit.attach_drift(r, by_id[r.check_id]) if r.check_id in by_id else r
                   for r in records]
    return sorted(records, key=lambda r: r.check_id), runs
