"""
Implicit time stepping for ``∂_t u^p = Δu`` and for the rescaled flow
``∂_s v^p = Δv + v^p``.

Both schemes are backward Euler. One step solves the nodal system

    coef * u^p + tau * A u = rhs,     A = -Δ_h,

with ``coef = 1, tau = dt, rhs = u_old^p`` for the physical equation and
``coef = 1 - ds, tau = ds, rhs = v_old^p`` for the rescaled one. Extending
``u^p`` oddly, the left side is the gradient of the strictly convex function
``coef |u|^{p+1}/(p+1) + tau <A u, u>/2 - <rhs, u>``; Newton's method with a
backtracking line search on that function converges from any start, and the
maximum principle makes the root nonnegative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from fdelab.discretization import (
    Domain,
    LaplacianOperator,
    ScalarField,
    laplacian,
    weighted_norm,
)
from fdelab.errors import ConvergenceError, PositivityError, SolverError
from fdelab.serialization import write_csv, write_json
from fdelab.spectral import principal_eigenpair
from fdelab.steady_states import energy_F, rayleigh_Q

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class StepConfig:
    """Time-stepping controls.

    ``dt`` is the initial (and largest) step; near extinction the step
    follows ``min(dt, kappa * |u|_inf^{p-1})``. The run stops once the sup
    norm drops below ``extinction_rel`` times its initial value.
    """

    dt: float = 1e-3
    newton_tol: float = 1e-12
    newton_max: int = 50
    positivity_floor: float = 1e-14
    extinction_rel: float = 1e-8
    kappa: float = 0.05
    fit_window: int = 20
    max_steps: int = 2_000_000
    r_list: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if self.newton_max < 1:
            raise ValueError("newton_max must be at least 1")
        if self.fit_window < 2:
            raise ValueError("fit_window must be at least 2")


@dataclass(frozen=True)
class ExtinctionEstimate:
    T_star: float
    fit_window: int
    fit_residual: float
    slope: float


@dataclass(eq=False)
class Trajectory:
    """Time-stamped snapshots plus per-sample diagnostics.

    ``kind`` is ``"cdp"`` for physical time ``t`` and ``"rescaled"`` for the
    logarithmic time ``s``. Snapshots are stored as rows of nodal values.
    """

    domain: Domain
    p: float
    kind: str
    times: np.ndarray
    snapshots: np.ndarray
    diagnostics: dict[str, np.ndarray]
    r_list: tuple[float, ...] = ()
    extinction: ExtinctionEstimate | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.snapshots = np.asarray(self.snapshots, dtype=float)
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must be strictly increasing")
        for key, values in self.diagnostics.items():
            if len(values) != len(self.times):
                raise ValueError(f"diagnostic {key!r} has the wrong length")
        self.times.setflags(write=False)
        self.snapshots.setflags(write=False)

    def __len__(self):
        return len(self.times)

    def field(self, k: int) -> ScalarField:
        return ScalarField(self.domain, self.snapshots[k])

    def index_near(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def series_columns(self) -> list[str]:
        cols = ["time", "sup_norm"]
        cols += [_norm_key(r) for r in sorted(self.r_list)]
        cols += [k for k in self.diagnostics if k not in cols]
        return cols

    def to_csv(self, path: str | Path):
        """One row per sample: time, sup norm, weighted r-norms ascending, the rest."""
        cols = self.series_columns()
        data = {"time": self.times, **self.diagnostics}
        rows = zip(*(data[c] for c in cols))
        write_csv(path, cols, rows)

    def to_json(self, path: str | Path):
        """Snapshot dump; nodes flattened in row-major order."""
        payload = {
            "kind": self.kind,
            "p": self.p,
            "domain": self.domain.describe(),
            "times": self.times.tolist(),
            "snapshots": self.snapshots.tolist(),
        }
        if self.extinction is not None:
            payload["extinction"] = {
                "T_star": self.extinction.T_star,
                "fit_window": self.extinction.fit_window,
                "fit_residual": self.extinction.fit_residual,
            }
        write_json(payload, path)


def _norm_key(r: float) -> str:
    return f"norm_phi1_r{float(r):g}"


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------


def _odd_power(u: np.ndarray, p: float) -> np.ndarray:
    return np.abs(u) ** (p - 1.0) * u


def _implicit_solve(op: LaplacianOperator, rhs: np.ndarray, coef: float, tau: float, p: float,
                    guess: np.ndarray, cfg: StepConfig) -> np.ndarray:
    """Newton's method for ``coef * u^p + tau * A u = rhs`` (interior vectors)."""
    scale = float(np.max(np.abs(rhs)))
    if scale == 0.0:
        return np.zeros_like(rhs)
    u = np.array(guess, dtype=float)

    def resid(v):
        return coef * _odd_power(v, p) + tau * op.matvec(v) - rhs

    def energy(v):
        return (coef * np.sum(np.abs(v) ** (p + 1.0)) / (p + 1.0)
                + 0.5 * tau * np.dot(v, op.matvec(v)) - np.dot(rhs, v))

    # |A| has row sums 4/h^2 per axis; bounds the rounding in evaluating resid
    a_abs = sum(4.0 / h**2 for h in op.domain.spacing)
    r = resid(u)
    for it in range(cfg.newton_max + 1):
        err = float(np.max(np.abs(r)))
        floor = 16 * _EPS * float(np.max(coef * np.abs(u) ** p + tau * a_abs * np.abs(u) + np.abs(rhs)))
        if err <= max(cfg.newton_tol * scale, floor):
            break
        if it == cfg.newton_max:
            raise ConvergenceError("Newton iteration did not converge", iterations=it,
                                   residual=err / scale, last_iterate=u.tolist())
        step = op.solve(-r, scale=tau, shift=coef * p * np.abs(u) ** (p - 1.0))
        e0 = energy(u)
        slope = float(np.dot(r, step))
        alpha = 1.0
        for _ in range(60):
            trial = u + alpha * step
            r_trial = resid(trial)
            if (np.max(np.abs(r_trial)) < err
                    or energy(trial) <= e0 + 1e-4 * alpha * slope):
                break
            alpha *= 0.5
        else:
            raise ConvergenceError("line search failed", iterations=it, residual=err / scale,
                                   last_iterate=u.tolist())
        u, r = trial, r_trial
    low = float(u.min())
    if low < -cfg.positivity_floor * max(1.0, float(np.max(np.abs(u)))):
        raise PositivityError("implicit step produced a negative value", minimum=low,
                              last_iterate=u.tolist())
    return np.maximum(u, 0.0)


def _check_input(f: ScalarField, name: str):
    if not f.dirichlet_zero:
        raise ValueError(f"{name} must be a Dirichlet-zero field")
    if np.any(f.values < 0):
        raise ValueError(f"{name} must be nonnegative")


def step_cdp(u: ScalarField, p: float, dt: float, cfg: StepConfig | None = None,
             op: LaplacianOperator | None = None) -> ScalarField:
    """One backward Euler step ``u_next^p - dt Δ_h u_next = u^p``."""
    cfg = StepConfig(dt=dt) if cfg is None else cfg
    if not dt > 0:
        raise ValueError("dt must be positive")
    _check_input(u, "u")
    op = laplacian(u.domain) if op is None else op
    x = u.interior
    nxt = _implicit_solve(op, x**p, 1.0, dt, p, x, cfg)
    return u.domain.from_interior(nxt)


def step_rescaled(v: ScalarField, p: float, ds: float, cfg: StepConfig | None = None,
                  op: LaplacianOperator | None = None) -> ScalarField:
    """One backward Euler step ``v_next^p - ds (Δ_h v_next + v_next^p) = v^p``.

    Needs ``ds < 1`` so that the implicit coefficient ``1 - ds`` of
    ``v_next^p`` stays positive.
    """
    if not 0 < ds < 1:
        raise ValueError(f"rescaled step needs 0 < ds < 1, got {ds}")
    cfg = StepConfig(dt=ds) if cfg is None else cfg
    _check_input(v, "v")
    op = laplacian(v.domain) if op is None else op
    x = v.interior
    nxt = _implicit_solve(op, x**p, 1.0 - ds, ds, p, x, cfg)
    return v.domain.from_interior(nxt)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


class _Recorder:
    """Accumulates snapshots and diagnostics while a run advances."""

    def __init__(self, domain: Domain, p: float, kind: str, r_list: Sequence[float],
                 op: LaplacianOperator, track_step_identities: bool):
        self.domain, self.p, self.kind = domain, p, kind
        self.r_list = tuple(sorted(float(r) for r in r_list))
        self.op = op
        self.lam1, self.phi1 = principal_eigenpair(op)
        self.track = track_step_identities
        self.times: list[float] = []
        self.snaps: list[np.ndarray] = []
        self.diag: dict[str, list[float]] = {"sup_norm": []}
        for r in self.r_list:
            self.diag[_norm_key(r)] = []
        self.diag.update(energy_F=[], rayleigh_Q=[], phi1_pairing=[])
        if track_step_identities:
            self.diag.update(pairing_defect=[], benilan_crandall_max_violation=[])

    def add(self, t: float, u: ScalarField):
        p, phi = self.p, self.phi1
        d = self.diag
        d["sup_norm"].append(float(np.max(u.values)))
        for r in self.r_list:
            d[_norm_key(r)].append(weighted_norm(u, r, phi))
        d["energy_F"].append(energy_F(u, p, self.op))
        # the L^{p+1} norm underflows to zero well before the field does
        d["rayleigh_Q"].append(rayleigh_Q(u, p, self.op)
                               if weighted_norm(u, p + 1.0) > 0 else math.nan)
        w = self.domain.quad_weights * phi.values
        pairing = float(np.dot(w, u.values**p))
        d["phi1_pairing"].append(pairing)
        if self.track:
            if self.snaps:
                dt = t - self.times[-1]
                prev = self.snaps[-1]
                d["pairing_defect"].append(
                    pairing - d["phi1_pairing"][-2] + dt * self.lam1 * float(np.dot(w, u.values)))
                if t > 0:
                    ut = (u.values - prev) / dt
                    viol = np.max(np.maximum(ut - u.values / ((p - 1.0) * t), 0.0))
                    d["benilan_crandall_max_violation"].append(float(viol))
                else:
                    d["benilan_crandall_max_violation"].append(math.nan)
            else:
                d["pairing_defect"].append(0.0)
                d["benilan_crandall_max_violation"].append(0.0)
        self.times.append(float(t))
        self.snaps.append(u.values.copy())

    def build(self, extinction=None, meta=None) -> Trajectory:
        diag = {k: np.asarray(v, dtype=float) for k, v in self.diag.items()}
        return Trajectory(self.domain, self.p, self.kind, np.asarray(self.times),
                          np.asarray(self.snaps), diag, self.r_list, extinction, meta or {})


def estimate_extinction(times: np.ndarray, values: np.ndarray, window: int) -> ExtinctionEstimate:
    """Root of the least-squares line through the last ``window`` samples."""
    t = np.asarray(times[-window:], dtype=float)
    y = np.asarray(values[-window:], dtype=float)
    if len(t) < 2:
        raise SolverError("not enough samples for the extinction fit", samples=len(t))
    slope, intercept = np.polyfit(t, y, 1)
    if not slope < 0:
        raise SolverError("extinction fit has nonnegative slope", slope=float(slope))
    fit = intercept + slope * t
    resid = float(np.sqrt(np.mean((fit - y) ** 2)) / np.mean(np.abs(y)))
    return ExtinctionEstimate(float(-intercept / slope), len(t), resid, float(slope))


def run_to_extinction(u0: ScalarField, p: float, cfg: StepConfig | None = None,
                      op: LaplacianOperator | None = None, t0: float = 0.0) -> Trajectory:
    """Step ``∂_t u^p = Δu`` from ``u0`` until the sup norm falls below the threshold.

    The run also stops once the adaptive step falls below the floating-point
    resolution of ``t`` (reached first when ``p > 2``).

    Every step is recorded. The extinction time is the root of a linear fit
    of ``|u|_{L^{p+1}}^{p-1}`` against ``t`` over the last ``fit_window``
    samples before the sup norm drops below ``1e3`` times the threshold.

    Raises:
        SolverError: on a failed step, on ``max_steps``, or if the sup norm
            fails to decrease over 10 consecutive steps.
    """
    cfg = StepConfig() if cfg is None else cfg
    _check_input(u0, "u0")
    if not np.any(u0.values > 0):
        raise ValueError("initial data must not vanish identically")
    op = laplacian(u0.domain) if op is None else op
    rec = _Recorder(u0.domain, p, "cdp", cfg.r_list, op, track_step_identities=True)
    sup0 = float(np.max(u0.values))
    eps_ext = cfg.extinction_rel * sup0
    u, t = u0, float(t0)
    rec.add(t, u)
    stalled = 0
    sup = sup0
    stop = "threshold"
    for _ in range(cfg.max_steps):
        dt = min(cfg.dt, cfg.kappa * sup ** (p - 1.0))
        if dt <= 64 * _EPS * t:
            # for p > 2 the remaining time ~ sup^{p-1} drops below the
            # resolution of t before the sup norm reaches the threshold
            stop = "time_resolution"
            break
        u = step_cdp(u, p, dt, cfg, op)
        t += dt
        rec.add(t, u)
        new_sup = rec.diag["sup_norm"][-1]
        stalled = stalled + 1 if new_sup >= sup else 0
        if stalled >= 10:
            raise SolverError("sup norm did not decrease over 10 steps", time=t, sup_norm=new_sup)
        sup = new_sup
        if sup < eps_ext:
            break
    else:
        raise SolverError("max_steps reached before extinction", time=t, sup_norm=sup)

    sups = np.asarray(rec.diag["sup_norm"])
    times = np.asarray(rec.times)
    usable = np.flatnonzero(sups >= 1e3 * eps_ext)
    idx = usable[-cfg.fit_window:]
    norms = np.array([weighted_norm(ScalarField(u0.domain, rec.snaps[k]), p + 1.0) ** (p - 1.0)
                      for k in idx])
    estimate = estimate_extinction(times[idx], norms, cfg.fit_window)
    return rec.build(estimate, {"eps_ext": eps_ext, "stop": stop})


def evolve_cdp(u0: ScalarField, p: float, dt: float, steps: int, cfg: StepConfig | None = None,
               op: LaplacianOperator | None = None, t0: float = 0.0) -> Trajectory:
    """Fixed-step run of ``∂_t u^p = Δu`` over ``steps`` steps."""
    cfg = StepConfig(dt=dt) if cfg is None else cfg
    _check_input(u0, "u0")
    op = laplacian(u0.domain) if op is None else op
    rec = _Recorder(u0.domain, p, "cdp", cfg.r_list, op, track_step_identities=t0 >= 0)
    u, t = u0, float(t0)
    rec.add(t, u)
    for k in range(1, steps + 1):
        u = step_cdp(u, p, dt, cfg, op)
        t = t0 + k * dt
        rec.add(t, u)
    return rec.build()


def run_rescaled(v0: ScalarField, p: float, ds: float, steps: int, cfg: StepConfig | None = None,
                 op: LaplacianOperator | None = None, s0: float = 0.0) -> Trajectory:
    """Fixed-step run of ``∂_s v^p = Δv + v^p``."""
    cfg = StepConfig(dt=ds) if cfg is None else cfg
    _check_input(v0, "v0")
    op = laplacian(v0.domain) if op is None else op
    rec = _Recorder(v0.domain, p, "rescaled", cfg.r_list, op, track_step_identities=False)
    v, s = v0, float(s0)
    rec.add(s, v)
    for k in range(1, steps + 1):
        v = step_rescaled(v, p, ds, cfg, op)
        s = s0 + k * ds
        rec.add(s, v)
    return rec.build(meta={"ds": ds})


# ---------------------------------------------------------------------------
# change of variables
# ---------------------------------------------------------------------------


def rescaled_time(t, p: float, T_shift: float):
    """``s = p/(p-1) ln(1/(T_shift - t))``; requires ``t < T_shift``."""
    tau = np.asarray(t, dtype=float) - T_shift
    if np.any(tau >= 0):
        raise ValueError("shifted times must be negative")
    return p / (p - 1.0) * np.log(1.0 / -tau)


def physical_time(s, p: float, T_shift: float):
    return T_shift - np.exp(-(p - 1.0) / p * np.asarray(s, dtype=float))


def rescale_factor(t, p: float, T_shift: float):
    """``[p / (-(p-1) τ)]^{1/(p-1)}`` with ``τ = t - T_shift``."""
    tau = np.asarray(t, dtype=float) - T_shift
    if np.any(tau >= 0):
        raise ValueError("shifted times must be negative")
    return (p / (-(p - 1.0) * tau)) ** (1.0 / (p - 1.0))


def _retime(traj: Trajectory, kind: str, times: np.ndarray, snaps: np.ndarray,
            r_list) -> Trajectory:
    op = laplacian(traj.domain)
    rec = _Recorder(traj.domain, traj.p, kind, r_list, op, track_step_identities=False)
    for t, row in zip(times, snaps):
        rec.add(float(t), ScalarField(traj.domain, row))
    return rec.build(meta={"source_kind": traj.kind})


def transform_to_rescaled(traj: Trajectory, p: float, T_shift: float) -> Trajectory:
    """Map ``u(t)`` to ``v(s)``; the separable solution becomes constant in ``s``."""
    factor = rescale_factor(traj.times, p, T_shift)
    s = rescaled_time(traj.times, p, T_shift)
    return _retime(traj, "rescaled", s, traj.snapshots * factor[:, None], traj.r_list)


def transform_from_rescaled(traj: Trajectory, p: float, T_shift: float) -> Trajectory:
    """Inverse of :func:`transform_to_rescaled`."""
    t = physical_time(traj.times, p, T_shift)
    factor = rescale_factor(t, p, T_shift)
    return _retime(traj, "cdp", t, traj.snapshots / factor[:, None], traj.r_list)


def with_config(cfg: StepConfig, **changes) -> StepConfig:
    return replace(cfg, **changes)
