from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from fdelab.audit.modes import project_relative_error
from fdelab.discretization import ScalarField, build_domain, laplacian, weighted_norm
from fdelab.evolution import (
    StepConfig,
    Trajectory,
    estimate_extinction,
    evolve_cdp,
    physical_time,
    rescaled_time,
    run_rescaled,
    run_to_extinction,
    step_cdp,
    step_rescaled,
    transform_from_rescaled,
    transform_to_rescaled,
)
from fdelab.errors import SolverError
from fdelab.spectral import linearized_spectrum, principal_eigenpair, to_relative_basis
from fdelab.steady_states import separable_amplitude, separable_solution, solve_lane_emden
from conftest import bump
from oracles import amplitude_step


@pytest.fixture(scope="module")
def ss128():
    return solve_lane_emden(build_domain(1, [1.0], [128]), 2.0)


def test_step_identity_limit(ss128):
    u = separable_solution(ss128, 1.0, 0.0)
    nxt = step_cdp(u, 2.0, 1e-300)
    np.testing.assert_allclose(nxt.values, u.values, rtol=1e-15, atol=0)


@pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
def test_step_separable_matches_scalar_recursion(p):
    ss = solve_lane_emden(build_domain(1, [1.0], [128]), p)
    a, dt = 0.7, 1e-2
    nxt = step_cdp(ss.S * a, p, dt)
    a_next = amplitude_step(a, p, dt)
    np.testing.assert_allclose(nxt.interior, a_next * ss.S.interior, rtol=1e-10)


def test_step_pairing_identity(ss128):
    d = ss128.domain
    op = laplacian(d)
    lam, phi = principal_eigenpair(op)
    w = d.quad_weights * phi.values
    u = bump(d)
    for dt in (1e-4, 1e-3, 1e-2):
        nxt = step_cdp(u, 2.0, dt, op=op)
        lhs = np.dot(w, nxt.values**2 - u.values**2)
        rhs = -dt * lam * np.dot(w, nxt.values)
        assert abs(lhs - rhs) <= 10 * 1e-12 * np.dot(w, u.values**2)


def test_step_rejects_bad_input(ss128):
    u = ss128.S
    with pytest.raises(ValueError):
        step_cdp(u, 2.0, 0.0)
    with pytest.raises(ValueError):
        step_cdp(u * -1.0, 2.0, 1e-3)
    with pytest.raises(ValueError):
        step_rescaled(u, 2.0, 1.0)


def test_separable_extinction_time(runs_p2):
    traj = runs_p2["separable"]
    assert 0.98 <= traj.extinction.T_star <= 1.02
    assert traj.meta["stop"] == "threshold"
    assert traj.diagnostics["sup_norm"][-1] < 1e-8 * traj.diagnostics["sup_norm"][0]


def test_separable_run_follows_amplitude_recursion(runs_p2, steady_p2):
    # replay the adaptive step sequence through the scalar oracle
    traj = runs_p2["separable"]
    a = float(separable_amplitude(2.0, 1.0, 0.0))
    smax = steady_p2.S.values.max()
    dts = np.diff(traj.times)
    amps = [a]
    for dt in dts[:500]:
        amps.append(amplitude_step(amps[-1], 2.0, dt))
    np.testing.assert_allclose(traj.diagnostics["sup_norm"][:501], np.array(amps) * smax, rtol=1e-9)


def test_amplitude_scaling_of_extinction_time(ss128):
    cfg = StepConfig(dt=1e-3)
    u0 = separable_solution(ss128, 1.0, 0.0)
    t1 = run_to_extinction(u0, 2.0, cfg).extinction.T_star
    t2 = run_to_extinction(u0 * 2.0, 2.0, cfg).extinction.T_star
    assert abs(t2 / t1 - 2.0) <= 0.01


def test_time_resolution_stop_for_p3():
    ss = solve_lane_emden(build_domain(1, [1.0], [64]), 3.0)
    traj = run_to_extinction(separable_solution(ss, 1.0, 0.0), 3.0, StepConfig(dt=1e-3))
    assert traj.meta["stop"] in ("threshold", "time_resolution")
    assert np.all(np.diff(traj.times) > 0)
    assert abs(traj.extinction.T_star - 1.0) <= 0.02


@pytest.mark.parametrize("centers", [(0.3, 0.3), (0.3, 0.6), (0.5, 0.45)])
def test_comparison_principle(centers):
    d = build_domain(1, [1.0], [128])
    lo = bump(d, centers[0], 0.05, 1.0)
    hi = lo + bump(d, centers[1], 0.08, 2.0)
    ta = evolve_cdp(lo, 2.0, 1e-3, 150)
    tb = evolve_cdp(hi, 2.0, 1e-3, 150)
    gap = tb.snapshots - ta.snapshots
    assert np.min(gap) >= -1e-10 * np.max(tb.snapshots)


def test_recorded_identities(runs_p2):
    for traj in runs_p2.values():
        scale = traj.diagnostics["phi1_pairing"][0]
        assert np.max(np.abs(traj.diagnostics["pairing_defect"])) <= 10 * 1e-12 * scale
        sup = traj.diagnostics["sup_norm"]
        assert np.max(traj.diagnostics["benilan_crandall_max_violation"][1:]) <= 1e-6 * sup[0]
        assert np.all(traj.snapshots >= 0)
        assert np.all(traj.snapshots[:, 0] == 0) and np.all(traj.snapshots[:, -1] == 0)


def test_rescaled_fixed_point(ss128):
    v = ss128.S
    for ds in (1e-3, 0.1, 0.5):
        np.testing.assert_allclose(step_rescaled(v, 2.0, ds).values, v.values, rtol=1e-11, atol=0)


@pytest.mark.parametrize("mode", [1, 2])
def test_rescaled_linear_rate(ss128, mode):
    p, ds, eps = 2.0, 1e-2, 1e-3
    rel = to_relative_basis(linearized_spectrum(ss128.S, p, 4))
    lam = rel.eigenvalues[mode]
    v0 = ss128.S.with_values(ss128.S.values * (1 + eps * rel.fields[mode].values))
    traj = run_rescaled(v0, p, ds, 200)
    # fit the target coefficient: the O(eps^2) part feeds the unstable mode
    # 1 - p, which eventually dominates the total norm
    coef = [project_relative_error(traj.field(k), ss128.S, rel).coefficients[mode]
            for k in range(len(traj))]
    slope = np.polyfit(traj.times, np.log(np.abs(coef)), 1)[0]
    # implicit Euler multiplies the mode by 1/(1 + ds λ/p) per step
    assert abs(-slope * ds / math.log1p(ds * lam / p) - 1) <= 5e-3
    assert abs(-slope / (lam / p) - 1) <= 0.05


def test_rescaled_energy_nonincreasing(ss128):
    v0 = ss128.S.with_values(ss128.S.values * (1 + 0.2 * np.sin(2 * np.pi * ss128.domain.nodes[:, 0])))
    traj = run_rescaled(v0, 2.0, 1e-2, 300)
    F = traj.diagnostics["energy_F"]
    assert np.max(np.diff(F)) <= 10 * 1e-12 * np.max(np.abs(F))


def test_separable_maps_to_steady_state(runs_p2, steady_p2):
    d = steady_p2.domain
    times = np.array([0.0, 0.3, 0.9])
    snaps = np.array([separable_solution(steady_p2, 1.0, t).values for t in times])
    traj = Trajectory(d, 2.0, "cdp", times, snaps, {})
    rtraj = transform_to_rescaled(traj, 2.0, 1.0)
    for row in rtraj.snapshots:
        np.testing.assert_allclose(row, steady_p2.S.values, rtol=1e-13)


def test_round_trip_random():
    d = build_domain(1, [1.0], [16])
    rng = np.random.default_rng(5)
    times = np.sort(-rng.uniform(0.01, 5.0, 12))
    snaps = rng.uniform(0, 3, (12, d.n_nodes))
    snaps[:, [0, -1]] = 0
    traj = Trajectory(d, 3.0, "cdp", times, snaps, {})
    back = transform_from_rescaled(transform_to_rescaled(traj, 3.0, 0.0), 3.0, 0.0)
    np.testing.assert_allclose(back.times, times, rtol=1e-12)
    np.testing.assert_allclose(back.snapshots, snaps, rtol=1e-12, atol=1e-300)
    with pytest.raises(ValueError):
        rescaled_time(np.array([0.0]), 3.0, 0.0)


def test_rescaled_time_spacing():
    p, dt = 3.0, 1e-6
    t = np.linspace(-2.0, -0.5, 7)
    ds = rescaled_time(t + dt, p, 0.0) - rescaled_time(t, p, 0.0)
    np.testing.assert_allclose(ds, p / ((p - 1) * -t) * dt, rtol=1e-5)
    np.testing.assert_allclose(physical_time(rescaled_time(t, p, 0.0), p, 0.0), t, rtol=1e-14)


def test_transform_consistency_dual_path(ss128):
    """Rescaled run mapped to physical time vs a direct CDP run; O(dt + ds)."""
    p = 2.0
    x = ss128.domain.nodes[:, 0]
    v0 = ss128.S.with_values(ss128.S.values * (1 + 0.5 * np.sin(2 * np.pi * x)))
    errs = []
    for ds, dt in ((2e-3, 1e-3), (1e-3, 5e-4)):
        steps = int(round(0.5 / ds))
        rtraj = run_rescaled(v0, p, ds, steps)
        direct = transform_from_rescaled(rtraj, p, 0.0)
        t0, t1 = direct.times[0], direct.times[-1]
        n = int(round((t1 - t0) / dt))
        ctraj = evolve_cdp(direct.field(0), p, (t1 - t0) / n, n, t0=t0)
        errs.append(np.max(np.abs(ctraj.snapshots[-1] - direct.snapshots[-1])) / np.max(direct.snapshots[-1]))
    assert errs[1] < 5e-3
    assert 1.6 < errs[0] / errs[1] < 2.4


def test_trajectory_validation_and_export(tmp_path, runs_p2):
    d = build_domain(1, [1.0], [8])
    with pytest.raises(ValueError):
        Trajectory(d, 2.0, "cdp", [0.0, 0.0], np.zeros((2, 9)), {})
    with pytest.raises(ValueError):
        Trajectory(d, 2.0, "cdp", [0.0, 1.0], np.zeros((2, 9)), {"sup_norm": np.zeros(3)})

    traj = runs_p2["bump"]
    traj.to_csv(tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:5] == ["time", "sup_norm", "norm_phi1_r2", "norm_phi1_r3", "norm_phi1_r4"]
    assert len(rows) == len(traj) + 1
    traj.to_json(tmp_path / "s.json")
    payload = json.loads((tmp_path / "s.json").read_text())
    assert payload["times"] == traj.times.tolist()
    assert payload["snapshots"][5] == traj.snapshots[5].tolist()
    assert payload["extinction"]["T_star"] == traj.extinction.T_star


def test_extinction_fit_exact_on_line():
    t = np.linspace(0, 0.9, 20)
    est = estimate_extinction(t, 2.0 * (1.3 - t), 20)
    assert math.isclose(est.T_star, 1.3, rel_tol=1e-12)
    assert est.fit_residual < 1e-14
    with pytest.raises(SolverError):
        estimate_extinction(t, 1 + t, 20)


def test_run_rejects_zero_data():
    d = build_domain(1, [1.0], [16])
    with pytest.raises(ValueError):
        run_to_extinction(d.zeros(), 2.0)


def test_weighted_norm_columns_match(runs_p2):
    traj = runs_p2["two_bump"]
    _, phi = principal_eigenpair(laplacian(traj.domain))
    k = len(traj) // 3
    assert math.isclose(traj.diagnostics["norm_phi1_r3"][k], weighted_norm(traj.field(k), 3.0, phi),
                        rel_tol=1e-14)
    assert isinstance(traj.field(k), ScalarField)
