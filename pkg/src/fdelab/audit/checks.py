"""
Inequality and identity checks evaluated on computed trajectories.

Every check returns an :class:`AuditRecord` (or a list of them). Margins are
dimensionless: a negative margin beyond the family tolerance is a failure.
Checks whose content is "this constant is finite, positive and stable under
refinement" report ``constant_margin`` until a refined run is attached with
:func:`fdelab.audit.records.attach_drift`.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from fdelab.audit.beta import incomplete_beta
from fdelab.audit.params import AuditParams, brezis_turner
from fdelab.audit.records import (
    AuditRecord,
    constant_margin,
    inapplicable,
    make_record,
)
from fdelab.discretization import (
    Domain,
    LaplacianOperator,
    ScalarField,
    laplacian,
    solve_poisson,
)
from fdelab.evolution import Trajectory, transform_from_rescaled
from fdelab.spectral import principal_eigenpair

ANCHORS = {
    "smoothing": "weighted L^r_Phi1 to L^inf smoothing estimate",
    "norm_monotonicity": "monotonicity of weighted L^r_Phi1 norms",
    "extinction_bound": "lower bound on the extinction time",
    "harnack_special": "global Harnack inequality near extinction",
    "harnack_general": "global Harnack inequality with incomplete Beta envelope",
    "representation": "Green representation sandwich",
    "benilan_crandall": "Benilan-Crandall time-derivative bound",
    "p_plus_1_rayleigh": "nonlinear Rayleigh quotient is nonincreasing",
    "p_plus_1_convexity": "convexity of the L^{p+1} norm power p-1",
    "p_plus_1_scaled_norm": "monotone rescaled L^{p+1} norm",
    "energy_dissipation": "energy dissipation identity of the rescaled flow",
    "mode_decay": "linearized decay of spectral projections",
    "weighted_sobolev": "Phi1-weighted Sobolev inequality",
    "ancient_bounds": "two-sided bounds for ancient solutions",
}

HARNACK_WINDOW = (2.0 / 3.0, 0.95)
HARNACK_SPREAD = 50.0
AUDIT_SAMPLES = 64
TIME_RESOLUTION = 1e-8


def _principal(domain: Domain) -> tuple[float, ScalarField]:
    return principal_eigenpair(laplacian(domain))


def _lp(domain: Domain, rows: np.ndarray, r: float, weight: np.ndarray | None = None) -> np.ndarray:
    """Row-wise ``(∫|u|^r w)^{1/r}`` for a stack of nodal vectors."""
    w = domain.quad_weights if weight is None else domain.quad_weights * weight
    return (np.abs(rows) ** r @ w) ** (1.0 / r)


def _extinction_time(traj: Trajectory) -> float:
    if traj.extinction is None:
        raise ValueError("trajectory carries no extinction estimate")
    return traj.extinction.T_star


def _require_start(traj: Trajectory):
    if traj.kind != "cdp" or traj.times[0] != 0.0:
        raise ValueError("check needs a physical-time trajectory starting at t = 0")


def _location(traj: Trajectory, k: int, node: int | None = None) -> dict:
    loc = {"time": float(traj.times[k])}
    if node is not None:
        loc["node"] = int(node)
    return loc


def sample_indices(traj: Trajectory, count: int = AUDIT_SAMPLES) -> np.ndarray:
    """Stored steps nearest a geometric grid in ``(0, T*)`` that clusters at ``T*``.

    The distances ``T* - t`` are geometric between ``T*`` and the distance
    of the last stored step before ``T*``; duplicates are dropped.
    """
    T = _extinction_time(traj)
    times = traj.times
    usable = np.flatnonzero((times > 0) & (times < T))
    if len(usable) == 0:
        raise ValueError("no stored steps inside (0, T*)")
    d_min = max((T - times[usable[-1]]) / T, 1e-12)
    dist = T * np.geomspace(1.0, d_min, count + 1)[1:]
    targets = T - dist
    pos = np.searchsorted(times[usable], targets)
    pos = np.clip(pos, 1, len(usable) - 1) if len(usable) > 1 else np.zeros_like(pos)
    left = usable[np.maximum(pos - 1, 0)]
    right = usable[pos]
    pick = np.where(np.abs(times[left] - targets) <= np.abs(times[right] - targets), left, right)
    return np.unique(pick)


def sample_nodes(domain: Domain, count: int = 5) -> list[int]:
    """Interior nodes nearest evenly spaced points on the main diagonal."""
    fracs = (np.arange(count) + 0.5) / count
    ext = np.asarray(domain.extents)
    return [domain.nearest_interior_node(f * ext) for f in fracs]


# ---------------------------------------------------------------------------
# weighted smoothing and norm monotonicity
# ---------------------------------------------------------------------------


def check_smoothing(traj: Trajectory, params: AuditParams) -> AuditRecord:
    """``C = sup_t |u(t)|_inf t^{q/(r-q(p-1))} (∫ u0^r Φ1)^{-1/(r-q(p-1))}``.

    Inapplicable outside the weighted admissibility range.
    """
    cid = "smoothing"
    if not params.gated:
        return inapplicable(cid, ANCHORS[cid], params.gate_reason())
    _require_start(traj)
    _, phi = _principal(traj.domain)
    gap = params.weighted_gap
    mass = _lp(traj.domain, traj.snapshots[:1], params.r, phi.values)[0] ** params.r
    t = traj.times[1:]
    sup = np.max(traj.snapshots[1:], axis=1)
    vals = sup * t ** (params.q / gap) * mass ** (-1.0 / gap)
    k = int(np.argmax(vals))
    C = float(vals[k])
    return make_record(cid, ANCHORS[cid], C, constant_margin(C), _location(traj, k + 1))


def check_norm_monotonicity(traj: Trajectory, r: float) -> AuditRecord:
    """``t -> |u(t)|_{L^r_Φ1}`` is nonincreasing (margin relative to the initial norm).

    For ``r = p`` the lower line
    ``|u(t)|^{p-1} >= |u(t0)|^{p-1} - λ1 (p-1)/p |Φ1|_1^{(p-1)/p} (t - t0)``
    is also checked over consecutive steps and from ``t0 = 0``.
    """
    cid = f"norm_monotonicity_r{r:g}"
    fam = "norm_monotonicity"
    p = traj.p
    if r < p:
        raise ValueError(f"monotonicity is only claimed for r >= p, got r = {r}")
    lam, phi = _principal(traj.domain)
    norms = _lp(traj.domain, traj.snapshots, r, phi.values)
    scale = norms[0]
    rise = np.diff(norms) / scale
    k = int(np.argmax(rise)) if len(rise) else 0
    margin = -float(rise[k]) if len(rise) else 0.0
    const = float(np.max(rise)) if len(rise) else 0.0
    if math.isclose(r, p) and len(rise):
        slope = lam * (p - 1.0) / p * float(np.dot(traj.domain.quad_weights, phi.values)) ** ((p - 1.0) / p)
        y = norms ** (p - 1.0)
        t = traj.times
        step_slack = (np.diff(y) + slope * np.diff(t)) / y[0]
        start_slack = (y[1:] - y[0] + slope * (t[1:] - t[0])) / y[0]
        worst = np.minimum(step_slack, start_slack)
        j = int(np.argmin(worst))
        if worst[j] < margin:
            margin, k = float(worst[j]), j
    return make_record(cid, ANCHORS[fam], const, margin, _location(traj, k + 1), family=fam)


def check_extinction_bound(traj: Trajectory) -> AuditRecord:
    """``T* >= p/(λ1 (p-1)) |Φ1|_1^{(1-p)/p} |u0|_{L^p_Φ1}^{p-1}``.

    The constant is ``T*_est / bound``; the margin is that ratio minus one.
    """
    cid = "extinction_bound"
    _require_start(traj)
    T = _extinction_time(traj)
    p = traj.p
    lam, phi = _principal(traj.domain)
    l1 = float(np.dot(traj.domain.quad_weights, phi.values))
    norm0 = _lp(traj.domain, traj.snapshots[:1], p, phi.values)[0]
    bound = p / (lam * (p - 1.0)) * l1 ** ((1.0 - p) / p) * norm0 ** (p - 1.0)
    ratio = T / bound
    return make_record(cid, ANCHORS[cid], ratio, ratio - 1.0, {"time": T})


def extinction_lower_bound(u0: ScalarField, p: float) -> float:
    lam, phi = _principal(u0.domain)
    l1 = float(np.dot(u0.domain.quad_weights, phi.values))
    norm0 = _lp(u0.domain, u0.values[None, :], p, phi.values)[0]
    return p / (lam * (p - 1.0)) * l1 ** ((1.0 - p) / p) * norm0 ** (p - 1.0)


# ---------------------------------------------------------------------------
# Harnack inequalities
# ---------------------------------------------------------------------------


def harnack_envelope(traj: Trajectory, window: tuple[float, float] = HARNACK_WINDOW):
    """``(times, E_min, E_max)`` of ``(u/Φ1) (T* - t)^{-1/(p-1)}`` over the window."""
    T = _extinction_time(traj)
    _, phi = _principal(traj.domain)
    idx = np.flatnonzero((traj.times > window[0] * T) & (traj.times < window[1] * T))
    if len(idx) == 0:
        raise ValueError("no stored steps inside the Harnack window")
    inner = traj.domain.interior_index
    ratio = traj.snapshots[np.ix_(idx, inner)] / phi.values[inner]
    factor = (T - traj.times[idx]) ** (-1.0 / (traj.p - 1.0))
    return idx, ratio.min(axis=1) * factor, ratio.max(axis=1) * factor


def check_harnack_special(traj: Trajectory) -> AuditRecord:
    """Two-sided envelope of ``u/Φ1`` against ``(T* - t)^{1/(p-1)}`` near extinction.

    The constant is ``[min E_min, max E_max]`` over ``t`` in
    ``(2T*/3, 0.95 T*)``; the check also caps ``max E_max / min E_min`` at 50.
    """
    cid = "harnack_special"
    n, p = traj.domain.dim, traj.p
    if not p < brezis_turner(n):
        return inapplicable(cid, ANCHORS[cid], f"p = {p:g} >= (n+1)/(n-1) = {brezis_turner(n):g}")
    idx, lo, hi = harnack_envelope(traj)
    c_lo, c_hi = float(lo.min()), float(hi.max())
    spread = c_hi / c_lo if c_lo > 0 else math.inf
    margin = min(constant_margin(c_lo, c_hi), 1.0 - spread / HARNACK_SPREAD)
    k = int(idx[np.argmin(lo)])
    return make_record(cid, ANCHORS[cid], [c_lo, c_hi], margin, _location(traj, k))


def harnack_lower_profile(t, T: float, params: AuditParams, norm0: float) -> np.ndarray:
    """Time factor of the lower envelope, without the constant ``C1``.

    The Beta factor is ``β_{t/T}(b+1, a+1)``, i.e. the integral of
    ``τ^b (1-τ)^a`` over ``(t/T, 1)``, which is the time integral the lower
    envelope is built from.
    """
    p, a, b = params.p, params.a, params.b
    t = np.atleast_1d(np.asarray(t, dtype=float))
    beta = np.array([incomplete_beta(min(tk / T, 1.0), b + 1.0, a + 1.0) for tk in t])
    e = p / (p - 1.0)
    return (t ** (1.0 / (p - 1.0)) * T ** (a + b + 1.0) * beta / (T**e - t**e)
            * norm0 ** (-p * params.r / params.weighted_gap))


def check_harnack_general(traj: Trajectory, params: AuditParams,
                          samples: int = AUDIT_SAMPLES) -> AuditRecord:
    """Empirical ``C1`` (largest admissible) and ``C2`` (smallest admissible).

    ``C1 = min_t min_x (u/Φ1) / L(t)`` with ``L`` from
    :func:`harnack_lower_profile`; ``C2 = max_t max_x (u/Φ1) t^b / |u0|^{pr/(r-q(p-1))}``.
    """
    cid = "harnack_general"
    if not params.gated:
        return inapplicable(cid, ANCHORS[cid], params.gate_reason())
    _require_start(traj)
    T = _extinction_time(traj)
    _, phi = _principal(traj.domain)
    norm0 = _lp(traj.domain, traj.snapshots[:1], params.r, phi.values)[0]
    idx = sample_indices(traj, samples)
    inner = traj.domain.interior_index
    ratio = traj.snapshots[np.ix_(idx, inner)] / phi.values[inner]
    t = traj.times[idx]
    lower = ratio.min(axis=1) / harnack_lower_profile(t, T, params, norm0)
    upper = ratio.max(axis=1) * t**params.b * norm0 ** (-params.p * params.r / params.weighted_gap)
    c1, c2 = float(lower.min()), float(upper.max())
    k = int(idx[np.argmin(lower)])
    return make_record(cid, ANCHORS[cid], [c1, c2], constant_margin(c1, c2), _location(traj, k))


# ---------------------------------------------------------------------------
# representation sandwich and Benilan-Crandall
# ---------------------------------------------------------------------------


def representation_terms(traj: Trajectory, i0: int, i1: int, nodes: Sequence[int],
                         op: LaplacianOperator | None = None):
    """``(lower, middle, upper)`` of the Green sandwich at the given nodes."""
    p = traj.p
    op = laplacian(traj.domain) if op is None else op
    t0, t1 = traj.times[i0], traj.times[i1]
    if not 0 < t0 < t1:
        raise ValueError("need 0 < t0 < t1")
    u0, u1 = traj.snapshots[i0], traj.snapshots[i1]
    e = p / (p - 1.0)
    rhs = ScalarField(traj.domain, (u1**p - u0**p) / (t0**e - t1**e))
    middle = e * solve_poisson(op, rhs).values[nodes]
    lower = u1[nodes] / t1 ** (1.0 / (p - 1.0))
    upper = u0[nodes] / t0 ** (1.0 / (p - 1.0))
    return lower, middle, upper


def check_representation(traj: Trajectory, nodes: Sequence[int] | None = None,
                         t0_frac: float = 0.2, t1_frac: float = 0.6,
                         op: LaplacianOperator | None = None) -> AuditRecord:
    """Sandwich ``u(x,t1)/t1^{1/(p-1)} <= (p/(p-1)) ∫ G(.,x) Δ_t u^p / Δ_t t^{p/(p-1)} <= u(x,t0)/t0^{1/(p-1)}``.

    Times are the stored steps nearest ``t0_frac T*`` and ``t1_frac T*``.
    Slack is relative to the largest upper value; the constant is
    ``[min slack below, min slack above]``.

    Raises:
        ValueError: if the requested times are not bracketed by the run.
    """
    cid = "representation"
    _require_start(traj)
    T = _extinction_time(traj)
    if not (0 < t0_frac < t1_frac) or t1_frac * T > traj.times[-1]:
        raise ValueError("representation times are not bracketed by the trajectory")
    i0, i1 = traj.index_near(t0_frac * T), traj.index_near(t1_frac * T)
    if not 0 < i0 < i1:
        raise ValueError("representation times collapse onto the same step")
    nodes = sample_nodes(traj.domain) if nodes is None else list(nodes)
    lower, middle, upper = representation_terms(traj, i0, i1, nodes, op)
    scale = float(np.max(upper))
    below = (middle - lower) / scale
    above = (upper - middle) / scale
    worst = np.minimum(below, above)
    j = int(np.argmin(worst))
    loc = {"time": float(traj.times[i0]), "time_end": float(traj.times[i1]), "node": int(nodes[j])}
    return make_record(cid, ANCHORS[cid], [float(below.min()), float(above.min())],
                       float(worst[j]), loc)


def benilan_crandall_violation(traj: Trajectory) -> np.ndarray:
    """Per-step ``max_x (u_t - u/((p-1)t))_+`` with backward differences."""
    t = traj.times
    u = traj.snapshots
    ut = np.diff(u, axis=0) / np.diff(t)[:, None]
    bound = u[1:] / ((traj.p - 1.0) * t[1:, None])
    return np.max(np.maximum(ut - bound, 0.0), axis=1)


def check_benilan_crandall(traj: Trajectory) -> AuditRecord:
    """``u_t <= u/((p-1)t)``; constant and margin relative to the initial sup norm."""
    cid = "benilan_crandall"
    _require_start(traj)
    viol = benilan_crandall_violation(traj) / float(np.max(traj.snapshots[0]))
    k = int(np.argmax(viol))
    return make_record(cid, ANCHORS[cid], float(viol[k]), -float(viol[k]), _location(traj, k + 1))


# ---------------------------------------------------------------------------
# L^{p+1} structure and energy
# ---------------------------------------------------------------------------


def _rayleigh_rows(domain: Domain, rows: np.ndarray, p: float, op: LaplacianOperator) -> np.ndarray:
    inner = domain.interior_index
    x = rows[:, inner]
    grad = domain.cell_volume * np.einsum("ij,ij->i", op.matrix.dot(x.T).T, x)
    return grad / _lp(domain, rows, p + 1.0) ** 2


def check_p_plus_1_structure(traj: Trajectory, op: LaplacianOperator | None = None,
                             window_end: float = HARNACK_WINDOW[1]) -> list[AuditRecord]:
    """Three records: ``Q[u(t)]`` nonincreasing, ``|u|_{p+1}^{p-1}`` convex in ``t``,
    and ``(T* - t)^{-1/(p-1)} |u|_{p+1}`` nonincreasing.

    Convexity is tested on slope differences between consecutive steps,
    relative to the largest slope, skipping steps shorter than ``1e-8 t``
    whose time differences are dominated by rounding. The third record uses steps with
    ``t <= window_end * T*`` so that the fitted ``T*`` does not dominate.
    """
    p = traj.p
    if len(traj) < 3:
        raise ValueError("need at least three samples")
    op = laplacian(traj.domain) if op is None else op
    live = np.flatnonzero(np.max(traj.snapshots, axis=1) > 0)
    rows = traj.snapshots[live]
    t = traj.times[live]

    Q = _rayleigh_rows(traj.domain, rows, p, op)
    dQ = np.diff(Q) / Q[0]
    k = int(np.argmax(dQ))
    rec_q = make_record("p_plus_1_rayleigh", ANCHORS["p_plus_1_rayleigh"], float(Q[-1] / Q[0]),
                        -float(dQ[k]), _location(traj, int(live[k + 1])))

    y = _lp(traj.domain, rows, p + 1.0) ** (p - 1.0)
    dt = np.diff(t)
    slope = np.diff(y) / dt
    curv = np.diff(slope) / np.max(np.abs(slope))
    # differences of stored times carry a relative error ~ eps t / dt; only
    # keep slope pairs whose steps are resolved well below the tolerance
    resolved = dt >= TIME_RESOLUTION * t[1:]
    ok = resolved[:-1] & resolved[1:]
    curv = np.where(ok, curv, np.inf)
    j = int(np.argmin(curv))
    rec_c = make_record("p_plus_1_convexity", ANCHORS["p_plus_1_convexity"], float(curv[j]),
                        float(curv[j]), _location(traj, int(live[j + 1])))

    records = [rec_c, rec_q]
    if traj.extinction is not None:
        T = traj.extinction.T_star
        keep = t <= window_end * T
        z = (T - t[keep]) ** (-1.0 / (p - 1.0)) * y[keep] ** (1.0 / (p - 1.0))
        dz = np.diff(z) / z[0]
        m = int(np.argmax(dz))
        records.append(make_record("p_plus_1_scaled_norm", ANCHORS["p_plus_1_scaled_norm"],
                                   float(z[-1] / z[0]), -float(dz[m]),
                                   _location(traj, int(live[m + 1]))))
    return records


def energy_steps(rtraj: Trajectory, op: LaplacianOperator | None = None):
    """Per-step ``(ΔF, -2p ds ∫ v^{p-1} ((v_{k+1} - v_k)/ds)^2)``.

    The weight ``v^{p-1}`` is averaged over the two endpoints of the step.
    """
    p = rtraj.p
    dom = rtraj.domain
    op = laplacian(dom) if op is None else op
    v = rtraj.snapshots
    x = v[:, dom.interior_index]
    grad = dom.cell_volume * np.einsum("ij,ij->i", op.matrix.dot(x.T).T, x)
    F = grad - 2.0 / (p + 1.0) * (np.abs(v) ** (p + 1.0) @ dom.quad_weights)
    ds = np.diff(rtraj.times)
    vs = np.diff(v, axis=0) / ds[:, None]
    wgt = 0.5 * (v[1:] ** (p - 1.0) + v[:-1] ** (p - 1.0))
    D = -2.0 * p * ds * ((wgt * vs**2) @ dom.quad_weights)
    return F, np.diff(F), D


def check_energy_dissipation(rtraj: Trajectory, newton_tol: float = 1e-12,
                             op: LaplacianOperator | None = None) -> AuditRecord:
    """``F[v_{k+1}] <= F[v_k]`` and the discrete dissipation identity.

    The identity defect is ``Σ|ΔF - D| / Σ|D|`` and must stay below 5%;
    runs whose total dissipation is at roundoff level (the steady state)
    count as defect zero. The constant is ``[max ΔF / |F0|, defect]``.
    """
    cid = "energy_dissipation"
    if rtraj.kind != "rescaled":
        raise ValueError("energy dissipation is checked on rescaled trajectories")
    F, dF, D = energy_steps(rtraj, op)
    scale = max(abs(F[0]), np.finfo(float).tiny)
    rise = dF / scale
    k = int(np.argmax(rise))
    total = float(np.sum(np.abs(D)))
    if total <= 1e-12 * scale * len(D):
        defect = 0.0
    else:
        defect = float(np.sum(np.abs(dF - D)) / total)
    margin = min(10.0 * newton_tol - float(rise[k]), 0.05 - defect)
    return make_record(cid, ANCHORS[cid], [float(rise[k]), defect], margin,
                       _location(rtraj, k + 1))


# ---------------------------------------------------------------------------
# ancient solutions
# ---------------------------------------------------------------------------


def check_ancient_bounds(rtraj: Trajectory, r: float) -> AuditRecord:
    """Map a rescaled run back to ``t < 0`` and bound it from both sides.

    Constants: ``[min_t (-t)^{-1/(p-1)} |u(t)|_{L^r}, min v/Φ1, max v/Φ1]``,
    all of which must be finite and positive.
    """
    cid = "ancient_bounds"
    p = rtraj.p
    phys = transform_from_rescaled(rtraj, p, 0.0)
    _, phi = _principal(rtraj.domain)
    norms = _lp(rtraj.domain, phys.snapshots, r) * (-phys.times) ** (-1.0 / (p - 1.0))
    inner = rtraj.domain.interior_index
    ratio = rtraj.snapshots[:, inner] / phi.values[inner]
    c1, lo, hi = float(norms.min()), float(ratio.min()), float(ratio.max())
    k = int(np.argmin(norms))
    return make_record(cid, ANCHORS[cid], [c1, lo, hi], constant_margin(c1, lo, hi),
                       {"time": float(rtraj.times[k])})
