"""
Positive steady states of ``-ΔS = S^p``, the separable solutions they
generate, the energy and Rayleigh functionals, and the angular profile of
the singular half-plane solution in two dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fdelab.discretization import (
    Domain,
    LaplacianOperator,
    ScalarField,
    laplacian,
    ratio_envelope,
    weighted_norm,
)
from fdelab.errors import ConvergenceError, PositivityError
from fdelab.spectral import principal_eigenpair

LANE_EMDEN_TOL = 1e-10
OMEGA_STEPS = 4096


@dataclass(frozen=True, eq=False)
class SteadyState:
    S: ScalarField
    p: float
    residual_norm: float
    hopf_envelope: tuple[float, float]
    iterations: int = 0

    @property
    def domain(self) -> Domain:
        return self.S.domain


def lane_emden_residual(S: ScalarField, p: float, op: LaplacianOperator | None = None) -> float:
    """``|Δ_h S + S^p|_inf / |S^p|_inf`` over interior nodes."""
    op = laplacian(S.domain) if op is None else op
    s = S.interior
    sp_ = np.abs(s) ** p
    return float(np.max(np.abs(op.matvec(s) - sp_)) / np.max(sp_))


def galerkin_amplitude(op: LaplacianOperator, p: float) -> float:
    """Amplitude ``c`` with ``c λ1 = c^p <Φ1^{p+1}> / <Φ1^2>``."""
    lam, phi = principal_eigenpair(op)
    f = phi.interior
    return float((lam * np.sum(f**2) / np.sum(f ** (p + 1.0))) ** (1.0 / (p - 1.0)))


def solve_lane_emden(domain: Domain, p: float, init_amplitude: float = 1.0,
                     op: LaplacianOperator | None = None, max_iter: int = 100) -> SteadyState:
    """Positive solution of ``-Δ_h S = S^p`` by damped Newton iteration.

    The starting guess is ``init_amplitude * c * Φ1`` with ``c`` from the
    one-mode Galerkin balance. While the residual is large each iterate is
    rescaled onto the Nehari set ``<A S, S> = <S^{p+1}>``, which keeps the
    iteration away from the trivial root ``S = 0``.

    Raises:
        ConvergenceError: Newton stalls above the residual tolerance.
        PositivityError: damping cannot keep the iterate positive.
    """
    if not p > 1:
        raise ValueError(f"exponent must exceed 1, got {p}")
    if not init_amplitude > 0:
        raise ValueError("init_amplitude must be positive")
    op = laplacian(domain) if op is None else op
    lam, phi = principal_eigenpair(op)
    s = init_amplitude * galerkin_amplitude(op, p) * phi.interior

    def residual(v):
        return op.matvec(v) - v**p

    res = residual(s)
    rel = np.max(np.abs(res)) / np.max(s**p)
    for it in range(max_iter):
        if rel > 1e-3:
            t = (np.dot(op.matvec(s), s) / np.sum(s ** (p + 1.0))) ** (1.0 / (p - 1.0))
            s = t * s
            res = residual(s)
            rel = np.max(np.abs(res)) / np.max(s**p)
        if rel <= 1e-14:
            break
        step = op.solve(-res, shift=-p * s ** (p - 1.0), definite=False)
        norm0 = np.linalg.norm(res)
        alpha = 1.0
        while alpha >= 1.0 / 1024:
            trial = s + alpha * step
            if np.all(trial > 0):
                trial_res = residual(trial)
                if np.linalg.norm(trial_res) < (1.0 - 1e-4 * alpha) * norm0:
                    break
            alpha *= 0.5
        else:
            if rel <= LANE_EMDEN_TOL:
                break
            if not np.all(s + step / 1024 > 0):
                raise PositivityError("Newton iterate lost positivity", iteration=it,
                                      last_iterate=s.tolist())
            raise ConvergenceError("Newton line search failed", iteration=it,
                                   relative_residual=float(rel), last_iterate=s.tolist())
        s, res = trial, trial_res
        rel = np.max(np.abs(res)) / np.max(s**p)
    if not rel <= LANE_EMDEN_TOL:
        raise ConvergenceError("Newton did not converge", iteration=max_iter,
                               relative_residual=float(rel), last_iterate=s.tolist())
    S = domain.from_interior(s)
    return SteadyState(S, float(p), float(rel), ratio_envelope(S, phi), it + 1)


def separable_amplitude(p: float, T_star: float, t):
    """``[(p-1)(T* - t)/p]^{1/(p-1)}``, the amplitude of the separable solution."""
    t = np.asarray(t, dtype=float)
    if np.any(t > T_star):
        raise ValueError("separable solution is only defined for t <= T*")
    return ((p - 1.0) * (T_star - t) / p) ** (1.0 / (p - 1.0))


def separable_solution(ss: SteadyState, T_star: float, t: float) -> ScalarField:
    """The solution ``a(t) S`` of ``∂_t u^p = Δu`` that vanishes exactly at ``T_star``."""
    return ss.S * float(separable_amplitude(ss.p, T_star, t))


def dirichlet_integral(v: ScalarField, op: LaplacianOperator | None = None) -> float:
    """``∫|∇v|^2`` computed as ``<-Δ_h v, v>`` with the quadrature weights."""
    op = laplacian(v.domain) if op is None else op
    x = v.interior
    return float(v.domain.cell_volume * np.dot(op.matvec(x), x))


def energy_F(v: ScalarField, p: float, op: LaplacianOperator | None = None) -> float:
    """``∫|∇v|^2 - 2/(p+1) ∫|v|^{p+1}``."""
    return dirichlet_integral(v, op) - 2.0 / (p + 1.0) * weighted_norm(v, p + 1.0) ** (p + 1.0)


def rayleigh_Q(u: ScalarField, p: float, op: LaplacianOperator | None = None) -> float:
    """Nonlinear Rayleigh quotient ``|∇u|_2^2 / |u|_{p+1}^2``."""
    norm = weighted_norm(u, p + 1.0)
    if norm == 0.0:
        raise ValueError("Rayleigh quotient of the zero field")
    return dirichlet_integral(u, op) / norm**2


# ---------------------------------------------------------------------------
# angular profile in the plane
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OmegaProfile:
    """Positive solution of ``-ω'' = γ^2 ω + ω^p`` on ``(0, π)``, ``ω(0) = ω(π) = 0``."""

    p: float
    gamma: float
    theta_nodes: np.ndarray
    omega: np.ndarray
    shooting_slope: float
    residual: float
    symmetry_defect: float


def omega_threshold(n: int = 2) -> float:
    return (n + 1.0) / (n - 1.0)


def _rk4(p: float, gamma: float, sigma, h: float, steps: int, record: bool = False):
    """Classical RK4 from ``ω(0) = 0, ω'(0) = sigma``; vectorized over ``sigma``."""
    g2 = gamma * gamma

    def rhs(y0, y1):
        return y1, -g2 * y0 - np.abs(y0) ** (p - 1.0) * y0

    y1 = np.array(sigma, dtype=float)
    y0 = np.zeros_like(y1)
    lowest = np.full_like(y1, np.inf)
    out = [y0.copy()] if record else None
    for _ in range(steps):
        k1 = rhs(y0, y1)
        k2 = rhs(y0 + 0.5 * h * k1[0], y1 + 0.5 * h * k1[1])
        k3 = rhs(y0 + 0.5 * h * k2[0], y1 + 0.5 * h * k2[1])
        k4 = rhs(y0 + h * k3[0], y1 + h * k3[1])
        y0 = y0 + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y1 = y1 + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        lowest = np.minimum(lowest, y0)
        if record:
            out.append(y0.copy())
    return y0, y1, lowest, out


def _sigma_scale(p: float, gamma: float) -> float:
    # a positive profile has max ω^{p-1} >= 1 - γ^2 (test the equation with
    # sin θ); the first integral turns that height into an initial slope
    m = (1.0 - gamma**2) ** (1.0 / (p - 1.0))
    return math.sqrt(gamma**2 * m**2 + 2.0 * m ** (p + 1.0) / (p + 1.0))


def omega_shooting_function(p: float, sigma: float, steps: int = OMEGA_STEPS):
    """``(ω'(π/2), min ω on (0, π/2])`` for the initial slope ``sigma``."""
    gamma = 2.0 / (p - 1.0)
    h = math.pi / steps
    _, slope, lowest, _ = _rk4(p, gamma, sigma, h, steps // 2)
    if np.ndim(slope) == 0:
        return float(slope), float(lowest)
    return slope, lowest


def _check_threshold(p: float):
    if not p > omega_threshold(2):
        raise ValueError(
            f"no positive angular profile for p = {p}: need p > 3 so that "
            "γ = 2/(p-1) < 1 stays below the first Dirichlet eigenvalue of (0, π)"
        )


def shooting_roots(p: float, sigma_max: float | None = None, samples: int = 400,
                   steps: int = OMEGA_STEPS) -> list[tuple[float, float]]:
    """Brackets ``(σ_a, σ_b)`` where ``ω'(π/2)`` changes sign on positive profiles.

    The scan covers ``(0, sigma_max]`` with ``sigma_max`` defaulting to ten
    times the slope implied by the lower bound on the profile height.
    """
    _check_threshold(p)
    gamma = 2.0 / (p - 1.0)
    if sigma_max is None:
        sigma_max = 10.0 * _sigma_scale(p, gamma)
    grid = np.linspace(sigma_max / samples, sigma_max, samples)
    slope, lowest = omega_shooting_function(p, grid, steps)
    ok = (lowest[:-1] > 0) & (lowest[1:] > 0) & (slope[:-1] * slope[1:] < 0)
    return [(float(grid[i]), float(grid[i + 1])) for i in np.flatnonzero(ok)]


def shoot_omega(p: float, steps: int = OMEGA_STEPS) -> OmegaProfile:
    """Solve for the positive angular profile by shooting from ``θ = 0``.

    The initial slope ``σ = ω'(0)`` is bracketed by a scan and refined by
    bisection on ``ω'(π/2) = 0`` (the profile is symmetric about ``π/2``).
    Integration is classical RK4 with step ``π/steps``.

    Raises:
        ValueError: for ``p <= 3``.
        ConvergenceError: if the scan finds no sign change.
    """
    _check_threshold(p)
    gamma = 2.0 / (p - 1.0)
    brackets = shooting_roots(p, steps=steps)
    if not brackets:
        raise ConvergenceError("no sign change of the shooting function", p=p)
    lo, hi = brackets[0]
    f_lo, _ = omega_shooting_function(p, lo, steps)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        f_mid, _ = omega_shooting_function(p, mid, steps)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    sigma = 0.5 * (lo + hi)
    h = math.pi / steps
    _, mid_slope, _, _ = _rk4(p, gamma, sigma, h, steps // 2)
    end, _, _, path = _rk4(p, gamma, sigma, h, steps, record=True)
    omega = np.array(path, dtype=float)
    theta = np.linspace(0.0, math.pi, steps + 1)
    residual = max(abs(float(end)), abs(float(mid_slope)))
    symmetry = float(np.max(np.abs(omega - omega[::-1])))
    omega = omega.copy()
    omega[-1] = 0.0
    return OmegaProfile(p, gamma, theta, omega, sigma, float(residual), symmetry)
