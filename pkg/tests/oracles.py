"""Independent reference computations used by the tests.

Nothing here imports the package: operators are assembled densely from
scratch and the nonlinear problems go through generic scipy solvers.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, root


def dense_laplacian_1d(n: int, length: float = 1.0) -> np.ndarray:
    h = length / n
    m = n - 1
    return (2 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)) / h**2


def dense_laplacian_2d(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> np.ndarray:
    ax, ay = dense_laplacian_1d(nx, lx), dense_laplacian_1d(ny, ly)
    return np.kron(ax, np.eye(ny - 1)) + np.kron(np.eye(nx - 1), ay)


def discrete_lambda1_1d(n: int, length: float = 1.0) -> float:
    h = length / n
    return 4.0 / h**2 * math.sin(math.pi * h / (2 * length)) ** 2


def discrete_lane_emden(A: np.ndarray, guess: np.ndarray, p: float) -> np.ndarray:
    """Root of ``A s = s^p`` from a generic hybrid root finder."""
    sol = root(lambda s: A @ s - np.abs(s) ** p, guess,
               jac=lambda s: A - np.diag(p * np.abs(s) ** (p - 1)), method="hybr", tol=1e-14)
    # hybr's success flag is fragile near convergence; judge by the residual
    res = np.max(np.abs(A @ sol.x - np.abs(sol.x) ** p)) / np.max(np.abs(sol.x) ** p)
    assert res <= 1e-11, (sol.message, res)
    return sol.x


def le_shooting_max(p: float) -> float:
    """Max of the continuous solution of ``-S'' = S^p`` on (0, 1) by shooting."""
    def slope(sig):
        s = solve_ivp(lambda x, y: [y[1], -abs(y[0]) ** p], [0, 0.5], [0, sig],
                      rtol=1e-13, atol=1e-14, method="DOP853")
        return s.y[1, -1], s.y[0, -1]
    sig = brentq(lambda s: slope(s)[0], 1, 200, xtol=1e-14)
    return slope(sig)[1]


def amplitude_step(a: float, p: float, dt: float) -> float:
    """Positive root of ``x^p + dt x = a^p`` by bisection-safe brentq."""
    target = a**p
    return brentq(lambda x: x**p + dt * x - target, 0.0, a, xtol=1e-300, rtol=1e-15)


def beta_midpoint(z: float, a: float, b: float, panels: int = 10**6) -> float:
    """``∫_z^1 s^{a-1}(1-s)^{b-1} ds`` by the midpoint rule after endpoint substitutions.

    ``s = w^k`` near 0 and ``1 - s = w^k`` near 1 with ``k = ceil(3/exponent)``
    make the transformed integrands smooth enough for the midpoint rule.
    """
    ka = max(1, math.ceil(3 / a))
    kb = max(1, math.ceil(3 / b))
    total = 0.0
    cut = 0.5
    if z < cut:
        lo, hi = z ** (1 / ka), cut ** (1 / ka)
        w = lo + (hi - lo) * (np.arange(panels) + 0.5) / panels
        s = w**ka
        total += np.sum(s ** (a - 1) * (1 - s) ** (b - 1) * ka * w ** (ka - 1)) * (hi - lo) / panels
    else:
        cut = z
    top = (1 - cut) ** (1 / kb)
    w = top * (np.arange(panels) + 0.5) / panels
    s = 1 - w**kb
    total += np.sum(s ** (a - 1) * w ** (kb * (b - 1)) * kb * w ** (kb - 1)) * top / panels
    return float(total)


def omega_profile_ivp(p: float) -> tuple[float, float]:
    """``(σ, max ω)`` for ``-ω'' = γ^2 ω + ω^p`` with adaptive DOP853 shooting."""
    g = 2 / (p - 1)

    def run(sig):
        return solve_ivp(lambda t, y: [y[1], -g * g * y[0] - abs(y[0]) ** (p - 1) * y[0]],
                         [0, math.pi], [0, sig], rtol=1e-13, atol=1e-15, method="DOP853",
                         dense_output=True)

    grid = np.linspace(0.05, 3, 60)
    f = [run(s).sol(math.pi / 2)[1] for s in grid]
    k = next(i for i in range(len(grid) - 1) if f[i] * f[i + 1] < 0)
    sig = brentq(lambda s: run(s).sol(math.pi / 2)[1], grid[k], grid[k + 1], xtol=1e-15)
    th = np.linspace(0, math.pi, 2001)
    return sig, float(run(sig).sol(th)[0].max())
