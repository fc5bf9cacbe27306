"""Upper incomplete Beta integral ``∫_z^1 s^{α-1} (1-s)^{β-1} ds`` (not regularized)."""

from __future__ import annotations

import math

from scipy import integrate

_QUAD = dict(epsabs=1e-15, epsrel=1e-13, limit=200)


def _left(y: float, alpha: float, beta: float) -> float:
    # ∫_0^y with the s^{α-1} factor handled as an algebraic endpoint weight
    if y == 0.0:
        return 0.0
    val, _ = integrate.quad(lambda s: (1.0 - s) ** (beta - 1.0), 0.0, y,
                            weight="alg", wvar=(alpha - 1.0, 0.0), **_QUAD)
    return val


def _right(c: float, alpha: float, beta: float) -> float:
    # ∫_c^1 with the (1-s)^{β-1} factor as the endpoint weight
    if c == 1.0:
        return 0.0
    val, _ = integrate.quad(lambda s: s ** (alpha - 1.0), c, 1.0,
                            weight="alg", wvar=(0.0, beta - 1.0), **_QUAD)
    return val


def incomplete_beta(z: float, alpha: float, beta: float) -> float:
    """``β_z(α, β) = ∫_z^1 s^{α-1} (1-s)^{β-1} ds`` for ``0 <= z <= 1``.

    The interval is split at 1/2 so that each piece carries at most one
    endpoint singularity, which QUADPACK's algebraic-weight rule integrates
    exactly; absolute error is around 1e-14 for moderate exponents.

    Raises:
        ValueError: ``z`` outside ``[0, 1]`` or nonpositive exponents.
    """
    z, alpha, beta = float(z), float(alpha), float(beta)
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"z must lie in [0, 1], got {z}")
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"exponents must be positive, got alpha={alpha}, beta={beta}")
    if z >= 0.5:
        return _right(z, alpha, beta)
    middle = _left(0.5, alpha, beta) - _left(z, alpha, beta)
    return _right(0.5, alpha, beta) + middle


def complete_beta(alpha: float, beta: float) -> float:
    return math.exp(math.lgamma(alpha) + math.lgamma(beta) - math.lgamma(alpha + beta))
