"""Exponent bookkeeping and admissibility gates for the audited estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass


def brezis_turner(n: int) -> float:
    """``(n+1)/(n-1)_+``; infinite in one dimension."""
    return math.inf if n <= 1 else (n + 1.0) / (n - 1.0)


def sobolev_critical(n: int) -> float:
    """``n/(n-2)_+``; infinite for ``n <= 2``."""
    return math.inf if n <= 2 else n / (n - 2.0)


def r1_admissible(n: int, p: float, r: float) -> bool:
    """Range for the unweighted smoothing effect."""
    if p < sobolev_critical(n):
        return r >= p
    return r > n * (p - 1.0) / 2.0


def r2_admissible(n: int, p: float, r: float) -> bool:
    """Range for the Φ1-weighted smoothing effect."""
    if p < brezis_turner(n):
        return r >= p
    return r > (n + 1.0) * (p - 1.0) / 2.0


def default_q(n: int) -> float:
    return (n + 1.0) / 2.0 if n >= 2 else 1.5


@dataclass(frozen=True)
class AuditParams:
    """Exponents shared by the smoothing and Harnack checks.

    ``q`` and ``q_star`` are tied by ``1/q + 2/q* = 1``. ``b`` is only
    meaningful (positive) when ``r > q (p - 1)``; otherwise it is NaN and
    the gated checks report "inapplicable".
    """

    n: int
    p: float
    r: float
    q: float
    q_star: float
    a: float
    b: float
    r1_ok: bool
    r2_ok: bool

    @classmethod
    def build(cls, n: int, p: float, r: float, q: float | None = None) -> AuditParams:
        if n not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {n}")
        if not p > 1:
            raise ValueError(f"exponent p must exceed 1, got {p}")
        if not r > 0:
            raise ValueError(f"norm exponent r must be positive, got {r}")
        q = default_q(n) if q is None else float(q)
        if not q > 1:
            raise ValueError(f"q must exceed 1, got {q}")
        q_star = 2.0 * q / (q - 1.0)
        denom = r - q * (p - 1.0)
        b = (r + q) / denom if denom > 0 else math.nan
        return cls(n, float(p), float(r), q, q_star, 2.0 / (p - 1.0), b,
                   r1_admissible(n, p, r), r2_admissible(n, p, r))

    @property
    def weighted_gap(self) -> float:
        """``r - q (p - 1)``, the denominator of every weighted exponent."""
        return self.r - self.q * (self.p - 1.0)

    @property
    def gated(self) -> bool:
        """True when the weighted estimates are claimed for these exponents."""
        return self.r2_ok and self.weighted_gap > 0

    def gate_reason(self) -> str:
        if not self.r2_ok:
            if self.p < brezis_turner(self.n):
                return f"r = {self.r:g} < p = {self.p:g}"
            return f"r = {self.r:g} <= (n+1)(p-1)/2 = {(self.n + 1) * (self.p - 1) / 2:g}"
        if not self.weighted_gap > 0:
            return f"r = {self.r:g} <= q(p-1) = {self.q * (self.p - 1):g}"
        return ""
