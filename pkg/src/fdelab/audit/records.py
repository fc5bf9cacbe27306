"""Audit records and the per-check tolerance table."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any

PASS, FAIL, INAPPLICABLE = "pass", "fail", "inapplicable"

# A record fails iff worst_margin < -TOLERANCES[family]. Margins are
# relative to the scale named in each check's docstring.
TOLERANCES: dict[str, float] = {
    "smoothing": 0.0,
    "norm_monotonicity": 1e-9,
    "norm_p_lower_line": 1e-9,
    "extinction_bound": 0.02,
    "harnack_special": 0.0,
    "harnack_general": 0.0,
    "representation": 1e-3,
    "benilan_crandall": 1e-6,
    "p_plus_1_rayleigh": 1e-9,
    "p_plus_1_convexity": 1e-6,
    "p_plus_1_scaled_norm": 1e-6,
    "energy_dissipation": 0.0,
    "mode_decay": 0.0,
    "weighted_sobolev": 0.0,
    "ancient_bounds": 0.0,
}

# relative change of an empirical constant tolerated under one refinement
DRIFT_LIMIT = 0.10


@dataclass(frozen=True)
class AuditRecord:
    check_id: str
    paper_anchor: str
    status: str
    empirical_constant: Any
    worst_margin: float
    worst_location: dict | None = None
    refinement_drift: float | None = None
    family: str = ""

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "paper_anchor": self.paper_anchor,
            "status": self.status,
            "empirical_constant": self.empirical_constant,
            "worst_margin": self.worst_margin,
            "worst_location": self.worst_location,
            "refinement_drift": self.refinement_drift,
        }

    @property
    def tolerance(self) -> float:
        return TOLERANCES[self.family or self.check_id]


def make_record(check_id: str, anchor: str, constant, margin: float, location=None,
                family: str | None = None) -> AuditRecord:
    family = family or check_id
    margin = float(margin)
    ok = math.isfinite(margin) and margin >= -TOLERANCES[family]
    return AuditRecord(check_id, anchor, PASS if ok else FAIL, _clean(constant), margin,
                       location, None, family)


def inapplicable(check_id: str, anchor: str, reason: str, family: str | None = None) -> AuditRecord:
    return AuditRecord(check_id, anchor, INAPPLICABLE, None, math.nan, {"reason": reason},
                       None, family or check_id)


def _clean(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return float(value)


def relative_drift(coarse, fine) -> float:
    """Largest relative change between two constants (scalars or equal-length lists)."""
    a = coarse if isinstance(coarse, (list, tuple)) else [coarse]
    b = fine if isinstance(fine, (list, tuple)) else [fine]
    if len(a) != len(b):
        raise ValueError("constants have different shapes")
    worst = 0.0
    for x, y in zip(a, b):
        if not (math.isfinite(x) and math.isfinite(y)):
            return math.inf
        denom = max(abs(x), abs(y))
        worst = max(worst, abs(x - y) / denom if denom > 0 else 0.0)
    return worst


def attach_drift(coarse: AuditRecord, fine: AuditRecord) -> AuditRecord:
    """Fold the refinement drift of ``coarse`` versus ``fine`` into ``coarse``.

    Only records whose verdict rests on an empirical constant (not on a
    signed inequality margin) take the drift into their margin.
    """
    if coarse.status == INAPPLICABLE or fine.status == INAPPLICABLE:
        return coarse
    if coarse.empirical_constant is None or fine.empirical_constant is None:
        return coarse
    drift = relative_drift(coarse.empirical_constant, fine.empirical_constant)
    margin = coarse.worst_margin
    if coarse.family in STABILITY_CHECKS:
        margin = min(margin, DRIFT_LIMIT - drift)
    ok = math.isfinite(margin) and margin >= -coarse.tolerance
    return replace(coarse, refinement_drift=drift, worst_margin=margin,
                   status=PASS if ok else FAIL)


# checks judged on "finite, positive and refinement-stable" constants
STABILITY_CHECKS = frozenset({
    "smoothing", "harnack_special", "harnack_general", "weighted_sobolev", "ancient_bounds",
})


def constant_margin(*values: float) -> float:
    """1 when every constant is finite and positive, ``-inf`` otherwise.

    Stability checks carry this margin until a refinement run replaces it
    with ``DRIFT_LIMIT - drift``.
    """
    ok = all(math.isfinite(v) and v > 0 for v in values)
    return 1.0 if ok else -math.inf
