"""Pass/fail audits of the estimates on computed solutions."""

from fdelab.audit.beta import complete_beta, incomplete_beta
from fdelab.audit.checks import (
    check_ancient_bounds,
    check_benilan_crandall,
    check_energy_dissipation,
    check_extinction_bound,
    check_harnack_general,
    check_harnack_special,
    check_norm_monotonicity,
    check_p_plus_1_structure,
    check_representation,
    check_smoothing,
    extinction_lower_bound,
    harnack_envelope,
    sample_indices,
)
from fdelab.audit.modes import (
    ModeFit,
    Projection,
    check_mode_decay,
    fit_mode_decay,
    project_relative_error,
)
from fdelab.audit.params import AuditParams, r1_admissible, r2_admissible
from fdelab.audit.records import (
    FAIL,
    INAPPLICABLE,
    PASS,
    TOLERANCES,
    AuditRecord,
    attach_drift,
)
from fdelab.audit.sobolev import (
    check_weighted_sobolev,
    check_weighted_sobolev_on,
    sobolev_corpus,
    sobolev_ratio,
)

__all__ = [
    "AuditParams", "AuditRecord", "FAIL", "INAPPLICABLE", "ModeFit", "PASS", "Projection",
    "TOLERANCES", "attach_drift", "check_ancient_bounds", "check_benilan_crandall",
    "check_energy_dissipation", "check_extinction_bound", "check_harnack_general",
    "check_harnack_special", "check_mode_decay", "check_norm_monotonicity",
    "check_p_plus_1_structure", "check_representation", "check_smoothing",
    "check_weighted_sobolev", "check_weighted_sobolev_on", "complete_beta",
    "extinction_lower_bound", "fit_mode_decay", "harnack_envelope", "incomplete_beta",
    "project_relative_error", "r1_admissible", "r2_admissible", "sample_indices",
    "sobolev_corpus", "sobolev_ratio",
]
