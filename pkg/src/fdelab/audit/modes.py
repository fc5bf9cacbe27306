"""Spectral projections of the relative error ``g = v/S - 1`` and decay-rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fdelab.audit.records import AuditRecord, make_record
from fdelab.discretization import ScalarField
from fdelab.evolution import Trajectory
from fdelab.spectral import SpectrumSet, to_relative_basis

ORTHONORMAL_TOL = 1e-8
LINEAR_AMPLITUDE = 1e-3


@dataclass(frozen=True)
class Projection:
    coefficients: np.ndarray
    g_norm: float
    negative: float
    neutral: float
    positive: float

    @property
    def tail(self) -> float:
        """Squared norm not captured by the computed modes (clipped at 0)."""
        return max(self.g_norm**2 - float(np.sum(self.coefficients**2)), 0.0)


@dataclass(frozen=True)
class ModeFit:
    fitted_rate: float
    target_rate: float
    relative_error: float
    r_squared: float
    initial_amplitude: float
    flagged: bool


def _relative(spectrum: SpectrumSet) -> SpectrumSet:
    if spectrum.normalization == "L2(S^(p+1))":
        return spectrum
    return to_relative_basis(spectrum)


def _check_basis(basis: SpectrumSet):
    gram = basis.gram()
    defect = float(np.max(np.abs(gram - np.eye(len(gram)))))
    if defect > ORTHONORMAL_TOL:
        raise ValueError(f"basis is not orthonormal (Gram defect {defect:.2e})")


def _coefficients(rows: np.ndarray, basis: SpectrumSet) -> tuple[np.ndarray, np.ndarray]:
    S = basis.reference
    inner = S.domain.interior_index
    g = rows[:, inner] / S.values[inner] - 1.0
    w = S.domain.quad_weights[inner] * basis.weight.values[inner]
    modes = np.array([f.values[inner] for f in basis.fields])
    coeff = (g * w) @ modes.T
    norms = np.sqrt((g**2) @ w)
    return coeff, norms


def project_relative_error(v: ScalarField, S: ScalarField, basis: SpectrumSet) -> Projection:
    """Coefficients of ``g = v/S - 1`` in an ``S^{p+1}``-orthonormal basis.

    Accepts either the linearized eigenfields or their relative form. Block
    norms follow the sign of the eigenvalues (neutral window ``±1e-6``).

    Raises:
        ValueError: non-orthonormal basis, or ``v``/``S`` not positive inside.
    """
    if basis.normalization != "L2(S^(p+1))":
        basis = to_relative_basis(basis, S)
    elif basis.reference is not S and not np.array_equal(basis.reference.values, S.values):
        raise ValueError("basis was built from a different steady state")
    _check_basis(basis)
    inner = S.domain.interior_index
    if np.any(S.values[inner] <= 0) or np.any(v.values[inner] <= 0):
        raise ValueError("v and S must be positive on the interior")
    coeff, norms = _coefficients(v.values[None, :], basis)
    c = coeff[0]
    blocks = basis.blocks()
    part = {k: float(np.sqrt(np.sum(c[idx] ** 2))) for k, idx in blocks.items()}
    return Projection(c, float(norms[0]), part["negative"], part["neutral"], part["positive"])


def fit_mode_decay(rtraj: Trajectory, spectrum: SpectrumSet, mode_index: int,
                   start: int = 0, stop: int | None = None) -> ModeFit:
    """Fit ``log |c_i(s)|`` against ``s`` by least squares.

    ``c_i`` is the coefficient of mode ``i`` in the relative error, i.e.
    the projection of ``g`` onto the mode's one-dimensional block. The
    target rate is ``λ_i / p`` (a decay rate; negative means growth).
    Fits with ``R^2 < 0.999`` or an initial amplitude above 1e-3 are
    flagged as outside the linear regime.
    """
    basis = _relative(spectrum)
    _check_basis(basis)
    coeff, _ = _coefficients(rtraj.snapshots, basis)
    c = np.abs(coeff[start:stop, mode_index])
    s = rtraj.times[start:stop]
    keep = c > 0
    if np.count_nonzero(keep) < 2:
        raise ValueError("mode coefficient vanishes; nothing to fit")
    y = np.log(c[keep])
    x = s[keep]
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    target = float(basis.eigenvalues[mode_index]) / rtraj.p
    rate = -float(slope)
    rel = abs(rate - target) / abs(target) if target != 0 else math.inf
    amp = float(c[0])
    flagged = r2 < 0.999 or amp > LINEAR_AMPLITUDE * (1.0 + 1e-9)
    return ModeFit(rate, target, rel, r2, amp, flagged)


def check_mode_decay(rtraj: Trajectory, spectrum: SpectrumSet, mode_index: int) -> AuditRecord:
    """Record wrapper: margin ``0.1 - relative error``, forced negative when flagged."""
    fit = fit_mode_decay(rtraj, spectrum, mode_index)
    margin = 0.1 - fit.relative_error
    if fit.flagged:
        margin = min(margin, -1.0)
    return make_record("mode_decay", "linearized decay of spectral projections",
                       [fit.fitted_rate, fit.target_rate], margin,
                       {"mode": int(mode_index), "r_squared": fit.r_squared})
