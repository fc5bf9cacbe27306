"""
Dirichlet eigenpairs and the weighted spectrum linearized at a steady state.

Two problems are solved here:

* the principal pair of ``-Δ_h``, normalized so that ``max Φ1 = 1``;
* ``(-Δ_h - p S^{p-1}) e = λ S^{p-1} e`` for a positive discrete steady
  state ``S``. Adding ``p S^{p-1}`` to both sides turns this into
  ``-Δ_h e = (λ + p) S^{p-1} e``, whose operator is positive definite, so
  plain block inverse iteration with ``(-Δ_h)^{-1} S^{p-1}`` converges to
  the lowest modes.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, qr

from fdelab.discretization import (
    Domain,
    LaplacianOperator,
    ScalarField,
    laplacian,
    ratio_envelope,
)
from fdelab.errors import ConvergenceError

PRINCIPAL_TOL = 1e-10
PAIR_TOL = 1e-8
NEUTRAL_WINDOW = 1e-6


@dataclass(frozen=True, eq=False)
class SpectrumSet:
    """Ordered eigenpairs with the inner product they are orthonormal in.

    ``weight`` is the nodal weight of the declared product (``None`` for the
    plain L2 product). ``reference`` keeps the steady state the linearized
    problem was built from.
    """

    problem_kind: str
    eigenvalues: np.ndarray
    fields: list[ScalarField]
    weight: ScalarField | None
    normalization: str
    p: float | None = None
    reference: ScalarField | None = None
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def domain(self) -> Domain:
        return self.fields[0].domain

    def gram(self) -> np.ndarray:
        w = self.domain.quad_weights
        if self.weight is not None:
            w = w * self.weight.values
        mat = np.array([f.values for f in self.fields])
        return (mat * w) @ mat.T

    def blocks(self, window: float = NEUTRAL_WINDOW) -> dict[str, np.ndarray]:
        """Indices of the negative, neutral and positive eigenvalues.

        The neutral block holds every eigenvalue inside ``(-window, window)``
        and is empty when there is none.
        """
        lam = self.eigenvalues
        return {
            "negative": np.flatnonzero(lam <= -window),
            "neutral": np.flatnonzero(np.abs(lam) < window),
            "positive": np.flatnonzero(lam >= window),
        }

    def first_positive(self) -> int:
        idx = self.blocks()["positive"]
        if len(idx) == 0:
            raise ValueError("no positive eigenvalue in the computed window")
        return int(idx[0])


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    big = np.flatnonzero(np.abs(vec) > 1e-3 * np.max(np.abs(vec)))
    return -vec if vec[big[0]] < 0 else vec


@functools.lru_cache(maxsize=64)
def principal_eigenpair(op: LaplacianOperator, max_iter: int = 2000) -> tuple[float, ScalarField]:
    """Principal Dirichlet eigenpair ``(λ1, Φ1)`` by inverse iteration.

    ``Φ1`` is positive on the interior and scaled to ``max Φ1 = 1``. The
    relative residual ``|A Φ1 - λ1 Φ1|_inf / (λ1 |Φ1|_inf)`` is driven below
    1e-10; stagnation above that raises :class:`ConvergenceError`.
    """
    domain = op.domain
    # positive start vector with no analytic knowledge of the mode
    x = domain.boundary_distance[domain.interior_index].astype(float).copy()
    x /= np.linalg.norm(x)
    best = np.inf
    stall = 0
    lam = np.nan
    res = np.inf
    for it in range(max_iter):
        y = op.solve_factored(x)
        x = y / np.linalg.norm(y)
        ax = op.matvec(x)
        lam = float(x @ ax)
        res = float(np.max(np.abs(ax - lam * x)) / (lam * np.max(np.abs(x))))
        if res <= 1e-13:
            break
        if res < 0.5 * best:
            best, stall = res, 0
        else:
            stall += 1
            if stall >= 8:
                break
    if not res <= PRINCIPAL_TOL:
        raise ConvergenceError(
            "inverse iteration stagnated", iterations=it + 1, eigenvalue=lam, residual=res
        )
    x = _fix_sign(x)
    if np.any(x <= 0):
        raise ConvergenceError("principal eigenvector is not positive", eigenvalue=lam)
    return lam, domain.from_interior(x / x.max())


def hopf_ratio(phi1: ScalarField, domain: Domain | None = None) -> tuple[float, float]:
    """Extremes of ``Φ1 / d`` over interior nodes, with ``d`` the boundary distance."""
    domain = phi1.domain if domain is None else domain
    dist = ScalarField(domain, domain.boundary_distance, dirichlet_zero=True)
    return ratio_envelope(phi1, dist)


def _block_inverse_iteration(op: LaplacianOperator, weight: np.ndarray, coupling: float,
                             k: int, max_iter: int = 5000, tol: float = 1e-12):
    """Lowest ``k`` pairs of ``(A - coupling W) x = θ W x`` via ``A^{-1} W``.

    Requires ``A`` positive definite (true for ``-Δ_h``), so that the
    shifted problem ``A x = (θ + coupling) W x`` has positive spectrum.
    """
    n = op.size
    m = min(n, max(k + 4, 2 * k))
    rng = np.random.default_rng(12345)
    y = rng.standard_normal((n, m))
    sqrt_w = np.sqrt(weight)
    cell = op.domain.cell_volume

    def rayleigh_ritz(y):
        q, _ = qr(sqrt_w[:, None] * y, mode="economic")
        basis = q / sqrt_w[:, None] / np.sqrt(cell)   # W-orthonormal incl. quadrature
        ab = np.column_stack([op.matvec(b) for b in basis.T])
        kmat = cell * (basis.T @ (ab - coupling * weight[:, None] * basis))
        kmat = 0.5 * (kmat + kmat.T)
        theta, c = eigh(kmat)
        return theta, basis @ c, ab @ c

    best = np.inf
    stall = 0
    for it in range(max_iter):
        theta, x, ax = rayleigh_ritz(y)
        r = ax[:, :k] - coupling * weight[:, None] * x[:, :k] - theta[:k] * weight[:, None] * x[:, :k]
        res = np.linalg.norm(r, axis=0) / np.linalg.norm(ax[:, :k], axis=0)
        worst = float(res.max())
        if worst <= tol:
            break
        if worst < 0.5 * best:
            best, stall = worst, 0
        else:
            stall += 1
            if stall >= 20:
                break
        y = np.column_stack([op.solve_factored(weight * col) for col in x.T])
    if not worst <= PAIR_TOL:
        raise ConvergenceError(
            "block inverse iteration stagnated", iterations=it + 1, residuals=res.tolist()
        )
    return theta[:k], x[:, :k], res


def dirichlet_spectrum(op: LaplacianOperator, k: int) -> SpectrumSet:
    """Lowest ``k`` eigenpairs of ``-Δ_h``, orthonormal in the quadrature L2 product."""
    lam, vecs, res = _block_inverse_iteration(op, np.ones(op.size), 0.0, k)
    fields = [op.domain.from_interior(_fix_sign(v)) for v in vecs.T]
    return SpectrumSet("plain_dirichlet", lam, fields, None, "L2", residuals=res)


def linearized_spectrum(S: ScalarField, p: float, k: int,
                        op: LaplacianOperator | None = None) -> SpectrumSet:
    """Lowest ``k`` pairs of ``(-Δ_h - p S^{p-1}) e = λ S^{p-1} e``.

    Eigenfields are orthonormal in the ``S^{p-1}``-weighted quadrature
    product. For a discrete steady state the lowest eigenvalue is ``1 - p``
    with eigenfield proportional to ``S``.

    Raises:
        ValueError: if ``S`` is not strictly positive on the interior.
    """
    op = laplacian(S.domain) if op is None else op
    s_int = S.interior
    if np.any(s_int <= 0):
        raise ValueError("linearized spectrum needs S > 0 on the interior")
    weight = s_int ** (p - 1.0)
    lam, vecs, res = _block_inverse_iteration(op, weight, p, k)
    fields = [S.domain.from_interior(_fix_sign(v)) for v in vecs.T]
    return SpectrumSet(
        "weighted_linearized", lam, fields, S.domain.from_interior(weight),
        "L2(S^(p-1))", p=p, reference=S, residuals=res,
    )


def to_relative_basis(spec: SpectrumSet, S: ScalarField | None = None) -> SpectrumSet:
    """Divide each eigenfield by ``S``: ``e_i = ẽ_i / S`` on interior nodes.

    The result is orthonormal in the ``S^{p+1}``-weighted product. Boundary
    values are set to zero since both numerator and denominator vanish there.
    """
    S = spec.reference if S is None else S
    if S is None or spec.p is None:
        raise ValueError("relative basis needs the steady state and exponent")
    s_int = S.interior
    if np.any(s_int <= 0):
        raise ValueError("S must be positive on the interior")
    fields = [S.domain.from_interior(f.interior / s_int) for f in spec.fields]
    weight = S.domain.from_interior(s_int ** (spec.p + 1.0))
    return SpectrumSet(
        spec.problem_kind, spec.eigenvalues.copy(), fields, weight, "L2(S^(p+1))",
        p=spec.p, reference=S, residuals=spec.residuals,
    )
