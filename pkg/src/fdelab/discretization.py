"""
Uniform tensor grids on rectangles with zero Dirichlet data.

Nodes are stored flattened in row-major (C) order over the node shape
``(cells_0 + 1, ..., cells_{d-1} + 1)``. Every discrete operator acts on the
interior nodes only; boundary values of Dirichlet fields are pinned to zero.

The sign convention throughout is that :class:`LaplacianOperator` represents
``-Δ_h`` (symmetric positive definite), so ``Δ_h f = -A f``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded, solveh_banded
from scipy.sparse.linalg import LinearOperator as _ScipyLinearOperator
from scipy.sparse.linalg import cg, splu

from fdelab.errors import ConvergenceError, DomainMismatchError

MIN_CELLS = 4
POISSON_RESIDUAL_TOL = 1e-10
CG_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Domain:
    """Discretized rectangle ``(0, L_0) x ... x (0, L_{d-1})``.

    Attributes:
        dim: spatial dimension, 1 or 2.
        extents: side lengths.
        cells: number of cells per axis.
        spacing: mesh width per axis.
        nodes: ``(N, dim)`` array of node coordinates.
        interior_mask: True for interior nodes.
        quad_weights: cell volume on interior nodes, 0 on the boundary.
        boundary_distance: distance to the nearest face of the rectangle.
    """

    dim: int
    extents: tuple[float, ...]
    cells: tuple[int, ...]
    spacing: tuple[float, ...]
    nodes: np.ndarray
    interior_mask: np.ndarray
    quad_weights: np.ndarray
    boundary_distance: np.ndarray

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.cells)

    @property
    def interior_shape(self) -> tuple[int, ...]:
        return tuple(c - 1 for c in self.cells)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def measure(self) -> float:
        return float(np.prod(self.extents))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Per-axis coordinate arrays, each of length ``n_nodes``."""
        return tuple(self.nodes[:, k] for k in range(self.dim))

    def zeros(self) -> ScalarField:
        return ScalarField(self, np.zeros(self.n_nodes))

    def field(self, values, dirichlet_zero: bool = True) -> ScalarField:
        return ScalarField(self, np.asarray(values, dtype=float), dirichlet_zero)

    def from_interior(self, vec) -> ScalarField:
        """Embed interior values into a Dirichlet field."""
        values = np.zeros(self.n_nodes)
        values[self.interior_index] = vec
        return ScalarField(self, values)

    def evaluate(self, func: Callable[..., np.ndarray]) -> ScalarField:
        """Sample ``func(x, y, ...)`` at the interior nodes; boundary set to 0."""
        values = np.asarray(func(*self.coordinates()), dtype=float)
        values = np.broadcast_to(values, (self.n_nodes,)).copy()
        values[~self.interior_mask] = 0.0
        return ScalarField(self, values)

    def refined(self, factor: int = 2) -> Domain:
        return build_domain(self.dim, self.extents, [c * factor for c in self.cells])

    def nearest_interior_node(self, point: Sequence[float]) -> int:
        idx = self.interior_index
        d2 = np.sum((self.nodes[idx] - np.asarray(point, dtype=float)) ** 2, axis=1)
        return int(idx[np.argmin(d2)])

    def describe(self) -> dict:
        return {"dim": self.dim, "extents": list(self.extents), "cells": list(self.cells)}


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values of a function on a :class:`Domain`."""

    domain: Domain
    values: np.ndarray
    dirichlet_zero: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.domain.n_nodes,):
            raise ValueError(
                f"field has shape {values.shape}, domain has {self.domain.n_nodes} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if self.dirichlet_zero and np.any(values[~self.domain.interior_mask] != 0.0):
            raise ValueError("Dirichlet field has nonzero boundary values")
        object.__setattr__(self, "values", values)

    @property
    def interior(self) -> np.ndarray:
        return self.values[self.domain.interior_index]

    def with_values(self, values) -> ScalarField:
        return ScalarField(self.domain, values, self.dirichlet_zero)

    def _check_same(self, other: ScalarField):
        if other.domain is not self.domain:
            raise DomainMismatchError("fields live on different domains")

    def __add__(self, other: ScalarField) -> ScalarField:
        self._check_same(other)
        return ScalarField(self.domain, self.values + other.values,
                           self.dirichlet_zero and other.dirichlet_zero)

    def __sub__(self, other: ScalarField) -> ScalarField:
        self._check_same(other)
        return ScalarField(self.domain, self.values - other.values,
                           self.dirichlet_zero and other.dirichlet_zero)

    def __mul__(self, c: float) -> ScalarField:
        return ScalarField(self.domain, float(c) * self.values, self.dirichlet_zero)

    __rmul__ = __mul__

    def __neg__(self) -> ScalarField:
        return self * -1.0

    def power(self, r: float) -> ScalarField:
        """Pointwise ``|f|^r``."""
        return ScalarField(self.domain, np.abs(self.values) ** r, self.dirichlet_zero)


def build_domain(dim: int, extents: Sequence[float], cells_per_axis: Sequence[int]) -> Domain:
    """Uniform grid on a rectangle with boundary nodes flagged.

    Raises:
        ValueError: for a dimension other than 1 or 2, nonpositive extents,
            or fewer than 4 cells on some axis.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    extents = tuple(float(e) for e in extents)
    cells = tuple(int(c) for c in cells_per_axis)
    if len(extents) != dim or len(cells) != dim:
        raise ValueError("extents and cells_per_axis need one entry per axis")
    if any(e <= 0 for e in extents):
        raise ValueError("extents must be positive")
    if any(c < MIN_CELLS for c in cells):
        raise ValueError(f"need at least {MIN_CELLS} cells per axis, got {cells}")

    spacing = tuple(e / c for e, c in zip(extents, cells))
    axes = [np.linspace(0.0, e, c + 1) for e, c in zip(extents, cells)]
    grids = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)

    interior = np.ones(len(nodes), dtype=bool)
    dist = np.full(len(nodes), np.inf)
    for k, (e, c) in enumerate(zip(extents, cells)):
        idx = np.indices(tuple(n + 1 for n in cells))[k].ravel()
        interior &= (idx > 0) & (idx < c)
        # distance along this axis from the integer index, exact on the grid
        dist = np.minimum(dist, np.minimum(idx, c - idx) * spacing[k])

    weights = np.where(interior, float(np.prod(spacing)), 0.0)
    nodes.setflags(write=False)
    interior.setflags(write=False)
    weights.setflags(write=False)
    dist.setflags(write=False)
    return Domain(dim, extents, cells, spacing, nodes, interior, weights, dist)


def _second_difference(m: int, h: float) -> sp.csr_matrix:
    main = np.full(m, 2.0 / h**2)
    off = np.full(m - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


class LaplacianOperator:
    """The 3-point / 5-point stencil for ``-Δ_h`` on interior nodes.

    ``matrix`` is symmetric positive definite. Linear solves use banded
    elimination in 1D and Jacobi-preconditioned conjugate gradients in 2D.
    """

    def __init__(self, domain: Domain):
        self.domain = domain
        blocks = [_second_difference(c - 1, h) for c, h in zip(domain.cells, domain.spacing)]
        if domain.dim == 1:
            matrix = blocks[0]
        else:
            ix = sp.identity(domain.cells[0] - 1, format="csr")
            iy = sp.identity(domain.cells[1] - 1, format="csr")
            matrix = sp.kron(blocks[0], iy) + sp.kron(ix, blocks[1])
        self.matrix = sp.csr_matrix(matrix)
        self.size = self.matrix.shape[0]

    def __repr__(self):
        return f"LaplacianOperator(cells={self.domain.cells})"

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    @cached_property
    def _lu(self):
        return splu(sp.csc_matrix(self.matrix))

    def _banded(self, scale: float, shift) -> tuple[np.ndarray, np.ndarray]:
        h2 = self.domain.spacing[0] ** 2
        main = np.full(self.size, 2.0 * scale / h2)
        if shift is not None:
            main = main + shift
        off = np.full(self.size, -scale / h2)
        return main, off

    def solve(self, rhs: np.ndarray, *, scale: float = 1.0, shift=None,
              definite: bool = True) -> np.ndarray:
        """Solve ``(scale * A + diag(shift)) x = rhs`` on interior nodes.

        ``definite=False`` selects a factorization that tolerates indefinite
        systems (used by Newton's method for the Lane-Emden problem).
        """
        rhs = np.asarray(rhs, dtype=float)
        if self.domain.dim == 1:
            main, off = self._banded(scale, shift)
            if definite:
                ab = np.vstack([np.r_[0.0, off[:-1]], main])
                try:
                    return solveh_banded(ab, rhs, check_finite=False)
                except np.linalg.LinAlgError as exc:
                    raise ConvergenceError("banded Cholesky failed; matrix not definite") from exc
            ab = np.vstack([np.r_[0.0, off[:-1]], main, np.r_[off[:-1], 0.0]])
            return solve_banded((1, 1), ab, rhs, check_finite=False)

        if shift is None and scale == 1.0 and not definite:
            return self._lu.solve(rhs)
        system = scale * self.matrix
        if shift is not None:
            system = system + sp.diags(np.broadcast_to(shift, (self.size,)))
        system = sp.csr_matrix(system)
        if not definite:
            return splu(sp.csc_matrix(system)).solve(rhs)
        return self._pcg(system, rhs)

    def _pcg(self, system: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
        if not np.any(rhs):
            return np.zeros_like(rhs)
        inv_diag = 1.0 / system.diagonal()
        precond = _ScipyLinearOperator(system.shape, matvec=lambda v: inv_diag * v)
        maxiter = 10 * self.size
        x, info = cg(system, rhs, rtol=CG_RTOL, atol=0.0, maxiter=maxiter, M=precond)
        if info != 0:
            res = np.linalg.norm(system @ x - rhs) / np.linalg.norm(rhs)
            raise ConvergenceError(
                f"conjugate gradients stopped after {maxiter} iterations",
                relative_residual=float(res),
            )
        return x

    def solve_factored(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``A x = rhs`` reusing one sparse factorization (repeated solves)."""
        if self.domain.dim == 1:
            return self.solve(rhs)
        return self._lu.solve(np.asarray(rhs, dtype=float))


@functools.lru_cache(maxsize=64)
def laplacian(domain: Domain) -> LaplacianOperator:
    """Assembled ``-Δ_h`` for ``domain`` (cached per domain instance)."""
    return LaplacianOperator(domain)


def _check_domain(op: LaplacianOperator, f: ScalarField):
    if f.domain is not op.domain:
        raise DomainMismatchError("operator and field are defined on different domains")


def apply_laplacian(op: LaplacianOperator, f: ScalarField) -> ScalarField:
    """Return ``Δ_h f`` (note the sign: ``-op.matrix @ f``)."""
    _check_domain(op, f)
    if not f.dirichlet_zero:
        raise ValueError("apply_laplacian expects a Dirichlet-zero field")
    return op.domain.from_interior(-op.matvec(f.interior))


def solve_poisson(op: LaplacianOperator, rhs: ScalarField) -> ScalarField:
    """Solve ``-Δ_h f = rhs`` with ``f = 0`` on the boundary.

    This is the discrete Green operator. The relative residual is checked
    after the solve and a :class:`ConvergenceError` is raised above 1e-10.
    """
    _check_domain(op, rhs)
    b = rhs.interior
    x = op.solve(b)
    scale = np.linalg.norm(b)
    if scale > 0:
        res = np.linalg.norm(op.matvec(x) - b) / scale
        if not res <= POISSON_RESIDUAL_TOL:
            raise ConvergenceError("Poisson residual above tolerance", relative_residual=float(res))
    return op.domain.from_interior(x)


def green_column(op: LaplacianOperator, node: int) -> ScalarField:
    """``G_h(., y)`` for the interior node ``y``: solve with a unit point load."""
    domain = op.domain
    if not domain.interior_mask[node]:
        raise ValueError(f"node {node} is not an interior node")
    load = np.zeros(domain.n_nodes)
    load[node] = 1.0 / domain.quad_weights[node]
    return solve_poisson(op, ScalarField(domain, load))


def green_kernel_floor(op: LaplacianOperator, phi1: ScalarField, samples: Sequence[int]) -> float:
    """Smallest sampled ratio ``G_h(x, y) / (Φ1(x) Φ1(y))`` over node pairs.

    Raises:
        ConvergenceError: if any ratio is nonpositive, which can only come
            from a broken discretization.
    """
    _check_domain(op, phi1)
    samples = [int(s) for s in samples]
    phi = phi1.values[samples]
    if np.any(phi <= 0):
        raise ValueError("Φ1 must be positive at the sampled nodes")
    floor = np.inf
    for j, y in enumerate(samples):
        column = green_column(op, y).values[samples]
        ratio = column / (phi * phi[j])
        floor = min(floor, float(ratio.min()))
    if not floor > 0:
        raise ConvergenceError("nonpositive Green kernel ratio", floor=floor)
    return floor


def integrate(f: ScalarField) -> float:
    """Cell-volume quadrature of ``f`` over the domain."""
    return float(np.dot(f.domain.quad_weights, f.values))


def inner(f: ScalarField, g: ScalarField, weight: ScalarField | None = None) -> float:
    w = f.domain.quad_weights if weight is None else f.domain.quad_weights * weight.values
    return float(np.dot(w, f.values * g.values))


def weighted_norm(f: ScalarField, r: float, weight: ScalarField | None = None) -> float:
    """``(∫ |f|^r weight dx)^{1/r}`` by cell-volume quadrature.

    ``weight=None`` means the unweighted ``L^r`` norm.
    """
    if not r > 0:
        raise ValueError(f"norm exponent must be positive, got {r}")
    w = f.domain.quad_weights
    if weight is not None:
        if np.any(weight.values < 0):
            raise ValueError("weight must be nonnegative")
        w = w * weight.values
    return float(np.dot(w, np.abs(f.values) ** r)) ** (1.0 / r)


def gradient_energy(f: ScalarField, weight: ScalarField | None = None) -> float:
    """Edge-difference quadrature of ``∫ |∇f|^2 weight dx``.

    Each grid edge contributes ``((f_b - f_a) / h)^2`` times the average of
    the weight at its endpoints and the cell volume. Without a weight this
    equals ``<A f, f>`` exactly (summation by parts).
    """
    domain = f.domain
    vals = f.values.reshape(domain.shape)
    wts = None if weight is None else weight.values.reshape(domain.shape)
    total = 0.0
    for k, h in enumerate(domain.spacing):
        diff = np.diff(vals, axis=k) / h
        if wts is None:
            mid = 1.0
        else:
            lo = [slice(None)] * domain.dim
            hi = [slice(None)] * domain.dim
            lo[k], hi[k] = slice(None, -1), slice(1, None)
            mid = 0.5 * (wts[tuple(lo)] + wts[tuple(hi)])
        # edges along a boundary face contribute zero for Dirichlet fields
        total += float(np.sum(diff**2 * mid))
    return total * domain.cell_volume


def sup_norm(f: ScalarField) -> float:
    return float(np.max(np.abs(f.values)))


def ratio_envelope(f: ScalarField, g: ScalarField) -> tuple[float, float]:
    """(min, max) of ``f / g`` over interior nodes.

    Raises:
        ValueError: if ``g`` is not strictly positive on the interior.
    """
    if f.domain is not g.domain:
        raise DomainMismatchError("fields live on different domains")
    denom = g.interior
    if np.any(denom <= 0):
        raise ValueError("denominator vanishes on the interior")
    ratio = f.interior / denom
    return float(ratio.min()), float(ratio.max())
