"""Φ1-weighted Sobolev ratio over a corpus of Dirichlet test functions."""

from __future__ import annotations

from typing import Callable

import numpy as np

from fdelab.audit.records import AuditRecord, constant_margin, make_record
from fdelab.discretization import Domain, ScalarField, gradient_energy, laplacian, weighted_norm
from fdelab.spectral import principal_eigenpair

TestFunction = Callable[..., np.ndarray]
BOUNDARY_WIDTHS = (0.05, 0.1, 0.2)


def _bubble(xi):
    return xi * (1.0 - xi)


def _boundary_bump(delta: float, side: int):
    def f(xi):
        d = xi if side == 0 else 1.0 - xi
        return (d / delta) * np.exp(1.0 - d / delta) * (1.0 - (1.0 - d) ** 8)
    return f


def _sine_series(coeffs: np.ndarray):
    k = np.arange(1, len(coeffs) + 1)

    def f(xi):
        return np.sin(np.pi * np.multiply.outer(xi, k)) @ coeffs
    return f


def sobolev_corpus(dim: int, seed: int = 0, count: int = 200) -> list[tuple[str, TestFunction]]:
    """Named test functions on the unit cube, zero on its boundary.

    Structured members come first (sine modes, polynomial bubbles and
    boundary-concentrated bumps); the rest are random sine series drawn
    from ``seed``. Functions take normalized coordinates ``ξ = x / L``.
    """
    one_d: list[tuple[str, Callable]] = []
    for k in range(1, 7):
        one_d.append((f"sine{k}", lambda xi, k=k: np.sin(k * np.pi * xi)))
    for m in range(1, 5):
        one_d.append((f"bubble{m}", lambda xi, m=m: _bubble(xi) ** m))
    for delta in BOUNDARY_WIDTHS:
        for side in (0, 1):
            one_d.append((f"edge{side}_w{delta:g}", _boundary_bump(delta, side)))

    corpus: list[tuple[str, TestFunction]] = []
    if dim == 1:
        corpus += [(name, (lambda g: lambda x: g(x))(g)) for name, g in one_d]
    else:
        for name, g in one_d:
            corpus.append((f"{name}*bubble", (lambda g: lambda x, y: g(x) * _bubble(y))(g)))
            corpus.append((f"bubble*{name}", (lambda g: lambda x, y: _bubble(x) * g(y))(g)))
    rng = np.random.default_rng(seed)
    k = np.arange(1, 9)
    i = 0
    while len(corpus) < count:
        if dim == 1:
            c = rng.standard_normal(8) / k**2
            corpus.append((f"random{i}", _sine_series(c)))
        else:
            cx, cy = rng.standard_normal(8) / k**2, rng.standard_normal(8) / k**2
            fx, fy = _sine_series(cx), _sine_series(cy)
            corpus.append((f"random{i}", (lambda fx, fy: lambda x, y: fx(x) * fy(y))(fx, fy)))
        i += 1
    return corpus[:count]


def sample_corpus(domain: Domain, corpus) -> list[tuple[str, ScalarField]]:
    ext = domain.extents
    out = []
    for name, f in corpus:
        field = domain.evaluate(lambda *xs, f=f: f(*(x / L for x, L in zip(xs, ext))))
        out.append((name, field))
    return out


def sobolev_ratio(f: ScalarField, phi1: ScalarField, q_star: float) -> float:
    """``|f|_{L^{q*}_Φ1}^2 / ∫ |∇f|^2 Φ1``."""
    denom = gradient_energy(f, phi1)
    if denom <= 0:
        raise ValueError("test function has zero weighted Dirichlet energy")
    return weighted_norm(f, q_star, phi1) ** 2 / denom


def check_weighted_sobolev(fields: list, phi1: ScalarField, q_star: float) -> AuditRecord:
    """Empirical constant: the largest ratio over the supplied fields.

    ``fields`` holds ``(name, ScalarField)`` pairs or bare fields.
    """
    cid = "weighted_sobolev"
    pairs = [f if isinstance(f, tuple) else (f"field{i}", f) for i, f in enumerate(fields)]
    if not pairs:
        raise ValueError("empty test corpus")
    ratios = np.array([sobolev_ratio(f, phi1, q_star) for _, f in pairs])
    k = int(np.argmax(ratios))
    C = float(ratios[k])
    return make_record(cid, "Phi1-weighted Sobolev inequality", C, constant_margin(C),
                       {"field": pairs[k][0]})


def check_weighted_sobolev_on(domain: Domain, q_star: float, seed: int = 0,
                              count: int = 200) -> AuditRecord:
    _, phi = principal_eigenpair(laplacian(domain))
    fields = sample_corpus(domain, sobolev_corpus(domain.dim, seed, count))
    return check_weighted_sobolev(fields, phi, q_star)
