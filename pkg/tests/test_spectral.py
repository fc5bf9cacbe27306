from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.linalg import eigh

from fdelab.audit.modes import project_relative_error
from fdelab.discretization import build_domain, laplacian
from fdelab.spectral import (
    dirichlet_spectrum,
    hopf_ratio,
    linearized_spectrum,
    principal_eigenpair,
    to_relative_basis,
)
from fdelab.steady_states import solve_lane_emden
from oracles import dense_laplacian_1d, discrete_lambda1_1d

# [DERIVED] lowest five eigenvalues of the dense generalized problem at 64 cells,
# built on the scipy-root steady state (tests/oracles.py)
DENSE_LINEARIZED_64 = {
    2.0: [-1.0, 2.9967874859706005, 9.977968640035657, 19.922011650988566, 32.7981918977485],
    3.0: [-2.0, 2.9957032905819774, 11.965458624269356, 24.87096230827141, 41.65674294807255],
    5.0: [-4.0, 2.992873569777503, 15.92392933371248, 34.696201205145954, 59.16647279001034],
}


def sign_changes(v, rel=1e-8):
    v = v[np.abs(v) > rel * np.max(np.abs(v))]
    return int(np.sum(np.sign(v[1:]) != np.sign(v[:-1])))


@pytest.mark.parametrize("n", [16, 64, 256])
def test_lambda1_closed_form(n):
    lam, phi = principal_eigenpair(laplacian(build_domain(1, [1.0], [n])))
    assert math.isclose(lam, discrete_lambda1_1d(n), rel_tol=1e-10)
    assert phi.values.max() == 1.0
    assert np.all(phi.interior > 0)


def test_lambda1_dense_oracle_16():
    lam, _ = principal_eigenpair(laplacian(build_domain(1, [1.0], [16])))
    assert math.isclose(lam, np.linalg.eigvalsh(dense_laplacian_1d(16))[0], rel_tol=1e-10)


def test_lambda1_convergence_order():
    errs = [abs(principal_eigenpair(laplacian(build_domain(1, [1.0], [n])))[0] - math.pi**2)
            for n in (16, 32, 64, 128)]
    assert np.all(np.log2(np.array(errs[:-1]) / errs[1:]) >= 1.9)


def test_lambda1_square_tends_to_two_pi_squared():
    errs = [abs(principal_eigenpair(laplacian(build_domain(2, [1.0, 1.0], [n, n])))[0] - 2 * math.pi**2)
            for n in (8, 16, 32)]
    assert errs[-1] < 0.02 and errs[0] / errs[1] > 3.5


def test_hopf_ratio_small_angle_and_envelope():
    d = build_domain(1, [1.0], [512])
    _, phi = principal_eigenpair(laplacian(d))
    lo, hi = hopf_ratio(phi)
    assert math.isclose(lo, 2.0, rel_tol=1e-12)          # center: 1 / 0.5
    assert math.isclose(hi, math.sin(math.pi / 512) * 512, rel_tol=1e-12)
    assert abs(hi - math.pi) < 1e-4
    assert hi / lo <= 2.0


def test_hopf_ratio_refinement_stable():
    pairs = [hopf_ratio(principal_eigenpair(laplacian(build_domain(1, [1.0], [n])))[1]) for n in (32, 64)]
    assert abs(pairs[0][0] / pairs[1][0] - 1) < 0.1 and abs(pairs[0][1] / pairs[1][1] - 1) < 0.1


def test_scaling_domain_length():
    lam1, phi1 = principal_eigenpair(laplacian(build_domain(1, [1.0], [64])))
    lam2, phi2 = principal_eigenpair(laplacian(build_domain(1, [2.0], [64])))
    assert math.isclose(lam2, lam1 / 4, rel_tol=1e-12)
    (lo1, hi1), (lo2, hi2) = hopf_ratio(phi1), hopf_ratio(phi2)
    assert math.isclose(lo2, lo1 / 2, rel_tol=1e-12) and math.isclose(hi2, hi1 / 2, rel_tol=1e-12)


def test_dirichlet_spectrum_matches_closed_form():
    n = 64
    spec = dirichlet_spectrum(laplacian(build_domain(1, [1.0], [n])), 5)
    h = 1 / n
    expected = [4 / h**2 * math.sin(k * math.pi * h / 2) ** 2 for k in range(1, 6)]
    np.testing.assert_allclose(spec.eigenvalues, expected, rtol=1e-10)
    np.testing.assert_allclose(spec.gram(), np.eye(5), atol=1e-8)


@pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
def test_linearized_against_dense_oracle(p):
    d = build_domain(1, [1.0], [64])
    ss = solve_lane_emden(d, p)
    spec = linearized_spectrum(ss.S, p, 5)
    np.testing.assert_allclose(spec.eigenvalues, DENSE_LINEARIZED_64[p], rtol=1e-8, atol=1e-8)
    assert abs(spec.eigenvalues[0] - (1 - p)) <= 1e-8
    s = ss.S.interior
    e0 = spec.fields[0].interior
    assert e0 @ s / (np.linalg.norm(e0) * np.linalg.norm(s)) >= 1 - 1e-10
    np.testing.assert_allclose(spec.gram(), np.eye(5), atol=1e-8)
    assert np.all(np.diff(spec.eigenvalues) >= 0)
    assert np.all(spec.residuals <= 1e-8)


def test_linearized_dense_generalized_eigensolve_2d():
    # [DERIVED] 16x16 square, p = 2: dense scipy eigh on the same pencil
    d = build_domain(2, [1.0, 1.0], [16, 16])
    ss = solve_lane_emden(d, 2.0)
    spec = linearized_spectrum(ss.S, 2.0, 5)
    w = ss.S.interior
    A = laplacian(d).matrix.toarray()
    dense = eigh(A - 2 * np.diag(w), np.diag(w), eigvals_only=True)[:5]
    np.testing.assert_allclose(spec.eigenvalues, dense, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(spec.eigenvalues,
                               [-1, 1.1186107978817357, 1.1186107978817357, 4.143276452351435,
                                4.224561564265916], rtol=1e-6, atol=1e-8)
    assert len(spec.blocks()["neutral"]) == 0


def test_courant_sign_changes():
    ss = solve_lane_emden(build_domain(1, [1.0], [128]), 3.0)
    spec = linearized_spectrum(ss.S, 3.0, 5)
    assert [sign_changes(f.interior) for f in spec.fields] == [0, 1, 2, 3, 4]


def test_relative_basis_orthonormal_and_projection():
    ss = solve_lane_emden(build_domain(1, [1.0], [128]), 2.0)
    spec = linearized_spectrum(ss.S, 2.0, 6)
    rel = to_relative_basis(spec)
    np.testing.assert_allclose(rel.gram(), np.eye(6), atol=1e-8)
    e0 = rel.fields[0].interior
    np.testing.assert_allclose(e0 / e0[0], 1.0, atol=1e-10)
    eps = 1e-3
    v = ss.S.with_values(ss.S.values * (1 + eps * rel.fields[2].values))
    proj = project_relative_error(v, ss.S, rel)
    target = np.zeros(6)
    target[2] = eps
    np.testing.assert_allclose(proj.coefficients, target, atol=1e-8 * eps + 1e-14)


def test_linearized_rejects_nonpositive_weight():
    d = build_domain(1, [1.0], [16])
    with pytest.raises(ValueError):
        linearized_spectrum(d.zeros(), 2.0, 3)
