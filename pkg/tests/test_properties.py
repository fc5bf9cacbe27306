"""Hypothesis checks of structural invariants."""
from __future__ import annotations

import math

import numpy as np
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fdelab.audit import incomplete_beta, project_relative_error
from fdelab.discretization import build_domain, laplacian
from fdelab.evolution import Trajectory, step_cdp, transform_from_rescaled, transform_to_rescaled
from fdelab.spectral import linearized_spectrum, to_relative_basis
from fdelab.steady_states import energy_F, rayleigh_Q, separable_amplitude, solve_lane_emden
from oracles import amplitude_step

D1 = build_domain(1, [1.0], [24])
D2 = build_domain(2, [1.0, 1.5], [6, 9])
SS = solve_lane_emden(build_domain(1, [1.0], [48]), 2.0)
REL = to_relative_basis(linearized_spectrum(SS.S, 2.0, 5))
STEADY_32 = {p: solve_lane_emden(build_domain(1, [1.0], [32]), p).S for p in (2.0, 3.0, 5.0)}

SEEDS = st.integers(0, 2**32 - 1)
EXPONENTS = st.floats(1.2, 6.0)


def positive_field(domain, seed):
    rng = np.random.default_rng(seed)
    vals = np.zeros(domain.n_nodes)
    vals[domain.interior_index] = rng.uniform(0.05, 3.0, len(domain.interior_index))
    return domain.zeros().with_values(vals)


@settings(max_examples=40, deadline=None)
@given(SEEDS, st.sampled_from([D1, D2]))
def test_laplacian_symmetric_positive(seed, domain):
    op = laplacian(domain)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, op.size))
    assert abs(u @ op.matvec(v) - v @ op.matvec(u)) <= 1e-10 * np.linalg.norm(op.matvec(u)) * np.linalg.norm(v)
    assert u @ op.matvec(u) > 0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.02, 0.95), st.floats(0.3, 4.0), st.floats(0.3, 4.0))
def test_beta_recurrence(z, a, b):
    # y + (1 - y) = 1 splits the integrand
    lhs = incomplete_beta(z, a, b)
    rhs = incomplete_beta(z, a + 1, b) + incomplete_beta(z, a, b + 1)
    assert abs(lhs - rhs) <= 1e-10 * lhs


@settings(max_examples=20, deadline=None)
@given(st.floats(0.02, 0.95), st.floats(1.0, 4.0), st.floats(1.0, 4.0))
def test_beta_against_quad(z, a, b):
    ref, _ = integrate.quad(lambda y: y ** (a - 1) * (1 - y) ** (b - 1), z, 1, epsabs=0, epsrel=1e-13)
    assert abs(incomplete_beta(z, a, b) - ref) <= 1e-10 * ref


@settings(max_examples=30, deadline=None)
@given(SEEDS, EXPONENTS, st.floats(0.1, 10.0))
def test_rayleigh_invariant_energy_homogeneous(seed, p, c):
    u = positive_field(D1, seed)
    assert math.isclose(rayleigh_Q(u * c, p), rayleigh_Q(u, p), rel_tol=1e-11)
    # F is a difference of a degree-2 and a degree-(p+1) term
    f1, f2 = energy_F(u, p), energy_F(u * 2.0, p)
    quad = (f2 - 2 ** (p + 1) * f1) / (4 - 2 ** (p + 1))
    assert math.isclose(energy_F(u * c, p), c**2 * quad + c ** (p + 1) * (f1 - quad),
                        rel_tol=1e-8, abs_tol=1e-10 * (abs(quad) + abs(f1 - quad)) * max(c**2, c ** (p + 1)))


@settings(max_examples=25, deadline=None)
@given(SEEDS, EXPONENTS, st.floats(-3.0, 3.0))
def test_rescaling_round_trip(seed, p, T):
    rng = np.random.default_rng(seed)
    times = T - np.sort(rng.uniform(0.01, 4.0, 6))[::-1]
    snaps = rng.uniform(0, 3, (6, D1.n_nodes))
    snaps[:, [0, -1]] = 0
    traj = Trajectory(D1, p, "cdp", times, snaps, {})
    back = transform_from_rescaled(transform_to_rescaled(traj, p, T), p, T)
    np.testing.assert_allclose(back.times, times, rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(back.snapshots, snaps, rtol=1e-11, atol=1e-300)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=5, max_size=5))
def test_projection_recovers_coefficients(c):
    c = 1e-3 * np.array(c)
    g = sum(ck * f.values for ck, f in zip(c, REL.fields))
    proj = project_relative_error(SS.S.with_values(SS.S.values * (1 + g)), SS.S, REL)
    np.testing.assert_allclose(proj.coefficients, c, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 5.0), st.sampled_from([2.0, 3.0, 5.0]), st.floats(1e-4, 0.3))
def test_separable_amplitude_step(a, p, dt):
    # one implicit step of a(t) S equals the scalar recursion
    S = STEADY_32[p]
    nxt = step_cdp(S * a, p, dt)
    np.testing.assert_allclose(nxt.interior, amplitude_step(a, p, dt) * S.interior, rtol=1e-9)


@settings(max_examples=40, deadline=None)
@given(EXPONENTS, st.floats(0.1, 5.0), st.floats(0.0, 0.99))
def test_separable_amplitude_affine_power(p, T, frac):
    t = frac * T
    y = separable_amplitude(p, T, t) ** (p - 1)
    assert math.isclose(y, (p - 1) * (T - t) / p, rel_tol=1e-12)
