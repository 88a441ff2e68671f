"""Property checks over randomly drawn inputs."""

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from conftest import PENDULUM_TERMS, RESONANT_TERMS
from twistorbits.action import OrbitSequence, action_value, geodesic_seed
from twistorbits.dynamics import HamiltonianSpec, blend, flow_batch, symplectic_defect
from twistorbits.geometry import MetricField, cometric, distance_with_partials, h0_batch
from twistorbits.linking import StandardLike, diagonal_gradient, fiber_intersections
from twistorbits.stability import floquet_via_M
from twistorbits.twist import decompose

unit = st.floats(0.0, 1.0, allow_nan=False)
coord = st.floats(-3.0, 3.0, allow_nan=False)
small_p = st.floats(-0.35, 0.35, allow_nan=False)

CONFORMAL2 = MetricField(2, "conformal", (((1, 0), 0.1), ((1, 1), 0.05)), mode="lifted")
PENDULUM = HamiltonianSpec(MetricField(1), 0.45, 0.1, PENDULUM_TERMS, bump="flat-top")
RESONANT = HamiltonianSpec(MetricField(1), 0.45, 0.05, RESONANT_TERMS, bump="flat-top")
FREE = decompose(HamiltonianSpec(MetricField(1), 0.45), N=4)


@given(coord, coord, st.integers(-3, 3), st.integers(-3, 3))
def test_cometric_periodic_and_positive(x, y, i, j):
    q = np.array([x, y])
    A = cometric(CONFORMAL2, q)
    assert np.min(np.linalg.eigvalsh(A)) > 0
    assert np.array_equal(A, A.T)
    assert np.max(np.abs(cometric(CONFORMAL2, q + [i, j]) - A)) < 1e-12


@given(unit, unit, small_p, small_p, st.floats(0.1, 0.9))
def test_geodesic_flow_property_and_energy(x, y, px, py, a):
    q, p = np.array([[x, y]]), np.array([[px, py]])
    Q1, P1, _, _ = h0_batch(CONFORMAL2, q, p, a)
    Q2, P2, _, _ = h0_batch(CONFORMAL2, Q1, P1, 1.0 - a)
    Q, P, _, _ = h0_batch(CONFORMAL2, q, p, 1.0)
    assert np.max(np.abs(np.c_[Q2 - Q, P2 - P])) < 1e-9
    drift = abs(CONFORMAL2.norm(Q[0], P[0]) - CONFORMAL2.norm(q[0], p[0]))
    assert drift < 1e-10


@given(unit, unit, st.floats(0.05, 0.3), st.floats(0.0, 2 * np.pi))
def test_distance_partials_are_unit_momenta(x, y, r, theta):
    q = np.array([x, y])
    Q = q + r * np.array([np.cos(theta), np.sin(theta)])
    D, d1, d2 = distance_with_partials(CONFORMAL2, q, Q)
    assert D > 0
    # the partials are unit covectors in the cometric norm at each end
    assert abs(CONFORMAL2.norm(q, d1) - 1) < 1e-8 and abs(CONFORMAL2.norm(Q, d2) - 1) < 1e-8


@given(unit, small_p, st.floats(0.0, 1.0))
def test_flow_is_symplectic(q, p, t0):
    _, _, jac, _ = flow_batch(RESONANT, t0, t0 + 1.0, [[q]], [[p]], with_jac=True)
    assert symplectic_defect(jac[0]) < 1e-8


@given(unit, st.floats(0.405, 0.45), st.sampled_from([-1.0, 1.0]))
def test_collar_flow_is_free(q, r, sign):
    p = np.array([[sign * r]])
    Q, P, _, _ = flow_batch(PENDULUM, 0.0, 1.0, [[q]], p)
    assert abs(Q[0, 0] - (q + p[0, 0])) < 1e-10 and abs(P[0, 0] - p[0, 0]) < 1e-12


@given(st.floats(0.0, 1.0), st.lists(st.tuples(unit, small_p), min_size=1, max_size=5))
def test_blend_is_affine(lam, pts):
    q = np.array([[a] for a, _ in pts])
    p = np.array([[b] for _, b in pts])
    H0 = blend(PENDULUM, 0.0).value(q, p)
    mixed = (1 - lam) * H0 + lam * PENDULUM.value(q, p)
    assert np.max(np.abs(blend(PENDULUM, lam).value(q, p) - mixed)) < 1e-14


@given(unit, st.integers(1, 3), st.integers(-2, 2), st.lists(st.floats(-0.02, 0.02), min_size=8, max_size=8))
def test_action_shift_and_translation_invariance(q0, d, j, noise):
    m = [1] if d == 3 else [0]
    base = geodesic_seed(FREE, [q0], m, d)
    q = base + np.resize(noise, base.shape[0])[:, None]
    seq = OrbitSequence(q, m, d, FREE)
    W = action_value(seq)
    assert abs(action_value(seq.shifted()) - W) < 1e-12
    assert abs(action_value(seq.translated([j])) - W) < 1e-12


@given(unit, st.lists(st.floats(-0.02, 0.02), min_size=8, max_size=8))
def test_free_multipliers_pair_up(q0, noise):
    q = geodesic_seed(FREE, [q0], [0], 1) + np.asarray(noise)[:, None]
    lam = floquet_via_M(OrbitSequence(q, [0], 1, FREE)).multipliers
    # any sequence, critical or not, gives a palindromic characteristic polynomial
    assert abs(np.prod(lam) - 1) < 1e-6


@given(unit, st.floats(0.0, 0.08))
def test_standard_like_fibers_meet_once(q, eps):
    pts = fiber_intersections(StandardLike((eps,)), [q], 0.45)
    assert len(pts) == 1 and pts[0].sign == 1


@given(unit, st.floats(0.01, 0.08))
def test_diagonal_gradient_vanishes_only_at_fixed_points(q, eps):
    F = StandardLike((eps,))
    g = diagonal_gradient(F, np.array([q]))
    # P - p on the diagonal equals eps * sin(2 pi q) for this family
    assert abs(g[0] - eps * np.sin(2 * np.pi * q)) < 1e-12
