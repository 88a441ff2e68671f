import numpy as np
import pytest

from oracles import central_difference, direct_fixed_points, flat_free_hessian, time_d_map
from twistorbits.action import (
    OrbitSequence,
    action_differential,
    action_gradient,
    action_hessian,
    action_value,
    block_status,
    evaluate_sequence,
    find_critical,
    geodesic_seed,
    gradient_flow_step,
    pair_distance,
    sequence_from_orbit,
)
from twistorbits.dynamics import HamiltonianSpec, segment_batch
from twistorbits.errors import ExcludedByHypothesisError, InvalidInputError, OutOfDomainError
from twistorbits.geometry import CotangentPoint, MetricField
from twistorbits.twist import decompose


def random_sequence(decomp, rng, m=None, d=1, spread=0.25):
    """A sequence in the block: walk the stages from a random phase point with small momenta."""
    n = decomp.n
    m = np.zeros(n, dtype=int) if m is None else np.asarray(m)
    base = geodesic_seed(decomp, rng.uniform(0, 1, n), m, d)
    return OrbitSequence(base + rng.uniform(-spread, spread, base.shape) * 0.1, m, d, decomp)


def test_constant_sequence_has_zero_action(free_decomp):
    seq = OrbitSequence(np.full((8, 1), 0.3), [0], 1, free_decomp)
    assert action_value(seq) == 0.0
    assert np.array_equal(action_gradient(seq), np.zeros((8, 1)))


@pytest.mark.parametrize("m,d", [(1, 3), (1, 4), (2, 5)])
def test_rotation_action_is_d_half_p_squared(free_decomp, m, d):
    seq = OrbitSequence(geodesic_seed(free_decomp, [0.1], [m], d), [m], d, free_decomp)
    p = m / d
    assert action_value(seq) == pytest.approx(d * p * p / 2, abs=1e-14)
    assert np.max(np.abs(evaluate_sequence(seq).p - p)) < 1e-14


def test_action_matches_continuous_orbit(resonant_decomp, resonant13):
    orbits = resonant13
    assert orbits
    H = resonant_decomp.hamiltonian
    for seq in orbits:
        z = seq.phase_point()
        _, _, _, S = segment_batch(H, 0.0, 3.0, z.q[None], z.p[None])
        assert abs(S[0] - seq.action) < 1e-6


def test_sequence_shape_validated(free_decomp):
    with pytest.raises(InvalidInputError):
        OrbitSequence(np.zeros((7, 1)), [0], 1, free_decomp)
    with pytest.raises(InvalidInputError):
        OrbitSequence(np.zeros((8, 1)), [0.5], 1, free_decomp)


def test_out_of_domain_names_pair(free_decomp):
    q = np.zeros((8, 1))
    q[3:] = 0.8
    with pytest.raises(OutOfDomainError) as err:
        action_value(OrbitSequence(q, [0], 1, free_decomp))
    assert 2 in err.value.indices


def test_gradient_finite_difference(pendulum_decomp, rng):
    for _ in range(3):
        seq = random_sequence(pendulum_decomp, rng)
        g = action_differential(seq)
        fd = central_difference(lambda x: action_value(OrbitSequence(x, seq.m, 1, pendulum_decomp)), seq.q, 1e-6)
        assert np.max(np.abs(fd.ravel() - g.ravel())) / np.max(np.abs(g)) < 1e-5


def test_gradient_commutes_with_shift(resonant_decomp, rng):
    seq = random_sequence(resonant_decomp, rng, m=[1], d=3)
    span = resonant_decomp.period_length
    shifted = action_gradient(seq.shifted())
    assert np.max(np.abs(shifted - np.roll(action_gradient(seq), -span, axis=0))) < 1e-9


def test_shift_and_translation_keep_action(resonant_decomp, rng):
    seq = random_sequence(resonant_decomp, rng, m=[1], d=3)
    W = action_value(seq)
    assert abs(action_value(seq.shifted()) - W) < 1e-12
    assert abs(action_value(seq.translated([2])) - W) < 1e-12


def test_flat_hessian_against_hand_assembly():
    H0 = HamiltonianSpec(MetricField(1), 0.45)
    dec = decompose(H0, N=2)
    seq = OrbitSequence(np.full((4, 1), 0.2), [0], 1, dec)
    hess = action_hessian(seq)
    oracle = flat_free_hessian([-0.5, 1.0, -0.5, 1.0], 1)
    assert np.max(np.abs(hess.matrix - oracle)) < 1e-12
    ev = np.linalg.eigvalsh(hess.matrix)
    assert np.sum(np.abs(ev) < 1e-8) == 1


def test_hessian_finite_difference_and_symmetry(pendulum_decomp, pendulum_census):
    seq = pendulum_census[0]
    hess = action_hessian(seq)
    assert hess.asymmetry < 1e-8
    fd = central_difference(
        lambda x: action_differential(OrbitSequence(x, seq.m, 1, pendulum_decomp)), seq.q, 1e-6
    )
    assert np.max(np.abs(fd - hess.matrix)) / np.max(np.abs(hess.matrix)) < 1e-4


def test_interior_status_for_constant(free_decomp):
    status = block_status(OrbitSequence(np.full((8, 1), 0.4), [0], 1, free_decomp))
    assert status.in_block and status.exit_direction == "interior" and not status.faces


def _stretched(decomp, k, C):
    a = decomp.stages[k].nominal_time
    q = np.zeros((decomp.period_length, 1))
    q[k + 1:] = a * C
    return OrbitSequence(q, [0], 1, decomp)


@pytest.mark.parametrize("k,direction", [(1, "positive-time"), (0, "negative-time")])
def test_stretched_face_exits(free_decomp, k, direction):
    C = free_decomp.hamiltonian.C
    seq = _stretched(free_decomp, k, C)
    status = block_status(seq)
    assert k in status.faces
    assert status.exit_direction in (direction, "both")
    assert status.parity_ok
    # one explicit step of the ascent flow moves the face the way the sign says
    before = pair_distance(seq, k)
    after = pair_distance(gradient_flow_step(seq, 1e-4), k)
    assert np.sign(after - before) == np.sign(status.rates[k])


def test_convex_stages_repel():
    H0 = HamiltonianSpec(MetricField(1), 0.45)
    dec = decompose(H0, N=4, mode="convex")
    seq = _stretched(dec, 1, 0.45)
    status = block_status(seq)
    assert status.exit_direction == "positive-time"


def test_boundary_cycle_is_excluded():
    H0 = HamiltonianSpec(MetricField(1, mode="lifted"), 0.5)
    dec = decompose(H0, N=2)
    seq = OrbitSequence(geodesic_seed(dec, [0.0], [1], 2), [1], 2, dec)
    with pytest.raises(ExcludedByHypothesisError):
        block_status(seq)


def test_free_fixed_points_form_continuum(free_decomp):
    found = find_critical(free_decomp, [0], 1)
    assert len(found) == 8
    for seq in found:
        assert np.max(np.abs(seq.q - seq.q[0])) < 1e-12
        assert np.max(np.abs(action_gradient(seq))) == 0.0


def test_pendulum_fixed_points_match_direct_newton(pendulum_decomp, pendulum_census):
    H = pendulum_decomp.hamiltonian
    found = pendulum_census
    starts = [np.array([q, p]) for q in np.linspace(0, 1, 8, endpoint=False) for p in (-0.2, 0.0, 0.2)]
    direct = direct_fixed_points(H, starts)
    assert len(found) >= 2
    for seq in found:
        z = seq.phase_point().as_array()
        Fz, _ = time_d_map(H, z, 1)
        assert np.max(np.abs(Fz - z)) < 1e-8
        gaps = [np.max(np.abs(np.r_[(z[0] - w[0] + 0.5) % 1 - 0.5, z[1] - w[1]])) for w in direct]
        assert min(gaps) < 1e-8
    # every directly found fixed point at p = 0 is among the critical sequences
    qs = sorted(np.mod(s.q[0, 0], 1.0) % 1.0 for s in found if abs(s.p[0, 0]) < 1e-9)
    assert np.allclose(qs, [0.0, 0.5], atol=1e-9)


def test_direct_fixed_point_seeds_critical_sequence(pendulum_decomp):
    H = pendulum_decomp.hamiltonian
    z = direct_fixed_points(H, [np.array([0.47, 0.01])])[0]
    seq = sequence_from_orbit(pendulum_decomp, CotangentPoint(z[:1], z[1:]), [0], 1)
    assert np.max(np.abs(action_gradient(seq))) < 1e-10


def test_free_rotation_search(free_decomp):
    found = find_critical(free_decomp, [1], 3)
    assert found
    for seq in found:
        assert np.max(np.abs(seq.p - 1 / 3)) < 1e-12
        assert seq.action == pytest.approx(1 / 6, abs=1e-12)


def test_found_orbits_close_up(resonant_decomp, resonant13):
    H = resonant_decomp.hamiltonian
    for seq in resonant13:
        z = seq.phase_point().as_array()
        Fz, _ = time_d_map(H, z, 3)
        assert np.max(np.abs(Fz - z - np.array([1.0, 0.0]))) < 1e-8
        assert np.max(H.metric.norm(seq.q, seq.p)) < H.C - 1e-6


def test_resonant_orbits_dedup_over_shift(resonant13):
    found = resonant13
    assert len(found) == 2
    assert found[0].action < found[1].action


def test_rotation_class_must_fit_block(free_decomp):
    with pytest.raises(InvalidInputError):
        find_critical(free_decomp, [1], 2)


@pytest.mark.parametrize("metric_fixture", ["flat1", "flat2", "conformal1", "conformal2"])
def test_kernel_dimension_on_constant_sequences(request, metric_fixture, rng):
    metric = request.getfixturevalue(metric_fixture)
    dec = decompose(HamiltonianSpec(metric, 0.3), N=2, grid=(6, 6))
    for q0 in rng.uniform(0, 1, (3, metric.n)):
        seq = OrbitSequence(np.tile(q0, (dec.period_length, 1)), [0] * metric.n, 1, dec)
        ev = np.linalg.eigvalsh(action_hessian(seq).matrix)
        assert np.sum(np.abs(ev) < 1e-8) == metric.n
        assert np.all(np.abs(ev[np.abs(ev) >= 1e-8]) > 1e-4)
