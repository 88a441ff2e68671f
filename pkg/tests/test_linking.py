import json

import numpy as np
import pytest

from oracles import central_difference, direct_map_fixed_points
from twistorbits.errors import BoundaryIntersectionError, PreconditionError
from twistorbits.linking import (
    Product,
    ReversedShear,
    Shear,
    StandardLike,
    TranslatedShear,
    diagonal_gradient,
    fiber_intersections,
    fixed_points_via_diagonal,
    linking_condition,
)


@pytest.mark.parametrize("q", [0.0, 0.37, 0.9])
def test_shear_fiber(q):
    pts = fiber_intersections(Shear(), [q], 0.45)
    assert len(pts) == 1 and abs(pts[0].p[0]) < 1e-14 and pts[0].sign == 1


def test_reversed_shear_fiber():
    pts = fiber_intersections(ReversedShear(), [0.2], 0.45)
    assert len(pts) == 1 and abs(pts[0].p[0]) < 1e-14 and pts[0].sign == -1


def test_standard_like_fiber_against_bracketing():
    F = StandardLike((0.05,))
    for q in np.linspace(0, 1, 7, endpoint=False):
        pts = fiber_intersections(F, [q], 0.45)
        assert len(pts) == 1 and pts[0].sign == 1
        # bracket the root of Q - q on a fine p-grid
        ps = np.linspace(-0.45, 0.45, 9001)
        vals = np.array([F.forward(np.array([q]), np.array([p]))[0][0] - q for p in ps])
        i = np.nonzero(np.diff(vals > 0))[0]
        assert len(i) == 1 and ps[i[0]] <= pts[0].p[0] <= ps[i[0] + 1]
        assert abs(pts[0].p[0]) <= 0.05


def test_linking_reports():
    rep = linking_condition(Shear(), 0.45)
    assert rep.linking_satisfied and rep.uniform_sign == 1
    rep = linking_condition(ReversedShear(), 0.45, grid=8)
    assert rep.linking_satisfied and rep.uniform_sign == -1


def test_translated_shear_not_linked():
    rep = linking_condition(TranslatedShear(1, 0.4), 0.2)
    assert not rep.linking_satisfied
    assert all(f.count == 0 for f in rep.fibers) and rep.uniform_sign == "n/a"


def test_translation_by_C_touches_boundary():
    with pytest.raises(BoundaryIntersectionError):
        linking_condition(TranslatedShear(1, 0.2), 0.2)


def test_standard_like_linking_uniform_sign():
    rep = linking_condition(StandardLike((0.05,)), 0.45, grid=32)
    assert len(rep.fibers) == 32
    assert rep.linking_satisfied and rep.uniform_sign == 1 and not rep.anomaly


def test_report_json_round_trip():
    rep = linking_condition(StandardLike((0.05,)), 0.45, grid=4)
    data = json.loads(rep.to_json())
    assert data["linking_satisfied"] is True and len(data["fibers"]) == 4
    assert data["fibers"][1]["intersections"][0]["p"] == rep.fibers[1].points[0].p.tolist()


def test_shear_diagonal_is_degenerate():
    pts = fixed_points_via_diagonal(Shear(), 0.45)
    assert len(pts) == 8
    for q, p in pts:
        assert np.array_equal(p, [0.0])


def test_standard_like_fixed_points():
    F = StandardLike((0.05,))
    pts = fixed_points_via_diagonal(F, 0.45)
    direct = direct_map_fixed_points(F, 0.45)
    assert len(pts) == len(direct) == 2
    for (q, p), z in zip(pts, direct):
        assert np.max(np.abs(np.concatenate([q, p]) - z)) < 1e-12
    assert np.allclose([q[0] for q, _ in pts], [0.0, 0.5], atol=1e-15)


def test_product_has_four_fixed_points():
    F = Product((StandardLike((0.05,)), StandardLike((0.03,))))
    pts = fixed_points_via_diagonal(F, 0.45, link_grid=6)
    direct = direct_map_fixed_points(F, 0.45, per_dim=6)
    assert len(pts) == 4 == len(direct)
    for (q, p), z in zip(pts, direct):
        assert np.max(np.abs(np.concatenate([q, p]) - z)) < 1e-10


def test_fixed_points_need_linking():
    with pytest.raises(PreconditionError):
        fixed_points_via_diagonal(TranslatedShear(1, 0.4), 0.2)


@pytest.mark.parametrize("F", [StandardLike((0.05,)), Product((StandardLike((0.02,)), StandardLike((0.04,))))])
def test_diagonal_gradient_is_momentum_jump(F):
    rng = np.random.default_rng(4)
    for q in rng.uniform(0, 1, (10, F.n)):
        p = -F.d1(q, q)
        Q, P = F.forward(q, p)
        assert np.max(np.abs(Q - q)) < 1e-14
        assert np.max(np.abs(diagonal_gradient(F, q) - (P - p))) < 1e-14


def test_generating_partials_match_forward_map():
    F = StandardLike((0.07,))
    q, Q = np.array([0.3]), np.array([0.41])
    fd1 = central_difference(lambda x: F.S(x, Q), q)[0]
    fd2 = central_difference(lambda x: F.S(q, x), Q)[0]
    assert np.allclose(fd1, F.d1(q, Q), atol=1e-9) and np.allclose(fd2, F.d2(q, Q), atol=1e-9)
    p = -F.d1(q, Q)
    assert np.allclose(F.forward(q, p)[0], Q, atol=1e-15)
