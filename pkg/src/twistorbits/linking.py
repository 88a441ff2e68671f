"""Fiber/image intersections of twist maps and fixed points from the diagonal.

For a twist map ``F`` of ``T^n x {||p|| <= C}`` with generating function
``S(q, Q)`` the fiber over ``q`` and its image meet where ``base F(q, p) = q``
mod ``Z^n``; the twist condition makes that point unique when it exists.
Fixed points are then the critical points of ``s(q) = S(q, q)``, since
``ds = d1 S + d2 S = P - p`` on the diagonal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import root

from .errors import BoundaryIntersectionError, InvalidInputError, PreconditionError

BOUNDARY_TOL = 1e-6
SOLVE_TOL = 1e-12
FIXED_TOL = 1e-8
DEFAULT_Q_GRID = 32
DEFAULT_P_GRID = 16


class GeneratingTwistMap:
    """Twist map given by ``S(q, Q)`` with ``d1 S = -p`` and ``d2 S = P``.

    Subclasses provide ``S``, ``d1``, ``d2`` and the explicit forward map.
    """

    n: int = 1

    def S(self, q, Q) -> float:
        raise NotImplementedError

    def d1(self, q, Q) -> np.ndarray:
        raise NotImplementedError

    def d2(self, q, Q) -> np.ndarray:
        raise NotImplementedError

    def forward(self, q, p):
        raise NotImplementedError

    def dQ_dp(self, q, p) -> np.ndarray:
        """Central differences of the base component; exact for the affine maps below."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        h = 1e-6
        cols = []
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = h
            cols.append((self.forward(q, p + e)[0] - self.forward(q, p - e)[0]) / (2 * h))
        return np.array(cols).T

    def __call__(self, q, p):
        return self.forward(q, p)


@dataclass(frozen=True)
class Shear(GeneratingTwistMap):
    """``(q, p) -> (q + s p + shift, p)`` with ``S = s/2 |Q - q - shift|^2 / s^2``.

    ``s = +1`` is the shear, ``s = -1`` the reversed shear.
    """

    n: int = 1
    direction: float = 1.0
    shift: tuple = ()

    def __post_init__(self):
        shift = np.zeros(self.n) if len(self.shift) == 0 else np.asarray(self.shift, dtype=float)
        if shift.shape != (self.n,):
            raise InvalidInputError("shift has wrong dimension")
        if self.direction == 0:
            raise InvalidInputError("shear direction must be nonzero")
        object.__setattr__(self, "shift", tuple(shift))

    def _disp(self, q, Q):
        return np.asarray(Q, dtype=float) - np.asarray(q, dtype=float) - np.asarray(self.shift)

    def S(self, q, Q):
        v = self._disp(q, Q)
        return float(0.5 * (v @ v) / self.direction)

    def d1(self, q, Q):
        return -self._disp(q, Q) / self.direction

    def d2(self, q, Q):
        return self._disp(q, Q) / self.direction

    def forward(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return q + self.direction * p + np.asarray(self.shift), p.copy()

    def dQ_dp(self, q, p):
        return self.direction * np.eye(self.n)


def ReversedShear(n=1) -> Shear:
    return Shear(n, -1.0)


def TranslatedShear(n=1, shift=0.0) -> Shear:
    return Shear(n, 1.0, tuple(np.broadcast_to(np.asarray(shift, dtype=float), (n,))))


@dataclass(frozen=True)
class StandardLike(GeneratingTwistMap):
    """``S = 1/2 |Q - q|^2 - sum_i eps_i / (2 pi) cos(2 pi q_i)``.

    Forward map: ``Q = q + p + eps sin(2 pi q)``, ``P = Q - q``.
    """

    eps: tuple = (0.05,)

    @property
    def n(self) -> int:
        return len(self.eps)

    def _e(self):
        return np.asarray(self.eps, dtype=float)

    def S(self, q, Q):
        q = np.asarray(q, dtype=float)
        v = np.asarray(Q, dtype=float) - q
        return float(0.5 * (v @ v) - np.sum(self._e() / (2 * np.pi) * np.cos(2 * np.pi * q)))

    def d1(self, q, Q):
        q = np.asarray(q, dtype=float)
        return -(np.asarray(Q, dtype=float) - q) + self._e() * np.sin(2 * np.pi * q)

    def d2(self, q, Q):
        return np.asarray(Q, dtype=float) - np.asarray(q, dtype=float)

    def forward(self, q, p):
        q = np.asarray(q, dtype=float)
        kick = np.asarray(p, dtype=float) + self._e() * np.sin(2 * np.pi * q)
        return q + kick, kick

    def dQ_dp(self, q, p):
        return np.eye(self.n)


@dataclass(frozen=True)
class Product(GeneratingTwistMap):
    """Coordinatewise product of lower-dimensional twist maps."""

    factors: tuple = ()

    @property
    def n(self) -> int:
        return sum(f.n for f in self.factors)

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        out, i = [], 0
        for f in self.factors:
            out.append(x[i:i + f.n])
            i += f.n
        return out

    def S(self, q, Q):
        return float(sum(f.S(a, b) for f, a, b in zip(self.factors, self._split(q), self._split(Q))))

    def d1(self, q, Q):
        return np.concatenate([f.d1(a, b) for f, a, b in zip(self.factors, self._split(q), self._split(Q))])

    def d2(self, q, Q):
        return np.concatenate([f.d2(a, b) for f, a, b in zip(self.factors, self._split(q), self._split(Q))])

    def forward(self, q, p):
        parts = [f.forward(a, b) for f, a, b in zip(self.factors, self._split(q), self._split(p))]
        return np.concatenate([x[0] for x in parts]), np.concatenate([x[1] for x in parts])

    def dQ_dp(self, q, p):
        from scipy.linalg import block_diag

        return block_diag(*[f.dQ_dp(a, b) for f, a, b in zip(self.factors, self._split(q), self._split(p))])


# ---------------------------------------------------------------- intersections


@dataclass(frozen=True)
class Intersection:
    q: np.ndarray
    p: np.ndarray
    sign: int


@dataclass(frozen=True)
class FiberRecord:
    q: np.ndarray
    points: tuple

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def signs(self) -> tuple:
        return tuple(pt.sign for pt in self.points)


def _p_grid(n, C, per_dim):
    axis = np.linspace(-C, C, per_dim + 2)[1:-1]
    pts = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return pts[np.linalg.norm(pts, axis=1) < C]


def fiber_intersections(F: GeneratingTwistMap, q, C: float, grid=DEFAULT_P_GRID, torus=True,
                        boundary_tol=BOUNDARY_TOL) -> list:
    """Interior solutions ``p`` of ``base F(q, p) = q`` (mod ``Z^n`` when ``torus``)."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if q.shape != (F.n,):
        raise InvalidInputError(f"fiber base point must have dimension {F.n}")
    found = []
    for p0 in _p_grid(F.n, C, grid):
        p = p0.copy()
        shift = np.round(F.forward(q, p)[0] - q) if torus else np.zeros(F.n)
        for _ in range(50):
            res = F.forward(q, p)[0] - q - shift
            if np.max(np.abs(res)) < SOLVE_TOL:
                break
            try:
                p = p - np.linalg.solve(F.dQ_dp(q, p), res)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(p)) or np.linalg.norm(p) > 4 * C + 1:
                break
        else:
            continue
        if np.max(np.abs(F.forward(q, p)[0] - q - shift)) >= SOLVE_TOL * 10:
            continue
        r = np.linalg.norm(p)
        if abs(r - C) <= boundary_tol:
            raise BoundaryIntersectionError(
                f"fiber over q={q.tolist()} meets its image on the boundary (||p*|| = {r:.9g})"
            )
        if r < C and all(np.max(np.abs(p - x.p)) > 1e-9 for x in found):
            sign = int(np.sign(np.linalg.det(F.dQ_dp(q, p))))
            found.append(Intersection(q.copy(), p, sign))
    return found


@dataclass(frozen=True)
class LinkingReport:
    fibers: tuple = field(repr=False)
    C: float = math.nan

    @property
    def linking_satisfied(self) -> bool:
        return all(f.count == 1 for f in self.fibers)

    @property
    def uniform_sign(self):
        signs = {s for f in self.fibers for s in f.signs}
        if not signs:
            return "n/a"
        if len(signs) > 1:
            return "mixed"
        return signs.pop()

    @property
    def anomaly(self) -> bool:
        return self.uniform_sign == "mixed"

    def to_dict(self) -> dict:
        return {
            "C": self.C,
            "linking_satisfied": self.linking_satisfied,
            "uniform_sign": self.uniform_sign,
            "fibers": [
                {
                    "q": f.q.tolist(),
                    "count": f.count,
                    "intersections": [{"p": x.p.tolist(), "sign": x.sign} for x in f.points],
                }
                for f in self.fibers
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def q_grid(n, per_dim):
    axis = np.arange(per_dim) / per_dim
    return np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)


def linking_condition(F: GeneratingTwistMap, C: float, grid=DEFAULT_Q_GRID, p_grid=DEFAULT_P_GRID,
                      torus=True) -> LinkingReport:
    fibers = tuple(
        FiberRecord(q, tuple(fiber_intersections(F, q, C, p_grid, torus))) for q in q_grid(F.n, grid)
    )
    return LinkingReport(fibers, C)


# ---------------------------------------------------------------- fixed points


def diagonal_value(F: GeneratingTwistMap, q) -> float:
    return F.S(q, q)


def diagonal_gradient(F: GeneratingTwistMap, q) -> np.ndarray:
    """``ds(q) = d1 S(q, q) + d2 S(q, q)``, which equals ``P - p`` at the point ``(q, p)`` over the diagonal."""
    return F.d1(q, q) + F.d2(q, q)


def fixed_point_residual(F: GeneratingTwistMap, q, p) -> float:
    Q, P = F.forward(q, p)
    dq = Q - q
    return float(max(np.max(np.abs(dq - np.round(dq))), np.max(np.abs(P - p))))


def fixed_points_via_diagonal(F: GeneratingTwistMap, C: float, seeds_per_dim=8, link_grid=DEFAULT_Q_GRID,
                              report: LinkingReport | None = None, tol=FIXED_TOL) -> list:
    """Fixed points ``(q, -d1 S(q, q))`` at the critical points of ``s(q) = S(q, q)`` on the torus."""
    report = report or linking_condition(F, C, link_grid)
    if not report.linking_satisfied:
        raise PreconditionError("the linking condition fails; S(q, q) is not defined on the whole torus")
    found = []
    for q0 in q_grid(F.n, seeds_per_dim):
        g0 = diagonal_gradient(F, q0)
        if np.max(np.abs(g0)) < 1e-14:
            q = q0
        else:
            sol = root(lambda x: diagonal_gradient(F, x), q0, tol=1e-14)
            if not sol.success:
                continue
            q = sol.x
        q = np.mod(q, 1.0)
        q[np.abs(q - 1.0) < 1e-12] = 0.0
        p = -F.d1(q, q)
        if np.linalg.norm(p) >= C or fixed_point_residual(F, q, p) >= tol:
            continue
        if all(np.max(np.abs(_torus_diff(q, z[0]))) > 1e-6 for z in found):
            found.append((q, p))
    found.sort(key=lambda z: tuple(np.round(z[0], 9)))
    return found


def _torus_diff(a, b):
    d = np.asarray(a) - np.asarray(b)
    return d - np.round(d)
