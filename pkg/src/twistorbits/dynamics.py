"""Compliant Hamiltonians, their flows and linearized flows.

A compliant Hamiltonian agrees with ``H0 = 1/2 ||p||^2`` on the collar
``||p|| >= C - delta``; the perturbation is multiplied by a bump in ``||p||``
that vanishes identically there, so the boundary of ``{||p|| <= C}`` is
invariant under every flow considered here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _flow
from .errors import EscapeError, InvalidInputError
from .geometry import DEFAULT_STEP, CotangentPoint, MetricField, h0_batch

J_CACHE: dict[int, np.ndarray] = {}


def symplectic_form(n: int) -> np.ndarray:
    if n not in J_CACHE:
        eye = np.eye(n)
        zero = np.zeros((n, n))
        J_CACHE[n] = np.block([[zero, eye], [-eye, zero]])
    return J_CACHE[n]


def symplectic_defect(jac) -> float:
    """``max |Jac^T J Jac - J|``."""
    jac = np.asarray(jac)
    n = jac.shape[-1] // 2
    J = symplectic_form(n)
    return float(np.max(np.abs(np.swapaxes(jac, -1, -2) @ J @ jac - J)))


@dataclass(frozen=True)
class PotentialTerm:
    """``coefficient * cos(2 pi (k.q + harmonic * t) + phase)``."""

    k: tuple
    coefficient: float
    harmonic: int = 0
    phase: float = 0.0


@dataclass(frozen=True)
class HamiltonianSpec:
    """``H = H0 + lam * epsilon * beta(||p||) * V(q, t)``.

    ``lam`` is the homotopy parameter of ``H_lam = (1 - lam) H0 + lam H``.
    """

    metric: MetricField
    C: float
    epsilon: float = 0.0
    potential: tuple = ()
    delta: float | None = None
    bump: str = "cos2"
    lam: float = 1.0
    escape_margin: float = 0.1
    step: float = DEFAULT_STEP
    _params: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.metric.n
        if not self.C > 0:
            raise InvalidInputError("C must be positive")
        if self.metric.mode == "torus" and not self.C < self.metric.R:
            raise InvalidInputError(f"C = {self.C} must be below the injectivity radius {self.metric.R}")
        delta = 0.1 * self.C if self.delta is None else float(self.delta)
        if not 0 < delta < self.C:
            raise InvalidInputError("collar width delta must lie in (0, C)")
        object.__setattr__(self, "delta", delta)
        if self.bump not in _flow.BUMPS:
            raise InvalidInputError(f"unknown bump type {self.bump!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidInputError(f"blend parameter {self.lam} outside [0, 1]")
        if not self.step > 0:
            raise InvalidInputError("integrator step must be positive")
        terms = []
        for t in self.potential:
            if not isinstance(t, PotentialTerm):
                t = PotentialTerm(*t)
            k = tuple(int(v) for v in np.atleast_1d(t.k))
            if len(k) != n:
                raise InvalidInputError("potential wavevector has wrong dimension")
            terms.append(PotentialTerm(k, float(t.coefficient), int(t.harmonic), float(t.phase)))
        object.__setattr__(self, "potential", tuple(terms))
        params = _flow.make_params(
            n,
            metric_terms=self.metric.fourier_terms,
            potential_terms=[(t.k, t.coefficient, t.harmonic, t.phase) for t in terms],
            eps=self.effective_epsilon,
            supp=self.C - delta,
        )
        object.__setattr__(self, "_params", params)

    @property
    def n(self) -> int:
        return self.metric.n

    @property
    def effective_epsilon(self) -> float:
        return self.lam * self.epsilon

    @property
    def time_dependent(self) -> bool:
        return any(t.harmonic != 0 for t in self.potential)

    @property
    def is_unperturbed(self) -> bool:
        return self.effective_epsilon == 0.0 or not self.potential

    @property
    def escape_radius(self) -> float:
        return self.C + self.escape_margin

    def unperturbed(self) -> "HamiltonianSpec":
        return replace(self, lam=0.0)

    def with_step(self, step: float) -> "HamiltonianSpec":
        return replace(self, step=step)

    def kernel_params(self):
        return self._params

    def value(self, q, p, t=0.0):
        """Evaluate ``H`` on a batch (or a single point)."""
        q = np.asarray(q, dtype=float)
        single = q.ndim == 1
        out = _flow.hamiltonian_values(self._params, q, p, t, self.bump)
        return float(out[0]) if single else out


def blend(H: HamiltonianSpec, lam: float) -> HamiltonianSpec:
    """``H_lam = (1 - lam) H0 + lam H`` (relative to the fully perturbed ``H``)."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidInputError(f"blend parameter {lam} outside [0, 1]")
    return replace(H, lam=float(lam))


def segment_batch(H: HamiltonianSpec, starts, duration, q, p, with_jac=False, check_escape=True):
    """Flow a batch from per-sample start times ``starts`` for a common ``duration``.

    Returns ``(Q, P, jac, action)``.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    starts = np.broadcast_to(np.asarray(starts, dtype=float), (q.shape[0],))
    duration = float(duration)
    if H.is_unperturbed:
        # autonomous and identical to the geodesic flow
        return h0_batch(H.metric, q, p, duration, with_jac=with_jac, step=H.step)
    Q, P, jac, S, rmax = _flow.integrate(
        H.kernel_params(), q, p, starts, duration, H.step, H.bump, with_jac
    )
    if check_escape and np.any(rmax > H.escape_radius):
        bad = np.nonzero(rmax > H.escape_radius)[0]
        raise EscapeError(
            f"trajectory reached ||p|| = {rmax[bad[0]]:.6g} > C + margin = {H.escape_radius:.6g}"
        )
    return Q, P, jac, S


def flow_batch(H: HamiltonianSpec, t0: float, t1: float, q, p, with_jac=False):
    """Batched ``G_{t1} o G_{t0}^{-1}``; returns ``(Q, P, jac, action)``."""
    return segment_batch(H, t0, float(t1) - float(t0), q, p, with_jac=with_jac)


def flow(H: HamiltonianSpec, t0: float, t1: float, z: CotangentPoint) -> CotangentPoint:
    """``G_{t1} o G_{t0}^{-1}(z)``."""
    Q, P, _, _ = flow_batch(H, t0, t1, z.q, z.p)
    return CotangentPoint(Q[0], P[0])


def linearized_flow(H: HamiltonianSpec, t0: float, t1: float, z: CotangentPoint) -> np.ndarray:
    """Jacobian of the time-(t0 -> t1) map at ``z``, from the variational equations."""
    _, _, jac, _ = flow_batch(H, t0, t1, z.q, z.p, with_jac=True)
    return jac[0]


def time_one_map(H: HamiltonianSpec, q, p, with_jac=False):
    """The map ``F = G_1``, integrated in one piece. Batched; returns ``(Q, P, jac)``."""
    Q, P, jac, _ = flow_batch(H, 0.0, 1.0, q, p, with_jac=with_jac)
    return Q, P, jac
