"""Riemannian structure on the torus R^n / Z^n.

All arithmetic happens on the universal cover; points are reduced mod 1 only
when reported. Two metric families are shipped: the flat metric and conformal
metrics whose cometric is ``exp(2 phi(q)) I`` with ``phi`` a finite Fourier
cosine sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _flow
from .errors import InjectivityRadiusError, InvalidInputError, OutOfRangeError, ZeroDistanceError

MODES = ("torus", "lifted")
DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class CotangentPoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(-1))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(-1))
        if self.q.shape != self.p.shape:
            raise InvalidInputError("q and p must have the same dimension")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise InvalidInputError("non-finite cotangent point")

    def as_array(self):
        return np.concatenate([self.q, self.p])


@dataclass(frozen=True)
class MetricField:
    """Periodic cometric ``A(q)`` on the n-torus.

    ``fourier_terms`` is a tuple of ``(k, c)`` with integer wavevector ``k``;
    it is ignored for the flat metric. ``injectivity_radius`` defaults to 1/2
    for the flat torus and to infinity in lifted mode; conformal metrics in
    torus mode must supply it.
    """

    n: int
    kind: str = "flat"
    fourier_terms: tuple = ()
    injectivity_radius: float | None = None
    mode: str = "torus"
    _params: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n) < 1:
            raise InvalidInputError("metric dimension must be >= 1")
        if self.kind not in ("flat", "conformal"):
            raise InvalidInputError(f"unknown metric type {self.kind!r}")
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown metric mode {self.mode!r}")
        terms = []
        if self.kind == "conformal":
            for k, c in self.fourier_terms:
                k = tuple(int(v) for v in np.atleast_1d(k))
                if len(k) != self.n:
                    raise InvalidInputError("fourier wavevector has wrong dimension")
                terms.append((k, float(c)))
        object.__setattr__(self, "fourier_terms", tuple(terms))
        if self.mode == "torus" and self.kind == "conformal" and self.injectivity_radius is None:
            raise InvalidInputError("conformal metric in torus mode needs an injectivity_radius")
        if self.injectivity_radius is not None and not self.injectivity_radius > 0:
            raise InvalidInputError("injectivity_radius must be positive")
        object.__setattr__(
            self, "_params", _flow.make_params(self.n, metric_terms=self.fourier_terms)
        )

    @property
    def R(self) -> float:
        if self.mode == "lifted":
            return math.inf
        if self.injectivity_radius is not None:
            return float(self.injectivity_radius)
        return 0.5

    @property
    def is_flat(self) -> bool:
        return not self.fourier_terms

    def phi(self, q):
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape[:-1])
        for k, c in self.fourier_terms:
            out = out + c * np.cos(2 * np.pi * (q @ np.array(k, dtype=float)))
        return out

    def grad_phi(self, q):
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape)
        for k, c in self.fourier_terms:
            kv = np.array(k, dtype=float)
            out = out - 2 * np.pi * c * np.sin(2 * np.pi * (q @ kv))[..., None] * kv
        return out

    def conformal_factor(self, q):
        return np.exp(2.0 * self.phi(q))

    def cometric(self, q):
        q = _check_point(q, self.n)
        return self.conformal_factor(q)[..., None, None] * np.eye(self.n)

    def cometric_derivative(self, q):
        """``dA/dq_i`` stacked on the leading axis of the result (shape n x n x n)."""
        q = _check_point(q, self.n)
        fac = 2.0 * self.conformal_factor(q)
        return np.einsum("i,jk->ijk", fac * self.grad_phi(q), np.eye(self.n))

    def norm(self, q, p):
        """Cometric norm ``sqrt(p^T A(q) p)``; broadcasts over leading axes."""
        p = np.asarray(p, dtype=float)
        return np.exp(self.phi(q)) * np.linalg.norm(p, axis=-1)

    def vector_norm(self, q, v):
        v = np.asarray(v, dtype=float)
        return np.exp(-self.phi(q)) * np.linalg.norm(v, axis=-1)

    def kernel_params(self):
        return self._params


def _check_point(q, n):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != n:
        raise InvalidInputError(f"expected points of dimension {n}, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise InvalidInputError("non-finite base point")
    return q


def cometric(metric: MetricField, q) -> np.ndarray:
    """Return ``A(q)``; the same matrix maps covectors to vectors (Legendre map)."""
    return metric.cometric(q)


def h0_batch(metric: MetricField, q, p, t, with_jac=False, step=DEFAULT_STEP):
    """Time-``t`` map of ``H0 = 1/2 ||p||^2`` on a batch; ``t`` may be an array.

    Returns ``(Q, P, jac, action)``. Flat metrics use the closed form.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    batch, n = q.shape
    t = np.broadcast_to(np.asarray(t, dtype=float), (batch,))
    if metric.is_flat:
        Q = q + t[:, None] * p
        action = 0.5 * t * np.sum(p * p, axis=1)
        jac = None
        if with_jac:
            jac = np.zeros((batch, 2 * n, 2 * n))
            eye = np.eye(n)
            jac[:, :n, :n] = eye
            jac[:, n:, n:] = eye
            jac[:, :n, n:] = t[:, None, None] * eye
        return Q, p.copy(), jac, action
    Q = np.empty_like(q)
    P = np.empty_like(p)
    action = np.empty(batch)
    jac = np.empty((batch, 2 * n, 2 * n)) if with_jac else None
    for tv in np.unique(t):
        idx = np.nonzero(t == tv)[0]
        Qi, Pi, Ji, Si, _ = _flow.integrate(
            metric.kernel_params(), q[idx], p[idx], 0.0, float(tv), step, with_jac=with_jac
        )
        Q[idx], P[idx], action[idx] = Qi, Pi, Si
        if with_jac:
            jac[idx] = Ji
    return Q, P, jac, action


def exp_time_map(metric: MetricField, q, p, t: float, step=DEFAULT_STEP) -> CotangentPoint:
    """Time-``t`` geodesic flow ``h0^t(q, p)``; its base point is ``exp_q(t A(q) p)``."""
    z = CotangentPoint(q, p)
    _check_point(z.q, metric.n)
    if metric.mode == "torus" and abs(t) * float(metric.norm(z.q, z.p)) >= metric.R:
        raise InjectivityRadiusError(
            f"||t p|| = {abs(t) * float(metric.norm(z.q, z.p)):.6g} >= R = {metric.R:.6g}"
        )
    Q, P, _, _ = h0_batch(metric, z.q, z.p, t, step=step)
    return CotangentPoint(Q[0], P[0])


def exp_inverse(metric: MetricField, q, Q, tol=1e-12, max_iter=50, step=DEFAULT_STEP):
    """Covector ``p`` with ``pi h0^1(q, p) = Q``, by Newton shooting."""
    q = _check_point(q, metric.n).reshape(1, -1)
    Q = _check_point(Q, metric.n).reshape(1, -1)
    p = np.linalg.solve(metric.cometric(q[0]), (Q - q)[0])[None, :]
    n = metric.n
    for _ in range(max_iter):
        Qp, _, jac, _ = h0_batch(metric, q, p, 1.0, with_jac=True, step=step)
        res = Qp - Q
        if np.max(np.abs(res)) < tol:
            return p[0]
        p = p - np.linalg.solve(jac[0, :n, n:], res[0])[None, :]
    raise OutOfRangeError("geodesic shooting did not converge")


def distance_with_partials(metric: MetricField, q, Q, step=DEFAULT_STEP):
    """Return ``(Dis, d1, d2)`` with ``d1 = -p/||p||`` and ``d2 = P/||P||``.

    ``(q, p)`` is the geodesic shooting covector and ``(Q, P) = h0^1(q, p)``.
    Both partials are covectors.
    """
    q = _check_point(q, metric.n)
    Q = _check_point(Q, metric.n)
    if np.array_equal(q, Q):
        raise ZeroDistanceError("Dis(q, q) = 0 has no partial derivatives")
    p = exp_inverse(metric, q, Q, step=step)
    dis = float(metric.norm(q, p))
    if dis >= metric.R:
        raise InjectivityRadiusError(f"Dis = {dis:.6g} >= R = {metric.R:.6g}")
    Q1, P, _, _ = h0_batch(metric, q, p, 1.0, step=step)
    norm_P = float(metric.norm(Q1[0], P[0]))
    return dis, -p / dis, P[0] / norm_P


def distance(metric: MetricField, q, Q, step=DEFAULT_STEP) -> float:
    q = _check_point(q, metric.n)
    Q = _check_point(Q, metric.n)
    if np.array_equal(q, Q):
        return 0.0
    return float(metric.norm(q, exp_inverse(metric, q, Q, step=step)))
