"""Discrete action on sequence space and the search for its critical points.

A sequence ``q_0, ..., q_{L-1}`` (``L = 2N d`` for a period-``d`` search) is
closed by ``q_L = q_0 + m`` with ``m`` an integer vector: that is the lift
class of the orbit on the torus. The functional is

    W(q) = sum_k S_k(q_k, q_{k+1}),

and its differential at ``q_k`` is ``P_{k-1} - p_k`` where ``p_k`` inverts
stage ``k`` on the pair and ``P_k`` is the image momentum. Critical points are
exactly the sequences whose momenta glue into an orbit.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import EscapeError
from .errors import (
    ExcludedByHypothesisError,
    InvalidInputError,
    OutOfDomainError,
    OutOfRangeError,
    TwistViolationError,
)
from .geometry import CotangentPoint, distance, distance_with_partials
from .twist import Decomposition

log = logging.getLogger(__name__)

CRITICAL_TOL = 1e-10
DEDUP_TOL = 1e-6
ISOLATION_TOL = 1e-6
FACE_TOL = 1e-8
TIKHONOV = 1e-8
FLOW_STEP = 1e-4


@dataclass(frozen=True)
class OrbitSequence:
    """Lifted sequence ``q`` of shape ``(2N d, n)`` with period ``d`` and class ``m``."""

    q: np.ndarray
    m: np.ndarray
    d: int
    decomposition: Decomposition = field(repr=False)
    p: np.ndarray | None = field(default=None, repr=False, compare=False)
    action: float | None = field(default=None, compare=False)
    residual: float | None = field(default=None, compare=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        n = self.decomposition.n
        if q.ndim == 1 and n == 1:
            q = q[:, None]
        m = np.atleast_1d(np.asarray(self.m))
        if m.shape != (n,) or not np.all(m == np.round(m)):
            raise InvalidInputError(f"class m must be an integer vector of length {n}")
        d = int(self.d)
        if d < 1:
            raise InvalidInputError("period d must be >= 1")
        if q.shape != (self.decomposition.period_length * d, n):
            raise InvalidInputError(
                f"expected {self.decomposition.period_length * d} entries of dimension {n}, got {q.shape}"
            )
        if not np.all(np.isfinite(q)):
            raise InvalidInputError("non-finite sequence entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "m", np.round(m).astype(int))
        object.__setattr__(self, "d", d)

    @property
    def L(self) -> int:
        return self.q.shape[0]

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def stage_indices(self) -> np.ndarray:
        return np.arange(self.L) % self.decomposition.period_length

    def closed(self) -> np.ndarray:
        """Entries ``q_0 .. q_L`` with ``q_L = q_0 + m``."""
        return np.vstack([self.q, self.q[:1] + self.m])

    def extended(self, k: int) -> np.ndarray:
        """``q_k`` for any integer ``k`` using ``q_{k+L} = q_k + m``."""
        wraps, r = divmod(k, self.L)
        return self.q[r] + wraps * self.m

    def shifted(self, s: int = 1) -> "OrbitSequence":
        """``sigma^s``: ``(sigma q)_k = q_{k + 2N}``."""
        shift = s * self.decomposition.period_length
        q = np.array([self.extended(k + shift) for k in range(self.L)])
        return replace(self, q=q, p=_roll(self.p, shift))

    def translated(self, j) -> "OrbitSequence":
        return replace(self, q=self.q + np.asarray(j, dtype=float))

    def normalized(self) -> "OrbitSequence":
        """Integer translate with ``q_0`` in ``[0, 1)^n``."""
        return self.translated(-np.floor(self.q[0]))

    def entries_mod1(self) -> np.ndarray:
        return np.mod(self.q, 1.0)

    def phase_point(self) -> CotangentPoint:
        p = self.p if self.p is not None else evaluate_sequence(self).p
        return CotangentPoint(self.q[0], p[0])


def _roll(arr, shift):
    if arr is None:
        return None
    return np.roll(arr, -shift, axis=0)


@dataclass(frozen=True)
class SequenceState:
    """Per-pair data: momenta ``p``, ``P``, stage Jacobians and actions."""

    p: np.ndarray
    P: np.ndarray
    jac: np.ndarray
    S: np.ndarray


def evaluate_sequence(seq: OrbitSequence, p_guess=None) -> SequenceState:
    closed = seq.closed()
    try:
        sol = seq.decomposition.solve(seq.stage_indices, closed[:-1], closed[1:], p0=p_guess)
    except OutOfRangeError as exc:
        k = exc.indices[0] if exc.indices else -1
        raise OutOfDomainError(f"pair k={k}: {exc}", exc.indices) from exc
    except EscapeError as exc:
        raise OutOfDomainError(f"stage trajectory escaped: {exc}") from exc
    return SequenceState(sol.p, sol.P, sol.jac, sol.S)


def action_value(seq: OrbitSequence, state: SequenceState | None = None) -> float:
    """``W = sum_k S_k(q_k, q_{k+1})`` including the closing pair."""
    state = state or evaluate_sequence(seq)
    return float(np.sum(state.S))


def action_differential(seq: OrbitSequence, state: SequenceState | None = None) -> np.ndarray:
    """Covector ``dW/dq_k = P_{k-1} - p_k``; shape ``(L, n)``."""
    state = state or evaluate_sequence(seq)
    return np.roll(state.P, 1, axis=0) - state.p


def action_gradient(seq: OrbitSequence, state: SequenceState | None = None) -> np.ndarray:
    """Metric gradient ``A(q_k)(P_{k-1} - p_k)``; shape ``(L, n)``."""
    dW = action_differential(seq, state)
    return seq.decomposition.hamiltonian.metric.conformal_factor(seq.q)[:, None] * dW


@dataclass(frozen=True)
class ActionHessian:
    """Second derivatives ``S^k_ij`` of each stage and the assembled Hessian of ``W``."""

    S11: np.ndarray
    S12: np.ndarray
    S21: np.ndarray
    S22: np.ndarray

    @property
    def L(self) -> int:
        return self.S11.shape[0]

    @property
    def n(self) -> int:
        return self.S11.shape[1]

    def assemble(self, lam=1.0) -> np.ndarray:
        """Block tridiagonal matrix with corners ``S21/lam`` (top right) and ``lam S12`` (bottom left).

        At ``lam = 1`` this is the Hessian of ``W``.
        """
        L, n = self.L, self.n
        dtype = complex if np.iscomplexobj(lam) else float
        M = np.zeros((L * n, L * n), dtype=dtype)

        def blk(i, j):
            return slice(i * n, (i + 1) * n), slice(j * n, (j + 1) * n)

        for k in range(L):
            nxt = (k + 1) % L
            M[blk(k, k)] += self.S11[k]
            M[blk(nxt, nxt)] += self.S22[k]
            if k < L - 1:
                M[blk(k, nxt)] += self.S12[k]
                M[blk(nxt, k)] += self.S21[k]
            else:
                M[blk(k, 0)] += lam * self.S12[k]
                M[blk(0, k)] += self.S21[k] / lam
        return M

    @property
    def matrix(self) -> np.ndarray:
        return self.assemble(1.0)

    @property
    def asymmetry(self) -> float:
        M = self.matrix
        return float(np.max(np.abs(M - M.T)))


def hessian_blocks(jac: np.ndarray) -> ActionHessian:
    """Stage second derivatives from stage Jacobians ``[[a, b], [c, d]]``."""
    n = jac.shape[-1] // 2
    a, b = jac[:, :n, :n], jac[:, :n, n:]
    c, d = jac[:, n:, :n], jac[:, n:, n:]
    cond = np.linalg.cond(b)
    if not np.all(np.isfinite(cond)) or np.any(cond > 1e12):
        raise TwistViolationError("singular dQ/dp block: stage is not twist here")
    binv = np.linalg.inv(b)
    return ActionHessian(
        S11=binv @ a,
        S12=-binv,
        S21=c - d @ binv @ a,
        S22=d @ binv,
    )


def action_hessian(seq: OrbitSequence, state: SequenceState | None = None) -> ActionHessian:
    state = state or evaluate_sequence(seq)
    return hessian_blocks(state.jac)


# ---------------------------------------------------------------- isolating block


@dataclass(frozen=True)
class BlockStatus:
    norms: np.ndarray
    inside: np.ndarray
    faces: tuple
    rates: dict
    expected_signs: dict
    exit_direction: str

    @property
    def in_block(self) -> bool:
        return bool(np.all(self.inside))

    @property
    def parity_ok(self) -> bool:
        """Every face with a nonzero rate has the sign of its stage's nominal time."""
        return all(
            np.sign(r) == self.expected_signs[k] for k, r in self.rates.items() if r != 0.0
        )


def face_rate(seq: OrbitSequence, k: int, grad: np.ndarray) -> float:
    """``d/dt Dis(q_k, q_{k+1})`` along the gradient flow ``dq/dt = grad W``."""
    metric = seq.decomposition.hamiltonian.metric
    closed = seq.closed()
    _, d1, d2 = distance_with_partials(metric, closed[k], closed[k + 1])
    return float(d1 @ grad[k] + d2 @ grad[(k + 1) % seq.L])


def block_status(seq: OrbitSequence, face_tol=FACE_TOL, rate_tol=1e-12) -> BlockStatus:
    """Membership in ``B = {||p_k|| <= C}`` and, on its boundary, the exit direction."""
    decomp = seq.decomposition
    H = decomp.hamiltonian
    state = evaluate_sequence(seq)
    norms = H.metric.norm(seq.q, state.p)
    inside = norms <= H.C + face_tol
    faces = tuple(int(k) for k in np.nonzero(np.abs(norms - H.C) <= face_tol)[0])
    grad = action_gradient(seq, state)
    rates, expected = {}, {}
    for k in faces:
        r = face_rate(seq, k, grad)
        rates[k] = 0.0 if abs(r) <= rate_tol else r
        expected[k] = float(np.sign(decomp.stages[k % decomp.period_length].nominal_time))
    if not faces:
        direction = "interior"
    else:
        signs = {np.sign(r) for r in rates.values() if r != 0.0}
        if not signs:
            if len(faces) == seq.L:
                raise ExcludedByHypothesisError(
                    "gradient vanishes on a full boundary cycle; check C against the injectivity radius"
                )
            raise ExcludedByHypothesisError("gradient vanishes on every active face")
        if signs == {1.0}:
            direction = "positive-time"
        elif signs == {-1.0}:
            direction = "negative-time"
        else:
            direction = "both"
    return BlockStatus(norms, inside, faces, rates, expected, direction)


def gradient_flow_step(seq: OrbitSequence, tau=FLOW_STEP) -> OrbitSequence:
    """One explicit Euler step of ``dq/dt = grad W``."""
    return replace(seq, q=seq.q + tau * action_gradient(seq), p=None)


def pair_distance(seq: OrbitSequence, k: int) -> float:
    closed = seq.closed()
    return distance(seq.decomposition.hamiltonian.metric, closed[k], closed[k + 1])


# ---------------------------------------------------------------- search


def geodesic_seed(decomp: Decomposition, q0, m, d) -> np.ndarray:
    """Sequence of the geodesic orbit with average velocity ``m/d`` through ``q0``."""
    times = np.array([decomp.stages[k % decomp.period_length].nominal_time
                      for k in range(decomp.period_length * d)])
    offsets = np.concatenate([[0.0], np.cumsum(times)[:-1]])
    v = np.asarray(m, dtype=float) / d
    return np.asarray(q0, dtype=float) + offsets[:, None] * v


def rotation_seed(decomp: Decomposition, q0, m, d) -> np.ndarray:
    L = decomp.period_length * d
    return np.asarray(q0, dtype=float) + (np.arange(L) / L)[:, None] * np.asarray(m, dtype=float)


def auto_seeds(decomp: Decomposition, m, d, grid=8) -> list:
    n = decomp.n
    m = np.asarray(m)
    axes = [np.arange(grid) / grid] * n
    starts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    seeds = [geodesic_seed(decomp, q0, m, d) for q0 in starts]
    if np.any(m != 0):
        seeds += [rotation_seed(decomp, q0, m, d) for q0 in starts]
    return seeds


def sequence_from_orbit(decomp: Decomposition, z0: CotangentPoint, m, d) -> OrbitSequence:
    """Base points of the orbit of ``z0`` under the successive stages."""
    L = decomp.period_length * d
    q, p = z0.q[None, :], z0.p[None, :]
    entries = []
    for k in range(L):
        entries.append(q[0].copy())
        q, p, _, _ = decomp.evaluate(np.array([k]), q, p)
    return OrbitSequence(np.array(entries), m, d, decomp)


def newton_critical(seq: OrbitSequence, tol=CRITICAL_TOL, max_iter=50, max_halvings=12):
    """Newton's method on ``dW = 0`` with backtracking on ``|grad W|``.

    Returns the converged sequence (with ``p``, ``action`` and ``residual``
    filled in) or None.
    """
    try:
        state = evaluate_sequence(seq)
    except OutOfDomainError:
        return None
    metric = seq.decomposition.hamiltonian.metric
    for _ in range(max_iter):
        dW = action_differential(seq, state)
        grad = metric.conformal_factor(seq.q)[:, None] * dW
        res = float(np.max(np.abs(grad)))
        if res < tol:
            return replace(seq, p=state.p, action=action_value(seq, state), residual=res)
        try:
            Hm = hessian_blocks(state.jac).matrix
        except TwistViolationError:
            return None
        sv = np.linalg.svd(Hm, compute_uv=False)
        if sv[-1] < 1e-10 * sv[0]:
            Hm = Hm + TIKHONOV * np.eye(Hm.shape[0])
        step = -np.linalg.solve(Hm, dW.ravel()).reshape(seq.q.shape)
        merit = np.linalg.norm(grad)
        t = 1.0
        for _ in range(max_halvings):
            trial = replace(seq, q=seq.q + t * step)
            try:
                tstate = evaluate_sequence(trial, p_guess=state.p)
            except OutOfDomainError:
                t *= 0.5
                continue
            tgrad = metric.conformal_factor(trial.q)[:, None] * action_differential(trial, tstate)
            if np.linalg.norm(tgrad) <= (1.0 - 1e-4 * t) * merit:
                seq, state = trial, tstate
                break
            t *= 0.5
        else:
            return None
    return None


def sequence_distance(a: OrbitSequence, b: OrbitSequence) -> float:
    """Min over ``sigma`` shifts and integer translations of ``max_k |a_k - b_k|``."""
    best = math.inf
    for s in range(b.d):
        bs = b.shifted(s)
        j = np.round(a.q[0] - bs.q[0])
        best = min(best, float(np.max(np.abs(a.q - bs.q - j))))
    return best


def dedup(seqs, tol=DEDUP_TOL) -> list:
    kept = []
    for s in seqs:
        if all(sequence_distance(s, k) > tol for k in kept):
            kept.append(s)
    return kept


def find_critical(decomp: Decomposition, m, d: int, seeds="auto", dedup_results=True, grid=8,
                  jitter=0.0, rng=None, tol=CRITICAL_TOL, threads=1) -> list:
    """Multi-start search for critical points of ``W`` in the class ``(m, d)``.

    Returned sequences are normalized (``q_0`` in the unit cube), lie in the
    interior of the block, and are sorted by action.
    """
    H = decomp.hamiltonian
    m = np.atleast_1d(np.asarray(m, dtype=int))
    if H.metric.norm(np.zeros(decomp.n), m / d) >= H.C and decomp.hamiltonian.metric.is_flat:
        raise InvalidInputError(f"||m||/d = {np.linalg.norm(m) / d:.4g} must be below C = {H.C}")
    if isinstance(seeds, str) and seeds == "auto":
        seeds = auto_seeds(decomp, m, d, grid)
    seeds = [np.array(s, dtype=float).reshape(decomp.period_length * d, decomp.n) for s in seeds]
    if jitter:
        rng = rng if rng is not None else np.random.default_rng(0)
        seeds = [s + rng.uniform(-jitter, jitter, s.shape) for s in seeds]

    def run(q):
        return newton_critical(OrbitSequence(q, m, d, decomp), tol=tol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]

    found = []
    for r in results:
        if r is None:
            continue
        top = float(np.max(H.metric.norm(r.q, r.p)))
        if top > H.C - ISOLATION_TOL:
            log.warning("critical sequence with max ||p_k|| = %.6g discarded (outside block)", top)
            continue
        found.append(r.normalized())
    if dedup_results:
        found = dedup(found)
    found.sort(key=lambda s: (round(s.action, 12), tuple(np.round(s.q[0], 9))))
    return found
