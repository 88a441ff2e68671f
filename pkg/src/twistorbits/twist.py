"""Factorization of the time-one map into symplectic twist maps.

With ``G_t`` the flow of ``H`` from time 0 and ``h0^t`` the geodesic flow,

    F = F_2N o ... o F_1,   F_{2k-1} = h0^{-1} o G_{k/N} o G_{(k-1)/N}^{-1},   F_{2k} = h0^1.

For convex Hamiltonians the shorter factorization into the N pieces
``G_{k/N} o G_{(k-1)/N}^{-1}`` is also available (``mode="convex"``).
Every stage carries a generating function ``S_k(q, Q)`` evaluated as the
action of the stage trajectory; its partials are read off the endpoint
momenta, ``d1 S = -p`` and ``d2 S = P``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import HamiltonianSpec, segment_batch, time_one_map
from .errors import DecompositionError, InvalidInputError, OutOfRangeError
from .geometry import h0_batch

log = logging.getLogger(__name__)

TWIST_TOL = 1e-8
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
REGION_MARGIN = 0.05
CLIP_SLACK = 0.02
DEFAULT_GRID = None


def default_grid(n: int) -> tuple:
    """``(q points, p points)`` per dimension; 8 p-points per axis step over folds near the collar."""
    return (16, 32) if n == 1 else (16, 16)
AUTO_START = 4
AUTO_CAP = 256


@dataclass(frozen=True)
class TwistStage:
    """One factor ``F_k`` (``index`` is 1-based, as in ``F = F_2N o ... o F_1``).

    ``window`` is ``(start, length)`` of the flow segment of ``H`` (None for the
    pure geodesic stages); ``post_time`` is the geodesic time applied after it.
    """

    index: int
    kind: str
    hamiltonian: HamiltonianSpec = field(repr=False)
    window: tuple | None
    post_time: float
    nominal_time: float
    margin: float = math.nan
    sign_uniform: bool = True

    @property
    def n(self) -> int:
        return self.hamiltonian.n

    @property
    def passes_twist(self) -> bool:
        return self.sign_uniform and self.margin > TWIST_TOL

    def evaluate(self, q, p, with_jac=False):
        """Batched ``F_k``; returns ``(Q, P, jac, S)`` with ``S`` the stage action."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        batch = q.shape[0]
        starts = np.full(batch, self.window[0] if self.window else math.nan)
        duration = self.window[1] if self.window else 0.0
        return _evaluate(
            self.hamiltonian, starts, duration, np.full(batch, self.post_time), q, p, with_jac
        )


def _evaluate(H, starts, duration, post, q, p, with_jac):
    q = np.atleast_2d(np.asarray(q, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    batch, n = q.shape
    Q, P = q.copy(), p.copy()
    S = np.zeros(batch)
    jac = np.broadcast_to(np.eye(2 * n), (batch, 2 * n, 2 * n)).copy() if with_jac else None
    windowed = np.nonzero(~np.isnan(starts))[0]
    if windowed.size:
        Qw, Pw, Jw, Sw = segment_batch(H, starts[windowed], duration, q[windowed], p[windowed], with_jac)
        Q[windowed], P[windowed] = Qw, Pw
        S[windowed] += Sw
        if with_jac:
            jac[windowed] = Jw
    moved = np.nonzero(post != 0.0)[0]
    if moved.size:
        Qh, Ph, Jh, Sh = h0_batch(H.metric, Q[moved], P[moved], post[moved], with_jac, step=H.step)
        Q[moved], P[moved] = Qh, Ph
        S[moved] += Sh
        if with_jac:
            jac[moved] = Jh @ jac[moved]
    return Q, P, jac, S


@dataclass(frozen=True)
class PairSolution:
    """Result of inverting ``psi_k`` on a batch of pairs ``(q, Q)``."""

    p: np.ndarray
    P: np.ndarray
    jac: np.ndarray
    S: np.ndarray
    iterations: int


def _clip(metric, q, p, radius):
    norms = metric.norm(q, p)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return p * scale[:, None]


def _newton_pairs(evaluate, metric, nominal, q, Q, p0, region, tol, max_iter, max_halvings=8):
    """Batched damped Newton for ``base F(q, p) = Q``.

    Iterates are kept inside ``||p|| <= region + CLIP_SLACK`` (where every
    stage is free flow, so nothing escapes) and each sample halves its own
    step while its residual grows.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = q.shape[1]
    if p0 is None:
        fac = metric.conformal_factor(q)[:, None]
        p = (Q - q) / (nominal[:, None] * fac)
    else:
        p = np.array(p0, dtype=float, copy=True)
    radius = region + CLIP_SLACK
    p = _clip(metric, q, p, radius)
    Qp, Pp, jac, S = evaluate(q, p)
    res = Qp - Q
    err = np.max(np.abs(res), axis=1)
    for it in range(max_iter + 1):
        if np.all(err < tol):
            norms = metric.norm(q, p)
            bad = np.nonzero(norms > region)[0]
            if bad.size:
                raise OutOfRangeError(
                    f"preimage ||p|| = {norms[bad[0]]:.6g} outside the region {region:.6g}", bad
                )
            return PairSolution(p, Pp, jac, S, it)
        if it == max_iter:
            break
        try:
            dp = np.linalg.solve(jac[:, :n, n:], res[..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise OutOfRangeError("singular dQ/dp during inversion", np.nonzero(err >= tol)[0])
        if not np.all(np.isfinite(dp)):
            raise OutOfRangeError("inversion diverged", np.nonzero(~np.isfinite(dp).all(axis=1))[0])
        active = err >= tol
        t = np.where(active, 1.0, 0.0)
        for _ in range(max_halvings):
            trial = _clip(metric, q, p - t[:, None] * dp, radius)
            out = evaluate(q, trial)
            new_err = np.max(np.abs(out[0] - Q), axis=1)
            worse = active & (new_err > err) & (new_err >= tol)
            if not worse.any():
                break
            t[worse] *= 0.5
        p = trial
        Qp, Pp, jac, S = out
        res = Qp - Q
        err = new_err
    raise OutOfRangeError(
        f"inversion did not converge in {max_iter} iterations", np.nonzero(err >= tol)[0]
    )


@dataclass(frozen=True)
class Decomposition:
    hamiltonian: HamiltonianSpec = field(repr=False)
    N: int
    mode: str
    stages: tuple
    composition_residual: float = math.nan

    @property
    def period_length(self) -> int:
        return len(self.stages)

    @property
    def n(self) -> int:
        return self.hamiltonian.n

    @property
    def region(self) -> float:
        return self.hamiltonian.C + REGION_MARGIN

    def nominal_times(self, idx) -> np.ndarray:
        return np.array([self.stages[i % self.period_length].nominal_time for i in np.atleast_1d(idx)])

    def evaluate(self, idx, q, p, with_jac=False):
        """Batched evaluation of stage ``idx[b] mod 2N`` at ``(q[b], p[b])``."""
        idx = np.asarray(idx) % self.period_length
        stages = [self.stages[i] for i in idx]
        starts = np.array([s.window[0] if s.window else math.nan for s in stages])
        windows = {s.window[1] for s in stages if s.window}
        if len(windows) > 1:
            raise InvalidInputError("stages in a batch must share their window length")
        duration = windows.pop() if windows else 0.0
        post = np.array([s.post_time for s in stages])
        return _evaluate(self.hamiltonian, starts, duration, post, q, p, with_jac)

    def solve(self, idx, q, Q, p0=None, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER) -> PairSolution:
        """Invert ``psi_k(q, p) = (q, Q)`` for a batch of pairs."""
        idx = np.asarray(idx)
        return _newton_pairs(
            lambda qq, pp: self.evaluate(idx, qq, pp, with_jac=True),
            self.hamiltonian.metric,
            self.nominal_times(idx),
            q,
            Q,
            p0,
            self.region,
            tol,
            max_iter,
        )

    def compose(self, q, p, with_jac=False):
        """``F_2N o ... o F_1`` on a batch."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        p = np.atleast_2d(np.asarray(p, dtype=float))
        batch = q.shape[0]
        jac = None
        for k in range(self.period_length):
            q, p, J, _ = self.evaluate(np.full(batch, k), q, p, with_jac)
            if with_jac:
                jac = J if jac is None else J @ jac
        return q, p, jac

    def summary(self) -> dict:
        return {
            "N": self.N,
            "mode": self.mode,
            "stage_kinds": [s.kind for s in self.stages],
            "nominal_times": [s.nominal_time for s in self.stages],
            "twist_margins": [s.margin for s in self.stages],
            "composition_residual": self.composition_residual,
        }


def _build_stages(H: HamiltonianSpec, N: int, mode: str):
    stages = []
    if mode == "twist":
        for k in range(1, N + 1):
            window = ((k - 1) / N, 1.0 / N)
            stages.append(TwistStage(2 * k - 1, "odd", H, window, -1.0, (1.0 - N) / N))
            stages.append(TwistStage(2 * k, "even", H, None, 1.0, 1.0))
    elif mode == "convex":
        for k in range(1, N + 1):
            stages.append(TwistStage(k, "convex", H, ((k - 1) / N, 1.0 / N), 0.0, 1.0 / N))
    else:
        raise InvalidInputError(f"unknown decomposition mode {mode!r}")
    return stages


def validation_grid(H: HamiltonianSpec, grid=DEFAULT_GRID, margin=REGION_MARGIN):
    """Sample points ``(q, p)`` with ``q`` on a lattice of the torus and ``||p|| <= C + margin``."""
    n = H.n
    nq, npd = grid or default_grid(n)
    rho = H.C + margin
    axes_q = [np.arange(nq) / nq] * n
    qs = np.stack(np.meshgrid(*axes_q, indexing="ij"), axis=-1).reshape(-1, n)
    unit = np.linspace(-1.0, 1.0, npd)
    ps = np.stack(np.meshgrid(*([unit] * n), indexing="ij"), axis=-1).reshape(-1, n)
    ps = ps[np.linalg.norm(ps, axis=1) <= 1.0 + 1e-12]
    q_all = np.repeat(qs, len(ps), axis=0)
    scale = rho * np.exp(-H.metric.phi(q_all))[:, None]
    p_all = np.tile(ps, (len(qs), 1)) * scale
    return q_all, p_all


def twist_margin(stage: TwistStage, grid=DEFAULT_GRID, margin=REGION_MARGIN):
    """``(min |det dQ/dp|, sign_uniform)`` over the validation grid."""
    q, p = validation_grid(stage.hamiltonian, grid, margin)
    n = stage.n
    _, _, jac, _ = stage.evaluate(q, p, with_jac=True)
    dets = np.linalg.det(jac[:, :n, n:])
    signs = np.sign(dets)
    return float(np.min(np.abs(dets))), bool(np.all(signs == signs[0]) and signs[0] != 0)


def collar_defect(H: HamiltonianSpec, samples=64, seed=0) -> float:
    """``max |H - H0|`` over random collar points ``C - delta <= ||p|| <= C + margin``."""
    rng = np.random.default_rng(seed)
    n = H.n
    q = rng.uniform(0.0, 1.0, (samples, n))
    direction = rng.normal(size=(samples, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = rng.uniform(H.C - H.delta, H.escape_radius, samples)
    p = direction * (r * np.exp(-H.metric.phi(q)))[:, None]
    t = rng.uniform(0.0, 1.0, samples)
    return float(np.max(np.abs(H.value(q, p, t) - H.unperturbed().value(q, p, t))))


def composition_residual(decomp: Decomposition, samples=16, seed=0) -> float:
    """``max ||(F_2N o ... o F_1)(z) - F(z)||`` at random ``z`` with ``||p|| <= C``."""
    H = decomp.hamiltonian
    q, p = random_ball_points(H, samples, seed)
    Qc, Pc, _ = decomp.compose(q, p)
    Qd, Pd, _ = time_one_map(H, q, p)
    return float(np.max(np.abs(np.concatenate([Qc - Qd, Pc - Pd], axis=1))))


def random_ball_points(H: HamiltonianSpec, samples, seed=0, radius=None):
    rng = np.random.default_rng(seed)
    n = H.n
    radius = H.C if radius is None else radius
    q = rng.uniform(0.0, 1.0, (samples, n))
    direction = rng.normal(size=(samples, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, samples) ** (1.0 / n)
    p = direction * (r * np.exp(-H.metric.phi(q)))[:, None]
    return q, p


def _with_margins(H, N, mode, grid):
    stages = _build_stages(H, N, mode)
    out = []
    cache = {}
    for s in stages:
        key = s.kind if not H.time_dependent else s.index
        if key not in cache:
            cache[key] = twist_margin(s, grid)
        mu, uniform = cache[key]
        out.append(replace(s, margin=mu, sign_uniform=uniform))
    return out


def aligned_step(H: HamiltonianSpec, N: int) -> HamiltonianSpec:
    """Shrink the integrator step so each window ``1/N`` holds a whole number of steps.

    The stage meshes then coincide with the mesh of the one-piece time-one map.
    """
    per_window = max(1, math.ceil(round(1.0 / (N * H.step), 9)))
    return H.with_step(1.0 / (N * per_window))


def decompose(H: HamiltonianSpec, N="auto", mode="twist", grid=DEFAULT_GRID, cap=AUTO_CAP,
              residual_samples=16) -> Decomposition:
    """Split the time-one map of ``H`` into twist stages and validate them.

    With ``N="auto"`` the number of pieces starts at 4 and doubles until every
    stage passes the twist check, up to ``cap``.
    """
    defect = collar_defect(H)
    if defect != 0.0:
        raise InvalidInputError(f"H differs from H0 on the collar by {defect:.3g}")
    if N == "auto":
        candidates = []
        n_try = AUTO_START
        while n_try <= cap:
            candidates.append(n_try)
            n_try *= 2
    else:
        N = int(N)
        if N < 1:
            raise InvalidInputError("N must be a positive integer")
        candidates = [N]
    for n_try in candidates:
        H = aligned_step(H, n_try)
        stages = _with_margins(H, n_try, mode, grid)
        failing = [s.index for s in stages if not s.passes_twist]
        if not failing:
            decomp = Decomposition(H, n_try, mode, tuple(stages))
            res = composition_residual(decomp, residual_samples)
            log.info("decomposition N=%d accepted, composition residual %.3g", n_try, res)
            return replace(decomp, composition_residual=res)
        log.info("N=%d: twist check failed on stages %s", n_try, failing)
    raise DecompositionError(f"no decomposition passes the twist check up to N={candidates[-1]}")


def psi_inverse(stage: TwistStage, q, Q) -> np.ndarray:
    """Covector ``p`` with ``psi_k(q, p) = (q, Q)``."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q2 = np.atleast_2d(q)
    sol = _newton_pairs(
        lambda qq, pp: stage.evaluate(qq, pp, with_jac=True),
        stage.hamiltonian.metric,
        np.full(q2.shape[0], stage.nominal_time),
        q2,
        Q,
        None,
        stage.hamiltonian.C + REGION_MARGIN,
        NEWTON_TOL,
        NEWTON_MAX_ITER,
    )
    return sol.p[0] if single else sol.p


def generating_value_and_partials(stage: TwistStage, q, Q):
    """``(S, d1 S, d2 S) = (S, -p, P)`` for the pair ``(q, Q)``."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q2 = np.atleast_2d(q)
    sol = _newton_pairs(
        lambda qq, pp: stage.evaluate(qq, pp, with_jac=True),
        stage.hamiltonian.metric,
        np.full(q2.shape[0], stage.nominal_time),
        q2,
        Q,
        None,
        stage.hamiltonian.C + REGION_MARGIN,
        NEWTON_TOL,
        NEWTON_MAX_ITER,
    )
    if single:
        return float(sol.S[0]), -sol.p[0], sol.P[0]
    return sol.S, -sol.p, sol.P
