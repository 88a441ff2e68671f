"""Floquet multipliers by two independent routes.

``monodromy`` multiplies the stage Jacobians along the orbit and takes
eigenvalues. ``floquet_via_M`` never forms the monodromy: it uses the second
derivatives of the stage generating functions, assembled into the periodic
block matrix ``M(lam)`` whose determinant vanishes exactly at the multipliers,
and recovers the characteristic polynomial by interpolation on the unit circle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .action import (
    OrbitSequence,
    action_gradient,
    evaluate_sequence,
    hessian_blocks,
)
from .dynamics import symplectic_defect
from .errors import CrossValidationError, InvalidInputError, NumericFailureError

CRITICAL_TOL = 1e-8
KERNEL_TOL = 1e-8
UNIT_TOL = 1e-6
PAIRING_TOL = 1e-4
COND_LIMIT = 1e8


@dataclass(frozen=True)
class FloquetReport:
    multipliers: np.ndarray
    method: str
    nondegenerate: bool
    kernel_dim_at_1: int

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "multipliers": [[float(z.real), float(z.imag)] for z in self.multipliers],
            "nondegenerate": self.nondegenerate,
            "kernel_dim_at_1": self.kernel_dim_at_1,
        }


def compose_jacobians(jacs, n=None) -> np.ndarray:
    """``J_{L-1} ... J_1 J_0``; the empty product is the identity of size ``2n``."""
    jacs = list(jacs)
    if not jacs:
        if n is None:
            raise InvalidInputError("dimension needed for the empty product")
        return np.eye(2 * n)
    out = np.array(jacs[0], dtype=float)
    for J in jacs[1:]:
        out = J @ out
    return out


def monodromy(seq: OrbitSequence, tol=CRITICAL_TOL) -> np.ndarray:
    """Jacobian of ``F^d`` at the orbit point of a critical sequence."""
    state = evaluate_sequence(seq)
    grad = action_gradient(seq, state)
    if np.max(np.abs(grad)) >= tol:
        raise InvalidInputError(f"sequence is not critical: |grad W| = {np.max(np.abs(grad)):.3g}")
    return compose_jacobians(state.jac, seq.n)


def _sort(mult):
    return np.array(sorted(mult, key=lambda z: (round(abs(z), 10), round(z.real, 10), round(z.imag, 10))))


def geometric_multiplicity_at_1(DF, tol=KERNEL_TOL) -> int:
    s = np.linalg.svd(DF - np.eye(DF.shape[0]), compute_uv=False)
    return int(np.sum(s < tol * max(1.0, s[0])))


def floquet_via_monodromy(seq: OrbitSequence) -> FloquetReport:
    DF = monodromy(seq)
    mult = _sort(np.linalg.eigvals(DF).astype(complex))
    k = geometric_multiplicity_at_1(DF)
    nondeg = bool(np.all(np.abs(mult - 1.0) > UNIT_TOL))
    return FloquetReport(mult, "monodromy", nondeg, k)


def kernel_dimension(M, tol=KERNEL_TOL) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s < tol * max(1.0, s[0])))


def characteristic_coefficients(hess, nodes=None) -> np.ndarray:
    """Coefficients (highest degree first) of ``P(lam) = lam^n det M(lam)``.

    ``P`` has degree ``2n``; it is sampled at ``2n + 1`` points of the unit
    circle and recovered by solving the Vandermonde system. Determinants are
    computed as ``sign * exp(logdet)`` with a common scale so that long
    sequences do not overflow.
    """
    n = hess.n
    deg = 2 * n
    if nodes is None:
        nodes = np.exp(2j * np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
    logs, signs = [], []
    for lam in nodes:
        sgn, ld = np.linalg.slogdet(hess.assemble(complex(lam)))
        signs.append(sgn)
        logs.append(ld)
    logs = np.array(logs)
    if not np.all(np.isfinite(logs)):
        raise NumericFailureError("M(lam) singular at an interpolation node; shift the nodes")
    scale = np.max(logs)
    values = np.array(signs) * np.exp(logs - scale) * nodes ** n
    V = np.vander(nodes, deg + 1)
    cond = np.linalg.cond(V)
    if cond > COND_LIMIT:
        raise NumericFailureError(f"interpolation matrix condition {cond:.3g} exceeds {COND_LIMIT:.0e}")
    coeffs = np.linalg.solve(V, values)
    if abs(coeffs[0]) < 1e-14 * np.max(np.abs(coeffs)):
        raise NumericFailureError("leading coefficient of the characteristic polynomial vanished")
    return coeffs / coeffs[0]


def floquet_via_M(seq: OrbitSequence) -> FloquetReport:
    state = evaluate_sequence(seq)
    hess = hessian_blocks(state.jac)
    coeffs = characteristic_coefficients(hess)
    mult = _sort(np.roots(coeffs).astype(complex))
    k = kernel_dimension(hess.matrix)
    nondeg = bool(np.all(np.abs(mult - 1.0) > UNIT_TOL)) and k == 0
    return FloquetReport(mult, "M-lambda", nondeg, k)


def pair_multipliers(a, b):
    """Nearest pairing of two multisets; returns ``(pairs, max relative error)``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    rel = cost[rows, cols] / np.maximum(1.0, np.abs(a[rows]))
    return list(zip(a[rows], b[cols])), float(np.max(rel)) if rel.size else 0.0


def roots_at_one(mult, tol=UNIT_TOL) -> int:
    return int(np.sum(np.abs(np.asarray(mult) - 1.0) < tol))


@dataclass(frozen=True)
class CrossValidation:
    monodromy: FloquetReport
    via_M: FloquetReport
    max_relative_error: float
    kernel_dim_hessian: int
    eigen_multiplicity_at_1: int
    symplectic_defect: float
    tolerance: float = PAIRING_TOL

    @property
    def multipliers_agree(self) -> bool:
        return self.max_relative_error < self.tolerance

    @property
    def kernel_agrees(self) -> bool:
        return self.kernel_dim_hessian == self.eigen_multiplicity_at_1

    @property
    def ok(self) -> bool:
        return self.multipliers_agree and self.kernel_agrees

    def to_dict(self) -> dict:
        return {
            "max_relative_error": self.max_relative_error,
            "kernel_dim_hessian": self.kernel_dim_hessian,
            "eigen_multiplicity_at_1": self.eigen_multiplicity_at_1,
            "symplectic_defect": self.symplectic_defect,
            "ok": self.ok,
        }


def cross_validate(seq: OrbitSequence, strict=False, tol=PAIRING_TOL) -> CrossValidation:
    """Compare the two routes and the kernel of ``Hess W`` with the eigenspace of ``DF`` at 1."""
    mono = floquet_via_monodromy(seq)
    viaM = floquet_via_M(seq)
    _, err = pair_multipliers(mono.multipliers, viaM.multipliers)
    DF = monodromy(seq)
    report = CrossValidation(
        mono, viaM, err, viaM.kernel_dim_at_1, mono.kernel_dim_at_1, symplectic_defect(DF), tol
    )
    if strict and not report.ok:
        raise CrossValidationError(
            f"routes disagree: relative error {err:.3g}, kernel {report.kernel_dim_hessian} "
            f"vs multiplicity {report.eigen_multiplicity_at_1}"
        )
    return report


def classify(mult, tol=UNIT_TOL) -> str:
    """``elliptic``, ``hyperbolic``, ``parabolic`` or ``mixed`` from the multipliers."""
    mult = np.asarray(mult)
    on_circle = np.abs(np.abs(mult) - 1.0) < tol
    if np.all(np.abs(mult - 1.0) < tol) or np.all(np.abs(mult + 1.0) < tol):
        return "parabolic"
    if np.all(on_circle):
        return "elliptic"
    if not np.any(on_circle):
        return "hyperbolic"
    return "mixed"
