"""Compiled RK4 kernels for Hamiltonians of the form

    H(q, p, t) = 1/2 exp(2 phi(q)) |p|^2 + eps * beta(||p||^2) * V(q, t)

with ``phi`` and ``V`` finite Fourier cosine sums and ``beta`` a bump that
vanishes for ``||p|| >= supp``. Everything here works on batches and returns
numpy arrays; callers never touch jax directly.
"""

from __future__ import annotations

import math
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np

jax.config.update("jax_enable_x64", True)

TWO_PI = 2.0 * math.pi
BUMPS = ("cos2", "cos4", "flat-top")


def _phi(params, q):
    return jnp.sum(params["mc"] * jnp.cos(TWO_PI * (params["mk"] @ q)))


def _potential(params, q, t):
    arg = TWO_PI * (params["vk"] @ q + params["vl"] * t) + params["vph"]
    return jnp.sum(params["vc"] * jnp.cos(arg))


def _cos_sqrt(c, x):
    # cos(c*sqrt(x)) with a Taylor branch near 0 so that jax derivatives stay finite
    y2 = c * c * x
    small = y2 < 1e-2
    xs = jnp.where(small, 1.0, x)
    big = jnp.cos(c * jnp.sqrt(xs))
    poly = 1.0
    term = 1.0
    for j in range(1, 7):
        term = -term * y2 / ((2 * j - 1) * (2 * j))
        poly = poly + term
    return jnp.where(small, poly, big)


def _bump(params, x, kind):
    supp = params["supp"]
    if kind == "flat-top":
        # profile in ||p||^2 rather than ||p||: no quadratic term at p = 0
        g = 0.5 * (1.0 + jnp.cos(jnp.pi * x / (supp * supp)))
        return jnp.where(x >= supp * supp, 0.0, g)
    g = 0.5 * (1.0 + _cos_sqrt(jnp.pi / supp, x))
    if kind == "cos4":
        g = g * g
    return jnp.where(x >= supp * supp, 0.0, g)


def hamiltonian(params, q, p, t, kind):
    conf = jnp.exp(2.0 * _phi(params, q))
    r2 = conf * (p @ p)
    return 0.5 * r2 + params["eps"] * _bump(params, r2, kind) * _potential(params, q, t)


def _split(z):
    n = z.shape[0] // 2
    return z[:n], z[n:]


def _rhs(params, z, t, kind):
    q, p = _split(z)
    hq, hp = jax.grad(hamiltonian, argnums=(1, 2))(params, q, p, t, kind)
    lag = p @ hp - hamiltonian(params, q, p, t, kind)
    return jnp.concatenate([hp, -hq]), lag


def _norm(params, z):
    q, p = _split(z)
    return jnp.exp(_phi(params, q)) * jnp.sqrt(p @ p)


def _integrate_one(params, z0, t0, duration, nsteps, kind, with_jac):
    h = duration / nsteps
    dim = z0.shape[0]

    def field(state, t):
        z, u, _ = state
        dz, lag = _rhs(params, z, t, kind)
        if with_jac:
            jac = jax.jacfwd(lambda w: _rhs(params, w, t, kind)[0])(z)
            du = jac @ u
        else:
            du = u
        return dz, du, lag

    def body(i, carry):
        z, u, s, rmax = carry
        t = t0 + i * h
        st = (z, u, s)
        k1 = field(st, t)
        k2 = field(tuple(a + 0.5 * h * b for a, b in zip(st, k1)), t + 0.5 * h)
        k3 = field(tuple(a + 0.5 * h * b for a, b in zip(st, k2)), t + 0.5 * h)
        k4 = field(tuple(a + h * b for a, b in zip(st, k3)), t + h)
        new = tuple(
            a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(st, k1, k2, k3, k4)
        )
        if not with_jac:
            new = (new[0], u, new[2])
        return new[0], new[1], new[2], jnp.maximum(rmax, _norm(params, new[0]))

    u0 = jnp.eye(dim) if with_jac else jnp.zeros((dim, dim))
    init = (z0, u0, jnp.zeros(()), _norm(params, z0))
    z, u, s, rmax = jax.lax.fori_loop(0, nsteps, body, init)
    return z, u, s, rmax


@partial(jax.jit, static_argnames=("kind", "with_jac"))
def _integrate_batch(params, z0, t0, duration, nsteps, kind, with_jac):
    fn = jax.vmap(_integrate_one, in_axes=(None, 0, 0, None, None, None, None))
    return fn(params, z0, t0, duration, nsteps, kind, with_jac)


@partial(jax.jit, static_argnames=("kind",))
def _hamiltonian_batch(params, q, p, t, kind):
    return jax.vmap(hamiltonian, in_axes=(None, 0, 0, 0, None))(params, q, p, t, kind)


def steps_for(duration, step):
    return max(1, int(math.ceil(abs(duration) / step - 1e-9)))


def integrate(params, q, p, t0, duration, step, kind="cos2", with_jac=False):
    """Integrate a batch of phase points for ``duration`` (may be negative).

    Returns ``(Q, P, jac, action, rmax)``; ``jac`` is None unless requested.
    ``action`` is the RK4 quadrature of ``p.dq - H dt`` on the same mesh.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    batch, n = q.shape
    t0 = np.broadcast_to(np.asarray(t0, dtype=float), (batch,))
    z0 = np.concatenate([q, p], axis=1)
    if duration == 0.0:
        eye = np.broadcast_to(np.eye(2 * n), (batch, 2 * n, 2 * n)).copy()
        r = np.asarray(_norm_batch(params, z0))
        return q.copy(), p.copy(), (eye if with_jac else None), np.zeros(batch), r
    nsteps = steps_for(duration, step)
    z, u, s, rmax = _integrate_batch(
        params, jnp.asarray(z0), jnp.asarray(t0), float(duration), nsteps, kind, with_jac
    )
    z = np.asarray(z)
    return (
        z[:, :n],
        z[:, n:],
        np.asarray(u) if with_jac else None,
        np.asarray(s),
        np.asarray(rmax),
    )


_norm_batch = jax.jit(jax.vmap(_norm, in_axes=(None, 0)))


def hamiltonian_values(params, q, p, t, kind="cos2"):
    q = np.atleast_2d(np.asarray(q, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (q.shape[0],))
    return np.asarray(_hamiltonian_batch(params, jnp.asarray(q), jnp.asarray(p), jnp.asarray(t), kind))


def make_params(n, metric_terms=(), potential_terms=(), eps=0.0, supp=1.0):
    """Pack Fourier data into the pytree the kernels expect.

    ``metric_terms``: iterable of ``(k, c)``; ``potential_terms``: iterable of
    ``(k, c, harmonic, phase)``.
    """
    mk = np.array([k for k, _ in metric_terms], dtype=float).reshape(-1, n)
    mc = np.array([c for _, c in metric_terms], dtype=float)
    vk = np.array([t[0] for t in potential_terms], dtype=float).reshape(-1, n)
    vc = np.array([t[1] for t in potential_terms], dtype=float)
    vl = np.array([t[2] for t in potential_terms], dtype=float)
    vph = np.array([t[3] for t in potential_terms], dtype=float)
    return {
        "mk": jnp.asarray(mk),
        "mc": jnp.asarray(mc),
        "vk": jnp.asarray(vk),
        "vc": jnp.asarray(vc),
        "vl": jnp.asarray(vl),
        "vph": jnp.asarray(vph),
        "eps": jnp.asarray(float(eps)),
        "supp": jnp.asarray(float(supp)),
    }
