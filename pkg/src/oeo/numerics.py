"""Rayleigh quotients, generalized eigenvectors by power iteration, an Adam
stepper, gradient sanitizing, finite differences and random SPD matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Array

SANITIZE_LIMIT = 1e6
COND_LIMIT = 1e12
SYM_TOL = 1e-10


def is_spd(m) -> bool:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    if not np.allclose(m, m.T, rtol=0.0, atol=SYM_TOL * max(1.0, np.abs(m).max())):
        return False
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return False
    return True


def rayleigh(w, c_num, c_den) -> float:
    """``w' C_num w / w' C_den w``; invariant to rescaling ``w``."""
    w = np.asarray(w, dtype=float)
    if not np.any(w):
        raise ValueError("rayleigh quotient of the zero vector")
    return float(w @ c_num @ w) / float(w @ c_den @ w)


def gev_power(
    c_num,
    c_den,
    k: int = 1,
    iters: int = 7,
    oversample: int = 3,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Array, Array]:
    """Top-``k`` generalized eigenpairs of ``C_den^-1 C_num`` by block power
    iteration.

    Works on the symmetric form ``L^-1 C_num L^-T`` (``C_den = L L'``), so the
    power iterates stay orthogonal in the ``C_den`` inner product and each
    component is deflated against the others by the orthogonalization. A block
    of ``k + oversample`` vectors is iterated and a final Rayleigh-Ritz step on
    that block orders the components. Columns of ``W`` satisfy
    ``w' C_den w = 1``; eigenvalues come back in descending order.
    """
    c_num = np.asarray(c_num, dtype=float)
    c_den = np.asarray(c_den, dtype=float)
    n = c_num.shape[0]
    if c_num.shape != (n, n) or c_den.shape != (n, n):
        raise ValueError("matrices must be square and of equal size")
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if not np.all(np.isfinite(c_den)) or np.linalg.cond(c_den) > COND_LIMIT:
        raise ValueError("denominator matrix is singular or ill-conditioned")
    try:
        chol = np.linalg.cholesky(c_den)
    except np.linalg.LinAlgError as exc:
        raise ValueError("denominator matrix is not positive definite") from exc
    linv = np.linalg.solve(chol, np.eye(n))
    s = linv @ c_num @ linv.T
    s = 0.5 * (s + s.T)

    rng = rng if rng is not None else np.random.default_rng(0)
    p = min(n, k + max(oversample, 0))
    q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    for _ in range(iters):
        q, _ = np.linalg.qr(s @ q)
    ritz_vals, ritz_vecs = np.linalg.eigh(q.T @ s @ q)
    order = np.argsort(ritz_vals)[::-1][:k]
    v = q @ ritz_vecs[:, order]
    w = linv.T @ v
    # fix the sign so the largest-magnitude entry of each column is positive
    idx = np.argmax(np.abs(w), axis=0)
    w = w * np.sign(w[idx, np.arange(k)])
    return w, ritz_vals[order]


@dataclass
class AdamState:
    first_moment: Array
    second_moment: Array
    step_count: int = 0
    learning_rate: float = 0.2
    momentum1: float = 0.9
    momentum2: float = 0.9
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, size: int, **kw) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), **kw)


def adam_step(params, grad, st: AdamState) -> tuple[Array, AdamState]:
    """One bias-corrected Adam update; returns new params and a new state."""
    g = np.asarray(grad, dtype=float)
    t = st.step_count + 1
    m = st.momentum1 * st.first_moment + (1.0 - st.momentum1) * g
    v = st.momentum2 * st.second_moment + (1.0 - st.momentum2) * g * g
    m_hat = m / (1.0 - st.momentum1**t)
    v_hat = v / (1.0 - st.momentum2**t)
    new = np.asarray(params, dtype=float) - st.learning_rate * m_hat / (np.sqrt(v_hat) + st.epsilon)
    return new, AdamState(
        m, v, t, st.learning_rate, st.momentum1, st.momentum2, st.epsilon
    )


def sanitize_gradient(grad) -> Array:
    """Zero out entries that are NaN/inf or larger than 1e6 in magnitude."""
    g = np.array(grad, dtype=float)
    bad = ~np.isfinite(g)
    bad |= np.abs(np.where(bad, 0.0, g)) > SANITIZE_LIMIT
    g[bad] = 0.0
    return g


def finite_diff(f: Callable[[Array], float], x, h: float = 1e-6) -> Array:
    """Central differences with a step of ``h * max(1, |x_i|)``."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i])
    return g


def random_spd(n: int, rng: np.random.Generator, condition_cap: float = 1e4) -> Array:
    """``Q diag(lam) Q'`` with Haar-random ``Q`` and a log-uniform spectrum in
    ``[1e-3, 1e-3 * condition_cap]``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if condition_cap < 1:
        raise ValueError("condition_cap must be >= 1")
    z = rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    q = q * np.sign(np.diag(r))
    lam = 1e-3 * np.exp(rng.uniform(0.0, np.log(condition_cap), n))
    m = (q * lam) @ q.T
    return 0.5 * (m + m.T)
