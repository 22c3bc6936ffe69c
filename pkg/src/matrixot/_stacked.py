"""Vectorized per-cell kernels for the matrix transport splitting solver.

Everything here operates on stacks: ``h`` has shape (cells, n, n) and the
scalar channel has shape (cells,). These are internal numerical routines;
the public API lives in the sibling modules.
"""

from __future__ import annotations

import numpy as np

from .hermitian import hermitize


def eigh_stack(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a stack of Hermitian matrices.

    Returns (w, v) with eigenvalues ascending, matching ``np.linalg.eigh``.
    Dimensions 1 and 2 use closed forms; larger ones fall back to LAPACK.
    """
    n = h.shape[-1]
    if n == 1:
        w = h[..., 0, 0].real.copy()[..., None]
        v = np.ones(h.shape, dtype=np.complex128)
        return w, v
    if n == 2:
        return _eigh_stack_2x2(h)
    return np.linalg.eigh(h)


def _eigh_stack_2x2(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = h[..., 0, 0].real
    d = h[..., 1, 1].real
    b = h[..., 0, 1]
    half = 0.5 * (a - d)
    mean = 0.5 * (a + d)
    delta = np.sqrt(half * half + b.real**2 + b.imag**2)
    w = np.stack([mean - delta, mean + delta], axis=-1)

    # Eigenvector for the larger eigenvalue; two algebraically equivalent
    # candidates, picked per cell by conditioning (norm >= delta).
    hi = w[..., 1]
    use_alt = half >= 0.0
    p = np.where(use_alt, hi - d, b)
    q = np.where(use_alt, np.conj(b), hi - a)
    norm = np.sqrt(p.real**2 + p.imag**2 + q.real**2 + q.imag**2)
    degenerate = norm < 1e-150
    safe = np.where(degenerate, 1.0, norm)
    p = np.where(degenerate, 1.0, p / safe)
    q = np.where(degenerate, 0.0, q / safe)

    v = np.empty(h.shape, dtype=np.complex128)
    v[..., 0, 1] = p
    v[..., 1, 1] = q
    v[..., 0, 0] = -np.conj(q)
    v[..., 1, 0] = np.conj(p)
    return w, v


def reconstruct_stack(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Assemble V diag(w) V^H for stacks."""
    return (v * w[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def _active_breaks(w_desc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Prefix sums S_k and activation breakpoints T_k = S_k - k * w_(k).

    ``w_desc`` holds eigenvalues sorted descending along the last axis.
    The map t -> theta(t) solving sum(max(w - theta, 0)) = t is piecewise
    linear with theta = (S_k - t) / k once t >= T_k activates k entries.
    """
    n = w_desc.shape[-1]
    s = np.cumsum(w_desc, axis=-1)
    k = np.arange(1, n + 1, dtype=np.float64)
    t_break = s - k * w_desc
    return s, t_break


def project_cone_coupled(
    g0: np.ndarray, g1: np.ndarray, s: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project (g0, g1, s) onto {h0 >= 0, h1 >= 0, tr h0 = tr h1 = t}.

    Exact joint projection: each block is projected in its own eigenbasis,
    and the shared trace t solves the piecewise-linear stationarity
    condition theta0(t) + theta1(t) = t - s, resolved per linear piece.
    """
    w0, v0 = eigh_stack(hermitize(g0))
    w1, v1 = eigh_stack(hermitize(g1))

    d0 = w0[..., ::-1]  # descending
    d1 = w1[..., ::-1]
    s0, t0 = _active_breaks(d0)
    s1, t1 = _active_breaks(d1)

    breaks = np.sort(np.concatenate([t0, t1], axis=-1), axis=-1)  # (cells, 2n)

    # Active counts and theta values at every breakpoint.
    k0 = np.sum(t0[..., None, :] <= breaks[..., :, None], axis=-1)
    k1 = np.sum(t1[..., None, :] <= breaks[..., :, None], axis=-1)
    k0 = np.maximum(k0, 1)
    k1 = np.maximum(k1, 1)
    s0_at = np.take_along_axis(s0[..., None, :], k0[..., None] - 1, axis=-1)[..., 0]
    s1_at = np.take_along_axis(s1[..., None, :], k1[..., None] - 1, axis=-1)[..., 0]
    theta0 = (s0_at - breaks) / k0
    theta1 = (s1_at - breaks) / k1
    phi = theta0 + theta1 + s[..., None] - breaks  # decreasing in t

    piece = np.maximum(np.sum(phi >= 0.0, axis=-1) - 1, 0)
    kp0 = np.take_along_axis(k0, piece[..., None], axis=-1)[..., 0]
    kp1 = np.take_along_axis(k1, piece[..., None], axis=-1)[..., 0]
    sp0 = np.take_along_axis(s0_at, piece[..., None], axis=-1)[..., 0]
    sp1 = np.take_along_axis(s1_at, piece[..., None], axis=-1)[..., 0]

    t = (sp0 / kp0 + sp1 / kp1 + s) / (1.0 + 1.0 / kp0 + 1.0 / kp1)
    t = np.maximum(t, 0.0)

    # At t = 0 theta equals the largest eigenvalue, so the clip zeroes h.
    theta0_star = (sp0 - t) / kp0
    theta1_star = (sp1 - t) / kp1
    h0 = np.maximum(w0 - theta0_star[..., None], 0.0)
    h1 = np.maximum(w1 - theta1_star[..., None], 0.0)
    return reconstruct_stack(h0, v0), reconstruct_stack(h1, v1), t


def prox_perspective(
    g0: np.ndarray,
    g1: np.ndarray,
    s: np.ndarray,
    cost: np.ndarray,
    lam: float,
    gamma: float,
    mass_tol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Prox of per-cell f(h0, h1, t) = c*t + lam*||h0 - h1||_F^2 / t, t >= 0.

    Uses the closed perspective extension (0 at (0, 0, 0)). Splitting into
    sum/difference channels leaves a monotone scalar equation for the mass,
    solved by bisection to ``mass_tol``.
    """
    gs = g0 + g1
    gd = g0 - g1
    k = np.sum(gd.real**2 + gd.imag**2, axis=(-1, -2))

    if lam == 0.0:
        t = np.maximum(s - gamma * cost, 0.0)
        d = gd
    else:
        a = 4.0 * gamma * lam

        def dpsi(t):
            return cost + (t - s) / gamma - lam * k / (t + a) ** 2

        t = np.zeros_like(s)
        active = dpsi(t) < 0.0
        if np.any(active):
            lo = np.zeros_like(s)
            hi = np.maximum(s, 0.0) + gamma * (lam * k / a**2 + 1.0)
            span = np.max(hi)
            iters = max(int(np.ceil(np.log2(max(span, 1.0) / mass_tol))) + 4, 48)
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                neg = dpsi(mid) < 0.0
                lo = np.where(neg, mid, lo)
                hi = np.where(neg, hi, mid)
            t = np.where(active, 0.5 * (lo + hi), 0.0)
        d = gd * (t / (t + a))[..., None, None]

    h0 = 0.5 * (gs + d)
    h1 = 0.5 * (gs - d)
    return h0, h1, t
