"""Scalar (n = 1) optimal transport on discrete densities.

Provides the closed-form one-dimensional machinery (cumulative/quantile
formula, monotone coupling, displacement interpolation) and an exact
discrete transportation LP with dual certificates. The LP doubles as the
backend for the restricted matrix metric and as an oracle for the full
matrix solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

MASS_ATOL = 1e-9
MARGINAL_ATOL = 1e-9
DUAL_FEAS_SLACK = 1e-9


@dataclass(frozen=True)
class ScalarDensity:
    """Nonnegative masses on a strictly increasing grid of points."""

    grid: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        g = np.array(self.grid, dtype=np.float64)
        w = np.array(self.weights, dtype=np.float64)
        if g.ndim != 1 or w.ndim != 1 or g.shape != w.shape or g.size == 0:
            raise ValueError("grid and weights must be equal-length 1-D arrays")
        if not np.all(np.diff(g) > 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(w < -1e-15) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be nonnegative and finite")
        w = np.maximum(w, 0.0)
        g.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def is_normalized(self) -> bool:
        return abs(self.total_mass - 1.0) <= 1e-12

    def normalized(self) -> "ScalarDensity":
        m = self.total_mass
        if m <= 0:
            raise ValueError("cannot normalize a zero-mass density")
        return ScalarDensity(self.grid, self.weights / m)

    def cdf(self) -> np.ndarray:
        """Right-continuous cumulative sums F(x_k)."""
        return np.cumsum(self.weights)


def _check_equal_mass(mu0: ScalarDensity, mu1: ScalarDensity) -> None:
    if abs(mu0.total_mass - mu1.total_mass) > MASS_ATOL * (1.0 + mu0.total_mass):
        raise ValueError(
            f"mass mismatch: {mu0.total_mass!r} vs {mu1.total_mass!r}"
        )


def quantile(d: ScalarDensity, t) -> np.ndarray | float:
    """Generalized inverse F^{-1}(t) = min{x_k : F(x_k) >= t}.

    Ties break toward the smaller index, which makes the monotone coupling
    deterministic. Accepts a scalar or an array of levels in [0, 1].
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ValueError("quantile level must lie in [0, 1]")
    if not d.is_normalized:
        raise ValueError("quantile requires a normalized density")
    cum = d.cdf()
    idx = np.searchsorted(cum, t_arr, side="left")
    idx = np.minimum(idx, d.grid.size - 1)
    out = d.grid[idx]
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def w2_closed_form(mu0: ScalarDensity, mu1: ScalarDensity) -> float:
    """Quadratic transport cost via exact quantile-difference integration.

    Both quantile functions are piecewise constant, so integrating the
    squared difference over the merged cumulative breakpoints is exact.
    """
    if not (mu0.is_normalized and mu1.is_normalized):
        raise ValueError("w2_closed_form requires normalized densities")
    _check_equal_mass(mu0, mu1)
    levels = np.union1d(mu0.cdf(), mu1.cdf())
    levels = np.concatenate([[0.0], np.minimum(levels, 1.0)])
    widths = np.diff(levels)
    mids = 0.5 * (levels[:-1] + levels[1:])
    keep = widths > 0
    q0 = quantile(mu0, mids[keep])
    q1 = quantile(mu1, mids[keep])
    return float(np.sum(widths[keep] * (q0 - q1) ** 2))


@dataclass(frozen=True)
class ScalarPlan:
    """A coupling matrix together with references to its marginals."""

    coupling: np.ndarray
    row_marginal: ScalarDensity
    col_marginal: ScalarDensity

    def __post_init__(self) -> None:
        c = np.array(self.coupling, dtype=np.float64)
        if c.shape != (self.row_marginal.grid.size, self.col_marginal.grid.size):
            raise ValueError("coupling shape does not match the marginals")
        if np.any(c < -1e-12):
            raise ValueError("coupling must be nonnegative")
        c = np.maximum(c, 0.0)
        row_err = np.max(np.abs(c.sum(axis=1) - self.row_marginal.weights))
        col_err = np.max(np.abs(c.sum(axis=0) - self.col_marginal.weights))
        if max(row_err, col_err) > MARGINAL_ATOL:
            raise ValueError(
                f"coupling marginals off by {max(row_err, col_err):.3e}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coupling", c)

    def cost(self, cost_matrix: np.ndarray) -> float:
        return float(np.sum(self.coupling * cost_matrix))

    def support(self, threshold: float = 0.0) -> np.ndarray:
        """Indices (i, j) of cells with mass above the threshold."""
        return np.argwhere(self.coupling > threshold)


@dataclass(frozen=True)
class DualCertificate:
    """Feasible potentials phi0, phi1 with phi0[i] - phi1[j] <= C[i][j]."""

    phi0: np.ndarray
    phi1: np.ndarray

    def feasibility_violation(self, cost_matrix: np.ndarray) -> float:
        return float(
            np.max(self.phi0[:, None] - self.phi1[None, :] - cost_matrix)
        )

    def objective(self, mu0: ScalarDensity, mu1: ScalarDensity) -> float:
        return float(self.phi0 @ mu0.weights - self.phi1 @ mu1.weights)


def monotone_map(mu0: ScalarDensity, mu1: ScalarDensity) -> ScalarPlan:
    """Northwest-corner monotone coupling, optimal for quadratic cost."""
    _check_equal_mass(mu0, mu1)
    n, m = mu0.grid.size, mu1.grid.size
    plan = np.zeros((n, m))
    rem0 = mu0.weights.copy()
    rem1 = mu1.weights.copy()
    # Rescale so both sides exhaust simultaneously despite roundoff.
    if rem1.sum() > 0:
        rem1 *= rem0.sum() / rem1.sum()
    i = j = 0
    while i < n and j < m:
        step = min(rem0[i], rem1[j])
        plan[i, j] = step
        rem0[i] -= step
        rem1[j] -= step
        exhausted0 = rem0[i] <= 0.0
        exhausted1 = rem1[j] <= 0.0
        if exhausted0 and exhausted1:
            i += 1
            j += 1
        elif exhausted0:
            i += 1
        else:
            j += 1
    return ScalarPlan(plan, mu0, mu1)


def displacement_geodesic(
    mu0: ScalarDensity, mu1: ScalarDensity, tau: float
) -> ScalarDensity:
    """Push each monotone-coupling atom to (1 - tau) x + tau y.

    The result lives on its own (generally non-uniform) support grid;
    use ``rebin`` to map it back onto a fixed grid for plotting.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    plan = monotone_map(mu0, mu1)
    ii, jj = np.nonzero(plan.coupling)
    pos = (1.0 - tau) * mu0.grid[ii] + tau * mu1.grid[jj]
    mass = plan.coupling[ii, jj]
    order = np.argsort(pos, kind="stable")
    pos, mass = pos[order], mass[order]
    span = max(pos[-1] - pos[0], 1.0) if pos.size else 1.0
    new_atom = np.concatenate([[True], np.diff(pos) > 1e-12 * span])
    idx = np.cumsum(new_atom) - 1
    grid = pos[new_atom]
    weights = np.zeros(grid.size)
    np.add.at(weights, idx, mass)
    return ScalarDensity(grid, weights)


def rebin(d: ScalarDensity, grid) -> ScalarDensity:
    """Split each atom linearly onto the two nearest points of ``grid``.

    Rebinning is lossy, so it is a separate opt-in step rather than part
    of ``displacement_geodesic``. Atoms outside the grid clamp to its ends.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 1 or g.size < 1 or not np.all(np.diff(g) > 0):
        raise ValueError("target grid must be 1-D and strictly increasing")
    w = np.zeros(g.size)
    x = np.clip(d.grid, g[0], g[-1])
    hi = np.clip(np.searchsorted(g, x, side="left"), 0, g.size - 1)
    lo = np.maximum(hi - 1, 0)
    width = np.where(hi > lo, g[hi] - g[lo], 1.0)
    frac_hi = np.where(hi > lo, (x - g[lo]) / width, 1.0)
    np.add.at(w, lo, d.weights * (1.0 - frac_hi))
    np.add.at(w, hi, d.weights * frac_hi)
    return ScalarDensity(g, w)


def discrete_ot_lp(
    cost_matrix: np.ndarray, mu0: ScalarDensity, mu1: ScalarDensity
) -> tuple[ScalarPlan, float, DualCertificate]:
    """Exact discrete transportation problem with dual certificate.

    Solved with the HiGHS dual simplex, which returns a vertex solution
    and exact-to-roundoff equality multipliers; the duality gap is
    certified to 1e-8 * (1 + |value|).
    """
    c = np.asarray(cost_matrix, dtype=np.float64)
    n, m = mu0.grid.size, mu1.grid.size
    if c.shape != (n, m):
        raise ValueError(f"cost matrix shape {c.shape} != ({n}, {m})")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix must be finite")
    _check_equal_mass(mu0, mu1)

    a = mu0.weights
    b = mu1.weights.copy()
    if b.sum() > 0:
        b *= a.sum() / b.sum()  # exact marginal consistency for the LP

    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    res = linprog(
        c.ravel(),
        A_eq=a_eq,
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise ArithmeticError(f"transportation LP failed: {res.message}")

    plan = ScalarPlan(res.x.reshape(n, m), mu0, mu1)
    value = float(res.fun)
    phi0 = np.asarray(res.eqlin.marginals[:n], dtype=np.float64)
    phi1 = -np.asarray(res.eqlin.marginals[n:], dtype=np.float64)
    cert = DualCertificate(phi0, phi1)
    viol = cert.feasibility_violation(c)
    if viol > DUAL_FEAS_SLACK:
        # Restore feasibility; the repaired pair stays within the gap bound.
        cert = DualCertificate(np.min(c + phi1[None, :], axis=1), phi1)
    gap = value - cert.objective(mu0, mu1)
    if abs(gap) > 1e-8 * (1.0 + abs(value)):
        raise ArithmeticError(f"duality gap {gap:.3e} exceeds certificate bound")
    return plan, value, cert
