"""Multi-point geodesic approximation between two matrix-valued densities.

The interior densities at tau_k = k / N live on the endpoints' grid and
are chosen to minimize the sum of per-segment transport costs. In full
mode this is one jointly convex program solved monolithically by the
splitting engine (the interior densities are consensus variables shared
by adjacent segments). In restricted mode the segment costs are the
squared orientation-fixed metric, handled by block-coordinate descent
alternating a chain transportation LP with closed-form orientation
updates; the result is a stationary point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ._splitting import solve_chain
from .full import (
    GroundCost,
    MatrixDensity,
    SolverConfig,
    _clean_plan,
    _require_pair,
    solve_full,
    transport_cost,
)
from .restricted import RestrictedPlan, d2lambda


@dataclass(frozen=True)
class GeodesicPath:
    """Densities along the path plus the plans connecting them."""

    taus: np.ndarray
    densities: list[MatrixDensity]
    mode: str  # "full" | "restricted"
    segment_values: np.ndarray
    plans: list
    lam: float
    cost: GroundCost
    converged: bool
    iterations: int
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    restarts: int | None = None

    @property
    def total_value(self) -> float:
        return float(self.segment_values.sum())

    @property
    def n_segments(self) -> int:
        return len(self.plans)


def _require_shared_grid(mu0: MatrixDensity, mu1: MatrixDensity) -> None:
    if mu0.n_points != mu1.n_points or not np.array_equal(mu0.grid, mu1.grid):
        raise ValueError("interpolation requires both densities on one grid")


def interpolate(
    mu0: MatrixDensity,
    mu1: MatrixDensity,
    n_segments: int,
    cost: GroundCost,
    cfg: SolverConfig,
    mode: str = "full",
) -> GeodesicPath:
    """Jointly minimize the sum of segment costs over interior densities."""
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    if mode not in ("full", "restricted"):
        raise ValueError(f"unknown mode {mode!r}")
    _require_pair(mu0, mu1, strict_trace=True)
    if n_segments > 1:
        _require_shared_grid(mu0, mu1)
    if mode == "full":
        return _interpolate_full(mu0, mu1, n_segments, cost, cfg)
    return _interpolate_restricted(mu0, mu1, n_segments, cost, cfg)


def _interpolate_full(mu0, mu1, k, cost, cfg) -> GeodesicPath:
    taus = np.arange(k + 1) / k
    if k == 1:
        res = solve_full(mu0, mu1, cost, cfg)
        return GeodesicPath(
            taus=taus,
            densities=[mu0, mu1],
            mode="full",
            segment_values=np.array([res.value]),
            plans=[res.plan],
            lam=cfg.lam,
            cost=cost,
            converged=res.converged,
            iterations=res.iterations,
            primal_residual=res.primal_residual,
            dual_residual=res.dual_residual,
        )

    # Warm start from the restricted stationary point: its lifted plans are
    # feasible for the full program and usually close to its optimum.
    warm = _interpolate_restricted(mu0, mu1, k, cost, cfg)
    init = _lift_restricted_path(warm)

    sol = solve_chain(
        mu0.blocks,
        mu1.blocks,
        cost.matrix,
        cfg.lam,
        n_segments=k,
        tol_primal=cfg.tol_primal,
        tol_dual=cfg.tol_dual,
        max_iter=cfg.max_iter,
        gamma=cfg.step_gamma,
        relax=cfg.relax,
        check_every=cfg.check_every,
        init=init,
        mass_floor=cfg.mass_floor,
    )

    densities = [mu0]
    for seg in range(1, k):
        blocks = sol.block0[seg].sum(axis=1)
        node = MatrixDensity(mu0.grid, blocks)
        densities.append(node.normalized())
    densities.append(mu1)

    plans = []
    values = np.zeros(k)
    for seg in range(k):
        plan = _clean_plan(
            sol.block0[seg], sol.block1[seg], sol.mass[seg],
            mu0.grid, mu1.grid, cfg.mass_floor,
        )
        plans.append(plan)
        values[seg] = transport_cost(plan, cost, cfg.lam)
    return GeodesicPath(
        taus=taus,
        densities=densities,
        mode="full",
        segment_values=values,
        plans=plans,
        lam=cfg.lam,
        cost=cost,
        converged=sol.converged,
        iterations=sol.iterations,
        primal_residual=sol.primal_residual,
        dual_residual=sol.dual_residual,
    )


def _lift_restricted_path(path: GeodesicPath):
    """Stack the lifted segment plans into solver init arrays."""
    lifted = [p.to_full_plan() for p in path.plans]
    b0 = np.stack([p.block0 for p in lifted])
    b1 = np.stack([p.block1 for p in lifted])
    mass = np.stack([p.mass for p in lifted])
    return b0, b1, mass


def _unit_blocks(density: MatrixDensity) -> np.ndarray:
    return density.blocks / density.traces[:, None, None]


def _chain_lp(w0, w1, seg_costs):
    """One transportation LP over all segments with chained marginals.

    Variables are the per-segment couplings; interior constraints tie the
    column sums of segment s-1 to the row sums of segment s.
    """
    k = len(seg_costs)
    n = w0.size
    nn = n * n
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    rhs: list[float] = []
    r = 0

    def add_row(col_indices, coeffs, value):
        nonlocal r
        rows.extend([r] * len(col_indices))
        cols.extend(col_indices)
        vals.extend(coeffs)
        rhs.append(value)
        r += 1

    for i in range(n):  # row sums of segment 0 equal w0
        add_row(list(range(i * n, (i + 1) * n)), [1.0] * n, float(w0[i]))
    base = (k - 1) * nn
    for j in range(n):  # column sums of the last segment equal w1
        add_row(list(range(base + j, base + nn, n)), [1.0] * n, float(w1[j]))
    for s in range(1, k):  # interior junction balance
        prev = (s - 1) * nn
        cur = s * nn
        for p in range(n):
            add_row(
                list(range(prev + p, prev + nn, n))
                + list(range(cur + p * n, cur + (p + 1) * n)),
                [1.0] * n + [-1.0] * n,
                0.0,
            )

    a_eq = sparse.csr_matrix((vals, (rows, cols)), shape=(r, k * nn))
    objective = np.concatenate([c.ravel() for c in seg_costs])
    res = linprog(
        objective, A_eq=a_eq, b_eq=np.array(rhs), bounds=(0, None), method="highs"
    )
    if res.status != 0:
        raise ArithmeticError(f"chain transportation LP failed: {res.message}")
    couplings = [res.x[s * nn : (s + 1) * nn].reshape(n, n) for s in range(k)]
    return couplings, float(res.fun)


def _interpolate_restricted(mu0, mu1, k, cost, cfg) -> GeodesicPath:
    taus = np.arange(k + 1) / k
    if k == 1:
        res = d2lambda(mu0, mu1, cost, cfg.lam)
        return GeodesicPath(
            taus=taus,
            densities=[mu0, mu1],
            mode="restricted",
            segment_values=np.array([res.squared]),
            plans=[res.plan],
            lam=cfg.lam,
            cost=cost,
            converged=True,
            iterations=1,
            restarts=1,
        )

    w0 = mu0.traces
    w1 = mu1.traces
    unit_ends = (_unit_blocks(mu0), _unit_blocks(mu1))
    rng = np.random.default_rng(cfg.seed)
    best = None
    restarts = max(1, cfg.restarts)
    max_outer = 100

    for restart in range(restarts):
        directions = _init_directions(mu0, mu1, taus, unit_ends, rng, restart)
        prev_obj = math.inf
        couplings = None
        converged = False
        outer = 0
        for outer in range(1, max_outer + 1):
            seg_costs = [
                cost.matrix + cfg.lam * _pair_rot(directions[s], directions[s + 1])
                for s in range(k)
            ]
            couplings, obj = _chain_lp(w0, w1, seg_costs)
            for node in range(1, k):
                directions[node] = _update_direction(
                    couplings[node - 1], couplings[node],
                    directions[node - 1], directions[node + 1],
                    directions[node],
                )
            if prev_obj - obj <= cfg.tol_primal * max(1.0, abs(obj)):
                converged = True
                break
            prev_obj = obj
        # Final objective with the updated directions.
        seg_vals = np.array([
            float(np.sum(
                (cost.matrix + cfg.lam * _pair_rot(directions[s], directions[s + 1]))
                * couplings[s]
            ))
            for s in range(k)
        ])
        total = float(seg_vals.sum())
        if best is None or total < best[0]:
            best = (total, couplings, [d.copy() for d in directions],
                    seg_vals, converged, outer)

    total, couplings, directions, seg_vals, converged, outer = best
    densities = [mu0]
    for node in range(1, k):
        w = couplings[node].sum(axis=1)
        densities.append(MatrixDensity(mu0.grid, w[:, None, None] * directions[node]))
    densities.append(mu1)
    plans = [
        RestrictedPlan(couplings[s], densities[s], densities[s + 1])
        for s in range(k)
    ]
    return GeodesicPath(
        taus=taus,
        densities=densities,
        mode="restricted",
        segment_values=seg_vals,
        plans=plans,
        lam=cfg.lam,
        cost=cost,
        converged=converged,
        iterations=outer,
        restarts=restarts,
    )


def _pair_rot(d_left, d_right) -> np.ndarray:
    diff = d_left[:, None] - d_right[None, :]
    return np.sum(diff.real**2 + diff.imag**2, axis=(-1, -2))


def _init_directions(mu0, mu1, taus, unit_ends, rng, restart):
    k = taus.size - 1
    directions = [unit_ends[0]]
    for node in range(1, k):
        t = taus[node]
        blend = (1.0 - t) * mu0.blocks + t * mu1.blocks
        tr = np.trace(blend, axis1=-2, axis2=-1).real
        d = blend / tr[:, None, None]
        if restart > 0:
            # Perturb toward a random unit-trace PSD mixture for restarts.
            n = d.shape[-1]
            g = rng.normal(size=d.shape) + 1j * rng.normal(size=d.shape)
            noise = g @ np.conj(np.swapaxes(g, -1, -2))
            noise /= np.trace(noise, axis1=-2, axis2=-1).real[:, None, None]
            d = 0.7 * d + 0.3 * noise
        directions.append(d)
    directions.append(unit_ends[1])
    return directions


def _update_direction(coupling_in, coupling_out, d_prev, d_next, d_cur):
    """Closed-form minimizer: mass-weighted mean of the coupled neighbors."""
    win = coupling_in.sum(axis=0)
    wout = coupling_out.sum(axis=1)
    denom = win + wout
    num = (
        np.einsum("xp,xab->pab", coupling_in, d_prev)
        + np.einsum("py,yab->pab", coupling_out, d_next)
    )
    out = d_cur.copy()
    used = denom > 1e-300
    out[used] = num[used] / denom[used, None, None]
    return out


def segment_costs(path: GeodesicPath) -> np.ndarray:
    """Recompute each segment's cost from the stored plans."""
    vals = np.zeros(path.n_segments)
    for s, plan in enumerate(path.plans):
        if path.mode == "full":
            vals[s] = transport_cost(plan, path.cost, path.lam)
        else:
            vals[s] = transport_cost(plan.to_full_plan(), path.cost, path.lam)
    return vals
