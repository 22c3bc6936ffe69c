"""The full matrix-valued transport problem.

Couples of Hermitian PSD block densities are transported by plans carrying,
per grid cell, a scalar mass and two PSD blocks with matching traces. The
solver minimizes the quadratic ground cost plus a rotation penalty
lam * ||b0 - b1||_F^2 / m (a perspective function, hence jointly convex)
subject to the partial-trace marginal constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._splitting import solve_chain
from .hermitian import BigMatrix, HermitianMatrix, hermitize
from .scalar import ScalarDensity

PSD_BLOCK_TOL = 1e-10
NORMALIZED_ATOL = 1e-10
TRACE_COUPLING_ATOL = 1e-9
MARGINAL_FROB_ATOL = 1e-7


@dataclass(frozen=True)
class MatrixDensity:
    """One Hermitian PSD block per point of a strictly increasing grid."""

    grid: np.ndarray
    blocks: np.ndarray  # (N, n, n)

    def __post_init__(self) -> None:
        g = np.array(self.grid, dtype=np.float64)
        b = np.array(self.blocks, dtype=np.complex128)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("grid must be a nonempty 1-D array")
        if not np.all(np.diff(g) > 0):
            raise ValueError("grid must be strictly increasing")
        if b.ndim != 3 or b.shape[0] != g.size or b.shape[1] != b.shape[2]:
            raise ValueError(f"blocks must have shape (len(grid), n, n), got {b.shape}")
        b = hermitize(b)
        min_eig = float(np.linalg.eigvalsh(b).min())
        if min_eig < -PSD_BLOCK_TOL:
            raise ValueError(f"blocks must be PSD; min eigenvalue {min_eig:.3e}")
        g.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "blocks", b)

    @property
    def dim(self) -> int:
        return self.blocks.shape[-1]

    @property
    def n_points(self) -> int:
        return self.grid.size

    @property
    def traces(self) -> np.ndarray:
        return np.trace(self.blocks, axis1=-2, axis2=-1).real

    @property
    def total_mass(self) -> float:
        return float(self.traces.sum())

    @property
    def is_normalized(self) -> bool:
        return abs(self.total_mass - 1.0) <= NORMALIZED_ATOL

    @property
    def has_strict_trace(self) -> bool:
        return bool(np.all(self.traces > 0.0))

    def block(self, i: int) -> HermitianMatrix:
        return HermitianMatrix(self.blocks[i])

    def normalized(self) -> "MatrixDensity":
        m = self.total_mass
        if m <= 0:
            raise ValueError("cannot normalize a zero-mass density")
        return MatrixDensity(self.grid, self.blocks / m)

    def trace_density(self) -> ScalarDensity:
        return ScalarDensity(self.grid, self.traces)

    def allclose(self, other: "MatrixDensity", atol: float = 1e-12) -> bool:
        return (
            self.grid.shape == other.grid.shape
            and np.allclose(self.grid, other.grid, atol=atol, rtol=0.0)
            and np.allclose(self.blocks, other.blocks, atol=atol, rtol=0.0)
        )


@dataclass(frozen=True)
class GroundCost:
    """Scalar ground cost over grid pairs; quadratic in the gap by contract."""

    kind: str
    matrix: np.ndarray

    _KINDS = ("quadratic-linear", "quadratic-circular")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("cost matrix must be a finite nonnegative 2-D array")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def quadratic(cls, x, y) -> "GroundCost":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return cls("quadratic-linear", (x[:, None] - y[None, :]) ** 2)

    @classmethod
    def circular(cls, x, y, period: float) -> "GroundCost":
        if period <= 0:
            raise ValueError("period must be positive")
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        gap = np.abs(x[:, None] - y[None, :]) % period
        return cls("quadratic-circular", np.minimum(gap, period - gap) ** 2)

    @classmethod
    def for_kind(cls, kind: str, x, y, period: float = 2.0 * math.pi) -> "GroundCost":
        if kind == "quadratic-linear":
            return cls.quadratic(x, y)
        if kind == "quadratic-circular":
            return cls.circular(x, y, period)
        raise ValueError(f"unknown cost kind {kind!r}")


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances, iteration caps and step parameters for the solvers.

    ``step_gamma=None`` picks the prox step from the problem scale. Grid
    coordinates carry their native units (radians for spectra), so ``lam``
    is unit-dependent.
    """

    lam: float = 0.1
    cost_kind: str = "quadratic-linear"
    tol_primal: float = 1e-7
    tol_dual: float = 1e-7
    max_iter: int = 200_000
    step_gamma: float | None = None
    relax: float = 1.8
    mass_floor: float = 1e-12
    check_every: int = 50
    seed: int = 0
    restarts: int = 1

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.mass_floor < 0:
            raise ValueError("mass_floor must be nonnegative")


@dataclass(frozen=True)
class FullTransportPlan:
    """Per-cell masses and PSD block pairs with matching traces."""

    source_grid: np.ndarray
    target_grid: np.ndarray
    mass: np.ndarray  # (N, M)
    block0: np.ndarray  # (N, M, n, n)
    block1: np.ndarray

    def __post_init__(self) -> None:
        sg = np.array(self.source_grid, dtype=np.float64)
        tg = np.array(self.target_grid, dtype=np.float64)
        m = np.array(self.mass, dtype=np.float64)
        b0 = hermitize(np.array(self.block0, dtype=np.complex128))
        b1 = hermitize(np.array(self.block1, dtype=np.complex128))
        if m.shape != (sg.size, tg.size):
            raise ValueError("mass shape does not match the grids")
        if b0.shape != m.shape + b0.shape[-2:] or b0.shape != b1.shape:
            raise ValueError("block arrays must have shape (N, M, n, n)")
        if np.any(m < -1e-12):
            raise ValueError("cell masses must be nonnegative")
        m = np.maximum(m, 0.0)
        for a in (sg, tg, m, b0, b1):
            a.setflags(write=False)
        object.__setattr__(self, "source_grid", sg)
        object.__setattr__(self, "target_grid", tg)
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "block0", b0)
        object.__setattr__(self, "block1", b1)

    @property
    def dim(self) -> int:
        return self.block0.shape[-1]

    def trace_coupling_residual(self) -> float:
        t0 = np.trace(self.block0, axis1=-2, axis2=-1).real
        t1 = np.trace(self.block1, axis1=-2, axis2=-1).real
        return float(max(np.max(np.abs(t0 - self.mass)), np.max(np.abs(t1 - self.mass))))

    def marginal_residuals(self, mu0: MatrixDensity, mu1: MatrixDensity) -> tuple[float, float]:
        """Frobenius-norm residuals of the row and column marginal sums."""
        r0 = self.block0.sum(axis=1) - mu0.blocks
        r1 = self.block1.sum(axis=0) - mu1.blocks
        n0 = np.sqrt(np.sum(r0.real**2 + r0.imag**2, axis=(-1, -2)))
        n1 = np.sqrt(np.sum(r1.real**2 + r1.imag**2, axis=(-1, -2)))
        return float(n0.max()), float(n1.max())

    def min_block_eigenvalue(self) -> float:
        w0 = np.linalg.eigvalsh(self.block0)
        w1 = np.linalg.eigvalsh(self.block1)
        return float(min(w0.min(), w1.min()))

    def membership_report(self, mu0: MatrixDensity, mu1: MatrixDensity) -> dict:
        row_res, col_res = self.marginal_residuals(mu0, mu1)
        return {
            "trace_coupling": self.trace_coupling_residual(),
            "row_marginal": row_res,
            "col_marginal": col_res,
            "min_block_eigenvalue": self.min_block_eigenvalue(),
            "min_mass": float(self.mass.min()),
        }

    def is_member(
        self,
        mu0: MatrixDensity,
        mu1: MatrixDensity,
        trace_atol: float = TRACE_COUPLING_ATOL,
        marginal_atol: float = MARGINAL_FROB_ATOL,
        psd_tol: float = PSD_BLOCK_TOL,
    ) -> bool:
        rep = self.membership_report(mu0, mu1)
        return (
            rep["trace_coupling"] <= trace_atol
            and rep["row_marginal"] <= marginal_atol
            and rep["col_marginal"] <= marginal_atol
            and rep["min_block_eigenvalue"] >= -psd_tol
        )


def _require_pair(mu0: MatrixDensity, mu1: MatrixDensity, strict_trace: bool) -> None:
    if mu0.dim != mu1.dim:
        raise ValueError(f"dimension mismatch: {mu0.dim} vs {mu1.dim}")
    if not (mu0.is_normalized and mu1.is_normalized):
        raise ValueError("both densities must be normalized to unit mass")
    if strict_trace and not (mu0.has_strict_trace and mu1.has_strict_trace):
        raise ValueError("solver requires strictly positive traces pointwise")


def product_plan(mu0: MatrixDensity, mu1: MatrixDensity) -> FullTransportPlan:
    """The always-feasible product plan: cell (i, j) holds the tensor mass.

    block0 = tr(mu1_j) mu0_i, block1 = tr(mu0_i) mu1_j, and the marginal
    constraints hold exactly because the trace weights sum to one.
    """
    _require_pair(mu0, mu1, strict_trace=False)
    w0 = mu0.traces
    w1 = mu1.traces
    mass = w0[:, None] * w1[None, :]
    b0 = mu0.blocks[:, None, :, :] * w1[None, :, None, None]
    b1 = mu1.blocks[None, :, :, :] * w0[:, None, None, None]
    return FullTransportPlan(mu0.grid, mu1.grid, mass, b0, b1)


def lift_plan(plan: FullTransportPlan, tol: float = 1e-12) -> dict[tuple[int, int], BigMatrix]:
    """Lift each positive-mass cell to kron(block0, block1) / mass.

    The lift is the canonical PSD witness whose partial traces reproduce
    the stored blocks. Zero-mass cells with nonzero blocks are rejected.
    """
    out: dict[tuple[int, int], BigMatrix] = {}
    n = plan.dim
    for i in range(plan.mass.shape[0]):
        for j in range(plan.mass.shape[1]):
            m = plan.mass[i, j]
            if m > 0.0:
                out[(i, j)] = BigMatrix(
                    np.kron(plan.block0[i, j], plan.block1[i, j]) / m, block_dim=n
                )
            else:
                resid = max(
                    np.abs(plan.block0[i, j]).max(), np.abs(plan.block1[i, j]).max()
                )
                if resid > tol:
                    raise ValueError(
                        f"cell ({i}, {j}) has zero mass but block magnitude {resid:.3e}"
                    )
    return out


def transport_cost(plan: FullTransportPlan, cost: GroundCost, lam: float) -> float:
    """Objective value of a plan: sum C*m + lam * ||b0 - b1||_F^2 / m.

    Perspective convention: a zero-mass cell contributes 0 when both blocks
    vanish and +inf when they differ (an infinite cost is a valid return,
    flagging an invalid plan rather than raising).
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    c = cost.matrix
    if c.shape != plan.mass.shape:
        raise ValueError("cost matrix shape does not match the plan")
    base = float(np.sum(c * plan.mass))
    if lam == 0.0:
        return base
    d = plan.block0 - plan.block1
    d2 = np.sum(d.real**2 + d.imag**2, axis=(-1, -2))
    zero = plan.mass <= 0.0
    if np.any(zero & (d2 > 1e-24)):
        return math.inf
    rot = np.divide(d2, plan.mass, out=np.zeros_like(d2), where=~zero)
    return base + lam * float(rot.sum())


@dataclass(frozen=True)
class InfeasibilityCertificate:
    """Separating pair for the naive block-coupling constraints.

    The blocks satisfy y_i + z_j <= 0 (PSD order, up to ``max_block_eig``)
    while the pairing with the marginals is strictly positive; any naive
    plan would make the pairing nonpositive, which is the contradiction.
    """

    y_blocks: np.ndarray  # (N, n, n), paired with mu0
    z_blocks: np.ndarray  # (M, n, n), paired with mu1
    pairing: float
    max_block_eig: float


@dataclass(frozen=True)
class NaiveFeasibilityResult:
    status: str  # "feasible" | "infeasible" | "non-converged"
    blocks: np.ndarray | None = None  # (N, M, n, n) naive plan when feasible
    certificate: InfeasibilityCertificate | None = None
    gap: float = math.nan
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def _project_naive_affine(x, a_blocks, b_blocks):
    """Project onto {sum_j X_ij = A_i, sum_i X_ij = B_j} (closed form)."""
    n_src, n_tgt = x.shape[0], x.shape[1]
    row_res = x.sum(axis=1) - a_blocks
    col_res = x.sum(axis=0) - b_blocks
    total = row_res.sum(axis=0)
    shift = total / (n_src + n_tgt)
    alpha = (row_res - shift[None]) / n_tgt
    beta = (col_res - shift[None]) / n_src
    return x - alpha[:, None] - beta[None, :]


def _psd_project_stack(x):
    w, v = np.linalg.eigh(hermitize(x))
    w = np.maximum(w, 0.0)
    return (v * w[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def naive_feasibility(
    mu0: MatrixDensity,
    mu1: MatrixDensity,
    feas_tol: float = 1e-9,
    max_iter: int = 50_000,
) -> NaiveFeasibilityResult:
    """Decide whether a single PSD matrix field can couple the marginals.

    Runs alternating projections between the PSD product cone and the
    affine marginal set. If the sets intersect, the iterates converge into
    the intersection; if they do not, the displacement vector between the
    limiting pair decomposes additively and yields a separating certificate
    (verified rigorously before reporting infeasibility: the pairing must
    exceed total_mass * max block eigenvalue). Anything else is flagged as
    non-converged.
    """
    _require_pair(mu0, mu1, strict_trace=False)
    a_blocks, b_blocks = mu0.blocks, mu1.blocks
    n_src, n_tgt = mu0.n_points, mu1.n_points
    total_mass = mu0.total_mass

    w1 = mu1.traces
    x = _project_naive_affine(
        a_blocks[:, None, :, :] * w1[None, :, None, None], a_blocks, b_blocks
    )
    gap = math.inf
    prev_gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        cone = _psd_project_stack(x)
        displacement = x - cone  # exactly NSD blockwise by construction
        x = _project_naive_affine(cone, a_blocks, b_blocks)
        gap = float(np.sqrt(np.sum(np.abs(x - cone) ** 2)))
        if gap <= feas_tol:
            return NaiveFeasibilityResult(
                status="feasible", blocks=cone, gap=gap, iterations=it
            )
        if it % 100 == 0:
            if prev_gap - gap <= 1e-6 * gap:
                cert = _extract_certificate(displacement, mu0, mu1)
                if cert.pairing > total_mass * max(cert.max_block_eig, 0.0) + 1e-12:
                    return NaiveFeasibilityResult(
                        status="infeasible", certificate=cert, gap=gap, iterations=it
                    )
            prev_gap = gap
    cert = _extract_certificate(x - _psd_project_stack(x), mu0, mu1)
    if cert.pairing > total_mass * max(cert.max_block_eig, 0.0) + 1e-12:
        return NaiveFeasibilityResult(
            status="infeasible", certificate=cert, gap=gap, iterations=it
        )
    return NaiveFeasibilityResult(status="non-converged", gap=gap, iterations=it)


def _extract_certificate(displacement, mu0, mu1) -> InfeasibilityCertificate:
    """Fit the additive part Y_i + Z_j of the displacement field."""
    grand = displacement.mean(axis=(0, 1))
    y = displacement.mean(axis=1) - 0.5 * grand[None]
    z = displacement.mean(axis=0) - 0.5 * grand[None]
    scale = float(np.sqrt(np.sum(np.abs(displacement) ** 2)))
    if scale > 0:
        y = y / scale
        z = z / scale
    y = hermitize(y)
    z = hermitize(z)
    pairing = float(
        np.sum(y * np.conj(mu0.blocks)).real + np.sum(z * np.conj(mu1.blocks)).real
    )
    pair_eigs = np.linalg.eigvalsh(y[:, None] + z[None, :])
    return InfeasibilityCertificate(
        y_blocks=y, z_blocks=z, pairing=pairing, max_block_eig=float(pair_eigs.max())
    )


@dataclass(frozen=True)
class FullSolveResult:
    plan: FullTransportPlan
    value: float
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float

    def __iter__(self):
        # Allows ``plan, value = solve_full(...)``.
        return iter((self.plan, self.value))


def _orientation_fixed_candidate(mu0, mu1, cost, lam):
    """Feasible upper-bound plan: optimal coupling with orientation fixed.

    Couples the trace densities by a transportation LP whose ground cost
    adds the rotational mismatch of the unit-trace blocks, then lifts the
    coupling tensor-style. Entering this into candidate selection makes
    the full optimum provably no worse than the restricted one.
    """
    from .scalar import discrete_ot_lp

    unit0 = mu0.blocks / mu0.traces[:, None, None]
    unit1 = mu1.blocks / mu1.traces[:, None, None]
    diff = unit0[:, None] - unit1[None, :]
    rot = np.sum(diff.real**2 + diff.imag**2, axis=(-1, -2))
    plan, _, _ = discrete_ot_lp(
        cost.matrix + lam * rot, mu0.trace_density(), mu1.trace_density()
    )
    coupling = plan.coupling
    b0 = unit0[:, None, :, :] * coupling[:, :, None, None]
    b1 = unit1[None, :, :, :] * coupling[:, :, None, None]
    return b0[None], b1[None], coupling[None]


def _clean_plan(sol_block0, sol_block1, sol_mass, src_grid, tgt_grid, mass_floor):
    mass = sol_mass.copy()
    b0 = sol_block0.copy()
    b1 = sol_block1.copy()
    dust = mass < mass_floor
    mass[dust] = 0.0
    b0[dust] = 0.0
    b1[dust] = 0.0
    return FullTransportPlan(src_grid, tgt_grid, mass, b0, b1)


def solve_full(
    mu0: MatrixDensity,
    mu1: MatrixDensity,
    cost: GroundCost,
    cfg: SolverConfig,
    init: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> FullSolveResult:
    """Global optimum of the convex transport program within tolerances.

    Returns the best iterate with ``converged=False`` when the iteration
    cap is exhausted first. The reported value is the plan's objective
    recomputed through ``transport_cost``, so the two always agree.
    """
    _require_pair(mu0, mu1, strict_trace=True)
    if cost.matrix.shape != (mu0.n_points, mu1.n_points):
        raise ValueError("cost matrix shape does not match the densities")
    sol = solve_chain(
        mu0.blocks,
        mu1.blocks,
        cost.matrix,
        cfg.lam,
        n_segments=1,
        tol_primal=cfg.tol_primal,
        tol_dual=cfg.tol_dual,
        max_iter=cfg.max_iter,
        gamma=cfg.step_gamma,
        relax=cfg.relax,
        check_every=cfg.check_every,
        init=init,
        mass_floor=cfg.mass_floor,
        extra_candidates=(_orientation_fixed_candidate(mu0, mu1, cost, cfg.lam),),
    )
    plan = _clean_plan(
        sol.block0[0], sol.block1[0], sol.mass[0],
        mu0.grid, mu1.grid, cfg.mass_floor,
    )
    value = transport_cost(plan, cost, cfg.lam)
    return FullSolveResult(
        plan=plan,
        value=value,
        converged=sol.converged,
        iterations=sol.iterations,
        primal_residual=sol.primal_residual,
        dual_residual=sol.dual_residual,
    )
