"""Transport restricted to orientation-preserving plans, and the metric it
induces.

Restricting each plan cell to the tensor product of the (unit-trace
normalized) marginal blocks fixes the orientation of the transported mass;
only a scalar coupling remains free. Taking traces of the constraints
reduces the problem exactly to a scalar transportation LP whose ground
cost is the quadratic cost plus ``lam`` times the rotational mismatch, and
the square root of the optimum is a metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .full import FullTransportPlan, GroundCost, MatrixDensity, _require_pair
from .scalar import discrete_ot_lp

ROTATIONAL_BOUND = 2.0  # ||A - B||_F^2 <= 2 for unit-trace PSD A, B


@dataclass(frozen=True)
class RestrictedPlan:
    """Scalar coupling of the trace marginals of two matrix densities."""

    coupling: np.ndarray
    source: MatrixDensity
    target: MatrixDensity

    def __post_init__(self) -> None:
        c = np.array(self.coupling, dtype=np.float64)
        if c.shape != (self.source.n_points, self.target.n_points):
            raise ValueError("coupling shape does not match the densities")
        if np.any(c < -1e-12):
            raise ValueError("coupling must be nonnegative")
        c = np.maximum(c, 0.0)
        row_err = np.max(np.abs(c.sum(axis=1) - self.source.traces))
        col_err = np.max(np.abs(c.sum(axis=0) - self.target.traces))
        if max(row_err, col_err) > 1e-9:
            raise ValueError(
                f"coupling marginals off by {max(row_err, col_err):.3e}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coupling", c)

    def to_full_plan(self) -> FullTransportPlan:
        """Lift to the full plan family with orientation fixed by the marginals.

        Zero-trace nodes carry no coupling mass, so their unit blocks are
        immaterial and set to zero.
        """
        w0 = self.source.traces
        w1 = self.target.traces
        safe0 = np.where(w0 > 0, w0, 1.0)
        safe1 = np.where(w1 > 0, w1, 1.0)
        unit0 = np.where(
            (w0 > 0)[:, None, None], self.source.blocks / safe0[:, None, None], 0.0
        )
        unit1 = np.where(
            (w1 > 0)[:, None, None], self.target.blocks / safe1[:, None, None], 0.0
        )
        b0 = unit0[:, None, :, :] * self.coupling[:, :, None, None]
        b1 = unit1[None, :, :, :] * self.coupling[:, :, None, None]
        return FullTransportPlan(
            self.source.grid, self.target.grid, self.coupling, b0, b1
        )


@dataclass(frozen=True)
class RotationalCost:
    """Squared Frobenius distances between unit-trace normalized blocks."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or not np.all(np.isfinite(m)):
            raise ValueError("rotational cost must be a finite 2-D array")
        if np.any(m < -1e-12) or np.any(m > ROTATIONAL_BOUND + 1e-9):
            raise ValueError("rotational cost entries must lie in [0, 2]")
        m = np.clip(m, 0.0, ROTATIONAL_BOUND)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def rotational_cost(mu0: MatrixDensity, mu1: MatrixDensity) -> RotationalCost:
    """Pairwise orientation mismatch between the two densities' blocks."""
    if mu0.dim != mu1.dim:
        raise ValueError(f"dimension mismatch: {mu0.dim} vs {mu1.dim}")
    if not (mu0.has_strict_trace and mu1.has_strict_trace):
        raise ValueError("rotational cost requires strictly positive traces")
    unit0 = mu0.blocks / mu0.traces[:, None, None]
    unit1 = mu1.blocks / mu1.traces[:, None, None]
    d = unit0[:, None] - unit1[None, :]
    return RotationalCost(np.sum(d.real**2 + d.imag**2, axis=(-1, -2)))


@dataclass(frozen=True)
class RestrictedResult:
    value: float  # the metric value (square root of the optimal cost)
    plan: RestrictedPlan
    squared: float

    def __iter__(self):
        return iter((self.value, self.plan))


def d2lambda(
    mu0: MatrixDensity, mu1: MatrixDensity, cost: GroundCost, lam: float
) -> RestrictedResult:
    """Metric between matrix densities via the orientation-fixed reduction.

    Solves the scalar transportation LP with ground cost C + lam * R over
    couplings of the trace densities and returns the square root of the
    optimum together with the optimal coupling.
    """
    _require_pair(mu0, mu1, strict_trace=True)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    rot = rotational_cost(mu0, mu1)
    combined = cost.matrix + lam * rot.matrix
    plan, squared, _ = discrete_ot_lp(
        combined, mu0.trace_density(), mu1.trace_density()
    )
    squared = max(squared, 0.0)
    return RestrictedResult(
        value=float(np.sqrt(squared)),
        plan=RestrictedPlan(plan.coupling, mu0, mu1),
        squared=float(squared),
    )
