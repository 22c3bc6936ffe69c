"""Executable structural checks on transport plans.

The optimal full plan concentrates on a set where every "anti-monotone"
pair of support points spans a rectangle of area at most 4 * lam; the
restricted coupling tightens this to 2 * lam. Both bounds are certified
here by exhaustive pair checking, and the underlying mass-rearrangement
argument is available as an explicit construction whose cost change can
be evaluated directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .full import FullTransportPlan
from .hermitian import hermitize
from .restricted import RestrictedPlan
from .scalar import ScalarPlan

SUPPORT_THRESHOLD = 1e-7  # relative to total mass
AREA_SLACK = 1e-9  # additive slack absorbing solver dust


@dataclass(frozen=True)
class SupportSet:
    """Grid locations carrying mass strictly above a threshold."""

    points: np.ndarray  # (P, 3) columns x, y, mass
    threshold: float

    def __post_init__(self) -> None:
        p = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if np.any(p[:, 2] <= self.threshold):
            raise ValueError("support masses must exceed the threshold")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return self.points.shape[0]


def _plan_fields(plan) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(plan, FullTransportPlan):
        return plan.mass, plan.source_grid, plan.target_grid
    if isinstance(plan, RestrictedPlan):
        return plan.coupling, plan.source.grid, plan.target.grid
    if isinstance(plan, ScalarPlan):
        return plan.coupling, plan.row_marginal.grid, plan.col_marginal.grid
    raise TypeError(f"unsupported plan type {type(plan).__name__}")


def support_set(plan, threshold: float | None = None) -> SupportSet:
    """Cells with mass above the threshold (default 1e-7 of total mass)."""
    mass, xs, ys = _plan_fields(plan)
    if threshold is None:
        threshold = SUPPORT_THRESHOLD * float(mass.sum())
    ii, jj = np.nonzero(mass > threshold)
    pts = np.column_stack([xs[ii], ys[jj], mass[ii, jj]])
    return SupportSet(points=pts, threshold=float(threshold))


@dataclass(frozen=True)
class MonotoneCheck:
    passed: bool
    bound: float
    worst_area: float
    worst_pair: tuple[tuple[float, float], tuple[float, float]] | None

    def __bool__(self) -> bool:
        return self.passed


def check_lambda_monotone(s: SupportSet, bound: float) -> MonotoneCheck:
    """Verify (x2 - x1)(y1 - y2) <= bound + slack for all anti-monotone pairs.

    Reports the worst violating pair (deterministically, by largest area
    then lexicographic order) when the check fails.
    """
    pts = s.points
    if len(s) < 2:
        return MonotoneCheck(True, bound, 0.0, None)
    x = pts[:, 0]
    y = pts[:, 1]
    dx = x[None, :] - x[:, None]  # x_b - x_a
    dy = y[:, None] - y[None, :]  # y_a - y_b
    area = np.where((dx > 0) & (dy > 0), dx * dy, 0.0)
    worst = float(area.max())
    if worst <= bound + AREA_SLACK:
        return MonotoneCheck(True, bound, worst, None)
    a, b = np.unravel_index(int(np.argmax(area)), area.shape)
    pair = ((float(x[a]), float(y[a])), (float(x[b]), float(y[b])))
    return MonotoneCheck(False, bound, worst, pair)


@dataclass(frozen=True)
class RearrangementQuadruple:
    """Plan values at the four corners of a rectangle x1 < x2, y2 < y1.

    Each corner carries a mass and a unit-trace PSD block pair (the
    orientation factors of the tensor-product cell value). The diagonal
    corners (1,1) and (2,2) must carry positive mass.
    """

    x1: float
    x2: float
    y1: float
    y2: float
    masses: np.ndarray  # (2, 2), [i, j] at (x_{i+1}, y_{j+1})
    blocks_a: np.ndarray  # (2, 2, n, n) unit-trace PSD
    blocks_b: np.ndarray

    def __post_init__(self) -> None:
        # Degenerate rectangles (equal coordinates) are allowed so the
        # no-gain case can be evaluated; orientation must not flip.
        if self.x1 > self.x2 or self.y2 > self.y1:
            raise ValueError("corners must satisfy x1 <= x2 and y2 <= y1")
        m = np.array(self.masses, dtype=np.float64)
        a = hermitize(np.array(self.blocks_a, dtype=np.complex128))
        b = hermitize(np.array(self.blocks_b, dtype=np.complex128))
        if m.shape != (2, 2) or a.shape[:2] != (2, 2) or b.shape != a.shape:
            raise ValueError("masses must be 2x2 and blocks 2x2 stacks")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        if m[0, 0] <= 0 or m[1, 1] <= 0:
            raise ValueError("diagonal masses m11 and m22 must be positive")
        traces = np.concatenate([
            np.trace(a, axis1=-2, axis2=-1).real.ravel(),
            np.trace(b, axis1=-2, axis2=-1).real.ravel(),
        ])
        if np.max(np.abs(traces - 1.0)) > 1e-10:
            raise ValueError("corner blocks must have unit trace")
        min_eig = float(min(np.linalg.eigvalsh(a).min(), np.linalg.eigvalsh(b).min()))
        if min_eig < -1e-10:
            raise ValueError("corner blocks must be PSD")
        for arr in (m, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "blocks_a", a)
        object.__setattr__(self, "blocks_b", b)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y1 - self.y2)


@dataclass(frozen=True)
class RearrangeResult:
    masses: np.ndarray
    blocks_a: np.ndarray
    blocks_b: np.ndarray
    old_cost: float
    new_cost: float


def _corner_cost(q: RearrangementQuadruple, masses, blocks_a, blocks_b, lam: float) -> float:
    xs = (q.x1, q.x2)
    ys = (q.y1, q.y2)
    total = 0.0
    for i in range(2):
        for j in range(2):
            if masses[i, j] <= 0:
                continue
            d = blocks_a[i, j] - blocks_b[i, j]
            rot = float(np.sum(d.real**2 + d.imag**2))
            total += masses[i, j] * ((xs[i] - ys[j]) ** 2 + lam * rot)
    return total


def rearrange_quadruple(q: RearrangementQuadruple, lam: float) -> RearrangeResult:
    """Shift the anti-monotone diagonal mass onto the off corners.

    The smaller diagonal mass is removed from its corner and routed through
    both off-diagonal corners, whose orientation blocks become the
    mass-weighted mixtures of the old values. All four corner marginals
    (block-weighted row and column sums) are preserved exactly, and the
    local cost strictly decreases whenever the rectangle area exceeds
    4 * lam.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    m = q.masses
    a = q.blocks_a
    b = q.blocks_b
    new_m = np.zeros((2, 2))
    new_a = a.copy()
    new_b = b.copy()
    if m[1, 1] >= m[0, 0]:
        shift = m[0, 0]
        new_m[0, 0] = 0.0
        new_m[0, 1] = shift + m[0, 1]
        new_m[1, 0] = shift + m[1, 0]
        new_m[1, 1] = m[1, 1] - shift
        new_a[0, 1] = (shift * a[0, 0] + m[0, 1] * a[0, 1]) / new_m[0, 1]
        new_b[0, 1] = (shift * b[1, 1] + m[0, 1] * b[0, 1]) / new_m[0, 1]
        new_a[1, 0] = (shift * a[1, 1] + m[1, 0] * a[1, 0]) / new_m[1, 0]
        new_b[1, 0] = (shift * b[0, 0] + m[1, 0] * b[1, 0]) / new_m[1, 0]
    else:
        shift = m[1, 1]
        new_m[0, 0] = m[0, 0] - shift
        new_m[0, 1] = m[0, 1] + shift
        new_m[1, 0] = m[1, 0] + shift
        new_m[1, 1] = 0.0
        new_a[0, 1] = (m[0, 1] * a[0, 1] + shift * a[0, 0]) / new_m[0, 1]
        new_b[0, 1] = (m[0, 1] * b[0, 1] + shift * b[1, 1]) / new_m[0, 1]
        new_a[1, 0] = (m[1, 0] * a[1, 0] + shift * a[1, 1]) / new_m[1, 0]
        new_b[1, 0] = (m[1, 0] * b[1, 0] + shift * b[0, 0]) / new_m[1, 0]
    old_cost = _corner_cost(q, m, a, b, lam)
    new_cost = _corner_cost(q, new_m, new_a, new_b, lam)
    return RearrangeResult(new_m, new_a, new_b, old_cost, new_cost)


def corner_marginals(masses, blocks_a, blocks_b) -> tuple[np.ndarray, np.ndarray]:
    """Block-weighted row sums (source side) and column sums (target side)."""
    weighted_a = masses[..., None, None] * blocks_a
    weighted_b = masses[..., None, None] * blocks_b
    return weighted_a.sum(axis=1), weighted_b.sum(axis=0)
