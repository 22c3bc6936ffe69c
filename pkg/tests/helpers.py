"""Shared test utilities: random instances and independent oracles."""

from __future__ import annotations

import itertools

import numpy as np

from matrixot import GroundCost, MatrixDensity, ScalarDensity


def random_hermitian(rng, n, scale=1.0):
    h = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (h + h.conj().T)


def random_psd(rng, n, jitter=0.0):
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return x @ x.conj().T + jitter * np.eye(n)


def random_unit_trace_psd(rng, n):
    b = random_psd(rng, n, jitter=1e-3)
    return b / np.trace(b).real


def random_grid(rng, npts, lo=0.0, hi=3.0):
    grid = np.sort(rng.uniform(lo, hi, size=npts))
    while npts > 1 and np.min(np.diff(grid)) < 1e-3:
        grid = np.sort(rng.uniform(lo, hi, size=npts))
    return grid


def random_density(rng, npts, n, lo=0.0, hi=3.0, jitter=0.05):
    grid = random_grid(rng, npts, lo, hi)
    blocks = np.array([random_psd(rng, n, jitter=jitter) for _ in range(npts)])
    return MatrixDensity(grid, blocks).normalized()


def random_scalar_density(rng, npts, lo=0.0, hi=3.0, normalized=True):
    grid = random_grid(rng, npts, lo, hi)
    weights = rng.uniform(0.05, 1.0, size=npts)
    d = ScalarDensity(grid, weights)
    return d.normalized() if normalized else d


def quadratic_cost(mu0, mu1) -> GroundCost:
    return GroundCost.quadratic(mu0.grid, mu1.grid)


def transportation_vertices(a, b):
    """All basic feasible solutions of a small transportation polytope.

    Enumerates spanning bases (N + M - 1 cells), solves the equality
    system, and keeps nonnegative solutions. Exponential; use on 3x3-ish
    problems only.
    """
    n, m = a.size, b.size
    n_basis = n + m - 1
    rows = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m: (i + 1) * m] = 1
        rows.append(row)
    for j in range(m - 1):  # drop the last column constraint (redundant)
        row = np.zeros(n * m)
        row[j::m] = 1
        rows.append(row)
    a_eq = np.array(rows)
    rhs = np.concatenate([a, b[:-1]])
    vertices = []
    for basis in itertools.combinations(range(n * m), n_basis):
        sub = a_eq[:, basis]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x_basis = np.linalg.solve(sub, rhs)
        if np.any(x_basis < -1e-10):
            continue
        x = np.zeros(n * m)
        x[list(basis)] = x_basis
        vertices.append(x.reshape(n, m))
    return vertices
