"""Matrix-valued power spectral densities on a frequency grid.

Builds 2x2 Hermitian spectra of autoregressive type: a scalar resonance
1/|a(e^{j theta})|^2 placed in one diagonal channel with a small floor in
the other, shaped by a unit-triangular congruence that leaks energy into
the cross channel. Congruence preserves positive semidefiniteness, so
every constructed block is PSD by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .full import MatrixDensity

DEFAULT_GRID_SIZE = 64


@dataclass(frozen=True)
class RationalSpectrumSpec:
    """A stable all-pole magnitude with a triangular 2x2 shaping factor.

    ``factors`` lists real quadratic factors (b, c) of z^2 + b z + c whose
    roots must lie strictly inside the unit disk. The shaping factor is
    unit triangular with ``corner`` (times exp(1j * corner_phase * theta))
    in the off-diagonal slot; ``dominant_channel`` receives the resonance
    and the other diagonal slot receives ``floor``.
    """

    factors: tuple[tuple[float, float], ...]
    corner: complex = 0.0
    corner_lower: bool = True
    corner_phase: float = 0.0
    dominant_channel: int = 0
    floor: float = 0.01

    def __post_init__(self) -> None:
        if not self.factors:
            raise ValueError("at least one quadratic factor is required")
        for b, c in self.factors:
            if abs(c) >= 1.0:
                raise ValueError(f"factor (b={b}, c={c}) fails |c| < 1")
            roots = np.roots([1.0, b, c])
            if np.max(np.abs(roots)) >= 1.0:
                raise ValueError(f"factor (b={b}, c={c}) has roots outside the disk")
        if self.dominant_channel not in (0, 1):
            raise ValueError("dominant_channel must be 0 or 1")
        if self.floor <= 0:
            raise ValueError("floor must be positive")


def eval_ar_magnitude(spec: RationalSpectrumSpec, theta) -> np.ndarray | float:
    """1 / |a(e^{j theta})|^2 with a(z) the product of the quadratic factors."""
    th = np.asarray(theta, dtype=np.float64)
    z = np.exp(1j * th)
    a = np.ones_like(z)
    for b, c in spec.factors:
        a = a * (z * z + b * z + c)
    out = 1.0 / (a.real**2 + a.imag**2)
    return float(out) if th.ndim == 0 else out


def _shaping(spec: RationalSpectrumSpec, theta: np.ndarray) -> np.ndarray:
    corner = spec.corner * np.exp(1j * spec.corner_phase * theta)
    ell = np.zeros(theta.shape + (2, 2), dtype=np.complex128)
    ell[..., 0, 0] = 1.0
    ell[..., 1, 1] = 1.0
    if spec.corner_lower:
        ell[..., 1, 0] = corner
    else:
        ell[..., 0, 1] = corner
    return ell


def spectrum_blocks(spec: RationalSpectrumSpec, theta) -> np.ndarray:
    """Evaluate L diag(...) L^H at each frequency; shape (..., 2, 2)."""
    th = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    diag = np.zeros(th.shape + (2,), dtype=np.float64)
    diag[..., spec.dominant_channel] = eval_ar_magnitude(spec, th)
    diag[..., 1 - spec.dominant_channel] = spec.floor
    ell = _shaping(spec, th)
    return (ell * diag[..., None, :]) @ np.conj(np.swapaxes(ell, -1, -2))


# The worked example pair: resonances of radius 0.9 at pole angles pi/4 and
# pi/6, each paired with a milder secondary factor, energy concentrated in
# opposite channels and opposite triangular shaping.
SOURCE_SPECTRUM = RationalSpectrumSpec(
    factors=(
        (-1.8 * math.cos(math.pi / 4), 0.9**2),
        (-1.4 * math.cos(math.pi / 3), 0.7**2),
    ),
    corner=0.2,
    corner_lower=True,
    corner_phase=-1.0,
    dominant_channel=0,
)
TARGET_SPECTRUM = RationalSpectrumSpec(
    factors=(
        (-1.8 * math.cos(math.pi / 6), 0.9**2),
        (-1.5 * math.cos(2 * math.pi / 15), 0.75**2),
    ),
    corner=0.2,
    corner_lower=False,
    corner_phase=0.0,
    dominant_channel=1,
)


def default_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Uniform frequency grid on [0, pi]."""
    if size < 2:
        raise ValueError("grid size must be at least 2")
    return np.linspace(0.0, math.pi, size)


def build_paper_pair(grid) -> tuple[MatrixDensity, MatrixDensity]:
    """The example source/target spectra, normalized to unit trace mass."""
    g = np.asarray(grid, dtype=np.float64)
    if g.size == 0:
        raise ValueError("grid must be nonempty")
    if not np.all(np.diff(g) > 0):
        raise ValueError("grid must be strictly increasing")
    if g[0] < 0.0 or g[-1] > math.pi + 1e-12:
        raise ValueError("grid must lie within [0, pi]")
    mu0 = MatrixDensity(g, spectrum_blocks(SOURCE_SPECTRUM, g)).normalized()
    mu1 = MatrixDensity(g, spectrum_blocks(TARGET_SPECTRUM, g)).normalized()
    return mu0, mu1


def normalize(mu: MatrixDensity) -> MatrixDensity:
    """Scale all blocks so the total trace mass is one; idempotent."""
    return mu.normalized()
