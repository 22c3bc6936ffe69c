"""Complex Hermitian matrix primitives: Kronecker products, partial traces,
and PSD-cone utilities.

All operations are pure functions on immutable values. Inputs are
symmetrized ((H + H*) / 2) on construction so that downstream solver
iterates, which accumulate roundoff, stay inside the Hermitian subspace.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass

import numpy as np

# Asymmetry above this is rejected in strict mode instead of being averaged.
STRICT_ASYMMETRY_TOL = 1e-9
# Eigenvalues in [PSD_EIG_FLOOR, 0) count as zero for PSD checks; projection
# outputs sit on the cone boundary.
PSD_EIG_FLOOR = -1e-10


def hermitize(a: np.ndarray) -> np.ndarray:
    """Hermitian part (A + A^H) / 2, applied to the trailing two axes."""
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def asymmetry(a: np.ndarray) -> float:
    """Largest entrywise deviation |A - A^H|."""
    return float(np.max(np.abs(a - np.conj(np.swapaxes(a, -1, -2)))))


@dataclass(frozen=True)
class HermitianMatrix:
    """An n-by-n complex Hermitian matrix.

    The stored array is always the symmetrized copy of the input; pass
    ``strict=True`` to reject inputs whose asymmetry exceeds 1e-9 instead.
    """

    mat: np.ndarray
    strict: InitVar[bool] = False

    def __post_init__(self, strict: bool) -> None:
        m = np.array(self.mat, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m.view(np.float64))):
            raise ValueError("matrix entries must be finite")
        if strict and asymmetry(m) > STRICT_ASYMMETRY_TOL:
            raise ValueError(
                f"asymmetry {asymmetry(m):.3e} exceeds strict tolerance "
                f"{STRICT_ASYMMETRY_TOL:g}"
            )
        m = hermitize(m)
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.mat).real)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.mat)[0])

    def is_psd(self, tol: float = -PSD_EIG_FLOOR) -> bool:
        return self.min_eigenvalue() >= -tol

    @classmethod
    def identity(cls, n: int) -> "HermitianMatrix":
        return cls(np.eye(n))

    @classmethod
    def diagonal(cls, values) -> "HermitianMatrix":
        return cls(np.diag(np.asarray(values, dtype=np.complex128)))


@dataclass(frozen=True)
class BigMatrix:
    """A Hermitian matrix of size n^2-by-n^2 acting on a tensor-product space.

    Block (k, l) occupies rows k*n..(k+1)*n-1 and columns l*n..(l+1)*n-1
    (0-based); the kron/partial-trace round trip asserts this convention.
    """

    mat: np.ndarray
    block_dim: int
    strict: InitVar[bool] = False

    def __post_init__(self, strict: bool) -> None:
        m = np.array(self.mat, dtype=np.complex128)
        n = int(self.block_dim)
        if n <= 0:
            raise ValueError("block_dim must be positive")
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        if m.shape[0] != n * n:
            raise ValueError(
                f"dimension {m.shape[0]} is not the square of block_dim {n}"
            )
        if strict and asymmetry(m) > STRICT_ASYMMETRY_TOL:
            raise ValueError("asymmetry exceeds strict tolerance")
        m = hermitize(m)
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)
        object.__setattr__(self, "block_dim", n)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.mat).real)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.mat)[0])

    def is_psd(self, tol: float = -PSD_EIG_FLOOR) -> bool:
        return self.min_eigenvalue() >= -tol


def kron(a: HermitianMatrix, b: HermitianMatrix) -> BigMatrix:
    """Kronecker product of two same-dimension Hermitian matrices."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return BigMatrix(np.kron(a.mat, b.mat), block_dim=a.dim)


def partial_trace_1(rho: BigMatrix) -> HermitianMatrix:
    """Trace out the second tensor factor: entry (k, l) is tr of block (k, l)."""
    n = rho.block_dim
    r = rho.mat.reshape(n, n, n, n)  # axes (k, i, l, j)
    return HermitianMatrix(np.einsum("kili->kl", r))


def partial_trace_0(rho: BigMatrix) -> HermitianMatrix:
    """Trace out the first tensor factor: entry (i, j) sums block diagonals."""
    n = rho.block_dim
    r = rho.mat.reshape(n, n, n, n)
    return HermitianMatrix(np.einsum("kikj->ij", r))


def psd_project(h: HermitianMatrix) -> HermitianMatrix:
    """Nearest (Frobenius) PSD matrix: clip negative eigenvalues to zero."""
    try:
        w, v = np.linalg.eigh(h.mat)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ArithmeticError(f"eigendecomposition failed: {exc}") from exc
    w = np.maximum(w, 0.0)
    return HermitianMatrix((v * w) @ v.conj().T)


def frob_dist_sq(a: HermitianMatrix, b: HermitianMatrix) -> float:
    """Squared Frobenius distance: sum of squared entry-difference magnitudes."""
    d = a.mat - b.mat
    return float(np.sum(d.real**2 + d.imag**2))
