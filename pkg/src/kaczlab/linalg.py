"""Dense SVD oracle: Moore-Penrose solutions, projectors, condition numbers.

Every iterative quantity in the package is measured against the objects
built here, so this module sticks to a single full SVD per matrix and keeps
all derived quantities as thin views over that factorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateMatrix, InvalidInput, NumericalFailure

NORMAL = "normal"
BEYOND_NUMERICAL_RANK = "beyond-numerical-rank"


def as_matrix(A) -> np.ndarray:
    """Return `A` as a C-contiguous float64 2-D array, validating shape and values."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInput(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix has non-finite entries")
    return A


def as_vector(x, length: int, name: str = "vector") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (length,):
        raise InvalidInput(f"{name} must have shape ({length},), got {x.shape}")
    return x


@dataclass(frozen=True)
class SvdOracle:
    """Full singular value decomposition ``A = U diag(s) V^T`` with a rank decision.

    Attributes
    ----------
    s : ndarray, shape (min(m, n),)
        Singular values in descending order.
    U : ndarray, shape (m, m)
    V : ndarray, shape (n, n)
    rank : int
        Number of singular values strictly above `tol`.
    tol : float
        Rank tolerance.
    """

    s: np.ndarray
    U: np.ndarray
    V: np.ndarray
    rank: int
    tol: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape[0], self.V.shape[0]

    @property
    def sigma_max(self) -> float:
        return float(self.s[0]) if self.s.size else 0.0

    @property
    def sigma_rank(self) -> float:
        """Smallest singular value above the rank tolerance."""
        if self.rank == 0:
            raise DegenerateMatrix("matrix has numerical rank 0")
        return float(self.s[self.rank - 1])

    @property
    def row_basis(self) -> np.ndarray:
        """Orthonormal basis of N(A)^perp (the row space), shape (n, rank)."""
        return self.V[:, : self.rank]

    @property
    def null_basis(self) -> np.ndarray:
        """Orthonormal basis of N(A), shape (n, n - rank)."""
        return self.V[:, self.rank :]

    @property
    def range_basis(self) -> np.ndarray:
        """Orthonormal basis of R(A), shape (m, rank)."""
        return self.U[:, : self.rank]

    @property
    def pinv_norm(self) -> float:
        """Spectral norm of the pseudoinverse, ``1 / sigma_rank``."""
        return 1.0 / self.sigma_rank

    def pinv(self) -> np.ndarray:
        """Assemble the Moore-Penrose pseudoinverse explicitly, shape (n, m)."""
        r = self.rank
        return (self.V[:, :r] / self.s[:r]) @ self.U[:, :r].T


def default_tolerance(shape, sigma_max: float) -> float:
    return max(shape) * np.finfo(np.float64).eps * sigma_max


def svd(A, tol: float | None = None) -> SvdOracle:
    """Factor `A` and decide its numerical rank.

    The default tolerance is ``max(m, n) * eps * sigma_1``.
    """
    A = as_matrix(A)
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(U)) and np.all(np.isfinite(Vt))):
        raise NumericalFailure("SVD produced non-finite factors")
    if tol is None:
        tol = default_tolerance(A.shape, float(s[0]))
    rank = int(np.count_nonzero(s > tol))
    return SvdOracle(s=s, U=U, V=Vt.T.copy(), rank=rank, tol=float(tol))


def project_null(oracle: SvdOracle, x) -> np.ndarray:
    """Orthogonal projection of `x` onto N(A)."""
    n = oracle.shape[1]
    x = as_vector(x, n, "x")
    Vr = oracle.row_basis
    return x - Vr @ (Vr.T @ x)


def project_range(oracle: SvdOracle, y) -> np.ndarray:
    """Orthogonal projection of `y` onto R(A)."""
    m = oracle.shape[0]
    y = as_vector(y, m, "y")
    Ur = oracle.range_basis
    return Ur @ (Ur.T @ y)


def generalized_solution(oracle: SvdOracle, b) -> np.ndarray:
    """Minimal-norm least-squares solution ``A^+ b``."""
    m = oracle.shape[0]
    b = as_vector(b, m, "b")
    r = oracle.rank
    coef = (oracle.U[:, :r].T @ b) / oracle.s[:r]
    return oracle.V[:, :r] @ coef


def frobenius_norm(A) -> float:
    return float(np.linalg.norm(np.asarray(A, dtype=np.float64), "fro"))


def generalized_condition(A, oracle: SvdOracle) -> float:
    """``||A||_F * ||A^+||_2`` using the smallest above-tolerance singular value."""
    if oracle.rank == 0:
        raise DegenerateMatrix("generalized condition number undefined for rank 0")
    return frobenius_norm(A) / oracle.sigma_rank


class SpectralCondition(NamedTuple):
    value: float
    status: str  # NORMAL or BEYOND_NUMERICAL_RANK


def spectral_condition(oracle: SvdOracle) -> SpectralCondition:
    """Raw ``sigma_1 / sigma_min`` over the full, untruncated spectrum.

    The status is ``"beyond-numerical-rank"`` when ``sigma_min`` falls below
    the oracle's rank tolerance; the value is then not resolvable in float64
    and may be ``inf``.
    """
    if oracle.rank == 0:
        raise DegenerateMatrix("spectral condition undefined for the zero matrix")
    smin = float(oracle.s[-1])
    value = oracle.sigma_max / smin if smin > 0 else float("inf")
    status = BEYOND_NUMERICAL_RANK if smin <= oracle.tol else NORMAL
    return SpectralCondition(value, status)


def row_norms(A) -> np.ndarray:
    """Euclidean norm of every row."""
    A = np.asarray(A, dtype=np.float64)
    return np.sqrt(np.einsum("ij,ij->i", A, A))
