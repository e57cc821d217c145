"""Low-rank matrices kept in factored form U @ S @ V^H.

A `FactoredMatrix` stores an m-by-n matrix as three dense blocks U (m, k),
S (k, k), V (n, k) whose product U S V^H is the represented value. Factors
need not be orthonormal and S need not be diagonal; k = 0 represents the zero
matrix. All arithmetic here (sums, scaling, elementwise products, norms,
truncation) works on the factors alone and never forms the m-by-n array unless
explicitly asked to via `to_dense`, which refuses to build anything larger
than DENSIFY_GUARD entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENSIFY_GUARD = 10**7
HADAMARD_RANK_CAP = 512

# singular values at or below this multiple of the largest are treated as zero
NUMERICAL_RANK_RTOL = 1e-14
PINV_RTOL = 1e-12


class DensifyGuardError(RuntimeError):
    """Raised when to_dense would materialize more than DENSIFY_GUARD entries."""


class HadamardRankError(RuntimeError):
    """Raised when an elementwise product's factored rank would exceed the cap."""


@dataclass(frozen=True)
class FactoredMatrix:
    """Value U @ S @ V^H with U (m, k), S (k, k), V (n, k)."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U, S, V = self.U, self.S, self.V
        if U.ndim != 2 or S.ndim != 2 or V.ndim != 2:
            raise ValueError("factors must be 2-d arrays")
        k = U.shape[1]
        if S.shape != (k, k) or V.shape[1] != k:
            raise ValueError(
                f"inconsistent factor shapes {U.shape}, {S.shape}, {V.shape}"
            )
        dt = np.result_type(U.dtype, S.dtype, V.dtype, np.float64)
        if U.dtype != dt or S.dtype != dt or V.dtype != dt:
            object.__setattr__(self, "U", U.astype(dt))
            object.__setattr__(self, "S", S.astype(dt))
            object.__setattr__(self, "V", V.astype(dt))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.U.shape[0], self.V.shape[0])

    @property
    def rank(self) -> int:
        """Representation rank k (an upper bound on the matrix rank)."""
        return self.U.shape[1]

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(a) for a in (self.U, self.S, self.V))

    def conj(self) -> "FactoredMatrix":
        return FactoredMatrix(self.U.conj(), self.S.conj(), self.V.conj())

    def __repr__(self) -> str:
        m, n = self.shape
        field = "complex" if self.is_complex else "real"
        return f"FactoredMatrix({m}x{n}, rank<={self.rank}, {field})"


def zero(m: int, n: int, complex_field: bool = False) -> FactoredMatrix:
    """The m-by-n zero matrix as an empty factorization (k = 0)."""
    dt = np.complex128 if complex_field else np.float64
    return FactoredMatrix(
        np.zeros((m, 0), dtype=dt), np.zeros((0, 0), dtype=dt), np.zeros((n, 0), dtype=dt)
    )


def from_pair(left: np.ndarray, right: np.ndarray) -> FactoredMatrix:
    """Factored form of the product left @ right, identity core.

    left is (m, k), right is (k, n); the value is exactly left @ right.
    """
    left = np.atleast_2d(np.asarray(left))
    right = np.atleast_2d(np.asarray(right))
    k = left.shape[1]
    if right.shape[0] != k:
        raise ValueError("inner dimensions do not match")
    dt = np.result_type(left.dtype, right.dtype, np.float64)
    return FactoredMatrix(
        left.astype(dt, copy=False), np.eye(k, dtype=dt), right.conj().T.astype(dt, copy=False)
    )


def from_dense(A: np.ndarray) -> FactoredMatrix:
    """Wrap a dense matrix exactly, identity right factor (rank = n)."""
    A = np.atleast_2d(np.asarray(A))
    n = A.shape[1]
    dt = np.result_type(A.dtype, np.float64)
    return FactoredMatrix(A.astype(dt, copy=False), np.eye(n, dtype=dt), np.eye(n, dtype=dt))


def to_dense(X: FactoredMatrix) -> np.ndarray:
    """Materialize the represented matrix. Guarded against large outputs."""
    m, n = X.shape
    if m * n > DENSIFY_GUARD:
        raise DensifyGuardError(
            f"refusing to materialize {m}x{n} = {m * n} entries (guard {DENSIFY_GUARD})"
        )
    if X.rank == 0:
        dt = np.complex128 if X.is_complex else np.float64
        return np.zeros((m, n), dtype=dt)
    return (X.U @ X.S) @ X.V.conj().T


def add(X: FactoredMatrix, Y: FactoredMatrix) -> FactoredMatrix:
    """Exact sum by block concatenation; rank adds, nothing is truncated."""
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Y.shape}")
    if Y.rank == 0:
        return X
    if X.rank == 0:
        return Y
    dt = np.result_type(X.S.dtype, Y.S.dtype)
    kx, ky = X.rank, Y.rank
    S = np.zeros((kx + ky, kx + ky), dtype=dt)
    S[:kx, :kx] = X.S
    S[kx:, kx:] = Y.S
    return FactoredMatrix(
        np.hstack([X.U, Y.U]).astype(dt, copy=False),
        S,
        np.hstack([X.V, Y.V]).astype(dt, copy=False),
    )


def scale(X: FactoredMatrix, alpha: complex) -> FactoredMatrix:
    """Scalar multiple, absorbed into the core."""
    dt = np.result_type(X.S.dtype, np.asarray(alpha).dtype)
    return FactoredMatrix(X.U.astype(dt, copy=False), X.S * alpha, X.V.astype(dt, copy=False))


def _numerical_rank(s: np.ndarray, rtol: float = NUMERICAL_RANK_RTOL) -> int:
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def truncated_svd(X, r: int | None = None) -> FactoredMatrix:
    """Best rank-r approximation, factors orthonormal and core diagonal.

    Parameters
    ----------
    X : FactoredMatrix or ndarray
        Input matrix. Factored inputs are compressed without densifying:
        thin QR of U and V, then an SVD of the small core.
    r : int or None
        Target rank. None keeps the full numerical rank. Singular values at
        or below NUMERICAL_RANK_RTOL times the largest are dropped either way,
        so the returned rank can be below r.

    Returns
    -------
    FactoredMatrix with orthonormal U, V and diagonal S, rank <= r.
    """
    if r is not None and r < 0:
        raise ValueError("rank must be nonnegative")
    if isinstance(X, FactoredMatrix):
        m, n = X.shape
        if X.rank == 0 or r == 0:
            return zero(m, n, X.is_complex)
        Qu, Ru = np.linalg.qr(X.U)
        Qv, Rv = np.linalg.qr(X.V)
        core = Ru @ X.S @ Rv.conj().T
        u, s, vh = np.linalg.svd(core, full_matrices=False)
        t = _numerical_rank(s)
        if r is not None:
            t = min(t, r)
        return FactoredMatrix(Qu @ u[:, :t], np.diag(s[:t]), Qv @ vh[:t].conj().T)
    A = np.atleast_2d(np.asarray(X, dtype=np.result_type(X, np.float64)))
    if r == 0:
        return zero(A.shape[0], A.shape[1], np.iscomplexobj(A))
    u, s, vh = np.linalg.svd(A, full_matrices=False)
    t = _numerical_rank(s)
    if r is not None:
        t = min(t, r)
    return FactoredMatrix(u[:, :t], np.diag(s[:t]), vh[:t].conj().T)


def orthonormalize(X: FactoredMatrix) -> FactoredMatrix:
    """Recompress to orthonormal factors and diagonal core at full numerical rank."""
    return truncated_svd(X, r=None)


def hadamard(X: FactoredMatrix, Y: FactoredMatrix, rank_cap: int = HADAMARD_RANK_CAP) -> FactoredMatrix:
    """Elementwise product in factored form via row-wise Khatri-Rao products.

    The factors of X (*) Y are the row-wise Khatri-Rao products of the input
    factors with core kron(S_X, S_Y); the representation rank is k_X * k_Y.
    Raises HadamardRankError when that exceeds rank_cap so callers can fall
    back to a dense evaluation.
    """
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Y.shape}")
    k = X.rank * Y.rank
    if k > rank_cap:
        raise HadamardRankError(
            f"elementwise product rank {X.rank}*{Y.rank} = {k} exceeds cap {rank_cap}"
        )
    if k == 0:
        m, n = X.shape
        return zero(m, n, X.is_complex or Y.is_complex)
    m, n = X.shape
    U = (X.U[:, :, None] * Y.U[:, None, :]).reshape(m, k)
    V = (X.V[:, :, None] * Y.V[:, None, :]).reshape(n, k)
    return FactoredMatrix(U, np.kron(X.S, Y.S), V)


def frobenius_norm(X) -> float:
    """Frobenius norm; factored inputs use the small Gram matrices only."""
    if isinstance(X, FactoredMatrix):
        if X.rank == 0:
            return 0.0
        Gu = X.U.conj().T @ X.U
        Gv = X.V.conj().T @ X.V
        val = np.trace(X.S.conj().T @ Gu @ X.S @ Gv)
        return float(np.sqrt(max(val.real, 0.0)))
    return float(np.linalg.norm(np.asarray(X)))


def frobenius_distance(X, Y) -> float:
    """|| X - Y ||_F for factored and/or dense inputs.

    Two factored inputs stay factored (Gram matrix of the concatenated
    difference); a dense input densifies the other operand under the guard.
    """
    x_fac = isinstance(X, FactoredMatrix)
    y_fac = isinstance(Y, FactoredMatrix)
    if x_fac and y_fac:
        return frobenius_norm(add(X, scale(Y, -1.0)))
    A = to_dense(X) if x_fac else np.asarray(X)
    B = to_dense(Y) if y_fac else np.asarray(Y)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.linalg.norm(A - B))


def pad_to_rank(X: FactoredMatrix, r: int) -> FactoredMatrix:
    """Pad an orthonormal-factor X with zero singular values up to rank r.

    Extra columns are orthonormal complements of the existing ones (built from
    identity columns), so the dense value is unchanged.
    """
    k = X.rank
    if k >= r:
        return X
    m, n = X.shape
    if r > min(m, n):
        raise ValueError(f"cannot pad to rank {r} > min{X.shape}")
    U = _extend_orthonormal(X.U, r)
    V = _extend_orthonormal(X.V, r)
    dt = np.result_type(X.S.dtype, np.float64)
    S = np.zeros((r, r), dtype=dt)
    S[:k, :k] = X.S
    return FactoredMatrix(U, S, V)


def _extend_orthonormal(Q: np.ndarray, r: int) -> np.ndarray:
    m, k = Q.shape
    if k >= r:
        return Q
    # project identity columns away from range(Q), keep the first r-k independent ones
    need = r - k
    cols = []
    basis = Q
    for j in range(m):
        e = np.zeros(m, dtype=Q.dtype)
        e[j] = 1.0
        w = e - basis @ (basis.conj().T @ e)
        w = w - basis @ (basis.conj().T @ w)  # second pass for orthogonality
        nw = np.linalg.norm(w)
        if nw > 1e-10:
            w = w / nw
            cols.append(w)
            basis = np.hstack([basis, w[:, None]])
            if len(cols) == need:
                break
    if len(cols) < need:
        raise np.linalg.LinAlgError("could not extend orthonormal basis")
    return basis
