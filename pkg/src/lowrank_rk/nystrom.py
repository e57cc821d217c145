"""Two-sided Gaussian sketches and generalized Nystrom truncation.

For a target rank r the right sketch Z @ Omega uses r + p Gaussian columns and
the left sketch Psi^H @ Z uses r + p + l rows, with oversampling defaults
p = l = max(2, ceil(0.1 r)). The rank-r approximation is evaluated in the
numerically stable form

    N(Z) = Q [[ (Psi^H Q)^+ (Psi^H Z) ]]_r,   Q from a thin QR of Z @ Omega,

which touches Z only through the two sketches; Z itself is never formed here.
Sketches are linear in Z, so stage combinations accumulate on the sketch pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .factored import (
    PINV_RTOL,
    FactoredMatrix,
    _numerical_rank,
    zero,
)
from .randgen import RngStream


def default_oversampling(r: int) -> int:
    """p = l = max(2, ceil(0.1 r))."""
    return max(2, math.ceil(0.1 * r))


@dataclass(frozen=True)
class SketchDims:
    """Target rank r with oversampling p (right) and l (extra left rows)."""

    r: int
    p: int
    l: int

    def __post_init__(self):
        if self.r < 0 or self.p < 0 or self.l < 0:
            raise ValueError("sketch dimensions must be nonnegative")

    @property
    def right_width(self) -> int:
        return self.r + self.p

    @property
    def left_width(self) -> int:
        return self.r + self.p + self.l

    @classmethod
    def for_rank(cls, r: int) -> "SketchDims":
        q = default_oversampling(r)
        return cls(r, q, q)


@dataclass(frozen=True)
class SketchPair:
    """The two sketches of some m-by-n matrix Z, plus the matrices that made them.

    right = Z @ omega (m, r+p), left = psi^H @ Z (r+p+l, n). omega and psi are
    retained: psi for the stable evaluation, omega so further terms can be
    accumulated onto the pair.
    """

    right: np.ndarray
    left: np.ndarray
    omega: np.ndarray
    psi: np.ndarray
    dims: SketchDims

    @property
    def shape(self) -> tuple[int, int]:
        return (self.right.shape[0], self.left.shape[1])


def draw_sketch_matrices(
    stream: RngStream, m: int, n: int, dims: SketchDims, complex_field: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Fresh (omega, psi) for an m-by-n target, omega drawn first."""
    omega = stream.test_matrix(n, dims.right_width, complex_field)
    psi = stream.test_matrix(m, dims.left_width, complex_field)
    return omega, psi


def sketch(Z, omega: np.ndarray, psi: np.ndarray, dims: SketchDims) -> SketchPair:
    """Sketch a dense or factored Z without forming it densely.

    Factored inputs multiply through the factors: Z @ omega costs
    O((m + n) k w) and never builds an m-by-n array.
    """
    if isinstance(Z, FactoredMatrix):
        t = Z.V.conj().T @ omega
        right = Z.U @ (Z.S @ t)
        w = psi.conj().T @ Z.U
        left = (w @ Z.S) @ Z.V.conj().T
    else:
        Z = np.asarray(Z)
        right = Z @ omega
        left = psi.conj().T @ Z
    return SketchPair(right, left, omega, psi, dims)


def sketch_accumulate(acc: SketchPair, term, alpha: float = 1.0) -> SketchPair:
    """acc + alpha * sketch(term) with acc's own omega and psi (linearity)."""
    upd = sketch(term, acc.omega, acc.psi, acc.dims)
    return SketchPair(
        acc.right + alpha * upd.right,
        acc.left + alpha * upd.left,
        acc.omega,
        acc.psi,
        acc.dims,
    )


def _pinv_apply(W: np.ndarray, B: np.ndarray, diagnostics: dict | None) -> np.ndarray:
    """W^+ @ B through an SVD with relative cutoff PINV_RTOL."""
    u, s, vh = np.linalg.svd(W, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        if diagnostics is not None:
            diagnostics["pinv_cutoff_engaged"] = True
        return np.zeros((W.shape[1], B.shape[1]), dtype=np.result_type(W, B))
    keep = s > PINV_RTOL * s[0]
    if diagnostics is not None and not bool(keep.all()):
        diagnostics["pinv_cutoff_engaged"] = True
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return vh.conj().T @ (inv[:, None] * (u.conj().T @ B))


def nystrom_truncate(sp: SketchPair, r: int | None = None, diagnostics: dict | None = None) -> FactoredMatrix:
    """Rank-r generalized Nystrom approximation from a sketch pair.

    Parameters
    ----------
    sp : SketchPair
        Sketches of the target matrix.
    r : int, optional
        Target rank, defaults to sp.dims.r.
    diagnostics : dict, optional
        If given, gets "pinv_cutoff_engaged" set when the pseudoinverse
        dropped directions (an ill-conditioned core; not an error).

    Returns
    -------
    FactoredMatrix of rank <= r with orthonormal factors and diagonal core.
    Exact (up to roundoff) whenever the sketched matrix has rank <= r.
    """
    if r is None:
        r = sp.dims.r
    m, n = sp.shape
    cfield = np.iscomplexobj(sp.right) or np.iscomplexobj(sp.left)
    if r == 0 or np.linalg.norm(sp.right) == 0.0:
        return zero(m, n, cfield)
    Q, _ = np.linalg.qr(sp.right)
    core = _pinv_apply(sp.psi.conj().T @ Q, sp.left, diagnostics)
    u, s, vh = np.linalg.svd(core, full_matrices=False)
    t = min(_numerical_rank(s), r)
    return FactoredMatrix(Q @ u[:, :t], np.diag(s[:t]), vh[:t].conj().T)


def nystrom_approximate(
    Z, dims: SketchDims, stream: RngStream, diagnostics: dict | None = None
) -> FactoredMatrix:
    """Draw fresh sketch matrices and truncate Z to rank dims.r in one call."""
    if isinstance(Z, FactoredMatrix):
        m, n = Z.shape
        cfield = Z.is_complex
    else:
        Z = np.asarray(Z)
        m, n = Z.shape
        cfield = np.iscomplexobj(Z)
    omega, psi = draw_sketch_matrices(stream, m, n, dims, cfield)
    return nystrom_truncate(sketch(Z, omega, psi, dims), dims.r, diagnostics)


def idealized_projection_step(
    Y: FactoredMatrix, exact_flow, dims: SketchDims, stream: RngStream
) -> FactoredMatrix:
    """One step of Y -> N(flow(Y)) with fresh sketches; flow maps dense to dense.

    Only sensible for small problems with a closed-form flow; the flow output
    is materialized densely before sketching.
    """
    from .factored import to_dense

    Z = exact_flow(to_dense(Y))
    return nystrom_approximate(Z, dims, stream)
