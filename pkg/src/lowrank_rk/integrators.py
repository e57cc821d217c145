"""Low-rank time steppers for matrix ODEs A' = F(A).

Methods
-------
rand_rk        Explicit RK where every stage value exists only as a two-sided
               sketch pair; stage combinations accumulate by sketch linearity,
               F is evaluated on the rank-r Nystrom reconstruction of each
               stage, and fresh (omega, psi) are drawn per stage from labeled
               substreams. The full stage matrices Z_j are never formed.
rand_rk_reuse  Same scheme with a single (omega, psi) pair shared by all
               stages of a step (cheaper, no theoretical cover).
modified_rk4   Classical RK4 whose four stage values are Nystrom captures at
               an enlarged rank (15 r by default) so the final rank-r
               truncation sees fourth-order stage data.
prk            Projected RK baseline: stages are tangent-projected vector
               fields at truncated-SVD retractions, final retraction to rank r.

Every step maps a rank <= r FactoredMatrix to a rank <= r FactoredMatrix;
`integrate` composes steps and `prepare_initial` builds Y_0 from A_0 the way
each method expects (sketch-and-truncate for the randomized methods,
truncated SVD for prk).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import factored as fm
from .factored import FactoredMatrix
from .nystrom import SketchDims, draw_sketch_matrices, nystrom_truncate, sketch, sketch_accumulate
from .problems import RhsOperator
from .randgen import RngStream

METHODS = ("rand_rk", "rand_rk_reuse", "modified_rk4", "prk")


class IntegrationError(RuntimeError):
    """A step failed; message carries the step index and method."""


@dataclass(frozen=True)
class ButcherTableau:
    """Explicit RK coefficients; c is derived as the row sums of a."""

    name: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        s = b.size
        if a.shape != (s, s):
            raise ValueError("a must be s x s for s = len(b)")
        if np.any(np.triu(a) != 0.0):
            raise ValueError("tableau must be explicit (strictly lower triangular a)")
        if abs(b.sum() - 1.0) > 1e-12:
            raise ValueError("weights b must sum to 1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", a.sum(axis=1))

    @property
    def stages(self) -> int:
        return self.b.size


def _build_tableaus() -> dict[str, ButcherTableau]:
    rk1 = ButcherTableau("rk1", np.zeros((1, 1)), np.array([1.0]))
    rk2 = ButcherTableau("rk2", np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([0.5, 0.5]))
    a4 = np.zeros((4, 4))
    a4[1, 0] = 0.5
    a4[2, 1] = 0.5
    a4[3, 2] = 1.0
    rk4 = ButcherTableau("rk4", a4, np.array([1, 2, 2, 1]) / 6.0)
    return {"rk1": rk1, "rk2": rk2, "rk4": rk4}


_TABLEAUS = _build_tableaus()


def tableau(name: str) -> ButcherTableau:
    """Named tableau: rk1 (Euler), rk2 (Heun), rk4 (classical)."""
    try:
        return _TABLEAUS[name]
    except KeyError:
        raise ValueError(f"unknown tableau {name!r}, expected one of {sorted(_TABLEAUS)}")


def order_conditions(tab: ButcherTableau) -> dict[str, float]:
    """Residuals of the order conditions through order 4 (0 = satisfied)."""
    a, b, c = tab.a, tab.b, tab.c
    return {
        "sum(b) - 1": float(b.sum() - 1.0),
        "b.c - 1/2": float(b @ c - 0.5),
        "b.c^2 - 1/3": float(b @ c**2 - 1.0 / 3.0),
        "b.A.c - 1/6": float(b @ a @ c - 1.0 / 6.0),
        "b.c^3 - 1/4": float(b @ c**3 - 0.25),
        "(b*c).A.c - 1/8": float((b * c) @ a @ c - 0.125),
        "b.A.c^2 - 1/12": float(b @ a @ c**2 - 1.0 / 12.0),
        "b.A.A.c - 1/24": float(b @ a @ a @ c - 1.0 / 24.0),
    }


def _is_classical_rk4(tab: ButcherTableau) -> bool:
    ref = _TABLEAUS["rk4"]
    return tab.a.shape == ref.a.shape and np.array_equal(tab.a, ref.a) and np.array_equal(tab.b, ref.b)


@dataclass(frozen=True)
class IntegratorConfig:
    """One method instance: scheme, tableau, rank, sketch sizes, step grid."""

    method: str
    tableau: ButcherTableau
    rank: int
    dims: SketchDims
    h: float
    n_steps: int
    intermediate_rank_factor: int = 15

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.h <= 0.0:
            raise ValueError("step size must be positive")
        if self.n_steps < 1:
            raise ValueError("need at least one step")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.method == "modified_rk4" and not _is_classical_rk4(self.tableau):
            raise ValueError("modified_rk4 requires the classical rk4 tableau")


def _stage_streams(rng: RngStream, step_index: int, s: int, reuse: bool) -> list[RngStream]:
    """Streams for stages j = 1..s+1 of one step; label = i*(s+2)+j."""
    base = step_index * (s + 2)
    if reuse:
        return [rng.substream(base + 1)] * (s + 1)
    return [rng.substream(base + j) for j in range(1, s + 2)]


def rand_rk_step(
    Y: FactoredMatrix,
    rhs: RhsOperator,
    cfg: IntegratorConfig,
    rng: RngStream,
    step_index: int = 0,
) -> FactoredMatrix:
    """One randomized low-rank RK step.

    Stage j holds only the sketch pair (Z_j omega_j, psi_j^H Z_j), built from
    the carried iterate plus accumulated sketches of the earlier stage fields
    F_l = F(N_l(Z_l)); the final combination is truncated to rank r by the
    (s+1)-th Nystrom map. With reuse, one (omega, psi) serves all stages.
    """
    tab = cfg.tableau
    s = tab.stages
    m, n = rhs.shape
    cfield = rhs.is_complex or Y.is_complex
    reuse = cfg.method == "rand_rk_reuse"
    streams = _stage_streams(rng, step_index, s, reuse)
    if reuse:
        mats = [draw_sketch_matrices(streams[0], m, n, cfg.dims, cfield)] * (s + 1)
    else:
        mats = [draw_sketch_matrices(st, m, n, cfg.dims, cfield) for st in streams]

    fields: list[FactoredMatrix] = []
    for j in range(s):
        omega, psi = mats[j]
        sp = sketch(Y, omega, psi, cfg.dims)
        for l in range(j):
            a = tab.a[j, l]
            if a != 0.0:
                sp = sketch_accumulate(sp, fields[l], cfg.h * a)
        stage = nystrom_truncate(sp, cfg.rank)
        fields.append(rhs.apply(stage))

    omega, psi = mats[s]
    sp = sketch(Y, omega, psi, cfg.dims)
    for j in range(s):
        if tab.b[j] != 0.0:
            sp = sketch_accumulate(sp, fields[j], cfg.h * tab.b[j])
    return nystrom_truncate(sp, cfg.rank)


def modified_rk4_step(
    Y: FactoredMatrix,
    rhs: RhsOperator,
    cfg: IntegratorConfig,
    rng: RngStream,
    step_index: int = 0,
) -> FactoredMatrix:
    """Classical RK4 with stage captures at rank min(15 r, min(m, n)).

    Each stage value is a fresh Nystrom approximation of an explicitly
    formed factored sum; only the final combination is truncated to rank r.
    """
    m, n = rhs.shape
    cfield = rhs.is_complex or Y.is_complex
    k_mid = min(cfg.intermediate_rank_factor * cfg.rank, m, n)
    dims_mid = SketchDims.for_rank(k_mid)
    h = cfg.h
    streams = _stage_streams(rng, step_index, 4, reuse=False)

    def capture(Z: FactoredMatrix, j: int, dims: SketchDims) -> FactoredMatrix:
        omega, psi = draw_sketch_matrices(streams[j], m, n, dims, cfield)
        return nystrom_truncate(sketch(Z, omega, psi, dims), dims.r)

    z = capture(Y, 0, dims_mid)
    f1 = rhs.apply(z)
    z = capture(fm.add(Y, fm.scale(f1, 0.5 * h)), 1, dims_mid)
    f2 = rhs.apply(z)
    z = capture(fm.add(Y, fm.scale(f2, 0.5 * h)), 2, dims_mid)
    f3 = rhs.apply(z)
    z = capture(fm.add(Y, fm.scale(f3, h)), 3, dims_mid)
    f4 = rhs.apply(z)

    combo = Y
    for f, w in ((f1, h / 6.0), (f2, h / 3.0), (f3, h / 3.0), (f4, h / 6.0)):
        combo = fm.add(combo, fm.scale(f, w))
    return capture(combo, 4, cfg.dims)


def tangent_project(U: np.ndarray, V: np.ndarray, G: FactoredMatrix) -> FactoredMatrix:
    """Tangent-space projection UU^H G + G VV^H - UU^H G VV^H at orthonormal (U, V).

    Returned as the exact sum of two rank-r factored terms (rank <= 2r):
    U (U^H G) plus (I - UU^H) G VV^H.
    """
    r = U.shape[1]
    dt = np.result_type(U.dtype, G.S.dtype)
    eye = np.eye(r, dtype=dt)
    M = U.conj().T @ G.U
    term1 = FactoredMatrix(U.astype(dt, copy=False), eye, G.V @ (G.S.conj().T @ M.conj().T))
    SW = G.S @ (G.V.conj().T @ V)
    A2 = G.U @ SW - U @ (M @ SW)
    term2 = FactoredMatrix(A2, eye, V.astype(dt, copy=False))
    return fm.add(term1, term2)


def _retract(Z: FactoredMatrix, r: int) -> FactoredMatrix:
    """Truncated-SVD retraction to rank exactly r, zero-padded on collapse."""
    Y = fm.truncated_svd(Z, r)
    if Y.rank < r:
        warnings.warn(
            f"retraction rank collapsed to {Y.rank} < {r}; padding with zero singular values",
            RuntimeWarning,
            stacklevel=2,
        )
        Y = fm.pad_to_rank(Y, r)
    return Y


def prk_step(
    Y: FactoredMatrix,
    rhs: RhsOperator,
    cfg: IntegratorConfig,
    rng: RngStream | None = None,
    step_index: int = 0,
) -> FactoredMatrix:
    """One projected RK step; deterministic, rng accepted only for symmetry.

    Stages Z_j = Y + h sum_l a_jl P(R(Z_l)) F(R(Z_l)) stay factored with rank
    <= r + 2r(j-1); R is the truncated-SVD retraction.
    """
    tab = cfg.tableau
    s = tab.stages
    h = cfg.h
    projected: list[FactoredMatrix] = []
    for j in range(s):
        Zj = Y
        for l in range(j):
            a = tab.a[j, l]
            if a != 0.0:
                Zj = fm.add(Zj, fm.scale(projected[l], h * a))
        Rj = _retract(Zj, cfg.rank) if j > 0 else Y
        Fj = rhs.apply(Rj)
        projected.append(tangent_project(Rj.U, Rj.V, Fj))
    out = Y
    for j in range(s):
        if tab.b[j] != 0.0:
            out = fm.add(out, fm.scale(projected[j], h * tab.b[j]))
    return _retract(out, cfg.rank)


_STEPPERS = {
    "rand_rk": rand_rk_step,
    "rand_rk_reuse": rand_rk_step,
    "modified_rk4": modified_rk4_step,
    "prk": prk_step,
}


def prepare_initial(A0, rhs: RhsOperator, cfg: IntegratorConfig, rng: RngStream) -> FactoredMatrix:
    """Y_0 from A_0: sketch-and-truncate for randomized methods (substream
    label 0, never used by stages), truncated SVD padded to rank r for prk."""
    if cfg.method == "prk":
        return _retract(A0 if isinstance(A0, FactoredMatrix) else np.asarray(A0), cfg.rank)
    m, n = rhs.shape
    cfield = rhs.is_complex or (
        A0.is_complex if isinstance(A0, FactoredMatrix) else np.iscomplexobj(A0)
    )
    st = rng.substream(0)
    omega, psi = draw_sketch_matrices(st, m, n, cfg.dims, cfield)
    return nystrom_truncate(sketch(A0, omega, psi, cfg.dims), cfg.rank)


def integrate(
    Y0: FactoredMatrix,
    rhs: RhsOperator,
    cfg: IntegratorConfig,
    rng: RngStream,
    observe=None,
) -> FactoredMatrix:
    """Apply cfg.n_steps steps of cfg.method starting from Y0.

    observe, if given, is called after every step as observe(i, t, Y) with
    i the 1-based step count and Y the current factored iterate.
    """
    step = _STEPPERS[cfg.method]
    Y = Y0
    for i in range(cfg.n_steps):
        try:
            Y = step(Y, rhs, cfg, rng, step_index=i)
        except Exception as exc:
            raise IntegrationError(f"{cfg.method} failed at step {i}: {exc}") from exc
        if observe is not None:
            observe(i + 1, (i + 1) * cfg.h, Y)
    return Y
