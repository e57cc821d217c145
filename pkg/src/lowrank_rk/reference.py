"""Dense ground-truth solvers and the reference-solution cache.

`dormand_prince_solve` integrates the matrix ODE with the standard embedded
5(4) pair under componentwise error control (every entry must satisfy
|E_ij| <= abs_tol + rel_tol |A_ij|), stepping on the matrix directly; complex
problems integrate the complex matrix as-is. `dense_rk4_solve` is the
fixed-step classical RK4 cross-check. Reference solutions are cached in
memory per (problem, initial value, T, tolerances) and optionally on disk in
a small self-describing binary format.
"""

from __future__ import annotations

import hashlib
import os
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .problems import RhsOperator

REF_CACHE_ENV = "LOWRANK_RK_REF_CACHE"

# Dormand-Prince 5(4) coefficients; row 7 equals the 5th-order weights (FSAL).
_DP_A = np.array(
    [
        [0, 0, 0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0, 0],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0],
    ]
)
_DP_B5 = _DP_A[6]
_DP_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


@dataclass(frozen=True)
class AdaptiveSolverSettings:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    initial_h: float | None = None
    max_steps: int = 500_000
    safety: float = 0.9

    def __post_init__(self):
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")


def dormand_prince_solve(
    rhs: RhsOperator, A0: np.ndarray, T: float, settings: AdaptiveSolverSettings | None = None
) -> np.ndarray:
    """Integrate A' = F(A) from A0 over [0, T] with the embedded 5(4) pair.

    Error control is componentwise: a step is accepted when
    max_ij |E_ij| / (abs_tol + rel_tol max(|A_ij|, |A_new,ij|)) <= 1, and
    the next step scales by safety * err^(-1/5), clamped to [0.2, 5]. The
    first trial step spans the whole interval (rejections shrink it), so a
    constant right-hand side finishes in a single step.
    """
    if T <= 0.0:
        raise ValueError("T must be positive")
    st = settings or AdaptiveSolverSettings()
    A = np.array(A0, dtype=np.complex128 if rhs.is_complex or np.iscomplexobj(A0) else np.float64)
    t = 0.0
    h = min(st.initial_h, T) if st.initial_h else T
    k = [None] * 7
    k[0] = rhs.apply_dense(A)
    for _ in range(st.max_steps):
        final = h >= T - t
        h_step = T - t if final else h
        if h_step < 1e-14 * max(T, 1.0):
            raise RuntimeError(f"step size underflow at t={t!r}")
        for i in range(1, 7):
            incr = sum(_DP_A[i, j] * k[j] for j in range(i) if _DP_A[i, j] != 0.0)
            k[i] = rhs.apply_dense(A + h_step * incr)
        A_new = A + h_step * sum(_DP_B5[j] * k[j] for j in range(6))  # b5[6] = 0
        E = h_step * sum(_DP_E[j] * k[j] for j in range(7))
        scale = st.abs_tol + st.rel_tol * np.maximum(np.abs(A), np.abs(A_new))
        err = float(np.max(np.abs(E) / scale))
        if np.isfinite(err) and err <= 1.0:
            if final:
                return A_new
            t += h_step
            A = A_new
            k[0] = k[6]  # FSAL: stage 7 was evaluated at A_new
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, st.safety * err ** -0.2))
        else:
            factor = 0.2 if not np.isfinite(err) else min(1.0, max(0.2, st.safety * err ** -0.2))
        h = h_step * factor
    raise RuntimeError(f"max_steps={st.max_steps} exceeded at t={t!r} < T={T!r}")


def dense_rk4_solve(rhs: RhsOperator, A0: np.ndarray, h: float, n_steps: int) -> np.ndarray:
    """n_steps fixed steps of classical RK4 on the dense state."""
    A = np.array(A0, dtype=np.complex128 if rhs.is_complex or np.iscomplexobj(A0) else np.float64)
    for _ in range(n_steps):
        k1 = rhs.apply_dense(A)
        k2 = rhs.apply_dense(A + 0.5 * h * k1)
        k3 = rhs.apply_dense(A + 0.5 * h * k2)
        k4 = rhs.apply_dense(A + h * k3)
        A = A + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return A


_MAGIC = b"LRRKREF1"


def write_matrix_file(path: str, A: np.ndarray) -> None:
    """Binary layout: magic, uint32 version, uint8 complex flag, 3 pad bytes,
    uint64 rows, uint64 cols, then row-major little-endian float64/complex128."""
    A = np.ascontiguousarray(A)
    cplx = np.iscomplexobj(A)
    A = A.astype("<c16" if cplx else "<f8", copy=False)
    header = _MAGIC + struct.pack("<IB3xQQ", 1, int(cplx), A.shape[0], A.shape[1])
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(A.tobytes())
    os.replace(tmp, path)


def read_matrix_file(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a reference matrix file")
        version, cplx, m, n = struct.unpack("<IB3xQQ", f.read(24))
        if version != 1:
            raise ValueError(f"{path}: unsupported version {version}")
        dt = np.dtype("<c16" if cplx else "<f8")
        data = np.frombuffer(f.read(m * n * dt.itemsize), dtype=dt)
    if data.size != m * n:
        raise ValueError(f"{path}: truncated payload")
    return data.reshape(m, n).astype(np.complex128 if cplx else np.float64)


_memory_cache: dict[str, np.ndarray] = {}
_cache_lock = threading.Lock()


def clear_cache() -> None:
    with _cache_lock:
        _memory_cache.clear()


def _reference_key(rhs: RhsOperator, A0: np.ndarray, T: float, st: AdaptiveSolverSettings) -> str:
    digest = hashlib.sha256(np.ascontiguousarray(A0).tobytes()).hexdigest()[:16]
    return f"{rhs.cache_key()}|T={T!r}|rtol={st.rel_tol!r}|atol={st.abs_tol!r}|A0={digest}"


def solve_reference(
    rhs: RhsOperator,
    A0: np.ndarray,
    T: float,
    settings: AdaptiveSolverSettings | None = None,
    cache_dir: str | None = None,
) -> np.ndarray:
    """Cached dormand_prince_solve keyed by problem, initial value, T, tolerances.

    cache_dir (or the LOWRANK_RK_REF_CACHE env var) adds a disk layer in the
    documented binary format; memory hits never touch the disk.
    """
    st = settings or AdaptiveSolverSettings()
    key = _reference_key(rhs, A0, T, st)
    with _cache_lock:
        hit = _memory_cache.get(key)
    if hit is not None:
        return hit
    cache_dir = cache_dir or os.environ.get(REF_CACHE_ENV)
    path = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        path = os.path.join(cache_dir, hashlib.sha256(key.encode()).hexdigest()[:24] + ".lrref")
        if os.path.exists(path):
            A = read_matrix_file(path)
            return _store(key, A)
    A = dormand_prince_solve(rhs, A0, T, st)
    if path:
        write_matrix_file(path, A)
    return _store(key, A)


def _store(key: str, A: np.ndarray) -> np.ndarray:
    A.setflags(write=False)  # shared across callers; mutation would poison the cache
    with _cache_lock:
        _memory_cache[key] = A
    return A
