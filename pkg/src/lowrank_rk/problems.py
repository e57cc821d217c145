"""Right-hand sides F for the matrix ODEs A' = F(A).

Each problem evaluates F both on a dense matrix and on a `FactoredMatrix`,
where the factored route exploits structure (separable sources, diagonal
congruences, Khatri-Rao elementwise products) and never builds the full
state. The two routes agree entrywise; tests pin that down.

Problems
--------
DiagonalToyProblem     3x3 diagonal linear ODE with a closed-form flow.
LyapunovProblem        A' = LA + AL + alpha * C/||C||_F, separable rank-11 C.
NlsProblem             A' = i[ (BA+AB)/2 + alpha*|A|^2 A ], complex cubic.
ImagSchrodingerProblem A' = (DA+AD)/2 - V A V, imaginary-time damping.
AllenCahnProblem       A' = eps(LA+AL) + A - A^3, periodic Laplacian.
"""

from __future__ import annotations

import abc
import math

import numpy as np

from . import factored as fm
from .factored import FactoredMatrix, HadamardRankError
from .randgen import RngStream


def _tridiag(n: int, lo: float, di: float, up: float, periodic: bool = False) -> np.ndarray:
    A = np.zeros((n, n))
    A[np.arange(n), np.arange(n)] = di
    A[np.arange(1, n), np.arange(n - 1)] = lo
    A[np.arange(n - 1), np.arange(1, n)] = up
    if periodic and n > 1:
        A[0, n - 1] = lo
        A[n - 1, 0] = up
    return A


def left_multiply(M: np.ndarray, Y: FactoredMatrix) -> FactoredMatrix:
    """M @ Y without densifying Y."""
    return FactoredMatrix(M @ Y.U, Y.S, Y.V)


def right_multiply(Y: FactoredMatrix, M: np.ndarray) -> FactoredMatrix:
    """Y @ M without densifying Y."""
    return FactoredMatrix(Y.U, Y.S, M.conj().T @ Y.V)


class RhsOperator(abc.ABC):
    """Contract for a right-hand side F acting on factored and dense states."""

    @property
    @abc.abstractmethod
    def shape(self) -> tuple[int, int]:
        """State dimensions (m, n)."""

    @property
    def is_complex(self) -> bool:
        return False

    @abc.abstractmethod
    def apply(self, Y: FactoredMatrix) -> FactoredMatrix:
        """F(Y) in factored form."""

    @abc.abstractmethod
    def apply_dense(self, A: np.ndarray) -> np.ndarray:
        """F(A) densely; the reference-solver route."""

    @abc.abstractmethod
    def initial_value(self, rng: RngStream | None = None):
        """A_0, factored where an exact factorization exists, else dense."""

    def lipschitz_hint(self) -> float | None:
        """Advisory magnitude of F's linearization; informational only."""
        return None

    def cache_key(self) -> str:
        return type(self).__name__

    def _cube_elementwise(self, Y: FactoredMatrix, conj_first: bool = False) -> FactoredMatrix:
        """Y (*) Y (*) Y, or conj(Y) (*) Y (*) Y, with dense fallback past the rank cap."""
        first = Y.conj() if conj_first else Y
        try:
            return fm.hadamard(fm.hadamard(first, Y), Y)
        except HadamardRankError:
            A = fm.to_dense(Y)
            B = (np.conj(A) if conj_first else A) * A * A
            return fm.from_dense(B)


class DiagonalToyProblem(RhsOperator):
    """F(A) = D A + G on 3x3 diagonal data, D = diag(0, 10, -10).

    The trajectory from A(0) = diag(1, 0, 1e-6 e) has the closed form
    flow(h) = diag(1, 1e-6 (e^(10h-1) - e^(-1)), 1e-6 e^(1-10h)): a slightly
    perturbed rank-2 matrix whose best rank-2 approximation stays excellent,
    while the rank-2 tangent-space flow drops the growing middle mode
    entirely (tangent_flow), which is what makes it an instructive toy.
    """

    def __init__(self):
        self.D = np.diag([0.0, 10.0, -10.0])
        self.source = np.diag([0.0, 1e-5 * math.exp(-1.0), 0.0])
        e2 = np.zeros((3, 1))
        e2[1, 0] = 1.0
        self._source_factored = FactoredMatrix(
            e2, np.array([[1e-5 * math.exp(-1.0)]]), e2
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (3, 3)

    def apply(self, Y: FactoredMatrix) -> FactoredMatrix:
        return fm.add(left_multiply(self.D, Y), self._source_factored)

    def apply_dense(self, A: np.ndarray) -> np.ndarray:
        return self.D @ A + self.source

    def initial_value(self, rng: RngStream | None = None) -> np.ndarray:
        return np.diag([1.0, 0.0, 1e-6 * math.e])

    def flow(self, h: float) -> np.ndarray:
        """Exact solution at time h from initial_value()."""
        mid = 1e-6 * (math.exp(10.0 * h - 1.0) - math.exp(-1.0))
        return np.diag([1.0, mid, 1e-6 * math.exp(1.0 - 10.0 * h)])

    def flow_map(self, A: np.ndarray, h: float) -> np.ndarray:
        """Exact flow applied to an arbitrary state: e^(hD) A + integrated source."""
        expd = np.diag([1.0, math.exp(10.0 * h), math.exp(-10.0 * h)])
        drive = np.diag([0.0, 1e-6 * math.exp(-1.0) * (math.exp(10.0 * h) - 1.0), 0.0])
        return expd @ A + drive

    def tangent_flow(self, h: float) -> np.ndarray:
        """Flow of the rank-2 tangent-projected ODE from the same start."""
        return np.diag([1.0, 0.0, 1e-6 * math.exp(1.0 - 10.0 * h)])

    def lipschitz_hint(self) -> float | None:
        return 10.0

    def cache_key(self) -> str:
        return "toy3x3"


class LyapunovProblem(RhsOperator):
    """Differential Lyapunov equation with a normalized separable source.

    F(A) = L A + A L + alpha * C / ||C||_F on an n-point uniform grid over
    [-pi, pi] (both endpoints included), L the unscaled second-difference
    stencil tridiag(1, -2, 1). C_ij = sum_{k=1..11} 10^(1-k) exp(-k(x_i^2 +
    y_j^2)) is kept as its exact rank-11 separable factorization.
    """

    def __init__(self, n: int = 128, alpha: float = 1.0):
        self.n = n
        self.alpha = float(alpha)
        self.L = _tridiag(n, 1.0, -2.0, 1.0)
        self.x = np.linspace(-np.pi, np.pi, n)
        k = np.arange(1, 12)
        E = np.exp(-np.outer(self.x**2, k))  # column k-1 is exp(-k x^2)
        self.C_factors = FactoredMatrix(E, np.diag(10.0 ** -(k - 1.0)), E)
        self.norm_C = fm.frobenius_norm(self.C_factors)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def apply(self, Y: FactoredMatrix) -> FactoredMatrix:
        out = fm.add(left_multiply(self.L, Y), right_multiply(Y, self.L))
        if self.alpha != 0.0:
            out = fm.add(out, fm.scale(self.C_factors, self.alpha / self.norm_C))
        return out

    def apply_dense(self, A: np.ndarray) -> np.ndarray:
        out = self.L @ A + A @ self.L
        if self.alpha != 0.0:
            out = out + (self.alpha / self.norm_C) * fm.to_dense(self.C_factors)
        return out

    def initial_value(self, rng: RngStream | None = None) -> FactoredMatrix:
        # A0_ij = sum_k b_k sin(k x_i) sin(k y_j), b_1 = 1, b_k = 5 e^{-(7+0.5(k-2))}
        k = np.arange(1, 21)
        b = 5.0 * np.exp(-(7.0 + 0.5 * (k - 2.0)))
        b[0] = 1.0
        Sines = np.sin(np.outer(self.x, k))
        return FactoredMatrix(Sines, np.diag(b), Sines)

    def lipschitz_hint(self) -> float | None:
        return 2.0 * float(np.linalg.norm(self.L, 2))

    def cache_key(self) -> str:
        return f"lyapunov:n={self.n}:alpha={self.alpha!r}"


class NlsProblem(RhsOperator):
    """Cubic Schrodinger discretization: F(A) = i[(BA + AB)/2 + alpha |A|^2 A].

    B = tridiag(1, 0, 1), the cubic term is elementwise. Complex field. The
    initial value is the sum of two Gaussian bumps (1-based index formula)
    with singular values 3..32 raised to 1e-9 so rank-30 methods that need
    full-rank starting data are well posed.
    """

    def __init__(self, n: int = 100, alpha: float = 0.3):
        self.n = n
        self.alpha = float(alpha)
        self.B = _tridiag(n, 1.0, 0.0, 1.0)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def is_complex(self) -> bool:
        return True

    def apply(self, Y: FactoredMatrix) -> FactoredMatrix:
        linear = fm.scale(fm.add(left_multiply(self.B, Y), right_multiply(Y, self.B)), 0.5)
        if self.alpha == 0.0:
            return fm.scale(linear, 1j)
        cubic = self._cube_elementwise(Y, conj_first=True)
        return fm.scale(fm.add(linear, fm.scale(cubic, self.alpha)), 1j)

    def apply_dense(self, A: np.ndarray) -> np.ndarray:
        out = 0.5 * (self.B @ A + A @ self.B)
        if self.alpha != 0.0:
            out = out + self.alpha * (np.abs(A) ** 2 * A)
        return 1j * out

    def initial_value(self, rng: RngStream | None = None) -> np.ndarray:
        idx = np.arange(1, self.n + 1, dtype=np.float64)
        g60 = np.exp(-((idx - 60.0) ** 2) / 100.0)
        g50 = np.exp(-((idx - 50.0) ** 2) / 100.0)
        g40 = np.exp(-((idx - 40.0) ** 2) / 100.0)
        A0 = np.outer(g60, g50) + np.outer(g50, g40)
        u, s, vh = np.linalg.svd(A0)
        s[2 : min(32, self.n)] = 1e-9
        return ((u * s) @ vh).astype(np.complex128)

    def cache_key(self) -> str:
        return f"nls:n={self.n}:alpha={self.alpha!r}"


class ImagSchrodingerProblem(RhsOperator):
    """Imaginary-time lattice Schrodinger flow: F(A) = (DA + AD)/2 - V A V.

    D = tridiag(-1, 2, -1), V = diag(1 - cos(2 pi j / n)) for
    j = -n/2 .. n/2 - 1. The initial value is random with prescribed
    singular values 10^-i, built from two QR-orthogonalized Gaussians, so
    `initial_value` requires a stream.
    """

    def __init__(self, n: int = 512):
        if n % 2 != 0:
            raise ValueError("grid size must be even")
        self.n = n
        self.D = _tridiag(n, -1.0, 2.0, -1.0)
        j = np.arange(-n // 2, n // 2, dtype=np.float64)
        self.v_cos = 1.0 - np.cos(2.0 * np.pi * j / n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def apply(self, Y: FactoredMatrix) -> FactoredMatrix:
        half_d = 0.5 * self.D
        linear = fm.add(left_multiply(half_d, Y), right_multiply(Y, half_d))
        v = self.v_cos[:, None]
        congruence = FactoredMatrix(v * Y.U, -Y.S, v * Y.V)
        return fm.add(linear, congruence)

    def apply_dense(self, A: np.ndarray) -> np.ndarray:
        return 0.5 * (self.D @ A + A @ self.D) - self.v_cos[:, None] * A * self.v_cos[None, :]

    def initial_value(self, rng: RngStream | None = None) -> FactoredMatrix:
        if rng is None:
            raise ValueError("this initial value is random; pass an RngStream")
        Q1, _ = np.linalg.qr(rng.gaussian_matrix(self.n, self.n))
        Q2, _ = np.linalg.qr(rng.gaussian_matrix(self.n, self.n))
        with np.errstate(under="ignore"):
            s = 10.0 ** -np.arange(1.0, self.n + 1.0)
        return FactoredMatrix(Q1, np.diag(s), Q2)

    def cache_key(self) -> str:
        return f"imag_schrodinger:n={self.n}"


class AllenCahnProblem(RhsOperator):
    """Allen-Cahn reaction-diffusion: F(A) = eps(LA + AL) + A - A^3.

    L is the unscaled periodic second-difference stencil on an n-point grid
    over [0, 2 pi] (endpoints included); the cube is elementwise.
    """

    def __init__(self, n: int = 256, epsilon: float = 0.01):
        self.n = n
        self.epsilon = float(epsilon)
        self.L = _tridiag(n, 1.0, -2.0, 1.0, periodic=True)
        self.x = np.linspace(0.0, 2.0 * np.pi, n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def apply(self, Y: FactoredMatrix) -> FactoredMatrix:
        eL = self.epsilon * self.L
        out = fm.add(left_multiply(eL, Y), right_multiply(Y, eL))
        out = fm.add(out, Y)
        return fm.add(out, fm.scale(self._cube_elementwise(Y), -1.0))

    def apply_dense(self, A: np.ndarray) -> np.ndarray:
        return self.epsilon * (self.L @ A + A @ self.L) + A - A**3

    def initial_value(self, rng: RngStream | None = None) -> np.ndarray:
        x = self.x
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            bump = np.exp(-np.tan(x) ** 2)
            sx = np.sin(x)
            num = (bump[:, None] + bump[None, :]) * sx[:, None] * sx[None, :]
            edge = np.exp(np.abs(1.0 / np.sin(-x / 2.0)))
            den = 1.0 + edge[:, None] + edge[None, :]
            A0 = num / den
        A0[~np.isfinite(A0)] = 0.0
        return A0

    def cache_key(self) -> str:
        return f"allen_cahn:n={self.n}:eps={self.epsilon!r}"


def tangential_projection_error(Y: FactoredMatrix, F_of_Y: FactoredMatrix) -> float:
    """|| F(Y) - P(Y) F(Y) ||_F for the rank-k tangent projector at Y.

    Y must carry orthonormal factors (e.g. a truncated_svd output). Uses the
    complement identity G - P(G) = (I - UU^H) G (I - VV^H), evaluated on the
    factors of G, so tangent inputs cancel before the norm is taken instead
    of inside it.
    """
    U, V = Y.U, Y.V
    G = F_of_Y
    Au = G.U - U @ (U.conj().T @ G.U)
    Av = G.V - V @ (V.conj().T @ G.V)
    return fm.frobenius_norm(FactoredMatrix(Au, G.S, Av))


_PROBLEMS = {
    "toy": DiagonalToyProblem,
    "lyapunov": LyapunovProblem,
    "nls": NlsProblem,
    "imag_schrodinger": ImagSchrodingerProblem,
    "allen_cahn": AllenCahnProblem,
}


def make_problem(name: str, **params) -> RhsOperator:
    """Build a problem by CLI name: toy, lyapunov, nls, imag_schrodinger, allen_cahn."""
    try:
        cls = _PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}, expected one of {sorted(_PROBLEMS)}")
    return cls(**params)
