import numpy as np

from lowrank_rk.factored import FactoredMatrix, add, from_dense
from lowrank_rk.problems import RhsOperator, left_multiply, right_multiply


class LinearProblem(RhsOperator):
    """F(A) = M A + A K on a fixed dense pair; the go-to small test problem."""

    def __init__(self, M: np.ndarray, K: np.ndarray, A0: np.ndarray):
        self.M = np.asarray(M, dtype=np.result_type(M, np.float64))
        self.K = np.asarray(K, dtype=self.M.dtype)
        self.A0 = np.asarray(A0, dtype=np.result_type(A0, self.M.dtype))

    @property
    def shape(self):
        return self.A0.shape

    @property
    def is_complex(self):
        return np.iscomplexobj(self.A0) or np.iscomplexobj(self.M)

    def apply(self, Y: FactoredMatrix) -> FactoredMatrix:
        return add(left_multiply(self.M, Y), right_multiply(Y, self.K))

    def apply_dense(self, A: np.ndarray) -> np.ndarray:
        return self.M @ A + A @ self.K

    def initial_value(self, rng=None):
        return from_dense(self.A0)

    def cache_key(self) -> str:
        import hashlib

        digest = hashlib.sha256(self.M.tobytes() + self.K.tobytes()).hexdigest()[:12]
        return f"linear{self.shape[0]}x{self.shape[1]}-{digest}"


def random_linear_problem(rng: np.random.Generator, m: int, n: int, complex_field=False):
    def mat(a, b):
        X = rng.standard_normal((a, b))
        if complex_field:
            X = X + 1j * rng.standard_normal((a, b))
        return X

    return LinearProblem(mat(m, m), mat(n, n), mat(m, n))
