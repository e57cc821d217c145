import math

import numpy as np
import pytest

from lowrank_rk import factored as fm
from lowrank_rk.factored import FactoredMatrix
from lowrank_rk.problems import (
    AllenCahnProblem,
    DiagonalToyProblem,
    ImagSchrodingerProblem,
    LyapunovProblem,
    NlsProblem,
    make_problem,
    tangential_projection_error,
)
from lowrank_rk.randgen import RngStream


def _random_factored(rng, m, n, r, complex_field=False):
    def block(rows, cols):
        X = rng.standard_normal((rows, cols))
        if complex_field:
            X = X + 1j * rng.standard_normal((rows, cols))
        return X

    return FactoredMatrix(block(m, r), block(r, r), block(n, r))


def _check_apply_consistency(prob, Y, tol=1e-10):
    dense = prob.apply_dense(fm.to_dense(Y))
    factored = fm.to_dense(prob.apply(Y))
    scale = max(1.0, float(np.linalg.norm(dense)))
    assert np.linalg.norm(factored - dense) <= tol * scale


def test_make_problem_names():
    assert isinstance(make_problem("toy"), DiagonalToyProblem)
    assert isinstance(make_problem("lyapunov", n=16), LyapunovProblem)
    assert isinstance(make_problem("nls", n=12, alpha=0.1), NlsProblem)
    assert isinstance(make_problem("imag_schrodinger", n=8), ImagSchrodingerProblem)
    assert isinstance(make_problem("allen_cahn", n=10, epsilon=0.5), AllenCahnProblem)
    with pytest.raises(ValueError):
        make_problem("heat")


def test_toy_apply_matches_dense():
    toy = DiagonalToyProblem()
    rng = np.random.default_rng(0)
    Y = _random_factored(rng, 3, 3, 2)
    _check_apply_consistency(toy, Y, tol=1e-13)


def test_toy_flow_satisfies_ode():
    # centered difference of the closed form against F evaluated on it
    toy = DiagonalToyProblem()
    eps = 1e-6
    for t in (0.0, 0.3, 0.7, 1.0):
        dA = (toy.flow(t + eps) - toy.flow(t - eps)) / (2.0 * eps)
        resid = dA - toy.apply_dense(toy.flow(t))
        assert np.linalg.norm(resid) <= 1e-4 * max(1.0, np.linalg.norm(dA))


def test_toy_flow_map_semigroup():
    toy = DiagonalToyProblem()
    assert np.allclose(toy.flow_map(toy.initial_value(), 0.37), toy.flow(0.37),
                       rtol=0, atol=1e-14)
    for t, s in ((0.1, 0.2), (0.5, 0.5), (0.0, 1.0)):
        assert np.allclose(toy.flow_map(toy.flow(t), s), toy.flow(t + s),
                           rtol=1e-12, atol=1e-18)


def test_toy_tangent_flow_drops_growing_mode():
    toy = DiagonalToyProblem()
    tang = toy.tangent_flow(1.0)
    full = toy.flow(1.0)
    assert tang[1, 1] == 0.0
    assert abs(full[1, 1] - 1e-6 * (math.exp(9.0) - math.exp(-1.0))) < 1e-18
    # the two agree on the other modes
    assert np.allclose(np.diag(tang)[[0, 2]], np.diag(full)[[0, 2]], rtol=1e-14)


def test_lyapunov_initial_entry_by_summation():
    prob = LyapunovProblem(n=64)
    A0 = fm.to_dense(prob.initial_value())
    x = np.linspace(-np.pi, np.pi, 64)
    for i, j in ((0, 0), (5, 17), (33, 60)):
        want = 0.0
        for k in range(1, 21):
            b = 1.0 if k == 1 else 5.0 * math.exp(-(7.0 + 0.5 * (k - 2.0)))
            want += b * math.sin(k * x[i]) * math.sin(k * x[j])
        assert abs(A0[i, j] - want) <= 1e-14 * max(1.0, abs(want))


def test_lyapunov_initial_rank():
    prob = LyapunovProblem(n=48)
    A0 = prob.initial_value()
    assert A0.rank == 20
    s = np.linalg.svd(fm.to_dense(A0), compute_uv=False)
    assert s[19] > 0 and s[20] <= 1e-12 * s[0]


def test_lyapunov_source_normalization():
    prob = LyapunovProblem(n=32, alpha=0.7)
    zero = fm.zero(32, 32)
    F0 = prob.apply(zero)
    assert abs(fm.frobenius_norm(F0) - 0.7) <= 1e-12
    # symmetric since C is
    F0d = fm.to_dense(F0)
    assert np.allclose(F0d, F0d.T, atol=1e-14)


def test_lyapunov_source_entry_by_summation():
    prob = LyapunovProblem(n=32, alpha=0.0)
    C = fm.to_dense(prob.C_factors)
    x = np.linspace(-np.pi, np.pi, 32)
    for i, j in ((0, 3), (10, 20)):
        want = sum(10.0 ** -(k - 1.0) * math.exp(-k * (x[i] ** 2 + x[j] ** 2))
                   for k in range(1, 12))
        assert abs(C[i, j] - want) <= 1e-13 * want


def test_lyapunov_apply_matches_dense():
    prob = LyapunovProblem(n=40, alpha=1.3)
    rng = np.random.default_rng(1)
    _check_apply_consistency(prob, _random_factored(rng, 40, 40, 6))


def test_lyapunov_stencil():
    prob = LyapunovProblem(n=8)
    L = prob.L
    assert np.allclose(np.diag(L), -2.0)
    assert np.allclose(np.diag(L, 1), 1.0)
    assert np.allclose(np.diag(L, -1), 1.0)
    assert L[0, -1] == 0.0 and L[-1, 0] == 0.0


def test_nls_apply_matches_dense():
    prob = NlsProblem(n=24, alpha=0.3)
    rng = np.random.default_rng(2)
    Y = _random_factored(rng, 24, 24, 2, complex_field=True)
    _check_apply_consistency(prob, Y, tol=1e-11)


def test_nls_linear_part_only():
    prob = NlsProblem(n=16, alpha=0.0)
    rng = np.random.default_rng(3)
    Y = _random_factored(rng, 16, 16, 3, complex_field=True)
    A = fm.to_dense(Y)
    want = 1j * 0.5 * (prob.B @ A + A @ prob.B)
    assert np.allclose(fm.to_dense(prob.apply(Y)), want, atol=1e-12)


def test_nls_initial_structure():
    prob = NlsProblem(n=100)
    A0 = prob.initial_value()
    assert np.iscomplexobj(A0)
    idx = np.arange(1, 101, dtype=float)
    g = lambda c: np.exp(-((idx - c) ** 2) / 100.0)
    bumps = np.outer(g(60), g(50)) + np.outer(g(50), g(40))
    assert np.linalg.norm(A0 - bumps) <= 1e-7
    s = np.linalg.svd(A0, compute_uv=False)
    assert np.allclose(s[2:32], 1e-9, rtol=1e-6)
    assert s[32] <= 1e-12


def test_imag_schrodinger_apply_matches_dense():
    prob = ImagSchrodingerProblem(n=32)
    rng = np.random.default_rng(4)
    _check_apply_consistency(prob, _random_factored(rng, 32, 32, 4))


def test_imag_schrodinger_initial():
    prob = ImagSchrodingerProblem(n=16)
    with pytest.raises(ValueError):
        prob.initial_value()
    A0 = prob.initial_value(RngStream(7))
    s = np.linalg.svd(fm.to_dense(A0), compute_uv=False)
    assert np.allclose(s[:5], 10.0 ** -np.arange(1.0, 6.0), rtol=1e-10)
    # reproducible draw
    B0 = prob.initial_value(RngStream(7))
    assert np.array_equal(fm.to_dense(A0), fm.to_dense(B0))


def test_imag_schrodinger_needs_even_grid():
    with pytest.raises(ValueError):
        ImagSchrodingerProblem(n=15)


def test_allen_cahn_apply_matches_dense():
    prob = AllenCahnProblem(n=30, epsilon=0.05)
    rng = np.random.default_rng(5)
    Y = _random_factored(rng, 30, 30, 2)
    _check_apply_consistency(prob, Y, tol=1e-10)


def test_allen_cahn_periodic_stencil():
    prob = AllenCahnProblem(n=12)
    assert prob.L[0, -1] == 1.0 and prob.L[-1, 0] == 1.0


def test_allen_cahn_initial_finite():
    prob = AllenCahnProblem(n=256)
    A0 = prob.initial_value()
    assert np.isfinite(A0).all()
    assert np.linalg.norm(A0) > 0


def test_cube_elementwise_matches_dense_cube():
    prob = AllenCahnProblem(n=40, epsilon=0.01)
    rng = np.random.default_rng(6)
    Y = _random_factored(rng, 40, 40, 3)
    A = fm.to_dense(Y)
    cube = prob._cube_elementwise(Y)
    assert cube.rank <= 27
    assert np.allclose(fm.to_dense(cube), A**3, atol=1e-10)


def test_conjugated_cube_matches_modulus_form():
    prob = NlsProblem(n=30, alpha=1.0)
    rng = np.random.default_rng(7)
    Y = _random_factored(rng, 30, 30, 2, complex_field=True)
    A = fm.to_dense(Y)
    cube = prob._cube_elementwise(Y, conj_first=True)
    assert np.allclose(fm.to_dense(cube), np.abs(A) ** 2 * A, atol=1e-10)


def _dense_tangent_residual(Yd, Gd, r):
    u, _, vh = np.linalg.svd(Yd, full_matrices=False)
    U, V = u[:, :r], vh[:r].conj().T
    proj = U @ (U.conj().T @ Gd) + (Gd @ V) @ V.conj().T - U @ (U.conj().T @ Gd @ V) @ V.conj().T
    return float(np.linalg.norm(Gd - proj))


def test_tangential_projection_error_against_dense():
    rng = np.random.default_rng(8)
    for complex_field in (False, True):
        Yraw = _random_factored(rng, 14, 11, 3, complex_field)
        Y = fm.truncated_svd(Yraw, 3)
        G = _random_factored(rng, 14, 11, 5, complex_field)
        got = tangential_projection_error(Y, G)
        want = _dense_tangent_residual(fm.to_dense(Y), fm.to_dense(G), 3)
        assert abs(got - want) <= 1e-10 * max(1.0, want)


def test_tangential_projection_error_zero_for_tangent_input():
    rng = np.random.default_rng(9)
    Y = fm.truncated_svd(_random_factored(rng, 12, 12, 4), 4)
    # U M V^H lies in the tangent space at Y
    M = rng.standard_normal((4, 4))
    G = FactoredMatrix(Y.U, M, Y.V)
    assert tangential_projection_error(Y, G) <= 1e-12


def test_cache_keys_distinct():
    keys = {
        DiagonalToyProblem().cache_key(),
        LyapunovProblem(n=16).cache_key(),
        LyapunovProblem(n=16, alpha=0.5).cache_key(),
        NlsProblem(n=16).cache_key(),
        ImagSchrodingerProblem(n=16).cache_key(),
        AllenCahnProblem(n=16).cache_key(),
    }
    assert len(keys) == 6
