import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_mcbf import solver as cs
from robust_mcbf.lmi import (LmiBlock, RobustQuadratic, build_phi, build_psi, complex_to_real,
                             embed, from_hermitian_coords, hermitian_coords,
                             multiplier_margin, s_procedure)
from robust_mcbf.model import ErrorEllipsoid, InvalidInputError

from oracles import random_robust_quadratic, sampled_min

TIGHT = cs.SolverOptions(polish_feastol=1e-10, polish_gaptol=1e-12)


def _min_eig(M):
    return float(np.linalg.eigvalsh(M)[0])


def _ball(eps, n, count, rng, boundary=False):
    g = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = 1.0 if boundary else rng.random((count, 1)) ** (1.0 / (2 * n))
    return eps * g * r


def test_trivial_constant_constraint():
    blk = s_procedure(RobustQuadratic(np.zeros((2, 2)), np.zeros(2), 1.0, np.eye(2)))
    lam = 0.3
    expected = np.diag([lam, lam, 1 - lam]).astype(complex)
    assert np.allclose(blk.evaluate({"lambda": lam}), expected)
    assert _min_eig(blk.evaluate({"lambda": 0.0})) >= 0


def test_ball_constraint_certificate():
    eps = 0.5
    rq = RobustQuadratic(-np.eye(2), np.zeros(2), 1.0, np.eye(2) / eps**2)
    blk = s_procedure(rq)
    assert _min_eig(blk.evaluate({"lambda": 0.25})) >= -1e-14
    e = _ball(eps, 2, 10_000, np.random.default_rng(0))
    assert rq.value(e).min() >= 0.75 - 1e-12


def test_infeasible_ball_constraint():
    rq = RobustQuadratic(-np.eye(2), np.zeros(2), 0.5, np.eye(2))
    blk = s_procedure(rq)
    for lam in np.linspace(0, 5, 2001):
        assert _min_eig(blk.evaluate({"lambda": lam})) < 0
    margin, _, status = multiplier_margin(blk, TIGHT)
    assert status == "optimal" and margin < 0
    e = _ball(1.0, 2, 1000, np.random.default_rng(1), boundary=True)
    assert rq.value(e).max() < 0


def test_rejects_invalid_quadratic():
    with pytest.raises(InvalidInputError):
        RobustQuadratic(np.array([[0, 1], [0, 0]]), np.zeros(2), 0.0, np.eye(2))
    with pytest.raises(InvalidInputError):
        RobustQuadratic(np.zeros((2, 2)), np.zeros(2), 0.0, -np.eye(2))


@pytest.mark.parametrize("seed", range(40))
def test_s_procedure_agrees_with_sampling(seed):
    rng = np.random.default_rng(seed)
    rq = random_robust_quadratic(rng)
    margin, _, status = multiplier_margin(s_procedure(rq), TIGHT)
    assert status == "optimal"
    worst = sampled_min(rq, 20_000, rng)
    if abs(worst) > 1e-6 and abs(margin) > 1e-6:
        assert (margin >= 0) == (worst >= 0)


def test_phi_matches_grid_oracle():
    # (e1 + e)^H W (e1 + e) >= sigma2 for all |e| <= eps, with W = I
    eps, sigma2, lam = 0.1, 0.5, 0.3
    h = np.array([1.0, 0.0, 0.0], dtype=complex)
    blk = build_phi(h, 1.0, ErrorEllipsoid.sphere(eps, 3), "W", [], [], sigma2, "lam")
    values = {"W": np.eye(3), "lam": lam}
    F = blk.evaluate(values)
    worst = (1 - eps) ** 2
    e = _ball(eps, 3, 50_000, np.random.default_rng(2))
    assert np.min(np.linalg.norm(h + e, axis=1) ** 2) >= worst - 1e-12
    assert (_min_eig(F) >= 0) == (worst >= sigma2)
    # lambda chosen by the solver certifies the same instance
    fixed = LmiBlock(F - lam * blk.linear_parts["lam"], ("lam",),
                     blk.linear_parts["lam"][None], "lam")
    margin, _, _ = multiplier_margin(fixed, TIGHT)
    assert margin >= 0
    # raising the noise above the worst-case gain makes it infeasible
    hard = build_phi(h, 1.0, ErrorEllipsoid.sphere(eps, 3), "W", [], [], 0.82, "lam")
    Fh = hard.evaluate({"W": np.eye(3), "lam": 0.0})
    fixed = LmiBlock(Fh, ("lam",), hard.linear_parts["lam"][None], "lam")
    assert multiplier_margin(fixed, TIGHT)[0] < 0


def test_phi_is_linear_in_inverse_gamma():
    h = np.array([0.3 + 0.1j, -0.7j])
    ell = ErrorEllipsoid.sphere(0.2, 2)

    def own_coeffs(inv_gamma):
        blk = build_phi(h, 1.0 / inv_gamma, ell, "W", ["V"], ["t"], 1.0, "lam")
        return np.stack([blk.linear_parts[("W", r)] for r in range(4)])

    d = 1e-3
    slope = (own_coeffs(0.5 + d) - own_coeffs(0.5)) / d
    slope2 = (own_coeffs(0.25 + d) - own_coeffs(0.25)) / d
    np.testing.assert_allclose(slope, slope2, atol=1e-9)


def test_phi_with_zero_channel_is_well_formed():
    blk = build_phi(np.zeros(2), 2.0, ErrorEllipsoid.sphere(0.1, 2), "W", [], ["t"], 1.0, "lam")
    assert blk.size == 3
    coeff = blk.linear_parts[("W", 0)]
    assert np.allclose(coeff[2], 0) and np.allclose(coeff[:, 2], 0)


def test_phi_missing_multiplier_rejected():
    with pytest.raises(InvalidInputError):
        build_phi(np.ones(2), 1.0, ErrorEllipsoid.sphere(0.1, 2), "W", [], [], 1.0, None)


def test_psi_zero_point_is_boundary_feasible():
    blk = build_psi(np.ones(2), ErrorEllipsoid.sphere(0.1, 2), ["W"], "t", "lam")
    F = blk.evaluate({"W": np.zeros((2, 2)), "t": 0.0, "lam": 0.0})
    assert np.allclose(F, 0) and _min_eig(F) >= 0


def _psi_margin(t, scale=1.0):
    eps = 0.1
    blk = build_psi(np.array([1.0, 0.0]), ErrorEllipsoid.sphere(eps, 2), ["W"], "t", "lam")
    F0 = blk.evaluate({"W": scale * np.eye(2), "t": t, "lam": 0.0})
    fixed = LmiBlock(F0, ("lam",), blk.linear_parts["lam"][None], "lam")
    return multiplier_margin(fixed, TIGHT)


def test_psi_closed_form_worst_case_leakage():
    # max over |e| <= 0.1 of |e1 + e|^2 = 1.21
    margin, lam, _ = _psi_margin(1.21)
    assert margin >= -1e-7
    assert _psi_margin(1.20)[0] < 0
    lams = np.linspace(0, 20, 4001)
    blk = build_psi(np.array([1.0, 0.0]), ErrorEllipsoid.sphere(0.1, 2), ["W"], "t", "lam")
    ok = [_min_eig(blk.evaluate({"W": np.eye(2), "t": 1.21, "lam": x})) >= -1e-12 for x in lams]
    assert any(ok)
    assert not any(_min_eig(blk.evaluate({"W": np.eye(2), "t": 1.20, "lam": x})) >= 0
                   for x in lams)


def test_psi_homogeneity():
    assert _psi_margin(2.42, scale=2.0)[0] >= -1e-7
    assert _psi_margin(2.40, scale=2.0)[0] < 0


def test_psi_same_cell_rejected():
    with pytest.raises(InvalidInputError):
        build_psi(np.ones(2), ErrorEllipsoid.sphere(0.1, 2), ["W"], "t", "lam", same_cell=True)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_blocks_are_affine(seed):
    rng = np.random.default_rng(seed)
    n = 2
    h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    blk = build_phi(h, 1.7, ErrorEllipsoid.sphere(0.3, n), "W", ["V"], ["t1", "t2"], 0.4, "lam")
    base = {vid: rng.standard_normal() for vid in blk.var_ids}
    F = blk.evaluate(base)
    for vid, coeff in blk.linear_parts.items():
        moved = dict(base)
        moved[vid] += 1.0
        np.testing.assert_allclose(blk.evaluate(moved) - F, coeff, atol=1e-12)


def test_hermitian_coords_round_trip():
    rng = np.random.default_rng(3)
    G = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    W = G + G.conj().T
    np.testing.assert_allclose(from_hermitian_coords(hermitian_coords(W), 4), W, atol=1e-14)


def test_embedding_examples():
    assert np.array_equal(embed(np.eye(3)), np.eye(6))
    M = np.array([[0, 1j], [-1j, 0]])
    np.testing.assert_allclose(np.linalg.eigvalsh(embed(M)), [-1, -1, 1, 1], atol=1e-14)
    real = complex_to_real(s_procedure(RobustQuadratic(np.eye(2), np.ones(2), 1.0, np.eye(2))))
    assert real.scale == 2.0 and real.size == 6


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 5))
def test_embedding_doubles_spectrum(seed, n):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    P = G @ G.conj().T
    H = G + G.conj().T
    assert np.linalg.eigvalsh(embed(P))[0] >= -1e-10
    lam = np.linalg.eigvalsh(H)
    np.testing.assert_allclose(np.linalg.eigvalsh(embed(H)), np.sort(np.repeat(lam, 2)),
                               atol=1e-10)
    assert np.trace(embed(H)) == pytest.approx(2 * np.trace(H).real)
