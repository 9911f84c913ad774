import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_mcbf.model import (BeamformerSet, ChannelSet, ErrorEllipsoid, InvalidInputError,
                               SystemConfig, compute_sinr, perturb, sample_errors,
                               sampled_worst_sinr, sinr_all)

from conftest import random_instance


def _beams(rng, nc, K, nt):
    return BeamformerSet(rng.standard_normal((nc, K, nt)) + 1j * rng.standard_normal((nc, K, nt)))


def _straight_line_sinr(h, w, sigma2, i, k):
    # independent loop-based oracle
    def ip(a, b):
        return sum(a[n].conjugate() * b[n] for n in range(len(a)))
    nc, K, _ = w.shape
    signal = abs(ip(h[i, i, k], w[i, k])) ** 2
    interf = 0.0
    for j in range(nc):
        for l in range(K):
            if (j, l) != (i, k):
                interf += abs(ip(h[j, i, k], w[j, l])) ** 2
    return signal / (interf + sigma2)


def test_single_link_sinr():
    cfg = SystemConfig.uniform(1, 1, 3, 1.0, 1.0)
    h = np.array([[1, 0, 0]], dtype=complex)
    beams = BeamformerSet(np.array([[[2, 0, 0]]], dtype=complex))
    assert compute_sinr(h, beams, cfg, (0, 0)) == pytest.approx(4.0)


def test_zero_beams_give_zero_sinr(rng):
    channels, cfg = random_instance(3)
    beams = BeamformerSet(np.zeros((2, 2, 3)))
    assert all(compute_sinr(channels.nominal, beams, cfg, (i, k)) == 0.0
               for i in range(2) for k in range(2))


def test_sinr_matches_straight_line_oracle(rng):
    channels, cfg = random_instance(7, nc=2, K=2, nt=3, sigma2=0.3)
    beams = _beams(rng, 2, 2, 3)
    vec = sinr_all(channels.nominal, beams, cfg)
    for i in range(2):
        for k in range(2):
            ref = _straight_line_sinr(channels.nominal, beams.vectors, 0.3, i, k)
            assert compute_sinr(channels.nominal, beams, cfg, (i, k)) == pytest.approx(ref, rel=1e-12)
            assert vec[i, k] == pytest.approx(ref, rel=1e-12)


def test_dimension_mismatch_rejected():
    cfg = SystemConfig.uniform(1, 1, 3, 1.0, 1.0)
    beams = BeamformerSet(np.ones((1, 1, 3)))
    with pytest.raises(InvalidInputError):
        compute_sinr(np.ones((1, 4)), beams, cfg, (0, 0))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(1e-3, 1e3))
def test_noise_scale_covariance(seed, c):
    channels, cfg = random_instance(seed, sigma2=0.7)
    rng = np.random.default_rng(seed)
    beams = _beams(rng, 2, 2, 3)
    scaled_cfg = SystemConfig.uniform(2, 2, 3, 1.0, 0.7 * c)
    scaled = BeamformerSet(beams.vectors * np.sqrt(c))
    a = sinr_all(channels.nominal, beams, cfg)
    b = sinr_all(channels.nominal, scaled, scaled_cfg)
    np.testing.assert_allclose(a, b, rtol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), boost=st.floats(1.01, 10.0))
def test_more_interference_lowers_sinr(seed, boost):
    channels, cfg = random_instance(seed)
    rng = np.random.default_rng(seed)
    w = _beams(rng, 2, 2, 3).vectors.copy()
    before = compute_sinr(channels.nominal, BeamformerSet(w), cfg, (0, 0))
    w[1, 0] *= np.sqrt(boost)      # an intercell interferer of user (0, 0)
    after = compute_sinr(channels.nominal, BeamformerSet(w), cfg, (0, 0))
    assert after < before


def test_perturb_zero_is_identity():
    channels, _ = random_instance(0)
    out = perturb(channels, np.zeros_like(channels.nominal))
    assert np.array_equal(out, channels.nominal)


def test_perturb_accepts_boundary_and_rejects_outside():
    channels, _ = random_instance(0, eps=0.1)
    e = np.zeros_like(channels.nominal)
    e[1, 0, 1, 2] = 0.1
    out = perturb(channels, e)
    assert out[1, 0, 1, 2] == channels.nominal[1, 0, 1, 2] + 0.1
    e[1, 0, 1, 2] = 0.1001
    with pytest.raises(InvalidInputError, match=r"j=1, i=0, k=1"):
        perturb(channels, e)


def test_error_ellipsoid_validation_and_round_trip():
    ell = ErrorEllipsoid.sphere(0.1, 3)
    assert ell.spherical_radius == 0.1
    assert ErrorEllipsoid(np.eye(3) / 0.25).spherical_radius == pytest.approx(0.5, abs=0, rel=1e-15)
    with pytest.raises(InvalidInputError):
        ErrorEllipsoid(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(InvalidInputError):
        ErrorEllipsoid(np.diag([1.0, -1.0]))


def test_system_config_invariants():
    with pytest.raises(InvalidInputError):
        SystemConfig(1, 1, 2, [1.0], [0.0], [1.0])
    with pytest.raises(InvalidInputError):
        SystemConfig(2, 1, 2, [1.0, 1.0], [1.0], [1.0])
    with pytest.raises(InvalidInputError):
        SystemConfig(0, 1, 2, [1.0], [1.0], [1.0])
    cfg = SystemConfig(2, 1, 2, [1.0, 1.0], [1.0, 2.0], [1.0, 1.0], [0.5, 0.25])
    assert cfg.interference_caps[0, 1, 0] == 0.5 and cfg.interference_caps[1, 0, 0] == 0.25


def test_samples_lie_in_ellipsoid_and_include_zero():
    rng = np.random.default_rng(0)
    C = np.array([[4.0, 1j], [-1j, 2.0]])
    h = np.ones((1, 1, 1, 2), dtype=complex)
    channels = ChannelSet(h, ErrorEllipsoid(C))
    e = sample_errors(channels, 2000, rng)
    assert np.all(e[0] == 0)
    q = np.einsum("sa,ab,sb->s", e[:, 0, 0, 0].conj(), C, e[:, 0, 0, 0]).real
    assert q.max() <= 1 + 1e-12
    assert q.max() > 0.95       # reaches the boundary region


def test_sampled_worst_with_zero_radius_equals_nominal(rng):
    channels, cfg = random_instance(5, eps=0.0)
    beams = _beams(rng, 2, 2, 3)
    nominal = compute_sinr(channels.nominal, beams, cfg, (1, 0))
    assert sampled_worst_sinr(channels, beams, cfg, (1, 0), 50, 9) == nominal


def test_single_sample_is_the_zero_perturbation(rng):
    channels, cfg = random_instance(5)
    beams = _beams(rng, 2, 2, 3)
    assert sampled_worst_sinr(channels, beams, cfg, (0, 1), 1, 3) == \
        compute_sinr(channels.nominal, beams, cfg, (0, 1))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 60))
def test_sampled_worst_never_exceeds_nominal(seed, n):
    channels, cfg = random_instance(seed)
    beams = _beams(np.random.default_rng(seed + 1), 2, 2, 3)
    for user in ((0, 0), (1, 1)):
        assert sampled_worst_sinr(channels, beams, cfg, user, n, seed) <= \
            compute_sinr(channels.nominal, beams, cfg, user) + 1e-12


def test_sampled_worst_is_deterministic(rng):
    channels, cfg = random_instance(2)
    beams = _beams(rng, 2, 2, 3)
    a = sampled_worst_sinr(channels, beams, cfg, (0, 0), 100, 11)
    b = sampled_worst_sinr(channels, beams, cfg, (0, 0), 100, 11)
    assert a == b


def test_sampled_worst_close_to_grid_search():
    rng = np.random.default_rng(21)
    eps = 0.1
    h = (rng.standard_normal(2) + 1j * rng.standard_normal(2)) / np.sqrt(2)
    w = (rng.standard_normal(2) + 1j * rng.standard_normal(2))
    channels = ChannelSet(h.reshape(1, 1, 1, 2), ErrorEllipsoid.sphere(eps, 2))
    cfg = SystemConfig.uniform(1, 1, 2, 1.0, 1.0)
    beams = BeamformerSet(w.reshape(1, 1, 2))
    sampled = sampled_worst_sinr(channels, beams, cfg, (0, 0), 100_000, 0)

    # dense grid over the 4-real-dimensional ball
    g = np.linspace(-eps, eps, 41)
    a, b, c, d = np.meshgrid(g, g, g, g, indexing="ij")
    pts = np.stack([a + 1j * b, c + 1j * d], axis=-1).reshape(-1, 2)
    pts = pts[np.linalg.norm(pts, axis=1) <= eps]
    sig = np.abs((h[None] + pts).conj() @ w) ** 2
    grid = sig.min() / 1.0
    assert abs(10 * np.log10(sampled) - 10 * np.log10(grid)) <= 0.05
