import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import crandn, random_phi, random_W
from rarisac.channels import ChannelSet, SensingScene
from rarisac.sensing import (
    PAIRS,
    REAL_IDX,
    UnidentifiableError,
    build_M_lmi,
    build_target_response,
    calibrate_radar_noise,
    crb_from_functionals,
    crb_trace,
    curvature_bounds,
    fim,
    fim_from_functionals,
    functional_matrices,
    functionals_from_A,
    functionals_from_W,
    grad_F_phi,
    grad_F_phi_full,
    schur_complement,
    sensing_functionals,
)

seeds = st.integers(0, 2**32 - 1)


def tiny(seed=0, n_tx=3, n_ris=6, alpha=0.8 - 0.3j, beta_r=0.4, L=16):
    rng = np.random.default_rng(seed)
    scene = SensingScene.build(n_tx, n_ris, 0.6, -0.4, 0.05, beta_r, 0.02, alpha, 0.3, L)
    ch = ChannelSet(crandn(rng, n_ris, n_tx), np.zeros((1, 1, n_ris), complex), np.zeros((1, 1, n_tx), complex),
                    np.ones((1, 1), complex), np.ones((1, 1), complex), np.ones(1))
    return rng, scene, ch


def random_R(rng, n, rank=None):
    A = crandn(rng, n, rank or n)
    return A @ A.conj().T / n


def test_transpose_convention():
    rng, scene, ch = tiny()
    phi = random_phi(rng, ch.N)
    resp = build_target_response(scene, ch, phi)
    v = scene.h_dt + ch.H_BR.T @ (phi * scene.h_rt)
    np.testing.assert_allclose(resp.H_t, np.outer(v, v), atol=1e-15)
    np.testing.assert_allclose(resp.H_t, resp.H_t.T, atol=0)


def test_bs_angle_derivative_independent_of_phase():
    rng, scene, ch = tiny()
    a = build_target_response(scene, ch, random_phi(rng, ch.N))
    b = build_target_response(scene, ch, random_phi(rng, ch.N))
    np.testing.assert_array_equal(a.dv_dthetaB, b.dv_dthetaB)


@pytest.mark.parametrize("which", ["B", "R"])
def test_angle_derivatives_finite_difference(which):
    rng, scene, ch = tiny(1)
    phi = random_phi(rng, ch.N)
    h = 1e-6
    dB, dR = (h, 0) if which == "B" else (0, h)
    up = build_target_response(scene.with_angles(scene.theta_B + dB, scene.theta_R + dR), ch, phi).H_t
    dn = build_target_response(scene.with_angles(scene.theta_B - dB, scene.theta_R - dR), ch, phi).H_t
    fd = (up - dn) / (2 * h)
    an = build_target_response(scene, ch, phi).mat(which)
    assert np.max(np.abs(fd - an)) <= 1e-7 * np.max(np.abs(an))


def _mean_jacobian(scene, ch, phi, X, h=1e-6):
    """Columns d vec(alpha H_t X) / d(theta_B, theta_R, Re alpha, Im alpha)."""
    def mu(tB, tR, a):
        s = scene.with_angles(tB, tR)
        return (a * build_target_response(s, ch, phi).H_t @ X).ravel()
    tB, tR, a = scene.theta_B, scene.theta_R, scene.alpha_t
    cols = [(mu(tB + h, tR, a) - mu(tB - h, tR, a)) / (2 * h),
            (mu(tB, tR + h, a) - mu(tB, tR - h, a)) / (2 * h),
            mu(tB, tR, 1.0), mu(tB, tR, 1j)]
    return np.stack(cols, axis=1)


def test_fim_matches_jacobian_oracle():
    rng, scene, ch = tiny(2)
    phi = random_phi(rng, ch.N)
    L = scene.snapshots
    X = crandn(rng, ch.Nt, L)
    R = X @ X.conj().T / L
    Jm = _mean_jacobian(scene, ch, phi, X)
    oracle = 2.0 / scene.sigma_r ** 2 * np.real(Jm.conj().T @ Jm)
    got = fim(scene, build_target_response(scene, ch, phi), R).full()
    np.testing.assert_allclose(got, oracle, rtol=1e-6, atol=1e-9 * np.abs(oracle).max())


def test_fim_noise_scaling_and_zero_power():
    rng, scene, ch = tiny(3)
    resp = build_target_response(scene, ch, random_phi(rng, ch.N))
    R = random_R(rng, ch.Nt)
    J1 = fim(scene, resp, R).full()
    J2 = fim(scene.with_sigma(2 * scene.sigma_r), resp, R).full()
    np.testing.assert_allclose(J2, J1 / 4, rtol=1e-12)
    assert np.all(fim(scene, resp, np.zeros((ch.Nt, ch.Nt))).full() == 0)
    with pytest.raises(UnidentifiableError):
        crb_trace(fim(scene, resp, np.zeros((ch.Nt, ch.Nt))))
    with pytest.raises(ValueError):
        fim(scene, resp, -np.eye(ch.Nt))


def test_schur_crb_matches_direct_inverse():
    rng, scene, ch = tiny(4)
    resp = build_target_response(scene, ch, random_phi(rng, ch.N))
    blocks = fim(scene, resp, random_R(rng, ch.Nt))
    direct = np.trace(np.linalg.inv(blocks.full())[:2, :2])
    assert crb_trace(blocks) == pytest.approx(direct, rel=1e-9)


def test_crb_examples():
    # diagonal Schur complement diag(2, 4) -> 1/2 + 1/4; J_ta = 0, J_aa = 1 -> F6 = sigma^2 / 2
    s = 0.5
    F = np.array([2.0, 0.0, 0.0, 4.0, 0.0, 1.0]) * s ** 2 / 2
    scene = SensingScene.build(2, 2, 0.1, 0.1, 1, 1, 1, 1.0, s, 4)
    assert crb_from_functionals(F, scene) == pytest.approx(0.75)
    # a coupling J_ta removes information: Schur = diag(2, 4) - [[1, 0], [0, 0]]
    F2 = F.astype(complex)
    F2[2] = s ** 2 / 2
    assert crb_from_functionals(F2, scene) == pytest.approx(1.0 + 0.25)


def test_cross_terms_vanish_without_reflection():
    rng, scene, ch = tiny(5, alpha=0.0)
    resp = build_target_response(scene, ch, random_phi(rng, ch.N))
    F = functionals_from_A(functional_matrices(scene, resp), random_R(rng, ch.Nt))
    assert F[2] == 0 and F[4] == 0


def test_isotropic_reflection_energy():
    rng, scene, ch = tiny(6)
    resp = build_target_response(scene, ch, random_phi(rng, ch.N))
    P = 2.0
    F = functionals_from_A(functional_matrices(scene, resp), P / ch.Nt * np.eye(ch.Nt))
    v = resp.v_t
    assert F[5].real == pytest.approx(scene.snapshots * P / ch.Nt * np.linalg.norm(v) ** 4, rel=1e-12)
    assert abs(F[5].imag) <= 1e-12 * F[5].real


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_functionals_match_kronecker_forms(seed):
    rng, scene, ch = tiny(seed % 1000)
    resp = build_target_response(scene, ch, random_phi(rng, ch.N))
    R = random_R(rng, ch.Nt, 2)
    L = scene.snapshots
    F = sensing_functionals(scene, resp, R, verify=True).F
    for i, (x, y, use_a) in enumerate(PAIRS):
        X, Y = resp.mat(x), resp.mat(y)
        kron = L * np.vdot(X.ravel(order="F"), np.kron(R.T, np.eye(ch.Nt)) @ Y.ravel(order="F"))
        if use_a:
            kron *= np.conj(scene.alpha_t)
        assert abs(F[i] - kron) <= 1e-10 * max(1.0, abs(kron))
    for i in REAL_IDX:
        assert abs(F[i].imag) <= 1e-10 * abs(F[i])


def test_functionals_from_W(small_inst):
    rng = np.random.default_rng(7)
    ch, scene = small_inst.ch, small_inst.scene
    resp = build_target_response(scene, ch, random_phi(rng, ch.N))
    W = random_W(rng, ch.Nt, ch.K)
    np.testing.assert_allclose(functionals_from_W(scene, resp, W),
                               functionals_from_A(functional_matrices(scene, resp), W @ W.conj().T),
                               rtol=1e-10)


def test_lmi_matrix():
    rng, scene, ch = tiny(8)
    resp = build_target_response(scene, ch, random_phi(rng, ch.N))
    F = functionals_from_A(functional_matrices(scene, resp), random_R(rng, ch.Nt))
    S = schur_complement(fim_from_functionals(F, scene.alpha_t, scene.sigma_r))
    M0 = build_M_lmi(F, np.zeros((2, 2)), scene.alpha_t, scene.sigma_r)
    np.testing.assert_allclose(M0, fim_from_functionals(F, scene.alpha_t, scene.sigma_r).full())
    np.testing.assert_allclose(M0, M0.T, atol=0)
    ev = np.linalg.eigvalsh(build_M_lmi(F, S, scene.alpha_t, scene.sigma_r))
    assert abs(ev[0]) <= 1e-9 * ev[-1]
    assert np.linalg.eigvalsh(build_M_lmi(F, S - 1e-3 * np.trace(S) * np.eye(2),
                                          scene.alpha_t, scene.sigma_r))[0] > 0
    bad = F.copy()
    bad[5] += 1j * abs(F[5])
    with pytest.raises(ValueError):
        build_M_lmi(bad, S, scene.alpha_t, scene.sigma_r)


def test_radar_noise_calibration(small_inst):
    ch, scene = small_inst.ch, small_inst.scene
    sigma = calibrate_radar_noise(scene, ch, 1.0, 0.01)
    s = scene.with_sigma(sigma)
    resp = build_target_response(s, ch, np.ones(ch.N))
    assert crb_trace(fim(s, resp, np.eye(ch.Nt) / ch.Nt)) == pytest.approx(0.01, rel=1e-9)


def _line(scene, ch, phi, D, R, t):
    return functionals_from_A(functional_matrices(scene, build_target_response(scene, ch, phi + t * D)), R)


def _poly_derivative(f, h):
    # exact for quartics in t, and every functional is one
    return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h)


def test_phase_gradient_directional():
    rng, scene, ch = tiny(9)
    phi = random_phi(rng, ch.N)
    R = random_R(rng, ch.Nt)
    hol, anti = grad_F_phi_full(scene, build_target_response(scene, ch, phi), R)
    for _ in range(5):
        D = crandn(rng, ch.N)
        fd = (_line(scene, ch, phi, D, R, 1e-6) - _line(scene, ch, phi, D, R, -1e-6)) / 2e-6
        pred = hol @ D + anti @ D.conj()
        assert np.max(np.abs(fd - pred)) <= 1e-5 * np.max(np.abs(pred))
        for i in REAL_IDX:
            assert (2 * np.vdot(anti[i], D).real) == pytest.approx(pred[i].real, rel=1e-10)


def test_phase_gradient_dense():
    rng, scene, ch = tiny(10)
    phi = random_phi(rng, ch.N)
    R = random_R(rng, ch.Nt)
    anti = grad_F_phi(scene, ch, phi, R)
    hol, _ = grad_F_phi_full(scene, build_target_response(scene, ch, phi), R)
    scale = np.max(np.abs(anti))
    for n in range(ch.N):
        e = np.zeros(ch.N, complex)
        e[n] = 1.0
        dx = _poly_derivative(lambda t: _line(scene, ch, phi, e, R, t), 1e-2)
        dy = _poly_derivative(lambda t: _line(scene, ch, phi, 1j * e, R, t), 1e-2)
        np.testing.assert_allclose(0.5 * (dx + 1j * dy), anti[:, n], atol=1e-9 * scale)
        np.testing.assert_allclose(0.5 * (dx - 1j * dy), hol[:, n], atol=1e-9 * scale)


def test_no_reflection_path_gives_zero_gradient():
    rng, scene, ch = tiny(11, beta_r=0.0)
    hol, anti = grad_F_phi_full(scene, build_target_response(scene, ch, random_phi(rng, ch.N)),
                                random_R(rng, ch.Nt))
    assert np.all(hol == 0) and np.all(anti == 0)


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_curvature_bounds_hold(seed):
    rng, scene, ch = tiny(seed % 997)
    R = random_R(rng, ch.Nt)
    Rn = np.linalg.norm(R, 2)
    phi = random_phi(rng, ch.N) * rng.uniform(0, 1, ch.N)
    B = curvature_bounds(scene, build_target_response(scene, ch, phi), Rn)
    D = crandn(rng, ch.N)
    D /= np.linalg.norm(D)
    f = lambda t: _line(scene, ch, phi, D, R, t)  # noqa: E731
    h = 1e-3
    d1 = _poly_derivative(f, h)
    d2 = (-f(2 * h) + 16 * f(h) - 30 * f(0) + 16 * f(-h) - f(-2 * h)) / (12 * h * h)
    slack = 1 + 1e-6
    assert np.all(np.abs(f(0)) <= B[0] * slack)
    assert np.all(np.abs(d1) <= B[1] * slack)
    assert np.all(np.abs(d2) <= B[2] * slack + 1e-6 * B[2].max())


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_fim_psd_and_crb_monotone(seed):
    rng, scene, ch = tiny(seed % 991)
    resp = build_target_response(scene, ch, random_phi(rng, ch.N))
    R1 = random_R(rng, ch.Nt)
    R2 = R1 + random_R(rng, ch.Nt, 1)
    J1 = fim(scene, resp, R1)
    assert np.linalg.eigvalsh(J1.full())[0] >= -1e-10 * np.abs(J1.full()).max()
    assert crb_trace(fim(scene, resp, R2)) <= crb_trace(J1) * (1 + 1e-10)
    assert crb_trace(fim(scene, resp, 3 * R1)) == pytest.approx(crb_trace(J1) / 3, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_functionals_affine_in_covariance(seed):
    rng, scene, ch = tiny(seed % 983)
    A = functional_matrices(scene, build_target_response(scene, ch, random_phi(rng, ch.N)))
    R1, R2 = random_R(rng, ch.Nt), random_R(rng, ch.Nt)
    a = rng.uniform(0, 3)
    lhs = functionals_from_A(A, a * R1 + R2)
    rhs = a * functionals_from_A(A, R1) + functionals_from_A(A, R2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))
