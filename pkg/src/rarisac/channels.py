"""Channel realizations: BS-RIS Rician link, atomic (RAR) links, LO fields,
target geometry and the SNR / RSR / radar-noise calibration."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig

MU_AXIS = np.array([0.0, 1.0, 0.0])


class CalibrationError(ValueError):
    pass


class ReferenceStrengthWarning(UserWarning):
    pass


def steering_vector(n_elems, angle):
    m = np.arange(n_elems)
    return np.exp(1j * np.pi * m * np.sin(angle))


def steering_derivative(n_elems, angle):
    m = np.arange(n_elems)
    return 1j * np.pi * m * np.cos(angle) * np.exp(1j * np.pi * m * np.sin(angle))


def crandn(rng, *shape):
    """Circularly-symmetric standard complex Gaussian (unit variance)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def gen_bs_ris_channel(cfg: ScenarioConfig, rng, beta_t=None):
    N, Nt = cfg.n_ris, cfg.n_tx
    g = cfg.geometry
    if beta_t is None:
        beta_t = 1.0 / g.d_br
    kappa = cfg.rician_kappa
    los = np.outer(steering_vector(N, g.phi_R_t), steering_vector(Nt, g.phi_B_t).conj())
    G = crandn(rng, N, Nt)
    if math.isinf(kappa):
        return beta_t * los
    return beta_t * (math.sqrt(kappa / (kappa + 1.0)) * los + math.sqrt(1.0 / (kappa + 1.0)) * G)


def random_polarizations(rng, shape):
    """Unit vectors uniform on the circle orthogonal to a random incidence direction.

    Returns (polarization, incidence), each of shape ``shape + (3,)``.
    """
    u = rng.standard_normal(shape + (3,))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    e = rng.standard_normal(shape + (3,))
    e -= np.sum(e * u, axis=-1, keepdims=True) * u
    e /= np.linalg.norm(e, axis=-1, keepdims=True)
    return e, u


def dipole_vector(cfg: ScenarioConfig):
    return cfg.atomic.dipole_moment_z * MU_AXIS


def gen_atomic_channel(cfg: ScenarioConfig, rng, n_src, distance, polarization=None,
                       unit_gain=None):
    """M x n_src coupling matrix summed over L0 paths.

    Each path has a uniform phase and a polarization drawn on the circle
    orthogonal to its incidence direction. The attenuation is deterministic,
    sqrt(3/L0)/distance, which gives unit average power per entry (before the
    1/d law) for the isotropic polarization draw since E[(mu_hat . eps)^2] = 1/3.
    """
    M, L0 = cfg.n_cells, cfg.n_paths
    mu = dipole_vector(cfg)
    if polarization is None:
        eps, _ = random_polarizations(rng, (M, n_src, L0))
    else:
        eps = np.broadcast_to(np.asarray(polarization, dtype=float), (M, n_src, L0, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, (M, n_src, L0))
    if unit_gain is None:
        rho = math.sqrt(3.0 / L0) / distance
    else:
        rho = unit_gain
    coupling = (eps @ mu) / cfg.atomic.hbar
    return np.sum(coupling * rho * np.exp(1j * phase), axis=-1)


def gen_lo_field(cfg: ScenarioConfig, rng, P_b=1.0, rho_b=1.0):
    """LO field b_k (M,) and the diagonal of D_bk = diag(exp(-j arg b_k))."""
    M = cfg.n_cells
    mu = dipole_vector(cfg)
    eps, _ = random_polarizations(rng, (M,))
    phase = rng.uniform(0.0, 2.0 * np.pi, M)
    b = (cfg.atomic.s_b / cfg.atomic.hbar) * (eps @ mu) * rho_b * math.sqrt(P_b) * np.exp(1j * phase)
    return b, lo_alignment(b)


def lo_alignment(b):
    return np.exp(-1j * np.angle(b))


def target_geometry(cfg: ScenarioConfig):
    g = cfg.geometry
    num = g.d_br * math.sin(g.phi_B_t) - g.d_rt * math.cos(g.theta_R)
    den = g.d_br * math.cos(g.phi_B_t) + g.d_rt * math.sin(g.theta_R)
    if abs(den) < 1e-12:
        raise CalibrationError("degenerate geometry: target on the BS broadside normal")
    return math.atan(num / den), g.theta_R


def target_position(cfg: ScenarioConfig):
    """BS at the origin, RIS along phi_B_t, target d_rt from the RIS."""
    g = cfg.geometry
    ris = g.d_br * np.array([math.cos(g.phi_B_t), math.sin(g.phi_B_t)])
    return ris + g.d_rt * np.array([math.sin(g.theta_R), -math.cos(g.theta_R)])


@dataclass
class ChannelSet:
    H_BR: np.ndarray        # (N, Nt)
    H_RU: np.ndarray        # (K, M, N)
    H_BU: np.ndarray        # (K, M, Nt)
    lo_field: np.ndarray    # (K, M)
    lo_align: np.ndarray    # (K, M) diagonal of D_bk
    sigma_q: np.ndarray     # (K,)
    P_b: float = 1.0
    ref_ratio: float = float("inf")

    @property
    def K(self):
        return self.H_RU.shape[0]

    @property
    def M(self):
        return self.H_RU.shape[1]

    @property
    def N(self):
        return self.H_BR.shape[0]

    @property
    def Nt(self):
        return self.H_BR.shape[1]

    def D_b(self, k):
        return np.diag(self.lo_align[k])

    def aligned_ru(self):
        return self.lo_align[:, :, None] * self.H_RU

    def aligned_bu(self):
        return self.lo_align[:, :, None] * self.H_BU


def _check_phi(phi):
    phi = np.asarray(phi, dtype=complex)
    if np.max(np.abs(np.abs(phi) - 1.0), initial=0.0) > 1e-9:
        raise ValueError("RIS phase vector must be unit-modulus")
    return phi


def effective_comm_channel(ch: ChannelSet, phi, k, check=True):
    if check:
        phi = _check_phi(phi)
    return (ch.H_RU[k] * phi) @ ch.H_BR + ch.H_BU[k]


def effective_all(ch: ChannelSet, phi, check=True):
    """(K, M, Nt) stack of H_eff,k."""
    if check:
        phi = _check_phi(phi)
    return np.einsum("kmn,nt->kmt", ch.H_RU * phi, ch.H_BR) + ch.H_BU


def aligned_all(ch: ChannelSet, phi, check=True):
    """(K, M, Nt) stack of E_tilde_k = D_bk H_eff,k."""
    return ch.lo_align[:, :, None] * effective_all(ch, phi, check)


def reference_precoder(ch: ChannelSet, p_max, phi=None):
    """sqrt(P/K) times each user's principal right singular vector, at phi = 1 by default."""
    if phi is None:
        phi = np.ones(ch.N, dtype=complex)
    H = effective_all(ch, phi, check=False)
    K = ch.K
    W = np.empty((ch.Nt, K), dtype=complex)
    for k in range(K):
        _, _, vh = np.linalg.svd(H[k], full_matrices=False)
        W[:, k] = vh[0].conj()
    return W * math.sqrt(p_max / K)


def received_signal_power(ch: ChannelSet, W, phi=None):
    if phi is None:
        phi = np.ones(ch.N, dtype=complex)
    H = effective_all(ch, phi, check=False)
    return float(np.sum(np.abs(np.einsum("kmt,tj->kmj", H, W)) ** 2))


def calibrate_noise_and_lo(cfg: ScenarioConfig, ch: ChannelSet, W_ref=None, phi=None):
    """Shared sigma_q hitting snr_db and LO power P_b hitting rsr_db.

    ``ch.lo_field`` is expected to hold the unit-power (P_b = 1) draw.
    """
    if W_ref is None:
        W_ref = reference_precoder(ch, cfg.p_max, phi)
    sig = received_signal_power(ch, W_ref, phi)
    if not sig > 0:
        raise CalibrationError("zero effective channel; cannot calibrate SNR")
    K, M = ch.K, ch.M
    snr = 10.0 ** (cfg.snr_db / 10.0)
    sigma_q2 = sig / (K * M * snr)
    noise = K * M * sigma_q2
    b_unit = np.sum(np.abs(ch.lo_field) ** 2)
    if not b_unit > 0:
        raise CalibrationError("zero LO field")
    P_b = 10.0 ** (cfg.rsr_db / 10.0) * (sig + noise) / b_unit
    return np.full(K, math.sqrt(sigma_q2)), P_b


def measured_snr_db(ch: ChannelSet, W, phi=None):
    sig = received_signal_power(ch, W, phi)
    return 10.0 * math.log10(sig / (ch.K * ch.M * float(np.mean(ch.sigma_q ** 2))))


def measured_rsr_db(ch: ChannelSet, W, phi=None):
    sig = received_signal_power(ch, W, phi)
    noise = ch.M * float(np.sum(ch.sigma_q ** 2))
    return 10.0 * math.log10(np.sum(np.abs(ch.lo_field) ** 2) / (sig + noise))


def reference_strength_ratio(ch: ChannelSet, W, phi=None):
    """min_m |b_km| over the largest per-cell signal amplitude sqrt(E|E_k x|^2)."""
    if phi is None:
        phi = np.ones(ch.N, dtype=complex)
    H = effective_all(ch, phi, check=False)
    sig_amp = np.sqrt(np.sum(np.abs(np.einsum("kmt,tj->kmj", H, W)) ** 2, axis=-1))
    peak = np.max(sig_amp)
    if peak == 0:
        return float("inf")
    return float(np.min(np.abs(ch.lo_field)) / peak)


def user_bs_distance(cfg: ScenarioConfig):
    g = cfg.geometry
    if g.d_bu is not None:
        return g.d_bu
    return math.hypot(g.d_br, g.d_ru)


def generate_channels(cfg: ScenarioConfig, rng) -> ChannelSet:
    """Draw one realization and calibrate sigma_q and P_b. Draw order is fixed."""
    K, M, N, Nt = cfg.n_users, cfg.n_cells, cfg.n_ris, cfg.n_tx
    H_BR = gen_bs_ris_channel(cfg, rng)
    d_bu = user_bs_distance(cfg)
    H_RU = np.stack([gen_atomic_channel(cfg, rng, N, cfg.geometry.d_ru) for _ in range(K)])
    H_BU = np.stack([gen_atomic_channel(cfg, rng, Nt, d_bu) for _ in range(K)])
    lo = [gen_lo_field(cfg, rng) for _ in range(K)]
    b_unit = np.stack([b for b, _ in lo])
    align = np.stack([a for _, a in lo])
    ch = ChannelSet(H_BR, H_RU, H_BU, b_unit, align, np.ones(K))
    sigma_q, P_b = calibrate_noise_and_lo(cfg, ch)
    ch.sigma_q = sigma_q
    ch.lo_field = b_unit * math.sqrt(P_b)
    ch.P_b = P_b
    W_ref = reference_precoder(ch, cfg.p_max)
    ch.ref_ratio = reference_strength_ratio(ch, W_ref)
    if ch.ref_ratio < 10.0:
        warnings.warn(f"strong-reference ratio {ch.ref_ratio:.3g} < 10; linearized "
                      "detection model is loose", ReferenceStrengthWarning, stacklevel=2)
    return ch


# --------------------------------------------------------------------------
# sensing scene
# --------------------------------------------------------------------------

@dataclass
class SensingScene:
    theta_B: float
    theta_R: float
    alpha_t: complex
    sigma_r: float
    beta_d: complex
    beta_r: complex
    beta_t: complex
    snapshots: int
    h_dt: np.ndarray
    h_rt: np.ndarray
    dh_dt: np.ndarray   # beta_d * da_B/dtheta
    dh_rt: np.ndarray   # beta_r * da_R/dtheta

    @classmethod
    def build(cls, n_tx, n_ris, theta_B, theta_R, beta_d, beta_r, beta_t, alpha_t=1.0,
              sigma_r=1.0, snapshots=1024):
        return cls(theta_B, theta_R, complex(alpha_t), float(sigma_r), complex(beta_d),
                   complex(beta_r), complex(beta_t), int(snapshots),
                   beta_d * steering_vector(n_tx, theta_B),
                   beta_r * steering_vector(n_ris, theta_R),
                   beta_d * steering_derivative(n_tx, theta_B),
                   beta_r * steering_derivative(n_ris, theta_R))

    def with_angles(self, theta_B, theta_R):
        return SensingScene.build(len(self.h_dt), len(self.h_rt), theta_B, theta_R, self.beta_d,
                                  self.beta_r, self.beta_t, self.alpha_t, self.sigma_r,
                                  self.snapshots)

    def with_sigma(self, sigma_r):
        return SensingScene(**{**self.__dict__, "sigma_r": float(sigma_r)})


def build_scene(cfg: ScenarioConfig, sigma_r=1.0) -> SensingScene:
    theta_B, theta_R = target_geometry(cfg)
    d_bt = float(np.linalg.norm(target_position(cfg)))
    g = cfg.geometry
    return SensingScene.build(cfg.n_tx, cfg.n_ris, theta_B, theta_R, 1.0 / d_bt, 1.0 / g.d_rt,
                              1.0 / g.d_br, cfg.alpha_t, sigma_r, cfg.snapshots)
