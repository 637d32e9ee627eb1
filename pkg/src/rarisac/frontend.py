"""Rydberg-receiver measurement chain and the communication metrics."""

from __future__ import annotations

import math

import numpy as np

from .channels import ChannelSet, aligned_all


def splitting_to_rabi(delta_f, lambda_c, lambda_p):
    """Autler-Townes splitting (Hz) to Rabi frequency (rad/s)."""
    if min(delta_f, lambda_c, lambda_p) <= 0:
        raise ValueError("splitting and wavelengths must be positive")
    return 2.0 * math.pi * delta_f * lambda_p / lambda_c


def rabi_to_splitting(omega, lambda_c, lambda_p):
    if min(omega, lambda_c, lambda_p) <= 0:
        raise ValueError("Rabi frequency and wavelengths must be positive")
    return omega * lambda_c / (2.0 * math.pi * lambda_p)


def measure_magnitude(E_k, x, b_k, noise):
    """Per-cell field magnitude |E_k x + b_k + n|."""
    return np.abs(E_k @ x + b_k + noise)


def photocurrent(E_tilde_k, x, noise_eta):
    """Linearized real-part readout Re{E_tilde x} + eta."""
    return np.real(E_tilde_k @ x) + noise_eta


def _sigma_q(ch, k=None):
    s = ch.sigma_q if k is None else ch.sigma_q[k]
    if np.any(np.asarray(s) <= 0):
        raise ValueError("sigma_q must be positive")
    return s


def gram_powers(ch: ChannelSet, phi, W, check=True):
    """P[k, j] = ||g_kj||^2 with G_k = D_bk H_eff,k W."""
    E = aligned_all(ch, phi, check)
    G = np.einsum("kmt,tj->kmj", E, W)
    return np.sum(np.abs(G) ** 2, axis=1), G


def sinr_all(ch: ChannelSet, phi, W, check=True):
    P, _ = gram_powers(ch, phi, W, check)
    sig = np.diag(P).copy()
    interf = P.sum(axis=1) - sig
    noise = ch.M * _sigma_q(ch) ** 2
    return sig / (interf + noise)


def sinr(ch: ChannelSet, phi, W, k, check=True):
    return float(sinr_all(ch, phi, W, check)[k])


def utility_com(ch: ChannelSet, phi, W, weights=None, check=True):
    """Sum utility in nats; ``weights`` scale the per-user log terms."""
    s = sinr_all(ch, phi, W, check)
    if weights is None:
        return float(np.sum(np.log1p(s)))
    return float(np.sum(np.asarray(weights) * np.log1p(s)))


def utility_com_bits(ch: ChannelSet, phi, W, weights=None, check=True):
    return utility_com(ch, phi, W, weights, check) / math.log(2.0)
