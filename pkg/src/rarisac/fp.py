"""Quadratic-transform fractional programming for the sum utility.

For fixed auxiliaries (r, c) the reformulated objective

    F = sum_k w_k [ln(1+r_k) - r_k]
        + sum_k [ 2 sqrt(w_k (1+r_k)) Re{c_k^H g_kk} - ||c_k||^2 B_k ],
    B_k = sum_j ||g_kj||^2 + M sigma_k^2,

is a concave quadratic in vec(W) and in phi separately. ``w_k`` are
optional per-user weights (1 by default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet, aligned_all
from .frontend import gram_powers


def _weights(ch, weights):
    return np.ones(ch.K) if weights is None else np.asarray(weights, dtype=float)


@dataclass
class FpState:
    r: np.ndarray
    c: np.ndarray   # (K, M)


def update_r(ch: ChannelSet, phi, W):
    P, _ = gram_powers(ch, phi, W, check=False)
    sig = np.diag(P).copy()
    return sig / (P.sum(axis=1) - sig + ch.M * ch.sigma_q ** 2)


def update_c(ch: ChannelSet, phi, W, r, weights=None):
    P, G = gram_powers(ch, phi, W, check=False)
    B = P.sum(axis=1) + ch.M * ch.sigma_q ** 2
    if np.any(B <= 0):
        raise ZeroDivisionError("B_k = 0; sigma_q must be positive")
    w = _weights(ch, weights)
    gkk = G[np.arange(ch.K), :, np.arange(ch.K)]   # (K, M)
    return (np.sqrt(w * (1.0 + r)) / B)[:, None] * gkk


def update_fp(ch, phi, W, weights=None):
    r = update_r(ch, phi, W)
    return FpState(r, update_c(ch, phi, W, r, weights))


def fp_objective(ch: ChannelSet, phi, W, r, c, weights=None):
    P, G = gram_powers(ch, phi, W, check=False)
    w = _weights(ch, weights)
    K = ch.K
    gkk = G[np.arange(K), :, np.arange(K)]
    B = P.sum(axis=1) + ch.M * ch.sigma_q ** 2
    cn = np.sum(np.abs(c) ** 2, axis=1)
    lin = np.real(np.sum(c.conj() * gkk, axis=1))
    return float(np.sum(w * (np.log1p(r) - r)) + np.sum(2.0 * np.sqrt(w * (1.0 + r)) * lin - cn * B))


@dataclass
class WQuadratic:
    """F(w) = const + Re{a^H w} - w^H gram w, with w = vec(W) (columns stacked)."""

    a: np.ndarray
    gram: np.ndarray
    const: float

    def value(self, w):
        return float(self.const + np.real(np.vdot(self.a, w)) - np.real(np.vdot(w, self.gram @ w)))


def assemble_w_quadratic(ch: ChannelSet, phi, r, c, weights=None) -> WQuadratic:
    E = aligned_all(ch, phi, check=False)          # (K, M, Nt)
    w = _weights(ch, weights)
    K, Nt = ch.K, ch.Nt
    coef = 2.0 * np.sqrt(w * (1.0 + r))
    a = (coef[:, None] * np.einsum("kmt,km->kt", E.conj(), c)).ravel()
    cn = np.sum(np.abs(c) ** 2, axis=1)
    T = np.einsum("k,kmt,kms->ts", cn, E.conj(), E)
    gram = np.kron(np.eye(K), T)
    const = float(np.sum(w * (np.log1p(r) - r)) - np.sum(cn * ch.M * ch.sigma_q ** 2))
    return WQuadratic(a, gram, const)


def ru_gram(ch: ChannelSet):
    """H_RU,k^H H_RU,k for all k (independent of D_bk), cached on the channel set."""
    G = getattr(ch, "_ru_gram", None)
    if G is None:
        G = np.einsum("kmn,kmp->knp", ch.H_RU.conj(), ch.H_RU)
        ch._ru_gram = G
    return G


@dataclass
class PhiQuadratic:
    """F(phi) = const + Re{g^H phi} - phi^H D phi."""

    g: np.ndarray
    D: np.ndarray
    const: float

    def value(self, phi):
        return float(self.const + np.real(np.vdot(self.g, phi)) - np.real(np.vdot(phi, self.D @ phi)))


def assemble_phi_quadratic(ch: ChannelSet, W, r, c, weights=None) -> PhiQuadratic:
    K = ch.K
    w = _weights(ch, weights)
    Hr = ch.aligned_ru()                           # (K, M, N)
    Hb = ch.aligned_bu()                           # (K, M, Nt)
    Q = ch.H_BR @ W                                # (N, K): q_j = H_BR w_j
    dvec = np.einsum("kmt,tj->kjm", Hb, W)         # d_kj (K, K, M)
    cn = np.sum(np.abs(c) ** 2, axis=1)
    coef = np.sqrt(w * (1.0 + r))
    Hc = np.einsum("kmn,km->kn", Hr.conj(), c)     # H^_k^H c_k  (K, N)
    Hd = np.einsum("kmn,kjm->kjn", Hr.conj(), dvec)   # H^_k^H d_kj
    term1 = np.sum(coef[:, None] * Q.T.conj() * Hc, axis=0)      # sum_k F_kk^H c_k
    term2 = np.sum(cn[:, None, None] * Q.T.conj()[None] * Hd, axis=(0, 1))
    g = 2.0 * (term1 - term2)
    Gsum = np.einsum("k,knp->np", cn, ru_gram(ch))
    D = Gsum * (Q.conj() @ Q.T)
    D = 0.5 * (D + D.conj().T)
    dkk = dvec[np.arange(K), np.arange(K)]
    const = float(np.sum(w * (np.log1p(r) - r))
                  + np.sum(2.0 * coef * np.real(np.sum(c.conj() * dkk, axis=1)))
                  - np.sum(cn * (np.sum(np.abs(dvec) ** 2, axis=(1, 2)) + ch.M * ch.sigma_q ** 2)))
    return PhiQuadratic(g, D, const)
