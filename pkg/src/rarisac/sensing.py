"""Target response, Fisher information, CRB and the six sensing functionals.

The echo model is  Y = alpha * H_t(theta) X + noise  with
H_t = v_t v_t^T  (plain transpose) and
v_t = h_dt + H_BR^T diag(phi) h_rt.

With R_x = X X^H / L, every FIM entry is a trace form tr(A_i R_x); the
functionals F_1..F_6 collect them:

    F1 = L tr(H_B^H H_B R)      F2 = L tr(H_B^H H_R R)
    F3 = L a* tr(H_B^H H_t R)   F4 = L tr(H_R^H H_R R)
    F5 = L a* tr(H_R^H H_t R)   F6 = L tr(H_t^H H_t R)

where H_B = dH_t/dtheta_B, H_R = dH_t/dtheta_R.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet, SensingScene

log = logging.getLogger(__name__)

# (X, Y, uses alpha*) for F_i = L c tr(X^H Y R)
PAIRS = (("B", "B", False), ("B", "R", False), ("B", "t", True),
         ("R", "R", False), ("R", "t", True), ("t", "t", False))
REAL_IDX = (0, 3, 5)


class UnidentifiableError(ArithmeticError):
    """Schur complement of the FIM is singular."""


@dataclass
class TargetResponse:
    v_t: np.ndarray
    dv_dthetaB: np.ndarray
    dv_dthetaR: np.ndarray
    H_t: np.ndarray
    H_B: np.ndarray
    H_R: np.ndarray
    S: np.ndarray       # H_BR^T diag(h_rt): dv_t/dphi
    S_d: np.ndarray     # H_BR^T diag(dh_rt): dv_R/dphi

    def mat(self, key):
        return {"t": self.H_t, "B": self.H_B, "R": self.H_R}[key]


def sym_outer(a, b):
    """a b^T + b a^T."""
    return np.outer(a, b) + np.outer(b, a)


def build_target_response(scene: SensingScene, ch: ChannelSet, phi) -> TargetResponse:
    H_BRt = ch.H_BR.T
    S = H_BRt * scene.h_rt
    S_d = H_BRt * scene.dh_rt
    v = scene.h_dt + S @ phi
    vB = scene.dh_dt
    vR = S_d @ phi
    return TargetResponse(v, vB, vR, np.outer(v, v), sym_outer(vB, v), sym_outer(vR, v), S, S_d)


def functional_matrices(scene: SensingScene, resp: TargetResponse, L=None):
    """A_1..A_6 stacked as (6, Nt, Nt)."""
    L = scene.snapshots if L is None else L
    ac = np.conj(scene.alpha_t)
    out = []
    for x, y, use_a in PAIRS:
        A = L * (resp.mat(x).conj().T @ resp.mat(y))
        out.append(ac * A if use_a else A)
    return np.stack(out)


def functionals_from_A(A, R_x):
    return np.einsum("iab,ba->i", A, R_x)


@dataclass
class SensingFunctionals:
    F: np.ndarray
    A: np.ndarray


def _inner_product_route(scene, resp, R_x, L):
    """F_i via the p / h vectors of an explicit X with X X^H / L = R_x."""
    Nt = R_x.shape[0]
    lam, U = np.linalg.eigh(R_x)
    X = np.zeros((Nt, L), dtype=complex)
    r = min(Nt, L)
    # X = sqrt(L) U sqrt(Lambda), padded with zero snapshots
    X[:, :r] = np.sqrt(L) * (U * np.sqrt(np.clip(lam, 0, None)))[:, :r]
    pB = (resp.H_B @ X).ravel(order="F")
    pR = (resp.H_R @ X).ravel(order="F")
    h = (resp.H_t @ X).ravel(order="F")
    ac = np.conj(scene.alpha_t)
    return np.array([np.vdot(pB, pB), np.vdot(pB, pR), ac * np.vdot(pB, h),
                     np.vdot(pR, pR), ac * np.vdot(pR, h), np.vdot(h, h)])


def sensing_functionals(scene: SensingScene, resp: TargetResponse, R_x, L=None,
                        verify=True) -> SensingFunctionals:
    L = scene.snapshots if L is None else L
    A = functional_matrices(scene, resp, L)
    F = functionals_from_A(A, R_x)
    if verify:
        F_alt = _inner_product_route(scene, resp, R_x, L)
        scale = max(1.0, float(np.max(np.abs(F))))
        if np.max(np.abs(F - F_alt)) > 1e-6 * scale:
            raise ArithmeticError("sensing functional routes disagree")
    return SensingFunctionals(F, A)


def functionals_from_W(scene: SensingScene, resp: TargetResponse, W, L=None):
    """F_1..F_6 for R_x = W W^H without forming R_x."""
    L = scene.snapshots if L is None else L
    HW = {k: resp.mat(k) @ W for k in "tBR"}
    ac = np.conj(scene.alpha_t)
    F = np.empty(6, dtype=complex)
    for i, (x, y, use_a) in enumerate(PAIRS):
        F[i] = L * np.vdot(HW[x], HW[y]) * (ac if use_a else 1.0)
    return F


# --------------------------------------------------------------------------
# FIM / CRB
# --------------------------------------------------------------------------

@dataclass
class FimBlocks:
    J_tt: np.ndarray
    J_ta: np.ndarray
    J_aa: np.ndarray

    def full(self):
        return np.block([[self.J_tt, self.J_ta], [self.J_ta.T, self.J_aa]])


def fim_from_functionals(F, alpha_t, sigma_r) -> FimBlocks:
    F = np.asarray(F)
    c = 2.0 / sigma_r ** 2
    a2 = abs(alpha_t) ** 2
    J_tt = c * a2 * np.array([[F[0].real, F[1].real], [np.conj(F[1]).real, F[3].real]])
    asym = abs(J_tt[0, 1] - J_tt[1, 0])
    if asym > 0:
        log.debug("J_tt asymmetry %.3e symmetrised", asym)
    J_tt = 0.5 * (J_tt + J_tt.T)
    J_ta = c * np.array([[F[2].real, (1j * F[2]).real], [F[4].real, (1j * F[4]).real]])
    J_aa = c * F[5].real * np.eye(2)
    return FimBlocks(J_tt, J_ta, J_aa)


def fim(scene: SensingScene, resp: TargetResponse, R_x, L=None) -> FimBlocks:
    R_x = np.asarray(R_x)
    if R_x.size and np.linalg.eigvalsh(0.5 * (R_x + R_x.conj().T))[0] < -1e-9 * max(1.0, np.abs(R_x).max()):
        raise ValueError("R_x is not positive semidefinite")
    F = sensing_functionals(scene, resp, R_x, L, verify=False).F
    return fim_from_functionals(F, scene.alpha_t, scene.sigma_r)


def schur_complement(blocks: FimBlocks):
    a = blocks.J_aa[0, 0]
    if not a > 0:
        raise UnidentifiableError("target unidentifiable: zero reflected energy")
    return blocks.J_tt - blocks.J_ta @ blocks.J_ta.T / a


def crb_trace(blocks: FimBlocks) -> float:
    S = schur_complement(blocks)
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    tr = S[0, 0] + S[1, 1]
    if not (det > 1e-300 and S[0, 0] > 0 and S[1, 1] > 0) or det <= 1e-14 * tr * tr:
        raise UnidentifiableError("target unidentifiable: singular Schur complement")
    return float(tr / det)


def crb_from_functionals(F, scene: SensingScene) -> float:
    return crb_trace(fim_from_functionals(F, scene.alpha_t, scene.sigma_r))


def build_M_lmi(f, J_aux, alpha_t, sigma_r):
    """4x4 real symmetric LMI matrix M(f, J_aux)."""
    f = np.asarray(f, dtype=complex)
    if abs(f[5].imag) > 1e-6 * max(1.0, abs(f[5].real)):
        raise ValueError("f_6 must be real")
    blocks = fim_from_functionals(f, alpha_t, sigma_r)
    M = blocks.full()
    M[:2, :2] -= np.asarray(J_aux)
    return M


def calibrate_radar_noise(scene: SensingScene, ch: ChannelSet, p_max, crb_target):
    """sigma_r so that the isotropic design at phi = 1 has CRB trace = crb_target."""
    phi = np.ones(ch.N, dtype=complex)
    resp = build_target_response(scene, ch, phi)
    R = (p_max / ch.Nt) * np.eye(ch.Nt)
    F = functionals_from_A(functional_matrices(scene, resp), R)
    crb_unit = crb_trace(fim_from_functionals(F, scene.alpha_t, 1.0))
    return float(np.sqrt(crb_target / crb_unit))


# --------------------------------------------------------------------------
# RIS-phase gradients
# --------------------------------------------------------------------------

def _deriv_terms(resp: TargetResponse, key):
    """dH/dphi_n = sum over terms of a s_n^T + s_n a^T, returned as (a, S)."""
    if key == "t":
        return [(resp.v_t, resp.S)]
    if key == "B":
        return [(resp.dv_dthetaB, resp.S)]
    return [(resp.v_t, resp.S_d), (resp.dv_dthetaR, resp.S)]


def _hol(X, R, terms):
    """d/dphi of tr(X^H Y R) through Y, for all n at once."""
    out = 0.0
    RXh = R @ X.conj().T
    XcRt = X.conj() @ R.T
    for a, S in terms:
        out = out + S.T @ (RXh @ a + XcRt @ a)
    return out


def grad_F_phi_full(scene: SensingScene, resp: TargetResponse, R_x, L=None):
    """Wirtinger derivatives of F_1..F_6 in phi.

    Returns (hol, anti), each (6, N): hol[i] = dF_i/dphi, anti[i] = dF_i/dphi*.
    For real F_i, F_i(phi + D) ~ F_i + 2 Re{anti[i]^H D}.
    """
    L = scene.snapshots if L is None else L
    ac = np.conj(scene.alpha_t)
    N = resp.S.shape[1]
    hol = np.zeros((6, N), dtype=complex)
    anti = np.zeros((6, N), dtype=complex)
    for i, (x, y, use_a) in enumerate(PAIRS):
        X, Y = resp.mat(x), resp.mat(y)
        c = ac if use_a else 1.0
        hol[i] = L * c * _hol(X, R_x, _deriv_terms(resp, y))
        anti[i] = L * c * np.conj(_hol(Y, R_x, _deriv_terms(resp, x)))
    return hol, anti


def grad_F_phi(scene: SensingScene, ch: ChannelSet, phi, R_x, L=None):
    """The six vectors d_i = dF_i/dphi* (antiholomorphic parts)."""
    resp = build_target_response(scene, ch, phi)
    return grad_F_phi_full(scene, resp, R_x, L)[1]


def curvature_bounds(scene: SensingScene, resp: TargetResponse, R_norm, L=None):
    """Bounds (B0, B1, B2) on |F_i|, |dF_i/dt|, |d2F_i/dt2| along any unit
    direction, valid on the whole polydisc |phi_n| <= 1.

    Each F_i is a sum of four-slot multilinear terms in {v_t, v_B, v_R}.
    Slots are affine in phi, so a product rule with per-slot sup norms M and
    per-unit-step derivative norms D bounds the first two derivatives.
    """
    L = scene.snapshots if L is None else L
    sig = np.linalg.norm(resp.S, 2)
    sig_d = np.linalg.norm(resp.S_d, 2)
    N = resp.S.shape[1]
    col = np.linalg.norm(resp.S, axis=0).sum()
    col_d = np.linalg.norm(resp.S_d, axis=0).sum()
    Mv = {"v": np.linalg.norm(scene.h_dt) + min(col, np.sqrt(N) * sig),
          "b": np.linalg.norm(resp.dv_dthetaB),
          "r": min(col_d, np.sqrt(N) * sig_d)}
    Dv = {"v": sig, "b": 0.0, "r": sig_d}
    # slot pairs of each H: H_t = v v^T, H_B = b v^T + v b^T, H_R = r v^T + v r^T
    slots = {"t": [("v", "v")], "B": [("b", "v"), ("v", "b")], "R": [("r", "v"), ("v", "r")]}
    amp = abs(scene.alpha_t)
    B = np.zeros((3, 6))
    for i, (x, y, use_a) in enumerate(PAIRS):
        c = L * R_norm * (amp if use_a else 1.0)
        for sx in slots[x]:
            for sy in slots[y]:
                s = sx + sy
                m = [Mv[k] for k in s]
                d = [Dv[k] for k in s]
                B[0, i] += c * np.prod(m)
                B[1, i] += c * sum(d[a] * np.prod([m[j] for j in range(4) if j != a])
                                   for a in range(4))
                B[2, i] += c * 2.0 * sum(d[a] * d[b] * np.prod([m[j] for j in range(4)
                                                                if j not in (a, b)])
                                         for a in range(4) for b in range(a + 1, 4))
    return B
