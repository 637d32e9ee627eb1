"""Comparison schemes: communication-only, BF-only and penalised gradient ascent."""

from __future__ import annotations

import logging
import math
import time

import numpy as np

from .channels import ChannelSet, SensingScene, aligned_all
from .config import ScenarioConfig
from .frontend import gram_powers, utility_com
from .numerics import project_unit_modulus
from .sensing import (UnidentifiableError, build_target_response, crb_from_functionals,
                      fim_from_functionals, functional_matrices, functionals_from_A,
                      grad_F_phi_full)
from .solver import BcdSolver, SolverReport, TraceRow

log = logging.getLogger(__name__)

SCHEMES = ("proposed", "comm_only", "bf_only", "gd")


def comm_only(ch: ChannelSet, scene: SensingScene, cfg: ScenarioConfig, rng) -> SolverReport:
    """The proposed loop with the SDP, penalty and dual blocks switched off."""
    return BcdSolver(ch, scene, cfg, sensing=False, scheme="comm_only").run(rng)


# --------------------------------------------------------------------------
# BF-only
# --------------------------------------------------------------------------

def channel_gain_quadratic(ch: ChannelSet):
    """sum_k ||H_RU,k diag(phi) H_BR + H_BU,k||_F^2 = phi^H D phi + 2 Re{g^H phi} + c."""
    G_ru = np.einsum("kmn,kmp->np", ch.H_RU.conj(), ch.H_RU)
    G_br = ch.H_BR @ ch.H_BR.conj().T
    D = G_ru * G_br.T
    D = 0.5 * (D + D.conj().T)
    # c_n = sum_k b_n^T H_BU,k^H a_{k,n}; the linear term is 2 Re{sum_n phi_n c_n}
    cvec = np.einsum("nt,kmt,kmn->n", ch.H_BR, ch.H_BU.conj(), ch.H_RU)
    const = float(np.sum(np.abs(ch.H_BU) ** 2))
    return D, np.conj(cvec), const


def channel_gain(ch: ChannelSet, phi):
    H = np.einsum("kmn,n,nt->kmt", ch.H_RU, phi, ch.H_BR) + ch.H_BU
    return float(np.sum(np.abs(H) ** 2))


def maximize_channel_gain(ch: ChannelSet, phi0, max_iter=200, tol=1e-8):
    """Minorise-maximise on the unit-modulus torus.

    The gain is a convex quadratic in phi, so its linearisation at phi_t is a
    global minoriser; maximising that over the torus is a phase alignment:
    phi <- exp(j arg(D phi + g)). The gain never decreases.
    """
    D, g, _ = channel_gain_quadratic(ch)
    phi = project_unit_modulus(phi0)
    it = 0
    for it in range(1, max_iter + 1):
        v = D @ phi + g
        if np.any(v == 0):
            v = np.where(v == 0, phi, v)
        new = np.exp(1j * np.angle(v))
        change = float(np.max(np.abs(np.angle(new * phi.conj()))))
        phi = new
        if change <= tol:
            break
    return phi, it


def bf_only(ch: ChannelSet, scene: SensingScene, cfg: ScenarioConfig, rng) -> SolverReport:
    """Phases fixed by channel-gain maximisation, then the W / SDP / dual loop with phi frozen."""
    solver = BcdSolver(ch, scene, cfg, sensing=True, optimize_phi=False, scheme="bf_only")
    phi0 = solver.initial_phi(rng)
    o = cfg.baselines
    phi, _ = maximize_channel_gain(ch, phi0, o.bf_iters, o.bf_tol)
    state = solver.init_state(rng, phi=phi)
    return solver.run(state=state)


# --------------------------------------------------------------------------
# penalised gradient ascent
# --------------------------------------------------------------------------

def _fim_basis(scene):
    """FIM is real-linear in (Re F, Im F); basis[l] is the FIM of the l-th unit direction."""
    basis = np.zeros((12, 4, 4))
    for l in range(12):
        F = np.zeros(6, dtype=complex)
        if l < 6:
            F[l] = 1.0
        else:
            F[l - 6] = 1j
        basis[l] = fim_from_functionals(F, scene.alpha_t, scene.sigma_r).full()
    return 0.5 * (basis + np.swapaxes(basis, 1, 2))


class GdObjective:
    """U_com - mu max(0, tr(CRB) - eps)^2 and its Wirtinger gradients."""

    def __init__(self, ch: ChannelSet, scene: SensingScene, cfg: ScenarioConfig):
        self.ch = ch
        self.scene = scene
        self.eps = cfg.crb_eps
        self.mu = cfg.baselines.gd_mu_scale / cfg.crb_eps
        self.p_max = cfg.p_max
        self.weights = None if cfg.solver.user_weights is None else np.asarray(cfg.solver.user_weights)
        self._basis = _fim_basis(scene)

    # -- pieces
    def crb(self, W, phi):
        resp = build_target_response(self.scene, self.ch, phi)
        A = functional_matrices(self.scene, resp)
        F = functionals_from_A(A, W @ W.conj().T)
        try:
            return crb_from_functionals(F, self.scene), F, A, resp
        except UnidentifiableError:
            return math.inf, F, A, resp

    def value(self, W, phi):
        U = utility_com(self.ch, phi, W, self.weights, check=False)
        c = self.crb(W, phi)[0]
        return U - self.mu * max(0.0, c - self.eps) ** 2

    def crb_gradient_F(self, F):
        """gamma_i = dCRB/dF_i (Wirtinger), from d tr(A^-1) = -tr(A^-1 dA A^-1)."""
        x = np.concatenate([F.real, F.imag])
        J = np.tensordot(x, self._basis, axes=1)
        Jinv = np.linalg.inv(J)
        Z = Jinv[:, :2] @ Jinv[:2, :]
        dx = -np.einsum("ab,lba->l", Z, self._basis)
        return 0.5 * (dx[:6] - 1j * dx[6:])

    def utility_grad_W(self, W, phi):
        """dU/dW* (Wirtinger); the ascent direction is twice this."""
        E = aligned_all(self.ch, phi, check=False)
        P, G = gram_powers(self.ch, phi, W, check=False)
        coef = self._sinr_coef(P)
        # dP_kj/dW*_{:,j} = E_k^H E_k w_j
        EW = np.einsum("kmt,kmj->ktj", E.conj(), G)       # E_k^H g_kj
        return np.einsum("kj,ktj->tj", coef, EW)

    def utility_grad_phi(self, W, phi):
        P, G = gram_powers(self.ch, phi, W, check=False)
        coef = self._sinr_coef(P)
        Hr = self.ch.aligned_ru()
        Q = self.ch.H_BR @ W                               # q_j
        HG = np.einsum("kmn,kmj->knj", Hr.conj(), G)       # H^_k^H g_kj
        return np.einsum("kj,nj,knj->n", coef, Q.conj(), HG)

    def _sinr_coef(self, P):
        K = self.ch.K
        noise = self.ch.M * self.ch.sigma_q ** 2
        T = P.sum(axis=1) + noise
        B = T - np.diag(P)
        w = np.ones(K) if self.weights is None else self.weights
        coef = (w / T)[:, None] * np.ones((K, K))
        off = ~np.eye(K, dtype=bool)
        coef[off] -= np.broadcast_to((w / B)[:, None], (K, K))[off]
        return coef

    def grad_W(self, W, phi):
        g = self.utility_grad_W(W, phi)
        c, F, A, _ = self.crb(W, phi)
        viol = c - self.eps
        if viol > 0 and math.isfinite(c):
            gam = self.crb_gradient_F(F)
            dc = np.einsum("i,iab,bj->aj", gam, A, W) + np.einsum("i,iba,bj->aj", gam.conj(), A.conj(), W)
            g = g - 2.0 * self.mu * viol * dc
        return g

    def grad_phi(self, W, phi):
        g = self.utility_grad_phi(W, phi)
        c, F, _, resp = self.crb(W, phi)
        viol = c - self.eps
        if viol > 0 and math.isfinite(c):
            gam = self.crb_gradient_F(F)
            hol, anti = grad_F_phi_full(self.scene, resp, W @ W.conj().T)
            dc = gam @ anti + gam.conj() @ hol.conj()
            g = g - 2.0 * self.mu * viol * dc
        return g


def _project_power(W, p_max):
    n2 = float(np.sum(np.abs(W) ** 2))
    if n2 > p_max:
        return W * math.sqrt(p_max / n2)
    return W


def gd_baseline(ch: ChannelSet, scene: SensingScene, cfg: ScenarioConfig, rng) -> SolverReport:
    """Alternating projected (W) and Riemannian (phi) gradient ascent with Armijo steps."""
    t0 = time.perf_counter()
    obj = GdObjective(ch, scene, cfg)
    o = cfg.baselines
    init = BcdSolver(ch, scene, cfg, sensing=False)
    phi = project_unit_modulus(init.initial_phi(rng))
    W = init.initial_W(phi)
    report = SolverReport("gd", sigma_r=scene.sigma_r)
    val = obj.value(W, phi)

    def row(it):
        U = utility_com(ch, phi, W, obj.weights, check=False) / math.log(2.0)
        return TraceRow(it, val, U, obj.crb(W, phi)[0], 0.0, 0, 0.0, 1e3 * (time.perf_counter() - t0))

    report.rows.append(row(0))
    step_w = step_p = 0.5
    warm = o.gd_step_start == "warm"
    stalled = 0
    for it in range(1, o.gd_iters + 1):
        improved = False
        # W: projected ascent
        G = 2.0 * obj.grad_W(W, phi)
        s = 2.0 * step_w if warm else 1.0
        for _ in range(40):
            Wn = _project_power(W + s * G, obj.p_max)
            vn = obj.value(Wn, phi)
            if vn >= val + o.armijo_sigma * float(np.real(np.vdot(G, Wn - W))) and vn > val:
                W, val, step_w, improved = Wn, vn, s, True
                break
            s *= o.armijo_beta
        # phi: Riemannian ascent on the torus
        G = 2.0 * obj.grad_phi(W, phi)
        Gr = G - np.real(G * phi.conj()) * phi
        gn2 = float(np.real(np.vdot(Gr, Gr)))
        s = 2.0 * step_p if warm else 1.0
        for _ in range(40):
            pn = project_unit_modulus(phi + s * Gr)
            vn = obj.value(W, pn)
            if vn >= val + o.armijo_sigma * s * gn2 and vn > val:
                phi, val, step_p, improved = pn, vn, s, True
                break
            s *= o.armijo_beta
        report.rows.append(row(it))
        stalled = 0 if improved else stalled + 1
        if stalled >= 2:
            report.flags.append(f"no_improvement@{it}")
            break
    report.W, report.phi = W, phi
    report.iterations = len(report.rows) - 1
    report.U_com_bits = utility_com(ch, phi, W, obj.weights, check=False) / math.log(2.0)
    report.crb_trace = obj.crb(W, phi)[0]
    report.feasible = bool(report.crb_trace <= cfg.crb_eps * (1.0 + 1e-3))
    report.converged = bool(report.flags)
    return report


def run_scheme(name, ch, scene, cfg, rng) -> SolverReport:
    if name == "proposed":
        return BcdSolver(ch, scene, cfg).run(rng)
    if name == "comm_only":
        return comm_only(ch, scene, cfg, rng)
    if name == "bf_only":
        return bf_only(ch, scene, cfg, rng)
    if name == "gd":
        return gd_baseline(ch, scene, cfg, rng)
    raise ValueError(f"unknown scheme {name!r}; expected one of {', '.join(SCHEMES)}")
