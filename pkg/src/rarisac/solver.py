"""Block coordinate descent on the augmented Lagrangian of the CRB-constrained
utility maximisation.

Per outer iteration the blocks are visited in a fixed order:

    (r, c) closed form -> (J_aux, f) SDP -> W (MM + ball QP)
    -> phi (MM + ADMM) -> dual zeta -> rho1 <- decay * rho1

The consensus pair (F_i, f_i) is handled in normalised units F~ = T(F),
a fixed real-linear map built from the initial design (``PenaltyBasis``):
either per-functional scales or a whitening of the Gram matrix of the
derivative signals. The LMI is written in the same units.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelSet, SensingScene
from .config import ScenarioConfig
from .fp import (FpState, PhiQuadratic, WQuadratic, assemble_phi_quadratic,
                 assemble_w_quadratic, fp_objective, update_fp)
from .frontend import utility_com
from .numerics import (BallQpProblem, CholFactor, SdpError, SmallSdpProblem, is_strictly_feasible,
                       lambda_max_upper_bound, project_unit_modulus, sigma_max_sq, solve_ball_qp,
                       solve_small_sdp)
from .sensing import (REAL_IDX, UnidentifiableError, build_target_response, crb_from_functionals,
                      curvature_bounds, fim_from_functionals, functional_matrices, functionals_from_A,
                      functionals_from_W, grad_F_phi_full, schur_complement)

log = logging.getLogger(__name__)


class SensingInfeasibleError(RuntimeError):
    pass


def vec(W):
    return W.ravel(order="F")


def unvec(w, n_tx):
    return w.reshape((n_tx, -1), order="F")


def penalty_scales(F, alpha_t):
    """Per-functional normalisation from an initial design.

    The cross terms use geometric means, so |F~_2| <= sqrt(F~_1 F~_4) etc.
    """
    F1, F4, F6 = (max(float(np.real(F[i])), 1e-300) for i in REAL_IDX)
    a = max(abs(alpha_t), 1e-300)
    return np.array([F1, math.sqrt(F1 * F4), a * math.sqrt(F1 * F6), F4, a * math.sqrt(F4 * F6), F6])


_GRAM_POS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def gram_from_functionals(F, alpha_t):
    """3x3 Hermitian Gram matrix of the (B, R, t) derivative signals.

    Only the real parts of F_1, F_4, F_6 are used.
    """
    F = np.asarray(F)
    ac = np.conj(alpha_t)
    G = np.zeros((3, 3), dtype=complex)
    for i, (a, b) in enumerate(_GRAM_POS):
        v = F[i] / ac if b == 2 and a != 2 else F[i]
        G[a, b] = v
        G[b, a] = np.conj(v)
    for a in range(3):
        G[a, a] = G[a, a].real
    return G


class PenaltyBasis:
    """Real-linear change of coordinates F~ = T F + T' conj(F) for the consensus pair.

    Every F~_j is again of the form tr(A~_j R), so the W and phi machinery
    only needs the transformed matrices and gradients.
    """

    def __init__(self, Tc, Tcc):
        self.Tc = np.asarray(Tc, dtype=complex)
        self.Tcc = np.asarray(Tcc, dtype=complex)
        # real 12x12 form acting on [Re F, Im F]
        A, B = self.Tc, self.Tcc
        self.real = np.block([[(A + B).real, (B - A).imag], [(A + B).imag, (A - B).real]])
        self.real_inv = np.linalg.inv(self.real)
        self.row_abs = np.abs(A) + np.abs(B)

    @classmethod
    def diagonal(cls, scales):
        return cls(np.diag(1.0 / np.asarray(scales, dtype=float)), np.zeros((6, 6)))

    @classmethod
    def from_map(cls, fn):
        Tc = np.zeros((6, 6), dtype=complex)
        Tcc = np.zeros((6, 6), dtype=complex)
        for i in range(6):
            e = np.zeros(6, dtype=complex)
            e[i] = 1.0
            p, q = fn(e), fn(1j * e)
            Tc[:, i] = 0.5 * (p - 1j * q)
            Tcc[:, i] = 0.5 * (p + 1j * q)
        return cls(Tc, Tcc)

    @classmethod
    def whitened(cls, F0, alpha_t, unit=1.0):
        """Congruence by G0^(-1/2), G0 the Gram matrix at the initial design,
        so the initial design maps to the identity. Imaginary parts of the
        real functionals pass through unchanged."""
        G0 = gram_from_functionals(F0, alpha_t)
        w, V = np.linalg.eigh(G0)
        if not w[0] > 0:
            raise ValueError("initial Gram matrix is singular")
        Wh = (V / np.sqrt(w)) @ V.conj().T

        def fn(F):
            G = Wh @ gram_from_functionals(F, alpha_t) @ Wh.conj().T
            out = np.array([G[a, b] for a, b in _GRAM_POS])
            for i in REAL_IDX:
                out[i] = out[i].real + 1j * np.asarray(F)[i].imag
            return out / unit

        return cls.from_map(fn)

    def forward(self, F):
        return self.Tc @ F + self.Tcc @ np.conj(F)

    def inverse(self, Ft):
        x = self.real_inv @ np.concatenate([Ft.real, Ft.imag])
        return x[:6] + 1j * x[6:]

    def transform_A(self, A):
        return (np.tensordot(self.Tc, A, axes=1)
                + np.tensordot(self.Tcc, np.conj(np.swapaxes(A, 1, 2)), axes=1))

    def transform_grad(self, hol, anti):
        h = self.Tc @ hol + self.Tcc @ np.conj(anti)
        a = self.Tc @ anti + self.Tcc @ np.conj(hol)
        return h, a

    def transform_bounds(self, B):
        """Triangle-inequality bounds for the transformed functionals."""
        return B @ self.row_abs.T


# --------------------------------------------------------------------------
# state / report
# --------------------------------------------------------------------------

@dataclass
class SolverState:
    W: np.ndarray
    phi: np.ndarray
    fp: FpState
    J_aux: np.ndarray
    U_aux: np.ndarray
    f: np.ndarray          # normalised units
    zeta: np.ndarray       # normalised units
    rho1: float
    rho_phi: float
    iter: int = 0
    sdp_x: np.ndarray | None = None
    sdp_center: np.ndarray | None = None


@dataclass
class TraceRow:
    iter: int
    F: float
    U_com_bits: float
    crb_trace: float
    consensus_gap: float
    admm_iters: int
    rho1: float
    wall_ms: float
    admm_primal: float = 0.0
    admm_dual: float = 0.0
    phi_offset: float = 0.0


@dataclass
class SolverReport:
    scheme: str
    rows: list = field(default_factory=list)
    W: np.ndarray | None = None
    phi: np.ndarray | None = None
    feasible: bool = False
    converged: bool = False
    iterations: int = 0
    U_com_bits: float = float("nan")
    crb_trace: float = float("nan")
    sigma_r: float = float("nan")
    flags: list = field(default_factory=list)

    @property
    def F_trace(self):
        return np.array([r.F for r in self.rows])


# --------------------------------------------------------------------------
# solver context
# --------------------------------------------------------------------------

class BcdSolver:
    """Holds one (channel, scene, config) instance and runs the block updates."""

    def __init__(self, ch: ChannelSet, scene: SensingScene, cfg: ScenarioConfig,
                 sensing=True, optimize_phi=True, scheme="proposed"):
        self.ch = ch
        self.scene = scene
        self.cfg = cfg
        self.opts = cfg.solver
        self.sensing = sensing
        self.optimize_phi = optimize_phi
        self.scheme = scheme
        self.weights = None if cfg.solver.user_weights is None else np.asarray(cfg.solver.user_weights)
        self.p_max = cfg.p_max
        self.eps = cfg.crb_eps
        self.basis = PenaltyBasis.diagonal(np.ones(6))
        self._sdp_lmis = None

    # ------------------------------------------------------------ helpers
    def response(self, phi):
        return build_target_response(self.scene, self.ch, phi)

    def functionals(self, W, phi, resp=None):
        resp = self.response(phi) if resp is None else resp
        return functionals_from_W(self.scene, resp, W)

    def normalized(self, F):
        return self.basis.forward(F)

    def crb(self, W, phi):
        try:
            return crb_from_functionals(self.functionals(W, phi), self.scene)
        except UnidentifiableError:
            return float("inf")

    def utility(self, W, phi):
        return utility_com(self.ch, phi, W, self.weights, check=False)

    def penalty(self, Ft, state):
        d = -state.f + state.rho1 * state.zeta
        return float(np.sum(np.abs(Ft + d) ** 2)) / (2.0 * state.rho1)

    # ------------------------------------------------------------ initialisation
    def initial_phi(self, rng):
        return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, self.ch.N))

    def initial_W(self, phi):
        from .channels import aligned_all
        E = aligned_all(self.ch, phi, check=False)
        K = self.ch.K
        W = np.empty((self.ch.Nt, K), dtype=complex)
        for k in range(K):
            W[:, k] = np.linalg.svd(E[k], full_matrices=False)[2][0].conj()
        return W * math.sqrt(self.p_max / K)

    def init_state(self, rng, phi=None) -> SolverState:
        if phi is None:
            phi = self.initial_phi(rng)
        phi = project_unit_modulus(phi)
        W = self.initial_W(phi)
        fp = update_fp(self.ch, phi, W, self.weights)
        Nt = self.ch.Nt
        state = SolverState(W, phi, fp, np.zeros((2, 2)), np.zeros((2, 2)), np.zeros(6, complex),
                            np.zeros(6, complex), self.opts.rho1_init, self.opts.rho_phi)
        if not self.sensing:
            return state
        F0 = self.functionals(W, phi)
        if not math.isfinite(self.crb(W, phi)):
            raise SensingInfeasibleError("scenario sensing-infeasible: target unidentifiable")
        self.basis = self.make_basis(F0)
        state.f = self.normalized(F0)
        self._build_sdp_structure()
        state.sdp_center = self._sdp_center(F0)
        state.sdp_x = state.sdp_center.copy()
        J, U = self._unpack_JU(state.sdp_center)
        state.J_aux, state.U_aux = J, U
        return state

    def make_basis(self, F0):
        o = self.opts
        if not o.normalize_penalty:
            return PenaltyBasis.diagonal(np.full(6, o.penalty_unit))
        if o.penalty_metric == "whitened":
            try:
                return PenaltyBasis.whitened(F0, self.scene.alpha_t, o.penalty_unit)
            except ValueError:
                log.debug("singular initial Gram matrix; falling back to diagonal scaling")
        return PenaltyBasis.diagonal(o.penalty_unit * penalty_scales(F0, self.scene.alpha_t))

    # ------------------------------------------------------------ SDP block
    # variables: Re f~ (6), Im f~ (6), then J11, J12, J22, U11, U12, U22.
    # Coordinates the LMI does not see are driven to the target by the objective.
    _NF = 12
    _NX = 18

    @staticmethod
    def _f_from_x(x):
        return x[:6] + 1j * x[6:12]

    def _unpack_JU(self, x):
        J = np.array([[x[12], x[13]], [x[13], x[14]]])
        U = np.array([[x[15], x[16]], [x[16], x[17]]])
        return J, U

    def _build_sdp_structure(self):
        n = self._NX
        al, sr = self.scene.alpha_t, self.scene.sigma_r
        G1 = np.zeros((n, 4, 4))
        for j in range(self._NF):
            x = np.zeros(n)
            x[j] = 1.0
            G1[j] = fim_from_functionals(self.basis.inverse(self._f_from_x(x)), al, sr).full()
        # -J in the upper-left block
        G1[12, 0, 0] = -1.0
        G1[13, 0, 1] = G1[13, 1, 0] = -1.0
        G1[14, 1, 1] = -1.0
        G2 = np.zeros((n, 4, 4))
        G2[12, 2, 2] = 1.0
        G2[13, 2, 3] = G2[13, 3, 2] = 1.0
        G2[14, 3, 3] = 1.0
        G2[15, 0, 0] = 1.0
        G2[16, 0, 1] = G2[16, 1, 0] = 1.0
        G2[17, 1, 1] = 1.0
        C2 = np.zeros((4, 4))
        C2[:2, 2:] = np.eye(2)
        C2[2:, :2] = np.eye(2)
        G1 = 0.5 * (G1 + np.swapaxes(G1, 1, 2))
        self._sdp_lmis = [(np.zeros((4, 4)), G1), (C2, G2)]
        a = np.zeros(n)
        a[15] = a[17] = 1.0
        self._sdp_lin = [(a, self.eps)]

    def _sdp_center(self, F0):
        """Strictly feasible point: f = s F0 with CRB(s F0) <= eps/4,
        J = Schur/2, U = J^-1 + (eps/8) I."""
        try:
            crb0 = crb_from_functionals(F0, self.scene)
        except UnidentifiableError as exc:
            raise SensingInfeasibleError("scenario sensing-infeasible: target unidentifiable") from exc
        scale = max(1.0, 4.0 * crb0 / self.eps)
        for _ in range(20):
            F = scale * F0
            x = np.zeros(self._NX)
            Fn = self.normalized(F)
            x[:6], x[6:12] = Fn.real, Fn.imag
            S = schur_complement(fim_from_functionals(F, self.scene.alpha_t, self.scene.sigma_r))
            J = 0.5 * S
            U = np.linalg.inv(J) + (self.eps / 8.0) * np.eye(2)
            x[12:15] = J[0, 0], J[0, 1], J[1, 1]
            x[15:18] = U[0, 0], U[0, 1], U[1, 1]
            n = self._NX
            p = SmallSdpProblem(n, np.zeros((n, n)), np.zeros(n), self._sdp_lmis, self._sdp_lin)
            if is_strictly_feasible(p, x):
                return x
            scale *= 2.0
        raise SensingInfeasibleError("scenario sensing-infeasible: no strictly feasible SDP start")

    def update_aux_sdp(self, state: SolverState, Ft):
        """min sum |F~ + rho1 zeta - f|^2 over the CRB-feasible (f, J, U) set."""
        target = Ft + state.rho1 * state.zeta
        n, nf = self._NX, self._NF
        P = np.zeros((n, n))
        P[:nf, :nf] = np.eye(nf)
        q = np.zeros(n)
        q[:nf] = -2.0 * np.concatenate([target.real, target.imag])
        p = SmallSdpProblem(n, P, q, self._sdp_lmis, self._sdp_lin)
        x0 = 0.9 * state.sdp_x + 0.1 * state.sdp_center
        if not is_strictly_feasible(p, x0):
            x0 = state.sdp_center
        x = solve_small_sdp(p, x0, tol=self.opts.sdp_tol)
        state.sdp_x = x
        state.f = self._f_from_x(x)
        state.J_aux, state.U_aux = self._unpack_JU(x)
        return state.J_aux, state.f

    # ------------------------------------------------------------ W block
    def w_surrogate(self, state: SolverState, wq: WQuadratic, A=None, theta_scale=None,
                    pieces=False, base=None):
        """Convex quadratic majoriser of the W-block objective at W_t.

        Returns (Q, b, const): surrogate(w) = w^H Q w - Re{b^H w} + const.
        ``theta_scale`` (6,) shrinks the curvature constants of each penalty
        term below their global bounds; with ``pieces`` the per-term
        (Q_i, b_i, k_i) are returned as well.
        """
        W_t = state.W
        w_t = vec(W_t)
        Q = wq.gram.copy()
        b = wq.a.copy()
        const = -wq.const
        parts = []
        if not self.sensing:
            return (Q, b, const, parts) if pieces else (Q, b, const)
        if theta_scale is None:
            theta_scale = np.ones(6)
        if base is None:
            base = self._w_penalty_base(state, A)
        P = self.p_max
        s_t = float(np.real(np.vdot(w_t, w_t)))
        d = -state.f + state.rho1 * state.zeta
        n = w_t.size
        wgt = 1.0 / (2.0 * state.rho1)
        eye_n = np.eye(n)
        for i, (th_t0, th_b0, u, v, Ft, CbW) in enumerate(base):
            th_t = theta_scale[i] * th_t0
            th_b = theta_scale[i] * th_b0
            Qi = (th_t + th_b * (2.0 * s_t + 4.0 * P)) * eye_n + np.outer(u, u.conj()) + np.outer(v, v.conj())
            bi = -2.0 * (CbW - th_t * w_t) + th_b * (8.0 * P + 4.0 * s_t) * w_t
            ki = (abs(d[i]) ** 2 - float(np.real(np.vdot(w_t, CbW))) + th_t * s_t
                  + th_b * (2.0 * s_t ** 2 + 4.0 * P * s_t) - abs(Ft) ** 2)
            Q += wgt * Qi
            b += wgt * bi
            const += wgt * ki
            parts.append((Qi, bi, ki))
        Q = 0.5 * (Q + Q.conj().T)
        return (Q, b, const, parts) if pieces else (Q, b, const)

    def _w_penalty_base(self, state: SolverState, A=None):
        """Per-term quantities of the W-surrogate that do not depend on theta_scale."""
        if A is None:
            A = functional_matrices(self.scene, self.response(state.phi))
        A = self.basis.transform_A(A)
        W_t = state.W
        w_t = vec(W_t)
        d = -state.f + state.rho1 * state.zeta
        base = []
        for i in range(6):
            Ai = A[i]
            Cbar = np.conj(d[i]) * Ai + d[i] * Ai.conj().T
            Cbar = 0.5 * (Cbar + Cbar.conj().T)
            u = vec(Ai.conj().T @ W_t)
            base.append((max(0.0, lambda_max_upper_bound(Cbar)), 1.01 * sigma_max_sq(Ai), u,
                         vec(Ai @ W_t), np.vdot(u, w_t), vec(Cbar @ W_t)))
        return base

    def w_objective(self, state: SolverState, wq: WQuadratic, w, resp=None):
        val = -wq.value(w)
        if self.sensing:
            W = unvec(w, self.ch.Nt)
            Ft = self.normalized(self.functionals(W, state.phi, resp))
            val += self.penalty(Ft, state)
        return val

    def _solve_w_qp(self, Q, b, w_t):
        p = BallQpProblem(Q, b, self.p_max)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            w, info = solve_ball_qp(p, w_t, tol=self.opts.qp_tol, max_iter=self.opts.qp_max_iter,
                                    return_info=True)
        nw = np.linalg.norm(w)
        if nw ** 2 > self.p_max:
            w = w * math.sqrt(self.p_max) / nw
        return w, info

    def update_W(self, state: SolverState, wq: WQuadratic, resp=None):
        w_t = vec(state.W)
        if not self.sensing:
            Q, b, _ = self.w_surrogate(state, wq)
            w, info = self._solve_w_qp(Q, b, w_t)
            state.W = unvec(w, self.ch.Nt)
            return state.W, info
        resp = self.response(state.phi) if resp is None else resp
        A = functional_matrices(self.scene, resp)
        d = -state.f + state.rho1 * state.zeta
        certified = self.opts.tau_mode == "certified"
        scale = np.ones(6) if certified else np.full(6, self.opts.mm_init_scale)
        base = self._w_penalty_base(state, A)
        doublings = 0
        while True:
            Q, b, const, parts = self.w_surrogate(state, wq, A, scale, pieces=True, base=base)
            w, info = self._solve_w_qp(Q, b, w_t)
            if certified:
                break
            Wc = unvec(w, self.ch.Nt)
            Fw = self.normalized(functionals_from_A(A, Wc @ Wc.conj().T))
            pw = np.abs(Fw + d) ** 2
            qw = np.array([float(np.real(np.vdot(w, Qi @ w)) - np.real(np.vdot(bi, w)) + ki)
                           for Qi, bi, ki in parts])
            bad = (pw > qw + 1e-12 * (1.0 + np.abs(qw))) & (scale < 1.0)
            if not np.any(bad):
                break
            scale = np.where(bad, np.minimum(2.0 * scale, 1.0), scale)
            doublings += 1
        self.last_theta_doublings = doublings
        # MM safeguard, as for phi
        s_new = float(np.real(np.vdot(w, Q @ w)) - np.real(np.vdot(b, w)) + const)
        s_old = float(np.real(np.vdot(w_t, Q @ w_t)) - np.real(np.vdot(b, w_t)) + const)
        if s_new > s_old + 1e-12 * (1.0 + abs(s_old)):
            return state.W, info
        state.W = unvec(w, self.ch.Nt)
        return state.W, info

    # ------------------------------------------------------------ phi block
    def phi_penalty_terms(self, state: SolverState, W, phi):
        """Residuals e_i and gradients dp_i/dphi* of p_i = |F~_i + d_i|^2 at phi."""
        resp = self.response(phi)
        R = W @ W.conj().T
        hol, anti = grad_F_phi_full(self.scene, resp, R)
        Ft = self.normalized(functionals_from_W(self.scene, resp, W))
        hol, anti = self.basis.transform_grad(hol, anti)
        d = -state.f + state.rho1 * state.zeta
        e = Ft + d
        grad = np.conj(e)[:, None] * anti + e[:, None] * np.conj(hol)
        return e, grad, anti, hol, resp

    def certified_tau(self, state: SolverState, W, resp):
        """Curvature bound of every p_i valid on the whole polydisc:
        p'' = 2|e'|^2 + 2 Re{conj(e) e''} <= 2 B1^2 + 2 (|d| + B0) B2."""
        B = self.basis.transform_bounds(curvature_bounds(self.scene, resp, sigma_max_sq(W)))
        dmag = np.abs(-state.f + state.rho1 * state.zeta)
        return 2.0 * B[1] ** 2 + 2.0 * (dmag + B[0]) * B[2]

    def certified_tau_gn(self, W, resp, e):
        """Isotropic remainder bound for the linearised majoriser, valid on the
        whole torus (||delta|| <= 2 sqrt(N)): tau/2 >= (|e| + 2 sqrt(N) B1) B2 + N B2^2."""
        B = self.basis.transform_bounds(curvature_bounds(self.scene, resp, sigma_max_sq(W)))
        N = self.ch.N
        return 2.0 * ((np.abs(e) + 2.0 * math.sqrt(N) * B[1]) * B[2] + N * B[2] ** 2)

    def phi_surrogate(self, state: SolverState, pq: PhiQuadratic, tau, e, grad, phi_t,
                      hol=None, anti=None):
        """Returns (D_hat, g_hat, const): surrogate = phi^H D_hat phi - 2 Re{g_hat^H phi} + const.

        Each penalty term is bounded by p_t + 2 Re{grad^H delta} + delta^H M_i delta
        with M_i = (tau_i / 2) I, plus the linearised part
        2 conj(hol) hol^T + 2 anti anti^H when ``hol``/``anti`` are given.
        """
        N = phi_t.size
        D_hat = pq.D.copy()
        g_hat = 0.5 * pq.g.copy()
        const = -pq.const
        if self.sensing:
            wgt = 1.0 / (2.0 * state.rho1)
            M = self._phi_metric(tau, hol, anti, N)
            Mphi = M @ phi_t
            D_hat += wgt * M
            g_hat += wgt * (Mphi - np.sum(grad, axis=0))
            p_t = np.abs(e) ** 2
            const += wgt * float(np.sum(p_t) - 2.0 * np.sum(np.real(grad.conj() @ phi_t))
                                 + np.real(np.vdot(phi_t, Mphi)))
        return D_hat, g_hat, const

    @staticmethod
    def _phi_metric(tau, hol, anti, N):
        M = 0.5 * float(np.sum(tau)) * np.eye(N, dtype=complex)
        if hol is not None:
            M += 2.0 * (hol.T @ hol.conj()).T + 2.0 * anti.T @ anti.conj()
        return M

    @staticmethod
    def _term_bounds(e, grad, tau, delta, hol=None, anti=None):
        """Per-term surrogate values at phi_t + delta."""
        nd2 = float(np.real(np.vdot(delta, delta)))
        out = np.abs(e) ** 2 + 2.0 * np.real(grad.conj() @ delta) + 0.5 * tau * nd2
        if hol is not None:
            out = out + 2.0 * np.abs(hol @ delta) ** 2 + 2.0 * np.abs(anti.conj() @ delta) ** 2
        return out

    @staticmethod
    def surrogate_value(D_hat, g_hat, const, phi):
        return float(np.real(np.vdot(phi, D_hat @ phi)) - 2.0 * np.real(np.vdot(g_hat, phi)) + const)

    def admm(self, D_hat, g_hat, z0, rho):
        """ADMM on min phi^H D phi - 2 Re{g^H phi} s.t. |phi_n| = 1."""
        N = z0.size
        # phi^H phi = N on the feasible set, so a multiple of I can be moved out
        # of D_hat without changing the problem; shifting to lambda_min = 0 keeps
        # the curvature seen by the phi-step small relative to rho
        shift = float(np.linalg.eigvalsh(D_hat)[0])
        D0 = D_hat - shift * np.eye(N)
        # dividing the objective by a positive constant keeps the minimiser;
        # without it the multiplier needs ~|g|/rho iterations to catch up
        scale = max(1.0, float(np.max(np.abs(g_hat))), float(np.max(np.abs(D0))))
        D0 = D0 / scale
        g_hat = g_hat / scale
        eye = np.eye(N)
        chol = CholFactor(2.0 * D0 + rho * eye)
        z = z0.copy()
        lam = np.zeros(N, dtype=complex)
        g2 = 2.0 * g_hat
        r_inf = s_inf = np.inf
        it = 0
        phi = z
        for it in range(1, self.opts.admm_max_iter + 1):
            phi = chol.solve(g2 - lam + rho * z)
            z_old = z
            z = project_unit_modulus(phi + lam / rho)
            r = phi - z
            lam = lam + rho * r
            r_inf = float(np.max(np.abs(r)))
            s_inf = float(rho * np.max(np.abs(z - z_old)))
            if r_inf <= self.opts.admm_tol and s_inf <= self.opts.admm_tol:
                break
            if self.opts.admm_adaptive_rho and it % 10 == 0:
                # residual balancing
                if r_inf > 10.0 * s_inf:
                    rho *= 2.0
                elif s_inf > 10.0 * r_inf:
                    rho *= 0.5
                else:
                    continue
                chol = CholFactor(2.0 * D0 + rho * eye)
        return z, {"iters": it, "primal": r_inf, "dual": s_inf,
                   "offset": float(np.max(np.abs(phi - z)))}

    def phi_objective(self, state: SolverState, pq: PhiQuadratic, W, phi):
        val = -pq.value(phi)
        if self.sensing:
            Ft = self.normalized(self.functionals(W, phi))
            val += self.penalty(Ft, state)
        return val

    def update_phi(self, state: SolverState, pq: PhiQuadratic):
        phi_t = state.phi
        W = state.W
        info = {"iters": 0, "primal": 0.0, "dual": 0.0, "offset": 0.0, "tau_doublings": 0}
        if not self.optimize_phi:
            return phi_t, info
        hol_q = anti_q = None
        if self.sensing:
            e, grad, anti, hol, resp = self.phi_penalty_terms(state, W, phi_t)
            gauss_newton = self.opts.phi_majorizer == "gauss_newton"
            if gauss_newton:
                hol_q, anti_q = hol, anti
                cert = self.certified_tau_gn(W, resp, e)
                tau0 = self.opts.mm_init_scale * (2.0 * np.sum(np.abs(anti) ** 2, axis=1) + 1.0)
            else:
                cert = self.certified_tau(state, W, resp)
                tau0 = 2.0 * np.sum(np.abs(anti) ** 2, axis=1) + 1.0
            if self.opts.tau_mode == "certified":
                tau = tau_cap = cert
            else:
                tau = np.minimum(tau0, cert) if gauss_newton else tau0
                tau_cap = np.maximum(cert, tau)
        else:
            e = grad = None
            tau = tau_cap = np.zeros(6)
        d = -state.f + state.rho1 * state.zeta
        doublings = 0
        while True:
            D_hat, g_hat, const = self.phi_surrogate(state, pq, tau, e, grad, phi_t, hol_q, anti_q)
            z, ainfo = self.admm(D_hat, g_hat, phi_t, state.rho_phi)
            if not self.sensing:
                break
            # majorisation check of every p_i at the candidate
            Fz = self.normalized(self.functionals(W, z))
            pz = np.abs(Fz + d) ** 2
            bound = self._term_bounds(e, grad, tau, z - phi_t, hol_q, anti_q)
            bad = pz > bound + 1e-12 * (1.0 + np.abs(bound))
            if not np.any(bad) or doublings >= self.opts.tau_max_doublings:
                break
            at_cap = tau >= tau_cap
            if np.all(at_cap[bad]):
                # certified bound already in force for the failing terms
                break
            tau = np.where(bad, np.minimum(2.0 * tau, tau_cap), tau)
            doublings += 1
        # MM safeguard: the candidate must not increase the surrogate
        s_new = self.surrogate_value(D_hat, g_hat, const, z)
        s_old = self.surrogate_value(D_hat, g_hat, const, phi_t)
        info.update(ainfo)
        info["tau_doublings"] = doublings
        if s_new > s_old + 1e-12 * (1.0 + abs(s_old)):
            info["rejected"] = True
            return phi_t, info
        state.phi = z
        return z, info

    # ------------------------------------------------------------ duals
    def update_duals(self, state: SolverState, Ft):
        state.zeta = state.zeta + (Ft - state.f) / state.rho1
        return state.zeta

    # ------------------------------------------------------------ outer loop
    def _row(self, state, it, F_val, t0, admm_info, Ft):
        U = self.utility(state.W, state.phi) / math.log(2.0)
        crb = self.crb(state.W, state.phi)
        if self.sensing:
            gap = float(np.max(np.abs(Ft - state.f) / (1.0 + np.abs(Ft))))
        else:
            gap = 0.0
        return TraceRow(it, F_val, U, crb, gap, int(admm_info.get("iters", 0)), state.rho1,
                        1e3 * (time.perf_counter() - t0), admm_info.get("primal", 0.0),
                        admm_info.get("dual", 0.0), admm_info.get("offset", 0.0))

    def run(self, rng=None, state: SolverState | None = None) -> SolverReport:
        t0 = time.perf_counter()
        if state is None:
            state = self.init_state(rng)
        report = SolverReport(self.scheme, sigma_r=self.scene.sigma_r)
        fp = state.fp
        F_prev = fp_objective(self.ch, state.phi, state.W, fp.r, fp.c, self.weights)
        Ft = self.normalized(self.functionals(state.W, state.phi)) if self.sensing else None
        report.rows.append(self._row(state, 0, F_prev, t0, {}, Ft))
        o = self.opts
        for it in range(1, o.max_outer + 1):
            state.iter = it
            state.fp = fp = update_fp(self.ch, state.phi, state.W, self.weights)
            if self.sensing:
                try:
                    self.update_aux_sdp(state, Ft)
                except SdpError as exc:
                    report.flags.append(f"sdp_failed@{it}: {exc}")
                    log.warning("SDP block failed at iteration %d: %s", it, exc)
                    break
            wq = assemble_w_quadratic(self.ch, state.phi, fp.r, fp.c, self.weights)
            _, qinfo = self.update_W(state, wq)
            if not qinfo.converged:
                report.flags.append(f"qp_cap@{it}")
            admm_info = {}
            if self.optimize_phi:
                pq = assemble_phi_quadratic(self.ch, state.W, fp.r, fp.c, self.weights)
                _, admm_info = self.update_phi(state, pq)
            if self.sensing:
                Ft = self.normalized(self.functionals(state.W, state.phi))
                self.update_duals(state, Ft)
            F_val = fp_objective(self.ch, state.phi, state.W, fp.r, fp.c, self.weights)
            report.rows.append(self._row(state, it, F_val, t0, admm_info, Ft))
            if self.sensing:
                state.rho1 = max(o.rho1_min, o.rho1_decay * state.rho1)
            rel = abs(F_val - F_prev) / max(abs(F_prev), 1e-12)
            F_prev = F_val
            gap = report.rows[-1].consensus_gap
            if rel < o.tol_obj and gap < o.tol_consensus:
                report.converged = True
                break
        report.W, report.phi = state.W, state.phi
        report.iterations = len(report.rows) - 1
        report.U_com_bits = self.utility(state.W, state.phi) / math.log(2.0)
        report.crb_trace = self.crb(state.W, state.phi)
        report.feasible = bool(report.crb_trace <= self.eps * (1.0 + 1e-3))
        self.state = state
        return report


def run(ch: ChannelSet, scene: SensingScene, cfg: ScenarioConfig, rng) -> SolverReport:
    return BcdSolver(ch, scene, cfg).run(rng)
