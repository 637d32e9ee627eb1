"""Quick self-checks behind ``rarisac validate``.

Each check compares a routine against an independent construction on a
small random instance and returns (name, passed, detail).
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .baselines import comm_only
from .channels import ReferenceStrengthWarning
from .config import ScenarioConfig
from .fp import fp_objective, update_fp
from .frontend import utility_com
from .numerics import project_unit_modulus
from .scenario import make_instance
from .sensing import (build_target_response, crb_trace, fim, functionals_from_W, grad_F_phi_full)
from .solver import BcdSolver, vec

SMALL = dict(n_tx=4, n_ris=8, n_cells=4, n_users=2, snapshots=16)


def small_config(**kw):
    return ScenarioConfig().replace(**{**SMALL, **kw})


def _random_W(rng, cfg):
    W = rng.standard_normal((cfg.n_tx, cfg.n_users)) + 1j * rng.standard_normal((cfg.n_tx, cfg.n_users))
    return W * math.sqrt(cfg.p_max) / np.linalg.norm(W)


def echo_mean(scene, ch, phi, X, theta_B, theta_R, alpha):
    sc = scene.with_angles(theta_B, theta_R)
    v = sc.h_dt + (ch.H_BR.T * sc.h_rt) @ phi
    return (alpha * np.outer(v, v) @ X).ravel()


def fim_finite_difference(scene, ch, phi, X, h=1e-6):
    """J = (2 / sigma^2) Re{D^H D}, D the central-difference Jacobian of the echo mean
    in (theta_B, theta_R, Re alpha, Im alpha)."""
    p0 = np.array([scene.theta_B, scene.theta_R, scene.alpha_t.real, scene.alpha_t.imag])
    cols = []
    for j in range(4):
        dp = np.zeros(4)
        dp[j] = h
        m = [echo_mean(scene, ch, phi, X, q[0], q[1], q[2] + 1j * q[3]) for q in (p0 + dp, p0 - dp)]
        cols.append((m[0] - m[1]) / (2 * h))
    D = np.stack(cols, axis=1)
    return 2.0 / scene.sigma_r ** 2 * np.real(D.conj().T @ D)


def check_fim(seed=0):
    cfg = small_config()
    inst = make_instance(cfg, seed)
    rng = np.random.default_rng(seed)
    phi = np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.n_ris))
    L = cfg.snapshots
    X = (rng.standard_normal((cfg.n_tx, L)) + 1j * rng.standard_normal((cfg.n_tx, L))) / math.sqrt(2 * cfg.n_tx)
    resp = build_target_response(inst.scene, inst.ch, phi)
    J = fim(inst.scene, resp, X @ X.conj().T / L, L).full()
    J_fd = fim_finite_difference(inst.scene, inst.ch, phi, X)
    err = np.linalg.norm(J - J_fd) / np.linalg.norm(J_fd)
    return "FIM vs finite-difference Jacobian", err < 1e-4, f"rel err {err:.2e}"


def check_crb(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    from .sensing import FimBlocks
    for _ in range(20):
        # J_aa = a I as produced by the echo model; a large enough keeps J PD
        G = rng.standard_normal((2, 4))
        J = np.zeros((4, 4))
        J[:2, :2] = G @ G.T + 0.1 * np.eye(2)
        J[:2, 2:] = rng.standard_normal((2, 2))
        J[2:, :2] = J[:2, 2:].T
        J[2:, 2:] = (np.linalg.norm(J[:2, 2:], 2) ** 2 / 0.05 + rng.uniform(0.5, 2.0)) * np.eye(2)
        blocks = FimBlocks(J[:2, :2], J[:2, 2:], J[2:, 2:])
        direct = np.trace(np.linalg.inv(J)[:2, :2])
        worst = max(worst, abs(crb_trace(blocks) - direct) / abs(direct))
    return "CRB Schur route vs direct inverse", worst < 1e-10, f"max rel err {worst:.2e}"


def check_gradients(seed=0):
    cfg = small_config()
    inst = make_instance(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    phi = np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.n_ris))
    W = _random_W(rng, cfg)
    d = rng.standard_normal(cfg.n_ris) + 1j * rng.standard_normal(cfg.n_ris)
    h = 1e-6
    resp = build_target_response(inst.scene, inst.ch, phi)
    hol, anti = grad_F_phi_full(inst.scene, resp, W @ W.conj().T)
    Fp = functionals_from_W(inst.scene, build_target_response(inst.scene, inst.ch, phi + h * d), W)
    Fm = functionals_from_W(inst.scene, build_target_response(inst.scene, inst.ch, phi - h * d), W)
    fd = (Fp - Fm) / (2 * h)
    an = hol @ d + anti @ d.conj()
    err = float(np.max(np.abs(fd - an) / np.maximum(np.abs(an), 1e-12 * np.max(np.abs(an)))))
    return "functional gradients vs finite differences", err < 1e-5, f"max rel err {err:.2e}"


def check_fp(seed=0):
    cfg = small_config()
    inst = make_instance(cfg, seed)
    rng = np.random.default_rng(seed + 2)
    phi = np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.n_ris))
    W = _random_W(rng, cfg)
    st = update_fp(inst.ch, phi, W)
    U = utility_com(inst.ch, phi, W)
    tight = abs(fp_objective(inst.ch, phi, W, st.r, st.c) - U)
    above = 0
    for _ in range(50):
        r = st.r * rng.uniform(0.2, 3.0, st.r.shape)
        c = st.c + 0.3 * (rng.standard_normal(st.c.shape) + 1j * rng.standard_normal(st.c.shape)) * np.abs(st.c).mean()
        above += fp_objective(inst.ch, phi, W, r, c) > U + 1e-9
    return "quadratic-transform tightness", tight < 1e-9 and above == 0, f"|F - U| {tight:.1e}, violations {above}"


def _mid_run_solver(seed):
    cfg = small_config(**{"solver.max_outer": 3})
    inst = make_instance(cfg, seed)
    s = BcdSolver(inst.ch, inst.scene, cfg)
    s.run(inst.init_rng())
    return s, s.state


def check_surrogates(seed=0):
    from .fp import assemble_phi_quadratic, assemble_w_quadratic

    s, st = _mid_run_solver(seed)
    rng = np.random.default_rng(seed + 3)
    wq = assemble_w_quadratic(s.ch, st.phi, st.fp.r, st.fp.c)
    Q, b, const = s.w_surrogate(st, wq)
    w_t = vec(st.W)
    sur = lambda w: float(np.real(np.vdot(w, Q @ w)) - np.real(np.vdot(b, w)) + const)  # noqa: E731
    tan_w = abs(sur(w_t) - s.w_objective(st, wq, w_t))
    viol_w = 0.0
    for _ in range(100):
        w = rng.standard_normal(w_t.size) + 1j * rng.standard_normal(w_t.size)
        w *= math.sqrt(s.p_max) * rng.uniform(0, 1) / np.linalg.norm(w)
        viol_w = max(viol_w, s.w_objective(st, wq, w) - sur(w))
    pq = assemble_phi_quadratic(s.ch, st.W, st.fp.r, st.fp.c)
    e, grad, anti, hol, resp = s.phi_penalty_terms(st, st.W, st.phi)
    tau = s.certified_tau_gn(st.W, resp, e)
    D, g, c = s.phi_surrogate(st, pq, tau, e, grad, st.phi, hol, anti)
    tan_p = abs(s.surrogate_value(D, g, c, st.phi) - s.phi_objective(st, pq, st.W, st.phi))
    viol_p = 0.0
    for _ in range(100):
        z = project_unit_modulus(rng.standard_normal(st.phi.size) + 1j * rng.standard_normal(st.phi.size))
        viol_p = max(viol_p, s.phi_objective(st, pq, st.W, z) - s.surrogate_value(D, g, c, z))
    scale = 1.0 + abs(s.w_objective(st, wq, w_t))
    # the assembled phi form cancels terms of size |c|; allow for their rounding
    fl = 1e-14 * (abs(c) + float(np.real(np.vdot(st.phi, D @ st.phi))))
    ok = (tan_w < 1e-8 * scale and tan_p < 1e-8 * scale + fl and viol_w <= 1e-9 * scale
          and viol_p <= 1e-9 * scale + fl)
    return ("MM surrogate tangency and majorisation", ok,
            f"tangency {max(tan_w, tan_p):.1e}, worst violation {max(viol_w, viol_p):.1e}")


def check_admm(seed=0):
    s, st = _mid_run_solver(seed)
    rng = np.random.default_rng(seed + 4)
    N = st.phi.size
    G = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    D = G @ G.conj().T / N
    g = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    z, info = s.admm(D, g, st.phi, 1.0)
    mod = float(np.max(np.abs(np.abs(z) - 1.0)))
    ok = mod <= 1e-14 and info["primal"] <= 1e-6 and info["dual"] <= 1e-6
    return "ADMM unit modulus and residuals", ok, f"modulus err {mod:.1e}, residuals {info['primal']:.1e}/{info['dual']:.1e}"


def check_comm_invariance(seed=0):
    rows = []
    for eps in (0.01, 1.0):
        cfg = small_config(crb_eps=eps, **{"solver.max_outer": 10})
        inst = make_instance(cfg, seed)
        rep = comm_only(inst.ch, inst.scene, cfg, inst.init_rng())
        rows.append([(r.F, r.U_com_bits, r.crb_trace) for r in rep.rows])
    return "comm-only invariance to eps", rows[0] == rows[1], f"{len(rows[0])} identical rows" if rows[0] == rows[1] else "traces differ"


CHECKS = (check_fim, check_crb, check_gradients, check_fp, check_surrogates, check_admm,
          check_comm_invariance)


def run_all():
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        warnings.simplefilter("ignore", ReferenceStrengthWarning)
        for chk in CHECKS:
            try:
                out.append(chk())
            except Exception as exc:      # noqa: BLE001 - reported as a failure
                out.append((chk.__name__, False, f"raised {type(exc).__name__}: {exc}"))
    return out
