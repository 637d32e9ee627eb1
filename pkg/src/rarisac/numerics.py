"""Dense complex linear algebra and the small convex solvers used by the optimizer.

Three solvers live here:

* unit-modulus projection (closed form),
* ball-constrained complex QP via accelerated projected gradient,
* a tiny dense SDP via a log-det barrier interior point method.

Everything is a pure function of its inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

HERM_TOL = 1e-10
MAX_SDP_VARS = 32


class AssemblyError(ValueError):
    """Raised when an input matrix violates a structural precondition."""


class SdpError(RuntimeError):
    pass


def project_unit_modulus(v):
    """Map every entry to the unit circle, keeping its phase.

    Zero entries map to 1 + 0j.
    """
    v = np.asarray(v, dtype=complex)
    # exact power-of-two upscale so tiny inputs survive the division
    _, ex = np.frexp(np.maximum(np.abs(v.real), np.abs(v.imag)))
    ex = np.minimum(ex, 0)
    u = np.ldexp(v.real, -ex) + 1j * np.ldexp(v.imag, -ex)
    mag = np.abs(u)
    out = np.ones_like(v)
    nz = mag > 0
    out[nz] = u[nz] / mag[nz]
    # division leaves |out| ~ 1 +- 2 ulp; one renormalisation pass tightens it
    out[nz] /= np.abs(out[nz])
    return out


def _check_hermitian(A, tol=HERM_TOL):
    asym = np.max(np.abs(A - A.conj().T)) if A.size else 0.0
    if asym > tol * max(1.0, np.max(np.abs(A))):
        raise AssemblyError(f"matrix not Hermitian (asymmetry {asym:.3e})")


def lambda_max_upper_bound(A, rel_tol=1e-6, inflate=0.01, max_iter=2000, seed=0):
    """Certified-by-inflation upper bound on the largest eigenvalue of Hermitian A.

    Power iteration runs on the shifted matrix A + s*I (s = Gershgorin
    radius) so that the dominant eigenvalue is the algebraically largest
    one, then the Rayleigh estimate is inflated by ``1 + inflate``.
    """
    A = np.asarray(A)
    _check_hermitian(A)
    n = A.shape[0]
    if n == 0 or not np.any(A):
        return 0.0
    shift = float(np.max(np.sum(np.abs(A), axis=1)))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam_old = None
    lam = 0.0
    for _ in range(max_iter):
        y = A @ x + shift * x
        lam = float(np.real(np.vdot(x, y)))
        ny = np.linalg.norm(y)
        if ny == 0:
            break
        x = y / ny
        if lam_old is not None and abs(lam - lam_old) <= rel_tol * abs(lam):
            break
        lam_old = lam
    est = lam - shift
    # Rayleigh quotients never exceed lambda_max, so inflation works on the
    # magnitude; a slowly converging case falls back on the Gershgorin bound
    bound = est + inflate * abs(est)
    # residual-based certificate: lambda_max <= est + ||Ax - est x|| holds for
    # some eigenvalue only, so fall back to a dense solve when it is loose
    resid = np.linalg.norm(A @ x - est * x)
    if resid > inflate * max(abs(est), 1e-300):
        bound = max(bound, float(np.linalg.eigvalsh(A)[-1]) * (1 + inflate))
    return bound


def sigma_max_sq(A):
    """Squared spectral norm of a small dense matrix."""
    A = np.asarray(A)
    if not np.any(A):
        return 0.0
    return float(np.linalg.norm(A, 2) ** 2)


# --------------------------------------------------------------------------
# ball-constrained QP
# --------------------------------------------------------------------------

@dataclass
class BallQpProblem:
    """min_w  w^H Q w - Re{b^H w}  s.t. ||w||^2 <= radius_sq."""

    Q: np.ndarray
    b: np.ndarray
    radius_sq: float

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=complex)
        self.b = np.asarray(self.b, dtype=complex).ravel()
        _check_hermitian(self.Q)
        if not self.radius_sq > 0:
            raise AssemblyError("radius_sq must be positive")

    def objective(self, w):
        return float(np.real(np.vdot(w, self.Q @ w)) - np.real(np.vdot(self.b, w)))


@dataclass
class QpInfo:
    iterations: int
    converged: bool
    kkt: float


def _project_ball(w, radius):
    nw = np.linalg.norm(w)
    if nw > radius:
        return w * (radius / nw)
    return w


def solve_ball_qp(p: BallQpProblem, w0, tol=1e-8, max_iter=5000, return_info=False):
    """Accelerated projected gradient with adaptive restart.

    The best iterate (by objective) is returned, so the result never has a
    larger objective than the projected starting point.
    """
    w0 = np.asarray(w0, dtype=complex).ravel()
    if not (np.all(np.isfinite(w0)) and np.all(np.isfinite(p.Q)) and np.all(np.isfinite(p.b))):
        raise ValueError("non-finite input to solve_ball_qp")
    radius = np.sqrt(p.radius_sq)
    Q, b = p.Q, p.b
    bnorm = np.linalg.norm(b)
    lip = 2.0 * lambda_max_upper_bound(Q)

    if lip <= 0.0:
        # linear objective: push along b to the boundary
        w = b * (radius / bnorm) if bnorm > 0 else np.zeros_like(b)
        info = QpInfo(0, True, 0.0)
        return (w, info) if return_info else w

    step = 1.0 / lip
    thresh = tol * (1.0 + bnorm)
    x = _project_ball(w0, radius)
    y = x.copy()
    theta = 1.0
    Qx = Q @ x
    best_x = x
    best_f = np.real(np.vdot(x, Qx)) - np.real(np.vdot(b, x))
    f_prev = best_f
    kkt = np.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        Qy = Q @ y
        grad = 2.0 * Qy - b
        x_new = _project_ball(y - step * grad, radius)
        # gradient mapping at y measures stationarity
        kkt = lip * np.linalg.norm(y - x_new)
        Qx = Q @ x_new
        f_new = np.real(np.vdot(x_new, Qx)) - np.real(np.vdot(b, x_new))
        if f_new < best_f:
            best_f, best_x = f_new, x_new
        if kkt <= thresh:
            converged = True
            x = x_new
            break
        if f_new > f_prev:
            # function-value restart
            theta = 1.0
            y = x_new
        else:
            theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
            y = x_new + ((theta - 1.0) / theta_new) * (x_new - x)
            theta = theta_new
        x = x_new
        f_prev = f_new
    if not converged:
        warnings.warn(f"solve_ball_qp hit iteration cap ({max_iter}); kkt={kkt:.3e}",
                      RuntimeWarning, stacklevel=2)
    info = QpInfo(it, converged, float(kkt))
    return (best_x, info) if return_info else best_x


def ball_qp_kkt(p: BallQpProblem, w):
    """Projected-gradient residual ||w - Proj(w - grad/L)|| * L."""
    lip = 2.0 * lambda_max_upper_bound(p.Q)
    if lip <= 0:
        lip = 1.0
    grad = 2.0 * p.Q @ w - p.b
    wp = _project_ball(w - grad / lip, np.sqrt(p.radius_sq))
    return float(lip * np.linalg.norm(w - wp))


# --------------------------------------------------------------------------
# small dense SDP
# --------------------------------------------------------------------------

@dataclass
class SmallSdpProblem:
    """min_x  x^T P x + q^T x
    s.t.   C_j + sum_i x_i G_{j,i} >= 0   for each LMI block j
           a_k^T x <= c_k                 for each linear inequality k
    """

    n_vars: int
    P: np.ndarray
    q: np.ndarray
    lmi_blocks: list = field(default_factory=list)
    lin_ineqs: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_vars > MAX_SDP_VARS:
            raise AssemblyError(f"SDP with {self.n_vars} variables exceeds {MAX_SDP_VARS}")
        self.P = np.asarray(self.P, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        blocks = []
        for C0, G in self.lmi_blocks:
            C0 = np.asarray(C0, dtype=float)
            G = np.asarray(G, dtype=float)
            if G.shape != (self.n_vars,) + C0.shape:
                raise AssemblyError("LMI coefficient stack has wrong shape")
            if np.max(np.abs(C0 - C0.T), initial=0) > 1e-12 or \
                    np.max(np.abs(G - np.swapaxes(G, 1, 2)), initial=0) > 1e-12:
                raise AssemblyError("LMI coefficient not symmetric")
            blocks.append((C0, G))
        self.lmi_blocks = blocks
        if self.lin_ineqs:
            self._A = np.array([np.asarray(a, dtype=float) for a, _ in self.lin_ineqs])
            self._c = np.array([float(c) for _, c in self.lin_ineqs])
        else:
            self._A = np.zeros((0, self.n_vars))
            self._c = np.zeros(0)

    def objective(self, x):
        return float(x @ self.P @ x + self.q @ x)

    def lmi_values(self, x):
        return [C0 + np.tensordot(x, G, axes=1) for C0, G in self.lmi_blocks]

    def slack(self, x):
        return self._c - self._A @ x

    def min_eigs(self, x):
        return [float(np.linalg.eigvalsh(S)[0]) for S in self.lmi_values(x)]

    @property
    def barrier_degree(self):
        return sum(C0.shape[0] for C0, _ in self.lmi_blocks) + len(self._c)


NEWTON_TOL = 1e-9


def _barrier_terms(p: SmallSdpProblem, x, need_hess=True):
    """Value, gradient and Hessian of -sum log det - sum log slack.

    Returns None when x is not strictly feasible.
    """
    val = 0.0
    n = p.n_vars
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    for C0, G in p.lmi_blocks:
        S = C0 + np.tensordot(x, G, axes=1)
        try:
            c = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return None
        val -= 2.0 * np.sum(np.log(np.diag(c)))
        Sinv = sla.cho_solve((c, True), np.eye(S.shape[0]))
        SG = np.einsum("ab,ibc->iac", Sinv, G)
        grad -= np.einsum("iaa->i", SG)
        if need_hess:
            hess += np.einsum("iab,jba->ij", SG, SG)
    s = p.slack(x)
    if np.any(s <= 0):
        return None
    val -= np.sum(np.log(s))
    grad += p._A.T @ (1.0 / s)
    if need_hess:
        hess += (p._A.T * (1.0 / s ** 2)) @ p._A
    return val, grad, hess


def _newton_step(H, g):
    # Jacobi scaling, then an eigen-solve with a relative floor: the variables
    # live on very different scales and barrier Hessians near the boundary can
    # have condition numbers beyond what an unscaled solve handles
    d = np.sqrt(np.abs(np.diag(H)))
    d[~(d > 0)] = 1.0
    Hs = H / d[:, None] / d[None, :]
    try:
        w, V = np.linalg.eigh(0.5 * (Hs + Hs.T))
    except np.linalg.LinAlgError as exc:
        raise SdpError("singular Newton system") from exc
    if not np.all(np.isfinite(w)) or w[-1] <= 0:
        raise SdpError("singular Newton system")
    w = np.maximum(w, 1e-15 * w[-1])
    return -(V @ ((V.T @ (g / d)) / w)) / d


def is_strictly_feasible(p: SmallSdpProblem, x):
    return _barrier_terms(p, x, need_hess=False) is not None


def solve_small_sdp(p: SmallSdpProblem, x0, tol=1e-6, mu=10.0, max_newton=100,
                    return_info=False):
    """Log-det barrier interior point method.

    ``x0`` must be strictly feasible. The outer loop multiplies the barrier
    weight t by ``mu`` until degree/t falls below tol*(1+|obj|).
    """
    x = np.array(x0, dtype=float)
    bt = _barrier_terms(p, x)
    if bt is None:
        raise SdpError("SDP start point is not strictly feasible; re-initialise")
    deg = p.barrier_degree
    obj_grad = 2.0 * p.P @ x + p.q
    gn = np.linalg.norm(obj_grad)
    t = np.linalg.norm(bt[1]) / gn if gn > 0 else 1.0
    t = min(max(t, 1e-8), 1e12)
    newton_total = 0
    while True:
        for _ in range(max_newton):
            val_b, g_b, h_b = _barrier_terms(p, x)
            f0 = t * p.objective(x) + val_b
            g = t * (2.0 * p.P @ x + p.q) + g_b
            H = t * 2.0 * p.P + h_b
            dx = _newton_step(H, g)
            dec = float(-g @ dx)
            newton_total += 1
            if dec / 2.0 <= NEWTON_TOL:
                break
            s = 1.0
            xn = None
            while s >= 1e-12:
                cand = x + s * dx
                btn = _barrier_terms(p, cand, need_hess=False)
                if btn is not None and t * p.objective(cand) + btn[0] <= f0 - 0.25 * s * dec:
                    xn = cand
                    break
                s *= 0.5
            if xn is None:
                # at the precision floor of an ill-conditioned Hessian
                if dec / 2.0 <= 1e3 * NEWTON_TOL:
                    break
                raise SdpError("barrier line search failed")
            x = xn
        if deg / t <= tol * (1.0 + abs(p.objective(x))):
            break
        t *= mu
    return (x, newton_total) if return_info else x


# --------------------------------------------------------------------------
# Cholesky solves
# --------------------------------------------------------------------------

class CholFactor:
    """Reusable Cholesky factorization of a Hermitian PD matrix."""

    def __init__(self, A):
        A = np.asarray(A)
        _check_hermitian(A, tol=1e-9)
        try:
            self._cf = sla.cho_factor(A, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("matrix not positive definite") from exc
        if np.any(np.real(np.diag(self._cf[0])) <= 0):
            raise np.linalg.LinAlgError("matrix not positive definite")

    def solve(self, B):
        return sla.cho_solve(self._cf, B, check_finite=False)


def chol_solve(A, B):
    return CholFactor(A).solve(np.asarray(B))
