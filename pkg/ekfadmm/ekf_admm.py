# File: ekfadmm/ekf_admm.py
"""
EKF-ADMM: Kalman correction intertwined with ADMM iterations.

The regularized correction
    min_x 1/2||x - xhat||^2_{P^{-1}} + 1/2||y - C x||^2_{R^{-1}} + g(x)
is split as x = nu and solved by n_a scaled-ADMM iterations per step. The
x-update is an ordinary Kalman correction with n_x extra "fake" measurements
nu - w of covariance I/rho, the nu-update is prox_{g/rho}, the dual w is carried
across steps without being reset.

Dual conventions differ between the two algorithms and are kept apart:
- step_naive / step_fast use the scaled dual (w <- w + x - nu).
- step_frozen uses the unscaled dual (w <- w + rho (x - nu)); w_scaled = w / rho.
"""
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as la
import structlog
from pydantic import BaseModel, Field

from ekfadmm import ekf, prox
from ekfadmm.core_models import RegSpec
from ekfadmm.ekf import FilterPhaseError, FilterState

log = structlog.get_logger(__name__)


class ScheduleError(ValueError):
    """Raised for nonpositive schedule inputs."""
    pass


# --- Types ---

@dataclass(frozen=True)
class AdmmState:
    """Consensus copy nu, dual w, penalty rho and inner iteration count n_a."""
    nu: np.ndarray
    w: np.ndarray
    rho: float
    n_a: int = 1

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.n_a < 1:
            raise ValueError(f"n_a must be >= 1, got {self.n_a}")
        if self.nu.shape != self.w.shape:
            raise ValueError(f"nu and w must have the same shape, got {self.nu.shape} and {self.w.shape}")

    @classmethod
    def start(cls, x0: np.ndarray, rho: float, n_a: int = 1) -> "AdmmState":
        """nu = x0, w = 0."""
        x0 = np.asarray(x0, dtype=float)
        return cls(nu=x0.copy(), w=np.zeros_like(x0), rho=float(rho), n_a=int(n_a))

    def with_rho(self, rho: float) -> "AdmmState":
        """New penalty, scaled dual rescaled so the unscaled dual rho * w is unchanged."""
        return replace(self, w=self.w * (self.rho / rho), rho=float(rho))


class FrozenConfig(BaseModel):
    """Hyper-parameters of the n_a = 1, frozen-covariance variant."""
    eta: float = Field(..., gt=0.0)
    rho: float = Field(..., gt=0.0)
    k_n: int = Field(0, ge=0, description="Covariance is updated only for k < k_n.")


class TheoremSchedule(BaseModel):
    """(eta, rho) guaranteeing sublinear regret, plus the bound values when computable."""
    eta: float
    rho: float
    rf_bound: Optional[float] = None
    rc_bound: Optional[float] = None


def _require_predicted(fs: FilterState) -> None:
    if fs.phase != "predicted":
        raise FilterPhaseError("EKF-ADMM step requires a predicted filter state")


def _finish(corrected: FilterState, Q: np.ndarray, forget: float) -> FilterState:
    """Forget, then predict."""
    return ekf.predict(ekf.forget(corrected, forget), Q)


# --- Multi-iteration step ---

def step_naive(
    fs: FilterState,
    st: AdmmState,
    C: np.ndarray,
    R: np.ndarray,
    Q: np.ndarray,
    y: np.ndarray,
    reg: RegSpec,
    forget: float = 1.0,
) -> Tuple[FilterState, AdmmState]:
    """
    One EKF-ADMM step with the augmented measurement [y; nu - w], C_bar = [C; I],
    R_bar = blkdiag(R, I/rho). The gain is computed once; every inner iteration
    restarts the x-update from x_{k|k-1}.
    """
    _require_predicted(fs)
    n = fs.n_x
    C = np.atleast_2d(np.asarray(C, dtype=float)).reshape(-1, n)
    R = np.atleast_2d(np.asarray(R, dtype=float)).reshape(C.shape[0], C.shape[0])
    y = np.atleast_1d(np.asarray(y, dtype=float))

    C_bar = np.vstack([C, np.eye(n)])
    R_bar = la.block_diag(R, np.eye(n) / st.rho)
    K = ekf.gain(fs.P, C_bar, R_bar)
    x_prior = fs.xhat
    base = x_prior - K @ (C_bar @ x_prior)

    nu, w = st.nu, st.w
    x = x_prior
    for _ in range(st.n_a):
        x = base + K @ np.concatenate([y, nu - w])
        nu = prox.prox_apply(reg, x + w, st.rho)
        w = w + x - nu

    P = ekf.joseph_update(fs.P, K, C_bar, R_bar)
    corrected = FilterState(xhat=x, P=P, phase="corrected")
    return _finish(corrected, Q, forget), replace(st, nu=nu, w=w)


def step_fast(
    fs: FilterState,
    st: AdmmState,
    C: np.ndarray,
    R: np.ndarray,
    Q: np.ndarray,
    y: np.ndarray,
    reg: RegSpec,
    forget: float = 1.0,
) -> Tuple[FilterState, AdmmState]:
    """
    Same contract as step_naive, O(n_x^3 + n_a n_x^2).

    The true measurement is absorbed once (P -> P'); the fake measurements then
    share the fixed gain K_f = P'(P' + I/rho)^{-1}, so the inner loop is only
    matrix-vector products. n_y = 0 skips the true-measurement stage.
    """
    _require_predicted(fs)
    n = fs.n_x
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x1, P1 = fs.xhat, fs.P
    if y.shape[0] > 0:
        C = np.atleast_2d(np.asarray(C, dtype=float)).reshape(-1, n)
        R = np.atleast_2d(np.asarray(R, dtype=float)).reshape(C.shape[0], C.shape[0])
        K1 = ekf.gain(fs.P, C, R)
        x1 = fs.xhat + K1 @ (y - C @ fs.xhat)
        P1 = ekf.joseph_update(fs.P, K1, C, R)

    eye = np.eye(n)
    S_f = ekf.symmetrize(P1 + eye / st.rho)
    K_f = la.cho_solve(ekf.cho_factor_spd(S_f, what="fake-measurement covariance"), P1, check_finite=False).T

    nu, w = st.nu, st.w
    x = x1
    for _ in range(st.n_a):
        x = x1 + K_f @ (nu - w - x1)
        nu = prox.prox_apply(reg, x + w, st.rho)
        w = w + x - nu

    P = ekf.joseph_update(P1, K_f, eye, eye / st.rho)
    corrected = FilterState(xhat=x, P=P, phase="corrected")
    return _finish(corrected, Q, forget), replace(st, nu=nu, w=w)


def rho_tv(k: int, N: int, lam: float) -> float:
    """rho_k = 10^(k/N - 2) * lam: loose fake measurements early, tighter later."""
    if N < 1 or not 0 <= k <= N:
        raise ScheduleError(f"need 0 <= k <= N and N >= 1, got k={k}, N={N}")
    if not lam > 0:
        raise ScheduleError(f"lambda must be positive, got {lam}")
    return 10.0 ** (k / N - 2.0) * lam


# --- Frozen-covariance step (n_a = 1) ---

def step_frozen(
    fs: FilterState,
    st: AdmmState,
    cfg: FrozenConfig,
    C: np.ndarray,
    R: np.ndarray,
    Q: np.ndarray,
    y: np.ndarray,
    reg: RegSpec,
    k: int,
) -> Tuple[FilterState, AdmmState]:
    """
    x_{k+1} = argmin 1/2||y - C x||^2_{R^{-1}} + w^T(x - nu) + rho/2||x - nu||^2 + eta/2||x - x_k||^2_{P^{-1}}.

    The quadratic prior rho I + eta P^{-1} has covariance M = P (rho P + eta I)^{-1}
    and mean m = (rho P + eta I)^{-1} (P (rho nu - w) + eta x_k), both from one
    Cholesky factor of rho P + eta I; x_{k+1} is then a Kalman correction of (m, M)
    with (C, R). `st.w` is the unscaled dual; `st.rho` is ignored in favour of cfg.rho.
    """
    n = fs.n_x
    C = np.atleast_2d(np.asarray(C, dtype=float)).reshape(-1, n)
    R = np.atleast_2d(np.asarray(R, dtype=float)).reshape(C.shape[0], C.shape[0])
    y = np.atleast_1d(np.asarray(y, dtype=float))
    rho, eta = cfg.rho, cfg.eta
    eye = np.eye(n)

    factor = ekf.cho_factor_spd(ekf.symmetrize(rho * fs.P + eta * eye), what="proximal metric")
    M = ekf.symmetrize(la.cho_solve(factor, fs.P, check_finite=False))
    m = la.cho_solve(factor, fs.P @ (rho * st.nu - st.w) + eta * fs.xhat, check_finite=False)
    if C.shape[0] > 0:
        x_next = m + ekf.gain(M, C, R) @ (y - C @ m)
    else:
        x_next = m

    nu = prox.prox_apply(reg, x_next + st.w / rho, rho)
    w = st.w + rho * (x_next - nu)

    if k < cfg.k_n:
        C_bar = np.vstack([C, eye])
        R_bar = la.block_diag(R, eye / rho)
        P_corr = ekf.joseph_update(fs.P, ekf.gain(fs.P, C_bar, R_bar), C_bar, R_bar)
        P = ekf.symmetrize(P_corr + Q)
    else:
        P = fs.P
    return FilterState(xhat=x_next, P=P, phase="predicted"), replace(st, nu=nu, w=w, rho=rho)


def theorem_schedule(
    G_f: float,
    D_x: float,
    alpha: float,
    N: int,
    D_nu: Optional[float] = None,
    M_kn: Optional[float] = None,
    F: Optional[float] = None,
) -> TheoremSchedule:
    """
    eta = G_f sqrt(N) / (D_x sqrt(2 alpha)), rho = sqrt(N).

    `alpha` is the strong-convexity constant of the P_k^{-1} metric (not the
    forgetting factor). When D_nu, M_kn and F are given, also returns the
    objective and constraint regret bounds, both O(sqrt(N)).
    """
    for name, value in (("G_f", G_f), ("D_x", D_x), ("alpha", alpha), ("N", N)):
        if not value > 0:
            raise ScheduleError(f"{name} must be positive, got {value}")
    sqrt_n = math.sqrt(N)
    denom = D_x * math.sqrt(2.0 * alpha)
    schedule = TheoremSchedule(eta=G_f * sqrt_n / denom, rho=sqrt_n)
    if D_nu is not None and M_kn is not None and F is not None:
        for name, value in (("D_nu", D_nu), ("M_kn", M_kn), ("F", F)):
            if value < 0:
                raise ScheduleError(f"{name} must be nonnegative, got {value}")
        schedule.rf_bound = (
            sqrt_n * D_nu / 2.0
            + G_f * D_x * sqrt_n / math.sqrt(2.0 * alpha)
            + G_f * sqrt_n * (D_x ** 2 + M_kn) / denom
        )
        schedule.rc_bound = 2.0 * F * sqrt_n + D_nu + 2.0 * G_f * (D_x ** 2 + M_kn) / denom
    return schedule


def estimate_theorem_constants(
    grad_norms: np.ndarray,
    x_star: np.ndarray,
    nu_star: np.ndarray,
    P: np.ndarray,
    excess_losses: np.ndarray,
    P0: Optional[np.ndarray] = None,
) -> dict:
    """
    Post-hoc estimates of the regret-bound constants from a finished run.

    grad_norms: ||grad f_k(x_k)|| per step; P: the (frozen) covariance;
    excess_losses: per-step f_k(x_{k+1}) + g(nu_{k+1}) - (f_k(x*) + g(nu*)).
    alpha_strong is the smallest eigenvalue of P^{-1}, i.e. 1 / lambda_max(P).
    D_x^2 = 1/2 ||x_star||^2 in the P0^{-1} metric; pass x* - x_0 as x_star for a
    nonzero start. P0 defaults to P.
    """
    lam_max = float(la.eigvalsh(P)[-1])
    factor = ekf.cho_factor_spd(P if P0 is None else P0, what="initial covariance")
    quad = float(x_star @ la.cho_solve(factor, x_star, check_finite=False))
    return {
        "G_f": float(np.max(grad_norms)) if len(grad_norms) else 0.0,
        "D_x": math.sqrt(max(0.5 * quad, 0.0)),
        "D_nu": float(nu_star @ nu_star),
        "F": float(max(0.0, -np.min(excess_losses))) if len(excess_losses) else 0.0,
        "alpha_strong": 1.0 / lam_max,
    }
