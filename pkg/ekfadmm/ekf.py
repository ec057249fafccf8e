# File: ekfadmm/ekf.py
"""
Kalman / extended Kalman correction and prediction for parameter estimation.

The parameter vector is the filter state with random-walk dynamics
x_{k+1} = x_k + q_k and linearized measurements y_k = C_k x_k + r_k.
Covariances are propagated in square form, corrected with the Joseph form and
re-symmetrized after every update. Innovation covariances are factored with
Cholesky; no explicit inverse is ever formed.
"""
from dataclasses import dataclass, replace
from typing import List, Literal, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la
import structlog

from ekfadmm.config import get_settings

log = structlog.get_logger(__name__)

Phase = Literal["predicted", "corrected"]
CovLike = Union[float, np.ndarray]


class FilterPhaseError(RuntimeError):
    """Raised when correct/predict are called out of order."""
    pass


class FilterDivergenceError(RuntimeError):
    """Raised when a covariance factorization fails (positive definiteness lost)."""
    pass


class NoiseSpecError(ValueError):
    """Raised for non-SPD or wrongly sized noise covariances."""
    pass


# --- Types ---

@dataclass(frozen=True)
class FilterState:
    """Parameter estimate and covariance, tagged with the half of the recursion it came from."""
    xhat: np.ndarray
    P: np.ndarray
    phase: Phase = "predicted"

    @property
    def n_x(self) -> int:
        return self.xhat.shape[0]


def as_covariance(value: CovLike, n: int) -> np.ndarray:
    """Expands the scalar shorthand s into s*I(n); validates shape otherwise."""
    if np.isscalar(value):
        if value < 0:
            raise NoiseSpecError(f"covariance scale must be nonnegative, got {value}")
        return float(value) * np.eye(n)
    M = np.asarray(value, dtype=float)
    if M.shape != (n, n):
        raise NoiseSpecError(f"covariance must be {n}x{n}, got {M.shape}")
    return M


@dataclass(frozen=True)
class NoiseSpec:
    """Process noise Q and measurement noise R, each a matrix or a scalar multiple of I."""
    Q: CovLike = 1e-4
    R: CovLike = 1.0

    def Q_matrix(self, n_x: int) -> np.ndarray:
        return as_covariance(self.Q, n_x)

    def R_matrix(self, n_y: int) -> np.ndarray:
        return as_covariance(self.R, n_y)


def initial_state(x0: np.ndarray, P0: CovLike) -> FilterState:
    x0 = np.asarray(x0, dtype=float).copy()
    return FilterState(xhat=x0, P=as_covariance(P0, x0.shape[0]), phase="predicted")


# --- Helpers ---

def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _check_positive_definite(P: np.ndarray) -> None:
    if not get_settings().debug_checks:
        return
    smallest = la.eigvalsh(P, subset_by_index=[0, 0])[0]
    if smallest <= 0:
        log.error("Covariance lost positive definiteness", min_eigenvalue=float(smallest))
        raise FilterDivergenceError(f"covariance not positive definite (min eigenvalue {smallest:.3e})")


def cho_factor_spd(S: np.ndarray, what: str = "innovation covariance"):
    try:
        return la.cho_factor(S, lower=True, check_finite=False)
    except la.LinAlgError as e:
        raise FilterDivergenceError(f"Cholesky factorization of the {what} failed: {e}") from e


def _check_dims(P: np.ndarray, C: np.ndarray, R: np.ndarray) -> None:
    n_y, n_x = C.shape
    if P.shape != (n_x, n_x) or R.shape != (n_y, n_y):
        raise NoiseSpecError(f"inconsistent shapes: P {P.shape}, C {C.shape}, R {R.shape}")


# --- Operations ---

def gain(P: np.ndarray, C: np.ndarray, R: np.ndarray) -> np.ndarray:
    """K = P C^T (R + C P C^T)^{-1}, by a Cholesky solve of the innovation covariance."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    _check_dims(P, C, R)
    if C.shape[0] == 0:
        return np.zeros((P.shape[0], 0))
    PCt = P @ C.T
    S = symmetrize(R + C @ PCt)
    return la.cho_solve(cho_factor_spd(S), PCt.T, check_finite=False).T


def joseph_update(P: np.ndarray, K: np.ndarray, C: np.ndarray, R: np.ndarray) -> np.ndarray:
    """(I - K C) P (I - K C)^T + K R K^T, re-symmetrized."""
    A = np.eye(P.shape[0]) - K @ C
    return symmetrize(A @ P @ A.T + K @ R @ K.T)


def information_covariance(P: np.ndarray, C: np.ndarray, R: np.ndarray) -> np.ndarray:
    """
    P_{k|k} from the information form (P^{-1} + C^T R^{-1} C)^{-1}, evaluated as
    P - P C^T S^{-1} C P with S factored. Kept as an oracle for the Joseph form.
    """
    PCt = P @ C.T
    S = symmetrize(R + C @ PCt)
    return symmetrize(P - PCt @ la.cho_solve(cho_factor_spd(S), PCt.T, check_finite=False))


def correct(state: FilterState, C: np.ndarray, R: np.ndarray, y: np.ndarray) -> FilterState:
    """Measurement update: xhat += K (y - C xhat), P by the Joseph form."""
    if state.phase != "predicted":
        raise FilterPhaseError("correct() requires a predicted state")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (C.shape[0],):
        raise NoiseSpecError(f"measurement must have shape ({C.shape[0]},), got {y.shape}")
    K = gain(state.P, C, R)
    xhat = state.xhat + K @ (y - C @ state.xhat)
    P = joseph_update(state.P, K, C, R)
    _check_positive_definite(P)
    return FilterState(xhat=xhat, P=P, phase="corrected")


def predict(state: FilterState, Q: np.ndarray) -> FilterState:
    """Time update of the random-walk model: xhat unchanged, P += Q."""
    if state.phase != "corrected":
        raise FilterPhaseError("predict() requires a corrected state")
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape != state.P.shape:
        raise NoiseSpecError(f"Q must be {state.P.shape}, got {Q.shape}")
    return FilterState(xhat=state.xhat, P=symmetrize(state.P + Q), phase="predicted")


def forget(state: FilterState, alpha: float) -> FilterState:
    """Covariance inflation P <- P / alpha, discounting older data."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"forgetting factor must be in (0, 1], got {alpha}")
    if alpha == 1.0:
        return state
    return replace(state, P=state.P / alpha)


# --- Batch Oracle ---

def _whiten(cov: np.ndarray, M: np.ndarray) -> np.ndarray:
    """L^{-1} M with cov = L L^T, so (L^{-1}M)^T (L^{-1}M) = M^T cov^{-1} M."""
    L = la.cholesky(cov, lower=True)
    return la.solve_triangular(L, M, lower=True)


def batch_solve(
    x0: np.ndarray,
    P0: np.ndarray,
    steps: Sequence[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]],
    k: int,
) -> np.ndarray:
    """
    Joint least-squares estimate of the whole trajectory x_0..x_{k+1}.

    Minimizes ||x_0 - x0||^2_{P0^{-1}} + sum_{i<=k} ||y_i - C_i x_i||^2_{R_i^{-1}}
    + ||x_{i+1} - x_i||^2_{Q_i^{-1}} by assembling the block-tridiagonal normal
    equations densely. `steps[i]` is (C_i, R_i, y_i, Q_i). Returns a (k+2, n_x)
    array; rows k and k+1 equal the recursive filter's x_{k|k} and x_{k+1|k}.
    Oracle use only: cost is cubic in (k+2) n_x.
    """
    if k < 0 or len(steps) < k + 1:
        raise ValueError(f"need at least k+1={k + 1} steps, got {len(steps)}")
    x0 = np.asarray(x0, dtype=float)
    n = x0.shape[0]
    T = k + 2
    H = np.zeros((T * n, T * n))
    b = np.zeros(T * n)

    def blk(i: int) -> slice:
        return slice(i * n, (i + 1) * n)

    W0 = _whiten(np.asarray(P0, dtype=float), np.eye(n))
    H[blk(0), blk(0)] += W0.T @ W0
    b[blk(0)] += W0.T @ (W0 @ x0)

    for i in range(k + 1):
        C, R, y, Q = (np.atleast_2d(steps[i][0]), np.atleast_2d(steps[i][1]),
                      np.atleast_1d(steps[i][2]), np.atleast_2d(steps[i][3]))
        Wc = _whiten(R, C)
        wy = _whiten(R, y)
        H[blk(i), blk(i)] += Wc.T @ Wc
        b[blk(i)] += Wc.T @ wy
        Wq = _whiten(Q, np.eye(n))
        Qi = Wq.T @ Wq
        H[blk(i), blk(i)] += Qi
        H[blk(i + 1), blk(i + 1)] += Qi
        H[blk(i), blk(i + 1)] -= Qi
        H[blk(i + 1), blk(i)] -= Qi

    factor = cho_factor_spd(symmetrize(H), what="normal matrix")
    return la.cho_solve(factor, b, check_finite=False).reshape(T, n)


def run_recursive(x0: np.ndarray, P0: np.ndarray, steps: Sequence[Tuple], k: int) -> List[FilterState]:
    """Recursive counterpart of batch_solve: the corrected state after every step."""
    state = initial_state(x0, P0)
    corrected: List[FilterState] = []
    for i in range(k + 1):
        C, R, y, Q = steps[i]
        state = correct(state, C, R, y)
        corrected.append(state)
        state = predict(state, Q)
    return corrected
