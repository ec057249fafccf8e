# File: ekfadmm/prox.py
"""
Regularizer values g(x) and proximal operators prox_{g/rho}.

All operators are separable and cost O(n_x). Box infeasibility is reported as
IEEE +inf (math.inf), never as a large finite sentinel.
"""
import math

import numpy as np

from ekfadmm.core_models import RegSpec


class ProxParameterError(ValueError):
    """Raised for rho <= 0 or inverted box bounds."""
    pass


def reg_value(reg: RegSpec, x: np.ndarray) -> float:
    """g(x) as an extended real."""
    x = np.asarray(x, dtype=float)
    if reg.kind == "none":
        return 0.0
    if reg.kind == "l1":
        return reg.lam * float(np.sum(np.abs(x)))
    if reg.kind == "l0":
        return reg.lam * float(np.count_nonzero(x))
    return 0.0 if is_feasible(reg, x) else math.inf


def is_feasible(reg: RegSpec, x: np.ndarray) -> bool:
    if reg.kind != "box":
        return True
    lo, hi = reg.bounds()
    x = np.asarray(x, dtype=float)
    return bool(np.all(x >= lo) and np.all(x <= hi))


def soft_threshold(v: np.ndarray, kappa: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def hard_threshold(v: np.ndarray, threshold_sq: float) -> np.ndarray:
    # ties (v^2 == threshold_sq) go to zero
    return np.where(v * v > threshold_sq, v, 0.0)


def project_box(x: np.ndarray, lo, hi) -> np.ndarray:
    """Euclidean projection onto {lo <= x <= hi}."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ProxParameterError("lo must be <= hi elementwise")
    return np.clip(np.asarray(x, dtype=float), lo, hi)


def prox_apply(reg: RegSpec, v: np.ndarray, rho: float) -> np.ndarray:
    """argmin_nu g(nu) + (rho/2)||nu - v||^2, elementwise."""
    if not rho > 0:
        raise ProxParameterError(f"rho must be positive, got {rho}")
    v = np.asarray(v, dtype=float)
    if reg.kind == "none":
        return v.copy()
    if reg.kind == "l1":
        return soft_threshold(v, reg.lam / rho)
    if reg.kind == "l0":
        return hard_threshold(v, 2.0 * reg.lam / rho)
    lo, hi = reg.bounds()
    return project_box(v, lo, hi)
