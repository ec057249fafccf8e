# File: ekfadmm/selftest.py
"""
In-package oracle-equivalence suites.

Each suite compares a fast implementation against an independent oracle on
seeded random instances and reports the worst discrepancy it saw.
"""
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np
import structlog

from ekfadmm import ekf, prox
from ekfadmm.core_models import ModelSpec, RegSpec
from ekfadmm.ekf_admm import AdmmState, step_fast, step_naive, theorem_schedule
from ekfadmm.model import Sample, model_eval, model_jacobian, mlp_init, param_count

log = structlog.get_logger(__name__)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    cases: int
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.name}: {self.cases} cases, worst {self.worst:.3e} "
            f"(tol {self.tolerance:.0e}), {self.seconds:.2f}s"
        )


def _spd(rng: np.random.Generator, n: int, scale: float = 1.0, floor: float = 0.1) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return scale * (A @ A.T / n + floor * np.eye(n))


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


# --- Suites ---

def batch_recursive(cases: int, seed: int = 0) -> Tuple[float, int]:
    """Recursive filter vs the dense joint least-squares solve."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n_x, n_y, N = int(rng.integers(1, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 51))
        x0 = rng.standard_normal(n_x)
        P0 = _spd(rng, n_x)
        steps = [
            (rng.standard_normal((n_y, n_x)), _spd(rng, n_y), rng.standard_normal(n_y), _spd(rng, n_x, 0.1))
            for _ in range(N)
        ]
        recursive = ekf.run_recursive(x0, P0, steps, N - 1)[-1].xhat
        batch = ekf.batch_solve(x0, P0, steps, N - 1)[N - 1]
        worst = max(worst, _rel(recursive, batch))
    return worst, cases


def fast_naive(cases: int, seed: int = 1) -> Tuple[float, int]:
    """Separated true/fake measurement step vs the augmented-measurement step."""
    rng = np.random.default_rng(seed)
    regs = [RegSpec(kind="none"), RegSpec(kind="l1", lam=0.3), RegSpec(kind="box", lo=-0.5, hi=0.5)]
    worst = 0.0
    for i in range(cases):
        n_x, n_y = int(rng.integers(1, 21)), int(rng.integers(1, 4))
        n_a = (1, 5, 20)[i % 3]
        reg = regs[int(rng.integers(0, len(regs)))]
        fs = ekf.initial_state(rng.standard_normal(n_x), _spd(rng, n_x))
        rho = float(rng.uniform(0.1, 10.0))
        st = AdmmState(nu=rng.standard_normal(n_x), w=0.1 * rng.standard_normal(n_x), rho=rho, n_a=n_a)
        C, R, Q = rng.standard_normal((n_y, n_x)), _spd(rng, n_y), _spd(rng, n_x, 1e-3)
        y = rng.standard_normal(n_y)
        fs_f, st_f = step_fast(fs, st, C, R, Q, y, reg)
        fs_n, st_n = step_naive(fs, st, C, R, Q, y, reg)
        worst = max(
            worst,
            _rel(fs_f.xhat, fs_n.xhat),
            _rel(fs_f.P, fs_n.P),
            _rel(st_f.nu, st_n.nu),
            _rel(st_f.w, st_n.w),
        )
    return worst, cases


def prox_grid(cases: int, seed: int = 2) -> Tuple[float, int]:
    """Scalar prox outputs vs brute-force grid minimization, per regularizer."""
    rng = np.random.default_rng(seed)
    grid = np.linspace(-6.0, 6.0, 24001)
    worst = 0.0
    for kind in ("l1", "l0", "box"):
        for _ in range(cases):
            v, rho = float(rng.uniform(-3, 3)), float(rng.uniform(0.1, 10.0))
            if kind == "box":
                lo = float(rng.uniform(-2, 1))
                reg = RegSpec(kind="box", lo=lo, hi=lo + float(rng.uniform(0, 2)))
                u = np.concatenate([grid, [reg.lo, reg.hi]])
                g = np.where((u >= reg.lo) & (u <= reg.hi), 0.0, np.inf)
            else:
                reg = RegSpec(kind=kind, lam=float(rng.uniform(0, 2)))
                u = grid
                g = reg.lam * (np.abs(u) if kind == "l1" else (u != 0.0))
            best = float(np.min(g + 0.5 * rho * (u - v) ** 2))
            p = prox.prox_apply(reg, np.array([v]), rho)
            value = prox.reg_value(reg, p) + 0.5 * rho * float(p[0] - v) ** 2
            worst = max(worst, value - best)
    return max(worst, 0.0), 3 * cases


def jacobian_fd(cases: int, seed: int = 3) -> Tuple[float, int]:
    """Analytic mlp Jacobian vs central finite differences."""
    rng = np.random.default_rng(seed)
    spec = ModelSpec()
    if param_count(spec) != 105:
        return math.inf, 0
    h = 1e-6
    worst = 0.0
    for _ in range(cases):
        x = mlp_init(spec, rng) + 0.1 * rng.standard_normal(105)
        sample = Sample(k=0, y=np.zeros(1), z=rng.uniform(-1, 1, 2))
        J = model_jacobian(spec, x, sample)
        J_fd = np.empty_like(J)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = h
            J_fd[:, j] = (model_eval(spec, x + e, sample) - model_eval(spec, x - e, sample)) / (2 * h)
        worst = max(worst, float(np.linalg.norm(J - J_fd) / max(np.linalg.norm(J), 1e-12)))
    return worst, cases


def degenerate_limit(steps: int = 100, seed: int = 4) -> Tuple[float, int]:
    """No regularizer and rho -> 0 reduces EKF-ADMM to the plain filter."""
    rng = np.random.default_rng(seed)
    n_x, n_y = 4, 2
    R, Q = np.eye(n_y), 1e-4 * np.eye(n_x)
    x_true = rng.standard_normal(n_x)
    plain = ekf.initial_state(np.zeros(n_x), 1.0)
    split = plain
    st = AdmmState.start(np.zeros(n_x), 1e-10)
    worst = 0.0
    for _ in range(steps):
        C = rng.standard_normal((n_y, n_x))
        y = C @ x_true + 0.01 * rng.standard_normal(n_y)
        plain = ekf.predict(ekf.correct(plain, C, R, y), Q)
        split, st = step_fast(split, st, C, R, Q, y, RegSpec(kind="none"))
        worst = max(worst, _rel(split.xhat, plain.xhat), _rel(split.P, plain.P))
    return worst, steps


def joseph_information(cases: int, seed: int = 5) -> Tuple[float, int]:
    """Joseph-form covariance vs the information-form oracle at the optimal gain."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n_x, n_y = int(rng.integers(1, 8)), int(rng.integers(1, 4))
        P, R = _spd(rng, n_x), _spd(rng, n_y)
        C = rng.standard_normal((n_y, n_x))
        worst = max(worst, _rel(ekf.joseph_update(P, ekf.gain(P, C, R), C, R), ekf.information_covariance(P, C, R)))
    return worst, cases


def theorem_values(cases: int, seed: int = 6) -> Tuple[float, int]:
    """Closed-form schedule values, and bounds that vanish relative to N."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        G, D, a = (float(v) for v in rng.uniform(0.1, 10.0, 3))
        N = int(rng.integers(1, 10 ** 6))
        s = theorem_schedule(G, D, a, N)
        expected_eta = G * math.sqrt(N) / (D * math.sqrt(2 * a))
        worst = max(worst, abs(s.eta - expected_eta) / expected_eta, abs(s.rho - math.sqrt(N)) / math.sqrt(N))
        ratios = [
            theorem_schedule(G, D, a, n, D_nu=1.0, M_kn=1.0, F=1.0) for n in (10 ** 2, 10 ** 4, 10 ** 6)
        ]
        rf = [r.rf_bound / n for r, n in zip(ratios, (10 ** 2, 10 ** 4, 10 ** 6))]
        rc = [r.rc_bound / n for r, n in zip(ratios, (10 ** 2, 10 ** 4, 10 ** 6))]
        if not (rf[0] > rf[1] > rf[2] and rc[0] > rc[1] > rc[2]):
            worst = math.inf
    return worst, cases


# name -> (suite, full size, quick size, tolerance)
SUITES: Dict[str, Tuple[Callable[[int], Tuple[float, int]], int, int, float]] = {
    "batch_recursive": (batch_recursive, 50, 10, 1e-8),
    "fast_naive": (fast_naive, 200, 30, 1e-9),
    "prox_grid": (prox_grid, 1000, 100, 1e-9),
    "jacobian_fd": (jacobian_fd, 100, 10, 1e-5),
    "degenerate_limit": (degenerate_limit, 100, 100, 1e-6),
    "joseph_information": (joseph_information, 100, 20, 1e-9),
    "theorem_values": (theorem_values, 20, 20, 1e-12),
}


def run_selftest(quick: bool = False) -> List[SuiteResult]:
    results = []
    for name, (suite, full, reduced, tol) in SUITES.items():
        started = time.perf_counter()
        try:
            worst, cases = suite(reduced if quick else full)
        except Exception:
            log.exception("Selftest suite raised", suite=name)
            worst, cases = math.inf, 0
        result = SuiteResult(
            name=name,
            passed=worst <= tol,
            worst=worst,
            tolerance=tol,
            cases=cases,
            seconds=time.perf_counter() - started,
        )
        log.debug("Selftest suite finished", suite=name, passed=result.passed, worst=worst)
        results.append(result)
    return results
