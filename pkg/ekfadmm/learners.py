# File: ekfadmm/learners.py
"""
Online learners: one class per filter kind, all behind the same interface.

A learner owns the mutable state of one run (filter state, ADMM state) and
advances it one sample at a time. Nonlinear models are linearized around the
current prior estimate before every step.
"""
from typing import Tuple

import numpy as np
import scipy.linalg as la

from ekfadmm import ekf, prox
from ekfadmm.core_models import Hyper, ModelSpec, RegSpec
from ekfadmm.ekf import FilterState, NoiseSpec
from ekfadmm.ekf_admm import AdmmState, FrozenConfig, rho_tv, step_fast, step_frozen, step_naive
from ekfadmm.model import Sample, linearize

# keeps the l1 pseudo-measurement variance positive at x_i = 0
L1_SMOOTHING = 1e-3


class OnlineLearner:
    """Abstract interface for online learners."""
    name = "abstract"

    def __init__(self, model: ModelSpec, reg: RegSpec, hyper: Hyper, x0: np.ndarray, N: int, n_y: int):
        self.model = model
        self.reg = reg
        self.hyper = hyper
        self.N = N
        noise = NoiseSpec(Q=hyper.Q_scale, R=hyper.R_scale)
        self.Q = noise.Q_matrix(x0.shape[0])
        self.R = noise.R_matrix(n_y)
        self.fs = ekf.initial_state(x0, hyper.P0_scale)

    @property
    def estimate(self) -> np.ndarray:
        """Current parameter estimate x_k."""
        return self.fs.xhat

    @property
    def consensus(self) -> np.ndarray:
        """Current consensus copy nu_k; the estimate itself for unsplit filters."""
        return self.fs.xhat

    @property
    def covariance(self) -> np.ndarray:
        return self.fs.P

    def step(self, k: int, sample: Sample) -> np.ndarray:
        """Consumes sample k and returns the Jacobian C_k it was linearized with."""
        raise NotImplementedError

    def _linearize(self, sample: Sample) -> Tuple[np.ndarray, np.ndarray]:
        return linearize(self.model, self.fs.xhat, sample)


class PlainEkf(OnlineLearner):
    """EKF with no regularization handling: correct, forget, predict."""
    name = "plain_ekf"

    def step(self, k: int, sample: Sample) -> np.ndarray:
        C, y = self._linearize(sample)
        corrected = ekf.correct(self.fs, C, self.R, y)
        self.fs = ekf.predict(ekf.forget(corrected, self.hyper.alpha_forget), self.Q)
        return C


class EkfClip(PlainEkf):
    """Plain EKF followed by clipping the estimate onto the box."""
    name = "ekf_clip"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if self.reg.kind != "box":
            raise ValueError("ekf_clip requires a box regularizer")

    def step(self, k: int, sample: Sample) -> np.ndarray:
        C = super().step(k, sample)
        lo, hi = self.reg.bounds()
        self.fs = FilterState(xhat=prox.project_box(self.fs.xhat, lo, hi), P=self.fs.P, phase=self.fs.phase)
        return C


class EkfL1(PlainEkf):
    """
    EKF with the l1 penalty folded into the correction as n_x pseudo-measurements
    0 = x_i of variance (|xhat_i| + eps) / lambda: the quadratic whose slope matches
    lambda |x_i| at the prior estimate. Estimates shrink but are never exactly zero.
    """
    name = "ekf_l1"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if self.reg.kind != "l1" or not self.reg.lam > 0:
            raise ValueError("ekf_l1 requires an l1 regularizer with lambda > 0")

    def step(self, k: int, sample: Sample) -> np.ndarray:
        C, y = self._linearize(sample)
        n = self.fs.n_x
        r = (np.abs(self.fs.xhat) + L1_SMOOTHING) / self.reg.lam
        C_bar = np.vstack([C, np.eye(n)])
        R_bar = la.block_diag(self.R, np.diag(r))
        corrected = ekf.correct(self.fs, C_bar, R_bar, np.concatenate([y, np.zeros(n)]))
        self.fs = ekf.predict(ekf.forget(corrected, self.hyper.alpha_forget), self.Q)
        return C


class EkfAdmm(OnlineLearner):
    """EKF-ADMM with a constant penalty rho (scaled dual)."""
    name = "ekf_admm"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.admm = AdmmState.start(self.fs.xhat, self._rho(0), self.hyper.n_a)
        self._step = step_fast if self.hyper.fast_path else step_naive

    @property
    def consensus(self) -> np.ndarray:
        return self.admm.nu

    def _rho(self, k: int) -> float:
        return self.hyper.rho

    def step(self, k: int, sample: Sample) -> np.ndarray:
        C, y = self._linearize(sample)
        rho = self._rho(k)
        if rho != self.admm.rho:
            self.admm = self.admm.with_rho(rho)
        self.fs, self.admm = self._step(
            self.fs, self.admm, C, self.R, self.Q, y, self.reg, forget=self.hyper.alpha_forget
        )
        return C


class EkfAdmmTv(EkfAdmm):
    """EKF-ADMM with rho_k = 10^(k/N - 2) lambda."""
    name = "ekf_admm_tv"

    def __init__(self, model: ModelSpec, reg: RegSpec, *args, **kwargs):
        if not reg.lam > 0:
            raise ValueError("ekf_admm_tv needs a regularizer with lambda > 0")
        super().__init__(model, reg, *args, **kwargs)

    def _rho(self, k: int) -> float:
        return rho_tv(k, self.N, self.reg.lam)


class FrozenAdmm(OnlineLearner):
    """n_a = 1 variant whose covariance stops updating after k_n steps (unscaled dual)."""
    name = "frozen_admm"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.cfg = FrozenConfig(eta=self.hyper.eta, rho=self.hyper.rho, k_n=self._k_n())
        self.admm = AdmmState.start(self.fs.xhat, self.cfg.rho, 1)

    def _k_n(self) -> int:
        return self.hyper.k_n

    @property
    def consensus(self) -> np.ndarray:
        return self.admm.nu

    def step(self, k: int, sample: Sample) -> np.ndarray:
        C, y = self._linearize(sample)
        self.fs, self.admm = step_frozen(self.fs, self.admm, self.cfg, C, self.R, self.Q, y, self.reg, k)
        return C


class OnlineAdmmBaseline(FrozenAdmm):
    """Online ADMM: the frozen variant with k_n = 0, i.e. a constant metric P = P0_scale I."""
    name = "online_admm"

    def _k_n(self) -> int:
        return 0
