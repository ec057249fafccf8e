# File: ekfadmm/datasets.py
"""
Seeded data generators for the three experiment families.

Randomness comes from numpy's PCG64 bit generator. One SeedSequence(seed) is
split into independent child streams, one per purpose, in the fixed order of
STREAMS, so adding a consumer of one stream never shifts another.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import structlog

from ekfadmm.model import Sample

log = structlog.get_logger(__name__)

STREAMS: Tuple[str, ...] = ("data", "noise", "init")


def rng_streams(seed: int) -> Dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(child)) for name, child in zip(STREAMS, children)}


@dataclass
class Dataset:
    """
    N samples stored column-wise. `inputs` is the (N, n_y, n_x) stack of C_k for
    linear data, the (N, n_z) regressor matrix otherwise.
    """
    kind: str
    inputs: np.ndarray
    Y: np.ndarray
    x_true: Optional[np.ndarray] = None
    switch_points: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return self.Y.shape[0]

    @property
    def linear(self) -> bool:
        return self.inputs.ndim == 3

    def sample(self, k: int) -> Sample:
        if self.linear:
            return Sample(k=k, y=self.Y[k], C=self.inputs[k])
        return Sample(k=k, y=self.Y[k], z=self.inputs[k])

    def samples(self) -> Iterator[Sample]:
        for k in range(len(self)):
            yield self.sample(k)

    def subset(self, start: int, stop: int) -> "Dataset":
        return Dataset(kind=self.kind, inputs=self.inputs[start:stop], Y=self.Y[start:stop], x_true=self.x_true)

    def segment_starts(self) -> List[int]:
        """Start index of every regime: [0] plus the switch points."""
        return [0, *self.switch_points]


# --- Target functions ---

def static_target(z: np.ndarray) -> np.ndarray:
    """(z1^2 - exp(z2/10)) / (3 + |z1 + z2|), row-wise."""
    z = np.atleast_2d(z)
    z1, z2 = z[:, 0], z[:, 1]
    return (z1 ** 2 - np.exp(z2 / 10.0)) / (3.0 + np.abs(z1 + z2))


def switching_branch(k: np.ndarray, N: int) -> np.ndarray:
    """1 for k <= N/3, 2 for N/3 < k <= 2N/3, 3 afterwards."""
    k = np.asarray(k)
    return np.where(k <= N / 3, 1, np.where(k <= 2 * N / 3, 2, 3))


def switching_target(z: np.ndarray, k: np.ndarray, N: int) -> np.ndarray:
    """The time-varying system: exponent z2/10 then z2/2, then 0.3 on z1^2."""
    z = np.atleast_2d(z)
    z1, z2 = z[:, 0], z[:, 1]
    branch = switching_branch(k, N)
    coef = np.where(branch == 3, 0.3, 1.0)
    expo = np.where(branch == 1, z2 / 10.0, z2 / 2.0)
    return (coef * z1 ** 2 - np.exp(expo)) / (3.0 + np.abs(z1 + z2))


# --- Generators ---

def gen_lasso(seed: int, N: int, n_x: int = 3, n_y: int = 2, noise: float = 1e-3) -> Dataset:
    """
    y_k = C_k x_true + r_k with x_true and C_k standard normal, r_k ~ N(0, noise I).
    `noise` is the variance.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    rngs = rng_streams(seed)
    x_true = rngs["data"].standard_normal(n_x)
    C = rngs["data"].standard_normal((N, n_y, n_x))
    r = np.sqrt(noise) * rngs["noise"].standard_normal((N, n_y))
    Y = np.einsum("kij,j->ki", C, x_true) + r
    log.debug("Generated lasso dataset", N=N, n_x=n_x, n_y=n_y, noise=noise)
    return Dataset(kind="lasso", inputs=C, Y=Y, x_true=x_true)


def _regressors(rng: np.random.Generator, N: int, z_low: float, z_high: float) -> np.ndarray:
    return rng.uniform(z_low, z_high, size=(N, 2))


def gen_static(seed: int, N: int, noise_sigma: float = 0.01, z_low: float = -1.0, z_high: float = 1.0) -> Dataset:
    """Static nonlinear target with z ~ U[z_low, z_high]^2 and N(0, sigma^2) noise."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    rngs = rng_streams(seed)
    Z = _regressors(rngs["data"], N, z_low, z_high)
    Y = static_target(Z) + noise_sigma * rngs["noise"].standard_normal(N)
    return Dataset(kind="static", inputs=Z, Y=Y[:, None])


def gen_switching(
    seed: int, N: int, noise_sigma: float = 0.01, z_low: float = -1.0, z_high: float = 1.0
) -> Dataset:
    """Three-regime target; N is rounded down to a multiple of 3."""
    N3 = (N // 3) * 3
    if N3 < 3:
        raise ValueError(f"switching data needs N >= 3, got {N}")
    if N3 != N:
        log.warning("Rounding N down to a multiple of 3", requested=N, used=N3)
    rngs = rng_streams(seed)
    Z = _regressors(rngs["data"], N3, z_low, z_high)
    k = np.arange(N3)
    Y = switching_target(Z, k, N3) + noise_sigma * rngs["noise"].standard_normal(N3)
    branch = switching_branch(k, N3)
    switches = [int(np.argmax(branch == b)) for b in (2, 3)]
    return Dataset(kind="switching", inputs=Z, Y=Y[:, None], switch_points=switches)
