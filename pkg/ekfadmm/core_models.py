# File: ekfadmm/core_models.py
"""
Core data models for online learning experiments.

Everything that crosses a file boundary (config files, summaries, sweep tables)
is a pydantic model. Hot-loop numerical state lives in the dataclasses of
ekf.py / ekf_admm.py instead.
"""
import math
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# --- Model & Regularizer Specs ---

ModelKind = Literal["linear_tv", "mlp"]
RegKind = Literal["none", "l1", "l0", "box"]
FilterKind = Literal["ekf_admm", "ekf_admm_tv", "frozen_admm", "online_admm", "ekf_clip", "ekf_l1", "plain_ekf"]
ExperimentKind = Literal["lasso", "static_l1", "static_bounds", "switching_l0", "custom"]
DataKind = Literal["lasso", "static", "switching"]

Bound = Union[float, List[float]]


class ModelSpec(BaseModel):
    """
    The parametric map h(k, z; x).

    For `linear_tv` the map is C_k x and `n_in` is unused; `n_params` and `n_out`
    fix the dimensions of C_k. For `mlp` the parameter count follows from the layers.
    """
    model_config = ConfigDict(frozen=True)

    kind: ModelKind = "mlp"
    n_in: int = Field(2, ge=1, description="Regressor dimension n_z (mlp only).")
    hidden: List[int] = Field(default_factory=lambda: [8, 8], description="Hidden layer widths, tanh activation.")
    n_out: int = Field(1, ge=1, description="Output dimension n_y.")
    n_params: Optional[int] = Field(None, ge=1, description="Parameter count n_x (linear_tv only).")

    @field_validator("hidden")
    @classmethod
    def _widths_positive(cls, v: List[int]) -> List[int]:
        if any(width < 1 for width in v):
            raise ValueError("all layer widths must be >= 1")
        return v

    @model_validator(mode="after")
    def _linear_needs_size(self) -> "ModelSpec":
        if self.kind == "linear_tv" and self.n_params is None:
            raise ValueError("linear_tv model requires n_params")
        return self


class RegSpec(BaseModel):
    """Which regularizer g is active, with its parameters."""
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    kind: RegKind = "none"
    lam: float = Field(0.0, ge=0.0, description="Weight lambda for l1 / l0.")
    lo: Bound = Field(-math.inf, description="Lower bound(s) for box.")
    hi: Bound = Field(math.inf, description="Upper bound(s) for box.")

    @model_validator(mode="after")
    def _bounds_ordered(self) -> "RegSpec":
        try:
            lo, hi = np.broadcast_arrays(np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float))
        except ValueError as e:
            raise ValueError("lo and hi vectors must have the same length") from e
        if np.any(lo > hi):
            raise ValueError("lo must be <= hi elementwise")
        return self

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Box bounds as float arrays (scalars stay 0-d and broadcast)."""
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)


# --- Experiment Configuration ---

class Hyper(BaseModel):
    """Filter hyper-parameters. Scales multiply identity matrices."""
    rho: float = Field(1.0, gt=0.0)
    n_a: int = Field(1, ge=1, description="Inner ADMM iterations per step.")
    eta: float = Field(1.0, gt=0.0, description="Proximity weight of the frozen-P variant.")
    k_n: int = Field(0, ge=0, description="Step at which the frozen variant stops updating P.")
    alpha_forget: float = Field(1.0, gt=0.0, le=1.0, description="Forgetting factor; 1 disables forgetting.")
    Q_scale: float = Field(1e-4, gt=0.0)
    R_scale: float = Field(1.0, gt=0.0)
    P0_scale: float = Field(100.0, gt=0.0)
    fast_path: bool = Field(True, description="Use the separated true/fake measurement step.")


class ExperimentConfig(BaseModel):
    """A fully resolved, reproducible experiment description."""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    experiment: ExperimentKind = "custom"
    data: Optional[DataKind] = Field(None, description="Data generator; implied by experiment unless custom.")
    N: int = Field(2000, ge=1)
    seed: int = Field(0, ge=0, description="Root of the PRNG seed sequence.")
    model: ModelSpec = Field(default_factory=ModelSpec)
    reg: RegSpec = Field(default_factory=RegSpec)
    filter: FilterKind = "ekf_admm"
    hyper: Hyper = Field(default_factory=Hyper)
    noise_sigma: float = Field(0.01, ge=0.0, description="Measurement noise std (variance for lasso data).")
    z_low: float = -1.0
    z_high: float = 1.0
    output_dir: Path = Path("results/run")

    @model_validator(mode="after")
    def _resolve_data(self) -> "ExperimentConfig":
        implied = {"lasso": "lasso", "static_l1": "static", "static_bounds": "static", "switching_l0": "switching"}
        if self.data is None:
            if self.experiment == "custom":
                raise ValueError("custom experiment requires a data generator")
            self.data = implied[self.experiment]
        if self.z_low >= self.z_high:
            raise ValueError("z_low must be < z_high")
        if self.data == "lasso" and self.model.kind != "linear_tv":
            raise ValueError("lasso data requires a linear_tv model")
        if self.data != "lasso" and self.model.kind != "mlp":
            raise ValueError(f"{self.data} data requires an mlp model")
        return self


# --- Results ---

class PerfIndices(BaseModel):
    """Quality of a parameter vector on a whole dataset."""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    loss: float
    mse: float
    reg: float
    cv: float
    sparsity: float = Field(..., description="Fraction of exactly-zero entries.")


class RunSummary(BaseModel):
    """End-of-run figures written to summary.txt."""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    experiment: str
    filter: str
    N: int
    seed: int
    wall_time: float
    final_x: PerfIndices
    final_nu: PerfIndices
    sparsity: float
    regret_f: float
    regret_f_x: float
    regret_c: float
    hindsight_objective: float
    hindsight_tolerance_met: bool
    approximate: bool = Field(False, description="True when the comparator is only a stationary point.")


class SweepRow(BaseModel):
    """One line of a multi-seed table: mean and standard deviation per metric."""
    label: str
    runs: int
    loss: tuple[float, float]
    mse: tuple[float, float]
    sparsity: tuple[float, float]
    cv: tuple[float, float]
    time: tuple[float, float]
    regret_f_per_n: tuple[float, float]
