# File: ekfadmm/runner.py
"""
Experiment runner: presets, the single-epoch online loop, hindsight
comparators and result files.

A run streams its dataset exactly once. Before every step the runner records
the loss of the current estimate x_k and the regularizer at x_k and nu_k;
after it, x_{k+1}. Everything that depends on the whole stream (regret curves,
hindsight comparator, checkpoint curves) is computed once the stream ends.
"""
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import structlog
from prometheus_client import Counter, Summary
from pydantic import ValidationError

from ekfadmm import prox, report
from ekfadmm.config import ConfigurationError, Settings, first_error, get_settings, validate_experiment
from ekfadmm.core_models import ExperimentConfig, Hyper, ModelSpec, RegSpec, RunSummary
from ekfadmm.datasets import Dataset, gen_lasso, gen_static, gen_switching, rng_streams
from ekfadmm.ekf_admm import TheoremSchedule, estimate_theorem_constants, theorem_schedule
from ekfadmm.factories.learner_engine import create_learner
from ekfadmm.model import mlp_init, model_eval, save_params_csv
from ekfadmm.regret import (
    HindsightSolution,
    RegretCurve,
    SegmentedHindsight,
    Trace,
    constraint_regret,
    hindsight_prox_grad,
    objective_regret,
    perf_indices,
    segment_hindsight,
)
from ekfadmm.utils import checkpoints

log = structlog.get_logger(__name__)

# --- Metrics ---
FILTER_STEPS = Counter("ekfadmm_filter_steps_total", "Samples consumed by online learners", ["filter"])
STEP_LATENCY = Summary("ekfadmm_step_latency_seconds", "Latency of one online learner step", ["filter"])
RUNS = Counter("ekfadmm_runs_total", "Completed experiment runs", ["experiment", "filter", "status"])


# --- Presets ---

def _lasso(N: int, seed: int) -> ExperimentConfig:
    root = math.sqrt(N)
    return ExperimentConfig(
        experiment="lasso",
        N=N,
        seed=seed,
        model=ModelSpec(kind="linear_tv", n_params=3, n_out=2),
        reg=RegSpec(kind="l1", lam=0.1),
        filter="frozen_admm",
        hyper=Hyper(rho=1e4 * root, eta=1e-6 * root, k_n=1000, Q_scale=1e-6, R_scale=1e-3, P0_scale=1.0),
        noise_sigma=1e-3,
        output_dir=get_settings().output_root / "lasso",
    )


def _static_l1(N: int, seed: int) -> ExperimentConfig:
    lam = 1e-4
    return ExperimentConfig(
        experiment="static_l1",
        N=N,
        seed=seed,
        reg=RegSpec(kind="l1", lam=lam),
        filter="ekf_admm",
        hyper=Hyper(rho=10 * lam, n_a=1, Q_scale=1e-4, R_scale=1.0, P0_scale=100.0),
        # batch-optimal Mse near 1e-3 = sigma^2 / 2
        noise_sigma=0.045,
        output_dir=get_settings().output_root / "static-l1",
    )


def _static_bounds(N: int, seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        experiment="static_bounds",
        N=N,
        seed=seed,
        reg=RegSpec(kind="box", lo=-0.5, hi=0.5),
        filter="ekf_admm",
        hyper=Hyper(rho=1.0, n_a=5, Q_scale=1e-4, R_scale=1.0, P0_scale=100.0),
        # batch-optimal Mse near 0.12 = sigma^2 / 2
        noise_sigma=0.5,
        output_dir=get_settings().output_root / "static-bounds",
    )


def _switching_l0(N: int, seed: int) -> ExperimentConfig:
    lam = 1e-4
    return ExperimentConfig(
        experiment="switching_l0",
        N=N,
        seed=seed,
        reg=RegSpec(kind="l0", lam=lam),
        filter="ekf_admm",
        hyper=Hyper(rho=1e3 * lam, n_a=1, alpha_forget=0.9, Q_scale=1e-4, R_scale=1.0, P0_scale=100.0),
        output_dir=get_settings().output_root / "switching-l0",
    )


PRESETS: Dict[str, Tuple[Callable[[int, int], ExperimentConfig], int]] = {
    "lasso": (_lasso, 2000),
    "static-l1": (_static_l1, 20000),
    "static-bounds": (_static_bounds, 20000),
    "switching-l0": (_switching_l0, 30000),
}

# Filters `compare` runs when none are named.
COMPARE_FILTERS: Dict[str, List[str]] = {
    "lasso": ["frozen_admm", "online_admm", "ekf_admm"],
    "static-l1": ["ekf_admm", "ekf_admm_tv", "online_admm", "ekf_l1", "plain_ekf"],
    "static-bounds": ["ekf_admm", "online_admm", "ekf_clip"],
    "switching-l0": ["ekf_admm", "plain_ekf"],
}

# Constant metric of the online ADMM baseline.
ONLINE_ADMM_P = 1e-2


def apply_overrides(
    config: ExperimentConfig,
    *,
    N: Optional[int] = None,
    seed: Optional[int] = None,
    filter: Optional[str] = None,
    lam: Optional[float] = None,
    rho: Optional[float] = None,
    n_a: Optional[int] = None,
    alpha_forget: Optional[float] = None,
    naive: bool = False,
    output_dir: Optional[Path] = None,
) -> ExperimentConfig:
    """Returns a re-validated copy of config with the given fields replaced."""
    raw = config.model_dump()
    hyper = raw["hyper"]
    for key, value in (("N", N), ("seed", seed), ("filter", filter), ("output_dir", output_dir)):
        if value is not None:
            raw[key] = value
    if filter == "online_admm":
        hyper["P0_scale"] = ONLINE_ADMM_P
    if lam is not None:
        raw["reg"]["lam"] = lam
    for key, value in (("rho", rho), ("n_a", n_a), ("alpha_forget", alpha_forget)):
        if value is not None:
            hyper[key] = value
    if naive:
        hyper["fast_path"] = False
    return validate_experiment(raw)


def _require_preset(name: str) -> None:
    if name not in PRESETS:
        raise ConfigurationError(f"preset: unknown preset '{name}'; valid presets: {', '.join(PRESETS)}")


def compare_filters(name: str) -> List[str]:
    """Default filter line-up of a preset's comparison table."""
    _require_preset(name)
    return list(COMPARE_FILTERS[name])


def preset_config(name: str, N: Optional[int] = None, seed: int = 0, **overrides) -> ExperimentConfig:
    """
    Builds a preset at length N (the preset default when None) and applies
    overrides. Raises ConfigurationError for unknown presets or invalid overrides.
    """
    _require_preset(name)
    builder, default_n = PRESETS[name]
    try:
        base = builder(default_n if N is None else N, seed)
    except ValidationError as e:
        raise ConfigurationError(first_error(e)) from e
    return apply_overrides(base, **overrides)


# --- Setup ---

def build_dataset(config: ExperimentConfig) -> Dataset:
    if config.data == "lasso":
        return gen_lasso(
            config.seed, config.N, n_x=config.model.n_params, n_y=config.model.n_out, noise=config.noise_sigma
        )
    if config.data == "static":
        return gen_static(config.seed, config.N, config.noise_sigma, config.z_low, config.z_high)
    return gen_switching(config.seed, config.N, config.noise_sigma, config.z_low, config.z_high)


def initial_params(config: ExperimentConfig) -> np.ndarray:
    """Xavier init from the "init" stream for mlp, zeros for linear_tv; projected onto a box regularizer."""
    if config.model.kind == "mlp":
        x0 = mlp_init(config.model, rng_streams(config.seed)["init"])
    else:
        x0 = np.zeros(config.model.n_params)
    if config.reg.kind == "box":
        lo, hi = config.reg.bounds()
        x0 = prox.project_box(x0, lo, hi)
    return x0


def loss_weight(config: ExperimentConfig) -> float:
    """f_k weight: R^{-1} for linear_tv, unit for mlp."""
    return 1.0 / config.hyper.R_scale if config.model.kind == "linear_tv" else 1.0


# --- Results ---

@dataclass
class RunResult:
    config: ExperimentConfig
    dataset: Dataset
    trace: Trace
    r_f: RegretCurve
    r_f_x: RegretCurve
    r_c: RegretCurve
    hindsight: Union[HindsightSolution, SegmentedHindsight]
    summary: RunSummary
    final_x: np.ndarray
    final_nu: np.ndarray
    covariance: np.ndarray
    curves: List[Dict[str, float]] = field(default_factory=list)
    theorem: Optional[Dict[str, float]] = None

    @property
    def nu_path(self) -> np.ndarray:
        """nu_0..nu_N as rows."""
        return np.vstack([self.trace.nu, self.final_nu])


def _stream(config: ExperimentConfig, dataset: Dataset) -> Tuple[Trace, np.ndarray, np.ndarray, np.ndarray]:
    x0 = initial_params(config)
    learner = create_learner(config, x0, dataset.Y.shape[1])
    trace = Trace(len(dataset), x0.shape[0])
    weight = loss_weight(config)
    latency = STEP_LATENCY.labels(config.filter)
    for sample in dataset.samples():
        x_k = learner.estimate.copy()
        nu_k = learner.consensus.copy()
        resid = sample.y - model_eval(config.model, x_k, sample)
        started = time.perf_counter()
        C = learner.step(sample.k, sample)
        elapsed = time.perf_counter() - started
        latency.observe(elapsed)
        trace.record(
            sample.k,
            x_k,
            nu_k,
            0.5 * weight * float(resid @ resid),
            prox.reg_value(config.reg, x_k),
            prox.reg_value(config.reg, nu_k),
            learner.estimate.copy(),
            elapsed,
            grad_norm=weight * float(np.linalg.norm(C.T @ resid)),
        )
    FILTER_STEPS.labels(config.filter).inc(trace.size)
    return trace, learner.estimate.copy(), learner.consensus.copy(), learner.covariance.copy()


def _hindsight(
    config: ExperimentConfig, dataset: Dataset, start: np.ndarray, settings: Settings
) -> Union[HindsightSolution, SegmentedHindsight]:
    weight = loss_weight(config)
    x0 = start if config.model.kind == "mlp" else None
    tol, max_iter = settings.hindsight.tol, settings.hindsight.max_iter
    if dataset.switch_points:
        return segment_hindsight(
            dataset, dataset.segment_starts(), config.model, config.reg,
            tol=tol, max_iter=max_iter, x0=x0, weight=weight,
        )
    return hindsight_prox_grad(dataset, config.model, config.reg, tol=tol, max_iter=max_iter, x0=x0, weight=weight)


def _tolerance_met(hs: Union[HindsightSolution, SegmentedHindsight]) -> bool:
    if isinstance(hs, SegmentedHindsight):
        return all(s.tolerance_met for s in hs.segments)
    return hs.tolerance_met


def _curves(config: ExperimentConfig, dataset: Dataset, trace: Trace, nu_path: np.ndarray, points: int) -> List[Dict]:
    weight = loss_weight(config)
    rows = []
    for n in checkpoints(trace.size, points):
        px = perf_indices(trace.x[n], dataset, config.model, config.reg, weight)
        pn = perf_indices(nu_path[n], dataset, config.model, config.reg, weight)
        rows.append({
            "n": n,
            "loss_x": px.loss, "mse_x": px.mse, "reg_x": px.reg, "cv_x": px.cv,
            "loss_nu": pn.loss, "mse_nu": pn.mse, "reg_nu": pn.reg, "cv_nu": pn.cv,
        })
    return rows


def theorem_constants(result: RunResult) -> Optional[Dict[str, float]]:
    """
    Post-hoc regret-bound constants for frozen-covariance runs against a single
    comparator, plus the (eta, rho) schedule they imply. None otherwise.
    """
    hs = result.hindsight
    if result.config.filter not in ("frozen_admm", "online_admm") or not isinstance(hs, HindsightSolution):
        return None
    config, trace = result.config, result.trace
    weight = loss_weight(config)
    nu_path = result.nu_path
    excess = np.empty(trace.size)
    for k in range(trace.size):
        sample = result.dataset.sample(k)
        resid = sample.y - model_eval(config.model, trace.x[k + 1], sample)
        excess[k] = 0.5 * weight * float(resid @ resid) + prox.reg_value(config.reg, nu_path[k + 1]) - hs.step_losses[k]
    x0 = trace.x[0]
    P0 = config.hyper.P0_scale * np.eye(x0.shape[0])
    constants = estimate_theorem_constants(
        trace.grad_norm, hs.x_star - x0, hs.x_star, result.covariance, excess, P0=P0
    )
    if constants["G_f"] > 0 and constants["D_x"] > 0:
        schedule: TheoremSchedule = theorem_schedule(
            constants["G_f"], constants["D_x"], constants["alpha_strong"], trace.size
        )
        constants.update(eta=schedule.eta, rho=schedule.rho)
    return constants


def simulate(config: ExperimentConfig, settings: Optional[Settings] = None) -> RunResult:
    """Runs one experiment in memory. The dataset may shorten N (switching data)."""
    settings = settings or get_settings()
    dataset = build_dataset(config)
    if len(dataset) != config.N:
        config = config.model_copy(update={"N": len(dataset)})
    log.info("Run starting", experiment=config.experiment, filter=config.filter, N=config.N, seed=config.seed)

    trace, final_x, final_nu, covariance = _stream(config, dataset)
    hs = _hindsight(config, dataset, final_nu, settings)
    r_f = objective_regret(trace, hs, g_at="nu")
    r_f_x = objective_regret(trace, hs, g_at="x")
    r_c = constraint_regret(trace)

    weight = loss_weight(config)
    perf_x = perf_indices(final_x, dataset, config.model, config.reg, weight)
    perf_nu = perf_indices(final_nu, dataset, config.model, config.reg, weight)
    summary = RunSummary(
        experiment=config.experiment,
        filter=config.filter,
        N=config.N,
        seed=config.seed,
        wall_time=float(trace.wall_time.sum()),
        final_x=perf_x,
        final_nu=perf_nu,
        sparsity=perf_nu.sparsity,
        regret_f=r_f.final,
        regret_f_x=r_f_x.final,
        regret_c=r_c.final,
        hindsight_objective=hs.objective,
        hindsight_tolerance_met=_tolerance_met(hs),
        approximate=hs.approximate,
    )
    result = RunResult(
        config=config,
        dataset=dataset,
        trace=trace,
        r_f=r_f,
        r_f_x=r_f_x,
        r_c=r_c,
        hindsight=hs,
        summary=summary,
        final_x=final_x,
        final_nu=final_nu,
        covariance=covariance,
    )
    result.curves = _curves(config, dataset, trace, result.nu_path, settings.report.curve_points)
    result.theorem = theorem_constants(result)
    log.info(
        "Run finished",
        filter=config.filter,
        N=config.N,
        wall_time=summary.wall_time,
        loss=perf_nu.loss,
        regret_f_per_n=r_f.final / config.N,
    )
    return result


def write_results(result: RunResult, out_dir: Path, settings: Optional[Settings] = None) -> Path:
    """Writes every result file of a run into out_dir."""
    settings = settings or get_settings()
    out = report.ensure_output_dir(Path(out_dir))
    report.write_config_json(out / "config.json", result.config)
    report.write_trace_csv(out / "trace.csv", result.trace, settings.report.trace_vectors_max)
    report.write_regret_csv(out / "regret.csv", result.r_f, result.r_c, result.r_f_x)
    report.write_summary(out / "summary.txt", result.summary)
    report.write_curves_csv(out / "curves.csv", result.curves)

    n = [row["n"] for row in result.curves]
    report.write_chart(
        out / "perf.svg",
        [(f"{key}(x)", n, [row[f"{key}_x"] for row in result.curves]) for key in ("loss", "mse", "reg")],
        title=f"{result.config.experiment} / {result.config.filter}: performance",
        log_y=settings.report.log_scale,
    )
    report.write_chart(
        out / "regret.svg",
        [
            ("R_f(n)/n", result.r_f.n, result.r_f.per_sample),
            ("R_c(n)/n", result.r_c.n, result.r_c.per_sample),
        ],
        title=f"{result.config.experiment} / {result.config.filter}: sample regret"
        + (" (approximate)" if result.summary.approximate else ""),
        log_y=settings.report.log_scale,
    )
    if settings.report.save_params:
        try:
            save_params_csv(out / "params.csv", result.final_x, result.final_nu)
        except OSError as e:
            raise report.ExperimentIOError(f"cannot write params.csv: {e}") from e
    if result.theorem is not None:
        report.write_key_values(out / "theorem.txt", result.theorem)
    log.info("Results written", out_dir=str(out))
    return out


def run_experiment(config: ExperimentConfig, out_dir: Optional[Path] = None) -> RunResult:
    """Runs one experiment and writes its files to out_dir (config.output_dir when None)."""
    try:
        result = simulate(config)
        write_results(result, out_dir or config.output_dir)
    except Exception:
        RUNS.labels(config.experiment, config.filter, "failed").inc()
        raise
    RUNS.labels(config.experiment, config.filter, "ok").inc()
    return result
