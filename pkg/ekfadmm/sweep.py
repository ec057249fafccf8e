# File: ekfadmm/sweep.py
"""
Multi-seed sweeps and filter comparisons.

Each seed runs in its own process (spawn context, so no numpy or logging
state is inherited) and writes into its own subdirectory. Only the resolved
config goes in and only the RunSummary comes back.
"""
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import structlog

from ekfadmm import report
from ekfadmm.config import get_settings
from ekfadmm.core_models import ExperimentConfig, RunSummary, SweepRow
from ekfadmm.runner import preset_config, run_experiment

log = structlog.get_logger(__name__)


def _run_worker(raw_config: Dict) -> Dict:
    """Process entry point: plain dicts in and out so arguments pickle cleanly."""
    config = ExperimentConfig.model_validate(raw_config)
    result = run_experiment(config)
    return result.summary.model_dump()


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


def summarize(label: str, summaries: Sequence[RunSummary]) -> SweepRow:
    """
    Mean and sample standard deviation across runs. Loss, Mse and sparsity are
    taken at the final consensus copy, Cv at the final estimate.
    """
    if not summaries:
        raise ValueError("cannot summarize an empty sweep")
    return SweepRow(
        label=label,
        runs=len(summaries),
        loss=_mean_std([s.final_nu.loss for s in summaries]),
        mse=_mean_std([s.final_nu.mse for s in summaries]),
        sparsity=_mean_std([s.sparsity for s in summaries]),
        cv=_mean_std([s.final_x.cv for s in summaries]),
        time=_mean_std([s.wall_time for s in summaries]),
        regret_f_per_n=_mean_std([s.regret_f / s.N for s in summaries]),
    )


def run_seeds(
    base: ExperimentConfig, seeds: Sequence[int], out_dir: Path, workers: Optional[int] = None
) -> List[RunSummary]:
    """Runs `base` once per seed into out_dir/seed_<s>; results come back in seed order."""
    settings = get_settings()
    workers = workers or settings.sweep.workers
    configs = [
        base.model_copy(update={"seed": seed, "output_dir": Path(out_dir) / f"seed_{seed}"}).model_dump()
        for seed in seeds
    ]
    log.info("Sweep starting", experiment=base.experiment, filter=base.filter, seeds=len(configs), workers=workers)
    if workers <= 1 or len(configs) <= 1:
        raw = [_run_worker(c) for c in configs]
    else:
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [pool.submit(_run_worker, c) for c in configs]
            raw = [f.result(timeout=settings.sweep.timeout_s) for f in futures]
    return [RunSummary.model_validate(r) for r in raw]


def run_sweep(
    base: ExperimentConfig, seeds: Sequence[int], out_dir: Path, workers: Optional[int] = None
) -> SweepRow:
    """Repeats one configuration over seeds; writes sweep.csv and sweep_summary.txt."""
    out = report.ensure_output_dir(Path(out_dir))
    summaries = run_seeds(base, seeds, out, workers)
    row = summarize(base.filter, summaries)
    report.write_sweep_csv(out / "sweep.csv", seeds, summaries)
    report.write_sweep_summary(out / "sweep_summary.txt", [row])
    log.info("Sweep finished", filter=base.filter, runs=row.runs, loss=row.loss[0], out_dir=str(out))
    return row


def compare(
    preset: str,
    filters: Sequence[str],
    seeds: Sequence[int],
    out_dir: Path,
    N: Optional[int] = None,
    workers: Optional[int] = None,
    **overrides,
) -> List[SweepRow]:
    """
    Runs the same seeded datasets through several filters; writes one
    comparison table (compare.txt) plus per-filter sweep files.
    """
    out = report.ensure_output_dir(Path(out_dir))
    rows = []
    for name in filters:
        config = preset_config(preset, N=N, filter=name, output_dir=out / name, **overrides)
        rows.append(run_sweep(config, seeds, out / name, workers))
    report.write_sweep_summary(out / "compare.txt", rows)
    return rows
