import pytest

from ekfadmm.core_models import PerfIndices, RunSummary
from ekfadmm.runner import preset_config
from ekfadmm.sweep import compare, run_seeds, run_sweep, summarize


def _summary(loss, wall_time=1.0):
    perf = PerfIndices(loss=loss, mse=loss, reg=0.0, cv=0.0, sparsity=0.0)
    return RunSummary(
        experiment="lasso",
        filter="frozen_admm",
        N=10,
        seed=0,
        wall_time=wall_time,
        final_x=perf,
        final_nu=perf,
        sparsity=0.0,
        regret_f=5.0,
        regret_f_x=5.0,
        regret_c=0.0,
        hindsight_objective=1.0,
        hindsight_tolerance_met=True,
    )


def test_summarize_uses_sample_standard_deviation():
    row = summarize("frozen_admm", [_summary(1.0), _summary(3.0)])
    assert row.runs == 2
    assert row.loss == (2.0, pytest.approx(2 ** 0.5))
    assert row.regret_f_per_n == (0.5, 0.0)


def test_single_run_has_zero_spread():
    assert summarize("x", [_summary(1.0)]).loss == (1.0, 0.0)


def test_empty_sweep_is_rejected():
    with pytest.raises(ValueError):
        summarize("x", [])


def test_sweep_writes_per_seed_runs_and_tables(tmp_path):
    row = run_sweep(preset_config("lasso", N=40), [0, 1, 2], tmp_path, workers=1)
    assert row.runs == 3
    assert row.label == "frozen_admm"
    assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 4
    assert "frozen_admm" in (tmp_path / "sweep_summary.txt").read_text()
    for seed in (0, 1, 2):
        assert (tmp_path / f"seed_{seed}" / "summary.txt").is_file()


def test_compare_runs_each_filter_on_the_same_seeds(tmp_path):
    rows = compare("static-bounds", ["ekf_admm", "ekf_clip"], [0, 1], tmp_path, N=15, workers=1)
    assert [r.label for r in rows] == ["ekf_admm", "ekf_clip"]
    table = (tmp_path / "compare.txt").read_text()
    assert "ekf_admm" in table and "ekf_clip" in table
    assert (tmp_path / "ekf_clip" / "seed_1" / "trace.csv").is_file()


@pytest.mark.slow
def test_parallel_sweep_matches_sequential(tmp_path):
    base = preset_config("lasso", N=40)
    sequential = run_seeds(base, [0, 1], tmp_path / "seq", workers=1)
    parallel = run_seeds(base, [0, 1], tmp_path / "par", workers=2)
    assert [s.regret_f for s in parallel] == [s.regret_f for s in sequential]
    assert (tmp_path / "seq" / "seed_1" / "trace.csv").read_bytes() == (
        tmp_path / "par" / "seed_1" / "trace.csv"
    ).read_bytes()
