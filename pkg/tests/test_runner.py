import json
import math

import numpy as np
import pytest

from ekfadmm import prox, report
from ekfadmm.config import ConfigurationError, get_settings
from ekfadmm.runner import (
    COMPARE_FILTERS,
    ONLINE_ADMM_P,
    PRESETS,
    compare_filters,
    preset_config,
    run_experiment,
    simulate,
)

RESULT_FILES = ["config.json", "trace.csv", "regret.csv", "summary.txt", "curves.csv", "perf.svg", "regret.svg"]


def test_unknown_preset_lists_valid_ones():
    with pytest.raises(ConfigurationError) as info:
        preset_config("nosuch")
    message = str(info.value)
    assert message.startswith("preset:")
    for name in PRESETS:
        assert name in message


def test_lasso_preset_scales_with_N():
    config = preset_config("lasso", N=400)
    assert config.filter == "frozen_admm"
    assert config.hyper.rho == pytest.approx(1e4 * 20.0)
    assert config.hyper.eta == pytest.approx(1e-6 * 20.0)
    assert config.output_dir == get_settings().output_root / "lasso"


def test_preset_defaults():
    assert preset_config("static-l1").N == 20000
    assert preset_config("switching-l0").hyper.alpha_forget == 0.9


def test_static_presets_noise_levels():
    assert preset_config("static-l1").noise_sigma == 0.045
    assert preset_config("static-bounds").noise_sigma == 0.5


def test_compare_lineups_cover_every_preset():
    assert set(COMPARE_FILTERS) == set(PRESETS)
    assert "ekf_l1" in compare_filters("static-l1")
    assert "ekf_clip" in compare_filters("static-bounds")
    with pytest.raises(ConfigurationError, match="^preset:"):
        compare_filters("nosuch")


def test_overrides_are_validated():
    config = preset_config("static-l1", N=10, filter="online_admm", lam=0.5, n_a=4, naive=True)
    assert config.reg.lam == 0.5
    assert config.hyper.n_a == 4
    assert config.hyper.fast_path is False
    assert config.hyper.P0_scale == ONLINE_ADMM_P
    with pytest.raises(ConfigurationError, match="^hyper.alpha_forget"):
        preset_config("static-l1", N=10, alpha_forget=2.0)


def test_lasso_run_writes_every_file(tmp_path):
    result = run_experiment(preset_config("lasso", N=200, output_dir=tmp_path / "run"))
    out = tmp_path / "run"
    for name in RESULT_FILES + ["params.csv", "theorem.txt"]:
        assert (out / name).is_file(), name

    trace_lines = (out / "trace.csv").read_text().splitlines()
    assert len(trace_lines) == 201
    assert trace_lines[0].endswith("x_0,x_1,x_2,nu_0,nu_1,nu_2")
    assert len((out / "regret.csv").read_text().splitlines()) == 201

    summary = report.parse_summary((out / "summary.txt").read_text())
    assert summary["N"] == "200"
    assert summary["approximate"] == "false"
    assert summary["hindsight_tolerance_met"] == "true"
    assert float(summary["regret_f"]) == pytest.approx(result.r_f.final)

    theorem = report.parse_summary((out / "theorem.txt").read_text())
    assert float(theorem["rho"]) == pytest.approx(math.sqrt(200))
    # P0 = I and x_0 = 0
    assert result.theorem["D_x"] == pytest.approx(math.sqrt(0.5) * np.linalg.norm(result.hindsight.x_star))

    config = json.loads((out / "config.json").read_text())
    assert config["filter"] == "frozen_admm"
    assert config["reg"]["kind"] == "l1"


def test_runs_are_reproducible(tmp_path):
    config = preset_config("static-l1", N=40, seed=5)
    run_experiment(config, tmp_path / "a")
    run_experiment(config, tmp_path / "b")
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    assert (tmp_path / "a" / "curves.csv").read_bytes() == (tmp_path / "b" / "curves.csv").read_bytes()


def test_seed_changes_the_run(tmp_path):
    a = simulate(preset_config("static-l1", N=20, seed=1))
    b = simulate(preset_config("static-l1", N=20, seed=2))
    assert not np.array_equal(a.trace.f, b.trace.f)


def test_box_consensus_stays_feasible():
    result = simulate(preset_config("static-bounds", N=40))
    reg = result.config.reg
    assert all(prox.is_feasible(reg, nu) for nu in result.nu_path)
    assert result.summary.final_nu.cv == 0.0
    assert math.isfinite(result.r_f.final)
    assert result.theorem is None


def test_switching_run_uses_segments():
    result = simulate(preset_config("switching-l0", N=31))
    assert result.config.N == 30
    assert result.summary.N == 30
    assert result.summary.approximate
    assert result.hindsight.starts == [0, 11, 21]
    assert len(result.r_f.values) == 30


def test_constraint_regret_matches_gap_sum():
    result = simulate(preset_config("static-l1", N=30))
    gaps = [float(np.sum((result.trace.x[k + 1] - result.trace.nu[k]) ** 2)) for k in range(30)]
    assert result.r_c.final == pytest.approx(sum(gaps))


def test_curves_end_at_the_last_sample():
    result = simulate(preset_config("static-l1", N=30))
    assert result.curves[-1]["n"] == 30
    assert len(result.curves) <= get_settings().report.curve_points


def test_unsplit_filter_reports_estimate_as_consensus():
    result = simulate(preset_config("static-l1", N=20, filter="plain_ekf"))
    np.testing.assert_array_equal(result.trace.nu, result.trace.x[:-1])
    np.testing.assert_array_equal(result.final_x, result.final_nu)

