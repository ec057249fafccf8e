import numpy as np
import pytest

from ekfadmm import prox
from ekfadmm.ekf_admm import rho_tv, step_fast
from ekfadmm.factories.learner_engine import LEARNER_STRATEGIES, LearnerInitializationError, create_learner
from ekfadmm.model import linearize
from ekfadmm.runner import build_dataset, initial_params, preset_config


def _run(config, steps=None):
    dataset = build_dataset(config)
    learner = create_learner(config, initial_params(config), dataset.Y.shape[1])
    for sample in list(dataset.samples())[:steps]:
        learner.step(sample.k, sample)
    return learner


def test_registry_covers_every_filter():
    assert set(LEARNER_STRATEGIES) == {
        "ekf_admm", "ekf_admm_tv", "frozen_admm", "online_admm", "ekf_clip", "ekf_l1", "plain_ekf",
    }


@pytest.mark.parametrize("name", ["ekf_admm", "frozen_admm", "online_admm", "ekf_clip", "plain_ekf"])
def test_every_learner_streams_a_box_problem(name):
    learner = _run(preset_config("static-bounds", N=15, filter=name))
    assert learner.estimate.shape == (105,)
    assert np.all(np.isfinite(learner.estimate))


def test_clipped_estimate_is_feasible():
    config = preset_config("static-bounds", N=20, filter="ekf_clip")
    learner = _run(config)
    assert prox.is_feasible(config.reg, learner.estimate)


def test_plain_filter_consensus_is_the_estimate():
    learner = _run(preset_config("static-l1", N=5, filter="plain_ekf"))
    np.testing.assert_array_equal(learner.consensus, learner.estimate)


def test_clip_needs_a_box():
    config = preset_config("static-l1", N=5, filter="ekf_clip")
    with pytest.raises(LearnerInitializationError, match="ekf_clip"):
        create_learner(config, initial_params(config), 1)


def test_time_varying_penalty_needs_lambda():
    config = preset_config("static-bounds", N=5, filter="ekf_admm_tv")
    with pytest.raises(LearnerInitializationError):
        create_learner(config, initial_params(config), 1)


def test_time_varying_penalty_follows_schedule():
    config = preset_config("static-l1", N=10, filter="ekf_admm_tv")
    learner = _run(config, steps=4)
    assert learner.admm.rho == pytest.approx(rho_tv(3, 10, config.reg.lam))


def test_naive_and_fast_learners_agree():
    fast = _run(preset_config("lasso", N=30, filter="ekf_admm", rho=5.0, n_a=3))
    naive = _run(preset_config("lasso", N=30, filter="ekf_admm", rho=5.0, n_a=3, naive=True))
    np.testing.assert_allclose(fast.estimate, naive.estimate, atol=1e-8)
    np.testing.assert_allclose(fast.consensus, naive.consensus, atol=1e-8)


def test_online_admm_keeps_its_metric():
    config = preset_config("lasso", N=20, filter="online_admm")
    learner = _run(config)
    np.testing.assert_array_equal(learner.covariance, config.hyper.P0_scale * np.eye(3))


def test_time_varying_penalty_rescales_the_dual():
    config = preset_config("static-l1", N=10, filter="ekf_admm_tv")
    learner = _run(config, steps=3)
    fs, st = learner.fs, learner.admm
    sample = list(build_dataset(config).samples())[3]
    learner.step(3, sample)

    rho = rho_tv(3, 10, config.reg.lam)
    C, y = linearize(config.model, fs.xhat, sample)
    _, expected = step_fast(fs, st.with_rho(rho), C, learner.R, learner.Q, y, config.reg)
    assert learner.admm.rho == pytest.approx(rho)
    np.testing.assert_allclose(learner.admm.w, expected.w, atol=1e-12)
    np.testing.assert_allclose(learner.admm.nu, expected.nu, atol=1e-12)


def test_l1_pseudo_measurements_pull_towards_zero():
    heavy = _run(preset_config("lasso", N=30, filter="ekf_l1", lam=1e6))
    plain = _run(preset_config("lasso", N=30, filter="plain_ekf"))
    assert np.sum(np.abs(heavy.estimate)) < 1e-3
    assert np.sum(np.abs(plain.estimate)) > 0.1


def test_l1_filter_needs_an_l1_penalty():
    config = preset_config("static-bounds", N=5, filter="ekf_l1")
    with pytest.raises(LearnerInitializationError, match="ekf_l1"):
        create_learner(config, initial_params(config), 1)


def test_l1_filter_streams_the_static_model():
    learner = _run(preset_config("static-l1", N=15, filter="ekf_l1"))
    assert np.all(np.isfinite(learner.estimate))
    np.testing.assert_array_equal(learner.consensus, learner.estimate)
