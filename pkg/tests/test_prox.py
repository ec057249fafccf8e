import math

import numpy as np
import pytest
from pydantic import ValidationError

from ekfadmm import prox
from ekfadmm.core_models import RegSpec
from ekfadmm.selftest import prox_grid


def test_soft_threshold():
    reg = RegSpec(kind="l1", lam=1.0)
    np.testing.assert_array_equal(prox.prox_apply(reg, np.array([3.0, -0.5, -2.0]), 1.0), [2.0, 0.0, -1.0])


def test_soft_threshold_scales_with_rho():
    reg = RegSpec(kind="l1", lam=1.0)
    np.testing.assert_allclose(prox.prox_apply(reg, np.array([3.0]), 2.0), [2.5])


def test_hard_threshold_ties_go_to_zero():
    # threshold 2 lam / rho = 1, so |v| = 1 is a tie
    reg = RegSpec(kind="l0", lam=0.5)
    np.testing.assert_array_equal(prox.prox_apply(reg, np.array([1.0, 1.5, -0.9, -1.2]), 1.0), [0.0, 1.5, 0.0, -1.2])


def test_box_projection_and_value():
    reg = RegSpec(kind="box", lo=-0.5, hi=0.5)
    p = prox.prox_apply(reg, np.array([-2.0, 0.1, 0.7]), 3.0)
    np.testing.assert_array_equal(p, [-0.5, 0.1, 0.5])
    assert prox.reg_value(reg, p) == 0.0
    assert prox.reg_value(reg, np.array([0.0, 0.6])) == math.inf


def test_vector_box_bounds():
    reg = RegSpec(kind="box", lo=[0.0, -1.0], hi=[1.0, 0.0])
    np.testing.assert_array_equal(prox.prox_apply(reg, np.array([2.0, 2.0]), 1.0), [1.0, 0.0])
    assert prox.is_feasible(reg, np.array([0.5, -0.5]))
    assert not prox.is_feasible(reg, np.array([0.5, 0.5]))


def test_none_is_identity_copy():
    v = np.array([1.0, -2.0])
    out = prox.prox_apply(RegSpec(), v, 1.0)
    np.testing.assert_array_equal(out, v)
    assert out is not v


def test_reg_values():
    x = np.array([0.0, -2.0, 0.5])
    assert prox.reg_value(RegSpec(kind="l1", lam=0.1), x) == pytest.approx(0.25)
    assert prox.reg_value(RegSpec(kind="l0", lam=0.1), x) == pytest.approx(0.2)
    assert prox.reg_value(RegSpec(), x) == 0.0


@pytest.mark.parametrize("rho", [0.0, -1.0])
def test_nonpositive_rho_is_rejected(rho):
    with pytest.raises(prox.ProxParameterError):
        prox.prox_apply(RegSpec(kind="l1", lam=1.0), np.zeros(2), rho)


def test_inverted_box_is_rejected():
    with pytest.raises(ValidationError):
        RegSpec(kind="box", lo=1.0, hi=0.0)
    with pytest.raises(prox.ProxParameterError):
        prox.project_box(np.zeros(1), 1.0, 0.0)


def test_prox_minimizes_on_a_grid():
    worst, cases = prox_grid(50)
    assert cases == 150
    assert worst <= 1e-9


@pytest.mark.parametrize(
    "reg", [RegSpec(kind="l1", lam=0.4), RegSpec(kind="l0", lam=0.4), RegSpec(kind="box", lo=-0.5, hi=0.5)]
)
def test_prox_is_separable_and_shrinks(rng, reg):
    v = 2.0 * rng.standard_normal(12)
    perm = rng.permutation(12)
    p = prox.prox_apply(reg, v, 1.5)
    np.testing.assert_array_equal(prox.prox_apply(reg, v[perm], 1.5), p[perm])
    for i in range(12):
        np.testing.assert_array_equal(prox.prox_apply(reg, v[i:i + 1], 1.5), p[i:i + 1])
    assert np.all(np.abs(p) <= np.abs(v))
    assert np.linalg.norm(p) <= np.linalg.norm(v)


def test_hard_threshold_keeps_or_kills():
    v = np.array([0.2, -3.0, 0.9, -1.1])
    p = prox.prox_apply(RegSpec(kind="l0", lam=0.5), v, 1.0)
    assert all(pi == 0.0 or pi == vi for pi, vi in zip(p, v))
