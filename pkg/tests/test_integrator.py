from __future__ import annotations

import math

import numpy as np
import pytest

from obatakit.integrator import DormandPrince, solve


def test_tableau_consistency() -> None:
    tab = DormandPrince
    np.testing.assert_allclose(tab.A.sum(axis=1), tab.C, atol=1e-15)
    assert tab.B.sum() == pytest.approx(1.0, abs=1e-15)
    assert tab.E.sum() == pytest.approx(0.0, abs=1e-15)


def test_harmonic_oscillator() -> None:
    res = solve(lambda y: np.array([y[1], -y[0]]), [1.0, 0.0], 2 * math.pi, tol=1e-10)
    assert res.status == "budget_reached"
    np.testing.assert_allclose(res.y_end, [1.0, 0.0], atol=1e-8)


def test_dense_output_on_grid() -> None:
    res = solve(lambda y: np.array([y[0]]), [1.0], 1.0, tol=1e-10, sample_step=0.1)
    np.testing.assert_allclose(res.s, np.linspace(0, 1, 11), atol=1e-12)
    np.testing.assert_allclose(res.y[:, 0], np.exp(res.s), rtol=1e-8)


def test_exit_event_located() -> None:
    res = solve(lambda y: np.array([1.0]), [0.0], 5.0, inside=lambda y: y[0] < 1.234)
    assert res.status == "domain_escape"
    assert res.s_end == pytest.approx(1.234, abs=1e-8)


def test_blow_up_is_underflow() -> None:
    # y' = y^2 from 1 blows up at s = 1
    res = solve(lambda y: y * y, [1.0], 2.0, tol=1e-10)
    assert res.status == "step_underflow"
    assert res.s_end == pytest.approx(1.0, abs=1e-6)


def test_rejects_bad_budget() -> None:
    with pytest.raises(ValueError):
        solve(lambda y: y, [1.0], 0.0)
