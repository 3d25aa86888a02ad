from __future__ import annotations

import math

import numpy as np
import pytest

from obatakit.expr import parse
from obatakit.manifold import Custom, Flat, Quadric, Warped, levi_civita, sample_points
from obatakit.tensor import (
    DegeneratePlaneError,
    PointError,
    ScalarField,
    christoffel,
    first_integral,
    fit_kappa,
    gradient,
    hessian,
    metric_compatibility_defect,
    obata_residual,
    obata_verify,
    riemann,
    sectional,
    warped_sectional,
)

from conftest import ambient_field

POLAR_SPHERE = Custom(2, (0, 2), [["1", "0"], ["0", "sin(x0)^2"]], box=[[0.1, 3.0], [None, None]])


def test_flat_christoffel_zero() -> None:
    assert np.all(christoffel(Flat(1, 2), [0.2, 0.1, 5.0]) == 0.0)


def test_polar_sphere_christoffel() -> None:
    G = christoffel(POLAR_SPHERE, [math.pi / 4, 0.0])
    assert G[0, 1, 1] == pytest.approx(-0.5, abs=1e-12)
    assert G[1, 0, 1] == pytest.approx(1.0, abs=1e-12)
    assert G[1, 1, 0] == pytest.approx(1.0, abs=1e-12)


def test_warped_christoffel(exp_warp: Warped) -> None:
    assert christoffel(exp_warp, [0.0, 0.0, 0.0])[0, 1, 1] == pytest.approx(1.0, abs=1e-12)


def test_structural_christoffel_matches_levi_civita(exp_warp: Warped) -> None:
    m = Warped(-1, "cosh(x0)", Quadric((1, 2), 1.0))
    for p in sample_points(m, np.random.default_rng(1), 10):
        g, dg = m.metric_jet(p)
        np.testing.assert_allclose(m.structural_christoffel(p), levi_civita(np.linalg.inv(g), dg), atol=1e-12)


def test_gradient_raises_index() -> None:
    np.testing.assert_allclose(gradient(Flat(0, 2), [1, 2], ScalarField.from_text("x0", 2, 0)), [1, 0])
    np.testing.assert_allclose(gradient(Flat(1, 1), [1, 2], ScalarField.from_text("x0", 2, 0)), [-1, 0])


def test_flat_hessians() -> None:
    m = Flat(0, 3)
    np.testing.assert_allclose(hessian(m, [1, 2, 3], ScalarField.from_text("x0^2", 3, 0)), np.diag([2.0, 0, 0]))
    np.testing.assert_allclose(hessian(m, [1, 2, 3], ScalarField.from_text("x0", 3, 0)), np.zeros((3, 3)))
    assert obata_residual(m, [1, 2, 3], ScalarField.from_text("x0", 3, 0)) == 0.0


def test_de_sitter_residuals(de_sitter: Quadric) -> None:
    p = np.array([0.3, 0.5])
    assert obata_residual(de_sitter, p, ambient_field(de_sitter, [1, 0, -1])) <= 1e-9
    assert obata_residual(de_sitter, p, ambient_field(de_sitter, [0, 1, 0], kappa=2.0)) >= 0.1


@pytest.mark.parametrize("coeffs, h", [([0, 1, 0], 1.0), ([1, 0, 0], -1.0), ([1, 0, -1], 0.0)])
def test_de_sitter_first_integrals(de_sitter: Quadric, coeffs, h: float) -> None:
    f = ambient_field(de_sitter, coeffs)
    vals = [first_integral(de_sitter, p, f) for p in sample_points(de_sitter, np.random.default_rng(0), 30)]
    assert max(abs(v - h) for v in vals) <= 1e-9


def test_metric_compatibility(sphere: Quadric) -> None:
    assert metric_compatibility_defect(sphere, [0.2, -0.3]) <= 1e-12


def test_riemann_flat_and_sphere() -> None:
    assert np.max(np.abs(riemann(Flat(1, 2), [0.1, 0.2, 0.3]))) <= 1e-10
    R = riemann(POLAR_SPHERE, [math.pi / 4, 0.0])
    assert R[0, 0, 1, 1] == pytest.approx(0.5, abs=1e-5)


def test_sectional_constant_curvature(sphere: Quadric) -> None:
    rng = np.random.default_rng(4)
    for p in sample_points(sphere, rng, 10):
        X, Y = rng.normal(size=(2, 2))
        assert sectional(sphere, p, X, Y) == pytest.approx(1.0, abs=1e-5)
    assert sectional(Flat(0, 3), [0, 0, 0], [1, 2, 0], [0, 1, 3]) == pytest.approx(0.0, abs=1e-9)


def test_degenerate_plane() -> None:
    with pytest.raises(DegeneratePlaneError):
        sectional(Flat(1, 2), [0, 0, 0], [1, 1, 0], [0, 0, 1e-30])
    with pytest.raises(DegeneratePlaneError):
        sectional(Flat(1, 2), [0, 0, 0], [1, 1, 0], [1, 1, 0])


def test_warped_sectional_direct_product() -> None:
    m = Warped(-1, "1", Flat(0, 2))
    assert warped_sectional(m, [0.3, 0, 0], "base-fiber", [1, 0, 0], [0, 1, 0]) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("t", [-1.0, 0.0, 0.7])
def test_warped_sectional_cosh(t: float) -> None:
    m = Warped(-1, "cosh(x0)", Flat(0, 2))
    p = np.array([t, 0.2, 0.1])
    K = warped_sectional(m, p, "base-fiber", [1, 0, 0], [0, 1, 0])
    assert K == pytest.approx(1.0, abs=1e-9)
    assert sectional(m, p, [1, 0, 0], [0, 1, 0]) == pytest.approx(K, abs=1e-5)


def test_warped_sectional_exp_fiber_plane(exp_warp: Warped) -> None:
    p = np.array([0.4, 0.0, 0.0])
    K = warped_sectional(exp_warp, p, "fiber-fiber", [0, 1, 0], [0, 0, 1])
    assert K == pytest.approx(1.0, abs=1e-12)
    assert sectional(exp_warp, p, [0, 1, 0], [0, 0, 1]) == pytest.approx(K, abs=1e-5)


def test_verify_de_sitter_x(de_sitter: Quadric) -> None:
    rep = obata_verify(de_sitter, ambient_field(de_sitter, [0, 1, 0]), samples=200, seed=0)
    assert rep.max_residual <= 1e-8
    assert rep.h_mean == pytest.approx(1.0, abs=1e-9)
    assert all(rep.type_census[t] > 0 for t in ("spacelike", "timelike", "null"))
    assert rep.case.omega_type == "depends"


def test_verify_de_sitter_t(de_sitter: Quadric) -> None:
    rep = obata_verify(de_sitter, ambient_field(de_sitter, [1, 0, 0]), samples=100, seed=0)
    assert rep.type_census == {"spacelike": 0, "timelike": 100, "null": 0}


def test_verify_flat_null() -> None:
    rep = obata_verify(Flat(1, 2), ScalarField.from_text("x0 + x1", 3, 0.0), samples=50)
    assert rep.h_mean == 0.0
    assert rep.type_census["null"] == 50


def test_verify_deterministic_and_thread_invariant(de_sitter: Quadric) -> None:
    f = ambient_field(de_sitter, [1, 0, -1])
    a = obata_verify(de_sitter, f, samples=60, seed=5).to_dict()
    b = obata_verify(de_sitter, f, samples=60, seed=5, threads=3).to_dict()
    assert a == b


def test_verify_reports_failing_point() -> None:
    m = Flat(0, 2)
    with pytest.raises(PointError) as info:
        obata_verify(m, ScalarField.from_text("ln(x0)", 2, 0.0), samples=20)
    assert len(info.value.point) == 2


def test_fit_kappa(de_sitter: Quadric) -> None:
    assert fit_kappa(de_sitter, parse("x1", 2)) == pytest.approx(1.0, abs=1e-8)
