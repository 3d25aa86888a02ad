from __future__ import annotations

import numpy as np
import pytest

from obatakit.manifold import Flat, Quadric
from obatakit.obata import (
    INSTANCE_CASES,
    TABLE,
    BranchError,
    InstanceError,
    asymptotic_flatness_probe,
    build_instance,
    bump_fiber,
    classify_case,
    closed_form_f,
    killing_check,
    solution_family,
    totally_geodesic_check,
)

from conftest import ambient_field


def test_table_rows() -> None:
    assert classify_case(1, 1).omega_type == "depends"
    lab = classify_case(1, -1)
    assert (lab.omega_type, lab.structure) == ("timelike", "warped-split")
    lab = classify_case(0, 0)
    assert (lab.omega_type, lab.structure) == ("null", "null-killing")
    assert len(TABLE) == 9


def test_classify_tolerance() -> None:
    assert classify_case(1, 1e-12).h_sign == "0"
    assert classify_case(1, 1e-12, tol=0.0).h_sign == "+"


def test_closed_forms() -> None:
    assert closed_form_f(1, 1, 0) == pytest.approx(1.0)
    assert closed_form_f(-1, 0, 0) == pytest.approx(1.0)
    assert closed_form_f(0, 4, 2) == pytest.approx(4.0)


@pytest.mark.parametrize("kappa, h, branch", [(1, 1, "cos"), (-1, 1, "sinh"), (-1, -1, "cosh"), (-2, 0, "exp"), (0, 3, "linear")])
def test_families_satisfy_ode(kappa: float, h: float, branch: str) -> None:
    fam = solution_family(kappa, h)
    assert fam.branch == branch
    for t in fam.grid():
        f, f1, f2 = fam.derivatives(t)
        assert f2 == pytest.approx(-kappa * f, abs=1e-9)
        assert f1 * f1 + kappa * f * f == pytest.approx(h, abs=1e-9)


def test_families_without_real_branch() -> None:
    with pytest.raises(BranchError):
        solution_family(1, -1)
    with pytest.raises(BranchError):
        solution_family(0, 0)


@pytest.mark.parametrize(
    "case, kappa, h",
    [
        ("thm4.1a", 1, 1),
        ("thm4.1b", 1, 2),
        ("thm4.2", 1, -1),
        ("thm4.3", 1, 0),
        ("thm4.5i", 0, 4),
        ("thm4.5ii", 0, -2),
        ("nullkilling", 0, 0),
    ],
)
def test_instances_self_verify(case: str, kappa: float, h: float) -> None:
    b = build_instance(case, kappa, h)
    assert b.passed, b.report
    assert b.report.max_residual <= 1e-8


def test_thm45i_shape() -> None:
    b = build_instance("thm4.5i", 0, 4)
    assert b.omega.text == "2 * x0"
    np.testing.assert_allclose(b.model.metric(np.array([0.3, 1.0, 2.0])), np.diag([1.0, 4.0, 4.0]))


def test_instance_validation() -> None:
    with pytest.raises(InstanceError, match="h"):
        build_instance("thm4.2", 1, 1)
    with pytest.raises(InstanceError, match="kappa"):
        build_instance("thm4.5i", 1, 1)
    with pytest.raises(InstanceError, match="curvature mismatch"):
        build_instance("thm4.1a", 1, 1, fiber=bump_fiber())
    with pytest.raises(InstanceError):
        build_instance("nope", 1, 1)
    assert set(INSTANCE_CASES) >= {"thm4.1a", "nullkilling"}


def test_killing() -> None:
    assert killing_check(Flat(0, 2), ["1", "0"]) == 0.0
    assert killing_check(Flat(0, 2), ["x0", "0"]) == pytest.approx(2.0)
    b = build_instance("nullkilling", 0, 0, verify=False)
    assert killing_check(b.model, ["0", "1", "0"]) <= 1e-9


def test_totally_geodesic_de_sitter(de_sitter: Quadric) -> None:
    dev, runs = totally_geodesic_check(de_sitter, ambient_field(de_sitter, [0, 1, 0]), samples=5)
    assert runs == 5
    assert dev <= 1e-7


def test_flat_fiber_flatness() -> None:
    rep = asymptotic_flatness_probe(1.0, fiber=Flat(0, 2), sigma_grid=np.linspace(1, 10, 7))
    assert max(rep.fiber_curvature) <= 1e-9
