from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obatakit.manifold import (
    Custom,
    DomainError,
    Flat,
    ModelError,
    Quadric,
    VectorType,
    Warped,
    causal_type,
    classify_vector,
    inverse_metric_at,
    metric_at,
    quadric_embed,
    restrict_linear,
    sample_points,
)


def test_flat_metric() -> None:
    m = Flat(1, 2)
    np.testing.assert_array_equal(metric_at(m, [0.3, 1.0, -2.0]), np.diag([-1.0, 1.0, 1.0]))
    np.testing.assert_array_equal(inverse_metric_at(m, [0.0, 0.0, 0.0]), np.diag([-1.0, 1.0, 1.0]))


def test_sphere_chart_metric(sphere: Quadric) -> None:
    g = metric_at(sphere, [0.6, 0.0])
    np.testing.assert_allclose(g, [[1.5625, 0], [0, 1]], atol=1e-14)
    np.testing.assert_allclose(inverse_metric_at(sphere, [0.6, 0.0]), [[0.64, 0], [0, 1]], atol=1e-14)


def test_sphere_metric_matches_pullback(sphere: Quadric) -> None:
    # g = J^T eta J with J from central differences of the embedding
    p = np.array([0.3, -0.4])
    h = 1e-6
    J = np.column_stack([(sphere.embed(p + h * e) - sphere.embed(p - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(sphere.metric(p), J.T @ J, atol=1e-8)


def test_warped_metric(exp_warp: Warped) -> None:
    np.testing.assert_allclose(metric_at(exp_warp, [math.log(2), 0, 0]), np.diag([-1.0, 4.0, 4.0]), atol=1e-13)
    np.testing.assert_allclose(inverse_metric_at(exp_warp, [math.log(2), 0, 0]), np.diag([-1.0, 0.25, 0.25]), atol=1e-13)


def test_classify_vector_flat() -> None:
    m = Flat(1, 2)
    p = np.zeros(3)
    assert classify_vector(m, p, [1, 1, 0]) is VectorType.NULL
    assert classify_vector(m, p, [1, 0, 0]) is VectorType.TIMELIKE
    assert classify_vector(m, p, [0, 1, 0]) is VectorType.SPACELIKE


def test_causal_type_with_zero_diagonal() -> None:
    # g00 = 0: the scale must come from |g|, not the diagonal
    g = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert causal_type(g, [1.0, 0.0]) is VectorType.NULL
    assert causal_type(g, [1.0, 1.0]) is VectorType.SPACELIKE
    assert causal_type(g, [1.0, -1.0]) is VectorType.TIMELIKE


def test_quadric_embed(sphere: Quadric, de_sitter: Quadric) -> None:
    np.testing.assert_allclose(quadric_embed(sphere, [0, 0]), [0, 0, 1])
    np.testing.assert_allclose(quadric_embed(de_sitter, [0, 0]), [0, 0, 1])
    np.testing.assert_allclose(quadric_embed(sphere, [0.6, 0]), [0.6, 0, 0.8])


def test_restrict_linear(de_sitter: Quadric) -> None:
    p = np.array([0.4, -0.3])
    X = de_sitter.embed(p)
    assert restrict_linear(de_sitter, [0, 1, 0])(p) == pytest.approx(X[1])
    assert restrict_linear(de_sitter, [1, 0, 0])(p) == pytest.approx(X[0])
    assert restrict_linear(de_sitter, [1, 0, -1])(p) == pytest.approx(X[0] - X[2])
    assert restrict_linear(de_sitter, [0, 1, 0]).text == "x1"


def test_to_chart_inverts_embed(de_sitter: Quadric) -> None:
    p = np.array([0.7, 0.2])
    np.testing.assert_allclose(de_sitter.to_chart(de_sitter.embed(p)), p)


def test_domain_checks(sphere: Quadric) -> None:
    with pytest.raises(DomainError):
        metric_at(sphere, [1.0, 0.5])
    assert not sphere.in_domain([0.99, 0.99])


def test_signature_mismatch_is_reported() -> None:
    m = Custom(2, (0, 2), [["-1", "0"], ["0", "1"]])
    with pytest.raises(ModelError, match="inertia"):
        metric_at(m, [0.0, 0.0])


def test_model_errors() -> None:
    with pytest.raises(ModelError):
        Quadric((0, 3), -1.0)
    with pytest.raises(ModelError):
        Quadric((0, 3), 0.0)


def test_sample_points_seeded(de_sitter: Quadric) -> None:
    a = sample_points(de_sitter, np.random.default_rng(3), 20)
    b = sample_points(de_sitter, np.random.default_rng(3), 20)
    np.testing.assert_array_equal(a, b)
    assert all(de_sitter.in_domain(p) for p in a)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_classification_is_basis_invariant(v: list[float], seed_vals: list[float]) -> None:
    # <v, v> and its type are unchanged by a change of basis A: g -> A^T g A, v -> A^-1 v
    g = np.diag([-1.0, 1.0, 1.0])
    rng = np.random.default_rng(int(1000 * abs(sum(seed_vals))) % 2**32)
    A = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    v = np.array(v)
    w = np.linalg.solve(A, v)
    q = float(v @ g @ v)
    if abs(q) < 1e-3 * (1 + v @ v):
        return
    assert causal_type(A.T @ g @ A, w) is causal_type(g, v)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_classification_involution(v: list[float]) -> None:
    # flipping the metric sign swaps timelike and spacelike, fixes null
    g = np.diag([-1.0, 1.0, 1.0])
    swap = {VectorType.TIMELIKE: VectorType.SPACELIKE, VectorType.SPACELIKE: VectorType.TIMELIKE, VectorType.NULL: VectorType.NULL}
    assert causal_type(-g, v) is swap[causal_type(g, v)]
