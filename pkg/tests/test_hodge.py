import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwnet.complex import ComplexError, from_graph
from cwnet.hodge import (
    Chain,
    Cochain,
    WeightStack,
    boundary_apply,
    coboundary_adjoint,
    coboundary_apply,
    graph_laplacian,
    hodge_laplacian,
    inner_product,
    pinv_diag,
    random_weights,
    spectrum,
)
from cwnet.synth import item_rng, random_complex

P3_LAPLACIAN = [[1, -1, 0], [-1, 2, -1], [0, -1, 1]]


@pytest.fixture
def p3():
    return from_graph(3, [(0, 1), (1, 2)])


def test_boundary_of_edge(p3):
    assert boundary_apply(p3, 1, Chain(1, [1, 0])) == Chain(0, [-1, 1, 0])
    assert boundary_apply(p3, 1, Chain(1, [2, 0])) == Chain(0, [-2, 2, 0])


def test_boundary_of_face(triangle):
    assert boundary_apply(triangle, 2, Chain(2, [1])).coefficients.tolist() == [1, 1, 1]
    with pytest.raises(ComplexError):
        boundary_apply(triangle, 0, Chain(0, [1, 0, 0]))
    with pytest.raises(ComplexError):
        boundary_apply(triangle, 2, Chain(1, [1]))


def test_coboundary(p3, triangle):
    assert coboundary_apply(p3, 0, Cochain(0, [1, 0, 0])).values.tolist() == [-1, 0]
    top = coboundary_apply(triangle, 2, Cochain(2, [4.0]))
    assert not top.values.any()
    with pytest.raises(ComplexError):
        coboundary_apply(p3, 0, Cochain(1, [1, 0]))


def test_coboundary_twice_vanishes(triangle):
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = Cochain(0, rng.normal(size=3))
        assert np.abs(coboundary_apply(triangle, 1, coboundary_apply(triangle, 0, f)).values).max() <= 1e-12


def test_inner_product_values():
    assert inner_product(Cochain(0, [1, 2]), Cochain(0, [3, 4]), np.array([1, 0.5])) == 7
    assert inner_product(Cochain(1, [1, 1, 1]), Cochain(1, [1, 1, 1]), np.ones(3)) == 3
    rng = np.random.default_rng(1)
    f, g, w = Cochain(0, rng.normal(size=5)), Cochain(0, rng.normal(size=5)), rng.uniform(size=5)
    assert inner_product(f, g, w) == inner_product(g, f, w)
    with pytest.raises(ComplexError):
        inner_product(Cochain(0, [1]), Cochain(1, [1]), np.ones(1))


def test_pinv_diag():
    assert pinv_diag(np.array([2.0, 0.0, -4.0, 1e-13])).tolist() == [0.5, 0.0, -0.25, 0.0]


def test_weights_reject_non_finite():
    with pytest.raises(ValueError):
        WeightStack((np.array([1.0, np.inf]),))


def test_triangle_edge_laplacian_is_3i(triangle):
    assert np.abs(hodge_laplacian(triangle, 1) - 3 * np.eye(3)).max() <= 1e-12
    assert np.allclose(spectrum(triangle, 1), [3, 3, 3])


def test_path_vertex_laplacian(p3):
    assert hodge_laplacian(p3, 0).tolist() == P3_LAPLACIAN
    assert graph_laplacian(p3).tolist() == P3_LAPLACIAN
    assert graph_laplacian(from_graph(1, [])).tolist() == [[0]]


def test_errors(triangle, p3):
    with pytest.raises(ComplexError):
        hodge_laplacian(triangle, 3)
    with pytest.raises(ComplexError):
        hodge_laplacian(triangle, 1, WeightStack((np.ones(3), np.ones(2), np.ones(1))))
    with pytest.raises(ComplexError):
        graph_laplacian(triangle)


def test_identity_weights_give_psd(square):
    for k in range(3):
        lap = hodge_laplacian(square, k)
        assert lap.shape == (square.skeleton_sizes[k],) * 2
        assert np.array_equal(lap, lap.T)
        assert np.linalg.eigvalsh(lap).min() >= -1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_coboundary_adjoint(seed):
    rng = np.random.default_rng(seed)
    cx, _ = random_complex((6, 9, 4), item_rng(seed, 0), (3, 3, 1))
    w = random_weights(cx, rng)
    for k in (0, 1):
        f = Cochain(k + 1, rng.normal(size=cx.skeleton_sizes[k + 1]))
        g = Cochain(k, rng.normal(size=cx.skeleton_sizes[k]))
        # padding cells have zero boundary, so restrict g to where W_k^+ W_k = I
        lhs = inner_product(coboundary_adjoint(cx, k, f, w), g, w[k])
        rhs = inner_product(f, coboundary_apply(cx, k, g), w[k + 1])
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs), abs(rhs))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_laplacian_shapes_and_weighted_form(seed):
    rng = np.random.default_rng(seed)
    cx, _ = random_complex((7, 10, 4), item_rng(seed, 1), (3, 3, 1))
    w = random_weights(cx, rng)
    b1, b2 = (cx.boundary(k).astype(float) for k in (1, 2))
    W = [np.diag(x) for x in w.weights]
    inv = [np.linalg.pinv(x) for x in W]
    expected = [
        inv[0] @ b1 @ W[1] @ b1.T,
        b1.T @ inv[0] @ b1 @ W[1] + inv[1] @ b2 @ W[2] @ b2.T,
        b2.T @ inv[1] @ b2 @ W[2],
    ]
    for k in range(3):
        lap = hodge_laplacian(cx, k, w)
        assert lap.shape == (cx.skeleton_sizes[k],) * 2
        assert np.allclose(lap, expected[k], atol=1e-12)
