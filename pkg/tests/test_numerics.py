import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from cwnet import numerics as nx
from cwnet.layers import layer_norm
from cwnet.numerics import Tape, Tensor, grad_check


def param(rng, shape, name="p"):
    return Tensor(rng.normal(size=shape), requires_grad=True, name=name)


def probe(out: Tensor, rng_seed: int = 99) -> Tensor:
    """Scalar with a non-uniform upstream gradient."""
    weights = np.random.default_rng(rng_seed).normal(size=out.shape)
    return nx.sum_all(nx.hadamard(out, weights))


def test_matmul_values():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(nx.matmul(np.eye(2), m).data, m)
    assert nx.matmul([[1, 2]], [[3], [4]]).data.tolist() == [[11.0]]
    with pytest.raises(ValueError):
        nx.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_gradient_of_sum():
    rng = np.random.default_rng(0)
    a, b = param(rng, (3, 4), "a"), param(rng, (4, 2), "b")
    report = grad_check(lambda: nx.sum_all(nx.matmul(a, b)), [a, b], h=1e-5, tol=1e-6)
    assert report.passed, report


def test_structural_ops():
    m = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(nx.transpose(nx.transpose(m)).data, m)
    assert nx.concat_cols(np.ones((3, 3)), np.zeros((3, 3))).shape == (3, 6)
    assert nx.row_mean([[1, 3], [2, 4]]).data.tolist() == [[2.0], [3.0]]
    assert nx.sum_all(m).data.tolist() == [[15.0]]
    with pytest.raises(ValueError):
        nx.concat_cols(np.ones((2, 2)), np.ones((3, 2)))


def test_activation_values():
    assert nx.activation([[-1.0, 2.0]], "leaky_relu").data.tolist() == [[-0.01, 2.0]]
    assert nx.activation([[0.0]], "gelu").item() == 0.0
    x = np.linspace(-3, 3, 13).reshape(1, -1)
    assert np.allclose(nx.activation(x, "gelu").data, x * norm.cdf(x), atol=1e-15)
    selu = nx.activation([[1.0, -1.0]], "selu").data[0]
    assert selu[0] == pytest.approx(1.0507009873554805)
    assert selu[1] == pytest.approx(1.0507009873554805 * 1.6732632423543772 * (np.exp(-1) - 1))
    assert nx.activation([[0.0]], "exp").item() == 1.0
    with pytest.raises(ValueError, match="unknown activation"):
        nx.activation([[0.0]], "swish")


@pytest.mark.parametrize("kind", ["leaky_relu", "gelu", "selu", "exp", "identity"])
def test_activation_gradients(kind):
    rng = np.random.default_rng(1)
    x = rng.normal(scale=2.0, size=(1, 100))
    if kind == "leaky_relu":
        x[np.abs(x) < 1e-3] = 0.5
    p = Tensor(x, requires_grad=True, name="x")
    report = grad_check(lambda: probe(nx.activation(p, kind)), [p], tol=1e-5)
    assert report.passed, report


BINARY = {
    "matmul": (lambda a, b: nx.matmul(a, b), lambda r, c, k: ((r, k), (k, c))),
    "add": (nx.add, lambda r, c, k: ((r, c), (r, c))),
    "sub": (nx.sub, lambda r, c, k: ((r, c), (r, c))),
    "hadamard": (nx.hadamard, lambda r, c, k: ((r, c), (r, c))),
    "concat_cols": (nx.concat_cols, lambda r, c, k: ((r, c), (r, k))),
    "add_broadcast_row": (nx.add, lambda r, c, k: ((r, c), (1, c))),
}

UNARY = {
    "transpose": nx.transpose,
    "scale": lambda a: nx.scale(a, -2.5),
    "row_mean": nx.row_mean,
    "sum_all": nx.sum_all,
    "sum_axis": lambda a: nx.sum_axis(a, 0, keepdims=True),
    "mean_axis": lambda a: nx.mean_axis(a, 1),
    "reshape": lambda a: nx.reshape(a, (1, a.data.size)),
    "index": lambda a: nx.index(a, (slice(0, 1),)),
}

dims = st.integers(1, 8)


@pytest.mark.parametrize("name", sorted(BINARY))
@settings(max_examples=15, deadline=None)
@given(r=dims, c=dims, k=dims, seed=st.integers(0, 10**6))
def test_binary_adjoints(name, r, c, k, seed):
    op, shapes = BINARY[name]
    rng = np.random.default_rng(seed)
    sa, sb = shapes(r, c, k)
    a, b = param(rng, sa, "a"), param(rng, sb, "b")
    report = grad_check(lambda: probe(op(a, b)), [a, b], tol=1e-5)
    assert report.passed, report


@pytest.mark.parametrize("name", sorted(UNARY))
@settings(max_examples=15, deadline=None)
@given(r=dims, c=dims, seed=st.integers(0, 10**6))
def test_unary_adjoints(name, r, c, seed):
    rng = np.random.default_rng(seed)
    a = param(rng, (r, c), "a")
    report = grad_check(lambda: probe(UNARY[name](a)), [a], tol=1e-5)
    assert report.passed, report


@settings(max_examples=15, deadline=None)
@given(r=dims, c=dims, seed=st.integers(0, 10**6))
def test_division_family_adjoints(r, c, seed):
    rng = np.random.default_rng(seed)
    a = param(rng, (r, c), "a")
    b = Tensor(rng.uniform(0.5, 2.0, size=(r, c)) * rng.choice([-1, 1], size=(r, c)), requires_grad=True, name="b")
    for f in (
        lambda: probe(nx.divide(a, b)),
        lambda: probe(nx.reciprocal(b)),
        lambda: probe(nx.pinv_diag(b)),
        lambda: probe(nx.power(nx.hadamard(b, b), 0.5)),
    ):
        report = grad_check(f, [a, b], tol=1e-5)
        assert report.passed, report


def test_batched_operands_reduce_over_leading_axes():
    rng = np.random.default_rng(2)
    stack = param(rng, (4, 3, 5), "stack")
    shared = param(rng, (5, 2), "shared")
    left = param(rng, (3, 3), "left")
    row = param(rng, (1, 2), "row")
    f = lambda: probe(nx.add(nx.matmul(left, nx.matmul(stack, shared)), row))
    report = grad_check(f, [stack, shared, left, row], tol=1e-6)
    assert report.passed, report


def test_reciprocal_guard():
    with pytest.raises(FloatingPointError):
        nx.reciprocal([[1e-301]])
    assert nx.pinv_diag([[0.0, 2.0]]).data.tolist() == [[0.0, 0.5]]


def test_backward_examples():
    rng = np.random.default_rng(3)
    w = param(rng, (3, 4), "w")
    with Tape() as tape:
        loss = nx.sum_all(w)
    assert np.array_equal(tape.backward(loss)[w], np.ones((3, 4)))
    with Tape() as tape:
        loss = nx.sum_all(nx.hadamard(w, w))
    assert np.allclose(tape.backward(loss)[w], 2 * w.data)
    with Tape() as tape:
        out = nx.matmul(w, np.ones((4, 2)))
    with pytest.raises(ValueError, match="scalar"):
        tape.backward(out)


def test_backward_is_linear_and_repeatable():
    rng = np.random.default_rng(4)
    w = param(rng, (4, 4), "w")
    with Tape() as tape:
        l1 = probe(nx.activation(nx.matmul(w, w), "gelu"), 1)
        l2 = probe(nx.activation(w, "selu"), 2)
        both = nx.add(l1, l2)
    g1, g2 = tape.backward(l1)[w], tape.backward(l2)[w]
    g_both = tape.backward(both)[w]
    assert np.abs(g_both - (g1 + g2)).max() <= 1e-10
    size = len(tape)
    assert np.array_equal(tape.backward(both)[w], g_both)
    assert len(tape) == size


def test_grad_check_quadratic():
    w = Tensor([[3.0]], requires_grad=True, name="w")
    report = grad_check(lambda: nx.hadamard(w, w), [w], h=1e-5)
    assert report.max_rel_error * 6 <= 1e-8
    with pytest.raises(ValueError):
        grad_check(lambda: nx.hadamard(w, w), [w], h=0)


def test_grad_check_catches_a_wrong_adjoint():
    w = Tensor([[0.7, -1.2]], requires_grad=True, name="w")

    def broken():
        return nx.sum_all(nx.record(w.data**2, (w,), lambda g: (g * w.data,)))

    assert not grad_check(broken, [w]).passed


def test_layer_norm_forward_and_gradient():
    rng = np.random.default_rng(5)
    x = param(rng, (3, 4, 6), "x")
    gain, bias = param(rng, (1, 6), "gain"), param(rng, (1, 6), "bias")
    out = layer_norm(x, Tensor(np.ones((1, 6))), Tensor(np.zeros((1, 6)))).data
    assert np.allclose(out.mean(axis=-1), 0, atol=1e-12)
    assert np.allclose(out.var(axis=-1), 1, atol=1e-4)
    report = grad_check(lambda: probe(layer_norm(x, gain, bias)), [x, gain, bias], tol=1e-6)
    assert report.passed, report
