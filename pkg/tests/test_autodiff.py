import math

import mpmath
import numpy as np
import pytest

import oracles
from conftest import random_mlp
from predsens import autodiff
from predsens.autodiff import INPUT, Tape
from predsens.errors import ContractError, DomainError, ShapeError
from predsens.model import record_forward


def test_matvec_identity():
    t = Tape()
    out = t.matvec(t.leaf(np.eye(2)), t.leaf([3.0, 4.0], INPUT))
    assert t.value(out).tolist() == [3.0, 4.0]


def test_matvec_row():
    t = Tape()
    out = t.matvec(t.leaf([[2.0, -3.0]]), t.leaf([1.0, 1.0], INPUT))
    assert t.value(out).tolist() == [-1.0]


def test_matvec_matches_loop(rng):
    W = rng.normal(size=(4, 3))
    x = rng.normal(size=3)
    expected = [sum(W[i, j] * x[j] for j in range(3)) for i in range(4)]
    t = Tape()
    out = t.value(t.matvec(t.leaf(W), t.leaf(x, INPUT)))
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)


def test_matvec_batch_rows_are_independent_matvecs(rng):
    W = rng.normal(size=(5, 3))
    X = rng.normal(size=(7, 3))
    t = Tape()
    out = t.value(t.matvec(t.leaf(W), t.leaf(X, INPUT)))
    for i in range(7):
        np.testing.assert_allclose(out[i], W @ X[i], atol=1e-12)


def test_matvec_shape_error_names_both_shapes():
    t = Tape()
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2,\)"):
        t.matvec(t.leaf(np.zeros((2, 3))), t.leaf(np.zeros(2), INPUT))


def test_add_shape_mismatch():
    t = Tape()
    with pytest.raises(ShapeError):
        t.add(t.leaf(np.zeros(3)), t.leaf(np.zeros(2)))


def test_elementwise_values():
    t = Tape()
    assert float(t.value(t.sigmoid(t.leaf(0.0)))) == 0.5
    assert float(t.value(t.relu(t.leaf(-2.5)))) == 0.0
    assert float(t.value(t.relu(t.leaf(2.5)))) == 2.5


def test_sigmoid_far_negative_does_not_overflow():
    with np.errstate(over="raise"):
        v = float(autodiff.sigmoid(-800.0))
    exact = mpmath.exp(-800) / (1 + mpmath.exp(-800))
    assert math.isfinite(v) and 0.0 <= v <= 1e-300
    assert v == float(exact)  # exact value ~1e-348 underflows to 0.0


def test_sigmoid_matches_high_precision(rng):
    z = rng.uniform(-40, 40, size=200)
    with mpmath.workdps(40):
        exact = [float(1 / (1 + mpmath.exp(-mpmath.mpf(v)))) for v in z]
    np.testing.assert_allclose(autodiff.sigmoid(z), exact, rtol=1e-15, atol=0)


def test_bce_half():
    t = Tape()
    assert float(t.value(t.bce(t.leaf(0.5), 1))) == pytest.approx(math.log(2), abs=1e-15)


def test_bce_near_perfect_prediction():
    t = Tape()
    assert float(t.value(t.bce(t.leaf(1 - 1e-12), 1))) < 1e-11


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_bce_rejects_saturated_probability(p):
    t = Tape()
    with pytest.raises(DomainError):
        t.bce(t.leaf(p), 1)


def test_fused_bce_is_softplus():
    with mpmath.workdps(30):
        expected = float(mpmath.log(1 + mpmath.exp(3)))
    t = Tape()
    assert float(t.value(t.bce_with_logits(t.leaf(3.0), [0]))) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(3.048587, abs=5e-7)


def test_fused_bce_extreme_logits_finite():
    t = Tape()
    z = t.leaf([800.0, -800.0])
    loss = t.bce_with_logits(z, [0, 1])
    assert float(t.value(loss)) == pytest.approx(800.0)
    g = t.backward(loss)[z]
    assert np.all(np.isfinite(g))


def test_backward_sigmoid_at_zero():
    t = Tape()
    x = t.leaf(0.0, INPUT)
    assert float(t.backward(t.sigmoid(x))[x]) == 0.25


def test_backward_linear_map():
    t = Tape()
    x = t.leaf([0.3, -1.7], INPUT)
    f = t.matvec(t.constant([[2.0, -3.0]]), x)
    assert t.backward(t.sum(f))[x].tolist() == [2.0, -3.0]


def test_backward_requires_scalar():
    t = Tape()
    x = t.leaf([1.0, 2.0], INPUT)
    with pytest.raises(ContractError):
        t.backward(t.relu(x))


def test_unreachable_leaf_gets_zero():
    t = Tape()
    a = t.leaf([1.0, 2.0])
    b = t.leaf(3.0, INPUT)
    g = t.backward(t.sum(a))
    assert g[b] == 0.0 and g[a].tolist() == [1.0, 1.0]


def test_chain_rule_nested_sigmoid():
    t = Tape()
    x = t.leaf(0.0, INPUT)
    got = float(t.backward(t.sigmoid(t.sigmoid(x)))[x])
    s = 1 / (1 + math.exp(-0.5))
    assert got == pytest.approx(0.25 * s * (1 - s), rel=1e-15)


def test_linearity_of_gradients(rng):
    m = random_mlp(rng, in_dim=5)
    x = rng.normal(size=5)
    alpha, beta = 1.7, -0.3

    def grads(build):
        t = Tape()
        pids = [t.leaf(p) for p in m.params()]
        xid = t.leaf(x, INPUT)
        out = build(t, record_forward(t, m, xid, pids))
        g = t.backward(out)
        return [g[i] for i in pids + [xid]]

    gf = grads(lambda t, z: t.sum(t.sigmoid(z)))
    gg = grads(lambda t, z: t.bce_with_logits(z, [1]))
    combo = grads(lambda t, z: t.add(t.scale(t.sum(t.sigmoid(z)), alpha), t.scale(t.bce_with_logits(z, [1]), beta)))
    for a, b, c in zip(gf, gg, combo):
        np.testing.assert_allclose(c, alpha * a + beta * b, rtol=0, atol=1e-12)


def test_backward_is_deterministic(rng):
    m = random_mlp(rng, in_dim=6)
    X = rng.normal(size=(9, 6))

    def run():
        t = Tape()
        pids = [t.leaf(p) for p in m.params()]
        loss = t.bce_with_logits(record_forward(t, m, t.leaf(X, INPUT), pids), np.arange(9) % 2)
        g = t.backward(loss)
        return [g[i].tobytes() for i in sorted(g)]

    assert run() == run()


def test_tape_is_topologically_ordered(rng):
    m = random_mlp(rng, in_dim=4)
    t = Tape()
    record_forward(t, m, t.leaf(rng.normal(size=4), INPUT), [t.leaf(p) for p in m.params()])
    for i, node in enumerate(t.nodes):
        assert all(j < i for j in node.inputs)


def test_batch_gradient_rows_match_single_examples(rng):
    m = random_mlp(rng, in_dim=4)
    X = rng.normal(size=(6, 4))
    t = Tape()
    xid = t.leaf(X, INPUT)
    G = t.backward(t.sum(t.sigmoid(record_forward(t, m, xid))))[xid]
    for i in range(6):
        t1 = Tape()
        x1 = t1.leaf(X[i], INPUT)
        g1 = t1.backward(t1.sum(t1.sigmoid(record_forward(t1, m, x1))))[x1]
        np.testing.assert_allclose(G[i], g1, rtol=1e-13, atol=1e-16)


def test_random_mlp_gradients_match_central_differences(rng):
    """A handful of networks here; the acceptance suite runs the full 50x10."""
    for _ in range(5):
        m = random_mlp(rng)
        x = rng.normal(size=m.input_dim)
        if oracles.preactivation_margin(m.weights, m.biases, x) < 1e-3:
            continue
        t = Tape()
        pids = [t.leaf(p) for p in m.params()]
        xid = t.leaf(x, INPUT)
        g = t.backward(t.sum(t.sigmoid(record_forward(t, m, xid, pids))))
        fd = oracles.central_diff(lambda v: oracles.forward(m.weights, m.biases, v), x)
        assert oracles.rel_error(g[xid], fd).max() < oracles.REL_TOL
        params = m.params()
        for k, pid in enumerate(pids):
            def f(v, k=k):
                q = list(params)
                q[k] = v
                return oracles.forward(q[0::2], q[1::2], x)
            assert oracles.rel_error(g[pid], oracles.central_diff(f, params[k])).max() < oracles.REL_TOL


def test_leaf_values_are_immutable():
    t = Tape()
    a = t.leaf([1.0, 2.0])
    with pytest.raises(ValueError):
        t.value(a)[0] = 5.0
