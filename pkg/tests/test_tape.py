import numpy as np
import pytest

from constyle.prompter import tape as T
from constyle.prompter.losses import info_nce

from gradcheck import max_error

POINTS = 100
TOL = 1e-4


def params(gen):
    return {
        "w": gen.normal(0, 0.4, size=(4, 2, 3, 3)),
        "b": gen.normal(0, 0.1, size=4),
        "g": gen.uniform(0.5, 1.5, size=4),
        "beta": gen.normal(0, 0.1, size=4),
        "lw": gen.normal(0, 0.5, size=(5, 4)),
        "lb": gen.normal(0, 0.1, size=5),
    }


def network(p, x, proj, train=True, tape=None):
    vs = {k: T.Var(v, requires_grad=True) for k, v in p.items()}
    xv = T.Var(x, requires_grad=True)
    h = T.conv2d(tape, xv, vs["w"], vs["b"], stride=2, pad=1)
    if train:
        h, _, _ = T.batchnorm_train(tape, h, vs["g"], vs["beta"])
    else:
        h = T.batchnorm_eval(tape, h, vs["g"], vs["beta"], np.full(4, 0.1), np.full(4, 0.7))
    h = T.relu(tape, h)
    h = T.global_avg_pool(tape, h)
    h = T.linear(tape, h, vs["lw"], vs["lb"])
    h = T.l2_normalize(tape, h)
    value = float((h.value * proj).sum())
    out = T.scalar_loss(tape, (h,), value, (proj,))
    return out, vs, xv


@pytest.mark.parametrize("train", [True, False])
def test_network_gradients(train):
    gen = np.random.default_rng(0 if train else 1)
    worst = 0.0
    for _ in range(POINTS):
        p = params(gen)
        x = gen.normal(size=(3, 2, 6, 6))
        proj = gen.normal(size=(3, 5))
        tape = T.Tape()
        out, vs, xv = network(p, x, proj, train, tape)
        tape.backward(out)
        name = list(p)[int(gen.integers(len(p)))]

        def f(val, name=name):
            q = dict(p)
            q[name] = val
            return float(network(q, x, proj, train)[0].value)

        worst = max(worst, max_error(f, p[name], vs[name].grad, gen, n_dirs=1))
        worst = max(worst, max_error(lambda v: float(network(p, v, proj, train)[0].value), x, xv.grad, gen, n_dirs=1))
    assert worst < TOL


def test_weighted_sum_and_loss_chain():
    gen = np.random.default_rng(2)
    worst = 0.0
    for _ in range(POINTS):
        z = gen.normal(size=(2, 4))
        negs = gen.normal(size=(6, 4))
        negs /= np.linalg.norm(negs, axis=1, keepdims=True)
        k = gen.normal(size=(2, 4))
        k /= np.linalg.norm(k, axis=1, keepdims=True)
        w = gen.uniform(0.1, 2, size=2)

        def f(zz, tape=None):
            zv = T.Var(zz, requires_grad=True)
            q = T.l2_normalize(tape, zv)
            v1, g1 = info_nce(q.value, k, negs, 0.2)
            l1 = T.scalar_loss(tape, (q,), v1, (g1,))
            v2 = float((zz ** 2).sum())
            l2 = T.scalar_loss(tape, (zv,), v2, (2 * zz,))
            return T.weighted_sum(tape, (l1, l2), w), zv

        tape = T.Tape()
        out, zv = f(z, tape)
        tape.backward(out)
        worst = max(worst, max_error(lambda zz: float(f(zz)[0].value), z, zv.grad, gen))
    assert worst < TOL


def test_no_tape_records_nothing():
    x = T.Var(np.ones((1, 1, 3, 3)), requires_grad=True)
    out = T.relu(None, x)
    assert out.requires_grad and out.grad is None


def test_conv_matches_direct_correlation():
    gen = np.random.default_rng(3)
    x = gen.normal(size=(1, 2, 5, 5))
    w = gen.normal(size=(3, 2, 3, 3))
    b = gen.normal(size=3)
    out = T.conv2d(None, T.Var(x), T.Var(w), T.Var(b), stride=1, pad=1).value
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((1, 3, 5, 5))
    for o in range(3):
        for i in range(5):
            for j in range(5):
                ref[0, o, i, j] = (xp[0, :, i:i + 3, j:j + 3] * w[o]).sum() + b[o]
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_batchnorm_train_stats():
    x = np.random.default_rng(4).normal(2, 3, size=(4, 2, 3, 3))
    one, zero = T.Var(np.ones(2)), T.Var(np.zeros(2))
    out, mean, var = T.batchnorm_train(None, T.Var(x), one, zero)
    np.testing.assert_allclose(mean, x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(var, x.var(axis=(0, 2, 3), ddof=1))
    np.testing.assert_allclose(out.value.mean(axis=(0, 2, 3)), 0, atol=1e-12)
