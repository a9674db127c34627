import math

import numpy as np
import pytest

from ordinal_depth import losses
from ordinal_depth.codec import encode
from ordinal_depth.errors import ArgumentError, ShapeError
from ordinal_depth.tensorcore import Rng


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


# ---------------------------------------------------------------- values

def test_bce_at_half_is_log2():
    m_d = 16
    target = encode(Rng(0).integers(m_d, (5, 5)) + 1, m_d)
    loss, _ = losses.ordinal_bce(np.zeros((m_d, 5, 5)), target, np.ones((5, 5)))
    assert abs(loss - math.log(2)) <= 1e-12


def test_bce_from_probs_examples():
    t = np.array([1.0, 1.0, 0.0, 0.0]).reshape(4, 1, 1)
    m = np.ones((1, 1))
    assert losses.ordinal_bce_from_probs(t, t, m) == 0.0
    p = np.array([0.9, 0.9, 0.1, 0.1]).reshape(4, 1, 1)
    assert abs(losses.ordinal_bce_from_probs(p, t, m) - 0.10536051565782628) < 1e-12
    assert abs(losses.ordinal_bce_from_probs(np.full((4, 1, 1), 0.5), t, m) - math.log(2)) < 1e-12


@pytest.mark.parametrize("m_s", [2, 6, 19])
def test_ce_at_uniform_probabilities(m_s):
    labels = Rng(m_s).integers(m_s, (4, 7))
    loss, _ = losses.semantic_ce(np.zeros((m_s, 4, 7)), labels)
    assert abs(loss - math.log(m_s) / m_s) <= 1e-12


def test_ce_uniform_value_for_19_classes():
    # log(19)/19 to 17 significant digits
    loss, _ = losses.semantic_ce(np.zeros((19, 2, 2)), np.zeros((2, 2), int))
    assert abs(loss - 0.15497047258770738) <= 1e-12


def test_ce_one_hot_confident_is_near_zero():
    logits = np.full((3, 1, 1), -50.0)
    logits[1] = 50.0
    loss, _ = losses.semantic_ce(logits, np.array([[1]]))
    assert 0.0 <= loss < 1e-30


def test_ce_ignore_label():
    logits = Rng(1).uniform((4, 3, 3), -2, 2)
    labels = np.full((3, 3), 255)
    loss, grad = losses.semantic_ce(logits, labels)
    assert loss == 0.0 and not grad.any()
    labels[1, 1] = 2
    _, grad = losses.semantic_ce(logits, labels)
    assert np.count_nonzero(np.abs(grad).sum(axis=0)) == 1


def test_ce_errors():
    with pytest.raises(ArgumentError):
        losses.semantic_ce(np.zeros((3, 2, 2)), np.full((2, 2), 3))
    with pytest.raises(ShapeError):
        losses.semantic_ce(np.zeros((3, 2, 2)), np.zeros((2, 3), int))


def test_total_loss_examples():
    r = losses.total_loss(0.3, 0.2, 10.0, 7)
    assert math.isclose(r.total, 2.3, rel_tol=1e-15)
    assert r.valid_pixel_count == 7
    assert losses.total_loss(0.3, 0.2, 0.0).total == 0.3
    with pytest.raises(ArgumentError):
        losses.total_loss(0.3, 0.2, -1.0)


def test_sigmoid_is_stable():
    s = losses.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_array_equal(s, [0.0, 0.5, 1.0])
    x = Rng(0).uniform((100,), -30, 30)
    np.testing.assert_allclose(losses.sigmoid(x), 1 / (1 + np.exp(-x)), rtol=1e-14)


def test_bce_masked_pixels_have_exact_zero_gradient():
    rng = Rng(2)
    y = rng.uniform((2, 6, 4, 4), -3, 3)
    t = encode(rng.integers(6, (2, 4, 4)) + 1, 6)
    mask = rng.random((2, 4, 4)) < 0.5
    _, g = losses.ordinal_bce(y, t, mask)
    assert np.all(g.transpose(0, 2, 3, 1)[~mask] == 0.0)
    assert not np.signbit(g.transpose(0, 2, 3, 1)[~mask]).any()


def test_bce_empty_mask():
    loss, g = losses.ordinal_bce(np.ones((3, 2, 2)), np.ones((3, 2, 2)), np.zeros((2, 2)))
    assert loss == 0.0 and not g.any()


# ------------------------------------------------------------- gradients

def test_ce_gradient_matches_finite_differences():
    rng = Rng(3)
    y = rng.uniform((2, 5, 3, 3), -2, 2)
    labels = rng.integers(5, (2, 3, 3))
    labels[0, 0, 0] = 255
    _, g = losses.semantic_ce(y, labels)
    num = central_diff(lambda: losses.semantic_ce(y, labels)[0], y)
    assert rel_err(g, num) < 1e-6


def test_bce_gradient_matches_finite_differences():
    rng = Rng(4)
    y = rng.uniform((2, 7, 3, 3), -3, 3)
    t = encode(rng.integers(7, (2, 3, 3)) + 1, 7)
    mask = rng.random((2, 3, 3)) < 0.7
    _, g = losses.ordinal_bce(y, t, mask)
    num = central_diff(lambda: losses.ordinal_bce(y, t, mask)[0], y)
    assert rel_err(g, num) < 1e-6


@pytest.mark.parametrize("lam", [0.0, 0.5, 10.0])
def test_coupled_gradient_matches_finite_differences(lam):
    rng = Rng(5)
    yd = rng.uniform((2, 4, 3, 3), -3, 3)
    ys = rng.uniform((2, 3, 3, 3), -2, 2)
    t = encode(rng.integers(4, (2, 3, 3)) + 1, 4)
    mask = rng.random((2, 3, 3)) < 0.8
    labels = rng.integers(3, (2, 3, 3))

    def f():
        return losses.coupled_loss(yd, t, mask, ys, labels, lam)[0].total

    _, gd, gs = losses.coupled_loss(yd, t, mask, ys, labels, lam)
    assert rel_err(gd, central_diff(f, yd)) < 1e-6
    if lam == 0:
        assert not gs.any() and not np.signbit(gs).any()
    else:
        assert rel_err(gs, central_diff(f, ys)) < 1e-6


def test_coupled_rejects_negative_lambda():
    with pytest.raises(ArgumentError):
        losses.coupled_loss(np.zeros((2, 1, 1)), np.ones((2, 1, 1)), np.ones((1, 1)),
                            np.zeros((2, 1, 1)), np.zeros((1, 1), int), -0.1)


def test_mae_loss_and_gradient():
    pred = np.array([[1.0, 4.0], [2.0, 9.0]])
    gt = np.array([[2.0, 3.0], [2.5, 0.0]])
    mask = np.array([[1, 1], [1, 0]], bool)
    loss, g = losses.mae_regression_loss(pred, gt, mask)
    assert math.isclose(loss, (1 + 1 + 0.5) / 3)
    np.testing.assert_array_equal(g, [[-1 / 3, 1 / 3], [-1 / 3, 0.0]])
    x = Rng(6).uniform((3, 3), 1, 5)
    gt2 = Rng(7).uniform((3, 3), 1, 5)
    m2 = np.ones((3, 3), bool)
    _, g2 = losses.mae_regression_loss(x, gt2, m2)
    assert rel_err(g2, central_diff(lambda: losses.mae_regression_loss(x, gt2, m2)[0], x)) < 1e-6
