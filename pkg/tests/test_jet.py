import numpy as np
import pytest

from mapenergy import jet as J


def _eval(fn, pts):
    xs = J.Jet.variables(pts)
    out = fn(xs)
    return out.val, out.grad, out.hess


def test_product_of_sin_and_exp():
    pts = np.array([[0.3, -0.7], [1.2, 0.4]])
    val, grad, hess = _eval(lambda x: J.sin(x[0]) * J.exp(x[1]), pts)
    x, y = pts[:, 0], pts[:, 1]
    assert np.allclose(val, np.sin(x) * np.exp(y))
    assert np.allclose(grad[:, 0], np.cos(x) * np.exp(y))
    assert np.allclose(grad[:, 1], np.sin(x) * np.exp(y))
    assert np.allclose(hess[:, 0, 0], -np.sin(x) * np.exp(y))
    assert np.allclose(hess[:, 0, 1], np.cos(x) * np.exp(y))
    assert np.allclose(hess[:, 1, 0], hess[:, 0, 1])


def test_quotient_and_power():
    pts = np.array([[0.5, 2.0]])
    val, grad, hess = _eval(lambda x: x[0] ** 3 / (1.0 + x[1] * x[1]), pts)
    x, y = 0.5, 2.0
    assert val[0] == pytest.approx(x**3 / (1 + y * y))
    assert grad[0, 0] == pytest.approx(3 * x * x / (1 + y * y))
    assert grad[0, 1] == pytest.approx(-2 * y * x**3 / (1 + y * y) ** 2)
    assert hess[0, 0, 0] == pytest.approx(6 * x / (1 + y * y))
    assert hess[0, 1, 1] == pytest.approx(x**3 * (6 * y * y - 2) / (1 + y * y) ** 3)


@pytest.mark.parametrize(
    "fn,d0,d1,d2",
    [
        (J.log, np.log, lambda x: 1 / x, lambda x: -1 / x**2),
        (J.sqrt, np.sqrt, lambda x: 0.5 / np.sqrt(x), lambda x: -0.25 * x**-1.5),
        (J.tanh, np.tanh, lambda x: 1 - np.tanh(x) ** 2, lambda x: -2 * np.tanh(x) * (1 - np.tanh(x) ** 2)),
        (J.arctan, np.arctan, lambda x: 1 / (1 + x * x), lambda x: -2 * x / (1 + x * x) ** 2),
        (J.cos, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)),
    ],
)
def test_univariate_rules(fn, d0, d1, d2):
    pts = np.array([[0.4], [1.7]])
    val, grad, hess = _eval(lambda x: fn(x[0]), pts)
    x = pts[:, 0]
    assert np.allclose(val, d0(x))
    assert np.allclose(grad[:, 0], d1(x))
    assert np.allclose(hess[:, 0, 0], d2(x))


def test_constants_pass_through():
    assert J.sin(0.5) == pytest.approx(np.sin(0.5))
    assert J.value(3.0) == 3.0
