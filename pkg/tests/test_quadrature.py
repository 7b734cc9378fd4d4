import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mapenergy.catalog import euclid, sphere, torus
from mapenergy.errors import NonCompactDomain, NonFiniteField
from mapenergy.quadrature import build_grid, integrate, level_resolutions, observed_order, refine_and_estimate


def test_sphere_area_and_moments():
    for r in (0.5, 1.0, 2.0):
        g = build_grid(sphere(r), (24, 48))
        assert integrate(g, 1.0) == pytest.approx(4 * math.pi * r * r, rel=1e-13)
        z = np.cos(g.nodes[:, 0])
        assert integrate(g, z * z) == pytest.approx(4 * math.pi * r * r / 3, rel=1e-13)
        assert integrate(g, z) == pytest.approx(0.0, abs=1e-13)


def test_torus_trapezoid_is_exact_for_trig_polynomials():
    g = build_grid(torus(2), 16)
    x, y = g.nodes[:, 0], g.nodes[:, 1]
    assert integrate(g, np.cos(x) ** 2 * np.sin(2 * y) ** 2) == pytest.approx(math.pi**2, rel=1e-14)


def test_bare_int_resolution_on_sphere():
    assert build_grid(sphere(1.0), 8).resolution == (8, 16)


def test_noncompact_and_nonfinite():
    with pytest.raises(NonCompactDomain):
        build_grid(euclid(2))
    g = build_grid(torus(2), 4)
    field = np.ones(g.size)
    field[5] = np.nan
    with pytest.raises(NonFiniteField) as info:
        integrate(g, field)
    assert info.value.index == 5


def test_level_resolutions_halve():
    assert level_resolutions(sphere(1.0), (96, 192), 3) == [(24, 48), (48, 96), (96, 192)]


def test_observed_order():
    assert observed_order([1.0, 0.25, 0.0625]) == pytest.approx(2.0)
    assert observed_order([1.0, 0.5]) is None
    assert observed_order([1.0, 1.0, 1.0]) is None


def test_refine_and_estimate_sphere_area():
    est = refine_and_estimate(sphere(1.0), lambda g: np.ones(g.size), levels=3, resolution=(16, 32))
    assert est.value == pytest.approx(4 * math.pi, rel=1e-13)
    assert est.certificate < 1e-12


fields = st.lists(st.floats(-5, 5), min_size=3, max_size=3)


@given(fields, fields, st.floats(-4, 4), st.floats(-4, 4))
def test_integrate_is_linear(a, b, s, t):
    g = build_grid(sphere(1.3), (8, 16))
    th, ph = g.nodes[:, 0], g.nodes[:, 1]
    basis = np.stack([np.ones_like(th), np.cos(th), np.sin(th) * np.cos(ph)])
    f, h = np.array(a) @ basis, np.array(b) @ basis
    lhs = integrate(g, s * f + t * h)
    rhs = s * integrate(g, f) + t * integrate(g, h)
    assert lhs == pytest.approx(rhs, abs=1e-11 * (1 + abs(lhs)))
