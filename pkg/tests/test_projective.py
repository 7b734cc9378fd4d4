import numpy as np
import pytest

from mapenergy import calculus as C
from mapenergy.catalog import euclid, manifold, poincare, sphere, torus
from mapenergy.energy import Verdict
from mapenergy.errors import RankDeficient, UnknownMap
from mapenergy.maps import build_map
from mapenergy.projective import fit_theta, one_form, projective_check, recover_theta, symmetric_product
from mapenergy.quadrature import build_grid


def test_theta_zero_totally_geodesic():
    g = build_grid(torus(2), 16)
    rep = projective_check(build_map("torus_linear:a=1,b=2,c=-1,d=3", torus(2), torus(2)), g, one_form("zero", 2))
    assert rep.projective_residual < 1e-12
    assert rep.tension_residual < 1e-12
    assert rep.identity_residual < 1e-12
    assert rep.margin == pytest.approx(0.0, abs=1e-12)
    assert rep.verdict == Verdict.EQUALITY.value


def test_constant_map_equality():
    g = build_grid(torus(2), 8)
    rep = projective_check(build_map("constant", torus(2), poincare(2)), g, one_form("zero", 2))
    assert rep.verdict == Verdict.EQUALITY.value
    assert rep.E1 == 0.0 and rep.E2 == 0.0


def test_negative_control_is_not_projective():
    g = build_grid(sphere(1.0), (16, 32))
    rep = projective_check(build_map("sphere_inclusion", sphere(1.0), euclid(3)), g, one_form("zero", 2))
    assert rep.verdict == Verdict.NOT_PROJECTIVE.value
    assert rep.projective_residual == pytest.approx(np.sqrt(2.0), rel=1e-9)


def test_sphere_inclusion_fit_has_residual():
    g = build_grid(sphere(1.0), (8, 16))
    fit = recover_theta(build_map("sphere_inclusion", sphere(1.0), euclid(3)), g)
    assert fit.max_residual > 0.1


def test_recover_theta_on_totally_geodesic_map():
    g = build_grid(torus(2), 8)
    fit = recover_theta(build_map("identity", torus(2), torus(2)), g)
    assert np.allclose(fit.theta, 0.0, atol=1e-12)
    assert fit.max_residual < 1e-12


def test_round_trip_recovers_injected_theta(rng):
    # synthetic ∇df := θ₀⊗df + df⊗θ₀ on a curved domain and target
    M, N = sphere(1.0), poincare(2)
    f = build_map("trig_random:seed=1", M, N)
    pts = M.sample_interior(rng, 40, shrink=0.05)
    Jt = C.build_jet(f, pts)
    theta0 = rng.normal(size=(len(pts), 2))
    B = symmetric_product(theta0, Jt.d1)
    fit = fit_theta(Jt.d1, B, Jt.g, Jt.gbar)
    live = np.setdiff1d(np.arange(len(pts)), fit.skipped)
    assert live.size > 30
    assert np.allclose(fit.theta[live], theta0[live], atol=1e-8)
    assert fit.max_residual < 1e-8


def test_constant_map_theta_is_unidentifiable():
    g = build_grid(torus(2), 4)
    with pytest.raises(RankDeficient):
        recover_theta(build_map("constant", torus(2), euclid(2)), g)


def test_one_form_catalog():
    pts = np.zeros((3, 2))
    assert np.allclose(one_form("const:1,2", 2)(pts), [[1, 2]] * 3)
    with pytest.raises(UnknownMap):
        one_form("const:1", 2)
    with pytest.raises(UnknownMap):
        one_form("closed", 2)


def test_nonzero_theta_on_linear_map_is_not_projective():
    g = build_grid(torus(2), 8)
    f = build_map("torus_linear", torus(2), torus(2))
    rep = projective_check(f, g, one_form("const:0.5,0", 2))
    assert rep.verdict == Verdict.NOT_PROJECTIVE.value


@pytest.mark.parametrize("spec,target", [("torus_linear:a=1,b=0,c=0,d=2", "torus2"), ("identity", "torus2")])
def test_factor_two_margin_on_flat_domain(spec, target):
    g = build_grid(torus(2), 16)
    rep = projective_check(build_map(spec, torus(2), manifold(target)), g, one_form("zero", 2))
    assert rep.verdict != Verdict.VIOLATION.value
