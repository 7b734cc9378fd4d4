import math

import pytest

from mapenergy import calculus as C
from mapenergy.catalog import euclid, manifold, poincare, torus
from mapenergy.energy import (
    Verdict,
    classify_margin,
    energy_report,
    equality_band,
    equality_diagnostics,
    npc_check,
    verify_main_inequality,
)
from mapenergy.errors import NonCompactDomain
from mapenergy.maps import build_map
from mapenergy.quadrature import build_grid


def _report(spec, domain, target, **kw):
    return energy_report(build_map(spec, manifold(domain), manifold(target)), **kw)


def test_torus_identity_equality():
    rep = _report("identity", "torus2", "torus2", resolution=32)
    assert rep.E1 == pytest.approx(2 * (2 * math.pi) ** 2, rel=1e-13)
    assert rep.E2 == pytest.approx(0.0, abs=1e-20)
    assert rep.ric_min == 0.0
    assert rep.margin == pytest.approx(0.0, abs=1e-20)
    assert verify_main_inequality(rep) is Verdict.EQUALITY
    assert rep.equality.rigid
    assert rep.equality.rank_verdict == "CONSTANT(2)"


def test_sphere_inclusion_report():
    rep = _report("sphere_inclusion", "sphere2:r=1", "euclid3", resolution=(24, 48))
    assert rep.E1 == pytest.approx(8 * math.pi, rel=1e-12)
    assert rep.E2 == pytest.approx(16 * math.pi, rel=1e-12)
    assert rep.integral_Q == pytest.approx(8 * math.pi, rel=1e-12)
    assert rep.integral_sff == pytest.approx(8 * math.pi, rel=1e-12)
    assert rep.ric_min == pytest.approx(1.0, abs=1e-12)
    assert rep.margin == pytest.approx(8 * math.pi, rel=1e-12)
    assert verify_main_inequality(rep) is Verdict.HOLDS
    assert not rep.equality.rigid
    assert rep.equality.term_sff == pytest.approx(8 * math.pi, rel=1e-12)
    assert rep.energy_ratio == pytest.approx(2.0)


def test_constant_map_report():
    rep = _report("constant", "torus2", "poincare2", resolution=16)
    assert rep.E1 == 0.0 and rep.E2 == 0.0 and rep.margin == 0.0
    assert rep.energy_ratio is None
    assert verify_main_inequality(rep) is Verdict.EQUALITY
    assert rep.equality.rigid


def test_positive_target_fails_precondition():
    rep = _report("constant", "torus2", "sphere2:r=1", resolution=8)
    assert not rep.npc_certified
    assert verify_main_inequality(rep) is Verdict.PRECONDITION_FAILED
    rep = _report("identity", "sphere2:r=1", "sphere2:r=1", resolution=(8, 16))
    assert rep.worst_sec == pytest.approx(1.0, abs=1e-9)
    assert verify_main_inequality(rep) is Verdict.PRECONDITION_FAILED


def test_bookkeeping_identities():
    rep = _report("trig_random:seed=9", "sphere2:r=1", "poincare2", resolution=(24, 48))
    assert rep.bochner_residual == pytest.approx(rep.integral_Q + rep.integral_sff - rep.E2, abs=1e-12)
    eq = rep.equality
    assert eq.term_sec + eq.term_ric + eq.term_sff == pytest.approx(rep.margin + rep.bochner_residual, abs=1e-10)
    for term in ("term_sec", "term_ric", "term_sff"):
        assert getattr(eq, term) >= -eq.certificates[term]


def test_noncompact_domain_rejected():
    with pytest.raises(NonCompactDomain):
        energy_report(build_map("identity", euclid(2), euclid(2)))


def test_classify_margin_bands():
    assert classify_margin(0.0, 0.0, 1.0) is Verdict.EQUALITY
    assert classify_margin(1e-3, 1e-3, 1.0) is Verdict.EQUALITY
    assert classify_margin(1.0, 1e-6, 1.0) is Verdict.HOLDS
    assert classify_margin(-1e-7, 1e-7 / 3, 1.0) is Verdict.VIOLATION


def test_equality_band_and_diagnostics():
    f = build_map("identity", torus(2), torus(2))
    g = build_grid(torus(2), 16)
    rep = energy_report(f, grid=g)
    assert equality_band(rep) == pytest.approx(1e-9 * (1 + rep.E1))
    diag = equality_diagnostics(f, g, rep)
    assert diag.rigid and diag.rank_verdict == "CONSTANT(2)"


def test_npc_check_samples_random_planes():
    f = build_map("constant:0.1,0.2", torus(2), poincare(2))
    Jt = C.build_jet(f, build_grid(torus(2), 4).nodes)
    _, _, image_sec = C._pair_terms(Jt, C.pullback_spectrum(Jt))
    assert npc_check(Jt, image_sec) == pytest.approx(-1.0)
    assert npc_check(Jt, image_sec, planes=0) == -math.inf


def test_ricci_min_is_conservative():
    rep = _report("sphere_inclusion", "sphere2:r=2", "euclid3", resolution=(8, 16))
    assert rep.ric_min <= 0.25 + 1e-15
    assert rep.ric_min == rep.ric_min_grid - rep.ric_min_delta


def test_report_is_reproducible():
    a = _report("trig_random:seed=2", "torus2", "poincare2", resolution=16, seed=5).to_dict()
    b = _report("trig_random:seed=2", "torus2", "poincare2", resolution=16, seed=5).to_dict()
    assert a == b
