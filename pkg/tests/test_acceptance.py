"""Acceptance suite: one test (or group) per criterion, at the stated tolerances.

A line per criterion is printed in the terminal summary.
"""

import filecmp
import math
import time

import numpy as np
import pytest

from mapenergy import calculus as C
from mapenergy.catalog import manifold, poincare, sphere, torus
from mapenergy.energy import Verdict, energy_report, verify_main_inequality
from mapenergy.errors import RankDeficient
from mapenergy.flow import DiscreteMap
from mapenergy.geometry import sectional_at
from mapenergy.maps import build_map
from mapenergy.projective import fit_theta, projective_check, recover_theta, symmetric_product
from mapenergy.quadrature import build_grid
from mapenergy.scenario import bundled_scenarios, load_scenario, run_scenario

BOCHNER_COMBOS = {(d, t) for d in ("torus2", "sphere2") for t in ("euclid2", "euclid3", "poincare2")}
FLAT_EQUALITY = ("torus_identity", "torus_linear", "torus_constant_disk")


def _bundled(mode=None, prefix=None):
    out = []
    for p in bundled_scenarios():
        sc = load_scenario(p)
        if (mode is None or sc.mode == mode) and (prefix is None or sc.name.startswith(prefix)):
            out.append(sc)
    return out


@pytest.fixture(scope="module")
def first_run(tmp_path_factory):
    """Every bundled scenario run once, with wall times."""
    root = tmp_path_factory.mktemp("run1")
    outcomes, times = {}, {}
    for sc in _bundled():
        t0 = time.perf_counter()
        outcomes[sc.name] = run_scenario(sc, root)
        times[sc.name] = time.perf_counter() - t0
    return root, outcomes, times


# ---------------------------------------------------------------------------
# 1


@pytest.mark.criterion(1, "curvature anchors (sphere +1, disk -1, torus 0) at 100 points, < 1 s")
def test_curvature_anchors():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    for M, K in ((sphere(1.0), 1.0), (poincare(2), -1.0), (torus(2), 0.0)):
        p = M.sample_interior(rng, 100)
        u = rng.normal(size=(100, 2))
        v = rng.normal(size=(100, 2))
        sec = sectional_at(M, p, u, v)
        assert np.max(np.abs(sec - K)) <= 1e-8, M.name
    assert time.perf_counter() - t0 < 1.0


# ---------------------------------------------------------------------------
# 2


@pytest.mark.criterion(2, "S^2(1) in R^3 closed-form energies at 96x192, 3 levels, < 30 s")
def test_sphere_inclusion_oracle():
    t0 = time.perf_counter()
    f = build_map("sphere_inclusion", sphere(1.0), manifold("euclid3"))
    rep = energy_report(f, resolution=(96, 192), levels=3)
    elapsed = time.perf_counter() - t0
    assert abs(rep.E1 - 8 * math.pi) <= 1e-4
    assert abs(rep.E2 - 16 * math.pi) <= 1e-3
    assert abs(rep.integral_sff - 8 * math.pi) <= 1e-3
    assert abs(rep.integral_Q - 8 * math.pi) <= 1e-3
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# 3


def _residual_order(values, floor):
    """Order of the last refinement step whose coarse residual is above ``floor``.

    ``inf`` when the fine residual reached the floor; ``None`` when every
    level is already at the floor (exact quadrature).
    """
    mags = [abs(v) for v in values]
    order = None
    for a, b in zip(mags, mags[1:]):
        if a <= floor:
            continue
        order = math.inf if b <= floor else math.log2(a / b)
    return order


@pytest.mark.criterion(3, "Bochner residual <= 1e-3(1+E2) and observed order >= 1.9 on >= 6 bundled cases")
def test_bochner_identity():
    cases = _bundled(mode="verify", prefix="bochner_")
    combos = set()
    for sc in cases:
        dom, tgt = manifold(sc.domain), manifold(sc.target)
        combos.add((dom.name.split(":")[0], tgt.name))
        f = build_map(sc.map, dom, tgt)
        rep = energy_report(f, resolution=sc.resolution, levels=3)
        assert abs(rep.bochner_residual) <= 1e-3 * (1 + rep.E2), sc.name
        # five-level ladder ending at the default resolution
        ladder = energy_report(f, resolution=sc.resolution, levels=5)
        floor = 1e-12 * (1 + ladder.E2 + ladder.E1)
        order = _residual_order(ladder.level_values["bochner_residual"], floor)
        assert order is None or order >= 1.9, (sc.name, ladder.level_values["bochner_residual"])
    assert len(cases) >= 6
    assert combos >= BOCHNER_COMBOS


# ---------------------------------------------------------------------------
# 4 and 5


def _random_cases():
    rng = np.random.default_rng(2024)
    combos = sorted(BOCHNER_COMBOS)
    cases = []
    for k in range(210):
        d, t = combos[k % len(combos)]
        amp = float(rng.uniform(0.05, 0.8))
        cases.append((d, t, f"trig_random:seed={k},amplitude={amp:.4f},degree={1 + k % 3}"))
    return cases


@pytest.fixture(scope="module")
def random_reports():
    t0 = time.perf_counter()
    out = []
    for d, t, spec in _random_cases():
        f = build_map(spec, manifold(d), manifold(t))
        rep = energy_report(f, seed=7)
        out.append((spec, rep, verify_main_inequality(rep)))
    return out, time.perf_counter() - t0


@pytest.mark.criterion(4, ">= 200 random maps into NPC targets give no VIOLATION; EQUALITY exactly on flat/constant cases; < 5 min")
def test_no_violation_on_random_maps(random_reports, first_run, record_property):
    reports, elapsed = random_reports
    record_property("detail", f"{len(reports)} random maps in {elapsed:.1f} s")
    assert len(reports) >= 200
    verdicts = [v for _, _, v in reports]
    assert Verdict.VIOLATION not in verdicts
    # nonconstant random maps are never totally geodesic here
    assert Verdict.EQUALITY not in verdicts
    assert elapsed < 300.0
    _, outcomes, _ = first_run
    for name in FLAT_EQUALITY:
        assert outcomes[name].verdict == Verdict.EQUALITY.value, name
    for name, out in outcomes.items():
        if out.mode == "verify" and name not in FLAT_EQUALITY:
            assert out.verdict != Verdict.EQUALITY.value, name


@pytest.mark.criterion(4, ">= 200 random maps into NPC targets give no VIOLATION; EQUALITY exactly on flat/constant cases; < 5 min")
@pytest.mark.parametrize("domain", ["torus2", "sphere2:r=1"])
@pytest.mark.parametrize("target", ["euclid2", "euclid3", "poincare2"])
def test_constant_maps_are_equality(domain, target):
    rep = energy_report(build_map("constant", manifold(domain), manifold(target)), levels=2, resolution=16)
    assert verify_main_inequality(rep) is Verdict.EQUALITY


@pytest.mark.criterion(5, "three proof terms >= -certificate and sum reconciles with margin + residual")
def test_equality_decomposition(random_reports):
    reports, _ = random_reports
    checked = 0
    for spec, rep, _ in reports:
        if not rep.npc_certified:
            continue
        eq = rep.equality
        for term in ("term_sec", "term_ric", "term_sff"):
            assert getattr(eq, term) >= -eq.certificates[term], (spec, term)
        total = eq.term_sec + eq.term_ric + eq.term_sff
        assert abs(total - (rep.margin + rep.bochner_residual)) <= 1e-9 * (1 + rep.E1 + rep.E2), spec
        checked += 1
    assert checked == len(reports)


# ---------------------------------------------------------------------------
# 6


@pytest.mark.criterion(6, "projective identities for theta = 0, theta round trip to 1e-8, factor-2 check never VIOLATION")
def test_projective_identities(first_run):
    _, outcomes, _ = first_run
    zero = [sc for sc in _bundled(mode="projective") if sc.theta == "zero"]
    degenerate = [sc for sc in zero if outcomes[sc.name].verdict != Verdict.NOT_PROJECTIVE.value]
    assert len(degenerate) >= 2
    for sc in degenerate:
        rep = outcomes[sc.name].report
        for key in ("projective_residual", "tension_residual", "identity_residual"):
            assert rep[key] < 1e-8, (sc.name, key)

    rng = np.random.default_rng(11)
    for d, t in (("torus2", "poincare2"), ("sphere2:r=1", "euclid3"), ("sphere2:r=1", "poincare2")):
        M = manifold(d)
        f = build_map("trig_random:seed=3", M, manifold(t))
        pts = M.sample_interior(rng, 50, shrink=0.05)
        J = C.build_jet(f, pts)
        theta0 = rng.normal(size=(50, M.dim))
        fit = fit_theta(J.d1, symmetric_product(theta0, J.d1), J.g, J.gbar)
        live = np.setdiff1d(np.arange(50), fit.skipped)
        assert live.size >= 45
        assert np.max(np.abs(fit.theta[live] - theta0[live])) <= 1e-8

    flat = ["identity:torus2", "torus_linear:a=2,b=1,c=1,d=1:torus2", "constant:poincare2"]
    flat += [f"trig_random:seed={k}:{t}" for k in range(4) for t in ("euclid2", "euclid3", "poincare2")]
    grid = build_grid(torus(2), 32)
    for entry in flat:
        spec, _, target = entry.rpartition(":")
        f = build_map(spec, torus(2), manifold(target))
        for theta in (np.zeros((grid.size, 2)), _recovered(f, grid)):
            rep = projective_check(f, grid, theta)
            assert rep.verdict != Verdict.VIOLATION.value, entry


def _recovered(f, grid):
    try:
        return recover_theta(f, grid).theta
    except RankDeficient:
        return np.zeros((grid.size, 2))


# ---------------------------------------------------------------------------
# 7


@pytest.mark.slow
@pytest.mark.criterion(7, "harmonic flow E1 -> 1e-6 E1(0); biharmonic flow sup|tau2| <= 1e-5, sup|tau1| <= 1e-3; margins; < 2 min each")
def test_flows(first_run, record_property):
    _, outcomes, times = first_run
    record_property("detail", ", ".join(f"{n}: {times[n]:.1f} s" for n in ("flow_sphere_harmonic", "flow_torus_biharmonic")))
    harmonic = outcomes["flow_sphere_harmonic"].report
    assert harmonic["domain"].startswith("sphere2") and harmonic["target"] == "poincare2"
    assert harmonic["mode"] == "harmonic" and harmonic["shape"] == [64, 64]
    assert harmonic["E1_ratio"] <= 1e-6

    bih = outcomes["flow_torus_biharmonic"].report
    assert bih["domain"] == "torus2" and bih["target"] == "poincare2"
    assert bih["mode"] == "biharmonic" and bih["shape"] == [64, 64]
    assert bih["sup_tau2"] <= 1e-5
    assert bih["sup_tau1"] <= 1e-3

    for name in ("flow_sphere_harmonic", "flow_torus_biharmonic"):
        trace = outcomes[name].report["trace"]
        assert all(trace["npc_certified"])
        assert outcomes[name].report["min_margin_slack"] >= 0.0
        assert times[name] < 120.0, (name, times[name])


# ---------------------------------------------------------------------------
# 8


def _tension_errors(f, shapes, mask=None):
    errs = []
    for shape in shapes:
        m = DiscreteMap.from_analytic(f, shape)
        err = np.abs(m.tension - C.tension_at(f, m.grid.nodes))
        if mask is not None:
            err = err[mask(m.grid)]
        errs.append(float(np.max(err)))
    return errs


@pytest.mark.criterion(8, "grid-backed tau1 converges to analytic tau1 with order >= 1.9 over h, h/2, h/4")
def test_grid_analytic_consistency():
    f = build_map("torus_to_disk:amplitude=0.4,frequency=2", torus(2), poincare(2))
    errs = _tension_errors(f, (16, 32, 64))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.9, errs

    def bulk(grid):
        rows = np.arange(grid.size) // grid.shape[1]
        return (rows >= grid.shape[0] // 4) & (rows < 3 * grid.shape[0] // 4)

    g = build_map("sphere_poly", sphere(1.0), poincare(2))
    errs = _tension_errors(g, ((16, 16), (32, 32), (64, 64)), bulk)
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.9, errs


# ---------------------------------------------------------------------------
# 9


@pytest.mark.slow
@pytest.mark.criterion(9, "bundled scenarios rerun with a fixed seed give byte-identical JSON and CSV")
def test_determinism(first_run, tmp_path):
    root, outcomes, _ = first_run
    for sc in _bundled():
        run_scenario(sc, tmp_path)
        for path in sorted((root / sc.name).iterdir()):
            other = tmp_path / sc.name / path.name
            assert other.exists(), other
            assert filecmp.cmp(path, other, shallow=False), path
    assert all(out.exit_code == 0 for out in outcomes.values())
