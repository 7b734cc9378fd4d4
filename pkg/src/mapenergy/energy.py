"""Global energies, the Bochner identity and inequality verdicts.

For a map f from a closed manifold the integral identity

    ∫ (Q(f) + ‖∇df‖² - ‖τ₁(f)‖²) dv = 0

holds, so E₂ ≥ ∫Q ≥ Ric_min · E₁ whenever the target has non-positive
sectional curvature on f(M). :func:`energy_report` integrates every piece
on a refinement ladder and :func:`verify_main_inequality` turns the result
into a verdict.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import calculus as C
from .errors import NonCompactDomain
from .geometry import ricci_min, sectional_from_lowered
from .maps import MapBetweenManifolds
from .quadrature import (
    DEFAULT_LEVELS,
    QuadratureGrid,
    build_grid,
    integrate,
    level_resolutions,
    observed_order,
)

NPC_TOLERANCE = 1e-9
RANDOM_PLANES = 8
EQUALITY_SLACK = 1e-9


class Verdict(str, Enum):
    HOLDS = "HOLDS"
    EQUALITY = "EQUALITY"
    VIOLATION = "VIOLATION"
    PRECONDITION_FAILED = "PRECONDITION_FAILED"
    NOT_PROJECTIVE = "NOT_PROJECTIVE"


@dataclass
class EqualityDiagnostics:
    term_sec: float
    term_ric: float
    term_sff: float
    certificates: dict
    rank_verdict: str
    sup_sff: float
    rigid: bool
    totally_geodesic: bool
    ricci_aligned: bool
    image_flat: bool
    closure_error: float


@dataclass
class EnergyReport:
    map: str
    domain: str
    target: str
    E1: float
    E2: float
    integral_Q: float
    integral_sff: float
    bochner_residual: float
    ric_min: float
    ric_min_grid: float
    ric_min_delta: float
    margin: float
    npc_certified: bool
    worst_sec: float
    equality: Optional[EqualityDiagnostics]
    resolution: list
    levels: int
    certificates: dict
    level_values: dict
    residual_order: Optional[float]

    @property
    def energy_ratio(self) -> Optional[float]:
        """E₂ / E₁, the spectral-gap style ratio (None for E₁ = 0)."""
        return self.E2 / self.E1 if self.E1 > 0 else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["energy_ratio"] = self.energy_ratio
        return d


@dataclass
class _LevelIntegrals:
    E1: float
    E2: float
    Q: float
    sff: float
    ric_part: float
    sec_part: float


def _level_fields(f: MapBetweenManifolds, grid: QuadratureGrid, rank_tolerance: float):
    J = C.build_jet(f, grid.nodes)
    spec = C.pullback_spectrum(J, rank_tolerance)
    B = C.second_fundamental_form(J)
    tau = C.tension(J, B)
    ric_part, sec_part, image_sec = C._pair_terms(J, spec)
    fields = {
        "e": C.energy_density(J),
        "tau2": C.target_norm2(J, tau),
        "sff": C.sff_norm2(J, B),
        "ric_part": ric_part,
        "sec_part": sec_part,
    }
    return J, spec, B, fields, image_sec


def _integrals(grid: QuadratureGrid, fields: dict) -> _LevelIntegrals:
    E1 = integrate(grid, fields["e"])
    E2 = integrate(grid, fields["tau2"])
    sff = integrate(grid, fields["sff"])
    ric_part = integrate(grid, fields["ric_part"])
    sec_part = integrate(grid, fields["sec_part"])
    return _LevelIntegrals(E1, E2, integrate(grid, fields["ric_part"] - fields["sec_part"]), sff, ric_part, sec_part)


def npc_check(J: C.MapJet, image_sec: np.ndarray, seed: int = 0, planes: int = RANDOM_PLANES):
    """Largest sampled target sectional curvature at f(nodes).

    Samples the df-image planes and ``planes`` random planes per node.
    """
    worst = -math.inf
    finite = image_sec[np.isfinite(image_sec)]
    if finite.size:
        worst = float(np.max(finite))
    m = J.target.dim
    if m >= 2 and planes > 0:
        rng = np.random.default_rng(seed)
        Rb = J.riemann_bar_lowered
        for _ in range(planes):
            u = rng.normal(size=(J.size, m))
            v = rng.normal(size=(J.size, m))
            sec, _ = sectional_from_lowered(Rb, J.gbar, u, v)
            sec = sec[np.isfinite(sec)]
            if sec.size:
                worst = max(worst, float(np.max(sec)))
    return worst


def energy_report(
    f: MapBetweenManifolds,
    grid: Optional[QuadratureGrid] = None,
    levels: int = DEFAULT_LEVELS,
    resolution=None,
    rank_tolerance: float = C.RANK_TOLERANCE,
    seed: int = 0,
    npc_tolerance: float = NPC_TOLERANCE,
) -> EnergyReport:
    """All global functionals of ``f`` on a refinement ladder.

    The ladder ends at ``grid`` (or ``resolution``) and halves the node
    count per axis for each of the ``levels - 1`` coarser levels. Values are
    taken from the finest level; certificates are the last-level changes.
    """
    M = f.domain
    if not M.compact:
        raise NonCompactDomain(f"{M.name} is not compact")
    if grid is not None:
        resolution = grid.resolution
    ress = level_resolutions(M, resolution, levels)
    per_level: list[_LevelIntegrals] = []
    fine = None
    for lvl, res in enumerate(ress):
        g = build_grid(M, res, level=lvl)
        J, spec, B, fields, image_sec = _level_fields(f, g, rank_tolerance)
        per_level.append(_integrals(g, fields))
        fine = (g, J, spec, B, fields, image_sec)
    g, J, spec, B, fields, image_sec = fine

    rmin = ricci_min(M, g)
    ric_min = rmin.conservative
    worst = npc_check(J, image_sec, seed=seed)
    npc = worst <= npc_tolerance

    def series(key):
        return [getattr(v, key) for v in per_level]

    def cert(vals):
        return abs(vals[-1] - vals[-2]) if len(vals) > 1 else 0.0

    residuals = [v.Q + v.sff - v.E2 for v in per_level]
    margins = [v.E2 - ric_min * v.E1 for v in per_level]
    term_sec = [-v.sec_part for v in per_level]
    term_ric = [v.ric_part - ric_min * v.E1 for v in per_level]
    term_sff = series("sff")
    last = per_level[-1]
    level_values = {
        "E1": series("E1"),
        "E2": series("E2"),
        "integral_Q": series("Q"),
        "integral_sff": series("sff"),
        "bochner_residual": residuals,
        "margin": margins,
    }
    certificates = {k: cert(v) for k, v in level_values.items()}
    floor = 1e-12 * (1.0 + abs(last.E2) + abs(last.E1))
    order = observed_order(residuals, floor=floor) if abs(residuals[-1]) > floor else None

    # equality diagnostics: the three non-negative terms of the proof
    tcert = {"term_sec": cert(term_sec), "term_ric": cert(term_ric), "term_sff": cert(term_sff)}
    slack = EQUALITY_SLACK * (1.0 + last.E1)
    tvals = {"term_sec": term_sec[-1], "term_ric": term_ric[-1], "term_sff": term_sff[-1]}
    small = {k: abs(v) <= 2.0 * tcert[k] + slack for k, v in tvals.items()}
    profile = C.rank_profile_from_jet(J, rank_tolerance)
    closure = (tvals["term_sec"] + tvals["term_ric"] + tvals["term_sff"]) - (margins[-1] + residuals[-1])
    equality = EqualityDiagnostics(
        term_sec=tvals["term_sec"],
        term_ric=tvals["term_ric"],
        term_sff=tvals["term_sff"],
        certificates=tcert,
        rank_verdict=profile.verdict,
        sup_sff=float(np.sqrt(np.max(fields["sff"]))),
        rigid=all(small.values()),
        totally_geodesic=small["term_sff"],
        ricci_aligned=small["term_ric"],
        image_flat=small["term_sec"],
        closure_error=float(closure),
    )
    return EnergyReport(
        map=getattr(f, "name", "map"),
        domain=M.name,
        target=f.target.name,
        E1=last.E1,
        E2=last.E2,
        integral_Q=last.Q,
        integral_sff=last.sff,
        bochner_residual=residuals[-1],
        ric_min=ric_min,
        ric_min_grid=rmin.value,
        ric_min_delta=rmin.delta,
        margin=margins[-1],
        npc_certified=bool(npc),
        worst_sec=worst if math.isfinite(worst) else 0.0,
        equality=equality,
        resolution=list(g.resolution),
        levels=levels,
        certificates=certificates,
        level_values=level_values,
        residual_order=order,
    )


def equality_band(report: EnergyReport) -> float:
    return 2.0 * report.certificates["margin"] + EQUALITY_SLACK * (1.0 + report.E1)


def classify_margin(margin: float, certificate: float, E1: float) -> Verdict:
    slack = EQUALITY_SLACK * (1.0 + E1)
    if abs(margin) <= 2.0 * certificate + slack:
        return Verdict.EQUALITY
    if margin >= -(certificate + slack):
        return Verdict.HOLDS
    return Verdict.VIOLATION


def verify_main_inequality(report: EnergyReport) -> Verdict:
    """Verdict for E₂ ≥ Ric_min · E₁.

    Without certified non-positive target curvature the inequality has no
    claim to check and the verdict is PRECONDITION_FAILED.
    """
    if not report.npc_certified:
        return Verdict.PRECONDITION_FAILED
    return classify_margin(report.margin, report.certificates["margin"], report.E1)


def equality_diagnostics(f: MapBetweenManifolds, grid: QuadratureGrid, report: EnergyReport) -> EqualityDiagnostics:
    """The proof's three-term decomposition, with the rank verdict taken on ``grid``."""
    eq = report.equality
    profile = C.rank_profile(f, grid)
    return EqualityDiagnostics(**{**asdict(eq), "rank_verdict": profile.verdict})
