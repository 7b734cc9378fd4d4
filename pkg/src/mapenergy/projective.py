"""Checks for projective maps, ∇df = θ⊗df + df⊗θ.

For such maps τ₁ = 2 df(θ♯), and the Bochner identity becomes
E₂ = 2 ∫ (Q + 2‖θ‖²‖df‖²), which gives E₂ ≥ 2 Ric_min E₁ under
non-positive target curvature.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Union

import numpy as np

from . import calculus as C
from .energy import Verdict, classify_margin, npc_check, NPC_TOLERANCE
from .errors import RankDeficient, UnknownMap
from .geometry import ricci_min
from .maps import MapBetweenManifolds
from .quadrature import QuadratureGrid, integrate

PROJECTIVE_TOLERANCE = 1e-6

ThetaSpec = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def symmetric_product(theta: np.ndarray, d1: np.ndarray) -> np.ndarray:
    """(θ⊗df + df⊗θ)^a_ij = θ_i ∂_j f^a + ∂_i f^a θ_j."""
    return np.einsum("...i,...aj->...aij", theta, d1) + np.einsum("...ai,...j->...aij", d1, theta)


@dataclass
class ThetaFit:
    theta: np.ndarray
    residual: np.ndarray
    skipped: np.ndarray

    @property
    def max_residual(self) -> float:
        live = np.isfinite(self.residual)
        return float(np.max(self.residual[live])) if np.any(live) else 0.0


def fit_theta(d1, B, g, gbar, df_tolerance: float = 1e-10) -> ThetaFit:
    """Least-squares θ with B ≈ θ⊗df + df⊗θ, node by node.

    The residual is measured in the Hilbert-Schmidt norm of g and h: both
    sides are expressed in orthonormal frames before solving. Nodes where
    df vanishes are skipped (θ is unidentifiable there) and get NaN.
    """
    d1 = np.asarray(d1, dtype=float)
    B = np.asarray(B, dtype=float)
    N, m, n = d1.shape
    L = np.linalg.cholesky(g)  # g = L Lᵀ
    Linv = np.linalg.inv(L)
    E = np.swapaxes(Linv, -1, -2)  # columns: g-orthonormal frame
    Lb = np.linalg.cholesky(gbar)
    T = np.swapaxes(Lb, -1, -2)  # target components -> orthonormal
    D = np.einsum("...ab,...bk,...ki->...ai", T, d1, E)
    Bt = np.einsum("...ab,...bkl,...ki,...lj->...aij", T, B, E, E)
    eye = np.eye(n)
    # A[(a,i,j), k] = δ_ik D_aj + D_ai δ_jk
    A = np.einsum("ik,...aj->...aijk", eye, D) + np.einsum("...ai,jk->...aijk", D, eye)
    A = A.reshape(N, m * n * n, n)
    b = Bt.reshape(N, m * n * n)
    norm_df = np.sqrt(np.sum(D * D, axis=(-1, -2)))
    skip = norm_df <= df_tolerance * np.maximum(1.0, np.sqrt(np.sum(Bt * Bt, axis=(-1, -2, -3))))
    theta_t = np.full((N, n), np.nan)
    resid = np.full(N, np.nan)
    live = ~skip
    if np.any(live):
        AtA = np.einsum("...ri,...rj->...ij", A[live], A[live])
        Atb = np.einsum("...ri,...r->...i", A[live], b[live])
        sol = np.linalg.solve(AtA, Atb[..., None])[..., 0]
        theta_t[live] = sol
        r = np.einsum("...rk,...k->...r", A[live], sol) - b[live]
        resid[live] = np.sqrt(np.sum(r * r, axis=-1))
    # θ̃_i = θ(e_i) = (Eᵀθ)_i  =>  θ = L θ̃
    theta = np.einsum("...ik,...k->...i", L, theta_t)
    return ThetaFit(theta, resid, np.flatnonzero(skip))


def recover_theta(f: MapBetweenManifolds, grid: QuadratureGrid) -> ThetaFit:
    J = C.build_jet(f, grid.nodes)
    fit = fit_theta(J.d1, C.second_fundamental_form(J), J.g, J.gbar)
    if fit.skipped.size == grid.size:
        raise RankDeficient("df vanishes at every node; θ is unidentifiable")
    return fit


@dataclass
class ProjectiveReport:
    projective_residual: float
    tension_residual: float
    identity_residual: float
    E1: float
    E2: float
    integral_Q: float
    integral_theta_term: float
    ric_min: float
    margin: float
    npc_certified: bool
    verdict: str

    def to_dict(self) -> dict:
        return asdict(self)


def one_form(spec: str, domain_dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """1-form catalog: ``"zero"`` or ``"const:a,b,..."`` (constant coefficients)."""
    name, _, rest = spec.strip().partition(":")
    if name == "zero":
        return lambda pts: np.zeros((len(pts), domain_dim))
    if name == "const":
        coeffs = np.array([float(t) for t in rest.split(",") if t.strip()])
        if coeffs.size != domain_dim:
            raise UnknownMap(f"const 1-form needs {domain_dim} coefficients")
        return lambda pts: np.broadcast_to(coeffs, (len(pts), domain_dim)).copy()
    raise UnknownMap(f"unknown 1-form {spec!r}")


def projective_check(
    f: MapBetweenManifolds,
    grid: QuadratureGrid,
    theta: ThetaSpec,
    tolerance: float = PROJECTIVE_TOLERANCE,
    seed: int = 0,
) -> ProjectiveReport:
    """Residuals of the projective relations and the factor-2 inequality.

    ``theta`` is an ``(N, n)`` array of covector components at the grid
    nodes or a callable producing them.
    """
    J = C.build_jet(f, grid.nodes)
    th = theta(grid.nodes) if callable(theta) else np.asarray(theta, dtype=float)
    th = np.nan_to_num(th)
    spec = C.pullback_spectrum(J)
    B = C.second_fundamental_form(J)
    tau = C.tension(J, B)

    diff = B - symmetric_product(th, J.d1)
    proj_res = float(np.sqrt(np.max(C.sff_norm2(J, diff))))
    xi = np.einsum("...ij,...j->...i", J.ginv, th)
    tdiff = tau - 2.0 * np.einsum("...ai,...i->...a", J.d1, xi)
    tens_res = float(np.sqrt(np.max(C.target_norm2(J, tdiff))))

    e = C.energy_density(J)
    theta_norm2 = np.einsum("...i,...ij,...j->...", th, J.ginv, th)
    ric_part, sec_part, image_sec = C._pair_terms(J, spec)
    Q = ric_part - sec_part
    E1 = integrate(grid, e)
    E2 = integrate(grid, C.target_norm2(J, tau))
    iQ = integrate(grid, Q)
    itheta = integrate(grid, 2.0 * theta_norm2 * e)
    ident = abs(E2 - 2.0 * (iQ + itheta))

    rmin = ricci_min(f.domain, grid).conservative
    margin = E2 - 2.0 * rmin * E1
    npc = npc_check(J, image_sec, seed=seed) <= NPC_TOLERANCE
    slack = tolerance * (1.0 + float(np.sqrt(np.max(C.sff_norm2(J, B)))))
    if proj_res > slack:
        verdict = Verdict.NOT_PROJECTIVE
    elif not npc:
        verdict = Verdict.PRECONDITION_FAILED
    else:
        coarse = grid.coarser()
        cert = 0.0
        if coarse is not None:
            Jc = C.build_jet(f, coarse.nodes)
            Bc = C.second_fundamental_form(Jc)
            E1c = integrate(coarse, C.energy_density(Jc))
            E2c = integrate(coarse, C.target_norm2(Jc, C.tension(Jc, Bc)))
            cert = abs((E2 - 2.0 * rmin * E1) - (E2c - 2.0 * rmin * E1c))
        verdict = classify_margin(margin, cert, E1)
    return ProjectiveReport(
        projective_residual=proj_res,
        tension_residual=tens_res,
        identity_residual=ident,
        E1=E1,
        E2=E2,
        integral_Q=iQ,
        integral_theta_term=itheta,
        ric_min=rmin,
        margin=margin,
        npc_certified=bool(npc),
        verdict=verdict.value,
    )
