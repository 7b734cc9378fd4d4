"""Pointwise geometry of a smooth map f: (M, g) -> (N, h).

Arrays follow the conventions of :mod:`mapenergy.geometry`; map data uses
target index first: ``d1[..., a, i]`` = ∂_i f^a and ``d2[..., a, i, j]`` =
∂_i∂_j f^a. The second fundamental form ``B[..., a, i, j]`` and covariant
derivatives of sections ``D[..., a, i]`` = (∇_i σ)^a use the same layout.

Everything is batched over a leading node axis, so one call sweeps a whole
quadrature grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import StencilOutOfChart, TargetChartEscape
from .geometry import (
    ChartManifold,
    _christoffel,
    _riemann,
    generalized_eigh,
    lower_riemann,
    ricci_from_riemann,
    sectional_from_lowered,
)
from .maps import MapBetweenManifolds

RANK_TOLERANCE = 1e-8


@lru_cache(maxsize=512)
def _einsum_path(spec: str, shapes: tuple) -> list:
    return np.einsum_path(spec, *[np.empty(s) for s in shapes], optimize="greedy")[0]


def _ein(spec: str, *ops: np.ndarray) -> np.ndarray:
    """Batched einsum over a shared leading batch shape written as ``...``.

    Tiny per-node tensors contract much faster with the node axis last,
    so operands are transposed to that layout and back.
    """
    ins, out = spec.split("->")
    terms = ins.split(",")
    cores = [t.replace("...", "") for t in terms]
    ops = [np.asarray(o, dtype=float) for o in ops]
    batch = np.broadcast_shapes(*[o.shape[: o.ndim - len(c)] for o, c in zip(ops, cores)])
    size = int(np.prod(batch, dtype=int))
    moved = []
    for o, c in zip(ops, cores):
        o = np.broadcast_to(o, batch + o.shape[o.ndim - len(c) :]).reshape((size,) + o.shape[o.ndim - len(c) :])
        moved.append(np.ascontiguousarray(np.moveaxis(o, 0, -1)))
    flat_spec = ",".join(c + "Z" for c in cores) + "->" + out.replace("...", "") + "Z"
    path = False
    if len(ops) > 2:
        path = _einsum_path(flat_spec, tuple(o.shape for o in moved))
    res = np.einsum(flat_spec, *moved, optimize=path)
    return np.moveaxis(res, -1, 0).reshape(batch + res.shape[:-1])


class MapJet:
    """Per-node bundle (f, ∂f, ∂²f, Γ at p, Γ̄ at f(p)) with derived geometry."""

    DOMAIN_FIELDS = ("g", "ginv", "gamma", "ricci")

    def __init__(self, domain: ChartManifold, target: ChartManifold, points, value, d1, d2, domain_geometry=None):
        self.domain = domain
        self.target = target
        self.points = np.asarray(points, dtype=float)
        self.value = np.asarray(value, dtype=float)
        self.d1 = np.asarray(d1, dtype=float)
        self.d2 = np.asarray(d2, dtype=float)
        # precomputed g, ginv, gamma, ricci at ``points`` (e.g. a fixed grid)
        for key, val in (domain_geometry or {}).items():
            if key not in self.DOMAIN_FIELDS:
                raise KeyError(key)
            self.__dict__[key] = val

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @cached_property
    def g(self) -> np.ndarray:
        return self.domain.metric(self.points)

    @cached_property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @cached_property
    def gamma(self) -> np.ndarray:
        return _christoffel(self.domain, self.points)

    @cached_property
    def ricci(self) -> np.ndarray:
        ric = ricci_from_riemann(_riemann(self.domain, self.points))
        return 0.5 * (ric + np.swapaxes(ric, -1, -2))

    @cached_property
    def target_point(self) -> np.ndarray:
        return self.target.wrap(self.value)

    @cached_property
    def gbar(self) -> np.ndarray:
        return self.target.metric(self.target_point)

    @cached_property
    def gamma_bar(self) -> np.ndarray:
        return _christoffel(self.target, self.target_point)

    @cached_property
    def riemann_bar(self) -> np.ndarray:
        return _riemann(self.target, self.target_point)

    @cached_property
    def riemann_bar_lowered(self) -> np.ndarray:
        return lower_riemann(self.riemann_bar, self.gbar)

    @cached_property
    def gamma_bar_df(self) -> np.ndarray:
        """Γ̄^a_bc(f) ∂_i f^b, indexed ``[..., a, c, i]``."""
        return _ein("...abc,...bi->...aci", self.gamma_bar, self.d1)

    @cached_property
    def df_ginv_df(self) -> np.ndarray:
        """g^ij ∂_i f^b ∂_j f^d, indexed ``[..., b, d]``."""
        return _ein("...bi,...di->...bd", self.d1, _ein("...ij,...dj->...di", self.ginv, self.d1))

    def subset(self, idx) -> "MapJet":
        return MapJet(self.domain, self.target, self.points[idx], self.value[idx], self.d1[idx], self.d2[idx])


def check_target(target: ChartManifold, value: np.ndarray) -> None:
    target.check(value, error=TargetChartEscape)


def build_jet(f: MapBetweenManifolds, points) -> MapJet:
    """Evaluate ``f`` and its partials at domain points, enforcing both charts."""
    points = f.domain.check(np.atleast_2d(np.asarray(points, dtype=float)))
    value, d1, d2 = f.evaluate(points)
    check_target(f.target, value)
    return MapJet(f.domain, f.target, points, value, d1, d2)


# ---------------------------------------------------------------------------
# first order


def pullback_metric(J: MapJet) -> np.ndarray:
    """g*_ij = h_ab(f) ∂_i f^a ∂_j f^b."""
    return _ein("...bi,...bj->...ij", _ein("...ab,...ai->...bi", J.gbar, J.d1), J.d1)


def pullback_metric_at(f: MapBetweenManifolds, p) -> np.ndarray:
    return pullback_metric(build_jet(f, p))


@dataclass(frozen=True)
class PullbackSpectrum:
    eigenvalues: np.ndarray  # (N, n), descending
    eigenvectors: np.ndarray  # (N, n, n), g-orthonormal columns
    rank: np.ndarray  # (N,)
    rank_tolerance: float


def pullback_spectrum(J: MapJet, rank_tolerance: float = RANK_TOLERANCE) -> PullbackSpectrum:
    """Eigenvalues of g* relative to g (g* v = λ g v), largest first."""
    lam, V = generalized_eigh(pullback_metric(J), J.g)
    lam, V = lam[..., ::-1], V[..., ::-1]
    thresh = rank_tolerance * np.maximum(lam[..., :1], 1.0)
    rank = np.sum(lam > thresh, axis=-1)
    return PullbackSpectrum(lam, V, rank, rank_tolerance)


def pullback_spectrum_at(f: MapBetweenManifolds, p, rank_tolerance: float = RANK_TOLERANCE) -> PullbackSpectrum:
    return pullback_spectrum(build_jet(f, p), rank_tolerance)


def energy_density(J: MapJet) -> np.ndarray:
    """‖df‖² = trace_g g* (no ½ factor)."""
    return _ein("...ij,...ij->...", J.ginv, pullback_metric(J))


def energy_density_at(f: MapBetweenManifolds, p) -> np.ndarray:
    return energy_density(build_jet(f, p))


# ---------------------------------------------------------------------------
# second order


def second_fundamental_form(J: MapJet) -> np.ndarray:
    """(∇df)^a_ij = ∂_i∂_j f^a - Γ^k_ij ∂_k f^a + Γ̄^a_bc ∂_i f^b ∂_j f^c."""
    return (
        J.d2
        - _ein("...kij,...ak->...aij", J.gamma, J.d1)
        + _ein("...aci,...cj->...aij", J.gamma_bar_df, J.d1)
    )


def second_fundamental_form_at(f: MapBetweenManifolds, p) -> np.ndarray:
    return second_fundamental_form(build_jet(f, p))


def tension(J: MapJet, B: Optional[np.ndarray] = None) -> np.ndarray:
    """τ^a = g^ij (∇df)^a_ij."""
    if B is None:
        B = second_fundamental_form(J)
    return _ein("...ij,...aij->...a", J.ginv, B)


def tension_at(f: MapBetweenManifolds, p) -> np.ndarray:
    return tension(build_jet(f, p))


def target_norm2(J: MapJet, v: np.ndarray) -> np.ndarray:
    return _ein("...a,...a->...", _ein("...ab,...b->...a", J.gbar, v), v)


def sff_norm2(J: MapJet, B: np.ndarray) -> np.ndarray:
    """‖∇df‖² with g on domain slots and h on the target slot."""
    up = _ein("...ik,...aij,...jl->...akl", J.ginv, B, J.ginv)
    low = _ein("...ab,...bkl->...akl", J.gbar, B)
    return _ein("...akl,...akl->...", up, low)


def _pair_terms(J: MapJet, spec: PullbackSpectrum):
    """Ricci and weighted-sectional parts of Q in the pull-back eigenframe.

    Returns ``(ric_part, sec_part, image_sec)`` where ``ric_part`` =
    Σ λ_i Ric(e_i, e_i), ``sec_part`` = Σ_{i≠j} λ_i λ_j sec(df e_i, df e_j)
    over nondegenerate pairs, and ``image_sec`` holds the sectional
    curvatures of those image planes (NaN where degenerate).
    """
    lam, V = spec.eigenvalues, spec.eigenvectors
    ric_diag = _ein("...ki,...kl,...li->...i", V, J.ricci, V)
    ric_part = np.sum(lam * ric_diag, axis=-1)
    n = lam.shape[-1]
    images = _ein("...ak,...ki->...ia", J.d1, V)  # df(e_i)
    thresh = spec.rank_tolerance * np.maximum(lam[..., 0], 1.0)
    sec_part = np.zeros(lam.shape[:-1])
    image_sec = np.full(lam.shape[:-1] + (n, n), np.nan)
    Rb = J.riemann_bar_lowered
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            live = (lam[..., i] > thresh) & (lam[..., j] > thresh)
            if not np.any(live):
                continue
            sec, _ = sectional_from_lowered(Rb, J.gbar, images[..., i, :], images[..., j, :])
            ok = live & np.isfinite(sec)
            image_sec[..., i, j] = np.where(ok, sec, np.nan)
            sec_part = sec_part + np.where(ok, lam[..., i] * lam[..., j] * np.nan_to_num(sec), 0.0)
    return ric_part, sec_part, image_sec


def q_scalar(J: MapJet, spec: Optional[PullbackSpectrum] = None) -> np.ndarray:
    """Q(f) = Σ λ_i Ric(e_i, e_i) - Σ_{i,j} λ_i λ_j sec(df e_i, df e_j).

    Diagonal and degenerate pairs carry zero weight.
    """
    if spec is None:
        spec = pullback_spectrum(J)
    ric_part, sec_part, _ = _pair_terms(J, spec)
    return ric_part - sec_part


def q_scalar_at(f: MapBetweenManifolds, p) -> np.ndarray:
    return q_scalar(build_jet(f, p))


def q_scalar_contraction(J: MapJet, frame: Optional[np.ndarray] = None) -> np.ndarray:
    """Q(f) via full curvature contraction in an arbitrary g-orthonormal frame.

    ``frame[..., :, i]`` is the i-th frame vector; by default the coordinate
    contraction with g⁻¹ is used, which is frame independent.
    """
    if frame is None:
        gs = pullback_metric(J)
        ric_part = _ein("...ij,...jk,...kl,...li->...", J.ginv, J.ricci, J.ginv, gs)
        X = J.d1
        sec_part = _ein(
            "...ip,...jq,...abcd,...ai,...bj,...cq,...dp->...", J.ginv, J.ginv, J.riemann_bar_lowered, X, X, X, X
        )
        return ric_part - sec_part
    U = frame
    Y = _ein("...ak,...ki->...ia", J.d1, U)
    gram = _ein("...ia,...ab,...jb->...ij", Y, J.gbar, Y)
    ric_part = _ein("...ki,...kl,...lj,...ij->...", U, J.ricci, U, gram)
    sec_part = _ein("...abcd,...ia,...jb,...jc,...id->...", J.riemann_bar_lowered, Y, Y, Y, Y)
    return ric_part - sec_part


@dataclass(frozen=True)
class PointGeometry:
    point: np.ndarray
    spectrum: PullbackSpectrum
    second_fundamental_form: np.ndarray
    tension: np.ndarray
    energy_density: np.ndarray
    q_scalar: np.ndarray
    sff_norm2: np.ndarray
    tension_norm2: np.ndarray


def point_geometry(J: MapJet, rank_tolerance: float = RANK_TOLERANCE) -> PointGeometry:
    spec = pullback_spectrum(J, rank_tolerance)
    B = second_fundamental_form(J)
    tau = tension(J, B)
    return PointGeometry(
        point=J.points,
        spectrum=spec,
        second_fundamental_form=B,
        tension=tau,
        energy_density=energy_density(J),
        q_scalar=q_scalar(J, spec),
        sff_norm2=sff_norm2(J, B),
        tension_norm2=target_norm2(J, tau),
    )


def point_geometry_at(f: MapBetweenManifolds, p, rank_tolerance: float = RANK_TOLERANCE) -> PointGeometry:
    return point_geometry(build_jet(f, p), rank_tolerance)


# ---------------------------------------------------------------------------
# sections of the pull-back bundle


def covariant_derivative(J: MapJet, sigma: np.ndarray, dsigma: np.ndarray) -> np.ndarray:
    """(∇_i σ)^a = ∂_i σ^a + Γ̄^a_bc ∂_i f^b σ^c, with ``dsigma[..., a, i]``."""
    return dsigma + _ein("...aci,...c->...ai", J.gamma_bar_df, sigma)


def rough_laplacian(J: MapJet, Dsigma: np.ndarray, dDsigma: np.ndarray) -> np.ndarray:
    """Δ_f σ = g^ij (∇_i ∇_j σ - Γ^k_ij ∇_k σ).

    ``Dsigma[..., a, j]`` = (∇_j σ)^a at the node and ``dDsigma[..., a, j, i]``
    = ∂_i (∇_j σ)^a.
    """
    second = (
        dDsigma
        + _ein("...aci,...cj->...aji", J.gamma_bar_df, Dsigma)
        - _ein("...kij,...ak->...aji", J.gamma, Dsigma)
    )
    return _ein("...ij,...aji->...a", J.ginv, second)


def curvature_term(J: MapJet, tau: np.ndarray) -> np.ndarray:
    """trace R̄(df, τ) df = g^ij R̄(∂_i f, τ) ∂_j f."""
    return _ein("...ac,...c->...a", _ein("...abcd,...bd->...ac", J.riemann_bar, J.df_ginv_df), tau)


def _unit(n: int, k: int) -> np.ndarray:
    e = np.zeros(n)
    e[k] = 1.0
    return e


def _stencil_check(f: MapBetweenManifolds, pts: np.ndarray) -> np.ndarray:
    return f.domain.check(pts, error=StencilOutOfChart)


def pullback_connection_derivative(
    f: MapBetweenManifolds, p, section: Callable[[np.ndarray], np.ndarray], h: float = 1e-3
) -> np.ndarray:
    """∇^f σ at ``p`` with ∂σ from central differences of ``section`` at step h.

    Returns ``D[..., a, i]``.
    """
    p = f.domain.check(np.atleast_2d(np.asarray(p, dtype=float)))
    J = build_jet(f, p)
    n = f.domain.dim
    sigma = section(p)
    dsigma = np.empty(sigma.shape + (n,))
    for i in range(n):
        e = h * _unit(n, i)
        plus = section(_stencil_check(f, p + e))
        minus = section(_stencil_check(f, p - e))
        dsigma[..., i] = (plus - minus) / (2.0 * h)
    return covariant_derivative(J, sigma, dsigma)


def bitension_at(f: MapBetweenManifolds, p, h: Optional[float] = None, grid=None) -> np.ndarray:
    """τ₂ = Δ_f τ₁ - trace R̄(df, τ₁) df from nested central stencils.

    τ₁ is evaluated exactly from the jets at stencil points; both extra
    derivatives are central differences at step ``h`` (default 2e-3, or a
    quarter of the smallest spacing of ``grid`` when one is given).
    """
    if h is None:
        h = 0.25 * float(np.min(grid.spacing())) if grid is not None else 2e-3
    p = f.domain.check(np.atleast_2d(np.asarray(p, dtype=float)))
    n = f.domain.dim

    def tau_field(q):
        return tension(build_jet(f, _stencil_check(f, q)))

    def nabla_tau(q):
        Jq = build_jet(f, _stencil_check(f, q))
        return covariant_derivative(Jq, tension(Jq), _central(tau_field, q, n, h)), Jq

    D0, J0 = nabla_tau(p)
    dD = np.empty(D0.shape + (n,))
    for i in range(n):
        e = h * _unit(n, i)
        Dp, _ = nabla_tau(p + e)
        Dm, _ = nabla_tau(p - e)
        dD[..., i] = (Dp - Dm) / (2.0 * h)
    tau0 = tension(J0)
    return rough_laplacian(J0, D0, dD) - curvature_term(J0, tau0)


def _central(field, q, n, h):
    out = None
    for j in range(n):
        e = h * _unit(n, j)
        d = (field(q + e) - field(q - e)) / (2.0 * h)
        if out is None:
            out = np.empty(d.shape + (n,))
        out[..., j] = d
    return out


# ---------------------------------------------------------------------------
# grid sweeps


@dataclass(frozen=True)
class RankProfile:
    ranks: np.ndarray
    constant: bool
    rank: Optional[int]
    kernel_dim: np.ndarray
    witnesses: np.ndarray

    @property
    def verdict(self) -> str:
        return f"CONSTANT({self.rank})" if self.constant else "NOT_CONSTANT"


def rank_profile_from_jet(J: MapJet, rank_tolerance: float = RANK_TOLERANCE) -> RankProfile:
    ranks = pullback_spectrum(J, rank_tolerance).rank
    values, counts = np.unique(ranks, return_counts=True)
    mode = int(values[np.argmax(counts)])
    constant = len(values) == 1
    witnesses = J.points[ranks != mode]
    return RankProfile(ranks, constant, mode if constant else None, J.domain.dim - ranks, witnesses)


def rank_profile(f: MapBetweenManifolds, grid, rank_tolerance: float = RANK_TOLERANCE) -> RankProfile:
    return rank_profile_from_jet(build_jet(f, grid.nodes), rank_tolerance)


def totally_geodesic_defect(f: MapBetweenManifolds, grid) -> float:
    """sup over nodes of ‖∇df‖."""
    J = build_jet(f, grid.nodes)
    return float(np.sqrt(np.max(sff_norm2(J, second_fundamental_form(J)))))
