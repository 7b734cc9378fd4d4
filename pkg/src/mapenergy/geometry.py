"""Chart-presented Riemannian manifolds and their curvature.

Index conventions used throughout the package (batch axes come first):

* metric ``g[..., i, j]``
* Christoffel symbols ``gamma[..., k, i, j]`` = Γ^k_{ij}
* Riemann tensor ``riem[..., l, i, j, k]`` = R^l_{ijk}, defined by
  R(∂_i, ∂_j)∂_k = R^l_{ijk} ∂_l with R(X,Y)Z = ∇_X∇_Y Z - ∇_Y∇_X Z - ∇_[X,Y] Z
* lowered ``R[..., a, b, c, d]`` = <R(∂_a, ∂_b)∂_c, ∂_d>
* Ricci ``ric[..., j, k]`` = R^i_{ijk}

With these choices the unit round sphere has sectional curvature +1 and
Ric(X, X) = (n - 1) K |X|^2 on a space of constant curvature K.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateMetric, DegeneratePlane, NonCompactDomain, OutOfChart

ArrayFn = Callable[[np.ndarray], np.ndarray]

FD_STEP_FIRST = 1e-5
FD_STEP_SECOND = 1e-4


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    periodic: bool = False

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True, eq=False)
class ChartManifold:
    """A Riemannian manifold presented in a single coordinate chart.

    ``metric`` maps points of shape ``S + (n,)`` to matrices ``S + (n, n)``.
    The optional providers follow the index conventions of this module.
    ``in_chart`` adds a constraint beyond the coordinate box (the Poincaré
    ball uses it for ``|u| <= 1 - interior_margin``).
    """

    name: str
    dim: int
    chart_box: tuple[Interval, ...]
    metric: ArrayFn
    metric_partials: Optional[ArrayFn] = None
    christoffel_closed_form: Optional[ArrayFn] = None
    riemann_closed_form: Optional[ArrayFn] = None
    interior_margin: float = 0.0
    compact: bool = False
    hadamard: bool = False
    in_chart: Optional[Callable[[np.ndarray], np.ndarray]] = None
    quadrature: str = "none"
    factors: tuple["ChartManifold", ...] = ()
    params: dict = field(default_factory=dict)
    constant_curvature: Optional[float] = None

    def __post_init__(self):
        if self.dim < 1 or len(self.chart_box) != self.dim:
            raise ValueError(f"{self.name}: chart box must have one interval per dimension")

    @property
    def periodic(self) -> np.ndarray:
        return np.array([iv.periodic for iv in self.chart_box])

    def wrap(self, p: np.ndarray) -> np.ndarray:
        """Reduce periodic coordinates into ``[lo, hi)``."""
        p = np.array(p, dtype=float, copy=True)
        for k, iv in enumerate(self.chart_box):
            if iv.periodic:
                p[..., k] = iv.lo + np.mod(p[..., k] - iv.lo, iv.length)
        return p

    def wrap_difference(self, d: np.ndarray) -> np.ndarray:
        """Map coordinate differences of periodic axes into ``[-L/2, L/2)``."""
        if not self.periodic.any():
            return d
        d = np.array(d, dtype=float, copy=True)
        for k, iv in enumerate(self.chart_box):
            if iv.periodic:
                half = 0.5 * iv.length
                d[..., k] = np.mod(d[..., k] + half, iv.length) - half
        return d

    def guard_mask(self, p: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the guarded chart (p already wrapped)."""
        p = np.asarray(p, dtype=float)
        ok = np.all(np.isfinite(p), axis=-1)
        eps = self.interior_margin
        for k, iv in enumerate(self.chart_box):
            if iv.periodic:
                continue
            ok &= (p[..., k] >= iv.lo + eps) & (p[..., k] <= iv.hi - eps)
        if self.in_chart is not None:
            ok &= self.in_chart(p)
        return ok

    def check(self, p: np.ndarray, error=OutOfChart) -> np.ndarray:
        """Wrap ``p`` and raise ``error`` if any point violates the guard band."""
        p = self.wrap(p)
        ok = self.guard_mask(p)
        if not np.all(ok):
            flat = p.reshape(-1, self.dim)
            where = flat[int(np.argmin(np.ravel(ok)))]
            raise error(f"point {where.tolist()} outside guarded chart of {self.name}")
        return p

    def sample_interior(self, rng: np.random.Generator, count: int, shrink: float = 0.0) -> np.ndarray:
        """Random points of the guarded chart.

        ``shrink`` is an extra band kept away from non-periodic chart edges
        (fraction of the interval length); unbounded axes draw from N(0, 1).
        """
        pts = np.empty((count, self.dim))
        for k, iv in enumerate(self.chart_box):
            if not np.isfinite(iv.lo) or not np.isfinite(iv.hi):
                pts[:, k] = rng.normal(size=count)
                continue
            pad = 0.0 if iv.periodic else self.interior_margin + shrink * iv.length
            pts[:, k] = rng.uniform(iv.lo + pad, iv.hi - pad, size=count)
        if self.in_chart is not None:
            ok = self.in_chart(pts) & self.guard_mask(pts)
            while not np.all(ok):
                redo = self.sample_interior(rng, int((~ok).sum()), shrink)
                pts[~ok] = redo
                ok = self.in_chart(pts) & self.guard_mask(pts)
        return pts


# ---------------------------------------------------------------------------
# metric and connection


def _steps(p: np.ndarray, base: float) -> np.ndarray:
    scale = np.maximum(1.0, np.max(np.abs(np.nan_to_num(p)), axis=-1))
    return base * scale


def metric_at(M: ChartManifold, p) -> np.ndarray:
    """Metric matrix at chart points; raises on guard violation or degeneracy."""
    p = M.check(np.asarray(p, dtype=float))
    g = M.metric(p)
    lam = np.linalg.eigvalsh(g)[..., 0]
    if np.any(~(lam > 0)):
        raise DegenerateMetric(f"{M.name}: metric not positive definite (min eigenvalue {np.min(lam):.3e})")
    return g


def metric_partials_fd(M: ChartManifold, p: np.ndarray) -> np.ndarray:
    """Central differences ``dg[..., k, i, j] = ∂_k g_ij`` at step h₁."""
    p = np.asarray(p, dtype=float)
    h = _steps(p, FD_STEP_FIRST)
    n = M.dim
    out = np.empty(p.shape[:-1] + (n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        step = h[..., None] * e
        out[..., k, :, :] = (M.metric(p + step) - M.metric(p - step)) / (2.0 * h[..., None, None])
    return out


def christoffel_from_partials(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il - ∂_l g_ij), with ``dg[..., a, b, c] = ∂_a g_bc``."""
    return np.einsum("...kl,...ijl->...kij", np.linalg.inv(g), _gamma_first_kind(dg))


def _gamma_first_kind(dg: np.ndarray) -> np.ndarray:
    """[ij, l] = ½(∂_i g_jl + ∂_j g_il - ∂_l g_ij), returned as ``out[..., i, j, l]``."""
    t1 = dg  # ∂_i g_jl with (i, j, l)
    t2 = np.swapaxes(dg, -3, -2)  # (i, j, l) -> ∂_j g_il
    t3 = np.moveaxis(dg, -3, -1)  # (i, j, l) -> ∂_l g_ij
    return 0.5 * (t1 + t2 - t3)


def christoffel_numeric(M: ChartManifold, p: np.ndarray, fd_only: bool = False) -> np.ndarray:
    """Christoffel symbols from metric partials (closed-form partials if given, else FD)."""
    p = np.asarray(p, dtype=float)
    if M.metric_partials is not None and not fd_only:
        dg = M.metric_partials(p)
    else:
        dg = metric_partials_fd(M, p)
    return christoffel_from_partials(M.metric(p), dg)


def _christoffel(M: ChartManifold, p: np.ndarray, closed_form: bool = True) -> np.ndarray:
    if closed_form and M.christoffel_closed_form is not None:
        return M.christoffel_closed_form(p)
    return christoffel_numeric(M, p)


def christoffel_at(M: ChartManifold, p, closed_form: bool = True) -> np.ndarray:
    p = M.check(np.asarray(p, dtype=float))
    metric_at(M, p)
    return _christoffel(M, p, closed_form)


# ---------------------------------------------------------------------------
# curvature


def riemann_from_christoffel(gamma: np.ndarray, dgamma: np.ndarray) -> np.ndarray:
    """R^l_ijk = ∂_iΓ^l_jk - ∂_jΓ^l_ik + Γ^l_im Γ^m_jk - Γ^l_jm Γ^m_ik.

    ``dgamma[..., a, k, i, j]`` = ∂_a Γ^k_ij.
    """
    d1 = np.einsum("...iljk->...lijk", dgamma)
    d2 = np.einsum("...jlik->...lijk", dgamma)
    q1 = np.einsum("...lim,...mjk->...lijk", gamma, gamma)
    q2 = np.einsum("...ljm,...mik->...lijk", gamma, gamma)
    return d1 - d2 + q1 - q2


def riemann_numeric(M: ChartManifold, p: np.ndarray, fd_only: bool = False) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    h = _steps(p, FD_STEP_SECOND)
    n = M.dim
    dgamma = np.empty(p.shape[:-1] + (n, n, n, n))
    for a in range(n):
        e = np.zeros(n)
        e[a] = 1.0
        step = h[..., None] * e
        dgamma[..., a, :, :, :] = (
            christoffel_numeric(M, p + step, fd_only) - christoffel_numeric(M, p - step, fd_only)
        ) / (2.0 * h[..., None, None, None])
    return riemann_from_christoffel(christoffel_numeric(M, p, fd_only), dgamma)


def _riemann(M: ChartManifold, p: np.ndarray, closed_form: bool = True) -> np.ndarray:
    if closed_form and M.riemann_closed_form is not None:
        return M.riemann_closed_form(p)
    return riemann_numeric(M, p)


def riemann_at(M: ChartManifold, p, closed_form: bool = True) -> np.ndarray:
    p = M.check(np.asarray(p, dtype=float))
    metric_at(M, p)
    return _riemann(M, p, closed_form)


def lower_riemann(riem: np.ndarray, g: np.ndarray) -> np.ndarray:
    """R_abcd = <R(∂_a, ∂_b)∂_c, ∂_d> = R^m_abc g_md."""
    return np.einsum("...mabc,...md->...abcd", riem, g)


def ricci_from_riemann(riem: np.ndarray) -> np.ndarray:
    return np.einsum("...iijk->...jk", riem)


def ricci_at(M: ChartManifold, p, closed_form: bool = True) -> np.ndarray:
    return ricci_from_riemann(riemann_at(M, p, closed_form))


def sectional_from_lowered(R: np.ndarray, g: np.ndarray, u: np.ndarray, v: np.ndarray, tol: float = 1e-12):
    """Sectional curvature of span(u, v) from a lowered Riemann tensor.

    Returns ``(sec, gram)``; entries with degenerate Gram determinant are NaN.
    """
    num = np.einsum("...abcd,...a,...b,...c,...d->...", R, u, v, v, u)
    uu = np.einsum("...i,...ij,...j->...", u, g, u)
    vv = np.einsum("...i,...ij,...j->...", v, g, v)
    uv = np.einsum("...i,...ij,...j->...", u, g, v)
    gram = uu * vv - uv * uv
    ok = gram > tol * np.maximum(uu * vv, 1e-300)
    sec = np.where(ok, num / np.where(ok, gram, 1.0), np.nan)
    return sec, gram


def sectional_at(M: ChartManifold, p, u, v, tol: float = 1e-12, closed_form: bool = True):
    """Sectional curvature <R(u,v)v,u> / (|u|²|v|² - <u,v>²) of the plane span(u, v)."""
    p = M.check(np.asarray(p, dtype=float))
    g = metric_at(M, p)
    R = lower_riemann(_riemann(M, p, closed_form), g)
    u = np.broadcast_to(np.asarray(u, dtype=float), p.shape)
    v = np.broadcast_to(np.asarray(v, dtype=float), p.shape)
    sec, gram = sectional_from_lowered(R, g, u, v, tol)
    if np.any(np.isnan(sec)):
        raise DegeneratePlane(f"{M.name}: vectors span a degenerate plane (Gram determinant {np.min(gram):.3e})")
    return sec if np.ndim(sec) else float(sec)


@dataclass(frozen=True)
class CurvatureSample:
    point: np.ndarray
    metric: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray

    @property
    def lowered(self) -> np.ndarray:
        return lower_riemann(self.riemann, self.metric)


def curvature_sample(M: ChartManifold, p, closed_form: bool = True) -> CurvatureSample:
    p = M.check(np.asarray(p, dtype=float))
    g = metric_at(M, p)
    riem = _riemann(M, p, closed_form)
    return CurvatureSample(p, g, _christoffel(M, p, closed_form), riem, ricci_from_riemann(riem))


# ---------------------------------------------------------------------------
# Ricci minimum


def smallest_generalized_eigenvalue(A: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Smallest λ with A v = λ g v for symmetric A and SPD g (batched)."""
    return generalized_eigh(A, g)[0][..., 0]


def generalized_eigh(A: np.ndarray, g: np.ndarray):
    """Batched symmetric-definite eigenproblem A v = λ g v.

    Returns ascending eigenvalues and g-orthonormal eigenvectors as columns.
    """
    L = np.linalg.cholesky(g)
    Linv = np.linalg.inv(L)
    C = Linv @ A @ np.swapaxes(Linv, -1, -2)
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    lam, W = np.linalg.eigh(C)
    V = np.swapaxes(Linv, -1, -2) @ W
    return lam, V


@dataclass(frozen=True)
class RicciMin:
    value: float
    delta: float
    point: tuple

    @property
    def conservative(self) -> float:
        """Grid minimum lowered by its refinement delta."""
        return self.value - self.delta


def pointwise_ricci_min(M: ChartManifold, nodes: np.ndarray) -> np.ndarray:
    g = M.metric(nodes)
    ric = ricci_from_riemann(_riemann(M, nodes))
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    return smallest_generalized_eigenvalue(ric, g)


def ricci_min(M: ChartManifold, grid) -> RicciMin:
    """Global minimum of Ric(X, X) over unit X, sampled on ``grid`` nodes.

    The certificate is the change of the grid minimum against the next
    coarser grid level.
    """
    if not M.compact:
        raise NonCompactDomain(f"{M.name} is not compact")
    fine = pointwise_ricci_min(M, grid.nodes)
    idx = int(np.argmin(fine))
    coarse = grid.coarser()
    cval = float(np.min(pointwise_ricci_min(M, coarse.nodes))) if coarse is not None else float(fine[idx])
    value = float(fine[idx])
    return RicciMin(value=value, delta=abs(value - cval), point=tuple(float(x) for x in grid.nodes[idx]))
