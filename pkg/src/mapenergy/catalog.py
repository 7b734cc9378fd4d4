"""Built-in manifolds with closed-form connection and curvature.

Names accepted by :func:`manifold`::

    torus<n>            flat torus, periodic box of side 2π
    sphere2[:r=<r>]     round sphere of radius r in polar coordinates (θ, φ)
    euclid<m>           Euclidean space
    poincare<m>         Poincaré ball model of hyperbolic space
    product(<a>,<b>)    Riemannian product
"""

from __future__ import annotations

import math
import re

import numpy as np

from .errors import UnknownManifold
from .geometry import ChartManifold, Interval

POLE_MARGIN = 1e-3
BALL_MARGIN = 1e-3
TWO_PI = 2.0 * math.pi


def _eye(p: np.ndarray, n: int) -> np.ndarray:
    return np.broadcast_to(np.eye(n), p.shape[:-1] + (n, n)).copy()


def _zeros(p: np.ndarray, *tail: int) -> np.ndarray:
    return np.zeros(p.shape[:-1] + tail)


def constant_curvature_riemann(g: np.ndarray, K) -> np.ndarray:
    """R^l_ijk = K (g_jk δ^l_i - g_ik δ^l_j)."""
    n = g.shape[-1]
    eye = np.eye(n)
    K = np.asarray(K)[..., None, None, None, None]
    return K * (np.einsum("li,...jk->...lijk", eye, g) - np.einsum("lj,...ik->...lijk", eye, g))


def torus(n: int = 2) -> ChartManifold:
    box = tuple(Interval(0.0, TWO_PI, True) for _ in range(n))
    return ChartManifold(
        name=f"torus{n}",
        dim=n,
        chart_box=box,
        metric=lambda p: _eye(p, n),
        metric_partials=lambda p: _zeros(p, n, n, n),
        christoffel_closed_form=lambda p: _zeros(p, n, n, n),
        riemann_closed_form=lambda p: _zeros(p, n, n, n, n),
        compact=True,
        quadrature="uniform",
        constant_curvature=0.0,
    )


def euclid(m: int) -> ChartManifold:
    inf = math.inf
    return ChartManifold(
        name=f"euclid{m}",
        dim=m,
        chart_box=tuple(Interval(-inf, inf) for _ in range(m)),
        metric=lambda p: _eye(p, m),
        metric_partials=lambda p: _zeros(p, m, m, m),
        christoffel_closed_form=lambda p: _zeros(p, m, m, m),
        riemann_closed_form=lambda p: _zeros(p, m, m, m, m),
        hadamard=True,
        constant_curvature=0.0,
    )


def sphere(r: float = 1.0, pole_margin: float = POLE_MARGIN) -> ChartManifold:
    if not r > 0:
        raise UnknownManifold(f"sphere radius must be positive, got {r}")
    r2 = r * r

    def metric(p):
        s = np.sin(p[..., 0])
        g = np.zeros(p.shape[:-1] + (2, 2))
        g[..., 0, 0] = r2
        g[..., 1, 1] = r2 * s * s
        return g

    def partials(p):
        th = p[..., 0]
        dg = np.zeros(p.shape[:-1] + (2, 2, 2))
        dg[..., 0, 1, 1] = 2.0 * r2 * np.sin(th) * np.cos(th)
        return dg

    def christoffel(p):
        th = p[..., 0]
        s, c = np.sin(th), np.cos(th)
        gam = np.zeros(p.shape[:-1] + (2, 2, 2))
        gam[..., 0, 1, 1] = -s * c
        gam[..., 1, 0, 1] = c / s
        gam[..., 1, 1, 0] = c / s
        return gam

    return ChartManifold(
        name=f"sphere2:r={r:g}",
        dim=2,
        chart_box=(Interval(0.0, math.pi), Interval(0.0, TWO_PI, True)),
        metric=metric,
        metric_partials=partials,
        christoffel_closed_form=christoffel,
        riemann_closed_form=lambda p: constant_curvature_riemann(metric(p), 1.0 / r2),
        interior_margin=pole_margin,
        compact=True,
        quadrature="sphere",
        params={"r": r},
        constant_curvature=1.0 / r2,
    )


def poincare(m: int, margin: float = BALL_MARGIN) -> ChartManifold:
    def conformal(p):
        return 2.0 / (1.0 - np.sum(p * p, axis=-1))

    def metric(p):
        lam = conformal(p)
        return (lam * lam)[..., None, None] * np.eye(m)

    def dpsi(p):
        # ψ = log λ, ∂_k ψ = 2 u_k / (1 - |u|²)
        return p * conformal(p)[..., None]

    def partials(p):
        lam2 = conformal(p) ** 2
        return 2.0 * (lam2[..., None] * dpsi(p))[..., :, None, None] * np.eye(m)

    def christoffel(p):
        d = dpsi(p)
        eye = np.eye(m)
        return (
            np.einsum("ki,...j->...kij", eye, d)
            + np.einsum("kj,...i->...kij", eye, d)
            - np.einsum("ij,...k->...kij", eye, d)
        )

    return ChartManifold(
        name=f"poincare{m}",
        dim=m,
        chart_box=tuple(Interval(-1.0, 1.0) for _ in range(m)),
        metric=metric,
        metric_partials=partials,
        christoffel_closed_form=christoffel,
        riemann_closed_form=lambda p: constant_curvature_riemann(metric(p), -1.0),
        in_chart=lambda p: np.sqrt(np.sum(np.asarray(p) ** 2, axis=-1)) <= 1.0 - margin,
        hadamard=True,
        constant_curvature=-1.0,
    )


def product(a: ChartManifold, b: ChartManifold) -> ChartManifold:
    na, nb = a.dim, b.dim
    n = na + nb
    sa, sb = slice(0, na), slice(na, n)

    def blockwise(fa, fb, rank):
        def fn(p):
            A, B = fa(p[..., sa]), fb(p[..., sb])
            out = np.zeros(p.shape[:-1] + (n,) * rank)
            out[(Ellipsis,) + (sa,) * rank] = A
            out[(Ellipsis,) + (sb,) * rank] = B
            return out

        return fn

    def maybe(fa, fb, rank):
        if fa is None or fb is None:
            return None
        return blockwise(fa, fb, rank)

    def in_chart(p):
        ok = np.ones(np.shape(p)[:-1], dtype=bool)
        if a.in_chart is not None:
            ok &= a.in_chart(p[..., sa])
        if b.in_chart is not None:
            ok &= b.in_chart(p[..., sb])
        return ok

    curv = None
    if a.constant_curvature == 0.0 and b.constant_curvature == 0.0:
        curv = 0.0
    margin = max(a.interior_margin, b.interior_margin)
    return ChartManifold(
        name=f"product({a.name},{b.name})",
        dim=n,
        chart_box=a.chart_box + b.chart_box,
        metric=blockwise(a.metric, b.metric, 2),
        metric_partials=maybe(a.metric_partials, b.metric_partials, 3),
        christoffel_closed_form=maybe(a.christoffel_closed_form, b.christoffel_closed_form, 3),
        riemann_closed_form=maybe(a.riemann_closed_form, b.riemann_closed_form, 4),
        interior_margin=margin,
        compact=a.compact and b.compact,
        hadamard=a.hadamard and b.hadamard,
        in_chart=in_chart if (a.in_chart or b.in_chart) else None,
        quadrature="product",
        factors=(a, b),
        constant_curvature=curv,
    )


def _split_top_level(s: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts]


def manifold(name: str) -> ChartManifold:
    """Construct a catalog manifold from its name."""
    try:
        return _manifold(name)
    except ValueError as exc:
        raise UnknownManifold(f"{name!r}: {exc}") from None


def _manifold(name: str) -> ChartManifold:
    s = name.strip()
    if s.startswith("product(") and s.endswith(")"):
        inner = _split_top_level(s[len("product(") : -1])
        if len(inner) != 2:
            raise UnknownManifold(f"product needs exactly two factors: {name!r}")
        return product(_manifold(inner[0]), _manifold(inner[1]))
    m = re.fullmatch(r"torus(\d+)", s)
    if m:
        return torus(int(m.group(1)))
    m = re.fullmatch(r"euclid(\d+)", s)
    if m:
        return euclid(int(m.group(1)))
    m = re.fullmatch(r"poincare(\d+)", s)
    if m:
        return poincare(int(m.group(1)))
    m = re.fullmatch(r"sphere2(?::r=([^,\s]+))?", s)
    if m:
        try:
            r = float(m.group(1)) if m.group(1) else 1.0
        except ValueError:
            raise UnknownManifold(f"bad sphere radius in {name!r}") from None
        return sphere(r)
    raise UnknownManifold(f"unknown manifold {name!r}")


CATALOG_NAMES = ("torus2", "sphere2:r=<float>", "euclid<m>", "poincare<m>", "product(<a>,<b>)")


def catalog() -> dict:
    """Constructors keyed by name pattern."""
    return {
        "torus<n>": torus,
        "sphere2:r=<float>": sphere,
        "euclid<m>": euclid,
        "poincare<m>": poincare,
        "product(<a>,<b>)": product,
    }
