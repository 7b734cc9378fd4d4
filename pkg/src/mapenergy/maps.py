"""Smooth maps between chart manifolds and the built-in map catalog.

An analytic map is a Python function taking a list of coordinate jets and
returning the target chart coordinates, written with the functions of
:mod:`mapenergy.jet` (``jet.sin`` etc.) so that it evaluates to values,
first and second partials in one pass.

Catalog specs look like ``"torus_to_disk:0.3"`` (positional parameters) or
``"torus_to_disk:amplitude=0.3"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import jet as J
from .errors import UnknownMap
from .geometry import ChartManifold

MapFn = Callable[[list], Sequence]


class MapBetweenManifolds:
    """Anything that can hand out (value, ∂f, ∂²f) at domain chart points.

    ``evaluate(points)`` returns arrays of shapes ``(N, m)``, ``(N, m, n)``
    and ``(N, m, n, n)`` for ``points`` of shape ``(N, n)``.
    """

    domain: ChartManifold
    target: ChartManifold
    name: str = "map"

    def evaluate(self, points: np.ndarray):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class AnalyticMap(MapBetweenManifolds):
    domain: ChartManifold
    target: ChartManifold
    fn: MapFn
    name: str = "analytic"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.domain.dim < 1 or self.target.dim < 1:
            raise ValueError("manifold dimensions must be positive")

    def evaluate(self, points: np.ndarray):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        xs = J.Jet.variables(points)
        comps = list(self.fn(xs))
        if len(comps) != self.target.dim:
            raise ValueError(f"{self.name}: produced {len(comps)} components, target has dim {self.target.dim}")
        return J.stack_components(comps, points.shape[:-1], self.domain.dim)

    def values(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        xs = [points[..., k] for k in range(self.domain.dim)]
        comps = list(self.fn(xs))
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), points.shape[:-1]) for c in comps], axis=-1)

    def scaled(self, c: float) -> "AnalyticMap":
        """Composition with the target homothety x ↦ c·x (Euclidean targets)."""
        fn = self.fn
        return AnalyticMap(self.domain, self.target, lambda x: [c * y for y in fn(x)], f"{c:g}*{self.name}", dict(self.params))


# ---------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class MapEntry:
    build: Callable[..., AnalyticMap]
    params: tuple[str, ...]
    defaults: tuple[float, ...]
    summary: str


def _embedding(domain: ChartManifold, x):
    """Unit-sphere embedding coordinates of the polar chart."""
    th, ph = x[0], x[1]
    s = J.sin(th)
    return s * J.cos(ph), s * J.sin(ph), J.cos(th)


def _require(domain: ChartManifold, target: ChartManifold, name: str, domains=None, targets=None):
    if domains is not None and not any(domain.name.startswith(d) for d in domains):
        raise UnknownMap(f"{name}: domain {domain.name} not supported (expects {', '.join(domains)})")
    if targets is not None and not any(target.name.startswith(t) for t in targets):
        raise UnknownMap(f"{name}: target {target.name} not supported (expects {', '.join(targets)})")


def _identity(domain, target):
    if domain.dim != target.dim:
        raise UnknownMap("identity needs equal dimensions")
    return AnalyticMap(domain, target, lambda x: list(x), "identity")


def _constant(domain, target, *values):
    if values:
        if len(values) != target.dim:
            raise UnknownMap(f"constant map needs {target.dim} values, got {len(values)}")
        pt = [float(v) for v in values]
    else:
        pt = [0.5 * (iv.lo + iv.hi) if math.isfinite(iv.lo) and math.isfinite(iv.hi) else 0.0 for iv in target.chart_box]
        if target.quadrature == "uniform":
            pt = [0.0] * target.dim
    return AnalyticMap(domain, target, lambda x: list(pt), "constant", {"values": pt})


def _torus_linear(domain, target, a=2.0, b=0.0, c=0.0, d=1.0):
    # only integer matrices descend to a map of the torus
    _require(domain, target, "torus_linear", ("torus2",), ("torus2",))
    coeffs = (a, b, c, d)
    if any(abs(v - round(v)) > 1e-12 for v in coeffs):
        raise UnknownMap("torus_linear needs integer coefficients")
    return AnalyticMap(
        domain, target, lambda x: [a * x[0] + b * x[1], c * x[0] + d * x[1]], "torus_linear", dict(zip("abcd", coeffs))
    )


def _torus_to_disk(domain, target, amplitude=0.3, frequency=1.0):
    _require(domain, target, "torus_to_disk", ("torus2",), ("poincare2", "euclid2"))
    A, k = amplitude, frequency
    if abs(k - round(k)) > 1e-12 or k < 1:
        raise UnknownMap("torus_to_disk frequency must be a positive integer")
    return AnalyticMap(
        domain,
        target,
        lambda x: [A * J.cos(k * x[0]), A * J.sin(k * x[1])],
        "torus_to_disk",
        {"amplitude": A, "frequency": k},
    )


def _torus_sin(domain, target):
    _require(domain, target, "torus_sin", ("torus2",), ("euclid2",))
    return AnalyticMap(domain, target, lambda x: [J.sin(x[0]), 0.0], "torus_sin")


def _torus_trig(domain, target, amplitude=1.0):
    _require(domain, target, "torus_trig", ("torus2",), ("euclid2", "poincare2"))
    A = amplitude

    def fn(x):
        return [A * (J.sin(x[0]) + 0.5 * J.cos(x[1])), A * J.cos(x[0] + x[1])]

    return AnalyticMap(domain, target, fn, "torus_trig", {"amplitude": A})


def _torus_helix(domain, target, amplitude=1.0):
    _require(domain, target, "torus_helix", ("torus2",), ("euclid3",))
    A = amplitude

    def fn(x):
        return [A * J.cos(x[0]), A * J.sin(x[0]), A * J.sin(x[1]) * (1.0 + 0.3 * J.cos(x[0]))]

    return AnalyticMap(domain, target, fn, "torus_helix", {"amplitude": A})


def _sphere_inclusion(domain, target):
    _require(domain, target, "sphere_inclusion", ("sphere2",), ("euclid3",))
    r = float(domain.params.get("r", 1.0))

    def fn(x):
        return [r * c for c in _embedding(domain, x)]

    return AnalyticMap(domain, target, fn, "sphere_inclusion", {"r": r})


def _sphere_projection(domain, target, amplitude=0.5):
    _require(domain, target, "sphere_projection", ("sphere2",), ("euclid2", "poincare2"))
    A = amplitude

    def fn(x):
        X, Y, _ = _embedding(domain, x)
        return [A * X, A * Y]

    return AnalyticMap(domain, target, fn, "sphere_projection", {"amplitude": A})


def _sphere_capped(domain, target, amplitude=0.5, z0=math.cos(math.pi / 128)):
    """A (z² - z0²)(x, y): vanishes on the two circles z = ±z0."""
    _require(domain, target, "sphere_capped", ("sphere2",), ("euclid2", "poincare2"))
    A = amplitude

    def fn(x):
        X, Y, Z = _embedding(domain, x)
        w = A * (Z * Z - z0 * z0)
        return [w * X, w * Y]

    return AnalyticMap(domain, target, fn, "sphere_capped", {"amplitude": A, "z0": z0})


def _sphere_poly(domain, target, amplitude=0.5):
    _require(domain, target, "sphere_poly", ("sphere2",), ("euclid2", "poincare2", "euclid3"))
    A = amplitude

    def fn(x):
        X, Y, Z = _embedding(domain, x)
        comps = [A * (X * Z + 0.5 * Y), A * (Y * Z - 0.3 * X * X), A * (Z + 0.2 * X * Y)]
        return comps[: target.dim]

    return AnalyticMap(domain, target, fn, "sphere_poly", {"amplitude": A})


def _trig_random(domain, target, seed=0.0, amplitude=0.5, degree=2.0):
    """Random trigonometric polynomial with |f| ≤ amplitude.

    On the torus the modes are cos(k·x + φ) with integer wave vectors; on
    the sphere they are taken in the embedding coordinates so the map is
    smooth across the poles.
    """
    _require(domain, target, "trig_random", ("torus2", "sphere2"), ("euclid", "poincare"))
    rng = np.random.default_rng(int(seed))
    deg = int(degree)
    m = target.dim
    per_comp = amplitude / math.sqrt(m)
    if domain.name.startswith("torus"):
        ks = [(i, j) for i in range(-deg, deg + 1) for j in range(-deg, deg + 1) if (i, j) != (0, 0)]
    else:
        ks = [(i, j, k) for i in range(-deg, deg + 1) for j in range(-deg, deg + 1) for k in range(-deg, deg + 1)]
        ks = [w for w in ks if w != (0, 0, 0) and sum(abs(t) for t in w) <= deg]
    nterms = min(len(ks), 4)
    spec = []
    for _ in range(m):
        pick = rng.choice(len(ks), size=nterms, replace=False)
        coef = rng.normal(size=nterms)
        coef *= per_comp / np.sum(np.abs(coef))
        phase = rng.uniform(0.0, 2.0 * math.pi, size=nterms)
        spec.append([(ks[int(q)], float(c), float(ph)) for q, c, ph in zip(pick, coef, phase)])

    torus_domain = domain.name.startswith("torus")

    def fn(x):
        base = list(x) if torus_domain else list(_embedding(domain, x))
        out = []
        for terms in spec:
            acc = 0.0
            for k, c, ph in terms:
                arg = ph
                for kk, xx in zip(k, base):
                    if kk:
                        arg = arg + kk * xx
                acc = acc + c * J.cos(arg)
            out.append(acc)
        return out

    return AnalyticMap(domain, target, fn, "trig_random", {"seed": seed, "amplitude": amplitude, "degree": deg})


MAP_CATALOG: dict[str, MapEntry] = {
    "identity": MapEntry(_identity, (), (), "identity chart map (equal dimensions)"),
    "constant": MapEntry(_constant, (), (), "constant map; optional target point coordinates"),
    "torus_linear": MapEntry(_torus_linear, ("a", "b", "c", "d"), (2.0, 0.0, 0.0, 1.0), "(x,y) -> (ax+by, cx+dy)"),
    "torus_to_disk": MapEntry(
        _torus_to_disk, ("amplitude", "frequency"), (0.3, 1.0), "(x,y) -> (A cos kx, A sin ky)"
    ),
    "torus_sin": MapEntry(_torus_sin, (), (), "(x,y) -> (sin x, 0)"),
    "torus_trig": MapEntry(_torus_trig, ("amplitude",), (1.0,), "(x,y) -> A(sin x + cos(y)/2, cos(x+y))"),
    "torus_helix": MapEntry(_torus_helix, ("amplitude",), (1.0,), "torus2 -> euclid3 helicoidal map"),
    "sphere_inclusion": MapEntry(_sphere_inclusion, (), (), "S²(r) -> R³ standard embedding"),
    "sphere_projection": MapEntry(_sphere_projection, ("amplitude",), (0.5,), "S² -> plane, A(x, y)"),
    "sphere_capped": MapEntry(
        _sphere_capped, ("amplitude", "z0"), (0.5, math.cos(math.pi / 128)), "S² -> plane, A(z² - z0²)(x, y)"
    ),
    "sphere_poly": MapEntry(_sphere_poly, ("amplitude",), (0.5,), "S² -> polynomial in embedding coordinates"),
    "trig_random": MapEntry(_trig_random, ("seed", "amplitude", "degree"), (0.0, 0.5, 2.0), "random bounded trig polynomial"),
}


PARAM_ALIASES = {"a": "amplitude", "A": "amplitude", "k": "frequency"}


def canonical_param(name: str, key: str) -> str:
    """Resolve short aliases (``a`` for amplitude, ``k`` for frequency) for map ``name``."""
    params = MAP_CATALOG[name].params
    if key not in params and PARAM_ALIASES.get(key) in params:
        return PARAM_ALIASES[key]
    return key


def parse_map_spec(spec: str) -> tuple[str, dict]:
    """Split ``"name:1,2"`` or ``"name:a=1,b=2"`` into name and parameter dict."""
    name, _, rest = spec.strip().partition(":")
    if name not in MAP_CATALOG:
        raise UnknownMap(f"unknown map {name!r}")
    entry = MAP_CATALOG[name]
    params: dict = {}
    if rest.strip():
        items = [t.strip() for t in rest.split(",") if t.strip()]
        positional = []
        for t in items:
            key, eq, val = t.partition("=")
            try:
                if eq:
                    params[canonical_param(name, key.strip())] = float(val)
                else:
                    positional.append(float(t))
            except ValueError:
                raise UnknownMap(f"bad parameter {t!r} in map spec {spec!r}") from None
        if entry.params:
            if len(positional) > len(entry.params):
                raise UnknownMap(f"{name} takes at most {len(entry.params)} parameters")
            for k, v in zip(entry.params, positional):
                params[k] = v
        elif positional:
            params["values"] = positional
        unknown = set(params) - set(entry.params) - {"values"}
        if unknown:
            raise UnknownMap(f"{name}: unknown parameters {sorted(unknown)}")
    return name, params


def build_map(spec: str, domain: ChartManifold, target: ChartManifold) -> AnalyticMap:
    name, params = parse_map_spec(spec)
    entry = MAP_CATALOG[name]
    if "values" in params:
        return entry.build(domain, target, *params["values"])
    kwargs = {k: params.get(k, d) for k, d in zip(entry.params, entry.defaults)}
    return entry.build(domain, target, **kwargs)


def format_map_spec(name: str, params: dict) -> str:
    entry = MAP_CATALOG[name]
    if not params:
        return name
    if "values" in params:
        return name + ":" + ",".join(repr(float(v)) for v in params["values"])
    return name + ":" + ",".join(f"{k}={float(params[k])!r}" for k in entry.params if k in params)
