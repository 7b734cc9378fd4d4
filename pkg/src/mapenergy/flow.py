"""Grid-backed maps and explicit gradient flows of E₁ and E₂.

A :class:`DiscreteMap` stores target chart coordinates at the nodes of a
:class:`FlowGrid` and produces value, ∂f and ∂²f by central differences,
so every map-calculus routine applies to it unchanged.

Torus grids are uniform and periodic. Sphere grids put rows at the
midpoints θ_j = (j + ½)π/Nθ; stencils that cross a pole continue through
the identity (θ, φ) ~ (-θ, φ + π), so no one-sided differences are needed.
The two rows next to the poles are pinned during flows.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from . import calculus as C
from .energy import NPC_TOLERANCE, npc_check
from .errors import BlowUp, ConfigError, StepRejected, TargetChartEscape
from .geometry import ChartManifold, pointwise_ricci_min
from .maps import AnalyticMap, MapBetweenManifolds
from .quadrature import QuadratureGrid, integrate

# central-difference weights at nonzero offsets (they sum to zero with the
# centre weight, so they can be applied to differences f(x + kh) - f(x))
FIRST = {
    2: ((-1, -0.5), (1, 0.5)),
    4: ((-2, 1.0 / 12.0), (-1, -2.0 / 3.0), (1, 2.0 / 3.0), (2, -1.0 / 12.0)),
}
SECOND = {
    2: ((-1, 1.0), (1, 1.0)),
    4: ((-2, -1.0 / 12.0), (-1, 4.0 / 3.0), (1, 4.0 / 3.0), (2, -1.0 / 12.0)),
}

HARMONIC_CFL = 0.2
BIHARMONIC_CFL = 0.05
ENERGY_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class FlowGrid:
    """Node layout of a flow domain (torus<n> or sphere2)."""

    manifold: ChartManifold
    shape: tuple[int, ...]
    nodes: np.ndarray
    spacing: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    pinned: np.ndarray

    @classmethod
    def build(cls, M: ChartManifold, shape) -> "FlowGrid":
        if isinstance(shape, (int, np.integer)):
            shape = (int(shape),) * M.dim
        shape = tuple(int(s) for s in shape)
        if len(shape) != M.dim or min(shape) < 5:
            raise ConfigError(f"flow grid {shape} must have {M.dim} axes of at least 5 nodes")
        axes, spacing = [], []
        if M.quadrature == "uniform":
            for iv, count in zip(M.chart_box, shape):
                h = iv.length / count
                axes.append(iv.lo + h * np.arange(count))
                spacing.append(h)
        elif M.quadrature == "sphere":
            nt, nphi = shape
            if nphi % 2:
                raise ConfigError("sphere flow grids need an even number of azimuthal nodes")
            ht, hp = math.pi / nt, 2.0 * math.pi / nphi
            axes = [(np.arange(nt) + 0.5) * ht, hp * np.arange(nphi)]
            spacing = [ht, hp]
        else:
            raise ConfigError(f"flows run on tori and sphere2 only, not {M.name}")
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([g.ravel() for g in mesh], axis=-1)
        M.check(nodes)
        spacing = np.array(spacing)
        density = np.sqrt(np.linalg.det(M.metric(nodes)))
        weights = np.full(len(nodes), float(np.prod(spacing)))
        pinned = np.zeros(len(nodes), dtype=bool)
        if M.quadrature == "sphere":
            rows = np.arange(len(nodes)) // shape[1]
            pinned = (rows == 0) | (rows == shape[0] - 1)
        return cls(M, shape, nodes, spacing, weights, density, pinned)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.manifold.dim

    @property
    def active(self) -> np.ndarray:
        return ~self.pinned

    @cached_property
    def _multi(self) -> np.ndarray:
        return np.stack(np.unravel_index(np.arange(self.size), self.shape), axis=-1)

    def offset(self, off: tuple[int, ...]):
        """Flat indices of the nodes at ``node + off`` and a mask of pole-reflected ones."""
        key = tuple(off)
        cache = self.__dict__.setdefault("_offsets", {})
        if key in cache:
            return cache[key]
        idx = self._multi + np.asarray(off)
        reflected = np.zeros(self.size, dtype=bool)
        if self.manifold.quadrature == "sphere":
            nt, nphi = self.shape
            low, high = idx[:, 0] < 0, idx[:, 0] >= nt
            idx[low, 0] = -idx[low, 0] - 1
            idx[high, 0] = 2 * nt - 1 - idx[high, 0]
            reflected = low | high
            idx[reflected, 1] += nphi // 2
            idx[:, 1] %= nphi
        else:
            idx %= np.asarray(self.shape)
        out = (np.ravel_multi_index(tuple(idx.T), self.shape), reflected)
        cache[key] = out
        return out

    @cached_property
    def domain_geometry(self) -> dict:
        probe = C.MapJet(self.manifold, self.manifold, self.nodes, self.nodes, None, None)
        return {key: getattr(probe, key) for key in C.MapJet.DOMAIN_FIELDS}

    def quadrature(self) -> QuadratureGrid:
        return QuadratureGrid(self.manifold, self.shape, self.nodes, self.weights, self.density)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Flat node indices of ``points``; raises if a point is not a node."""
        p = self.manifold.wrap(np.atleast_2d(np.asarray(points, dtype=float)))
        if self.manifold.quadrature == "sphere":
            k = np.stack([np.rint(p[:, 0] / self.spacing[0] - 0.5), np.rint(p[:, 1] / self.spacing[1])], axis=-1)
        else:
            lo = np.array([iv.lo for iv in self.manifold.chart_box])
            k = np.rint((p - lo) / self.spacing)
        k = k.astype(int) % np.asarray(self.shape)
        flat = np.ravel_multi_index(tuple(k.T), self.shape)
        err = self.manifold.wrap_difference(self.nodes[flat] - p)
        if np.max(np.abs(err), initial=0.0) > 1e-9:
            raise ValueError("grid-backed maps evaluate at grid nodes only")
        return flat

    def gradient(self, field: np.ndarray, order: int = 2, parity: Optional[np.ndarray] = None) -> np.ndarray:
        """Central first derivatives of a node field, new last axis = direction.

        ``parity`` gives the sign each trailing component picks up across a
        pole (−1 for θ-covector components on the sphere).
        """
        out = np.zeros(field.shape + (self.dim,))
        for i in range(self.dim):
            for k, c in FIRST[order]:
                off = [0] * self.dim
                off[i] = k
                idx, refl = self.offset(tuple(off))
                shifted = field[idx]
                if parity is not None and refl.any():
                    shifted = shifted.copy()
                    shifted[refl] = shifted[refl] * parity
                out[..., i] += c * (shifted - field)
            out[..., i] /= self.spacing[i]
        return out

    def local_step_scale(self) -> np.ndarray:
        """n / Σ g^ii / h_i² per node: the squared effective spacing."""
        ginv = np.linalg.inv(self.manifold.metric(self.nodes))
        diag = np.einsum("...ii->...i", ginv)
        return self.dim / np.sum(diag / self.spacing**2, axis=-1)


@dataclass(frozen=True, eq=False)
class DiscreteMap(MapBetweenManifolds):
    """Map stored as target coordinates at flow-grid nodes."""

    grid: FlowGrid
    target: ChartManifold
    values: np.ndarray
    order: int = 2
    name: str = "discrete"

    def __post_init__(self):
        if self.order not in FIRST:
            raise ConfigError(f"finite-difference order must be 2 or 4, got {self.order}")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size, self.target.dim):
            raise ValueError(f"values must have shape {(self.grid.size, self.target.dim)}")
        object.__setattr__(self, "values", self.target.wrap(v))

    @classmethod
    def from_analytic(cls, f: AnalyticMap, shape, order: int = 2) -> "DiscreteMap":
        grid = FlowGrid.build(f.domain, shape)
        values = f.values(grid.nodes)
        f.target.check(values, error=TargetChartEscape)
        return cls(grid, f.target, values, order, f"grid[{f.name}]")

    @property
    def domain(self) -> ChartManifold:
        return self.grid.manifold

    def with_values(self, values: np.ndarray) -> "DiscreteMap":
        return DiscreteMap(self.grid, self.target, values, self.order, self.name)

    def with_order(self, order: int) -> "DiscreteMap":
        return DiscreteMap(self.grid, self.target, self.values, order, self.name)

    def _difference(self, off):
        idx, _ = self.grid.offset(off)
        return self.target.wrap_difference(self.values[idx] - self.values)

    @cached_property
    def partials(self) -> tuple[np.ndarray, np.ndarray]:
        n, m, h = self.grid.dim, self.target.dim, self.grid.spacing
        d1 = np.zeros((self.grid.size, m, n))
        d2 = np.zeros((self.grid.size, m, n, n))
        for i in range(n):
            for k, c in FIRST[self.order]:
                off = [0] * n
                off[i] = k
                d1[..., i] += c * self._difference(tuple(off))
            for k, c in SECOND[self.order]:
                off = [0] * n
                off[i] = k
                d2[..., i, i] += c * self._difference(tuple(off))
            d1[..., i] /= h[i]
            d2[..., i, i] /= h[i] ** 2
            for j in range(i):
                acc = np.zeros((self.grid.size, m))
                for ki, ci in FIRST[self.order]:
                    for kj, cj in FIRST[self.order]:
                        off = [0] * n
                        off[i], off[j] = ki, kj
                        acc += ci * cj * self._difference(tuple(off))
                acc /= h[i] * h[j]
                d2[..., i, j] = acc
                d2[..., j, i] = acc
        return d1, d2

    @cached_property
    def jet(self) -> C.MapJet:
        d1, d2 = self.partials
        return C.MapJet(self.domain, self.target, self.grid.nodes, self.values, d1, d2, self.grid.domain_geometry)

    @cached_property
    def tension(self) -> np.ndarray:
        return C.tension(self.jet)

    def evaluate(self, points: np.ndarray):
        idx = self.grid.locate(points)
        d1, d2 = self.partials
        return self.values[idx], d1[idx], d2[idx]

    def bitension(self) -> np.ndarray:
        """τ₂ at every node from nested central differences of τ₁."""
        return self._bitension

    @cached_property
    def _bitension(self) -> np.ndarray:
        J, tau = self.jet, self.tension
        D = C.covariant_derivative(J, tau, self.grid.gradient(tau, self.order))
        parity = None
        if self.domain.quadrature == "sphere":
            parity = np.array([-1.0, 1.0])
        dD = self.grid.gradient(D, self.order, parity=parity)
        return C.rough_laplacian(J, D, dD) - C.curvature_term(J, tau)

    def energies(self) -> tuple[float, float]:
        quad = self.grid.quadrature()
        return integrate(quad, C.energy_density(self.jet)), integrate(quad, C.target_norm2(self.jet, self.tension))

    def sup_norm(self, v: np.ndarray) -> float:
        """sup over unpinned nodes of the target norm of ``v``."""
        act = self.grid.active
        return float(np.sqrt(np.max(C.target_norm2(self.jet, v)[act])))


# ---------------------------------------------------------------------------
# steps


def heat_flow_step(m: DiscreteMap, dt) -> DiscreteMap:
    """f ← f + dt·τ₁ on unpinned nodes (``dt`` scalar or per node)."""
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (m.grid.size,))
    inc = np.where(m.grid.active, dt, 0.0)[:, None] * m.tension
    return _advance(m, inc)


def biharmonic_flow_step(m: DiscreteMap, dt) -> DiscreteMap:
    """f ← f − dt·τ₂ on unpinned nodes, the descent direction of E₂."""
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (m.grid.size,))
    inc = -np.where(m.grid.active, dt, 0.0)[:, None] * m.bitension()
    return _advance(m, inc)


def _advance(m: DiscreteMap, inc: np.ndarray) -> DiscreteMap:
    new = m.target.wrap(m.values + inc)
    if not np.all(m.target.guard_mask(new)):
        raise TargetChartEscape("flow step left the guarded target chart")
    return m.with_values(new)


@dataclass
class FlowConfig:
    mode: str = "harmonic"
    dt: Optional[float] = None
    cfl: Optional[float] = None
    max_steps: int = 200_000
    tol: float = 1e-6
    energy_tol: Optional[float] = None
    record_every: int = 200
    max_rejections: int = 30
    order: int = 2
    time_limit: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("harmonic", "biharmonic"):
            raise ConfigError(f"unknown flow mode {self.mode!r}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.cfl is not None and not self.cfl > 0:
            raise ConfigError("cfl must be positive")
        if not self.tol > 0 or self.max_steps < 1 or self.record_every < 1:
            raise ConfigError("tol, max_steps and record_every must be positive")
        if self.energy_tol is not None and not self.energy_tol > 0:
            raise ConfigError("energy_tol must be positive")


CSV_COLUMNS = ("t", "E1", "E2", "sup_tau1", "sup_tau2", "margin", "dt")


@dataclass
class FlowTrace:
    rows: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    ric_min: float = 0.0
    npc_certified: list = field(default_factory=list)
    steps: int = 0
    rejections: int = 0
    termination: str = ""

    def column(self, name: str) -> np.ndarray:
        k = CSV_COLUMNS.index(name)
        return np.array([r[k] for r in self.rows])

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        lines += [",".join(repr(float(v)) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        last = dict(zip(CSV_COLUMNS, self.rows[-1])) if self.rows else {}
        return {
            "steps": self.steps,
            "rejections": self.rejections,
            "termination": self.termination,
            "ric_min": self.ric_min,
            "samples": len(self.rows),
            "final": last,
            "initial": dict(zip(CSV_COLUMNS, self.rows[0])) if self.rows else {},
            "margin_certificates": list(self.certificates),
            "npc_certified": list(self.npc_certified),
        }


def default_dt(m: DiscreteMap, mode: str, cfl: Optional[float] = None) -> float:
    """cfl·h² (harmonic, cfl = 0.2) or cfl·h⁴ (biharmonic, cfl = 0.05)."""
    h = float(np.min(m.grid.spacing))
    if mode == "harmonic":
        return (HARMONIC_CFL if cfl is None else cfl) * h**2
    return (BIHARMONIC_CFL if cfl is None else cfl) * h**4


def _step_profile(m: DiscreteMap, mode: str) -> np.ndarray:
    """Per-node multiplier of the nominal step.

    On the torus it is 1. On the sphere the azimuthal spacing shrinks like
    sinθ near the poles, and each node is slowed to its own stability limit;
    this is a diagonally preconditioned gradient flow with the same fixed
    points.
    """
    h = float(np.min(m.grid.spacing))
    local = m.grid.local_step_scale() / h**2
    if mode == "biharmonic":
        local = local**2
    return np.minimum(1.0, local)


def _ric_min(m: DiscreteMap) -> tuple[float, float]:
    pts = pointwise_ricci_min(m.domain, m.grid.nodes)
    fine = float(np.min(pts))
    coarse = float(np.min(pts[::2]))
    delta = abs(fine - coarse)
    return fine - delta, delta


def _sample(m: DiscreteMap, t: float, dt: float, ric_min: float, seed: int):
    E1, E2 = m.energies()
    sup1 = m.sup_norm(m.tension)
    sup2 = m.sup_norm(m.bitension())
    margin = E2 - ric_min * E1
    alt = m.with_order(4 if m.order == 2 else 2)
    a1, a2 = alt.energies()
    cert = abs((a2 - ric_min * a1) - margin)
    spec = C.pullback_spectrum(m.jet)
    _, _, image_sec = C._pair_terms(m.jet, spec)
    npc = npc_check(m.jet, image_sec, seed=seed) <= NPC_TOLERANCE
    return (t, E1, E2, sup1, sup2, margin, dt), cert, bool(npc)


def run_flow(m: DiscreteMap, config: FlowConfig, seed: int = 0) -> tuple[FlowTrace, DiscreteMap]:
    """Explicit Euler flow with step halving on rejection.

    A step is rejected when a node leaves the target guard band or the
    flowed energy (E₁ or E₂) increases by more than a relative 1e-10.
    Terminates when the sup of the flowed Euler-Lagrange field drops below
    ``tol``, when E₁ falls below ``energy_tol``·E₁(0), at ``max_steps``, or
    at ``time_limit`` seconds.
    """
    mode = config.mode
    m = m.with_order(config.order) if m.order != config.order else m
    dt0 = config.dt if config.dt is not None else default_dt(m, mode, config.cfl)
    profile = _step_profile(m, mode)
    step_fn = heat_flow_step if mode == "harmonic" else biharmonic_flow_step
    energy_index = 0 if mode == "harmonic" else 1

    ric_min, _ = _ric_min(m)
    trace = FlowTrace(ric_min=ric_min)

    def record(cur, t, dt):
        row, cert, npc = _sample(cur, t, dt, ric_min, seed)
        trace.rows.append(row)
        trace.certificates.append(cert)
        trace.npc_certified.append(npc)

    E0 = m.energies()
    E_cur = E0[energy_index]
    dt = dt0
    t = 0.0
    record(m, t, dt)
    start = time.perf_counter()
    dt_floor = dt0 * 2.0**-40

    def converged(cur, energies):
        if config.energy_tol is not None and energies[0] <= config.energy_tol * E0[0]:
            return "energy_tol"
        field_ = cur.tension if mode == "harmonic" else cur.bitension()
        if cur.sup_norm(field_) <= config.tol:
            return "tol"
        return ""

    reason = converged(m, E0)
    while not reason:
        if trace.steps >= config.max_steps:
            reason = "max_steps"
            break
        if config.time_limit is not None and time.perf_counter() - start > config.time_limit:
            reason = "time_limit"
            break
        for attempt in range(config.max_rejections + 1):
            try:
                cand = step_fn(m, dt * profile)
                energies = cand.energies()
                if energies[energy_index] <= E_cur * (1.0 + ENERGY_SLACK) + 1e-300:
                    break
            except TargetChartEscape:
                pass
            trace.rejections += 1
            dt *= 0.5
            if dt < dt_floor:
                raise BlowUp(f"time step underflow at t={t:g}")
        else:
            raise StepRejected(f"{config.max_rejections} consecutive rejections at t={t:g}")
        m, E_cur = cand, energies[energy_index]
        t += dt
        trace.steps += 1
        reason = converged(m, energies)
        if trace.steps % config.record_every == 0 and not reason:
            record(m, t, dt)
    if trace.rows[-1][0] != t:
        record(m, t, dt)
    trace.termination = reason
    return trace, m
