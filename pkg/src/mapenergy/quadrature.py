"""Quadrature on compact chart manifolds with refinement certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import NonCompactDomain, NonFiniteField, OutOfChart
from .geometry import ChartManifold

DEFAULT_TORUS_RESOLUTION = 128
DEFAULT_SPHERE_RESOLUTION = (96, 192)
DEFAULT_LEVELS = 3

Resolution = Union[int, Sequence[int]]


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    manifold: ChartManifold
    resolution: tuple[int, ...]
    nodes: np.ndarray
    weights: np.ndarray
    volume_density: np.ndarray
    level: int = 0

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def measure(self) -> np.ndarray:
        """weight × volume density per node."""
        return self.weights * self.volume_density

    def coarser(self) -> Optional["QuadratureGrid"]:
        res = tuple(r // 2 for r in self.resolution)
        if min(res) < 2:
            return None
        return build_grid(self.manifold, res, level=self.level - 1)

    def refined(self) -> "QuadratureGrid":
        return build_grid(self.manifold, tuple(2 * r for r in self.resolution), level=self.level + 1)

    def spacing(self) -> np.ndarray:
        """Characteristic coordinate spacing per axis."""
        out = []
        for iv, r in zip(self.manifold.chart_box, self.resolution):
            out.append(iv.length / r)
        return np.array(out)


def default_resolution(M: ChartManifold) -> tuple[int, ...]:
    if M.quadrature == "sphere":
        return DEFAULT_SPHERE_RESOLUTION
    if M.quadrature == "product":
        return default_resolution(M.factors[0]) + default_resolution(M.factors[1])
    return (DEFAULT_TORUS_RESOLUTION,) * M.dim


def normalize_resolution(M: ChartManifold, resolution: Optional[Resolution]) -> tuple[int, ...]:
    """Expand an int or partial tuple to one count per coordinate.

    A bare int ``N`` means ``N`` per axis, except on the sphere where it
    means ``N`` polar by ``2N`` azimuthal nodes.
    """
    if resolution is None:
        return default_resolution(M)
    if isinstance(resolution, (int, np.integer)):
        N = int(resolution)
        if M.quadrature == "sphere":
            return (N, 2 * N)
        if M.quadrature == "product":
            return normalize_resolution(M.factors[0], N) + normalize_resolution(M.factors[1], N)
        return (N,) * M.dim
    res = tuple(int(r) for r in resolution)
    if len(res) != M.dim:
        raise ValueError(f"resolution {res} does not match dimension {M.dim} of {M.name}")
    return res


def _uniform_axis(lo: float, hi: float, count: int):
    h = (hi - lo) / count
    return lo + h * np.arange(count), np.full(count, h)


def _sphere_factor(M: ChartManifold, res: tuple[int, int]):
    nt, nphi = res
    t, w = np.polynomial.legendre.leggauss(nt)
    theta = np.arccos(t)[::-1]
    w = w[::-1]
    phi, wphi = _uniform_axis(0.0, 2.0 * math.pi, nphi)
    TH, PH = np.meshgrid(theta, phi, indexing="ij")
    nodes = np.stack([TH.ravel(), PH.ravel()], axis=-1)
    # ∫ f r² sinθ dθ dφ = r² ∫ f d(cosθ) dφ; weights carry 1/sinθ so that
    # weight × density reproduces the Gauss rule in cosθ
    wt = np.outer(w / np.sin(theta), wphi).ravel()
    return nodes, wt


def _factor_nodes(M: ChartManifold, res: tuple[int, ...]):
    if M.quadrature == "sphere":
        return _sphere_factor(M, res)
    if M.quadrature == "uniform":
        axes = [_uniform_axis(iv.lo, iv.hi, r) for iv, r in zip(M.chart_box, res)]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)
        weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
        return nodes, weights
    if M.quadrature == "product":
        a, b = M.factors
        na, wa = _factor_nodes(a, res[: a.dim])
        nb, wb = _factor_nodes(b, res[a.dim :])
        nodes = np.concatenate(
            [np.repeat(na, len(nb), axis=0), np.tile(nb, (len(na), 1))], axis=-1
        )
        return nodes, np.repeat(wa, len(wb)) * np.tile(wb, len(wa))
    raise NonCompactDomain(f"no quadrature rule for {M.name}")


def build_grid(M: ChartManifold, resolution: Optional[Resolution] = None, level: int = 0) -> QuadratureGrid:
    """Tensor quadrature grid on a compact chart manifold.

    Periodic axes use the trapezoidal rule; the sphere uses Gauss-Legendre
    nodes in cosθ, so no node sits on a pole.
    """
    if not M.compact:
        raise NonCompactDomain(f"{M.name} is not compact")
    res = normalize_resolution(M, resolution)
    if min(res) < 1:
        raise ValueError(f"resolution must be positive, got {res}")
    nodes, weights = _factor_nodes(M, res)
    if not np.all(M.guard_mask(nodes)):
        raise OutOfChart(f"quadrature nodes of {M.name} at {res} violate the chart guard band")
    density = np.sqrt(np.linalg.det(M.metric(nodes)))
    return QuadratureGrid(M, res, nodes, weights, density, level)


def integrate(grid: QuadratureGrid, field) -> float:
    """Σ field · weight · volume density, summed pairwise for determinism."""
    field = np.asarray(field, dtype=float)
    if field.shape != (grid.size,):
        field = np.broadcast_to(field, (grid.size,))
    bad = ~np.isfinite(field)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise NonFiniteField(f"non-finite field value at node {idx}", idx)
    return float(np.sum(np.ascontiguousarray(field * grid.measure)))


@dataclass(frozen=True)
class Estimate:
    value: float
    certificate: float
    order: Optional[float]
    values: tuple[float, ...]
    resolutions: tuple[tuple[int, ...], ...]


def observed_order(values: Sequence[float], floor: float = 0.0) -> Optional[float]:
    """log2 of successive difference ratios for ×2 refinements.

    Returns ``None`` when fewer than three values exist or differences sit
    below ``floor``; ``inf`` when the last difference vanished exactly.
    """
    if len(values) < 3:
        return None
    d1 = abs(values[-2] - values[-3])
    d2 = abs(values[-1] - values[-2])
    if d1 <= floor:
        return None
    if d2 == 0.0:
        return math.inf
    return math.log2(d1 / d2)


def level_resolutions(M: ChartManifold, resolution: Optional[Resolution], levels: int) -> list[tuple[int, ...]]:
    """Resolutions of a refinement ladder ending at ``resolution``."""
    final = normalize_resolution(M, resolution)
    out = []
    for k in range(levels - 1, -1, -1):
        out.append(tuple(max(1, r >> k) for r in final))
    return out


def refine_and_estimate(
    M: ChartManifold,
    producer: Callable[[QuadratureGrid], np.ndarray],
    levels: int = DEFAULT_LEVELS,
    resolution: Optional[Resolution] = None,
) -> Estimate:
    """Integrate ``producer(grid)`` on a ×2 refinement ladder.

    The certificate is the absolute change between the last two levels.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    ress = level_resolutions(M, resolution, levels)
    vals = []
    for lvl, res in enumerate(ress):
        grid = build_grid(M, res, level=lvl)
        vals.append(integrate(grid, producer(grid)))
    cert = abs(vals[-1] - vals[-2]) if len(vals) > 1 else math.inf
    return Estimate(vals[-1], cert, observed_order(vals), tuple(vals), tuple(ress))
