"""Exception hierarchy for mapenergy."""


class MapEnergyError(Exception):
    """Base class for all library errors."""


class OutOfChart(MapEnergyError):
    """A chart point violates the guard band of its chart."""


class DegenerateMetric(MapEnergyError):
    """The metric is not positive definite at a sampled point."""


class DegeneratePlane(MapEnergyError):
    """Two tangent vectors do not span a nondegenerate plane."""


class NonCompactDomain(MapEnergyError):
    """An operation that needs a compact manifold got a non-compact one."""


class UnknownManifold(MapEnergyError):
    """A catalog name does not match any known manifold."""


class UnknownMap(MapEnergyError):
    """A map catalog name does not match any known map."""


class TargetChartEscape(MapEnergyError):
    """Map values left the guarded interior of the target chart."""


class StencilOutOfChart(MapEnergyError):
    """A finite-difference stencil reached outside the domain chart."""


class NonFiniteField(MapEnergyError):
    """A quadrature field contains NaN or infinite values."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class RankDeficient(MapEnergyError):
    """df vanishes where a nonzero differential is required."""


class StepRejected(MapEnergyError):
    """A flow step was rejected and the retry budget ran out."""


class BlowUp(MapEnergyError):
    """A flow time step underflowed its lower bound."""


class ConfigError(MapEnergyError):
    """Invalid scenario or command-line configuration."""
