"""Uniform grids, discrete measures, and weighted inner products.

The learning problem lives on a uniform mesh: the data functions are
sampled on an x-grid, and the kernel is estimated on an r-grid whose
points are positive multiples of the same mesh size.  A discrete
probability measure on the r-grid (the exploration measure) defines the
weighted L2 geometry used by every downstream module.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonCommensurateGrid

#: Relative tolerance for deciding that a mesh size divides a span.
COMMENSURATE_RTOL = 1e-9


def _frozen_array(values):
    out = np.ascontiguousarray(values, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class UniformGrid:
    """Equispaced points ``x_min + j*dx`` for ``j = 0..n_steps``.

    Instances are immutable; the ``points`` array is read-only.
    """

    x_min: float
    x_max: float
    dx: float
    points: np.ndarray = field(repr=False, compare=False)

    @property
    def n_points(self):
        return self.points.size

    @property
    def span(self):
        return self.x_max - self.x_min

    def index_of(self, x):
        """Index of the grid point nearest to ``x`` (must lie on the grid)."""
        j = int(round((x - self.x_min) / self.dx))
        if not 0 <= j < self.n_points:
            raise DimensionMismatch(f"{x} is outside the grid [{self.x_min}, {self.x_max}]")
        return j


def make_uniform_grid(x_min, x_max, dx):
    """Build a uniform grid over ``[x_min, x_max]`` with mesh size ``dx``.

    Parameters
    ----------
    x_min, x_max : float
        Grid ends, ``x_max > x_min``.
    dx : float
        Mesh size; must divide ``x_max - x_min`` to within a relative
        tolerance of ``1e-9``.

    Returns
    -------
    UniformGrid

    Raises
    ------
    NonCommensurateGrid
        If ``dx`` does not divide the span.
    """
    if dx <= 0:
        raise NonCommensurateGrid(f"mesh size must be positive, got {dx}")
    if x_max <= x_min:
        raise NonCommensurateGrid(f"empty grid span [{x_min}, {x_max}]")
    ratio = (x_max - x_min) / dx
    n_steps = round(ratio)
    if n_steps < 1 or abs(ratio - n_steps) > COMMENSURATE_RTOL * max(1.0, ratio):
        raise NonCommensurateGrid(
            f"mesh size {dx} does not divide the span {x_max - x_min}"
        )
    points = x_min + dx * np.arange(n_steps + 1)
    return UniformGrid(float(x_min), float(x_max), float(dx), _frozen_array(points))


def radius_grid(dx, r_max):
    """Grid of positive radii ``dx, 2*dx, ..., r_max`` (excludes zero)."""
    grid = make_uniform_grid(0.0, r_max, dx)
    return UniformGrid(float(dx), float(r_max), float(dx), _frozen_array(grid.points[1:]))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure on an r-grid, stored as density values.

    ``weights[k]`` is the density at ``r_grid.points[k]``; the measure of
    one mesh cell is ``weights[k] * dx`` and the densities are normalized
    so the total mass is one.
    """

    r_grid: UniformGrid
    weights: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        if self.weights.shape != (self.r_grid.n_points,):
            raise DimensionMismatch(
                f"{self.weights.shape[0]} weights for {self.r_grid.n_points} grid points"
            )

    @property
    def dx(self):
        return self.r_grid.dx

    @property
    def support_radius(self):
        return self.r_grid.x_max

    @property
    def total(self):
        return float(np.sum(self.weights) * self.dx)

    @classmethod
    def from_raw_weights(cls, r_grid, raw_weights):
        """Normalize nonnegative raw weights into a probability measure."""
        raw = np.asarray(raw_weights, dtype=float)
        if np.any(raw < 0):
            raise DimensionMismatch("measure weights must be nonnegative")
        mass = np.sum(raw) * r_grid.dx
        if mass <= 0:
            raise DimensionMismatch("cannot normalize an all-zero measure")
        return cls(r_grid, _frozen_array(raw / mass))

    def restricted(self, r_max):
        """Measure renormalized on radii ``<= r_max`` (trailing part dropped)."""
        keep = int(round(r_max / self.dx))
        keep = min(keep, self.r_grid.n_points)
        sub = radius_grid(self.dx, keep * self.dx)
        return DiscreteMeasure.from_raw_weights(sub, self.weights[:keep])


def l2rho_inner(f, g, measure):
    """Weighted inner product ``sum_k f_k g_k rho_k dx``.

    Symmetric and bilinear; positive semi-definite whenever the measure
    weights are nonnegative.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    n = measure.weights.size
    if f.shape != (n,) or g.shape != (n,):
        raise DimensionMismatch(
            f"vectors of lengths {f.shape}/{g.shape} on a measure with {n} points"
        )
    return float(np.sum(f * g * measure.weights) * measure.dx)


def l2rho_norm(f, measure):
    """Weighted L2 norm of ``f``."""
    return float(np.sqrt(max(l2rho_inner(f, f, measure), 0.0)))


def l2rho_error(estimate, truth, measure):
    """Weighted L2 distance between an estimate and the truth.

    Zero exactly when the two vectors agree on every point carrying
    positive weight.
    """
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise DimensionMismatch(
            f"estimate {estimate.shape} vs truth {truth.shape}"
        )
    return l2rho_norm(estimate - truth, measure)
