"""From raw samples to the regression triplet.

The expensive pass over the raw data happens once: for every explored
radius ``r_j = j*dx`` the shifted combinations ``g[u](x, r_j) +
g[u](x, -r_j)`` are accumulated into

* the exploration measure (how much the data weighs each radius),
* the two-point correlation matrix ``G(r_k, r_l)``, and
* the output correlation vector against each ``f_k``.

Everything after that is small dense linear algebra on the kernel grid.
Because radii and sample points share one mesh, every shift ``x + r_j``
lands exactly on a grid point and no interpolation is ever needed.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import (
    DegenerateSupport,
    DimensionMismatch,
    DimensionOutOfRange,
    EmptyExploration,
    SingularBasis,
)
from .grids import DiscreteMeasure, UniformGrid, radius_grid
from .operators import Dataset, OperatorKind

#: Relative eigenvalue floor below which a basis Gram matrix is rejected.
BASIS_RANK_TOL = 1e-12

#: Relative threshold for the support of noise-free sampled functions.
SUPPORT_RTOL = 1e-12

#: Safety factor enlarging the estimated kernel support.
SUPPORT_INFLATION = 1.1

#: Relative floor below which a measure weight counts as zero (roundoff of
#: structurally cancelling accumulations, not data).
MEASURE_SUPPORT_RTOL = 1e-11


def _shifted(values, j):
    """``values`` translated by ``j`` mesh steps with zero extension."""
    out = np.zeros_like(values)
    if j == 0:
        out[:] = values
    elif j > 0:
        out[: values.size - j] = values[j:]
    else:
        out[-j:] = values[: values.size + j]
    return out


def _g_shift_pair(op, u, du, j):
    """Arrays ``g[u](x, +r_j)`` and ``g[u](x, -r_j)`` over the x-grid.

    ``du`` is the finite-difference derivative of ``u`` (only consumed by
    the nonlinear mean-field operator).
    """
    if op is OperatorKind.LINEAR_INTEGRAL:
        return _shifted(u, j), _shifted(u, -j)
    if op is OperatorKind.NONLOCAL:
        return _shifted(u, j) - u, _shifted(u, -j) - u
    if op is OperatorKind.NONLINEAR_MEAN_FIELD:
        plus = _shifted(du, j) * u + _shifted(u, j) * du
        minus = _shifted(du, -j) * u + _shifted(u, -j) * du
        return plus, minus
    raise DimensionMismatch(f"unknown operator {op!r}")


def fd_derivative(u, dx):
    """Finite-difference derivative of a compactly supported sample vector.

    Centered second-order stencils in the interior; at the edges of the
    support the stencil is one-sided and stays inside it, so a jump at the
    support boundary never bleeds an ``O(1/dx)`` spike into the derivative.
    Outside the support the derivative is zero.
    """
    u = np.asarray(u, dtype=float)
    du = np.gradient(u, dx, edge_order=2)
    nz = np.nonzero(u != 0.0)[0]
    if nz.size == 0:
        return np.zeros_like(u)
    i0, i1 = int(nz[0]), int(nz[-1])
    du[:i0] = 0.0
    du[i1 + 1 :] = 0.0
    if i1 - i0 >= 2:
        du[i0] = (-3.0 * u[i0] + 4.0 * u[i0 + 1] - u[i0 + 2]) / (2.0 * dx)
        du[i1] = (3.0 * u[i1] - 4.0 * u[i1 - 1] + u[i1 - 2]) / (2.0 * dx)
    elif i1 == i0 + 1:
        du[i0] = (u[i1] - u[i0]) / dx
        du[i1] = du[i0]
    else:
        du[i0] = 0.0
    return du


def _derivatives(ds):
    """Support-aware finite-difference derivatives of the sampled inputs."""
    if ds.operator is not OperatorKind.NONLINEAR_MEAN_FIELD:
        return [None] * ds.n_pairs
    return [fd_derivative(u, ds.dx) for u in ds.u_samples]


def exploration_measure(ds, R0=None):
    """Data-induced probability measure on the explored radii.

    The raw weight of radius ``r_j`` is the total absolute mass of
    ``g[u_k](x_i, +-r_j)`` over all pairs and sample points; weights are
    normalized so the densities integrate to one.

    Raises
    ------
    EmptyExploration
        If every weight vanishes (e.g. all inputs are identically zero).
    """
    if R0 is None:
        R0 = ds.x_grid.span
    if R0 <= 0:
        raise DimensionMismatch(f"scan radius must be positive, got {R0}")
    n_r = int(math.floor(R0 / ds.dx + 1e-9))
    if n_r < 1:
        raise DimensionMismatch("scan radius smaller than one mesh cell")
    dus = _derivatives(ds)
    raw = np.zeros(n_r)
    for u, du in zip(ds.u_samples, dus):
        for j in range(1, n_r + 1):
            plus, minus = _g_shift_pair(ds.operator, u, du, j)
            raw[j - 1] += np.sum(np.abs(plus)) + np.sum(np.abs(minus))
    if not np.any(raw > 0):
        raise EmptyExploration("the data does not explore any radius")
    return DiscreteMeasure.from_raw_weights(radius_grid(ds.dx, n_r * ds.dx), raw)


def support_bounds(values, points, rtol=SUPPORT_RTOL):
    """Smallest interval of ``points`` containing all samples with
    ``|value| > rtol * max|value|``, or ``None`` if no sample qualifies."""
    values = np.asarray(values, dtype=float)
    peak = np.max(np.abs(values)) if values.size else 0.0
    if peak <= 0:
        return None
    idx = np.nonzero(np.abs(values) > rtol * peak)[0]
    if idx.size == 0:
        return None
    return float(points[idx[0]]), float(points[idx[-1]])


def positive_support_radius(measure):
    """Largest radius carrying a measure weight above the roundoff floor."""
    floor = MEASURE_SUPPORT_RTOL * np.max(measure.weights)
    idx = np.nonzero(measure.weights > floor)[0]
    if idx.size == 0:
        raise EmptyExploration("measure has no positive weight")
    return float(measure.r_grid.points[idx[-1]])


def estimate_support(ds, rho):
    """Data-adaptive upper bound ``R`` for the kernel support.

    ``R`` is 1.1 times the smaller of the measure's own support radius and
    the largest offset between the supports of the inputs and of the clean
    outputs, rounded up to the mesh.  The support comparison extracts the
    interaction range from the outputs: an output that reaches ``s`` past
    its input was produced by a kernel reaching ``s``.  When the operator
    confines the output inside the input support (the mean-field family
    does: its outputs carry a factor ``u(x)``), the offset degenerates to
    zero and carries no information, so the measure's radius is used alone.

    Raises
    ------
    DegenerateSupport
        If some clean output has an empty support (no kernel signal).
    """
    xs = ds.x_grid.points
    max_offset = 0.0
    for u, f in zip(ds.u_samples, ds.f_clean):
        ub = support_bounds(u, xs)
        fb = support_bounds(f, xs)
        if fb is None:
            raise DegenerateSupport("an output sample is identically zero")
        if ub is None:
            continue
        max_offset = max(max_offset, abs(fb[0] - ub[0]), abs(fb[1] - ub[1]))
    r_rho = positive_support_radius(rho)
    if max_offset < 2.0 * ds.dx:
        effective = r_rho
    else:
        effective = min(r_rho, max_offset)
    raw = SUPPORT_INFLATION * effective
    R = math.ceil(raw / ds.dx - 1e-9) * ds.dx
    return float(min(max(R, ds.dx), rho.r_grid.x_max))


@dataclass(frozen=True)
class RegressionData:
    """Sufficient statistics of one dataset on the kernel grid.

    ``G[k, l]`` is the two-point correlation of the shifted inputs at radii
    ``(r_k, r_l)``, ``gNf[k]`` the correlation of the shifted inputs with
    the outputs, and ``rho`` the exploration measure restricted to the
    estimated kernel support.  Together they determine every regression
    matrix for any hypothesis space without another pass over raw data.
    """

    r_grid: UniformGrid
    G: np.ndarray = field(repr=False)
    gNf: np.ndarray = field(repr=False)
    rho: DiscreteMeasure

    @property
    def n_r(self):
        return self.r_grid.n_points

    def save(self, path):
        np.savez(
            path,
            format="dartr-regression-v1",
            dx=self.r_grid.dx,
            r_max=self.r_grid.x_max,
            G=self.G,
            gNf=self.gNf,
            rho_weights=self.rho.weights,
        )

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as archive:
            if str(archive["format"]) != "dartr-regression-v1":
                raise DimensionMismatch(f"{path} is not a regression-data archive")
            dx = float(archive["dx"])
            r_max = float(archive["r_max"])
            grid = radius_grid(dx, r_max)
            rho = DiscreteMeasure.from_raw_weights(grid, archive["rho_weights"])
            return cls(grid, archive["G"], archive["gNf"], rho)


def _g_slab(ds, n_r):
    """Radial rows ``g[u](x, +r_j) + g[u](x, -r_j)`` per pair, together
    with the accumulated absolute weights of each radius."""
    dus = _derivatives(ds)
    slabs = np.empty((ds.n_pairs, n_r, ds.x_grid.n_points))
    raw_weights = np.zeros(n_r)
    for k, (u, du) in enumerate(zip(ds.u_samples, dus)):
        for j in range(1, n_r + 1):
            plus, minus = _g_shift_pair(ds.operator, u, du, j)
            slabs[k, j - 1] = plus + minus
            raw_weights[j - 1] += np.sum(np.abs(plus)) + np.sum(np.abs(minus))
    return slabs, raw_weights


def slab_gNf(slabs, f_samples, dx):
    """Output correlation vector from a radial slab: the Riemann sum of
    each radial row against each output, averaged over the pairs."""
    f_samples = np.atleast_2d(np.asarray(f_samples, dtype=float))
    n_pairs = slabs.shape[0]
    if f_samples.shape != (n_pairs, slabs.shape[2]):
        raise DimensionMismatch(
            f"outputs {f_samples.shape} do not match the slab {slabs.shape}"
        )
    gNf = np.zeros(slabs.shape[1])
    for k in range(n_pairs):
        gNf += slabs[k] @ f_samples[k]
    return gNf * (dx / n_pairs)


def regression_system(ds, R):
    """Regression data plus the radial slab it was built from.

    The slab lets callers rebuild the output correlation for other noise
    realizations of the same inputs without another pass over raw data.
    """
    n_r = int(round(R / ds.dx))
    if n_r < 1 or abs(n_r * ds.dx - R) > 1e-9 * max(1.0, R):
        raise DimensionMismatch(f"support bound {R} is not a multiple of dx={ds.dx}")
    n_r = min(n_r, ds.x_grid.n_points - 1)
    slabs, raw_weights = _g_slab(ds, n_r)
    floor = MEASURE_SUPPORT_RTOL * np.max(raw_weights) if np.any(raw_weights > 0) else 0.0
    positive = np.nonzero(raw_weights > floor)[0]
    if positive.size == 0:
        raise EmptyExploration("no radius below the support bound carries data")
    n_keep = int(positive[-1]) + 1
    slabs = np.ascontiguousarray(slabs[:, :n_keep, :])

    scale = ds.dx / ds.n_pairs
    G = np.zeros((n_keep, n_keep))
    for k in range(ds.n_pairs):
        rows = slabs[k]
        G += rows @ rows.T
    G *= scale
    G = (G + G.T) / 2.0
    gNf = slab_gNf(slabs, ds.f_samples, ds.dx)

    grid = radius_grid(ds.dx, n_keep * ds.dx)
    rho = DiscreteMeasure.from_raw_weights(grid, raw_weights[:n_keep])
    return RegressionData(grid, G, gNf, rho), slabs


def assemble_regression_data(ds, R):
    """Single read of the raw data producing :class:`RegressionData`.

    Both correlations are Riemann sums over the x-grid, averaged over the
    data pairs.  Trailing radii with zero measure weight (nothing explores
    them) are dropped so the restricted measure stays strictly positive at
    its right end.
    """
    rd, _slabs = regression_system(ds, R)
    return rd


@dataclass(frozen=True)
class HypothesisSpace:
    """Finite-dimensional space of candidate kernels on ``[0, r_max]``."""

    kind: str
    n: int
    r_max: float
    degree: int = 0
    knots: np.ndarray = field(default=None, repr=False)

    def design_matrix(self, r):
        """Matrix ``Phi[i, k] = phi_i(r_k)`` of basis values at radii ``r``."""
        r = np.asarray(r, dtype=float)
        if self.kind == "piecewise-constant":
            width = self.r_max / self.n
            inside = (r > 0) & (r <= self.r_max * (1 + 1e-12))
            cell = np.ceil(r / width - 1e-9).astype(int) - 1
            cell = np.clip(cell, 0, self.n - 1)
            out = np.zeros((self.n, r.size))
            cols = np.nonzero(inside)[0]
            out[cell[cols], cols] = 1.0
            return out
        if self.kind == "bspline":
            inside = (r >= 0) & (r <= self.r_max)
            clipped = np.clip(r, 0.0, self.r_max)
            dense = BSpline.design_matrix(clipped, self.knots, self.degree).toarray()
            dense[~inside] = 0.0
            return dense.T
        raise DimensionMismatch(f"unknown basis kind {self.kind!r}")

    def evaluate(self, coefficients, r):
        """Kernel values ``sum_i c_i phi_i(r)``; zero outside ``[0, r_max]``."""
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (self.n,):
            raise DimensionMismatch(
                f"{coefficients.shape[0]} coefficients for a {self.n}-dimensional space"
            )
        scalar = np.isscalar(r) or np.ndim(r) == 0
        values = coefficients @ self.design_matrix(np.atleast_1d(r))
        return float(values[0]) if scalar else values


def build_hypothesis_space(kind, n, R, dx, degree=2):
    """Construct a basis of dimension ``n`` on ``[0, R]``.

    The admissible dimensions run from a fifth of the number of explored
    mesh cells up to that full count; outside this range the basis is
    either unable to resolve the data or cannot stay independent on it.
    """
    n_full = int(math.floor(R / dx + 1e-9))
    n_min = max(1, math.ceil(0.2 * n_full - 1e-9))
    if not n_min <= n <= n_full:
        raise DimensionOutOfRange(
            f"dimension {n} outside the admissible range [{n_min}, {n_full}]"
        )
    if kind == "piecewise-constant":
        return HypothesisSpace(kind="piecewise-constant", n=int(n), r_max=float(R))
    if kind == "bspline":
        if n < degree + 1:
            raise DimensionOutOfRange(
                f"a degree-{degree} spline basis needs at least {degree + 1} functions"
            )
        n_interior = n - degree - 1
        interior = np.linspace(0.0, R, n_interior + 2)[1:-1]
        knots = np.concatenate(
            [np.zeros(degree + 1), interior, np.full(degree + 1, float(R))]
        )
        return HypothesisSpace(
            kind="bspline", n=int(n), r_max=float(R), degree=int(degree), knots=knots
        )
    raise DimensionMismatch(f"unknown basis kind {kind!r}")


@dataclass(frozen=True)
class RegressionTriplet:
    """Normal matrix, right-hand side, and basis Gram matrix of one space."""

    A: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    space: HypothesisSpace
    rho: DiscreteMeasure


def assemble_triplet(rd, hs):
    """Project the regression data onto a hypothesis space.

    Riemann sums on the kernel grid give the quadratic-loss normal matrix,
    its right-hand side, and the weighted Gram matrix of the basis.

    Raises
    ------
    SingularBasis
        If the Gram matrix is numerically singular on the explored radii.
    """
    if abs(hs.r_max - rd.r_grid.x_max) > 1e-9 * max(1.0, rd.r_grid.x_max):
        raise DimensionMismatch(
            f"space on [0, {hs.r_max}] does not match the data grid end {rd.r_grid.x_max}"
        )
    dx = rd.r_grid.dx
    Phi = hs.design_matrix(rd.r_grid.points)
    A = Phi @ rd.G @ Phi.T * dx**2
    A = (A + A.T) / 2.0
    b = Phi @ rd.gNf * dx
    B = (Phi * (rd.rho.weights * dx)) @ Phi.T
    B = (B + B.T) / 2.0
    eigvals = np.linalg.eigvalsh(B)
    if eigvals[-1] <= 0 or eigvals[0] <= BASIS_RANK_TOL * np.linalg.norm(B, 2):
        raise SingularBasis(
            f"Gram matrix of the {hs.n}-dimensional {hs.kind} basis is singular"
        )
    return RegressionTriplet(A=A, b=b, B=B, space=hs, rho=rd.rho)
