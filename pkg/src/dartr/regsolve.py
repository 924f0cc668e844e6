"""Generalized eigendecomposition and the three regularized solvers.

The normal matrix and the basis Gram matrix define a generalized
symmetric eigenproblem ``A V = B V diag(lams)`` with ``V' B V = I``.  Its
positive part spans the subspace on which the quadratic loss actually
determines the kernel; the induced norm ``c' B_rkhs c`` with
``B_rkhs = (V diag(lams) V')^{-1}`` penalizes exactly the directions the
data identifies poorly.  All three penalties (plain coefficient norm,
weighted-L2 norm, and the data-adaptive norm) admit closed spectral
solutions, so an L-curve scan over the regularization strength costs one
decomposition total.
"""

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    AllZeroSpectrum,
    DimensionMismatch,
    NegativeLambda,
    NoConvergence,
    NotPositiveDefinite,
)

#: Relative spectral floor: eigenvalues at or below ``RANK_TOL * max``
#: are treated as zero (truncated from inversions and projections).
RANK_TOL = 1e-12


class RegularizerKind(str, enum.Enum):
    """Penalty norm used by the regularized solve."""

    L2_COEFF = "l2"   # plain Euclidean norm of the coefficients
    L2_RHO = "L2"     # weighted-L2 norm, c' B c
    RKHS = "rkhs"     # data-adaptive norm, c' B_rkhs c

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class GenEigDecomposition:
    """Solution of ``A V = B V diag(eigenvalues)`` with ``V' B V = I``.

    Eigenvalues are sorted nonincreasing; ``rank`` counts those above the
    relative floor ``rank_tol * eigenvalues[0]``.
    """

    V: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    rank: int
    rank_tol: float
    B: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.eigenvalues.size

    @property
    def kept(self):
        """Slice selecting the retained (identifiable) modes."""
        return slice(0, self.rank)

    def coordinates(self, c):
        """Spectral coordinates of a coefficient vector: ``V' B c``."""
        return self.V.T @ (self.B @ np.asarray(c, dtype=float))


def _deterministic_columns(V, eigenvalues):
    """Fix eigenvector signs and the order of exactly tied eigenvalues."""
    V = V.copy()
    for j in range(V.shape[1]):
        lead = np.argmax(np.abs(V[:, j]))
        if V[lead, j] < 0:
            V[:, j] = -V[:, j]
    # stable lexicographic order inside runs of exactly equal eigenvalues
    start = 0
    while start < eigenvalues.size:
        stop = start + 1
        while stop < eigenvalues.size and eigenvalues[stop] == eigenvalues[start]:
            stop += 1
        if stop - start > 1:
            order = sorted(range(start, stop), key=lambda j: tuple(V[:, j]))
            V[:, start:stop] = V[:, order]
        start = stop
    return V


def gen_eig(A, B, rank_tol=RANK_TOL):
    """Solve the symmetric-definite generalized eigenproblem.

    Reduction goes through the Cholesky factor of ``B`` (LAPACK ``sygvd``),
    preserving symmetry; ``B^{-1} A`` is never formed.

    Raises
    ------
    NotPositiveDefinite
        If ``B`` is not symmetric positive definite.
    NoConvergence
        If the eigenvalue iteration fails.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"incompatible shapes {A.shape} and {B.shape}")
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise DimensionMismatch("normal matrix must be symmetric")
    try:
        eigenvalues, V = sla.eigh(A, B)
    except sla.LinAlgError as exc:
        message = str(exc)
        if "positive definite" in message or "leading minor" in message:
            raise NotPositiveDefinite(f"Gram matrix is not positive definite: {message}")
        raise NoConvergence(message)
    order = np.argsort(eigenvalues, kind="stable")[::-1]
    eigenvalues = eigenvalues[order]
    V = _deterministic_columns(V[:, order], eigenvalues)
    top = eigenvalues[0] if eigenvalues.size else 0.0
    rank = int(np.sum(eigenvalues > rank_tol * max(top, 0.0))) if top > 0 else 0
    return GenEigDecomposition(
        V=V, eigenvalues=eigenvalues, rank=rank, rank_tol=float(rank_tol), B=B
    )


def rkhs_norm_matrix(dec):
    """Norm matrix of the data-adaptive space: ``(V diag(lams) V')^{-1}``.

    Computed through the spectral pseudo-inverse: modes at or below the
    rank floor are dropped, the rest inverted.  Using ``V^{-1} = V' B``
    this is ``B V diag(1/lams) V' B`` on the retained modes, symmetric and
    positive semi-definite by construction.

    Raises
    ------
    AllZeroSpectrum
        If no eigenvalue survives truncation.
    """
    if dec.rank == 0:
        raise AllZeroSpectrum("every eigenvalue was truncated")
    W = dec.B @ dec.V[:, dec.kept]
    M = (W / dec.eigenvalues[dec.kept]) @ W.T
    return (M + M.T) / 2.0


def rkhs_sqrt_factor(dec):
    """Factor ``S = V sqrt(diag(lams))`` on the retained modes.

    Satisfies ``S' B_rkhs S = I``; it plays the role of the inverse square
    root of the norm matrix in the minimum-norm reformulation.
    """
    if dec.rank == 0:
        raise AllZeroSpectrum("every eigenvalue was truncated")
    return dec.V[:, dec.kept] * np.sqrt(dec.eigenvalues[dec.kept])


def _spectral_filter(eigs, betas, kind, lam):
    """Filtered spectral coefficients of the regularized solution."""
    if kind is RegularizerKind.RKHS:
        return betas / (eigs + lam / eigs)
    return betas / (eigs + lam)


def solve_regularized(A, b, dec, kind, lam):
    """Regularized estimate for one penalty kind and strength ``lam``.

    The plain-coefficient penalty uses the (truncated) eigendecomposition
    of ``A`` itself; the weighted and data-adaptive penalties reuse the
    generalized decomposition.  All three live entirely inside the
    retained spectral modes.

    Raises
    ------
    NegativeLambda
        If ``lam < 0``.
    """
    if lam < 0:
        raise NegativeLambda(f"regularization strength must be >= 0, got {lam}")
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if b.shape != (A.shape[0],):
        raise DimensionMismatch(f"right-hand side {b.shape} for matrix {A.shape}")
    kind = RegularizerKind(kind)
    if kind is RegularizerKind.L2_COEFF:
        sigmas, U = np.linalg.eigh(A)
        sigmas, U = sigmas[::-1], U[:, ::-1]
        top = max(sigmas[0], 0.0)
        keep = sigmas > dec.rank_tol * top if top > 0 else np.zeros_like(sigmas, bool)
        coeffs = (U[:, keep].T @ b) / (sigmas[keep] + lam)
        return U[:, keep] @ coeffs
    eigs = dec.eigenvalues[dec.kept]
    Vk = dec.V[:, dec.kept]
    coeffs = _spectral_filter(eigs, Vk.T @ b, kind, lam)
    return Vk @ coeffs


def solve_regularized_minnorm(A, b, sqrt_factor, lam):
    """Data-adaptive solve reformulated to avoid explicit norm-matrix
    inversion.

    With ``S`` from :func:`rkhs_sqrt_factor`, solves the minimum-norm
    least-squares system ``(S' A S + lam I) y = S' b`` and maps back with
    ``c = S y``.  Cross-checks the spectral path of
    :func:`solve_regularized`.

    Raises
    ------
    NegativeLambda
        If ``lam <= 0`` (the reformulated system needs a strictly positive
        shift).
    """
    if lam <= 0:
        raise NegativeLambda(f"minimum-norm path needs lam > 0, got {lam}")
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    S = np.asarray(sqrt_factor, dtype=float)
    M = S.T @ A @ S + lam * np.eye(S.shape[1])
    y, *_ = sla.lstsq(M, S.T @ b)
    return S @ y


def pseudo_inverse_apply(A, b, rank_tol=RANK_TOL):
    """``A^+ b`` through the truncated eigendecomposition of symmetric A."""
    sigmas, U = np.linalg.eigh(np.asarray(A, dtype=float))
    top = np.max(np.abs(sigmas)) if sigmas.size else 0.0
    if top <= 0:
        return np.zeros_like(np.asarray(b, dtype=float))
    keep = sigmas > rank_tol * top
    return U[:, keep] @ ((U[:, keep].T @ b) / sigmas[keep])


def loss_value(A, b, c):
    """Shifted quadratic loss ``c'Ac - 2c'b + b'A^+ b``.

    The constant term replaces the raw data norm so the minimum over the
    identifiable subspace sits exactly at zero.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if b.shape != (A.shape[0],) or c.shape != b.shape:
        raise DimensionMismatch(
            f"loss arguments disagree: A {A.shape}, b {b.shape}, c {c.shape}"
        )
    return float(c @ A @ c - 2.0 * c @ b + b @ pseudo_inverse_apply(A, b))


@dataclass(frozen=True)
class EstimatorResult:
    """One fitted kernel: coefficients, chosen strength, and diagnostics."""

    coefficients: np.ndarray = field(repr=False)
    lam: float
    loss: float
    reg_norm: float
    regularizer: RegularizerKind
    space: object = None

    def write(self, path):
        """Dump the fitted coefficients and scalars to delimited text."""
        lines = [
            "# dartr estimator v1",
            f"# regularizer={self.regularizer.value}",
            f"# lambda={self.lam!r}",
            f"# loss={self.loss!r}",
            f"# reg_norm={self.reg_norm!r}",
            "coefficient",
        ]
        lines += [repr(float(v)) for v in self.coefficients]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
