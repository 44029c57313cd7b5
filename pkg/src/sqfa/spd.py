"""Symmetric positive-definite matrices and the affine-invariant distance.

The affine-invariant (geodesic) distance between SPD matrices A and B is

    d(A, B) = sqrt(sum_k log^2(lambda_k))

where lambda_k are the generalized eigenvalues of the pair (A, B). It is
invariant under congruence A -> G^T A G, B -> G^T B G for any invertible G,
symmetric in its arguments, and satisfies the triangle inequality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    AsymmetricMatrix,
    DegenerateDistance,
    DimensionMismatch,
    NotPositiveDefinite,
)

SYMMETRY_RTOL = 1e-12
DEGENERATE_DISTANCE_TOL = 1e-12


def symmetrize(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.T)


class SpdMatrix:
    """Symmetric positive-definite matrix with verified definiteness.

    Construction silently repairs asymmetry within roundoff
    (|a_ij - a_ji| <= 1e-12 * max(1, |a_ij|)) and rejects anything worse.
    Definiteness is checked by Cholesky factorization with no epsilon
    slack; callers needing slack must add an explicit ridge first.

    Instances are immutable and safe to share across threads.
    """

    __slots__ = ("mat",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        gap = np.abs(a - a.T)
        tol = SYMMETRY_RTOL * np.maximum(1.0, np.abs(a))
        if np.any(gap > tol):
            i, j = np.unravel_index(np.argmax(gap - tol), a.shape)
            raise AsymmetricMatrix(
                f"matrix asymmetric beyond tolerance at ({i},{j}): "
                f"{a[i, j]!r} vs {a[j, i]!r}"
            )
        a = symmetrize(a)
        try:
            np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(
                "matrix is not positive definite (Cholesky failed)"
            ) from None
        a.setflags(write=False)
        self.mat = a

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def __repr__(self) -> str:
        return f"SpdMatrix(dim={self.dim})"


def as_spd_array(x) -> np.ndarray:
    """Return the validated ndarray behind ``x`` (SpdMatrix or array-like)."""
    if isinstance(x, SpdMatrix):
        return x.mat
    return SpdMatrix(x).mat


@dataclass(frozen=True)
class GeneralizedSpectrum:
    """Solution of A v = lambda B v for an SPD pair.

    eigenvalues are ascending and strictly positive; eigenvector columns
    are B-orthonormal (v_k^T B v_k = 1).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def generalized_eigen(a, b) -> GeneralizedSpectrum:
    """Generalized eigendecomposition of the SPD pair (a, b).

    Solved by Cholesky reduction of b (LAPACK sygvd), which preserves
    symmetry rather than forming b^{-1} a.

    Raises
    ------
    DimensionMismatch
        If the operands have different dimensions.
    NotPositiveDefinite
        If either operand fails its definiteness check.
    """
    amat = as_spd_array(a)
    bmat = as_spd_array(b)
    if amat.shape != bmat.shape:
        raise DimensionMismatch(f"operand shapes differ: {amat.shape} vs {bmat.shape}")
    try:
        w, v = scipy.linalg.eigh(amat, bmat)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - inputs validated
        raise NotPositiveDefinite(str(exc)) from None
    if w[0] <= 0.0:
        raise NotPositiveDefinite(
            f"generalized eigenvalues not all positive (min {w[0]!r})"
        )
    return GeneralizedSpectrum(eigenvalues=w, eigenvectors=v)


def affine_invariant_distance(a, b) -> float:
    """Affine-invariant distance sqrt(sum_k log^2 lambda_k) between SPD a, b."""
    amat = as_spd_array(a)
    bmat = as_spd_array(b)
    if amat.shape == bmat.shape and np.array_equal(amat, bmat):
        return 0.0
    spec = generalized_eigen(amat, bmat)
    return float(np.sqrt(np.sum(np.log(spec.eigenvalues) ** 2)))


def affine_invariant_gradient(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the affine-invariant distance with respect to both operands.

    With lambda_k, v_k the generalized eigenpairs (v_k B-orthonormal) and
    d the distance,

        dA = (1/d) * sum_k (log lambda_k / lambda_k) v_k v_k^T
        dB = -(1/d) * sum_k (log lambda_k) v_k v_k^T

    The per-eigenvalue formula is safe at eigenvalue multiplicities because
    only symmetric functions of the spectrum are differentiated; any
    B-orthonormal eigenbasis yields the same sums.

    Raises
    ------
    DegenerateDistance
        If d <= 1e-12; the sqrt is not differentiable at coincident
        operands and the caller must zero this pair's contribution.
    """
    _, grad_a, grad_b = affine_invariant_distance_and_gradient(a, b)
    return grad_a, grad_b


def affine_invariant_distance_and_gradient(a, b):
    """Fused distance + gradient evaluation sharing one eigendecomposition.

    Returns (distance, dA, dB); raises DegenerateDistance like
    affine_invariant_gradient.
    """
    spec = generalized_eigen(a, b)
    logs = np.log(spec.eigenvalues)
    d = float(np.sqrt(np.sum(logs**2)))
    if d <= DEGENERATE_DISTANCE_TOL:
        raise DegenerateDistance(f"distance {d!r} too small to differentiate")
    v = spec.eigenvectors
    grad_a = (v * (logs / spec.eigenvalues / d)) @ v.T
    grad_b = (v * (-logs / d)) @ v.T
    return d, symmetrize(grad_a), symmetrize(grad_b)
