"""Small dense complex matrices.

Matrices are plain ``numpy`` arrays of dtype ``complex128``; this module adds
the few operations the solver needs with the conventions it relies on:
inversion with a singularity guard, eigendecomposition with a fixed
normalization and column order, and a logarithm whose branch is picked
nearest to a reference value.
"""

from dataclasses import dataclass
import itertools

import numpy as np

from .errors import DegenerateEigenvalues, LogOfZero, SingularMatrix

__all__ = [
    "EigenPair",
    "as_mat",
    "mat_inv",
    "eig",
    "diag_log_near",
    "inf_norm",
    "commutator",
    "best_permutation",
]

SINGULAR_TOL = 1e-12
DEGENERACY_TOL = 1e-9

TWO_PI_I = 2j * np.pi


def as_mat(m):
    """Return ``m`` as a square complex128 array, rejecting non-finite entries."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("matrix has non-finite entries")
    return a


def inf_norm(m):
    """Maximum absolute row sum."""
    return float(np.max(np.sum(np.abs(m), axis=-1)))


def commutator(a, b):
    return a @ b - b @ a


def mat_inv(m, tol=SINGULAR_TOL):
    """Inverse of a square complex matrix.

    Raises :class:`SingularMatrix` when ``|det m|`` is below ``tol`` times
    the N-th power of the largest entry magnitude.
    """
    m = as_mat(m)
    n = m.shape[0]
    scale = float(np.max(np.abs(m)))
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    if n == 2:
        a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
        det = a * d - b * c
        if abs(det) <= tol * scale**2:
            raise SingularMatrix(f"|det| = {abs(det):.3e} below threshold")
        return np.array([[d, -b], [-c, a]]) / det
    det = np.linalg.det(m / scale)
    if abs(det) <= tol:
        raise SingularMatrix(f"|det| = {abs(det) * scale**n:.3e} below threshold")
    return np.linalg.inv(m)


@dataclass(frozen=True)
class EigenPair:
    """Eigendecomposition ``M = vectors @ diag(values) @ inv(vectors)``.

    Columns of ``vectors`` are ordered by increasing real part of the
    eigenvalue (ties broken by imaginary part).
    """

    vectors: np.ndarray
    values: np.ndarray

    def reconstruct(self):
        return self.vectors @ np.diag(self.values) @ mat_inv(self.vectors)


def _check_gap(values, tol):
    scale = max(float(np.max(np.abs(values))), 1e-300)
    for i, j in itertools.combinations(range(len(values)), 2):
        if abs(values[i] - values[j]) <= tol * scale:
            raise DegenerateEigenvalues(
                f"eigenvalues {values[i]:.6g} and {values[j]:.6g} coincide"
            )


def _eig2(m):
    a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    half_tr = 0.5 * (a + d)
    root = np.sqrt(0.25 * (a - d) ** 2 + b * c)
    values = np.array([half_tr + root, half_tr - root])
    cols = []
    for lam in values:
        # two null-vector candidates of (m - lam I); keep the better scaled one
        v1 = np.array([b, lam - a])
        v2 = np.array([lam - d, c])
        v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
        if not np.any(v):
            v = np.array([1.0 + 0j, 0j]) if abs(c) <= abs(b) else np.array([0j, 1.0 + 0j])
        cols.append(v)
    return values, np.column_stack(cols)


def eig(m, tol=DEGENERACY_TOL, normalize="first"):
    """Eigendecomposition with distinct eigenvalues.

    Parameters
    ----------
    m : array_like
        Square complex matrix.
    tol : float
        Relative eigenvalue gap below which :class:`DegenerateEigenvalues`
        is raised.
    normalize : {"first", "unit"}
        ``"first"`` scales each eigenvector so its first component is 1
        (falling back to unit 2-norm for a column whose first component
        vanishes); ``"unit"`` always uses unit 2-norm, which is better
        conditioned for internal use.
    """
    m = as_mat(m)
    if m.shape[0] == 2:
        values, vectors = _eig2(m)
    else:
        values, vectors = np.linalg.eig(m)
    _check_gap(values, tol)
    order = np.lexsort((values.imag, values.real))
    values = values[order]
    vectors = vectors[:, order]
    vectors = vectors / np.linalg.norm(vectors, axis=0)
    if normalize == "first":
        first = vectors[0, :]
        ok = np.abs(first) > 1e-8
        vectors = np.where(ok, vectors / np.where(ok, first, 1.0), vectors)
    elif normalize != "unit":
        raise ValueError(f"unknown normalization {normalize!r}")
    return EigenPair(vectors=vectors, values=values)


def diag_log_near(values, reference):
    """Logarithms of ``values`` on the branch closest to ``reference``.

    ``result[i] = log(values[i]) + 2*pi*i*n_i`` with the integer ``n_i``
    minimizing ``|result[i] - reference[i]|``.
    """
    values = np.asarray(values, dtype=np.complex128)
    reference = np.asarray(reference, dtype=np.complex128)
    if np.any(values == 0):
        raise LogOfZero("logarithm of zero eigenvalue")
    base = np.log(values)
    n = np.round((reference.imag - base.imag) / (2 * np.pi))
    return base + TWO_PI_I * n


def best_permutation(cost):
    """Permutation ``p`` minimizing ``sum(cost[i, p[i]])`` by enumeration.

    Returns ``(p, best, runner_up)`` where ``runner_up`` is the cost of the
    second best permutation (``inf`` for a 1x1 problem).
    """
    cost = np.asarray(cost)
    n = cost.shape[0]
    scored = sorted(
        (float(sum(cost[i, p[i]] for i in range(n))), p)
        for p in itertools.permutations(range(n))
    )
    runner_up = scored[1][0] if len(scored) > 1 else np.inf
    return np.array(scored[0][1]), scored[0][0], runner_up
