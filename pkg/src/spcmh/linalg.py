"""Dense linear-algebra kernels used by the alternating optimizer.

The Sylvester solver works by diagonalizing both symmetric coefficient
matrices: with ``A = P diag(p) P^T`` and ``B = Q diag(q) Q^T`` the equation
``AV + VB = C`` decouples entrywise in the rotated basis.
"""

from typing import NamedTuple

import numpy as np
import scipy.linalg

from ._validation import check_matrix, check_square, check_symmetric
from .exceptions import DimensionError, NonUniqueSolutionError, SingularityError

__all__ = [
    "SymEig",
    "sym_eig",
    "jacobi_eig",
    "solve_spd",
    "solve_sylvester",
    "sylvester_residual",
]


class SymEig(NamedTuple):
    """Eigendecomposition ``M = Q diag(eigenvalues) Q^T`` with ascending eigenvalues."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        Q, lam = self.eigenvectors, self.eigenvalues
        return (Q * lam) @ Q.T


def jacobi_eig(M, tol=1e-14, max_sweeps=64):
    """Cyclic Jacobi eigenvalue algorithm for a symmetric matrix.

    Sweeps over all off-diagonal pairs ``(p, q)`` applying the rotation that
    annihilates ``M[p, q]``, until the off-diagonal Frobenius norm drops below
    ``tol * ||M||_F``.

    Parameters
    ----------
    M : ndarray of shape (n, n)
        Symmetric input. Not modified.
    tol : float
        Relative off-diagonal stopping threshold.
    max_sweeps : int
        Hard cap on the number of sweeps.

    Returns
    -------
    SymEig
        Eigenvalues in ascending order and matching orthonormal eigenvectors.
    """
    A = check_symmetric(M, "M").copy()
    n = A.shape[0]
    Q = np.eye(n)
    scale = np.linalg.norm(A)
    if n == 1 or scale == 0.0:
        return SymEig(np.diag(A).copy(), Q)

    threshold = tol * scale
    for _ in range(max_sweeps):
        # direct norm; |A|^2 - |diag|^2 cancels to zero while off is still ~1e-8
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                # smaller-angle tangent, written so a tiny apq cannot overflow
                diff = A[q, q] - A[p, p]
                if diff == 0.0:
                    t = np.copysign(1.0, apq)
                else:
                    t = np.copysign(1.0, diff) * 2.0 * apq / (abs(diff) + np.hypot(diff, 2.0 * apq))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0

                qp = Q[:, p].copy()
                qq = Q[:, q].copy()
                Q[:, p] = c * qp - s * qq
                Q[:, q] = s * qp + c * qq

    lam = np.diag(A).copy()
    order = np.argsort(lam, kind="stable")
    return SymEig(lam[order], Q[:, order])


def sym_eig(M, method="lapack"):
    """Full eigendecomposition of a symmetric matrix.

    ``method="lapack"`` uses the divide-and-conquer LAPACK driver and is the
    one used during training; ``method="jacobi"`` runs :func:`jacobi_eig`.
    """
    M = check_symmetric(M, "M")
    if method == "lapack":
        lam, Q = np.linalg.eigh(M)
        return SymEig(lam, Q)
    if method == "jacobi":
        return jacobi_eig(M)
    raise ValueError(f"unknown method {method!r}")


def solve_spd(M, RHS):
    """Solve ``M S = RHS`` for symmetric positive-definite ``M`` via Cholesky."""
    M = check_symmetric(M, "M")
    RHS = check_matrix(RHS, "RHS") if np.ndim(RHS) == 2 else check_matrix(np.reshape(RHS, (-1, 1)), "RHS")
    if RHS.shape[0] != M.shape[0]:
        raise DimensionError(f"RHS has {RHS.shape[0]} rows, expected {M.shape[0]}")
    try:
        factor = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"matrix is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve(factor, RHS, check_finite=False)


def solve_sylvester(A, B, C, *, eig_a=None, eig_b=None, eps=None):
    """Solve ``A V + V B = C`` for symmetric ``A`` (h x h) and ``B`` (n x n).

    Parameters
    ----------
    A : ndarray of shape (h, h)
        Symmetric (in practice positive semi-definite) left coefficient.
    B : ndarray of shape (n, n)
        Symmetric right coefficient.
    C : ndarray of shape (h, n)
        Right-hand side.
    eig_a, eig_b : SymEig, optional
        Precomputed decompositions of ``A`` and ``B``; skips the
        corresponding eigensolve.
    eps : float, optional
        Collapse threshold on ``|p_i + q_j|``. Defaults to
        ``1e-10 * max(max|p|, max|q|, 1)``.

    Returns
    -------
    V : ndarray of shape (h, n)

    Raises
    ------
    NonUniqueSolutionError
        If some ``|p_i + q_j| <= eps``.
    """
    C = check_matrix(C, "C")
    h, n = C.shape
    if eig_a is None:
        A = check_square(A, "A")
        if A.shape[0] != h:
            raise DimensionError(f"A is {A.shape}, expected ({h}, {h}) to match C")
        eig_a = sym_eig(A)
    if eig_b is None:
        B = check_square(B, "B")
        if B.shape[0] != n:
            raise DimensionError(f"B is {B.shape}, expected ({n}, {n}) to match C")
        eig_b = sym_eig(B)
    p, P = eig_a
    q, Q = eig_b
    if p.shape[0] != h or q.shape[0] != n:
        raise DimensionError("eigendecompositions do not match the shape of C")

    denom = p[:, None] + q[None, :]
    if eps is None:
        eps = 1e-10 * max(np.max(np.abs(p)), np.max(np.abs(q)), 1.0)
    bad = np.abs(denom) <= eps
    if np.any(bad):
        i, j = (int(v) for v in np.argwhere(bad)[0])
        raise NonUniqueSolutionError(i, j, float(p[i]), float(q[j]))

    C_rot = P.T @ C @ Q
    return P @ (C_rot / denom) @ Q.T


def sylvester_residual(A, B, C, V):
    """Frobenius norm of ``A V + V B - C``."""
    return float(np.linalg.norm(A @ V + V @ B - C))
