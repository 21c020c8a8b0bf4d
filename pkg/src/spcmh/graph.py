"""Affinity / repulsion graphs and their Laplacians.

Data matrices follow the column convention: a ``D x N`` matrix holds one
sample per column.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import (
    check_count,
    check_matrix,
    check_nonneg,
    check_paired,
    check_positive,
    check_symmetric,
)
from .exceptions import DimensionError, ParameterError

__all__ = [
    "GraphMatrices",
    "pairwise_sq_dists",
    "knn_mask",
    "build_affinity",
    "build_repulsion",
    "laplacian",
    "repulsion_laplacian",
    "combined_laplacian",
    "build_graphs",
]


@dataclass(frozen=True)
class GraphMatrices:
    """Graphs built once from the training data.

    Attributes
    ----------
    W_a : ndarray (N, N)
        kNN-sparsified affinity weights.
    W_r : ndarray (N, N)
        Dense repulsion weights (weighted squared distances).
    L_a : ndarray (N, N)
        Laplacian of ``W_a``.
    k : int
    bandwidth : float
    """

    W_a: np.ndarray
    W_r: np.ndarray
    L_a: np.ndarray
    k: int
    bandwidth: float

    @property
    def D_a(self):
        return np.diag(self.L_a + self.W_a)

    @property
    def n_samples(self):
        return self.W_a.shape[0]


def pairwise_sq_dists(M):
    """Squared Euclidean distances between the columns of ``M``.

    Returns a symmetric ``N x N`` matrix with an exact zero diagonal.
    """
    M = np.asarray(M, dtype=np.float64)
    sq = np.einsum("ij,ij->j", M, M)
    G = M.T @ M
    D = sq[:, None] + sq[None, :] - 2.0 * G
    np.maximum(D, 0.0, out=D)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


def knn_mask(dist, k):
    """Symmetric (OR) boolean kNN adjacency from a distance matrix.

    Self-pairs are excluded; among equal distances the lower column index
    is preferred.
    """
    N = dist.shape[0]
    if k >= N:
        raise ParameterError(f"k={k} must be smaller than the number of samples N={N}")
    d = np.array(dist, dtype=np.float64, copy=True)
    np.fill_diagonal(d, np.inf)
    nbrs = np.argsort(d, axis=1, kind="stable")[:, :k]
    mask = np.zeros((N, N), dtype=bool)
    mask[np.arange(N)[:, None], nbrs] = True
    mask |= mask.T
    np.fill_diagonal(mask, False)
    return mask


def _check_weights(lambda_x, lambda_y):
    return check_nonneg(lambda_x, "lambda_x"), check_nonneg(lambda_y, "lambda_y")


def build_affinity(X, Y, lambda_x, lambda_y, k=5, bandwidth=1.0, *, dists=None):
    """Local-affinity weights ``W_a``.

    Entry ``(i, j)`` is ``lambda_x exp(-|x_i - x_j|^2 / bw) + lambda_y exp(-|y_i - y_j|^2 / bw)``
    when ``j`` is one of the ``k`` nearest neighbours of ``i`` or vice
    versa, and zero otherwise. Neighbours are ranked by the weighted squared
    distance ``lambda_x |dx|^2 + lambda_y |dy|^2`` so both modalities vote.

    ``dists`` may carry precomputed ``(Dx, Dy)`` squared-distance matrices.
    """
    X, Y = check_paired(X, Y)
    lambda_x, lambda_y = _check_weights(lambda_x, lambda_y)
    k = check_count(k, "k")
    bandwidth = check_positive(bandwidth, "bandwidth")
    N = X.shape[1]
    if k >= N:
        raise ParameterError(f"k={k} must be smaller than the number of samples N={N}")

    Dx, Dy = dists if dists is not None else (pairwise_sq_dists(X), pairwise_sq_dists(Y))
    mask = knn_mask(lambda_x * Dx + lambda_y * Dy, k)
    W = lambda_x * np.exp(-Dx / bandwidth) + lambda_y * np.exp(-Dy / bandwidth)
    W = np.where(mask, W, 0.0)
    return 0.5 * (W + W.T)


def build_repulsion(X, Y, lambda_x, lambda_y, *, dists=None):
    """Dense repulsion weights ``lambda_x |x_i - x_j|^2 + lambda_y |y_i - y_j|^2``."""
    X, Y = check_paired(X, Y)
    lambda_x, lambda_y = _check_weights(lambda_x, lambda_y)
    Dx, Dy = dists if dists is not None else (pairwise_sq_dists(X), pairwise_sq_dists(Y))
    W = lambda_x * Dx + lambda_y * Dy
    np.fill_diagonal(W, 0.0)
    return W


def laplacian(W):
    """Graph Laplacian ``diag(W 1) - W`` of a symmetric weight matrix."""
    W = check_symmetric(W, "W")
    # diagonal weights cancel between degree and adjacency
    W = W - np.diag(np.diag(W))
    L = -W
    L[np.diag_indices_from(L)] = W.sum(axis=1)
    return L


def repulsion_laplacian(W_r, V_prev):
    """Laplacian of the latent-space repulsion weights ``W_r * exp(-|v_i - v_j|^2)``.

    ``V_prev`` is the ``H x N`` latent matrix from the previous iteration.
    """
    W_r = check_matrix(W_r, "W_r")
    V_prev = check_matrix(V_prev, "V_prev")
    if V_prev.shape[1] != W_r.shape[0] or W_r.shape[0] != W_r.shape[1]:
        raise DimensionError(f"V_prev has {V_prev.shape[1]} columns but W_r is {W_r.shape}")
    return laplacian(W_r * np.exp(-pairwise_sq_dists(V_prev)))


def combined_laplacian(L_a, L_r, alpha, beta):
    """``L_a - (beta / alpha) L_r``."""
    if not alpha > 0:
        raise ParameterError(f"alpha must be positive to form the combined Laplacian, got {alpha!r}")
    L_a = np.asarray(L_a, dtype=np.float64)
    L_r = np.asarray(L_r, dtype=np.float64)
    if L_a.shape != L_r.shape:
        raise DimensionError(f"L_a {L_a.shape} and L_r {L_r.shape} differ in shape")
    return L_a - (beta / alpha) * L_r


def build_graphs(X, Y, lambda_x, lambda_y, k=5, bandwidth=1.0):
    """Build ``W_a``, ``W_r`` and ``L_a`` sharing one pass of distance computations."""
    X, Y = check_paired(X, Y)
    dists = (pairwise_sq_dists(X), pairwise_sq_dists(Y))
    W_a = build_affinity(X, Y, lambda_x, lambda_y, k, bandwidth, dists=dists)
    W_r = build_repulsion(X, Y, lambda_x, lambda_y, dists=dists)
    return GraphMatrices(W_a=W_a, W_r=W_r, L_a=laplacian(W_a), k=int(k), bandwidth=float(bandwidth))
