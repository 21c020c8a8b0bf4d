"""scikit-learn compatible front end.

Follows the scikit-learn data layout (rows are samples); the functional API
in :mod:`spcmh.model` works on the transposed, column-per-sample layout.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataio import PairedDataset, normalize_center
from .exceptions import DimensionError, ParameterError
from .hashing import HashCodeMatrix, encode
from .model import Hyperparams, train

__all__ = ["CrossModalHasher"]


class CrossModalHasher(TransformerMixin, BaseEstimator):
    """Unsupervised cross-modal hashing with structure-preserving collective
    matrix factorization.

    Learns one linear hash function per modality so that paired samples
    ``(X[i], Y[i])`` map to a shared binary code, while samples that are
    close (far) in the input spaces stay close (far) in the code space.

    Parameters
    ----------
    n_bits : int, default=32
        Code length.
    lambda_x, lambda_y : float, default=0.5
        Factorization weights of the two modalities.
    alpha : float, default=100
        Local-affinity weight.
    beta : float, default=1
        Distant-repulsion weight.
    mu : float, default=100
        Weight tying the latent codes to the linear projections.
    gamma : float, default=0.01
        Ridge penalty on every matrix variable.
    n_neighbors : int, default=5
        Neighbours per sample in the affinity graph.
    bandwidth : float, default=1.0
        Scale of the squared distances inside the affinity kernel.
    max_iter : int, default=200
    tol : float, default=1e-4
        Relative objective change that stops the iteration.
    random_state : int, default=0
        Seed for the random initialization.

    Attributes
    ----------
    model_ : LatentModel
    report_ : TrainReport
    n_iter_ : int
    n_features_in_ : int
        Dimension of the ``X`` modality.
    n_features_y_in_ : int
        Dimension of the ``Y`` modality.

    Examples
    --------
    >>> from spcmh import CrossModalHasher, synth_clusters
    >>> data = synth_clusters(n_clusters=3, per_cluster=10, seed=0)
    >>> hasher = CrossModalHasher(n_bits=8, max_iter=5).fit(data.X.T, data.Y.T)
    >>> hasher.transform(data.X.T).shape
    (30, 8)
    """

    def __init__(
        self,
        n_bits=32,
        lambda_x=0.5,
        lambda_y=0.5,
        alpha=100.0,
        beta=1.0,
        mu=100.0,
        gamma=0.01,
        n_neighbors=5,
        bandwidth=1.0,
        max_iter=200,
        tol=1e-4,
        random_state=0,
    ):
        self.n_bits = n_bits
        self.lambda_x = lambda_x
        self.lambda_y = lambda_y
        self.alpha = alpha
        self.beta = beta
        self.mu = mu
        self.gamma = gamma
        self.n_neighbors = n_neighbors
        self.bandwidth = bandwidth
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def hyperparams(self):
        return Hyperparams(
            lambda_x=self.lambda_x,
            lambda_y=self.lambda_y,
            alpha=self.alpha,
            beta=self.beta,
            mu=self.mu,
            gamma=self.gamma,
            k=self.n_neighbors,
            bandwidth=self.bandwidth,
            H=self.n_bits,
            max_iters=self.max_iter,
            rel_tol=self.tol,
            seed=self.random_state,
        )

    def fit(self, X, Y):
        """Fit on paired samples.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features_x)
        Y : array-like of shape (n_samples, n_features_y)
            ``Y[i]`` is the counterpart of ``X[i]``.
        """
        if Y is None:
            raise ParameterError("CrossModalHasher.fit needs the paired modality Y")
        hp = self.hyperparams()
        X = check_array(X, dtype=np.float64)
        Y = check_array(Y, dtype=np.float64)
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} samples but Y has {Y.shape[0]}")
        data, stats = normalize_center(PairedDataset(X=X.T, Y=Y.T))
        self.model_, self.report_ = train(data.X, data.Y, hp, mean_x=stats.mean_x, mean_y=stats.mean_y)
        self.n_iter_ = self.report_.iterations_run
        self.n_features_in_ = X.shape[1]
        self.n_features_y_in_ = Y.shape[1]
        return self

    def encode(self, X, modality="x"):
        """Hash the rows of ``X`` into a :class:`HashCodeMatrix`."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if modality == "x":
            P, mean = self.model_.P_x, self.model_.mean_x
        elif modality == "y":
            P, mean = self.model_.P_y, self.model_.mean_y
        else:
            raise ParameterError(f"modality must be 'x' or 'y', got {modality!r}")
        return encode(P, mean, X.T, self.model_.norm_mode)

    def transform(self, X, modality="x"):
        """0/1 code matrix of shape ``(n_samples, n_bits)``."""
        return self.encode(X, modality).to_bits()

    def latent_codes(self):
        """Binary codes of the training latent matrix, ``(n_train, n_bits)``."""
        check_is_fitted(self, "model_")
        return HashCodeMatrix.from_bits((self.model_.V >= 0).T.astype(np.uint8)).to_bits()
