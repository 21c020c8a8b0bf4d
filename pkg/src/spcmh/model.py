"""Training state and the alternating closed-form optimizer.

The loss over latent codes ``V`` (H x N), factor loadings ``U_x``, ``U_y``
and projections ``P_x``, ``P_y`` is::

    lambda_x |X - U_x V|^2 + lambda_y |Y - U_y V|^2
    + alpha/2 sum_ij W^a_ij |v_i - v_j|^2
    + beta/2  sum_ij W^r_ij exp(-|v_i - v_j|^2)
    + mu |V - P_x X|^2 + mu |V - P_y Y|^2
    + gamma (|V|^2 + |U_x|^2 + |U_y|^2 + |P_x|^2 + |P_y|^2)

Each block has a closed-form minimizer given the others. The ``V`` block
linearizes the repulsion term around the previous iterate and reduces to a
Sylvester equation.
"""

import dataclasses
import io
import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_count, check_matrix, check_nonneg, check_paired, check_positive
from .exceptions import (
    ConfigurationError,
    DimensionError,
    DivergenceError,
    FormatError,
    ParameterError,
)
from .graph import GraphMatrices, build_graphs, pairwise_sq_dists, repulsion_laplacian
from .linalg import solve_spd, solve_sylvester, sym_eig

__all__ = [
    "Hyperparams",
    "LatentModel",
    "TrainReport",
    "NORM_MODE",
    "initialize",
    "objective",
    "objective_terms",
    "surrogate_objective",
    "sylvester_system",
    "update_Px",
    "update_Py",
    "update_Ux",
    "update_Uy",
    "update_V",
    "train",
    "save_model",
    "load_model",
]

logger = logging.getLogger(__name__)

NORM_MODE = "l2-then-center"

MODEL_MAGIC = b"SPCM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    """Loss weights and optimizer controls.

    Defaults reproduce the published parameter settings
    (``lambda_x = lambda_y = 0.5``, ``alpha = 100``, ``beta = 1``,
    ``mu = 100``, ``gamma = 0.01``, ``k = 5``).
    """

    lambda_x: float = 0.5
    lambda_y: float = 0.5
    alpha: float = 100.0
    beta: float = 1.0
    mu: float = 100.0
    gamma: float = 0.01
    k: int = 5
    bandwidth: float = 1.0
    H: int = 32
    max_iters: int = 200
    rel_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        for name in ("lambda_x", "lambda_y", "alpha", "beta", "mu", "gamma"):
            object.__setattr__(self, name, check_nonneg(getattr(self, name), name))
        if self.lambda_x + self.lambda_y <= 0:
            raise ParameterError("lambda_x + lambda_y must be positive")
        check_positive(self.mu, "mu")
        check_positive(self.bandwidth, "bandwidth")
        check_positive(self.rel_tol, "rel_tol")
        for name in ("k", "H", "max_iters"):
            object.__setattr__(self, name, check_count(getattr(self, name), name))
        object.__setattr__(self, "seed", check_count(self.seed, "seed", minimum=0))
        object.__setattr__(self, "bandwidth", float(self.bandwidth))
        object.__setattr__(self, "rel_tol", float(self.rel_tol))

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ParameterError(f"unknown hyperparameter(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class LatentModel:
    V: np.ndarray
    U_x: np.ndarray
    U_y: np.ndarray
    P_x: np.ndarray
    P_y: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    norm_mode: str = NORM_MODE

    def __post_init__(self):
        H, N = self.V.shape
        D_x, D_y = self.mean_x.shape[0], self.mean_y.shape[0]
        expected = {
            "U_x": (D_x, H),
            "U_y": (D_y, H),
            "P_x": (H, D_x),
            "P_y": (H, D_y),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in ("V", "U_x", "U_y", "P_x", "P_y", "mean_x", "mean_y"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ParameterError(f"{name} contains non-finite values")
        if self.norm_mode != NORM_MODE:
            raise ParameterError(f"unsupported norm_mode {self.norm_mode!r}")

    @property
    def H(self):
        return self.V.shape[0]

    @property
    def N(self):
        return self.V.shape[1]

    @property
    def D_x(self):
        return self.P_x.shape[1]

    @property
    def D_y(self):
        return self.P_y.shape[1]

    def save(self, path):
        save_model(self, path)


@dataclass
class TrainReport:
    objective_trace: list
    iterations_run: int
    converged: bool
    final_objective: float
    min_eig_B: list = field(default_factory=list)

    def to_dict(self):
        return {
            "objective_trace": [float(v) for v in self.objective_trace],
            "iterations_run": int(self.iterations_run),
            "converged": bool(self.converged),
            "final_objective": float(self.final_objective),
            "min_eig_B": [float(v) for v in self.min_eig_B],
        }


def initialize(hp, N, D_x, D_y):
    """Seeded uniform(-0.5, 0.5) initialization of ``V, U_x, U_y, P_x, P_y``."""
    rng = np.random.default_rng(hp.seed)
    H = hp.H
    return {
        "V": rng.uniform(-0.5, 0.5, size=(H, N)),
        "U_x": rng.uniform(-0.5, 0.5, size=(D_x, H)),
        "U_y": rng.uniform(-0.5, 0.5, size=(D_y, H)),
        "P_x": rng.uniform(-0.5, 0.5, size=(H, D_x)),
        "P_y": rng.uniform(-0.5, 0.5, size=(H, D_y)),
    }


def _params(model):
    if isinstance(model, LatentModel):
        return model.V, model.U_x, model.U_y, model.P_x, model.P_y
    return model["V"], model["U_x"], model["U_y"], model["P_x"], model["P_y"]


def objective_terms(X, Y, model, graphs, hp):
    """Individual loss terms as a dict; ``model`` is a LatentModel or a parameter dict."""
    V, U_x, U_y, P_x, P_y = _params(model)
    N = V.shape[1]
    if X.shape[1] != N or Y.shape[1] != N or graphs.W_a.shape != (N, N):
        raise DimensionError("data, latent matrix and graphs disagree on the number of samples")
    if U_x.shape[0] != X.shape[0] or U_y.shape[0] != Y.shape[0]:
        raise DimensionError("factor loadings do not match the feature dimensions")
    Dv = pairwise_sq_dists(V)
    return {
        "factor_x": hp.lambda_x * np.sum((X - U_x @ V) ** 2),
        "factor_y": hp.lambda_y * np.sum((Y - U_y @ V) ** 2),
        "affinity": 0.5 * hp.alpha * np.sum(graphs.W_a * Dv),
        "repulsion": 0.5 * hp.beta * np.sum(graphs.W_r * np.exp(-Dv)),
        "projection_x": hp.mu * np.sum((V - P_x @ X) ** 2),
        "projection_y": hp.mu * np.sum((V - P_y @ Y) ** 2),
        "regularizer": hp.gamma * sum(np.sum(M * M) for M in (V, U_x, U_y, P_x, P_y)),
    }


def objective(X, Y, model, graphs, hp):
    """Total loss with the exact exponential repulsion term."""
    return float(sum(objective_terms(X, Y, model, graphs, hp).values()))


def surrogate_objective(X, Y, model, graphs, hp, L_r):
    """Loss with the repulsion term replaced by ``-beta Tr(V L_r V^T)``.

    This is the quadratic problem the ``V`` update minimizes exactly when
    ``L_r`` is held at its lagged value.
    """
    terms = objective_terms(X, Y, model, graphs, hp)
    V = _params(model)[0]
    terms["repulsion"] = -hp.beta * np.sum((V @ L_r) * V)
    return float(sum(terms.values()))


def _ridge_right(T, G, ridge):
    """Return ``T (G + ridge I)^{-1}`` for symmetric PSD ``G``."""
    M = G + ridge * np.eye(G.shape[0])
    return solve_spd(M, T.T).T


def update_Px(V, X, mu, gamma):
    """``P_x = V X^T (X X^T + (gamma / mu) I)^{-1}``."""
    V = check_matrix(V, "V")
    X = check_matrix(X, "X")
    if V.shape[1] != X.shape[1]:
        raise DimensionError(f"V has {V.shape[1]} columns, X has {X.shape[1]}")
    mu = check_positive(mu, "mu")
    gamma = check_nonneg(gamma, "gamma")
    return _ridge_right(V @ X.T, X @ X.T, gamma / mu)


def update_Py(V, Y, mu, gamma):
    return update_Px(V, Y, mu, gamma)


def update_Ux(X, V, lambda_x, gamma):
    """``U_x = X V^T (V V^T + (gamma / lambda_x) I)^{-1}``."""
    X = check_matrix(X, "X")
    V = check_matrix(V, "V")
    if V.shape[1] != X.shape[1]:
        raise DimensionError(f"V has {V.shape[1]} columns, X has {X.shape[1]}")
    if not lambda_x > 0:
        raise ParameterError(f"the factor-loading update needs a positive modality weight, got {lambda_x!r}")
    gamma = check_nonneg(gamma, "gamma")
    return _ridge_right(X @ V.T, V @ V.T, gamma / lambda_x)


def update_Uy(Y, V, lambda_y, gamma):
    return update_Ux(Y, V, lambda_y, gamma)


def sylvester_system(X, Y, model, graphs, hp, V_prev):
    """Coefficients ``(A, B, C)`` of the ``V`` update ``A V + V B = C``.

    ``A = lambda_x U_x^T U_x + lambda_y U_y^T U_y``,
    ``B = alpha L_a - beta L_r + (2 mu + gamma) I`` with ``L_r`` taken at
    ``V_prev``, and
    ``C = lambda_x U_x^T X + lambda_y U_y^T Y + mu P_x X + mu P_y Y``.
    """
    _, U_x, U_y, P_x, P_y = _params(model)
    N = X.shape[1]
    A = hp.lambda_x * (U_x.T @ U_x) + hp.lambda_y * (U_y.T @ U_y)
    A = 0.5 * (A + A.T)
    # alpha * L written without dividing by alpha so alpha = 0 stays valid
    B = hp.alpha * graphs.L_a
    if hp.beta != 0.0:
        B = B - hp.beta * repulsion_laplacian(graphs.W_r, V_prev)
    B = B + (2.0 * hp.mu + hp.gamma) * np.eye(N)
    B = 0.5 * (B + B.T)
    C = hp.lambda_x * (U_x.T @ X) + hp.lambda_y * (U_y.T @ Y) + hp.mu * (P_x @ X) + hp.mu * (P_y @ Y)
    return A, B, C


def update_V(X, Y, model, graphs, hp, V_prev, *, info=None):
    """Solve the Sylvester system for ``V``.

    Raises
    ------
    ConfigurationError
        If ``B`` is not positive definite; the repulsion term then dominates
        the ``(2 mu + gamma) I`` shift and ``mu`` or ``gamma`` should grow
        (or ``beta`` shrink).
    """
    A, B, C = sylvester_system(X, Y, model, graphs, hp, V_prev)
    eig_b = sym_eig(B)
    q_min = float(eig_b.eigenvalues[0])
    if info is not None:
        info["min_eig_B"] = q_min
    q_scale = float(np.max(np.abs(eig_b.eigenvalues)))
    if not q_min > 1e-12 * q_scale:
        raise ConfigurationError(
            f"B = alpha*L + (2*mu + gamma)*I is not positive definite (smallest eigenvalue "
            f"{q_min:.6g}); increase mu or gamma, or decrease beta"
        )
    return solve_sylvester(A, B, C, eig_a=sym_eig(A), eig_b=eig_b)


def train(X, Y, hp=None, *, init=None, graphs=None, mean_x=None, mean_y=None, callback=None):
    """Run the alternating optimizer on preprocessed paired data.

    Parameters
    ----------
    X : ndarray (D_x, N)
    Y : ndarray (D_y, N)
        Normalized and centered training features, one sample per column.
    hp : Hyperparams, optional
    init : dict, optional
        Initial ``V, U_x, U_y, P_x, P_y``; defaults to :func:`initialize`.
    graphs : GraphMatrices, optional
        Prebuilt graphs for ``(X, Y)``.
    mean_x, mean_y : ndarray, optional
        Preprocessing means stored in the returned model (zeros if omitted).
    callback : callable, optional
        Called as ``callback(iteration, params, objective)`` after every
        iteration.

    Returns
    -------
    model : LatentModel
    report : TrainReport
    """
    hp = hp or Hyperparams()
    X, Y = (np.ascontiguousarray(M) for M in check_paired(X, Y))
    D_x, N = X.shape
    D_y = Y.shape[0]
    if N <= hp.k:
        raise ParameterError(f"need more than k={hp.k} training samples, got N={N}")

    if graphs is None:
        graphs = build_graphs(X, Y, hp.lambda_x, hp.lambda_y, hp.k, hp.bandwidth)
    params = dict(init) if init is not None else initialize(hp, N, D_x, D_y)
    params = {name: np.array(params[name], dtype=np.float64) for name in ("V", "U_x", "U_y", "P_x", "P_y")}

    trace = [objective(X, Y, params, graphs, hp)]
    min_eigs = []
    converged = False
    iterations = 0
    for it in range(1, hp.max_iters + 1):
        info = {}
        params["V"] = update_V(X, Y, params, graphs, hp, params["V"], info=info)
        min_eigs.append(info["min_eig_B"])
        params["P_x"] = update_Px(params["V"], X, hp.mu, hp.gamma)
        params["P_y"] = update_Py(params["V"], Y, hp.mu, hp.gamma)
        # a zero modality weight leaves only the regularizer, minimized at zero
        params["U_x"] = (
            update_Ux(X, params["V"], hp.lambda_x, hp.gamma) if hp.lambda_x > 0 else np.zeros((D_x, hp.H))
        )
        params["U_y"] = (
            update_Uy(Y, params["V"], hp.lambda_y, hp.gamma) if hp.lambda_y > 0 else np.zeros((D_y, hp.H))
        )

        value = objective(X, Y, params, graphs, hp)
        if not math.isfinite(value):
            raise DivergenceError(f"objective became non-finite at iteration {it}")
        prev = trace[-1]
        trace.append(value)
        iterations = it
        rel = abs(value - prev) / max(1.0, abs(prev))
        logger.debug("iter %d objective %.10g rel_change %.3e min_eig_B %.6g", it, value, rel, info["min_eig_B"])
        if callback is not None:
            callback(it, params, value)
        if rel < hp.rel_tol:
            converged = True
            break

    model = LatentModel(
        V=params["V"],
        U_x=params["U_x"],
        U_y=params["U_y"],
        P_x=params["P_x"],
        P_y=params["P_y"],
        mean_x=np.zeros(D_x) if mean_x is None else np.asarray(mean_x, dtype=np.float64).ravel(),
        mean_y=np.zeros(D_y) if mean_y is None else np.asarray(mean_y, dtype=np.float64).ravel(),
    )
    report = TrainReport(
        objective_trace=trace,
        iterations_run=iterations,
        converged=converged,
        final_objective=trace[-1],
        min_eig_B=min_eigs,
    )
    return model, report


def save_model(model, path):
    """Write ``model`` in the SPCM binary layout (little-endian, row-major)."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<4Q", model.H, model.N, model.D_x, model.D_y))
        for name in ("V", "U_x", "U_y", "P_x", "P_y", "mean_x", "mean_y"):
            fh.write(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes(order="C"))


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    if buf.read(4) != MODEL_MAGIC:
        raise FormatError("bad magic, not an SPCM model file", path=path, offset=0)
    header = buf.read(4 + 32)
    if len(header) != 36:
        raise FormatError("truncated header", path=path, offset=4)
    (version,) = struct.unpack("<I", header[:4])
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model format version {version}", path=path, offset=4)
    H, N, D_x, D_y = struct.unpack("<4Q", header[4:])
    shapes = {
        "V": (H, N),
        "U_x": (D_x, H),
        "U_y": (D_y, H),
        "P_x": (H, D_x),
        "P_y": (H, D_y),
        "mean_x": (D_x,),
        "mean_y": (D_y,),
    }
    arrays = {}
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        offset = buf.tell()
        raw = buf.read(8 * count)
        if len(raw) != 8 * count:
            raise FormatError(f"truncated data while reading {name}", path=path, offset=offset)
        arrays[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    if buf.read(1):
        raise FormatError("trailing bytes after model payload", path=path, offset=buf.tell() - 1)
    return LatentModel(**arrays)
