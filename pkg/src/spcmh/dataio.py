"""Paired datasets: preprocessing, file formats and a synthetic generator.

A dataset directory holds ``x.<ext>`` and ``y.<ext>`` (``.spcx`` binary or
``.csv``), plus optional ``labels.csv`` (``index,class_id``) and
``split.csv`` (``index,split`` with split one of train/database/query).
Feature files store one sample per row; in memory the matrices are
``D x N`` with one sample per column.
"""

import csv
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._validation import check_count, check_matrix, check_nonneg
from .exceptions import DegenerateSampleError, DimensionError, FormatError, ParameterError
from .model import NORM_MODE

__all__ = [
    "PairedDataset",
    "PreprocessStats",
    "SPLITS",
    "normalize_center",
    "apply_preprocessing",
    "synth_clusters",
    "assign_split",
    "read_matrix",
    "write_matrix",
    "read_labels",
    "write_labels",
    "load_dataset",
    "save_dataset",
]

SPLITS = ("train", "database", "query")

MATRIX_MAGIC = b"SPCX"
MATRIX_VERSION = 1


@dataclass
class PairedDataset:
    """Column-paired feature matrices.

    ``split`` tags each column as train, database or query. Training columns
    double as the retrieval database.
    """

    X: np.ndarray
    Y: np.ndarray
    labels: np.ndarray = None
    split: np.ndarray = None

    def __post_init__(self):
        # one memory layout keeps BLAS rounding identical across load paths
        self.X = np.ascontiguousarray(check_matrix(self.X, "X"))
        self.Y = np.ascontiguousarray(check_matrix(self.Y, "Y"))
        if self.X.shape[1] != self.Y.shape[1]:
            raise DimensionError(f"X has {self.X.shape[1]} columns but Y has {self.Y.shape[1]}")
        n = self.X.shape[1]
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (n,):
                raise DimensionError(f"labels must cover all {n} columns, got shape {self.labels.shape}")
        if self.split is not None:
            self.split = np.asarray(self.split, dtype=object)
            if self.split.shape != (n,):
                raise DimensionError(f"split tags must cover all {n} columns")
            bad = set(self.split) - set(SPLITS)
            if bad:
                raise ParameterError(f"unknown split tag(s): {sorted(bad)}")

    @property
    def n_samples(self):
        return self.X.shape[1]

    def indices(self, *splits):
        """Column indices tagged with any of ``splits``; all columns when untagged."""
        if self.split is None:
            return np.arange(self.n_samples)
        return np.flatnonzero(np.isin(self.split, splits))

    @property
    def train_idx(self):
        return self.indices("train")

    @property
    def database_idx(self):
        return self.indices("train", "database")

    @property
    def query_idx(self):
        if self.split is None:
            return np.arange(self.n_samples)
        return self.indices("query")

    def subset(self, idx):
        return PairedDataset(
            X=self.X[:, idx],
            Y=self.Y[:, idx],
            labels=None if self.labels is None else self.labels[idx],
            split=None if self.split is None else self.split[idx],
        )


@dataclass(frozen=True)
class PreprocessStats:
    mean_x: np.ndarray
    mean_y: np.ndarray
    norm_mode: str = NORM_MODE


def _l2_normalize(M, modality):
    norms = np.linalg.norm(M, axis=0)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateSampleError(int(zero[0]), modality)
    return M / norms


def apply_preprocessing(M, mean, modality=None):
    """L2-normalize each column of ``M`` and subtract the stored ``mean``."""
    M = check_matrix(M, modality or "features")
    mean = np.asarray(mean, dtype=np.float64).ravel()
    if M.shape[0] != mean.shape[0]:
        raise DimensionError(f"features have {M.shape[0]} dimensions, stored mean has {mean.shape[0]}")
    return _l2_normalize(M, modality) - mean[:, None]


def normalize_center(data, train_idx=None):
    """Per-sample L2 normalization followed by mean centering.

    Means are taken over the training columns only (``train_idx``, or the
    columns tagged ``train``, or all columns when untagged) and subtracted
    from every column.

    Returns
    -------
    (PairedDataset, PreprocessStats)
    """
    if train_idx is None:
        train_idx = data.train_idx
    train_idx = np.asarray(train_idx)
    if train_idx.size == 0:
        raise ParameterError("no training columns to compute means from")
    Xn = _l2_normalize(data.X, "x")
    Yn = _l2_normalize(data.Y, "y")
    mean_x = Xn[:, train_idx].mean(axis=1)
    mean_y = Yn[:, train_idx].mean(axis=1)
    out = replace(data, X=Xn - mean_x[:, None], Y=Yn - mean_y[:, None])
    return out, PreprocessStats(mean_x=mean_x, mean_y=mean_y)


def synth_clusters(n_clusters=10, per_cluster=80, D_x=20, D_y=30, noise_sigma=0.1, seed=0):
    """Gaussian clusters observed through two independent modalities.

    Each cluster gets a standard-normal center in each modality; a sample is
    its center plus isotropic noise of scale ``noise_sigma``. Paired columns
    share the cluster id, which becomes the class label. Columns are grouped
    by cluster; use :func:`assign_split` for a shuffled train/query split.
    """
    n_clusters = check_count(n_clusters, "n_clusters", minimum=2)
    per_cluster = check_count(per_cluster, "per_cluster", minimum=2)
    D_x = check_count(D_x, "D_x")
    D_y = check_count(D_y, "D_y")
    noise_sigma = check_nonneg(noise_sigma, "noise_sigma")
    rng = np.random.default_rng(seed)
    centers_x = rng.standard_normal((D_x, n_clusters))
    centers_y = rng.standard_normal((D_y, n_clusters))
    labels = np.repeat(np.arange(n_clusters), per_cluster)
    X = centers_x[:, labels] + noise_sigma * rng.standard_normal((D_x, labels.size))
    Y = centers_y[:, labels] + noise_sigma * rng.standard_normal((D_y, labels.size))
    return PairedDataset(X=X, Y=Y, labels=labels)


def assign_split(data, n_query, seed=0, n_database=0):
    """Tag a random ``n_query`` columns as queries, ``n_database`` as database-only, the rest as train."""
    n = data.n_samples
    if n_query < 0 or n_database < 0 or n_query + n_database >= n:
        raise ParameterError(f"cannot carve {n_query} queries and {n_database} database items out of {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    split = np.full(n, "train", dtype=object)
    split[perm[:n_query]] = "query"
    split[perm[n_query : n_query + n_database]] = "database"
    return replace(data, split=split)


# ---------------------------------------------------------------------------
# file formats


def write_matrix(M, path):
    """Write a 2-D array in the SPCX binary layout."""
    M = np.asarray(M, dtype=np.float64)
    rows, cols = M.shape
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<IQQ", MATRIX_VERSION, rows, cols))
        fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def _read_spcx(path):
    data = Path(path).read_bytes()
    if data[:4] != MATRIX_MAGIC:
        raise FormatError("bad magic, not an SPCX matrix file", path=path, offset=0)
    if len(data) < 24:
        raise FormatError("truncated header", path=path, offset=len(data))
    version, rows, cols = struct.unpack("<IQQ", data[4:24])
    if version != MATRIX_VERSION:
        raise FormatError(f"unsupported matrix format version {version}", path=path, offset=4)
    expected = 24 + 8 * rows * cols
    if len(data) != expected:
        raise FormatError(f"payload size {len(data)} bytes, expected {expected}", path=path, offset=24)
    return np.frombuffer(data, dtype="<f8", offset=24).astype(np.float64).reshape(rows, cols)


def _read_csv_matrix(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty file, expected a header row", path=path, line=1) from None
        width = len(header)
        if width == 0 or any(h.strip() == "" for h in header):
            raise FormatError("malformed header row", path=path, line=1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != width:
                raise FormatError(f"row has {len(row)} fields, header has {width}", path=path, line=line)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise FormatError(f"non-numeric field ({exc})", path=path, line=line) from None
    if not rows:
        raise FormatError("no data rows", path=path, line=2)
    return np.array(rows, dtype=np.float64)


def _write_csv_matrix(M, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_NONE, lineterminator="\n")
        writer.writerow([f"d{i}" for i in range(M.shape[1])])
        for row in M:
            writer.writerow([repr(float(v)) for v in row])


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("spcx", "csv"):
            raise ParameterError(f"unknown format {fmt!r}")
        return fmt
    return "csv" if Path(path).suffix.lower() == ".csv" else "spcx"


def read_matrix(path, fmt=None):
    """Read a samples-by-dimensions matrix from SPCX or CSV."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return _read_csv_matrix(path) if _infer_format(path, fmt) == "csv" else _read_spcx(path)


def _write_matrix_any(M, path, fmt):
    if _infer_format(path, fmt) == "csv":
        _write_csv_matrix(M, path)
    else:
        write_matrix(M, path)


def _read_index_csv(path, n, convert):
    values = [None] * n
    with open(path, newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"expected 2 fields, got {len(row)}", path=path, line=line)
            try:
                idx = int(row[0])
            except ValueError:
                if line == 1:
                    continue  # header
                raise FormatError(f"bad index {row[0]!r}", path=path, line=line) from None
            if not 0 <= idx < n:
                raise FormatError(f"index {idx} out of range for {n} samples", path=path, line=line)
            try:
                values[idx] = convert(row[1])
            except ValueError:
                raise FormatError(f"bad value {row[1]!r}", path=path, line=line) from None
    missing = [i for i, v in enumerate(values) if v is None]
    if missing:
        raise FormatError(f"no entry for index {missing[0]}", path=path)
    return values


def read_labels(path, n):
    return np.array(_read_index_csv(path, n, int), dtype=np.int64)


def write_labels(labels, path, header="class_id"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"index,{header}\n")
        for i, c in enumerate(labels):
            fh.write(f"{i},{c}\n")


def _find(directory, stem):
    for ext in (".spcx", ".csv"):
        candidate = directory / f"{stem}{ext}"
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"no {stem}.spcx or {stem}.csv in {directory}")


def load_dataset(path, fmt=None):
    """Load a dataset directory (see module docstring)."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {path}")
    X = read_matrix(_find(path, "x"), fmt).T
    Y = read_matrix(_find(path, "y"), fmt).T
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"x has {X.shape[1]} samples but y has {Y.shape[1]}")
    n = X.shape[1]
    labels = read_labels(path / "labels.csv", n) if (path / "labels.csv").exists() else None
    split = None
    if (path / "split.csv").exists():
        split = np.array(_read_index_csv(path / "split.csv", n, _parse_split), dtype=object)
    return PairedDataset(X=X, Y=Y, labels=labels, split=split)


def _parse_split(value):
    if value not in SPLITS:
        raise ValueError(value)
    return value


def save_dataset(data, path, fmt="spcx"):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    ext = "csv" if fmt == "csv" else "spcx"
    _write_matrix_any(data.X.T, path / f"x.{ext}", fmt)
    _write_matrix_any(data.Y.T, path / f"y.{ext}", fmt)
    if data.labels is not None:
        write_labels(data.labels, path / "labels.csv")
    if data.split is not None:
        write_labels(data.split, path / "split.csv", header="split")
