"""Binary codes from linear projections and exact Hamming ranking.

Bit ``b`` of a code lives in word ``b // 64`` at position ``b % 64``; bits
past ``H`` in the last word are zero.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import check_matrix
from .dataio import apply_preprocessing
from .exceptions import DimensionError, EmptyResultError, FormatError, ParameterError
from .model import NORM_MODE

__all__ = [
    "HashCodeMatrix",
    "RankedList",
    "pack_bits",
    "unpack_bits",
    "encode",
    "hamming",
    "hamming_matrix",
    "rank",
    "rank_all",
    "save_codes",
    "load_codes",
]

CODE_MAGIC = b"SPCH"
CODE_VERSION = 1


def _n_words(H):
    return (H + 63) // 64


def pack_bits(bits):
    """Pack an ``(N, H)`` 0/1 array into ``(N, ceil(H/64))`` little-endian uint64 words."""
    bits = np.asarray(bits)
    if bits.ndim == 1:
        bits = bits[None, :]
    if bits.ndim != 2:
        raise DimensionError(f"bits must be 1-D or 2-D, got shape {bits.shape}")
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ParameterError("bits must be 0 or 1")
    N, H = bits.shape
    W = _n_words(H)
    padded = np.zeros((N, 64 * W), dtype=np.uint8)
    padded[:, :H] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view("<u8").astype(np.uint64).reshape(N, W)


def unpack_bits(words, H):
    words = np.ascontiguousarray(words, dtype="<u8")
    N = words.shape[0]
    as_bytes = words.view(np.uint8).reshape(N, -1)
    return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :H]


@dataclass(frozen=True)
class HashCodeMatrix:
    """``N`` packed codes of ``H`` bits each."""

    H: int
    words: np.ndarray

    def __post_init__(self):
        words = np.asarray(self.words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != _n_words(self.H):
            raise DimensionError(f"words shape {words.shape} does not hold {self.H}-bit codes")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @classmethod
    def from_bits(cls, bits):
        bits = np.asarray(bits)
        if bits.ndim == 1:
            bits = bits[None, :]
        return cls(H=bits.shape[1], words=pack_bits(bits))

    @property
    def N(self):
        return self.words.shape[0]

    def __len__(self):
        return self.N

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            idx = [idx]
        return HashCodeMatrix(H=self.H, words=self.words[idx])

    def to_bits(self):
        return unpack_bits(self.words, self.H)

    def __eq__(self, other):
        return (
            isinstance(other, HashCodeMatrix) and self.H == other.H and np.array_equal(self.words, other.words)
        )

    __hash__ = None


@dataclass(frozen=True)
class RankedList:
    query_id: int
    indices: np.ndarray
    distances: np.ndarray


def encode(P, mean, features, norm_mode=NORM_MODE):
    """Hash the columns of ``features`` (D x M) with projection ``P`` (H x D).

    Columns get the model's preprocessing (unit L2 norm, then subtract
    ``mean``) before projection. Bit ``b`` is set iff ``(P x)_b >= 0``.
    """
    if norm_mode != NORM_MODE:
        raise ParameterError(f"unsupported norm_mode {norm_mode!r}")
    P = check_matrix(P, "P")
    features = check_matrix(features, "features")
    if P.shape[1] != features.shape[0]:
        raise DimensionError(f"projection expects {P.shape[1]} dimensions, features have {features.shape[0]}")
    Z = apply_preprocessing(features, mean)
    return HashCodeMatrix.from_bits((P @ Z >= 0).T.astype(np.uint8))


def _as_words(code):
    if isinstance(code, HashCodeMatrix):
        return code.H, code.words
    bits = np.asarray(code)
    if bits.ndim != 1:
        raise DimensionError("a bit-vector code must be 1-D")
    return bits.shape[0], pack_bits(bits)


def hamming(a, b):
    """Number of differing bits between two codes.

    Accepts single-row :class:`HashCodeMatrix` objects or 0/1 vectors.
    """
    Ha, wa = _as_words(a)
    Hb, wb = _as_words(b)
    if Ha != Hb:
        raise DimensionError(f"code lengths differ: {Ha} vs {Hb}")
    if wa.shape[0] != 1 or wb.shape[0] != 1:
        raise DimensionError("hamming compares single codes; use hamming_matrix for batches")
    return int(np.bitwise_count(wa ^ wb).sum())


def hamming_matrix(queries, database):
    """All pairwise Hamming distances, shape ``(queries.N, database.N)``."""
    if queries.H != database.H:
        raise DimensionError(f"code lengths differ: {queries.H} vs {database.H}")
    out = np.zeros((queries.N, database.N), dtype=np.int64)
    for w in range(queries.words.shape[1]):
        out += np.bitwise_count(queries.words[:, w, None] ^ database.words[None, :, w])
    return out


def _rank_row(qid, dist):
    order = np.argsort(dist, kind="stable")
    return RankedList(query_id=qid, indices=order, distances=dist[order])


def rank(query, db, query_id=0):
    """Linear-scan ranking of the whole database by ascending Hamming distance.

    Ties keep ascending database index.
    """
    if db.N == 0:
        raise EmptyResultError("cannot rank against an empty database")
    if isinstance(query, HashCodeMatrix):
        if query.N != 1:
            raise DimensionError("rank takes a single query code")
    else:
        query = HashCodeMatrix.from_bits(query)
    return _rank_row(query_id, hamming_matrix(query, db)[0])


def rank_all(queries, db):
    if db.N == 0:
        raise EmptyResultError("cannot rank against an empty database")
    D = hamming_matrix(queries, db)
    return [_rank_row(i, D[i]) for i in range(queries.N)]


def save_codes(codes, path):
    with open(path, "wb") as fh:
        fh.write(CODE_MAGIC)
        fh.write(struct.pack("<IQQ", CODE_VERSION, codes.H, codes.N))
        fh.write(np.ascontiguousarray(codes.words, dtype="<u8").tobytes())


def load_codes(path):
    data = Path(path).read_bytes()
    if data[:4] != CODE_MAGIC:
        raise FormatError("bad magic, not an SPCH code file", path=path, offset=0)
    if len(data) < 24:
        raise FormatError("truncated header", path=path, offset=len(data))
    version, H, N = struct.unpack("<IQQ", data[4:24])
    if version != CODE_VERSION:
        raise FormatError(f"unsupported code format version {version}", path=path, offset=4)
    W = _n_words(H)
    if len(data) != 24 + 8 * N * W:
        raise FormatError(f"payload size does not match H={H}, N={N}", path=path, offset=24)
    words = np.frombuffer(data, dtype="<u8", offset=24).astype(np.uint64).reshape(N, W)
    return HashCodeMatrix(H=int(H), words=words)
