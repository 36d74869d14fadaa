"""Channels, input distributions and the elementary information measures.

All logarithms are natural; every rate is in nats.  The conventions
``0 log 0 = 0`` and ``0 log(0/0) = 0`` hold throughout, and ``q log(q/0)``
is ``+inf`` for ``q > 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, EmptyMatrix, EmptySequence, NonStochasticRow, ShapeMismatch

INGEST_ROW_TOL = 1e-6
ROW_TOL = 1e-9
WEIGHT_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TestChannel:
    """Row-stochastic matrix ``V(y|x)``; all-zero columns are allowed."""

    __test__ = False  # keep pytest from collecting this class

    probabilities: np.ndarray
    labels_in: tuple | None = None
    labels_out: tuple | None = None

    def __post_init__(self):
        V = _frozen(self.probabilities)
        if V.ndim != 2 or V.size == 0:
            raise EmptyMatrix("channel matrix must be a nonempty 2-D array")
        if np.any(V < 0) or not np.all(np.isfinite(V)):
            raise NonStochasticRow("channel entries must be finite and nonnegative")
        bad = np.abs(V.sum(axis=1) - 1.0) > ROW_TOL
        if np.any(bad):
            raise NonStochasticRow(f"rows {np.flatnonzero(bad).tolist()} do not sum to 1")
        object.__setattr__(self, "probabilities", V)

    @property
    def input_size(self) -> int:
        return self.probabilities.shape[0]

    @property
    def output_size(self) -> int:
        return self.probabilities.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.probabilities.shape

    @property
    def support_by_output(self) -> tuple[frozenset, ...]:
        V = self.probabilities
        return tuple(frozenset(np.flatnonzero(V[:, y] > 0).tolist()) for y in range(V.shape[1]))

    @property
    def key(self) -> bytes:
        """Content key used by solver caches."""
        return self.probabilities.tobytes() + repr(self.shape).encode()

    def __eq__(self, other):
        if not isinstance(other, TestChannel):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.probabilities, other.probabilities)

    def __hash__(self):
        return hash(self.key)


@dataclass(frozen=True, eq=False)
class Channel(TestChannel):
    """A channel ``W`` after ingestion: unit rows and no all-zero column.

    ``column_map[j]`` is the index of column ``j`` in the matrix originally
    supplied to :func:`ingest_channel`.
    """

    column_map: tuple = field(default=())
    removed_columns: tuple = field(default=())

    def __post_init__(self):
        super().__post_init__()
        W = self.probabilities
        empty = np.flatnonzero(W.max(axis=0) <= 0)
        if empty.size:
            raise EmptyMatrix(f"output columns {empty.tolist()} are all zero; use ingest_channel")
        if not self.column_map:
            object.__setattr__(self, "column_map", tuple(range(W.shape[1])))


@dataclass(frozen=True, eq=False)
class InputDistribution:
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size == 0:
            raise ShapeMismatch("input distribution must be a nonempty vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise DomainError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, w) -> "InputDistribution":
        w = np.clip(np.asarray(w, dtype=np.float64), 0.0, None)
        return cls(w / w.sum())

    @classmethod
    def uniform(cls, k: int) -> "InputDistribution":
        return cls(np.full(k, 1.0 / k))

    @property
    def support(self) -> frozenset:
        return frozenset(np.flatnonzero(self.weights > 0).tolist())

    def __len__(self):
        return self.weights.size

    def __eq__(self, other):
        if not isinstance(other, InputDistribution):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())


def as_matrix(V) -> np.ndarray:
    if isinstance(V, TestChannel):
        return V.probabilities
    return np.asarray(V, dtype=np.float64)


def as_weights(P) -> np.ndarray:
    if isinstance(P, InputDistribution):
        return P.weights
    return np.asarray(P, dtype=np.float64)


def _pair(P, V) -> tuple[np.ndarray, np.ndarray]:
    p, M = as_weights(P), as_matrix(V)
    if M.ndim != 2 or p.shape != (M.shape[0],):
        raise ShapeMismatch(f"distribution of length {p.shape} does not match channel {M.shape}")
    return p, M


def ingest_channel(matrix, labels_in=None, labels_out=None) -> Channel:
    """Validate a raw matrix, renormalize rows and strip all-zero columns."""
    M = np.array(matrix, dtype=np.float64)
    if M.size == 0:
        raise EmptyMatrix("empty channel matrix")
    if M.ndim != 2:
        raise EmptyMatrix("channel matrix must be rectangular")
    if np.any(M < 0) or not np.all(np.isfinite(M)):
        raise NonStochasticRow("channel entries must be finite and nonnegative")
    sums = M.sum(axis=1)
    bad = np.abs(sums - 1.0) > INGEST_ROW_TOL
    if np.any(bad):
        rows = np.flatnonzero(bad).tolist()
        raise NonStochasticRow(f"rows {rows} sum to {sums[bad].tolist()}")
    M = M / sums[:, None]
    keep = np.flatnonzero(M.max(axis=0) > 0)
    removed = tuple(int(j) for j in np.setdiff1d(np.arange(M.shape[1]), keep))
    if labels_out is not None:
        labels_out = tuple(labels_out[j] for j in keep)
    return Channel(
        M[:, keep],
        labels_in=tuple(labels_in) if labels_in is not None else None,
        labels_out=labels_out,
        column_map=tuple(int(j) for j in keep),
        removed_columns=removed,
    )


def load_channel(path) -> Channel:
    data = json.loads(Path(path).read_text())
    return channel_from_dict(data)


def channel_from_dict(data: dict) -> Channel:
    if not isinstance(data, dict) or "matrix" not in data:
        raise EmptyMatrix("channel JSON needs a 'matrix' field")
    rows = data["matrix"]
    if not rows or len({len(r) for r in rows}) != 1:
        raise EmptyMatrix("channel matrix must be nonempty and rectangular")
    return ingest_channel(rows, data.get("labels_in"), data.get("labels_out"))


def channel_to_dict(W: TestChannel) -> dict:
    out = {"matrix": W.probabilities.tolist()}
    if W.labels_in is not None:
        out["labels_in"] = list(W.labels_in)
    if W.labels_out is not None:
        out["labels_out"] = list(W.labels_out)
    return out


def bsc(p: float) -> Channel:
    return ingest_channel([[1 - p, p], [p, 1 - p]])


def bec(e: float) -> Channel:
    return ingest_channel([[1 - e, e, 0.0], [0.0, e, 1 - e]])


def identity_channel(k: int) -> Channel:
    return ingest_channel(np.eye(k))


# ---------------------------------------------------------------------------
# information measures


def output_distribution(P, V) -> np.ndarray:
    """``Q(y) = sum_x P(x) V(y|x)``."""
    p, M = _pair(P, V)
    return p @ M


def _xlogy_ratio(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise ``a log(a/b)`` with the 0 log 0 conventions (inf for a>0, b=0)."""
    out = np.zeros(np.broadcast(a, b).shape)
    a, b = np.broadcast_arrays(a, b)
    pos = a > 0
    with np.errstate(divide="ignore"):
        out[pos] = a[pos] * (np.log(a[pos]) - np.log(b[pos]))
    return out


def row_divergences(V, Q) -> np.ndarray:
    """``D(V(.|x) || Q)`` for every input letter ``x``."""
    M = as_matrix(V)
    return _xlogy_ratio(M, np.asarray(Q)[None, :]).sum(axis=1)


def paired_row_divergences(V, W) -> np.ndarray:
    """``D(V(.|x) || W(.|x))`` for every input letter ``x``."""
    Vm, Wm = as_matrix(V), as_matrix(W)
    if Vm.shape != Wm.shape:
        raise ShapeMismatch(f"V {Vm.shape} and W {Wm.shape} differ")
    return _xlogy_ratio(Vm, Wm).sum(axis=1)


def mutual_information(P, V) -> float:
    p, M = _pair(P, V)
    q = p @ M
    d = row_divergences(M, q)
    sup = p > 0
    return float(max(0.0, np.dot(p[sup], d[sup])))


def conditional_kl(V, W, P) -> float:
    """``D(V || W | P)``; ``math.inf`` when V is not dominated by W on supp(P)."""
    p, Vm = _pair(P, V)
    Wm = as_matrix(W)
    if Wm.shape != Vm.shape:
        raise ShapeMismatch(f"V {Vm.shape} and W {Wm.shape} differ")
    rows = _xlogy_ratio(Vm, Wm).sum(axis=1)
    sup = p > 0
    if np.any(np.isinf(rows[sup])):
        return math.inf
    return float(np.dot(p[sup], rows[sup]))


def information_density(P, V) -> np.ndarray:
    """Matrix of ``log V(y|x)/Q(y)``; zero where ``V(y|x) = 0``."""
    p, M = _pair(P, V)
    q = p @ M
    out = np.zeros_like(M)
    pos = M > 0
    out[pos] = np.log(M[pos]) - np.log(np.broadcast_to(q, M.shape)[pos])
    return out


def info_density_variance(P, V) -> float:
    """Variance of the information density under ``P x V``."""
    p, M = _pair(P, V)
    i = information_density(p, M)
    joint = p[:, None] * M
    mean = float(np.sum(joint * i))
    return float(max(0.0, np.sum(joint * (i - mean) ** 2)))


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"binary entropy needs p in [0, 1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log1p(-p)


def composition(x_seq: Sequence[int], alphabet_size: int | None = None):
    """Type of a sequence: ``(InputDistribution, counts)``."""
    x = np.asarray(x_seq, dtype=np.int64)
    if x.size == 0:
        raise EmptySequence("composition of an empty sequence")
    k = alphabet_size if alphabet_size is not None else int(x.max()) + 1
    if x.min() < 0 or x.max() >= k:
        raise DomainError("symbol outside the input alphabet")
    counts = np.bincount(x, minlength=k)
    return InputDistribution(counts / x.size), counts
