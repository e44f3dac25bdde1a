"""Graphs, spin configurations and the diagonal Max-Cut / SK Hamiltonians.

Spin configurations are numpy arrays with entries in {-1, +1}.  A basis label
``x`` in {0, 1}^n maps to spins via ``s = 1 - 2x``.  Functions that take spins
accept either one configuration of shape ``(n,)`` or a batch ``(M, n)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import generator
from .errors import InvalidArgumentError

KINDS = ("perturbed-base", "sk")


def _frozen(arr, dtype=np.float64):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def bits_to_spins(x):
    return 1.0 - 2.0 * np.asarray(x, dtype=np.float64)


def spins_to_bits(s):
    return ((1 - np.asarray(s)) // 2).astype(np.int64)


def as_spins(s, n=None):
    """Validate and return ``s`` as a float array of +/-1 entries."""
    arr = np.asarray(s, dtype=np.float64)
    if arr.ndim not in (1, 2):
        raise InvalidArgumentError(f"spin array must be 1-D or 2-D, got shape {arr.shape}")
    if n is not None and arr.shape[-1] != n:
        raise InvalidArgumentError(f"spin configuration has length {arr.shape[-1]}, expected {n}")
    if not np.all(np.abs(arr) == 1.0):
        raise InvalidArgumentError("spin entries must be exactly +1 or -1")
    return arr


def all_spin_configs(n):
    """All 2**n configurations, row ``x`` holding the spins of basis label ``x``."""
    x = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    return bits_to_spins(x)


@dataclass(frozen=True)
class MaxCutTask:
    """Unweighted graph whose antiferromagnetic Ising energy encodes Max-Cut."""

    J: np.ndarray
    sigma: float = 0.0
    task_seed: int = 0

    def __post_init__(self):
        J = np.asarray(self.J)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise InvalidArgumentError(f"coupling matrix must be square, got {J.shape}")
        if not np.array_equal(J, J.T):
            raise InvalidArgumentError("coupling matrix must be symmetric")
        if np.any(np.diag(J) != 0):
            raise InvalidArgumentError("coupling matrix must have zero diagonal")
        if not np.all((J == 0) | (J == 1)):
            raise InvalidArgumentError("Max-Cut couplings must be 0/1")
        object.__setattr__(self, "J", _frozen(J))

    @property
    def n(self):
        return self.J.shape[0]

    @property
    def edge_count(self):
        return int(self.J.sum()) // 2

    def edges(self):
        i, j = np.nonzero(np.triu(self.J, 1))
        return list(zip(i.tolist(), j.tolist()))


@dataclass(frozen=True)
class SkTask:
    """Sherrington-Kirkpatrick instance with Gaussian couplings."""

    J: np.ndarray
    task_seed: int = 0

    def __post_init__(self):
        J = np.asarray(self.J, dtype=np.float64)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise InvalidArgumentError(f"coupling matrix must be square, got {J.shape}")
        if not np.array_equal(J, J.T) or np.any(np.diag(J) != 0):
            raise InvalidArgumentError("SK couplings must be symmetric with zero diagonal")
        object.__setattr__(self, "J", _frozen(J))

    @property
    def n(self):
        return self.J.shape[0]


@dataclass(frozen=True)
class TaskDistribution:
    base_adjacency: np.ndarray
    sigma: float = 0.0
    kind: str = "perturbed-base"
    _n: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown distribution kind {self.kind!r}")
        if self.sigma < 0:
            raise InvalidArgumentError("sigma must be non-negative")
        A = np.asarray(self.base_adjacency)
        # validates symmetry / zero diagonal / binary entries
        A = MaxCutTask(A).J
        object.__setattr__(self, "base_adjacency", A)
        object.__setattr__(self, "_n", A.shape[0])

    @classmethod
    def sk(cls, n):
        return cls(np.zeros((n, n)), sigma=1.0, kind="sk")

    @property
    def n(self):
        return self._n

    def sample(self, seed):
        if self.kind == "sk":
            return sample_sk_task(self.n, seed)
        return sample_task(self, seed)

    def to_json(self):
        base = MaxCutTask(self.base_adjacency)
        return {
            "kind": self.kind,
            "sigma": float(self.sigma),
            "n": self.n,
            "edges": [list(e) for e in base.edges()],
        }

    @classmethod
    def from_json(cls, data):
        n = int(data["n"])
        return cls(_adjacency_from_edges(n, data.get("edges", [])), float(data["sigma"]), data["kind"])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def make_base_graph(n, edge_prob=0.5, seed=0):
    """Bernoulli random graph: each pair i<j is an edge with probability ``edge_prob``."""
    if n < 2:
        raise InvalidArgumentError(f"need at least 2 vertices, got n={n}")
    if not 0.0 <= edge_prob <= 1.0:
        raise InvalidArgumentError(f"edge_prob must lie in [0, 1], got {edge_prob}")
    rng = generator(seed)
    upper = np.triu(rng.random((n, n)) < edge_prob, 1)
    J = (upper | upper.T).astype(np.float64)
    return MaxCutTask(J, sigma=0.0, task_seed=int(seed))


def perturb_adjacency(A, S):
    """Round ``A + S`` to a 0/1 matrix (threshold 0.5) and zero the diagonal."""
    out = (np.asarray(A, dtype=np.float64) + np.asarray(S, dtype=np.float64) >= 0.5).astype(np.float64)
    np.fill_diagonal(out, 0.0)
    return out


def sample_task(dist, seed):
    """Draw one perturbed copy of the base graph.

    Noise ``X`` is a full n-by-n matrix of N(0, sigma^2) entries; the
    symmetrised ``(X + X.T) / 2`` is added to the base adjacency before rounding.
    """
    if dist.kind != "perturbed-base":
        raise InvalidArgumentError("sample_task needs a perturbed-base distribution")
    n = dist.n
    rng = generator(seed)
    X = rng.normal(0.0, dist.sigma, size=(n, n)) if dist.sigma > 0 else np.zeros((n, n))
    J = perturb_adjacency(dist.base_adjacency, (X + X.T) / 2)
    return MaxCutTask(J, sigma=float(dist.sigma), task_seed=int(seed))


def sample_sk_task(n, seed):
    if n < 2:
        raise InvalidArgumentError(f"need at least 2 spins, got n={n}")
    rng = generator(seed)
    upper = np.triu(rng.standard_normal((n, n)), 1)
    return SkTask(upper + upper.T, task_seed=int(seed))


def local_energy(task, s):
    """Diagonal Ising energy sum_{i<j} J_ij s_i s_j, per configuration."""
    s = as_spins(s)
    if s.shape[-1] != task.n:
        raise InvalidArgumentError(f"spin length {s.shape[-1]} does not match task size {task.n}")
    return 0.5 * np.einsum("...i,ij,...j->...", s, task.J, s)


def cut_value(task, s):
    """Number of edges crossing the partition defined by ``s``."""
    if not isinstance(task, MaxCutTask):
        raise InvalidArgumentError("cut_value needs a 0/1 Max-Cut task")
    e = local_energy(task, s)
    cut = (task.edge_count - np.rint(e).astype(np.int64)) // 2
    return int(cut) if np.ndim(cut) == 0 else cut


def _adjacency_from_edges(n, edges):
    J = np.zeros((n, n))
    for i, j in edges:
        i, j = int(i), int(j)
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise InvalidArgumentError(f"bad edge ({i}, {j}) for n={n}")
        J[i, j] = J[j, i] = 1.0
    return J


def write_edge_list(task, path):
    """Write ``task`` as ``n m`` followed by ``m`` lines ``i j`` (0-based, i<j)."""
    edges = task.edges()
    lines = [f"{task.n} {len(edges)}"] + [f"{i} {j}" for i, j in edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path, sigma=0.0, task_seed=0):
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise InvalidArgumentError(f"{path}: header must be 'n m'")
    n, m = int(rows[0][0]), int(rows[0][1])
    if len(rows) - 1 != m:
        raise InvalidArgumentError(f"{path}: header announces {m} edges, found {len(rows) - 1}")
    return MaxCutTask(_adjacency_from_edges(n, rows[1:]), sigma=sigma, task_seed=task_seed)
