"""Real-valued restricted Boltzmann machine wavefunction.

    log psi(s) = sum_i a_i s_i + sum_j log(2 cosh(phi_j)),
    phi_j      = b_j + sum_i W_ij s_i

Parameters are stored as one flat vector ``theta`` laid out as ``(a, b, W)``
with ``W`` (visible x hidden) in row-major order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import generator
from .errors import InvalidArgumentError, NumericDomainError
from .ising import as_spins

LAYOUT = "rbm-a-b-W-rowmajor"
FORMAT_VERSION = 1
_MAGIC = b"MVRB"
_HEADER = struct.Struct("<4sIIII")  # magic, version, n, n_hidden, d

_LOG2 = np.log(2.0)
_FAST_LOGCOSH_LIMIT = 300.0


def log2cosh(x):
    """Overflow-safe ``log(2 cosh(x))``."""
    x = np.asarray(x, dtype=np.float64)
    if x.size and np.max(np.abs(x)) < _FAST_LOGCOSH_LIMIT:
        return np.log(np.cosh(x)) + _LOG2
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax))


def _sech2(x):
    c = np.cosh(np.clip(x, -350.0, 350.0))
    return 1.0 / (c * c)


@dataclass(frozen=True)
class RbmParams:
    n: int
    theta: np.ndarray
    n_hidden: int | None = None

    def __post_init__(self):
        h = self.n if self.n_hidden is None else int(self.n_hidden)
        object.__setattr__(self, "n_hidden", h)
        theta = np.array(self.theta, dtype=np.float64, copy=True).ravel()
        if theta.size != param_count(self.n, h):
            raise InvalidArgumentError(
                f"theta has {theta.size} entries, expected {param_count(self.n, h)} for n={self.n}, hidden={h}"
            )
        if not np.all(np.isfinite(theta)):
            raise NumericDomainError("RBM parameters must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def d(self):
        return self.theta.size

    @property
    def a(self):
        return self.theta[: self.n]

    @property
    def b(self):
        return self.theta[self.n : self.n + self.n_hidden]

    @property
    def W(self):
        return self.theta[self.n + self.n_hidden :].reshape(self.n, self.n_hidden)

    @classmethod
    def from_parts(cls, a, b, W):
        a, b, W = (np.asarray(v, dtype=np.float64) for v in (a, b, W))
        return cls(a.size, np.concatenate([a, b, W.ravel()]), n_hidden=b.size)

    def with_theta(self, theta):
        return RbmParams(self.n, theta, self.n_hidden)


def param_count(n, n_hidden=None):
    h = n if n_hidden is None else n_hidden
    return n + h + n * h


def init_params(n, scale=0.01, seed=0, n_hidden=None):
    """Gaussian initialisation with standard deviation ``scale``."""
    if scale < 0:
        raise InvalidArgumentError("scale must be non-negative")
    h = n if n_hidden is None else n_hidden
    rng = generator(seed)
    return RbmParams(n, scale * rng.standard_normal(param_count(n, h)), h)


def hidden_activations(params, s):
    s = as_spins(s, params.n)
    return s @ params.W + params.b


def log_amplitude(params, s):
    s = as_spins(s, params.n)
    return s @ params.a + log2cosh(s @ params.W + params.b).sum(axis=-1)


def log_gradient(params, s):
    """Score vector d log psi / d theta, shape ``(d,)`` or ``(M, d)``."""
    s = as_spins(s, params.n)
    t = np.tanh(s @ params.W + params.b)
    dW = s[..., :, None] * t[..., None, :]
    return np.concatenate([s, t, dW.reshape(*s.shape[:-1], -1)], axis=-1)


def weighted_log_hessian_vector(params, s, weights, v):
    """Return ``sum_k weights[k] * Hess(log psi)(s_k) @ v``.

    Only the (b, W) blocks of the Hessian are nonzero: the curvature of
    ``log 2cosh(phi_j)`` is ``sech^2(phi_j)`` times the outer product of
    ``d phi_j / d theta`` with itself.
    """
    s = np.atleast_2d(as_spins(s, params.n))
    weights = np.asarray(weights, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (params.d,) or weights.shape != (s.shape[0],):
        raise InvalidArgumentError("dimension mismatch in Hessian-vector product")
    n, h = params.n, params.n_hidden
    vb = v[n : n + h]
    vW = v[n + h :].reshape(n, h)
    phi = s @ params.W + params.b
    # directional change of each hidden pre-activation, scaled by curvature
    c = weights[:, None] * _sech2(phi) * (vb + s @ vW)
    out = np.zeros(params.d)
    out[n : n + h] = c.sum(axis=0)
    out[n + h :] = (s.T @ c).ravel()
    return out


def log_ratio_flip(params, s, cache, k):
    """log|psi(s with spin k flipped)| - log|psi(s)| in O(n_hidden).

    ``cache`` holds the hidden pre-activations of ``s``; the updated cache for
    the flipped configuration is returned alongside the ratio.
    """
    s = np.asarray(s, dtype=np.float64)
    if not 0 <= k < params.n:
        raise InvalidArgumentError(f"site index {k} out of range for n={params.n}")
    cache = np.asarray(cache, dtype=np.float64)
    new_cache = cache - 2.0 * s[k] * params.W[k]
    ratio = -2.0 * params.a[k] * s[k] + np.sum(log2cosh(new_cache) - log2cosh(cache))
    return float(ratio), new_cache


def save_checkpoint(params, path):
    """Write parameters as JSON (``.json``) or little-endian binary (anything else)."""
    path = Path(path)
    if path.suffix == ".json":
        doc = {
            "format_version": FORMAT_VERSION,
            "layout": LAYOUT,
            "n": params.n,
            "n_hidden": params.n_hidden,
            "theta": [float(x) for x in params.theta],
        }
        path.write_text(json.dumps(doc) + "\n")
    else:
        header = _HEADER.pack(_MAGIC, FORMAT_VERSION, params.n, params.n_hidden, params.d)
        path.write_bytes(header + params.theta.astype("<f8").tobytes())


def load_checkpoint(path):
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        if doc.get("layout") != LAYOUT or doc.get("format_version") != FORMAT_VERSION:
            raise InvalidArgumentError(f"{path}: unsupported checkpoint layout/version")
        return RbmParams(int(doc["n"]), np.asarray(doc["theta"]), int(doc["n_hidden"]))
    raw = path.read_bytes()
    magic, version, n, h, d = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != FORMAT_VERSION:
        raise InvalidArgumentError(f"{path}: not an RBM checkpoint")
    theta = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if theta.size != d:
        raise InvalidArgumentError(f"{path}: truncated checkpoint")
    return RbmParams(n, theta.astype(np.float64), h)
