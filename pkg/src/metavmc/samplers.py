"""Sampling spin configurations from the Born distribution p(s) ~ psi(s)^2."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._rng import generator
from .errors import CapacityError, InvalidArgumentError
from .ising import all_spin_configs
from .rbm import log2cosh, log_amplitude

MAX_EXACT_N = 24
_CHUNK_BITS = 16


@dataclass(frozen=True)
class SampleBatch:
    configs: np.ndarray
    log_psi: np.ndarray
    source: str
    acceptance_rate: float = 1.0
    sweeps: int = 0

    def __len__(self):
        return self.configs.shape[0]


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 16
    burn_in_sweeps: int = 100
    sweeps_between_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise InvalidArgumentError("need at least one Markov chain")
        if self.burn_in_sweeps < 0 or self.sweeps_between_samples < 0:
            raise InvalidArgumentError("sweep counts must be non-negative")


@lru_cache(maxsize=4)
def _configs(n):
    out = all_spin_configs(n)
    out.setflags(write=False)
    return out


def _check_capacity(n):
    if n > MAX_EXACT_N:
        raise CapacityError(f"exact enumeration limited to n <= {MAX_EXACT_N}, got n={n}")


def _log_psi_fast(params, S, buf=None):
    # rbm.log_amplitude without validation, in place in ``buf`` when given
    phi = np.matmul(S, params.W, out=buf)
    phi += params.b
    # |phi_j| <= |b_j| + sum_i |W_ij| bounds every row without scanning phi
    if (np.abs(params.b) + np.abs(params.W).sum(axis=0)).max() < 300.0:
        np.cosh(phi, out=phi)
        np.log(phi, out=phi)
        return S @ params.a + phi @ np.ones(phi.shape[1]) + params.n_hidden * np.log(2.0)
    return S @ params.a + log2cosh(phi).sum(axis=1)


def all_log_amplitudes(params, n=None, buf=None):
    """log psi for every basis state, indexed by basis label."""
    n = params.n if n is None else n
    if n != params.n:
        raise InvalidArgumentError(f"parameter size {params.n} does not match n={n}")
    _check_capacity(n)
    if n <= _CHUNK_BITS:
        if buf is not None and buf.shape != (2**n, params.n_hidden):
            buf = None
        return _log_psi_fast(params, _configs(n), buf)
    low = _configs(_CHUNK_BITS)
    out = np.empty(2**n)
    step = 2**_CHUNK_BITS
    for hi in range(2 ** (n - _CHUNK_BITS)):
        high_bits = (hi >> np.arange(n - _CHUNK_BITS)) & 1
        S = np.hstack([low, np.broadcast_to(1.0 - 2.0 * high_bits, (step, n - _CHUNK_BITS))])
        out[hi * step : (hi + 1) * step] = _log_psi_fast(params, S)
    return out


def _normalise(log_psi):
    w = 2.0 * (log_psi - log_psi.max())
    p = np.exp(w)
    return p / p.sum()


def exact_distribution(params, n=None):
    """Born probabilities of all 2**n basis states (index = basis label)."""
    return _normalise(all_log_amplitudes(params, n))


def _spins_of(labels, n):
    return 1.0 - 2.0 * ((labels[:, None] >> np.arange(n)) & 1)


class ExactSampler:
    """I.i.d. sampling by inverse CDF over the enumerated Born table."""

    source = "exact"

    def __init__(self, n, seed=0):
        _check_capacity(n)
        self.n = n
        self.rng = generator(seed)
        self._buf = None

    def reset(self, seed):
        self.rng = generator(seed)

    def sample(self, params, M):
        if M < 1:
            raise InvalidArgumentError("batch size must be positive")
        if self.n <= _CHUNK_BITS and (self._buf is None or self._buf.shape[1] != params.n_hidden):
            self._buf = np.empty((2**self.n, params.n_hidden))
        log_psi = all_log_amplitudes(params, self.n, self._buf)
        cdf = np.cumsum(np.exp(2.0 * (log_psi - log_psi.max())))
        labels = np.searchsorted(cdf, self.rng.random(M) * cdf[-1], side="right")
        labels = np.minimum(labels, cdf.size - 1)
        return SampleBatch(_spins_of(labels, self.n), log_psi[labels], self.source)


class MetropolisSampler:
    """Independent single-spin-flip Metropolis chains, vectorised over chains.

    Chain states persist between calls to :meth:`sample` (warm restart); burn-in
    runs only on the first call after construction or :meth:`reset`.
    """

    source = "mcmc"

    def __init__(self, n, cfg=None):
        self.n = n
        self.cfg = cfg or McmcConfig()
        self.reset(self.cfg.seed)

    def reset(self, seed):
        self.rng = generator(seed)
        self.state = None

    def _sweep(self, params, s, phi, lc, sweeps):
        C, n = s.shape
        rows = np.arange(C)
        accepted = 0
        a, W = params.a, params.W
        for _ in range(sweeps * n):
            k = self.rng.integers(n, size=C)
            sk = s[rows, k]
            new_phi = phi - (2.0 * sk)[:, None] * W[k]
            new_lc = log2cosh(new_phi)
            delta = -2.0 * a[k] * sk + (new_lc - lc).sum(axis=1)
            acc = np.log(self.rng.random(C)) < 2.0 * delta
            if acc.any():
                s[rows[acc], k[acc]] = -sk[acc]
                phi[acc] = new_phi[acc]
                lc[acc] = new_lc[acc]
            accepted += int(acc.sum())
        return accepted

    def sample(self, params, M):
        C = self.cfg.n_chains
        if M < 1 or M % C:
            raise InvalidArgumentError(f"batch size {M} must be a positive multiple of n_chains={C}")
        if params.n != self.n:
            raise InvalidArgumentError(f"parameter size {params.n} does not match sampler n={self.n}")
        sweeps = 0
        if self.state is None:
            s = 1.0 - 2.0 * self.rng.integers(0, 2, size=(C, self.n))
        else:
            s = self.state
        phi = s @ params.W + params.b
        lc = log2cosh(phi)
        if self.state is None and self.cfg.burn_in_sweeps:
            self._sweep(params, s, phi, lc, self.cfg.burn_in_sweeps)
            sweeps += self.cfg.burn_in_sweeps
        rounds = M // C
        out = np.empty((rounds, C, self.n))
        accepted = proposals = 0
        for r in range(rounds):
            k = self.cfg.sweeps_between_samples
            accepted += self._sweep(params, s, phi, lc, k)
            proposals += k * self.n * C
            sweeps += k
            out[r] = s
        self.state = s
        configs = out.transpose(1, 0, 2).reshape(M, self.n)
        rate = accepted / proposals if proposals else 1.0
        return SampleBatch(configs, log_amplitude(params, configs), self.source, rate, sweeps)


def sample_exact(params, n, M, seed):
    return ExactSampler(n, seed).sample(params, M)


def sample_mcmc(params, task_n, M, cfg):
    return MetropolisSampler(task_n, cfg).sample(params, M)


def make_sampler(kind, n, seed, mcmc=None):
    if kind == "exact":
        return ExactSampler(n, seed)
    if kind == "mcmc":
        base = mcmc or McmcConfig()
        return MetropolisSampler(n, McmcConfig(base.n_chains, base.burn_in_sweeps, base.sweeps_between_samples, seed))
    raise InvalidArgumentError(f"unknown sampler kind {kind!r}")
