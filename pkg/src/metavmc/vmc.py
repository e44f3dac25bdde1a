"""Variational Monte Carlo: energy/gradient estimators and the SGD adaptation operator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .ising import MaxCutTask, cut_value, local_energy
from .rbm import RbmParams, log_gradient, weighted_log_hessian_vector
from .samplers import SampleBatch, _configs, _check_capacity, exact_distribution


@dataclass(frozen=True)
class EnergyEstimate:
    mean: float
    std_err: float
    M: int


@dataclass(frozen=True)
class AdaptConfig:
    beta: float = 0.01
    t: int = 15
    inner_batch: int = 128

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidArgumentError("beta must be positive")
        if self.t < 0:
            raise InvalidArgumentError("t must be non-negative")
        if self.inner_batch < 1:
            raise InvalidArgumentError("inner_batch must be positive")


def _batch_energies(task, batch):
    if len(batch) == 0:
        raise InvalidArgumentError("empty sample batch")
    return local_energy(task, batch.configs)


def estimate_energy(task, params, batch):
    e = _batch_energies(task, batch)
    M = e.size
    se = float(e.std(ddof=1) / np.sqrt(M)) if M > 1 else 0.0
    return EnergyEstimate(float(e.mean()), se, M)


def score_weights(energies):
    """Centred per-sample weights ``2 (E_k - mean E) / (M - 1)``.

    The ``M - 1`` normalisation makes the weighted score sum an unbiased
    estimate of the covariance form of the gradient despite the in-batch baseline.
    """
    e = np.asarray(energies, dtype=np.float64)
    M = e.size
    if M < 2:
        return np.zeros(M)
    return 2.0 * (e - e.mean()) / (M - 1)


def estimate_gradient(task, params, batch):
    w = score_weights(_batch_energies(task, batch))
    return w @ log_gradient(params, batch.configs)


def exact_energy(task, params):
    _check_capacity(task.n)
    p = exact_distribution(params, task.n)
    return float(p @ local_energy(task, _configs(task.n)))


def exact_gradient(task, params):
    """2 E_p[(E_loc - L) d log psi] by full enumeration."""
    _check_capacity(task.n)
    S = _configs(task.n)
    p = exact_distribution(params, task.n)
    e = local_energy(task, S)
    w = 2.0 * p * (e - p @ e)
    out = np.zeros(params.d)
    for lo in range(0, S.shape[0], 1 << 14):
        out += w[lo : lo + (1 << 14)] @ log_gradient(params, S[lo : lo + (1 << 14)])
    return out


def ground_energy(task):
    _check_capacity(task.n)
    return float(local_energy(task, _configs(task.n)).min())


@dataclass
class VmcContext:
    """One sampled batch at a fixed theta, with frozen local energies and weights."""

    batch: SampleBatch
    energies: np.ndarray
    weights: np.ndarray

    @property
    def estimate(self):
        M = self.energies.size
        se = float(self.energies.std(ddof=1) / np.sqrt(M)) if M > 1 else 0.0
        return EnergyEstimate(float(self.energies.mean()), se, M)


class VmcObjective:
    """Stochastic Rayleigh-quotient objective of one task over flat RBM parameters.

    Every call to :meth:`draw` consumes a fresh batch from ``sampler``.
    """

    def __init__(self, task, sampler, batch_size=128, n_hidden=None):
        if sampler.n != task.n:
            raise InvalidArgumentError("sampler and task sizes differ")
        self.task = task
        self.sampler = sampler
        self.batch_size = batch_size
        self.n_hidden = n_hidden

    def params(self, theta):
        return RbmParams(self.task.n, theta, self.n_hidden)

    def draw(self, theta):
        batch = self.sampler.sample(self.params(theta), self.batch_size)
        e = _batch_energies(self.task, batch)
        return VmcContext(batch, e, score_weights(e))

    def grad(self, theta, ctx):
        return ctx.weights @ log_gradient(self.params(theta), ctx.batch.configs)

    def hvp(self, theta, ctx, v):
        return weighted_log_hessian_vector(self.params(theta), ctx.batch.configs, ctx.weights, v)

    def loss(self, theta, ctx):
        return float(ctx.energies.mean())


@dataclass
class AdaptStep:
    theta: np.ndarray
    ctx: object
    grad: np.ndarray


def unroll(objective, theta, beta, t, hook=None, keep=True):
    """Apply ``theta <- theta - beta * grad`` ``t`` times, a fresh draw per step.

    Returns the final parameters and the list of steps (parameters, draw and
    gradient *before* each update).  ``hook(i, step)`` is called per step.
    """
    theta = np.array(theta, dtype=np.float64, copy=True)
    trace = []
    for i in range(t):
        ctx = objective.draw(theta)
        g = objective.grad(theta, ctx)
        step = AdaptStep(theta, ctx, g)
        if hook is not None:
            hook(i, step)
        if keep:
            trace.append(step)
        theta = theta - beta * g
    return theta, trace


def adapt(task, params, cfg, sampler):
    """t-fold SGD adaptation of ``params`` to ``task``.

    Returns the adapted :class:`RbmParams` and the trace of steps; each step's
    ``ctx.estimate`` is the energy estimate of the batch it used.
    """
    obj = VmcObjective(task, sampler, cfg.inner_batch, params.n_hidden)
    theta, trace = unroll(obj, params.theta, cfg.beta, cfg.t)
    return params.with_theta(theta), trace


@dataclass
class LearningCurve:
    energy_mean: np.ndarray
    energy_stderr: np.ndarray
    best_cut: np.ndarray
    approx_ratio: np.ndarray
    acceptance: np.ndarray
    final: RbmParams = field(repr=False, default=None)

    def __len__(self):
        return self.energy_mean.size

    def rows(self):
        for i in range(len(self)):
            yield i, self.energy_mean[i], self.energy_stderr[i], self.best_cut[i], self.approx_ratio[i]


def train_vmc(task, params0, iters, cfg, sampler, denom=None):
    """Plain VMC training for ``iters`` SGD steps, recording one curve point per step.

    The approximation ratio is the batch-mean cut ``(|E| - energy_mean) / 2``
    divided by ``denom``; it is NaN when no denominator is supplied.  Best-cut
    tracking checks every sampled configuration.
    """
    if iters < 1:
        raise InvalidArgumentError("iters must be at least 1")
    is_cut = isinstance(task, MaxCutTask)
    em, se, best, ratio, acc = (np.empty(iters) for _ in range(5))
    running = [-1]

    def record(i, step):
        est = step.ctx.estimate
        em[i], se[i] = est.mean, est.std_err
        acc[i] = step.ctx.batch.acceptance_rate
        if is_cut:
            running[0] = max(running[0], int(np.max(cut_value(task, step.ctx.batch.configs))))
            best[i] = running[0]
            mean_cut = (task.edge_count - est.mean) / 2.0
            ratio[i] = mean_cut / denom if denom else np.nan
        else:
            best[i] = ratio[i] = np.nan

    obj = VmcObjective(task, sampler, cfg.inner_batch, params0.n_hidden)
    theta, _ = unroll(obj, params0.theta, cfg.beta, iters, hook=record, keep=False)
    return LearningCurve(em, se, best, ratio, acc, params0.with_theta(theta))
