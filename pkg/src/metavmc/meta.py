"""Outer-loop training of the initialisation: MAML, first-order MAML and multi-task.

The task-level code is generic over *objectives*: any object with

    draw(theta) -> ctx                 fresh stochastic context (or None)
    grad(theta, ctx) -> vector
    hvp(theta, ctx, v) -> vector       Hessian of the frozen-context surrogate
    loss(theta, ctx) -> float
    surrogate(theta, ctx) -> float     function whose gradient is grad(theta, ctx)

The MAML meta-gradient differentiates through the parameter updates only.
Sample batches, local energies and the baseline are frozen at their inner-loop
values, so the reverse pass is exact for the frozen-batch meta objective.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _rng
from .errors import InvalidArgumentError
from .ising import local_energy
from .rbm import log_amplitude, log_gradient, weighted_log_hessian_vector
from .samplers import make_sampler
from .vmc import AdaptConfig, VmcObjective, score_weights, train_vmc, unroll

log = logging.getLogger(__name__)

ALGOS = ("maml", "fomaml", "mtl")


@dataclass
class MetaState:
    theta: np.ndarray
    outer_step: int = 0
    alpha: float = 0.01
    task_batch: int = 16
    master_seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidArgumentError("alpha must be positive")
        if self.task_batch < 1:
            raise InvalidArgumentError("task_batch must be at least 1")
        self.theta = np.array(self.theta, dtype=np.float64, copy=True)


@dataclass
class MetaGradient:
    grad: np.ndarray
    per_task_post_adapt_energy: list = field(default_factory=list)


class SurrogateVmcObjective(VmcObjective):
    def surrogate(self, theta, ctx):
        return float(ctx.weights @ log_amplitude(self.params(theta), ctx.batch.configs))


def surrogate_hvp(task, params, batch, v):
    """Hessian-vector product of the frozen-weight surrogate at ``params``.

    The surrogate is ``sum_k w_k log psi(x_k)`` with centred local-energy
    weights ``w`` held fixed; its gradient is the VMC gradient estimate.
    """
    w = score_weights(local_energy(task, batch.configs))
    return weighted_log_hessian_vector(params, batch.configs, w, v)


def fd_surrogate_hvp(task, params, batch, v, eps=None):
    """Central-difference HVP of the frozen surrogate; cross-check for :func:`surrogate_hvp`."""
    v = np.asarray(v, dtype=np.float64)
    w = score_weights(local_energy(task, batch.configs))
    if eps is None:
        eps = 1e-4 * (1.0 + np.linalg.norm(params.theta))
    gp = w @ log_gradient(params.with_theta(params.theta + eps * v), batch.configs)
    gm = w @ log_gradient(params.with_theta(params.theta - eps * v), batch.configs)
    return (gp - gm) / (2.0 * eps)


def task_meta_gradient(objective, theta, beta, t, algo="maml"):
    """One task's contribution to the outer gradient and its post-adaptation loss.

    For ``mtl`` the adaptation is skipped; for ``fomaml`` the Jacobian of the
    unrolled updates is replaced by the identity; ``maml`` back-propagates the
    final gradient through the ``t`` updates with Hessian-vector products.
    """
    if algo not in ALGOS:
        raise InvalidArgumentError(f"unknown meta algorithm {algo!r}")
    steps = 0 if algo == "mtl" else t
    theta_t, trace = unroll(objective, theta, beta, steps, keep=(algo == "maml"))
    ctx = objective.draw(theta_t)
    v = objective.grad(theta_t, ctx)
    if algo == "maml":
        for step in reversed(trace):
            v = v - beta * objective.hvp(step.theta, step.ctx, v)
    return v, objective.loss(theta_t, ctx)


def frozen_unroll(objective, theta, contexts, beta):
    """Replay the adaptation with every stochastic context held fixed."""
    theta = np.array(theta, dtype=np.float64, copy=True)
    for ctx in contexts:
        theta = theta - beta * objective.grad(theta, ctx)
    return theta


def frozen_meta_objective(objective, theta, contexts, eval_ctx, beta):
    """theta -> surrogate(U_frozen^t(theta)); its gradient is the MAML estimate."""
    return objective.surrogate(frozen_unroll(objective, theta, contexts, beta), eval_ctx)


def maml_task_gradient(task, params, cfg, sampler):
    if cfg.t < 1:
        raise InvalidArgumentError("MAML needs at least one adaptation step")
    obj = SurrogateVmcObjective(task, sampler, cfg.inner_batch, params.n_hidden)
    g, e = task_meta_gradient(obj, params.theta, cfg.beta, cfg.t, "maml")
    return MetaGradient(g, [e])


def fomaml_task_gradient(task, params, cfg, sampler):
    obj = SurrogateVmcObjective(task, sampler, cfg.inner_batch, params.n_hidden)
    g, e = task_meta_gradient(obj, params.theta, cfg.beta, cfg.t, "fomaml")
    return MetaGradient(g, [e])


def expected_meta_gradient(objectives, weights, theta, beta, t, algo="maml"):
    """Weighted average of per-task contributions, reduced in index order."""
    grad = np.zeros_like(np.asarray(theta, dtype=np.float64))
    losses = []
    for obj, w in zip(objectives, weights):
        g, e = task_meta_gradient(obj, theta, beta, t, algo)
        grad += w * g
        losses.append(e)
    return MetaGradient(grad, losses)


def meta_descent(objectives, weights, theta0, alpha, beta, t, steps, algo="maml", tol=0.0):
    """Outer gradient descent over a fixed, weighted task set (e.g. a finite-support ensemble).

    Stops early once the outer gradient norm drops below ``tol``.
    """
    theta = np.array(theta0, dtype=np.float64, copy=True)
    for _ in range(steps):
        g = expected_meta_gradient(objectives, weights, theta, beta, t, algo).grad
        if np.linalg.norm(g) < tol:
            break
        theta = theta - alpha * g
    return theta


@dataclass(frozen=True)
class _TaskJob:
    dist: object
    task_seed: int
    sampler_seed: int
    sampler_kind: str
    mcmc: object
    n_hidden: int
    theta: np.ndarray
    cfg: AdaptConfig
    algo: str


def _run_job(job):
    task = job.dist.sample(job.task_seed)
    sampler = make_sampler(job.sampler_kind, task.n, job.sampler_seed, job.mcmc)
    obj = SurrogateVmcObjective(task, sampler, job.cfg.inner_batch, job.n_hidden)
    return task_meta_gradient(obj, job.theta, job.cfg.beta, job.cfg.t, job.algo)


def worker_count():
    try:
        return max(1, int(os.environ.get("METAVMC_WORKERS", "1")))
    except ValueError:
        return 1


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class OuterRecord:
    iteration: int
    mean_post_adapt_energy: float
    grad_norm: float
    wall_time: float


def outer_train(dist, algo, state, outer_iters, cfg, sampler_kind="exact", mcmc=None,
                n_hidden=None, workers=None, on_iter=None):
    """Run ``outer_iters`` outer SGD steps; returns the final state and per-step records.

    Each step samples ``state.task_batch`` tasks from ``dist``.  Task and chain
    seeds are derived from ``(master_seed, outer_step, task index)``.
    """
    if outer_iters < 1:
        raise InvalidArgumentError("outer_iters must be at least 1")
    if algo not in ALGOS:
        raise InvalidArgumentError(f"unknown meta algorithm {algo!r}")
    workers = worker_count() if workers is None else workers
    state = replace(state, theta=state.theta.copy())
    records = []
    start = time.perf_counter()
    for _ in range(outer_iters):
        k = state.outer_step
        jobs = [
            _TaskJob(
                dist,
                _rng.derive_seed(state.master_seed, _rng.TRAIN_TASKS, k, i),
                _rng.derive_seed(state.master_seed, _rng.META_CHAINS, k, i),
                sampler_kind, mcmc, n_hidden, state.theta, cfg, algo,
            )
            for i in range(state.task_batch)
        ]
        results = _map(_run_job, jobs, workers)
        grad = np.zeros_like(state.theta)
        for g, _ in results:
            grad += g
        grad /= len(results)
        state.theta = state.theta - state.alpha * grad
        state.outer_step += 1
        rec = OuterRecord(k, float(np.mean([e for _, e in results])), float(np.linalg.norm(grad)),
                          time.perf_counter() - start)
        records.append(rec)
        log.debug("outer %d (%s): energy %.4f |grad| %.4f", k, algo, rec.mean_post_adapt_energy, rec.grad_norm)
        if on_iter is not None:
            on_iter(rec, state)
    return state, records


def pretrain_baseline(base_task, params0, iters, cfg, sampler):
    """Plain VMC on the base graph; ``iters == 0`` returns ``params0``."""
    if iters == 0:
        return params0
    return train_vmc(base_task, params0, iters, cfg, sampler).final
