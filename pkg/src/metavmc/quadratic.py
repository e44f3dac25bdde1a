"""Quadratic toy ensemble L(theta) = 1/2 <theta, A theta> - <b, theta>.

Expectations are taken over a finite support, so every quantity here is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateEnsembleError, InvalidArgumentError

SPD_TOL = 1e-10


@dataclass(frozen=True)
class QuadraticTask:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        if A.shape != (b.size, b.size):
            raise InvalidArgumentError(f"A has shape {A.shape} but b has length {b.size}")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12):
            raise InvalidArgumentError("A must be symmetric")
        if np.linalg.eigvalsh(A).min() <= SPD_TOL:
            raise InvalidArgumentError("A must be positive definite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def d(self):
        return self.b.size


@dataclass(frozen=True)
class QuadraticEnsemble:
    tasks: tuple
    probs: np.ndarray

    def __post_init__(self):
        tasks = tuple(self.tasks)
        p = np.asarray(self.probs, dtype=np.float64)
        if not tasks or p.shape != (len(tasks),):
            raise InvalidArgumentError("need one probability per task")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("probabilities must be non-negative and sum to 1")
        if len({t.d for t in tasks}) != 1:
            raise InvalidArgumentError("all tasks must share the same dimension")
        object.__setattr__(self, "tasks", tasks)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, tasks):
        tasks = list(tasks)
        return cls(tasks, np.full(len(tasks), 1.0 / len(tasks)))

    @property
    def d(self):
        return self.tasks[0].d

    def mean(self, f):
        return sum(p * f(task) for task, p in zip(self.tasks, self.probs))

    def to_json(self):
        return {
            "tasks": [{"A": t.A.tolist(), "b": t.b.tolist()} for t in self.tasks],
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_json(cls, data):
        tasks = [QuadraticTask(np.asarray(t["A"]), np.asarray(t["b"])) for t in data["tasks"]]
        probs = data.get("probs")
        return cls.uniform(tasks) if probs is None else cls(tasks, np.asarray(probs))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def _vec(task, theta):
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if theta.shape != (task.d,):
        raise InvalidArgumentError(f"theta has shape {theta.shape}, expected ({task.d},)")
    return theta


def quad_loss(task, theta):
    theta = _vec(task, theta)
    return float(0.5 * theta @ task.A @ theta - task.b @ theta)


def quad_grad(task, theta):
    return task.A @ _vec(task, theta) - task.b


def gd_step(task, theta, beta):
    return theta - beta * quad_grad(task, theta)


def closed_form_ml_optimum(ens, beta):
    """Minimiser of the one-step meta objective E[L(theta - beta grad L(theta))].

    Equals E[A (I - beta A)^2]^{-1} E[(I - beta A)^2 b].
    """
    eye = np.eye(ens.d)
    lhs = ens.mean(lambda t: t.A @ (eye - beta * t.A) @ (eye - beta * t.A))
    rhs = ens.mean(lambda t: (eye - beta * t.A) @ (eye - beta * t.A) @ t.b)
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > 1e14:
        raise DegenerateEnsembleError(f"E[A(I - beta A)^2] is singular (cond={cond:.3g})", cond)
    return np.linalg.solve(lhs, rhs)


def meta_loss(ens, theta, beta, t):
    def one(task):
        th = np.array(theta, dtype=np.float64)
        for _ in range(t):
            th = gd_step(task, th, beta)
        return quad_loss(task, th)

    return float(ens.mean(one))


def quad_meta_gradient(ens, theta, beta, t):
    """Exact gradient of E[L(U^t(theta))] with U(theta) = (I - beta A) theta + beta b."""
    if t < 1:
        raise InvalidArgumentError("t must be at least 1")
    eye = np.eye(ens.d)

    def one(task):
        th = _vec(task, theta)
        for _ in range(t):
            th = gd_step(task, th, beta)
        jac = np.linalg.matrix_power(eye - beta * task.A, t)
        return jac @ (task.A @ th - task.b)

    return ens.mean(one)


class QuadraticObjective:
    """Deterministic objective adapter so the generic meta-gradient code runs on quadratics."""

    def __init__(self, task):
        self.task = task

    def draw(self, theta):
        return None

    def grad(self, theta, ctx):
        return quad_grad(self.task, theta)

    def hvp(self, theta, ctx, v):
        return self.task.A @ v

    def loss(self, theta, ctx):
        return quad_loss(self.task, theta)

    surrogate = loss
