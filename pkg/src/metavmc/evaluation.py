"""Max-Cut reference values: exhaustive search and a low-rank SDP relaxation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import generator
from .errors import CapacityError, InvalidArgumentError
from .ising import MaxCutTask, all_spin_configs, cut_value

MAX_BRUTE_FORCE_N = 26


@dataclass(frozen=True)
class CutCertificate:
    best_cut: int
    argmax_config: np.ndarray
    method: str = "brute-force"


@dataclass(frozen=True)
class SdpBound:
    value: float
    rank: int
    residual_grad_norm: float
    converged: bool = True
    iterations: int = 0


def _half_energies(J, S):
    return 0.5 * np.einsum("ki,ij,kj->k", S, J, S)


def brute_force_maxcut(task):
    """Exact Max-Cut by enumerating the 2**(n-1) partitions with spin 0 fixed to +1.

    The enumeration is split into two halves so that cross terms reduce to one
    matrix product per block: E(lo, hi) = E_lo + E_hi + s_lo^T J_lh s_hi.
    """
    if not isinstance(task, MaxCutTask):
        raise InvalidArgumentError("brute_force_maxcut needs a Max-Cut task")
    n = task.n
    if n > MAX_BRUTE_FORCE_N:
        raise CapacityError(f"brute force limited to n <= {MAX_BRUTE_FORCE_N}, got n={n}")
    if task.edge_count == 0:
        return CutCertificate(0, np.ones(n))
    J = task.J
    k = min(n, 13)
    S_lo = all_spin_configs(k)
    S_lo = S_lo[S_lo[:, 0] == 1.0]  # fix the first spin
    e_lo = _half_energies(J[:k, :k], S_lo)
    best_e, best_s = np.inf, None
    m = n - k
    if m == 0:
        i = int(np.argmin(e_lo))
        best_e, best_s = e_lo[i], S_lo[i]
    else:
        J_hh, J_lh = J[k:, k:], J[:k, k:]
        block = 1 << min(m, 12)
        for start in range(0, 1 << m, block):
            labels = np.arange(start, start + block)
            S_hi = 1.0 - 2.0 * ((labels[:, None] >> np.arange(m)) & 1)
            E = e_lo[:, None] + _half_energies(J_hh, S_hi)[None, :] + S_lo @ J_lh @ S_hi.T
            i, j = np.unravel_index(np.argmin(E), E.shape)
            if E[i, j] < best_e:
                best_e, best_s = E[i, j], np.concatenate([S_lo[i], S_hi[j]])
    cert = CutCertificate(cut_value(task, best_s), best_s)
    assert cert.best_cut == (task.edge_count - int(round(best_e))) // 2
    return cert


def _sdp_objective(J, V, half_edges):
    return half_edges - 0.25 * np.sum((J @ V) * V)


def _normalize_rows(V):
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def default_rank(n):
    return math.ceil(math.sqrt(2 * n)) + 1


def sdp_relaxation_value(task, rank=None, iters=20000, tol=1e-7, seed=0, armijo=1e-4, history=None):
    """Burer-Monteiro value of the Max-Cut SDP relaxation.

    Maximises sum_{i<j} J_ij (1 - <v_i, v_j>) / 2 over unit vectors in R^rank by
    Riemannian gradient ascent on the product of spheres with Armijo
    backtracking.  Each trial step is the Barzilai-Borwein step of the last two
    iterates, floored at the inverse of a degree-based Lipschitz estimate;
    without it convergence is sublinear on graphs whose relaxation is tight.
    On non-convergence the best value is returned with
    ``converged=False``.  Accepted objective values are appended to ``history``
    when a list is given.
    """
    if not isinstance(task, MaxCutTask):
        raise InvalidArgumentError("sdp_relaxation_value needs a Max-Cut task")
    n = task.n
    rank = default_rank(n) if rank is None else int(rank)
    if rank < 1:
        raise InvalidArgumentError("rank must be positive")
    J = task.J
    if task.edge_count == 0:
        return SdpBound(0.0, rank, 0.0, True, 0)
    half_edges = task.edge_count / 2.0
    rng = generator(seed)
    V = _normalize_rows(rng.standard_normal((n, rank)))
    f = _sdp_objective(J, V, half_edges)
    if history is not None:
        history.append(float(f))
    step0 = 1.0 / max(1.0, J.sum(axis=1).max())
    gnorm = np.inf
    prev = None
    for it in range(1, iters + 1):
        G = -0.5 * J @ V
        R = G - np.sum(G * V, axis=1, keepdims=True) * V
        gnorm = float(np.linalg.norm(R))
        if gnorm < tol:
            return SdpBound(float(f), rank, gnorm, True, it)
        eta = step0
        if prev is not None:
            dV, dR = V - prev[0], R - prev[1]
            curv = abs(np.sum(dV * dR))
            if curv > 0:
                eta = max(step0, np.sum(dV * dV) / curv)
        prev = (V, R)
        while True:
            V_new = _normalize_rows(V + eta * R)
            f_new = _sdp_objective(J, V_new, half_edges)
            if f_new >= f + armijo * eta * gnorm**2:
                break
            eta *= 0.5
            if eta < 1e-12:
                # no representable ascent left; stationary up to rounding
                return SdpBound(float(f), rank, gnorm, gnorm < 1e-5, it)
        V, f = V_new, f_new
        if history is not None:
            history.append(float(f))
    return SdpBound(float(f), rank, gnorm, gnorm < tol, iters)


def approximation_ratio(cut, denom):
    if not denom > 0:
        raise InvalidArgumentError(f"approximation ratio needs a positive denominator, got {denom}")
    return float(cut) / float(denom)


def reference_value(task, kind="auto", sdp_seed=0):
    """Denominator for approximation ratios; returns ``(kind_used, value)``."""
    if kind == "auto":
        kind = "exact" if task.n <= MAX_BRUTE_FORCE_N else "sdp"
    if kind == "exact":
        return "exact", float(brute_force_maxcut(task).best_cut)
    if kind == "sdp":
        return "sdp", sdp_relaxation_value(task, seed=sdp_seed).value
    raise InvalidArgumentError(f"unknown denominator kind {kind!r}")
