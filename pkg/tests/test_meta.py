import time

import numpy as np
import pytest

from metavmc.errors import InvalidArgumentError
from metavmc.evaluation import brute_force_maxcut
from metavmc.ising import MaxCutTask, TaskDistribution, make_base_graph
from metavmc.meta import (
    MetaState, SurrogateVmcObjective, expected_meta_gradient, fd_surrogate_hvp, fomaml_task_gradient,
    frozen_meta_objective, maml_task_gradient, meta_descent, outer_train, pretrain_baseline, surrogate_hvp,
    task_meta_gradient,
)
from metavmc.quadratic import QuadraticEnsemble, QuadraticObjective, QuadraticTask, quad_meta_gradient
from metavmc.rbm import RbmParams, init_params, param_count
from metavmc.samplers import ExactSampler
from metavmc.vmc import AdaptConfig


def random_spd(rng, d):
    Q = np.linalg.qr(rng.standard_normal((d, d)))[0]
    return Q @ np.diag(rng.uniform(0.5, 3.0, d)) @ Q.T


def quad_ensemble(seed=0, d=3, k=3):
    rng = np.random.default_rng(seed)
    tasks = []
    for _ in range(k):
        A = random_spd(rng, d)
        tasks.append(QuadraticTask((A + A.T) / 2, rng.standard_normal(d)))
    return QuadraticEnsemble.uniform(tasks)


def batch_for(n=6, seed=0, M=64, scale=0.4):
    task = make_base_graph(n, 0.5, seed)
    params = RbmParams(n, scale * np.random.default_rng(seed).standard_normal(param_count(n)))
    return task, params, ExactSampler(n, seed).sample(params, M)


def test_surrogate_hvp_zero_vector():
    task, params, batch = batch_for()
    assert np.all(surrogate_hvp(task, params, batch, np.zeros(params.d)) == 0)


def test_surrogate_hvp_matches_finite_differences():
    rng = np.random.default_rng(1)
    for n in (3, 6, 8):
        task, params, batch = batch_for(n, n)
        v = rng.standard_normal(params.d)
        hv = surrogate_hvp(task, params, batch, v)
        fd = fd_surrogate_hvp(task, params, batch, v)
        assert np.linalg.norm(hv - fd) / np.linalg.norm(fd) < 1e-5


def test_surrogate_hessian_symmetric():
    rng = np.random.default_rng(2)
    task, params, batch = batch_for(7, 3)
    u, v = rng.standard_normal((2, params.d))
    lhs = u @ surrogate_hvp(task, params, batch, v)
    rhs = surrogate_hvp(task, params, batch, u) @ v
    assert abs(lhs - rhs) < 1e-8


def test_zero_beta_maml_equals_plain_gradient():
    task = make_base_graph(6, 0.5, 1)
    params = init_params(6, 0.3, 1)
    obj = lambda: SurrogateVmcObjective(task, ExactSampler(6, 5), 32)
    g_maml, _ = task_meta_gradient(obj(), params.theta, 0.0, 4, "maml")
    # four discarded draws precede the evaluation draw in the MAML call
    o = obj()
    for _ in range(4):
        o.draw(params.theta)
    ctx = o.draw(params.theta)
    assert np.allclose(g_maml, o.grad(params.theta, ctx), atol=1e-14)


def test_t_zero_algorithms_coincide():
    task = make_base_graph(6, 0.5, 2)
    params = init_params(6, 0.3, 2)
    grads = [task_meta_gradient(SurrogateVmcObjective(task, ExactSampler(6, 9), 32), params.theta, 0.01, 0, a)[0]
             for a in ("maml", "fomaml", "mtl")]
    assert np.array_equal(grads[0], grads[1]) and np.array_equal(grads[0], grads[2])


def test_empty_graph_contributes_nothing():
    task = MaxCutTask(np.zeros((5, 5)))
    params = init_params(5, 0.3, 0)
    cfg = AdaptConfig(0.01, 3, 16)
    assert np.all(maml_task_gradient(task, params, cfg, ExactSampler(5, 0)).grad == 0)
    assert np.all(fomaml_task_gradient(task, params, cfg, ExactSampler(5, 0)).grad == 0)


def test_maml_requires_adaptation():
    with pytest.raises(InvalidArgumentError):
        maml_task_gradient(make_base_graph(4, 0.5, 0), init_params(4), AdaptConfig(t=0), ExactSampler(4, 0))
    with pytest.raises(InvalidArgumentError):
        task_meta_gradient(QuadraticObjective(QuadraticTask([[1.0]], [0.0])), np.zeros(1), 0.1, 1, "reptile")


@pytest.mark.parametrize("t", [1, 3, 6])
def test_generic_maml_matches_quadratic_closed_form(t):
    ens = quad_ensemble(3)
    x = np.random.default_rng(4).standard_normal(3)
    g = expected_meta_gradient([QuadraticObjective(q) for q in ens.tasks], ens.probs, x, 0.1, t, "maml").grad
    assert np.allclose(g, quad_meta_gradient(ens, x, 0.1, t), rtol=0, atol=1e-8)


def test_fomaml_and_maml_point_the_same_way():
    for seed in range(20):
        ens = quad_ensemble(seed, d=4, k=1)
        A = ens.tasks[0].A
        beta = 0.95 / np.linalg.eigvalsh(A).max()
        obj = QuadraticObjective(ens.tasks[0])
        x = np.random.default_rng(seed).standard_normal(4)
        g_ml = task_meta_gradient(obj, x, beta, 5, "maml")[0]
        g_fo = task_meta_gradient(obj, x, beta, 5, "fomaml")[0]
        assert g_ml @ g_fo > 0


def test_fomaml_is_cheaper_than_maml():
    task = make_base_graph(10, 0.5, 0)
    params = init_params(10, 0.1, 0)
    cfg = AdaptConfig(0.01, 15, 128)

    def cost(fn):
        best = np.inf
        for _ in range(3):
            start = time.process_time()
            fn(task, params, cfg, ExactSampler(10, 0))
            best = min(best, time.process_time() - start)
        return best

    assert cost(fomaml_task_gradient) < cost(maml_task_gradient)


def test_reverse_pass_matches_frozen_finite_differences():
    n, t, beta = 6, 3, 0.05
    task = make_base_graph(n, 0.6, 4)
    params = init_params(n, 0.3, 4)
    obj = SurrogateVmcObjective(task, ExactSampler(n, 7), 64)
    theta = params.theta
    # record the same draws the MAML call uses
    from metavmc.vmc import unroll

    rec = SurrogateVmcObjective(task, ExactSampler(n, 7), 64)
    theta_t, trace = unroll(rec, theta, beta, t)
    eval_ctx = rec.draw(theta_t)
    g, _ = task_meta_gradient(obj, theta, beta, t, "maml")
    ctxs = [s.ctx for s in trace]
    h = 1e-5
    fd = np.array([
        (frozen_meta_objective(rec, theta + h * e, ctxs, eval_ctx, beta)
         - frozen_meta_objective(rec, theta - h * e, ctxs, eval_ctx, beta)) / (2 * h)
        for e in np.eye(theta.size)
    ])
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-4


def test_meta_descent_reproduces_quadratic_trajectory():
    ens = quad_ensemble(5)
    objectives = [QuadraticObjective(q) for q in ens.tasks]
    x_generic = np.zeros(3)
    x_exact = np.zeros(3)
    for _ in range(50):
        x_generic = meta_descent(objectives, ens.probs, x_generic, 0.05, 0.1, 2, 1)
        x_exact = x_exact - 0.05 * quad_meta_gradient(ens, x_exact, 0.1, 2)
        assert np.allclose(x_generic, x_exact, rtol=0, atol=1e-8)


def small_dist(n=6, sigma=0.5):
    return TaskDistribution(make_base_graph(n, 0.5, 0).J, sigma)


@pytest.mark.parametrize("algo", ["maml", "fomaml", "mtl"])
def test_outer_train_deterministic(algo):
    dist = small_dist()
    cfg = AdaptConfig(0.02, 2, 16)
    state = MetaState(init_params(6, 0.1, 0).theta, alpha=0.05, task_batch=3, master_seed=11)
    s1, r1 = outer_train(dist, algo, state, 3, cfg, "exact")
    s2, r2 = outer_train(dist, algo, state, 3, cfg, "exact")
    assert np.array_equal(s1.theta, s2.theta)
    assert [r.mean_post_adapt_energy for r in r1] == [r.mean_post_adapt_energy for r in r2]
    assert s1.outer_step == 3 and state.outer_step == 0
    assert not np.array_equal(s1.theta, state.theta)


def test_outer_train_parallel_matches_serial():
    dist = small_dist()
    cfg = AdaptConfig(0.02, 2, 16)
    state = MetaState(init_params(6, 0.1, 0).theta, alpha=0.05, task_batch=4, master_seed=3)
    serial, _ = outer_train(dist, "maml", state, 2, cfg, "exact", workers=1)
    parallel, _ = outer_train(dist, "maml", state, 2, cfg, "exact", workers=2)
    assert np.array_equal(serial.theta, parallel.theta)


def test_outer_train_mcmc_runs():
    dist = small_dist(8)
    state = MetaState(init_params(8, 0.01, 0).theta, task_batch=2)
    s, records = outer_train(dist, "fomaml", state, 2, AdaptConfig(0.01, 2, 32), "mcmc")
    assert len(records) == 2 and np.all(np.isfinite(s.theta))


def test_meta_state_validation():
    with pytest.raises(InvalidArgumentError):
        MetaState(np.zeros(3), alpha=0.0)
    with pytest.raises(InvalidArgumentError):
        MetaState(np.zeros(3), task_batch=0)
    with pytest.raises(InvalidArgumentError):
        outer_train(small_dist(), "maml", MetaState(np.zeros(param_count(6))), 0, AdaptConfig())


def test_pretrain_zero_iters_is_identity():
    p0 = init_params(6, 0.01, 0)
    assert pretrain_baseline(make_base_graph(6, 0.5, 0), p0, 0, AdaptConfig(), ExactSampler(6, 0)) is p0


@pytest.mark.slow
def test_pretrain_is_near_optimal_on_base_graph():
    from metavmc.vmc import exact_energy

    base = make_base_graph(12, 0.5, 0)
    p = pretrain_baseline(base, init_params(12, 0.01, 0), 300, AdaptConfig(), ExactSampler(12, 0))
    mean_cut = (base.edge_count - exact_energy(base, p)) / 2
    assert mean_cut >= 0.95 * brute_force_maxcut(base).best_cut
