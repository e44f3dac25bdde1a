"""End-to-end experiment orchestration, run directories and curve emission.

Run directory layout::

    config.json                 resolved ExperimentConfig
    manifest.json               config, seeds, denominator policy, timings, status
    tasks/base_graph.txt        fixed base graph (edge list)
    tasks/distribution.json     task distribution
    tasks/test_XXX.txt          frozen evaluation tasks
    eval/denominators.csv       reference value per test task
    init/<algo>.json            initialisation handed to evaluation
    meta/<algo>_outer.csv       outer curve (plus .jsonl with wall times)
    meta/<algo>_ckpt/           parameters after every outer iteration
    curves/<algo>/task_XXX.csv  per-task learning curves (plus <algo>.jsonl)
    eval/<algo>_report.csv      final best cut and ratio per task
    emit/                       mean curves, combined long table, figures
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _rng
from .errors import ConfigError, MetaVmcError
from .evaluation import reference_value
from .ising import TaskDistribution, make_base_graph, read_edge_list, write_edge_list
from .meta import MetaState, _map, meta_descent, outer_train, pretrain_baseline, worker_count
from .quadratic import (
    QuadraticEnsemble, QuadraticObjective, QuadraticTask, closed_form_ml_optimum, meta_loss,
    quad_meta_gradient,
)
from .rbm import init_params, load_checkpoint, save_checkpoint
from .samplers import MAX_EXACT_N, McmcConfig, make_sampler
from .vmc import AdaptConfig, train_vmc

log = logging.getLogger(__name__)

ALL_ALGOS = ("maml", "fomaml", "mtl", "pretrain", "random")
CURVE_HEADER = ["iteration", "energy_mean", "energy_stderr", "best_cut", "approx_ratio"]


@dataclass
class ExperimentConfig:
    n: int = 50
    edge_prob: float = 0.5
    sigma: float = 0.5
    task_batch: int = 16
    outer_iters: int = 100
    alpha: float = 0.01
    t: int = 15
    beta: float = 0.01
    inner_batch: int = 128
    n_test: int = 32
    eval_iters: int = 300
    algos: list = field(default_factory=lambda: list(ALL_ALGOS))
    master_seed: int = 0
    base_graph_seed: int = 0
    sampler: str = "mcmc"
    denom: str = "auto"
    init_scale: float = 0.01
    pretrain_iters: int = 300
    n_hidden: int | None = None
    n_chains: int = 16
    burn_in_sweeps: int = 100
    sweeps_between_samples: int = 1

    def validate(self):
        positive = ("n", "task_batch", "outer_iters", "inner_batch", "n_test", "eval_iters", "n_chains")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigError("alpha and beta must be positive")
        if self.t < 0 or self.pretrain_iters < 0 or self.sigma < 0 or self.init_scale < 0:
            raise ConfigError("t, pretrain_iters, sigma and init_scale must be non-negative")
        if not 0 <= self.edge_prob <= 1:
            raise ConfigError("edge_prob must lie in [0, 1]")
        unknown = set(self.algos) - set(ALL_ALGOS)
        if unknown or not self.algos:
            raise ConfigError(f"algos must be a non-empty subset of {ALL_ALGOS}, got {self.algos}")
        if self.sampler not in ("exact", "mcmc"):
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        if self.sampler == "exact" and self.n > MAX_EXACT_N:
            raise ConfigError(f"exact sampler requires n <= {MAX_EXACT_N}")
        if self.sampler == "mcmc" and self.inner_batch % self.n_chains:
            raise ConfigError("inner_batch must be a multiple of n_chains")
        if self.denom not in ("exact", "sdp", "auto"):
            raise ConfigError(f"unknown denominator policy {self.denom!r}")
        if self.denom == "exact" and self.n > 26:
            raise ConfigError("exact denominators require n <= 26")
        return self

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        return dataclasses.asdict(self)

    @property
    def adapt(self):
        return AdaptConfig(self.beta, self.t, self.inner_batch)

    @property
    def mcmc(self):
        return McmcConfig(self.n_chains, self.burn_in_sweeps, self.sweeps_between_samples)

    def sampler_for(self, n, seed):
        return make_sampler(self.sampler, n, seed, self.mcmc)


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_jsonl(path, records):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def _git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             timeout=10, cwd=Path(__file__).parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


class RunDir:
    def __init__(self, root):
        self.root = Path(root)

    def path(self, *parts):
        return self.root.joinpath(*parts)

    def config(self):
        return ExperimentConfig.load(self.path("config.json")).validate()

    def manifest(self):
        p = self.path("manifest.json")
        return json.loads(p.read_text()) if p.exists() else {}

    def update_manifest(self, **fields):
        doc = self.manifest()
        doc.update(fields)
        self.path("manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    def test_tasks(self):
        files = sorted(self.path("tasks").glob("test_*.txt"))
        if not files:
            raise FileNotFoundError(f"{self.root}: no test tasks; run sample-tasks first")
        cfg = self.config()
        return [read_edge_list(f, sigma=cfg.sigma, task_seed=_rng.derive_seed(cfg.master_seed, _rng.TEST_TASKS, i))
                for i, f in enumerate(files)]

    def base_task(self):
        return read_edge_list(self.path("tasks", "base_graph.txt"))


def sample_tasks(cfg, out):
    """Fix the base graph, the distribution and the evaluation tasks; write denominators."""
    run = RunDir(out)
    run.root.mkdir(parents=True, exist_ok=True)
    run.path("config.json").write_text(json.dumps(cfg.to_dict(), indent=1) + "\n")
    run.path("tasks").mkdir(exist_ok=True)
    base = make_base_graph(cfg.n, cfg.edge_prob, cfg.base_graph_seed)
    dist = TaskDistribution(base.J, cfg.sigma, "perturbed-base")
    write_edge_list(base, run.path("tasks", "base_graph.txt"))
    dist.save(run.path("tasks", "distribution.json"))
    rows = []
    for i in range(cfg.n_test):
        seed = _rng.derive_seed(cfg.master_seed, _rng.TEST_TASKS, i)
        task = dist.sample(seed)
        write_edge_list(task, run.path("tasks", f"test_{i:03d}.txt"))
        kind, value = reference_value(task, cfg.denom, sdp_seed=seed)
        rows.append((i, task.n, task.edge_count, seed, kind, value))
    _write_csv(run.path("eval", "denominators.csv"),
               ["instance_id", "n", "edges", "task_seed", "denom_kind", "denom_value"], rows)
    run.update_manifest(
        package_version=__version__, git_describe=_git_describe(), config=cfg.to_dict(),
        base_graph_edges=base.edge_count,
        seeds={"master_seed": cfg.master_seed, "base_graph_seed": cfg.base_graph_seed,
               "test_task_seeds": [r[3] for r in rows]},
        denominator_policy=cfg.denom, denominator_kinds=sorted({r[4] for r in rows}),
        status="tasks-sampled",
    )
    return run


def _raw_init(cfg):
    return init_params(cfg.n, cfg.init_scale, _rng.derive_seed(cfg.master_seed, _rng.INIT), cfg.n_hidden)


def meta_train(run, workers=None):
    """Produce the initialisation of every configured algorithm."""
    cfg = run.config()
    dist = TaskDistribution.load(run.path("tasks", "distribution.json"))
    theta0 = _raw_init(cfg)
    timings = {}
    for algo in cfg.algos:
        start = time.perf_counter()
        if algo == "random":
            params = theta0
        elif algo == "pretrain":
            sampler = cfg.sampler_for(cfg.n, _rng.derive_seed(cfg.master_seed, _rng.PRETRAIN))
            params = pretrain_baseline(run.base_task(), theta0, cfg.pretrain_iters, cfg.adapt, sampler)
        else:
            ckpt = run.path("meta", f"{algo}_ckpt")
            ckpt.mkdir(parents=True, exist_ok=True)

            def save(rec, state, ckpt=ckpt):
                save_checkpoint(theta0.with_theta(state.theta), ckpt / f"iter_{rec.iteration + 1:04d}.bin")

            state = MetaState(theta0.theta, 0, cfg.alpha, cfg.task_batch, cfg.master_seed)
            state, records = outer_train(dist, algo, state, cfg.outer_iters, cfg.adapt, cfg.sampler, cfg.mcmc,
                                         cfg.n_hidden, workers, on_iter=save)
            params = theta0.with_theta(state.theta)
            _write_csv(run.path("meta", f"{algo}_outer.csv"),
                       ["iter", "mean_post_adapt_energy", "grad_norm"],
                       [(r.iteration, r.mean_post_adapt_energy, r.grad_norm) for r in records])
            _write_jsonl(run.path("meta", f"{algo}_outer.jsonl"), [dataclasses.asdict(r) for r in records])
        run.path("init").mkdir(exist_ok=True)
        save_checkpoint(params, run.path("init", f"{algo}.json"))
        timings[algo] = time.perf_counter() - start
        log.info("initialisation %s done in %.1fs", algo, timings[algo])
    run.update_manifest(meta_train_seconds=timings, status="meta-trained")
    return run


def _eval_job(args):
    task, params, iters, cfg, seed, denom = args
    sampler = cfg.sampler_for(task.n, seed)
    return train_vmc(task, params, iters, cfg.adapt, sampler, denom)


def evaluate(run, workers=None):
    """Fine-tune every initialisation on every frozen test task with plain VMC."""
    cfg = run.config()
    workers = worker_count() if workers is None else workers
    tasks = run.test_tasks()
    denoms = _read_csv(run.path("eval", "denominators.csv"))
    timings = {}
    for algo in cfg.algos:
        start = time.perf_counter()
        params = load_checkpoint(run.path("init", f"{algo}.json"))
        jobs = [(task, params, cfg.eval_iters, cfg,
                 _rng.derive_seed(cfg.master_seed, _rng.EVAL_CHAINS, i), float(denoms[i]["denom_value"]))
                for i, task in enumerate(tasks)]
        curves = _map(_eval_job, jobs, workers)
        report, diag = [], []
        for i, curve in enumerate(curves):
            _write_csv(run.path("curves", algo, f"task_{i:03d}.csv"), CURVE_HEADER,
                       [(k, e, s, int(b), r) for k, e, s, b, r in curve.rows()])
            denom = float(denoms[i]["denom_value"])
            best = int(curve.best_cut[-1])
            report.append((i, tasks[i].n, best, denoms[i]["denom_kind"], denom, best / denom if denom > 0 else np.nan))
            diag.append({"instance_id": i, "acceptance_rate": curve.acceptance.tolist(),
                         "final_energy": float(curve.energy_mean[-1])})
        _write_csv(run.path("eval", f"{algo}_report.csv"),
                   ["instance_id", "n", "best_cut", "denom_kind", "denom_value", "ratio"], report)
        _write_jsonl(run.path("curves", f"{algo}.jsonl"), diag)
        timings[algo] = time.perf_counter() - start
        log.info("evaluation %s done in %.1fs", algo, timings[algo])
    run.update_manifest(evaluate_seconds=timings, status="evaluated")
    return run


def load_curves(run, algo):
    files = sorted(run.path("curves", algo).glob("task_*.csv"))
    if not files:
        raise FileNotFoundError(f"{run.root}: no curves for {algo}")
    cols = {k: [] for k in CURVE_HEADER[1:]}
    for f in files:
        rows = _read_csv(f)
        for k in cols:
            cols[k].append([float(r[k]) for r in rows])
    return {k: np.array(v) for k, v in cols.items()}


def mean_curve(curves, key="approx_ratio"):
    x = curves[key]
    m = x.shape[0]
    se = x.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros(x.shape[1])
    return x.mean(axis=0), se


MEAN_HEADER = ["iteration", "mean_ratio", "stderr_ratio", "mean_energy", "stderr_energy", "mean_best_cut",
               "stderr_best_cut", "n_tasks"]


def emit_curves(run, figures=True):
    """Write mean curves per algorithm, a combined long-format table, and figures."""
    cfg = run.config()
    out = run.path("emit")
    combined, means = [], {}
    for algo in cfg.algos:
        curves = load_curves(run, algo)
        r, rse = mean_curve(curves, "approx_ratio")
        e, ese = mean_curve(curves, "energy_mean")
        b, bse = mean_curve(curves, "best_cut")
        m = curves["approx_ratio"].shape[0]
        rows = [(i, r[i], rse[i], e[i], ese[i], b[i], bse[i], m) for i in range(r.size)]
        _write_csv(out / f"{algo}_mean.csv", MEAN_HEADER, rows)
        combined.extend((algo,) + row for row in rows)
        means[algo] = (r, rse)
    _write_csv(out / "combined.csv", ["algo"] + MEAN_HEADER, combined)
    written = [str(out / "combined.csv")]
    if figures:
        from .plotting import plot_learning_curves, plot_outer_curves

        title = f"n={cfg.n}, sigma={cfg.sigma}, {cfg.n_test} test tasks"
        written.append(str(plot_learning_curves(means, out / "figures" / "learning_curves.png", title=title)))
        outer = {}
        for algo in cfg.algos:
            p = run.path("meta", f"{algo}_outer.csv")
            if p.exists():
                outer[algo] = np.array([float(row["mean_post_adapt_energy"]) for row in _read_csv(p)])
        if outer:
            written.append(str(plot_outer_curves(outer, out / "figures" / "outer_curves.png", title=title)))
    return written


def run_experiment(cfg, out, workers=None, figures=True):
    cfg.validate()
    start = time.perf_counter()
    run = RunDir(out)
    try:
        sample_tasks(cfg, out)
        meta_train(run, workers)
        evaluate(run, workers)
        emit_curves(run, figures=figures)
    except MetaVmcError as exc:
        run.update_manifest(status="failed", error={"type": type(exc).__name__, "message": str(exc)})
        raise
    run.update_manifest(status="complete", wall_seconds=time.perf_counter() - start)
    return run


@dataclass
class Check:
    name: str
    passed: bool
    error: float
    tolerance: float


def _two_point():
    return QuadraticEnsemble.uniform([QuadraticTask([[1.0]], [1.0]), QuadraticTask([[2.0]], [1.0])])


def default_quadratic_ensemble():
    """Three-point SPD ensemble in d=3 used when no ensemble file is given."""
    rng = np.random.default_rng(20200611)
    tasks = []
    for _ in range(3):
        Q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
        A = Q @ np.diag(rng.uniform(0.5, 3.0, 3)) @ Q.T
        tasks.append(QuadraticTask((A + A.T) / 2, rng.standard_normal(3)))
    return QuadraticEnsemble(tasks, np.array([0.5, 0.3, 0.2]))


def generic_meta_descent(ens, beta, t=1, theta0=None, tol=1e-12, max_steps=10000):
    """Outer gradient descent with the generic MAML code on exact quadratic objectives.

    The step is the inverse of the largest curvature of the meta objective.
    """
    eye = np.eye(ens.d)
    H = ens.mean(lambda q: q.A @ np.linalg.matrix_power(eye - beta * q.A, 2 * t))
    alpha = 1.0 / np.linalg.eigvalsh(H).max()
    theta0 = np.zeros(ens.d) if theta0 is None else theta0
    objectives = [QuadraticObjective(q) for q in ens.tasks]
    return meta_descent(objectives, ens.probs, theta0, alpha, beta, t, max_steps, "maml", tol)


def run_quadratic_suite(spec_path=None):
    """Closed-form checks of the quadratic meta-learning oracle; returns a list of :class:`Check`."""
    checks = []

    def add(name, err, tol):
        checks.append(Check(name, bool(err < tol), float(err), tol))

    two = _two_point()
    add("two-point closed form, beta=0.25 -> 13/17", abs(closed_form_ml_optimum(two, 0.25)[0] - 13 / 17), 1e-12)
    add("two-point closed form, beta=0 -> 2/3", abs(closed_form_ml_optimum(two, 0.0)[0] - 2 / 3), 1e-12)
    add("two-point generic MAML descent, beta=0.25 -> 13/17", abs(generic_meta_descent(two, 0.25)[0] - 13 / 17), 1e-6)
    add("two-point generic MAML descent, beta=0 -> 2/3", abs(generic_meta_descent(two, 0.0)[0] - 2 / 3), 1e-6)
    det = QuadraticEnsemble.uniform([QuadraticTask([[3.0]], [2.0])])
    add("deterministic ensemble is beta-independent (b/a)",
        max(abs(closed_form_ml_optimum(det, b)[0] - 2 / 3) for b in (0.0, 0.05, 0.1, 0.2)), 1e-12)

    if spec_path is not None:
        data = json.loads(Path(spec_path).read_text())
        ens = QuadraticEnsemble.from_json(data)
        beta = float(data.get("beta", 0.1))
    else:
        ens, beta = default_quadratic_ensemble(), 0.1
    star = closed_form_ml_optimum(ens, beta)
    theta = generic_meta_descent(ens, beta)
    add(f"d={ens.d} generic MAML descent reaches closed-form optimum", np.linalg.norm(theta - star), 1e-6)
    add(f"d={ens.d} exact meta-gradient vanishes at optimum", np.linalg.norm(quad_meta_gradient(ens, star, beta, 1)), 1e-10)
    rng = np.random.default_rng(7)
    x = rng.standard_normal(ens.d)
    for t in (1, 3):
        g = quad_meta_gradient(ens, x, beta, t)
        eps = 1e-5
        fd = np.array([(meta_loss(ens, x + eps * e, beta, t) - meta_loss(ens, x - eps * e, beta, t)) / (2 * eps)
                       for e in np.eye(ens.d)])
        add(f"d={ens.d} meta-gradient vs finite differences, t={t}", np.linalg.norm(g - fd) / np.linalg.norm(g), 1e-6)
    return checks
