import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import graph, naive_energy
from metavmc.errors import InvalidArgumentError
from metavmc.ising import (
    MaxCutTask, SkTask, TaskDistribution, as_spins, bits_to_spins, cut_value, local_energy,
    make_base_graph, perturb_adjacency, read_edge_list, sample_sk_task, sample_task, spins_to_bits,
    write_edge_list,
)


def test_base_graph_extremes():
    assert np.all(make_base_graph(4, 0.0, 3).J == 0)
    full = make_base_graph(4, 1.0, 3).J
    assert np.array_equal(full, np.ones((4, 4)) - np.eye(4))


def test_base_graph_deterministic_and_valid():
    a = make_base_graph(50, 0.5, 11)
    b = make_base_graph(50, 0.5, 11)
    assert np.array_equal(a.J, b.J)
    assert not np.array_equal(a.J, make_base_graph(50, 0.5, 12).J)
    assert np.array_equal(a.J, a.J.T) and np.all(np.diag(a.J) == 0)
    # roughly half of the 1225 pairs are edges
    assert 500 < a.edge_count < 725


def test_base_graph_rejects_tiny():
    with pytest.raises(InvalidArgumentError):
        make_base_graph(1, 0.5, 0)


def test_zero_noise_returns_base():
    base = make_base_graph(12, 0.5, 1)
    dist = TaskDistribution(base.J, 0.0)
    assert np.array_equal(sample_task(dist, 99).J, base.J)


def test_threshold_rounding():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert perturb_adjacency(A, np.full((2, 2), -0.6))[0, 1] == 0.0
    assert perturb_adjacency(A, np.full((2, 2), -0.4))[0, 1] == 1.0
    # far outside [0, 1] still clamps to a 0/1 entry
    assert perturb_adjacency(A, np.full((2, 2), 5.0))[0, 1] == 1.0
    assert perturb_adjacency(A, np.full((2, 2), -5.0))[0, 1] == 0.0


def test_sample_task_changes_some_edges():
    base = make_base_graph(50, 0.5, 0)
    task = sample_task(TaskDistribution(base.J, 0.5), 7)
    diff = np.sum(task.J != base.J) // 2
    assert 0 < diff < 300
    assert task.sigma == 0.5 and task.task_seed == 7
    assert np.array_equal(task.J, sample_task(TaskDistribution(base.J, 0.5), 7).J)


@settings(max_examples=40, deadline=None)
@given(sigma=st.floats(0, 3), seed=st.integers(0, 2**63 - 1), n=st.integers(2, 12))
def test_sampled_tasks_are_valid(sigma, seed, n):
    base = make_base_graph(n, 0.5, 5)
    J = sample_task(TaskDistribution(base.J, sigma), seed).J
    assert np.array_equal(J, J.T)
    assert np.all(np.diag(J) == 0)
    assert np.all((J == 0) | (J == 1))


def test_sk_moments_and_determinism():
    N = 10_000
    vals = np.array([sample_sk_task(4, s).J[0, 1] for s in range(N)])
    assert abs(vals.mean()) < 5 / np.sqrt(N)
    # Var of the sample variance of N(0,1) is 2/(N-1)
    assert abs(vals.var(ddof=1) - 1) < 5 * np.sqrt(2 / (N - 1))
    assert np.array_equal(sample_sk_task(6, 3).J, sample_sk_task(6, 3).J)
    J = sample_sk_task(6, 3).J
    assert np.array_equal(J, J.T) and np.all(np.diag(J) == 0)


def test_sk_rejects_tiny():
    with pytest.raises(InvalidArgumentError):
        sample_sk_task(1, 0)


def test_sk_distribution_dispatch():
    dist = TaskDistribution.sk(5)
    task = dist.sample(4)
    assert isinstance(task, SkTask)
    assert np.array_equal(task.J, sample_sk_task(5, 4).J)


def test_local_energy_examples(k3):
    empty = MaxCutTask(np.zeros((4, 4)))
    assert local_energy(empty, [1, -1, 1, 1]) == 0
    assert local_energy(k3, [1, 1, 1]) == 3
    assert local_energy(k3, [1, 1, -1]) == -1


def test_local_energy_matches_naive_sum():
    rng = np.random.default_rng(0)
    for seed in range(10):
        task = make_base_graph(7, 0.5, seed)
        s = rng.choice([-1.0, 1.0], size=(5, 7))
        got = local_energy(task, s)
        want = [naive_energy(task.J, row) for row in s]
        assert np.array_equal(got, want)


def test_local_energy_dimension_mismatch(k3):
    with pytest.raises(InvalidArgumentError):
        local_energy(k3, [1, 1])
    with pytest.raises(InvalidArgumentError):
        local_energy(k3, [1, 0, 1])


def test_cut_value_examples(k3):
    assert cut_value(k3, [1, 1, -1]) == 2
    assert cut_value(k3, [-1, -1, -1]) == 0
    assert cut_value(graph(2, [(0, 1)]), [1, -1]) == 1


def test_cut_value_rejects_weighted():
    with pytest.raises(InvalidArgumentError):
        cut_value(sample_sk_task(3, 0), [1, 1, 1])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 10), data=st.data())
def test_cut_energy_identity_and_flip_symmetry(seed, n, data):
    task = make_base_graph(n, 0.5, seed)
    s = np.array(data.draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=n, max_size=n)))
    e = local_energy(task, s)
    assert local_energy(task, -s) == e
    assert 2 * cut_value(task, s) == task.edge_count - e


def test_spin_encoding_roundtrip():
    x = np.array([0, 1, 1, 0])
    s = bits_to_spins(x)
    assert np.array_equal(s, [1, -1, -1, 1])
    assert np.array_equal(spins_to_bits(s), x)
    with pytest.raises(InvalidArgumentError):
        as_spins([1, 0.5])


def test_invalid_tasks_rejected():
    with pytest.raises(InvalidArgumentError):
        MaxCutTask(np.array([[0, 1], [0, 0]]))
    with pytest.raises(InvalidArgumentError):
        MaxCutTask(np.eye(2))
    with pytest.raises(InvalidArgumentError):
        MaxCutTask(np.array([[0, 2], [2, 0]]))
    with pytest.raises(InvalidArgumentError):
        TaskDistribution(np.zeros((3, 3)), sigma=-1)


def test_edge_list_roundtrip(tmp_path):
    task = make_base_graph(9, 0.4, 2)
    path = tmp_path / "g.txt"
    write_edge_list(task, path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"9 {task.edge_count}"
    assert all(int(i) < int(j) for i, j in (ln.split() for ln in lines[1:]))
    assert np.array_equal(read_edge_list(path).J, task.J)


def test_edge_list_header_mismatch(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3 2\n0 1\n")
    with pytest.raises(InvalidArgumentError):
        read_edge_list(path)


def test_distribution_json_roundtrip(tmp_path):
    dist = TaskDistribution(make_base_graph(8, 0.5, 1).J, 0.3)
    dist.save(tmp_path / "d.json")
    back = TaskDistribution.load(tmp_path / "d.json")
    assert back.sigma == 0.3 and back.kind == "perturbed-base"
    assert np.array_equal(back.base_adjacency, dist.base_adjacency)
    assert np.array_equal(back.sample(5).J, dist.sample(5).J)
