import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grplan.data import (
    DatasetConfig,
    DatasetError,
    ExpertFailureError,
    TspSample,
    assemble_dataset,
    bootstrap_pairs,
    collect_trajectories,
    collect_tsp_trajectories,
    derive_seed,
    read_dataset,
    sample_pairs,
    sokoban_trajectory,
    tsp_samples,
    write_dataset,
)
from grplan.search import SearchResult
from grplan.sokoban import expert_solve, generate_level, goal_observation, parse_level, render_observation
from grplan.tsp import generate_complete_graph


@pytest.fixture(scope="module")
def trajectory():
    p = generate_level((7, 7), 1, 11)
    return sokoban_trajectory(p, expert_solve(p).plan)


def test_trajectory_states_follow_plan(trajectory):
    assert len(trajectory.states) == len(trajectory.actions) + 1
    assert trajectory.states[-1].objects == trajectory.problem.goals


def test_bootstrap_counts_and_labels(trajectory):
    T = len(trajectory.states)
    samples = bootstrap_pairs(trajectory, DatasetConfig(seed=0))
    assert len(samples) == (T - 1) + T
    originals, boots = samples[:T - 1], samples[T - 1:]
    goal = goal_observation(trajectory.problem)
    for i, s in enumerate(originals):
        assert s.action_label == trajectory.actions[i]
        assert s.plan_length_label == T - 1 - i
        np.testing.assert_array_equal(s.goal_obs, goal)  # no agent in the real goal
    for s in boots:
        assert s.goal_obs[1].sum() == 1  # intermediate goals include the agent
        assert 1 <= s.plan_length_label <= T - 1


def test_bootstrap_pairs_are_consistent_with_the_trajectory(trajectory):
    obs = [render_observation(trajectory.problem, st_) for st_ in trajectory.states]
    T = len(obs)
    for s in bootstrap_pairs(trajectory, DatasetConfig(n_bootstrap=50, seed=1))[T - 1:]:
        i = next(k for k in range(T) if np.array_equal(obs[k], s.current_obs))
        j = i + s.plan_length_label
        np.testing.assert_array_equal(obs[j], s.goal_obs)
        assert s.action_label == trajectory.actions[i]


def test_no_bootstrap(trajectory):
    assert len(bootstrap_pairs(trajectory, DatasetConfig(n_bootstrap=0))) == len(trajectory.actions)


def test_bootstrap_is_deterministic(trajectory):
    a = bootstrap_pairs(trajectory, DatasetConfig(seed=5))
    b = bootstrap_pairs(trajectory, DatasetConfig(seed=5))
    assert [(s.action_label, s.plan_length_label) for s in a] == [(s.action_label, s.plan_length_label) for s in b]


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(0, 50), st.sampled_from(["uniform", "linear_increasing"]), st.integers(0, 999))
def test_sample_pairs_are_ordered(T, n, mode, seed):
    pairs = sample_pairs(T, n, mode, np.random.default_rng(seed))
    assert len(pairs) == n
    assert all(0 <= i < j < T for i, j in pairs)


def _chi_square(observed, expected):
    return float(((observed - expected) ** 2 / expected).sum())


def test_uniform_pairs_chi_square():
    T, n = 6, 30_000
    pairs = sample_pairs(T, n, "uniform", np.random.default_rng(0))
    iu = list(zip(*np.triu_indices(T, k=1)))
    counts = np.array([sum(1 for p in pairs if p == q) for q in iu], dtype=float)
    # 14 degrees of freedom; 0.999 quantile is about 36.1
    assert _chi_square(counts, np.full(len(iu), n / len(iu))) < 36.1


def test_linear_increasing_goal_index_chi_square():
    T, n = 8, 40_000
    pairs = sample_pairs(T, n, "linear_increasing", np.random.default_rng(1))
    js = np.array([j for _, j in pairs])
    counts = np.bincount(js, minlength=T)[1:].astype(float)
    probs = np.arange(1, T) / np.arange(1, T).sum()
    # 6 degrees of freedom; 0.999 quantile is about 22.5
    assert _chi_square(counts, n * probs) < 22.5
    # given j, i is uniform below j
    i_given = np.array([i for i, j in pairs if j == 7])
    c = np.bincount(i_given, minlength=7).astype(float)
    assert _chi_square(c, np.full(7, len(i_given) / 7)) < 22.5


def test_collect_skips_failures_and_aborts_past_threshold():
    good = generate_level((6, 6), 1, 1)
    bad = parse_level("#####\n#@..#\n#..$#\n#X###\n#####")
    trajs, skipped = collect_trajectories([good, bad, good], max_failure_rate=0.5)
    assert len(trajs) == 2 and skipped == 1
    with pytest.raises(ExpertFailureError):
        collect_trajectories([bad, bad, good], max_failure_rate=0.5)


def test_collect_uses_a_custom_expert():
    p = generate_level((6, 6), 1, 2)
    calls = []

    def expert(problem, budget):
        calls.append(problem)
        return expert_solve(problem, budget=budget)

    collect_trajectories([p], expert=expert)
    assert calls == [p]
    assert isinstance(expert_solve(p), SearchResult)


def test_tsp_samples_skip_forced_closing_step():
    g = generate_complete_graph(5, 0)
    (t,) = collect_tsp_trajectories([g], [2])
    samples = tsp_samples(t)
    assert len(samples) == 4
    assert samples[0].features[2].tolist() == [1, 1, 1]
    assert [s.action_label for s in samples] == t.actions[:-1]


def test_assemble_uses_per_trajectory_seeds(trajectory):
    data = assemble_dataset([trajectory, trajectory], DatasetConfig(seed=3))
    T = len(trajectory.states)
    first, second = data[:2 * T - 1], data[2 * T - 1:]
    assert len(first) == len(second)
    assert derive_seed(3, 0) != derive_seed(3, 1)


def _same(a, b):
    if isinstance(a, TspSample):
        return (np.array_equal(a.features, b.features) and np.array_equal(a.adjacency, b.adjacency)
                and np.array_equal(a.weights, b.weights) and a.action_label == b.action_label)
    return (np.array_equal(a.current_obs, b.current_obs) and np.array_equal(a.goal_obs, b.goal_obs)
            and a.action_label == b.action_label and a.plan_length_label == b.plan_length_label)


def test_dataset_round_trip(tmp_path, trajectory):
    samples = bootstrap_pairs(trajectory, DatasetConfig(seed=0))
    write_dataset(samples, tmp_path / "d.grpd")
    domain, back = read_dataset(tmp_path / "d.grpd")
    assert domain == "sokoban" and len(back) == len(samples)
    assert all(_same(a, b) for a, b in zip(samples, back))
    ts = tsp_samples(collect_tsp_trajectories([generate_complete_graph(6, 1)], [0])[0])
    write_dataset(ts, tmp_path / "t.grpd")
    domain, back = read_dataset(tmp_path / "t.grpd")
    assert domain == "tsp" and all(_same(a, b) for a, b in zip(ts, back))


@pytest.mark.parametrize("offset", [9, 40, -30, -2])
def test_dataset_corruption_is_detected(tmp_path, trajectory, offset):
    path = tmp_path / "d.grpd"
    write_dataset(bootstrap_pairs(trajectory, DatasetConfig(seed=0)), path)
    blob = bytearray(path.read_bytes())
    blob[offset] ^= 0x10
    path.write_bytes(bytes(blob))
    with pytest.raises(DatasetError):
        read_dataset(path)


def test_dataset_truncation_is_detected(tmp_path, trajectory):
    path = tmp_path / "d.grpd"
    write_dataset(bootstrap_pairs(trajectory, DatasetConfig(seed=0)), path)
    path.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(DatasetError):
        read_dataset(path)


def test_config_validation():
    with pytest.raises(ValueError):
        DatasetConfig(n_bootstrap=-1)
    with pytest.raises(ValueError):
        DatasetConfig(sampling="quadratic")
