import numpy as np
import pytest

from llcbench.dln import DlnArchitecture, DlnParams
from llcbench.exceptions import ConfigurationError
from llcbench.taskgen import (
    ModelClass,
    TaskSpec,
    builtin_classes,
    get_class,
    make_task,
    sample_architecture,
    sample_true_params,
    true_rank,
)


def test_full_scale_classes():
    c = get_class("100K")
    assert (c.min_layers, c.max_layers, c.min_width, c.max_width) == (2, 10, 50, 500)
    c = get_class("100M")
    assert (c.max_layers, c.max_width) == (40, 3000)
    assert (get_class("1M").max_layers, get_class("1M").min_width) == (20, 100)
    assert get_class("10M").max_width == 2000
    assert [c.name for c in builtin_classes() if c.full_scale] == ["100K", "1M", "10M", "100M"]


def test_desk_class_is_not_full_scale():
    c = get_class("1K")
    assert not c.full_scale and (c.min_layers, c.max_layers, c.min_width, c.max_width) == (2, 4, 4, 12)


def test_unknown_class_and_bad_ranges():
    with pytest.raises(ConfigurationError):
        get_class("nope")
    with pytest.raises(ConfigurationError):
        ModelClass("bad", 3, 2, 1, 1)


def test_collapsed_range():
    c = ModelClass("fixed", 2, 2, 5, 5)
    for s in range(5):
        assert sample_architecture(c, s).layer_sizes == (5, 5, 5)


def test_layer_count_uniform_within_3_sigma():
    rng = np.random.default_rng(0)
    counts = np.bincount([sample_architecture("1K", rng).num_layers for _ in range(10_000)],
                         minlength=5)[2:]
    sigma = np.sqrt(10_000 * (1 / 3) * (2 / 3))
    assert np.all(np.abs(counts - 10_000 / 3) < 3 * sigma)


def test_architecture_determinism():
    assert sample_architecture("100K", 7) == sample_architecture("100K", 7)


def test_unreduced_layers_full_rank():
    rng = np.random.default_rng(1)
    for _ in range(100):
        arch = sample_architecture("1K", rng)
        p = sample_true_params(arch, rng, reduce_prob=0.0)
        assert all(np.linalg.matrix_rank(w) == min(w.shape) for w in p.weights)


def test_xavier_variance():
    p = sample_true_params(DlnArchitecture((100, 100, 100, 100, 100, 100, 100, 100, 100, 100, 100)),
                           3, reduce_prob=0.0)
    entries = np.concatenate([w.ravel() for w in p.weights])
    assert entries.size == 10**5
    assert abs(entries.var() / 0.01 - 1) < 0.05


def test_rank_zero_layer_is_zero_matrix():
    # find a draw whose reduction picked target rank 0
    arch = DlnArchitecture((3, 3))
    for seed in range(200):
        w = sample_true_params(arch, seed, reduce_prob=1.0).weights[0]
        if np.linalg.matrix_rank(w) == 0:
            assert not w.any()
            return
    pytest.fail("no rank-0 draw in 200 seeds")


def test_true_rank_examples():
    assert true_rank(DlnParams([np.zeros((3, 4)), np.zeros((2, 3))])) == 0
    assert true_rank(DlnParams([np.eye(4), np.eye(4)])) == 4
    rng = np.random.default_rng(2)
    w = rng.normal(size=(5, 5))
    w[2:, :] = 0.0
    assert true_rank(DlnParams([rng.normal(size=(5, 6)), w, rng.normal(size=(4, 5))])) == 2


def test_rank_bounded_by_layer_ranks():
    for seed in range(60):
        t = make_task("1K", seed)
        layer_ranks = [np.linalg.matrix_rank(w) for w in t.true_params.weights]
        assert t.rank <= min(layer_ranks) <= min(t.architecture.layer_sizes)


def test_true_rank_uses_stated_tolerance():
    # singular values (1, 1e-14, 1e-16): tol = 3 * eps * 1 = 6.7e-16 keeps the middle one
    w = np.diag([1.0, 1e-14, 1e-16])
    assert true_rank(DlnParams([w])) == 2


def test_rank_tolerance_stable_under_tiny_noise():
    rng = np.random.default_rng(3)
    changed = []
    for seed in range(100):
        t = make_task("1K", seed)
        noisy = DlnParams([w + 1e-13 * rng.normal(size=w.shape) for w in t.true_params.weights])
        if true_rank(noisy) != t.rank:
            changed.append((seed, t.rank, true_rank(noisy)))
    assert not changed, f"{len(changed)}/100 ranks moved under 1e-13 noise, e.g. {changed[:3]}"


def test_make_task_pure_function_of_seed():
    a, b = make_task("1K", 42), make_task("1K", 42)
    assert a.architecture == b.architecture and a.dataset.seed == b.dataset.seed
    assert all(np.array_equal(x, y) for x, y in zip(a.true_params.weights, b.true_params.weights))


def test_task_dict_roundtrip():
    t = make_task("1K", 5)
    u = TaskSpec.from_dict(t.to_dict())
    assert u.architecture == t.architecture and u.rank == t.rank
    assert all(np.array_equal(x, y) for x, y in zip(u.true_params.weights, t.true_params.weights))
    assert np.array_equal(u.dataset.samples([3])[1], t.dataset.samples([3])[1])
