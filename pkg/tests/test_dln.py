import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from llcbench import _rng
from llcbench.dln import (
    ArrayDataset,
    Batch,
    DatasetSpec,
    DlnArchitecture,
    DlnParams,
    batch_indices,
    batch_loss,
    batch_loss_gradient,
    composite_matrix,
    dataset_loss,
    forward,
    sample_batch,
    uniform_second_moment,
)
from llcbench.exceptions import ConfigurationError, ContractViolation


def naive_matmul(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    return [[sum(a[i][k] * b[k][j] for k in range(inner)) for j in range(cols)] for i in range(rows)]


def random_params(rng, sizes):
    return DlnParams([rng.normal(size=(sizes[l], sizes[l - 1])) for l in range(1, len(sizes))])


def random_batch(rng, sizes, m):
    return Batch(rng.uniform(-2, 2, size=(m, sizes[0])), rng.normal(size=(m, sizes[-1])))


# -- splitmix reference vectors (seed 1234567) --

def test_splitmix_reference_stream():
    golden = 0x9E3779B97F4A7C15
    states = np.array([(1234567 + k * golden) % 2**64 for k in range(5)], dtype=np.uint64)
    expected = [6457827717110365317, 3203168211198807973, 9817491932198370423,
                4593380528125082431, 16408922859458223821]
    assert [int(v) for v in _rng.splitmix64(states)] == expected


def test_scalar_and_array_key_paths_agree():
    a = _rng.hash_keys(7, 3, np.arange(4))
    b = _rng.hash_keys(np.array([7]), np.array([3]), np.arange(4))
    assert np.array_equal(a, b)


def test_uniform_range_and_normal_moments():
    u = _rng.uniform(1, 2, np.arange(200_000))
    assert u.min() >= 0 and u.max() < 1
    z = _rng.normal_pair(u[0::2], u[1::2])
    assert abs(z.mean()) < 0.02 and abs(z.var() - 1) < 0.03


# -- architecture / params --

def test_architecture_dimension():
    arch = DlnArchitecture((3, 4, 2))
    assert arch.num_layers == 2 and arch.num_params == 12 + 8
    assert arch.shapes == [(4, 3), (2, 4)]


@pytest.mark.parametrize("sizes", [(3,), (2, 0, 1)])
def test_architecture_rejects_bad_sizes(sizes):
    with pytest.raises(ContractViolation):
        DlnArchitecture(sizes)


def test_params_reject_mismatched_shapes():
    with pytest.raises(ContractViolation):
        DlnParams([np.ones((2, 3)), np.ones((2, 4))])


def test_flatten_roundtrip():
    rng = np.random.default_rng(0)
    p = random_params(rng, (3, 5, 2, 4))
    q = DlnParams.from_flat(p.architecture, p.flatten())
    for a, b in zip(p.weights, q.weights):
        assert np.array_equal(a, b)


# -- composite / forward --

def test_composite_identity_and_single_layer():
    eye = DlnParams([np.eye(3)] * 3)
    assert np.array_equal(composite_matrix(eye), np.eye(3))
    assert np.array_equal(composite_matrix(DlnParams([np.array([[2.0]])])), [[2.0]])


def test_composite_matches_naive_triple_loop():
    rng = np.random.default_rng(1)
    w1, w2 = rng.normal(size=(2, 4)), rng.normal(size=(3, 2))
    got = composite_matrix(DlnParams([w1, w2]))
    want = np.array(naive_matmul(w2.tolist(), w1.tolist()))
    np.testing.assert_allclose(got, want, rtol=1e-14, atol=0)


def test_forward_examples():
    assert np.array_equal(forward(DlnParams([np.eye(3)] * 2), [1.0, 2.0, 3.0]), [1, 2, 3])
    assert np.array_equal(forward(DlnParams([np.array([[1.0, 1.0]])]), [3.0, 4.0]), [7.0])


def test_forward_equals_composite_product():
    rng = np.random.default_rng(2)
    p = random_params(rng, (4, 6, 3, 5))
    x = rng.normal(size=4)
    np.testing.assert_allclose(forward(p, x), composite_matrix(p) @ x, rtol=1e-12)


def test_forward_rejects_wrong_length():
    with pytest.raises(ContractViolation):
        forward(DlnParams([np.eye(2)]), [1.0, 2.0, 3.0])


# -- loss --

def test_batch_loss_hand_arithmetic():
    batch = Batch([[3.0]], [[5.0]])
    assert batch_loss(DlnParams([np.array([[2.0]])]), batch) == 1.0


def test_batch_loss_matches_scalar_loop():
    rng = np.random.default_rng(3)
    sizes = (3, 4, 2)
    p = random_params(rng, sizes)
    b = random_batch(rng, sizes, 7)
    total = 0.0
    for j in range(b.size):
        h = list(b.inputs[j])
        for w in p.weights:
            h = [sum(w[i][k] * h[k] for k in range(len(h))) for i in range(w.shape[0])]
        total += sum((h[i] - b.targets[j][i]) ** 2 for i in range(len(h)))
    np.testing.assert_allclose(batch_loss(p, b), total / b.size, rtol=1e-12)


def test_nonfinite_params_propagate():
    p = DlnParams([np.array([[np.inf]])])
    assert not np.isfinite(batch_loss(p, Batch([[1.0]], [[0.0]])))


# -- gradient --

def test_gradient_scalar_hand_calculus():
    g = batch_loss_gradient(DlnParams([np.array([[2.0]])]), Batch([[3.0]], [[5.0]]))
    assert g.weights[0][0, 0] == 2 * 3 * (2 * 3 - 5)


def test_gradient_zero_at_exact_fit():
    rng = np.random.default_rng(4)
    p = random_params(rng, (3, 3, 2))
    x = rng.normal(size=(5, 3))
    g = batch_loss_gradient(p, Batch(x, forward(p, x)))
    assert all(np.abs(w).max() < 1e-12 for w in g.weights)


def central_difference(p, batch, h=1e-5):
    flat = p.flatten()
    arch = p.architecture
    out = np.empty_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        out[i] = (batch_loss(DlnParams.from_flat(arch, flat + e), batch)
                  - batch_loss(DlnParams.from_flat(arch, flat - e), batch)) / (2 * h)
    return out


def test_gradient_matches_finite_differences_m3():
    rng = np.random.default_rng(5)
    sizes = (3, 4, 2, 3)
    p = random_params(rng, sizes)
    b = random_batch(rng, sizes, 6)
    fd = central_difference(p, b)
    g = batch_loss_gradient(p, b).flatten()
    ok = (np.abs(g - fd) <= 1e-5) | (np.abs(g - fd) <= 1e-4 * np.abs(fd))
    assert ok.all()


# -- dataset --

def small_dataset(n=50, seed=11, noise=0.25):
    rng = np.random.default_rng(0)
    return DatasetSpec(n=n, true_params=random_params(rng, (3, 2, 4)), noise_variance=noise, seed=seed)


def test_dataset_samples_are_pure_functions_of_index():
    ds = small_dataset()
    x1, y1 = ds.samples([4, 9, 4])
    x2, y2 = small_dataset().samples([9])
    assert np.array_equal(x1[0], x1[2]) and np.array_equal(x1[1], x2[0]) and np.array_equal(y1[1], y2[0])


def test_cached_and_streamed_generation_identical():
    cached = small_dataset()
    streamed = small_dataset()
    streamed.cache_limit = 0
    idx = np.array([0, 17, 49, 3])
    for a, b in zip(cached.samples(idx), streamed.samples(idx)):
        assert np.array_equal(a, b)


def test_dataset_input_law_and_noise():
    ds = small_dataset(n=20_000, noise=0.25)
    x, y = ds.samples(np.arange(ds.n))
    assert x.min() >= -10 and x.max() < 10
    np.testing.assert_allclose((x.T @ x) / ds.n, uniform_second_moment(-10, 10, 3), atol=1.0)
    resid = y - x @ ds.composite.T
    assert abs(resid.var() - 0.25) < 0.01


def test_noiseless_dataset_has_zero_loss_at_truth():
    ds = small_dataset(noise=0.0)
    assert dataset_loss(ds.true_params, ds) == 0.0


def test_sample_batch_determinism_and_degenerate_n():
    ds = small_dataset()
    a, b = sample_batch(ds, 8, 3, 99), sample_batch(ds, 8, 3, 99)
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.inputs, b.inputs)
    assert not np.array_equal(a.indices, sample_batch(ds, 8, 4, 99).indices)
    assert (batch_indices(5, 6, 0, 20, 1) == 0).all()


def test_sample_batch_rejects_oversized_batch():
    with pytest.raises(ConfigurationError):
        sample_batch(small_dataset(n=5), 6, 0, 0)


def test_batch_indices_uniform_chi_square():
    # 10^5 draws over n = 10: every count within 3 sigma of the multinomial mean,
    # and the chi-square statistic below its 99.9% quantile for 9 dof (27.88)
    counts = np.zeros(10)
    for t in range(1000):
        counts += np.bincount(batch_indices(123, 7, t, 100, 10), minlength=10)
    expected = 1e5 / 10
    sigma = np.sqrt(1e5 * 0.1 * 0.9)
    assert np.all(np.abs(counts - expected) < 3 * sigma)
    assert ((counts - expected) ** 2 / expected).sum() < 27.88


def test_array_dataset_protocol():
    ds = ArrayDataset(np.arange(6.0).reshape(3, 2), np.ones((3, 1)))
    x, y = ds.samples([2, 0])
    assert ds.n == 3 and np.array_equal(x, [[4, 5], [0, 1]])


# -- properties --

@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=2, max_size=5), st.integers(1, 6), st.integers(0, 2**31))
def test_loss_nonnegative_and_gradient_shapes(sizes, m, seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng, sizes)
    b = random_batch(rng, sizes, m)
    assert batch_loss(p, b) >= 0
    g = batch_loss_gradient(p, b)
    assert [w.shape for w in g.weights] == [w.shape for w in p.weights]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**62), st.integers(0, 10**6))
def test_sample_regeneration_bit_identical(seed, index):
    rng = np.random.default_rng(0)
    ds = DatasetSpec(n=10**6 + 1, true_params=random_params(rng, (2, 2)), seed=seed)
    a = ds.samples([index])
    b = ds.samples([index])
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
