import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_net
from splitlora.errors import EmptyDataset, ShapeError
from splitlora.gradmem import GradientMemory, compute_task_gradient, load_memory, save_memory, update_old
from splitlora.network import DenseLayer, ToyNet


def _linear_net(w):
    """One identity-activation layer feeding an identity head: output == w @ x."""
    d_out = w.shape[0]
    return ToyNet([DenseLayer(np.array(w, dtype=float), np.zeros(d_out))], activation="identity",
                  head_w=np.eye(d_out), head_b=np.zeros(d_out))


def test_memory_starts_at_zero():
    mem = GradientMemory.zeros({"layer0": (3, 2)})
    assert np.all(mem.g_old("layer0") == 0) and mem.tasks_seen("layer0") == 0


def test_first_update_is_the_task_gradient(rng):
    g = rng.standard_normal((3, 2))
    mem = update_old(GradientMemory.zeros({"l": (3, 2)}), "l", g)
    assert np.array_equal(mem.g_old("l"), g) and mem.tasks_seen("l") == 1


def test_running_mean_example():
    mem = GradientMemory.zeros({"l": (1, 1)})
    mem = update_old(mem, "l", [[2.0]])
    mem = update_old(mem, "l", [[4.0]])
    assert mem.g_old("l").tolist() == [[3.0]]


def test_zero_gradients_keep_zero_memory():
    mem = GradientMemory.zeros({"l": (2, 2)})
    for _ in range(4):
        mem = update_old(mem, "l", np.zeros((2, 2)))
    assert np.all(mem.g_old("l") == 0)


def test_update_is_pure_and_checks_shape(rng):
    mem = GradientMemory.zeros({"l": (2, 2)})
    update_old(mem, "l", np.ones((2, 2)))
    assert np.all(mem.g_old("l") == 0)
    with pytest.raises(ShapeError):
        update_old(mem, "l", np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2 ** 32 - 1))
def test_running_mean_property(n, seed):
    rng = np.random.default_rng(seed)
    gs = rng.standard_normal((n, 3, 4)) * 10 ** rng.uniform(-2, 2)
    mem = GradientMemory.zeros({"l": (3, 4)})
    for g in gs:
        mem = update_old(mem, "l", g)
    assert np.max(np.abs(mem.g_old("l") - gs.mean(axis=0))) <= 1e-12 * max(1.0, np.abs(gs).max())


def test_least_squares_gradient(rng):
    w = rng.standard_normal((3, 4))
    x, y = rng.standard_normal((4, 1)), rng.standard_normal((3, 1))
    g = compute_task_gradient(_linear_net(w), x, y, loss="mse")["layer0"]
    assert np.allclose(g, (w @ x - y) @ x.T, atol=1e-12)


def test_duplication_and_batching_invariance(rng):
    net = small_net()
    x, y = rng.standard_normal((5, 13)), rng.integers(0, 3, 13)
    g = compute_task_gradient(net, x, y)
    g2 = compute_task_gradient(net, np.hstack([x, x]), np.concatenate([y, y]))
    g3 = compute_task_gradient(net, x, y, batch_size=4)
    for lid in net.layer_ids():
        assert np.allclose(g[lid], g2[lid], atol=1e-14)
        assert np.allclose(g[lid], g3[lid], atol=1e-14)


def test_perfect_fit_gives_zero_gradient(rng):
    w = rng.standard_normal((2, 3))
    x = rng.standard_normal((3, 5))
    g = compute_task_gradient(_linear_net(w), x, w @ x, loss="mse")["layer0"]
    assert np.abs(g).max() <= 1e-10


def test_matches_finite_differences_on_small_layer(rng):
    net = small_net(d_in=4, width=4, depth=1, n_classes=3, seed=4)
    x, y = rng.standard_normal((4, 9)), rng.integers(0, 3, 9)
    g = compute_task_gradient(net, x, y)["layer0"]
    w0 = net.layers[0].w0
    fd = np.zeros_like(w0)
    for idx in np.ndindex(w0.shape):
        old = w0[idx]
        w0[idx] = old + 1e-5
        up = net.loss(x, y)
        w0[idx] = old - 1e-5
        down = net.loss(x, y)
        w0[idx] = old
        fd[idx] = (up - down) / 2e-5
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) <= 1e-6


def test_layer_subset_and_no_mutation(rng):
    net = small_net()
    before = [l.w0.copy() for l in net.layers]
    g = compute_task_gradient(net, rng.standard_normal((5, 4)), rng.integers(0, 3, 4), layer_ids=["layer1"])
    assert list(g) == ["layer1"]
    assert all(np.array_equal(b, l.w0) for b, l in zip(before, net.layers))


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        compute_task_gradient(small_net(), np.zeros((5, 0)), np.zeros(0, dtype=int))


def test_checkpoint_round_trip(tmp_path, rng):
    mem = GradientMemory.zeros({"layer0": (3, 2), "layer1": (2, 2)})
    mem = update_old(mem, "layer0", rng.standard_normal((3, 2)))
    save_memory(tmp_path, mem)
    back = load_memory(tmp_path)
    for lid in mem.layers:
        assert np.array_equal(back.g_old(lid), mem.g_old(lid))
        assert back.tasks_seen(lid) == mem.tasks_seen(lid)
