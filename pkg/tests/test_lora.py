import numpy as np
import pytest

from splitlora.errors import ShapeError
from splitlora.lora import (LoraAdapter, forward_delta, init_a_projected, init_a_random, load_stacks, merge,
                            new_adapter, save_stacks)
from splitlora.subspace import MinorSubspace


def _sub(basis):
    return MinorSubspace(basis=np.asarray(basis, dtype=float), spectrum=np.ones(basis.shape[0]))


def test_axis_aligned_basis_pads_with_zeros():
    basis = np.eye(5)[:, :2]
    a = init_a_projected(_sub(basis), 4, seed=1)
    g = np.random.default_rng(1).standard_normal((2, 4)) / np.sqrt(2)
    assert np.array_equal(a[:2], g)
    assert np.all(a[2:] == 0)


def test_projected_init_is_confined_and_rank_limited(rng):
    q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    basis = q[:, :3]
    a = init_a_projected(_sub(basis), 10, seed=rng)
    assert np.linalg.norm(basis @ basis.T @ a - a) <= 1e-10 * np.linalg.norm(a)
    assert np.sum(np.linalg.svd(a, compute_uv=False) > 1e-10) <= 3


def test_random_init_is_deterministic():
    assert init_a_random(7, 3, seed=5).tobytes() == init_a_random(7, 3, seed=5).tobytes()


def test_random_init_statistics():
    d1, r = 200, 10
    a = init_a_random(d1, r, seed=0)
    se = np.sqrt(1 / d1) / np.sqrt(d1 * r)
    assert abs(a.mean()) <= 5 * se
    assert abs(a.var() * d1 - 1) <= 0.2


def test_forward_delta_examples(rng):
    x = rng.standard_normal((4, 6))
    zero = new_adapter(rng.standard_normal((3, 2)), 4)
    assert np.array_equal(forward_delta([zero], x), np.zeros((3, 6)))
    b = rng.standard_normal((4, 4))
    ident = LoraAdapter(a=np.eye(4), b=b)
    assert np.allclose(forward_delta([ident], x), b @ x, atol=1e-14)
    one = LoraAdapter(rng.standard_normal((3, 2)), rng.standard_normal((2, 4)))
    two = LoraAdapter(rng.standard_normal((3, 5)), rng.standard_normal((5, 4)))
    both = forward_delta([one, two], x)
    assert np.max(np.abs(both - forward_delta([one], x) - forward_delta([two], x))) <= 1e-12
    with pytest.raises(ShapeError):
        forward_delta([one], rng.standard_normal((5, 2)))
    with pytest.raises(ShapeError):
        LoraAdapter(np.ones((3, 2)), np.ones((3, 4)))


def test_merge_matches_adapter_forward(rng):
    w0 = rng.standard_normal((3, 4))
    stack = [LoraAdapter(rng.standard_normal((3, 2)), rng.standard_normal((2, 4))) for _ in range(3)]
    x = rng.standard_normal((4, 9))
    assert np.max(np.abs(merge(stack, w0) @ x - (w0 @ x + forward_delta(stack, x)))) <= 1e-10
    assert np.array_equal(merge([], w0), w0)
    zero_stack = [new_adapter(rng.standard_normal((3, 2)), 4)]
    assert np.array_equal(merge(zero_stack, w0), w0)
    with pytest.raises(ShapeError):
        merge(stack, np.zeros((4, 4)))


def test_new_adapter_starts_as_no_op(rng):
    ad = new_adapter(rng.standard_normal((6, 3)), 5, task=2, k=4)
    assert np.all(ad.delta() == 0) and ad.rank == 3 and ad.k == 4


def test_stack_checkpoint_round_trip(tmp_path, rng):
    stacks = {"layer0": [LoraAdapter(rng.standard_normal((3, 2)), rng.standard_normal((2, 4)), task=t, k=t)
                         for t in (1, 2)],
              "layer1": [LoraAdapter(rng.standard_normal((3, 1)), rng.standard_normal((1, 3)), task=1)]}
    save_stacks(tmp_path, stacks)
    back = load_stacks(tmp_path)
    assert back.keys() == stacks.keys()
    for lid in stacks:
        for x, y in zip(stacks[lid], back[lid]):
            assert np.array_equal(x.a, y.a) and np.array_equal(x.b, y.b)
            assert (x.task, x.k) == (y.task, y.k)
