import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from splitlora.errors import InvalidInput, ParseError, ShapeError
from splitlora.linalg import (add, format_matrix_csv, frobenius_inner, frobenius_norm, jacobi_svd, matmul,
                              parse_matrix_csv, read_matrix_csv, scale, svd, transpose, write_matrix_csv)


def matrices(max_side=7):
    shapes = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shapes.flatmap(lambda s: arrays(np.float64, s, elements=st.floats(-1e3, 1e3, allow_subnormal=False)))


def test_identity_singular_values():
    res = svd(np.eye(3))
    assert np.allclose(res.sigma, [1, 1, 1])


def test_diagonal_gives_permuted_identity():
    res = svd(np.diag([3.0, 2.0, 1.0]))
    assert np.allclose(res.sigma, [3, 2, 1])
    assert np.array_equal(np.abs(res.u), np.eye(3))
    # sign convention: the largest entry of each left vector is nonnegative
    assert np.all(res.u.max(axis=0) >= 0)


def test_random_8x6_reconstruction_and_norm(rng):
    m = rng.standard_normal((8, 6))
    res = svd(m)
    assert np.linalg.norm(res.reconstruct() - m) <= 1e-8
    assert abs(np.linalg.norm(res.sigma) - np.linalg.norm(m)) <= 1e-9


@settings(max_examples=150, deadline=None)
@given(matrices())
def test_svd_invariants(m):
    res = svd(m, full_left=True)
    d1 = m.shape[0]
    fro = np.linalg.norm(m)
    assert np.linalg.norm(res.reconstruct() - m) / max(1.0, fro) <= 1e-8
    assert np.max(np.abs(res.u.T @ res.u - np.eye(d1))) <= 1e-9
    assert np.all(np.diff(res.sigma) <= 0) and np.all(res.sigma >= 0)
    assert abs(np.sum(res.sigma ** 2) - fro ** 2) <= 1e-8 * max(1.0, fro ** 2)
    idx = np.argmax(np.abs(res.u), axis=0)
    assert np.all(res.u[idx, np.arange(d1)] >= 0)


@settings(max_examples=60, deadline=None)
@given(matrices(6))
def test_lapack_path_agrees_with_jacobi(m):
    a, b = svd(m, full_left=True), jacobi_svd(m, full_left=True)
    scale_ = max(1.0, np.linalg.norm(m))
    assert np.allclose(a.sigma, b.sigma, atol=1e-10 * scale_)
    assert np.linalg.norm(b.reconstruct() - m) <= 1e-8 * scale_
    assert np.max(np.abs(b.u.T @ b.u - np.eye(m.shape[0]))) <= 1e-9


def test_full_left_completes_null_space():
    m = np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])  # rank 1, three rows
    res = svd(m, full_left=True)
    assert res.u.shape == (3, 3)
    assert np.allclose(res.u.T @ res.u, np.eye(3), atol=1e-12)
    assert np.allclose(res.full_spectrum()[1:], 0, atol=1e-12)


def test_zero_matrix_svd():
    res = svd(np.zeros((3, 2)), full_left=True)
    assert np.all(res.sigma == 0)
    assert np.allclose(res.u.T @ res.u, np.eye(3))


def test_svd_rejects_non_finite():
    with pytest.raises(InvalidInput):
        svd(np.array([[1.0, np.nan]]))
    with pytest.raises(InvalidInput):
        jacobi_svd(np.array([[np.inf]]))


def test_frobenius_inner_examples():
    assert frobenius_inner(np.eye(2), np.eye(2)) == 2
    assert frobenius_inner([[1, 2], [3, 4]], np.eye(2)) == 5
    assert frobenius_inner(np.arange(6.0).reshape(2, 3), np.zeros((2, 3))) == 0
    with pytest.raises(ShapeError):
        frobenius_inner(np.eye(2), np.eye(3))


def test_matmul_examples(rng):
    m = rng.standard_normal((3, 4))
    assert np.array_equal(matmul(np.eye(3), m), m)
    assert np.array_equal(matmul([[1, 2], [3, 4]], [[1], [1]]), [[3], [7]])
    assert np.array_equal(matmul(np.zeros((2, 3)), m), np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        matmul(np.eye(2), m)


def test_helpers():
    a = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(transpose(a), a.T)
    assert np.array_equal(scale(a, 2), 2 * a)
    assert np.array_equal(add(a, a), 2 * a)
    assert frobenius_norm([[3.0, 4.0]]) == 5.0
    with pytest.raises(ShapeError):
        add(a, a.T)


@settings(max_examples=50, deadline=None)
@given(matrices(5))
def test_csv_round_trip_is_exact(m):
    assert np.array_equal(parse_matrix_csv(format_matrix_csv(m)), m)


def test_csv_file_round_trip(tmp_path, rng):
    m = rng.standard_normal((4, 3))
    path = tmp_path / "sub" / "m.csv"
    write_matrix_csv(path, m)
    assert np.array_equal(read_matrix_csv(path), m)
    assert not list(path.parent.glob(".*tmp*"))


def test_csv_errors_carry_line_numbers():
    with pytest.raises(ParseError, match=":2:"):
        parse_matrix_csv("1,2\n1,x\n", path="m.csv")
    with pytest.raises(ParseError) as info:
        parse_matrix_csv("1,2\n3,4\n5\n")
    assert info.value.line == 3
    with pytest.raises(ParseError):
        parse_matrix_csv("\n\n")
