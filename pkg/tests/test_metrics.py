import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from splitlora.metrics import (AccuracyMatrix, aggregate, caa, faa, forgetting, plasticity, relative_curves,
                               summarize)


def test_two_task_worked_example():
    m = AccuracyMatrix.from_rows([[0.9, 0.8], [0.7]])
    assert abs(faa(m) - 0.75) <= 1e-12
    assert abs(caa(m) - 0.825) <= 1e-12
    assert abs(forgetting(m) - 0.1) <= 1e-12
    assert abs(plasticity(m) - 0.8) <= 1e-12


def test_forgetting_example_with_recovered_second_task():
    # a[1][1]=0.9, a[1][2]=0.8, a[2][2]=0.9
    m = AccuracyMatrix.from_rows([[0.9, 0.8], [0.9]])
    assert abs(forgetting(m) - 0.1) <= 1e-12


def test_three_task_hand_values():
    m = AccuracyMatrix.from_columns([[0.9], [0.7, 0.8], [0.8, 0.5, 0.6]])
    assert abs(faa(m) - (0.8 + 0.5 + 0.6) / 3) <= 1e-12
    assert abs(caa(m) - (0.9 + 0.75 + 1.9 / 3) / 3) <= 1e-12
    # task 1 best 0.9 -> 0.8, task 2 best 0.8 -> 0.5
    assert abs(forgetting(m) - (0.1 + 0.3) / 2) <= 1e-12
    assert abs(plasticity(m) - (0.9 + 0.8 + 0.6) / 3) <= 1e-12


def test_best_accuracy_can_come_after_the_task():
    m = AccuracyMatrix.from_columns([[0.5], [0.9, 0.7], [0.6, 0.7, 0.8]])
    assert abs(forgetting(m) - (0.3 + 0.0) / 2) <= 1e-12


def test_trivial_cases():
    one = AccuracyMatrix.from_rows([[0.42]])
    assert faa(one) == caa(one) == 0.42 and forgetting(one) == 0
    ones = AccuracyMatrix.from_rows([[1.0] * 3, [1.0] * 2, [1.0]])
    assert summarize(ones) == {"faa": 1.0, "caa": 1.0, "forgetting": 0.0, "plasticity": 1.0}


@given(st.integers(1, 6), st.floats(0, 1))
def test_constant_matrix(T, c):
    m = AccuracyMatrix.from_rows([[c] * (T - i) for i in range(T)])
    assert caa(m) == pytest.approx(c, abs=1e-12)
    assert forgetting(m) == 0


@given(st.integers(1, 6), st.data())
def test_ranges(T, data):
    rows = [[data.draw(st.floats(0, 1)) for _ in range(T - i)] for i in range(T)]
    m = AccuracyMatrix.from_rows(rows)
    assert 0 <= faa(m) <= 1 and 0 <= caa(m) <= 1 and forgetting(m) >= 0


def test_matrix_validation_and_serialization():
    m = AccuracyMatrix.empty(2)
    with pytest.raises(IndexError):
        m.set(2, 1, 0.5)
    with pytest.raises(ValueError):
        m.set(1, 1, 1.5)
    with pytest.raises(ValueError):
        AccuracyMatrix.from_rows([[0.5], [0.5]])
    full = AccuracyMatrix.from_rows([[0.9, 0.8], [0.7]])
    assert full.to_list() == [[0.9, 0.8], [None, 0.7]]
    assert AccuracyMatrix.from_list(full.to_list()).to_list() == full.to_list()


def test_relative_curves():
    base = AccuracyMatrix.from_rows([[0.9, 0.8], [0.7]])
    other = AccuracyMatrix.from_rows([[0.95, 0.75], [0.85]])
    curves = relative_curves({1.0: [base], 5.0: [other], 20.0: [base]})
    assert curves[1.0]["relative_forgetting"] == 0 and curves[1.0]["relative_plasticity"] == 0
    assert curves[20.0]["relative_forgetting"] == 0 and curves[20.0]["relative_plasticity"] == 0
    assert abs(curves[5.0]["relative_forgetting"] - 0.1) <= 1e-12
    assert abs(curves[5.0]["relative_plasticity"] - 0.1) <= 1e-12
    with pytest.raises(KeyError):
        relative_curves({5.0: [base]})


def test_aggregate():
    out = aggregate([{"faa": 0.5}, {"faa": 0.7}])
    assert out["faa"]["mean"] == pytest.approx(0.6)
    assert out["faa"]["std"] == pytest.approx(np.std([0.5, 0.7], ddof=1))
    assert aggregate([{"faa": 0.5}])["faa"]["std"] == 0
