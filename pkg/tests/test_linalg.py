import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cssc.linalg import (NotDiagonallyDominant, SingularMatrix, TridiagonalSystem,
                         solve_dense_oracle, solve_thomas, solve_thomas_transposed,
                         thomas)
from oracles import random_dominant_system


def test_small_known_system():
    sys_ = TridiagonalSystem([1.0, 1.0], [4.0, 4.0, 4.0], [1.0, 1.0], [5.0, 6.0, 5.0])
    np.testing.assert_allclose(solve_thomas(sys_), [1.0, 1.0, 1.0], atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 40), k=st.integers(1, 3), seed=st.integers(0, 2 ** 32 - 1))
def test_matches_dense_oracle(n, k, seed):
    rng = np.random.default_rng(seed)
    sub, diag, sup, rhs = random_dominant_system(rng, n, k)
    sys_ = TridiagonalSystem(sub, diag, sup, rhs)
    x = solve_thomas(sys_)
    np.testing.assert_allclose(x, solve_dense_oracle(sys_.dense(), rhs), atol=1e-10, rtol=0)
    A = sys_.dense()
    assert np.max(np.abs(A @ x - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_transposed_solve():
    rng = np.random.default_rng(3)
    sub, diag, sup, rhs = random_dominant_system(rng, 12, 2)
    diag = diag * 3.0  # dominant by columns too
    sys_ = TridiagonalSystem(sub, diag, sup, rhs)
    y = solve_thomas_transposed(sys_, rhs)
    np.testing.assert_allclose(sys_.dense().T @ y, rhs, atol=1e-12)


def test_batched_leading_axes():
    rng = np.random.default_rng(4)
    systems = [random_dominant_system(rng, 7, 2) for _ in range(3)]
    sub, diag, sup, rhs = (np.stack(a) for a in zip(*systems))
    x = thomas(sub, diag, sup, rhs)
    for i, s in enumerate(systems):
        np.testing.assert_allclose(x[i], solve_thomas(TridiagonalSystem(*s)), atol=1e-13)


def test_empty_system():
    assert thomas(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros((0, 2))).shape == (0, 2)


def test_dominance_is_enforced():
    sys_ = TridiagonalSystem([3.0], [1.0, 1.0], [0.5], [1.0, 1.0])
    with pytest.raises(NotDiagonallyDominant):
        solve_thomas(sys_)


def test_dense_oracle_singular():
    with pytest.raises(SingularMatrix):
        solve_dense_oracle(np.ones((3, 3)), np.ones(3))


def test_linear_time_scaling():
    rng = np.random.default_rng(0)

    def best_time(n):
        sub, diag, sup, rhs = random_dominant_system(rng, n)
        sys_ = TridiagonalSystem(sub, diag, sup, rhs)
        times = []
        for _ in range(5):
            t0 = time.perf_counter()
            solve_thomas(sys_)
            times.append(time.perf_counter() - t0)
        return min(times)

    assert best_time(20_000) / best_time(10_000) <= 3.0
