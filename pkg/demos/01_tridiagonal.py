"""Solving the moment system: the Thomas algorithm in linear time.

Run: python3 demos/01_tridiagonal.py
"""

import time

import numpy as np

from cssc.linalg import TridiagonalSystem, solve_dense_oracle, solve_thomas

rng = np.random.default_rng(0)


def dominant_system(n):
    sub, sup = rng.uniform(-1, 1, (2, n - 1))
    diag = 2.5 + rng.uniform(0, 1, n)  # |diag| > |sub| + |sup| on every row
    return TridiagonalSystem(sub, diag, sup, rhs=rng.normal(size=n))

print("A small diagonally dominant system, solved two ways:")
small = dominant_system(6)
fast = solve_thomas(small)
dense = solve_dense_oracle(small.dense(), small.rhs)
print("  Thomas:", np.round(fast, 6))
print("  dense: ", np.round(dense, 6))
print(f"  largest difference {np.abs(fast - dense).max():.1e}\n")



def best_time(sys_, repeats=5):
    runs = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        solve_thomas(sys_)
        runs.append(time.perf_counter() - t0)
    return min(runs)


print("Cost grows linearly with the number of unknowns:")
for n in (5_000, 10_000, 20_000, 40_000):
    print(f"  n = {n:6d}: {best_time(dominant_system(n)) * 1e3:6.2f} ms")
