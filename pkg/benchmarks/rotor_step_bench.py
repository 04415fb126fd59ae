"""Throughput benchmark for the rotor split-step kernel.

Compares the production batched implementation against a naive per-state
reference (same math, one state at a time) and reports per-state step cost
for both precisions.  Run with ``python benchmarks/rotor_step_bench.py``.
"""

import time

import numpy as np

from quenchlab.rotor import RotorOperator, RotorParams, rotor_step


def naive_steps(states, op, n_steps):
    out = np.empty_like(states)
    for i in range(states.shape[0]):
        psi = states[i]
        for _ in range(n_steps):
            psi = rotor_step(psi, op)
        out[i] = psi
    return out


def batched_steps(states, op, n_steps):
    psi = states
    for _ in range(n_steps):
        psi = rotor_step(psi, op)
    return psi


def main():
    n, m, n_steps = 100, 120, 40
    params = RotorParams(n=n, k_a=10.0, k_b=14.0, b=0.02)
    rng = np.random.default_rng(0)
    states = rng.standard_normal((m, n, n)) + 1j * rng.standard_normal((m, n, n))
    states /= np.linalg.norm(states.reshape(m, -1), axis=1)[:, None, None]

    print(f"dimension {n}x{n}, batch {m}, {n_steps} steps per timing")
    for dtype in (np.complex128, np.complex64):
        op = RotorOperator(params, dtype=dtype)
        batch = states.astype(dtype)

        t0 = time.perf_counter()
        ref = naive_steps(batch.copy(), op, n_steps)
        t_naive = time.perf_counter() - t0

        t0 = time.perf_counter()
        fast = batched_steps(batch.copy(), op, n_steps)
        t_batch = time.perf_counter() - t0

        agree = np.max(np.abs(ref - fast))
        per_state = t_batch / (m * n_steps) * 1e6
        print(
            f"  {np.dtype(dtype).name}: naive {t_naive:6.2f}s, batched {t_batch:6.2f}s "
            f"({t_naive / t_batch:4.1f}x, {per_state:6.1f} us/state/step), "
            f"max |diff| {agree:.2e}"
        )


if __name__ == "__main__":
    main()
