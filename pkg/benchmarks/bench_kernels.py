#!/usr/bin/env python3
"""Benchmark the numba and numpy statevector kernels against each other.

Runs the two hot operations (k-local unitary application, marginal
probability accumulation) on random states at protocol-realistic sizes and
prints a timing table.  Select a single backend via SQCKA_KERNEL_BACKEND or
compare both (default).

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from sqcka import _kernels

# (total qubits, target axes) mirroring the protocol's hot calls:
#  - 2-qubit copy pieces, the n=3 receivers' copy (6 qubits),
#  - the n=3 depolarizing leg (7 qubits) on the 21-qubit round state.
CASES = [
    (16, (3, 9)),
    (18, (1, 4, 7, 11)),
    (21, (1, 2, 3, 10, 11, 12)),
    (21, (1, 2, 3, 7, 8, 9, 13)),
]


def random_state(rng, qubits):
    amps = rng.normal(size=1 << qubits) + 1j * rng.normal(size=1 << qubits)
    return amps / np.linalg.norm(amps)


def random_unitary(rng, dim):
    mat = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, _ = np.linalg.qr(mat)
    return q


def bench(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    print(f"backends: {backends}")
    header = f"{'case':<28}{'op':<8}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)

    for qubits, axes in CASES:
        dims = (2,) * qubits
        tdim = 1 << len(axes)
        state = random_state(rng, qubits)
        mat = random_unitary(rng, tdim)
        label = f"{qubits}q apply {tdim}x{tdim}"

        times, outs = [], []
        for backend in backends:
            _kernels.set_backend(backend)
            _kernels.apply_matrix(state, dims, axes, mat)  # warm JIT
            t, out = bench(lambda: _kernels.apply_matrix(state, dims, axes, mat),
                           args.repeats)
            times.append(t)
            outs.append(out)
        if len(outs) == 2:
            assert np.max(np.abs(outs[0] - outs[1])) < 1e-12, "backend mismatch"
        row = f"{label:<28}{'apply':<8}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.2f}x"
        print(row)

        times, outs = [], []
        for backend in backends:
            _kernels.set_backend(backend)
            _kernels.axis_probabilities(state, dims, axes)
            t, out = bench(lambda: _kernels.axis_probabilities(state, dims, axes),
                           args.repeats)
            times.append(t)
            outs.append(out)
        if len(outs) == 2:
            assert np.max(np.abs(outs[0] - outs[1])) < 1e-12, "backend mismatch"
        row = f"{label:<28}{'probs':<8}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.2f}x"
        print(row)

    _kernels.set_backend("auto")


if __name__ == "__main__":
    main()
