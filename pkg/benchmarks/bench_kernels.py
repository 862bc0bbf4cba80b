"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called once before timing so JIT compilation is excluded.
Prints one line per kernel: best wall time of each flavour and the ratio.
"""
import argparse
import time

import numpy as np

from annni_qml import _kernels, ml, model


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    h = model.build_hamiltonian(model.ChainConfig(12, 0.4, 0.7))
    X = rng.standard_normal((h.dimension, 4))
    out = np.empty_like(X)
    yield "hamiltonian_matvec N=12 b=4", {
        "numba": lambda: _kernels.hamiltonian_matvec_nb(h.diagonal, 0.7, 12, X, out),
        "numpy": lambda: _kernels.hamiltonian_matvec_np(h.diagonal, 0.7, 12, X, out),
    }

    states = rng.standard_normal((7000, 32)) + 1j * rng.standard_normal((7000, 32))
    u = np.linalg.qr(rng.standard_normal((2, 2)))[0].astype(np.complex128)
    yield "apply_1q 7000x5 qubits", {
        "numba": lambda: [_kernels.apply_1q_nb(states, q, u) for q in range(5)],
        "numpy": lambda: [_kernels.apply_1q_np(states, q, u) for q in range(5)],
    }
    yield "apply_cnot 7000x5 qubits", {
        "numba": lambda: [_kernels.apply_cnot_nb(states, q, q + 1) for q in range(4)],
        "numpy": lambda: [_kernels.apply_cnot_np(states, q, q + 1) for q in range(4)],
    }

    P = rng.uniform(size=(2000, 5))
    y = np.where(P[:, 0] + P[:, 1] + 0.2 * rng.standard_normal(2000) > 1, 1.0, -1.0)
    K = ml.rbf_gram(P, P, ml.scale_gamma(P))
    yield "smo n=2000", {
        "numba": lambda: _kernels.smo_nb(K, y, 1.0, 1e-3, 1_000_000, False),
        "numpy": lambda: _kernels.smo_np(K, y, 1.0, 1e-3, 1_000_000, False),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':30s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, impls in cases(rng):
        t_nb = best_of(impls["numba"], args.repeat)
        t_np = best_of(impls["numpy"], args.repeat)
        print(f"{name:30s} {1e3 * t_nb:10.2f} {1e3 * t_np:10.2f} {t_np / t_nb:8.1f}")


if __name__ == "__main__":
    main()
