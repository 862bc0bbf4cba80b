"""Dense statevector simulation for the Z feature map and the RY/RZ + CNOT ansatz.

Qubit ``q`` is bit ``q`` of the amplitude index (qubit 0 least significant),
so a bitstring printed as ``b_{n-1} ... b_0`` reads as ``int(bitstring, 2)``.
Batched routines take and return arrays of shape ``(batch, 2**n)``.
"""
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels

MAX_QUBITS = 10
NORM_TOL = 1e-10

_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / np.sqrt(2.0)


@dataclass(frozen=True)
class Statevector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128).ravel()
        n = amps.size.bit_length() - 1
        if amps.size != 1 << n or not 1 <= n <= MAX_QUBITS:
            raise ValueError(f"amplitude vector length {amps.size} is not 2**n with 1 <= n <= {MAX_QUBITS}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self):
        return self.amplitudes.size.bit_length() - 1

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self):
        p = np.abs(self.amplitudes) ** 2
        return p / p.sum()

    @classmethod
    def basis(cls, index, n_qubits):
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps)


@dataclass(frozen=True)
class FeatureMapSpec:
    n_qubits: int
    reps: int = 3

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must lie in [1, {MAX_QUBITS}]")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    layers: int = 5
    entanglement: str = "linear"

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must lie in [1, {MAX_QUBITS}]")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.entanglement != "linear":
            raise ValueError("only linear entanglement is supported")

    @property
    def param_count(self):
        return 2 * self.n_qubits * (self.layers + 1)


def _z_table(n):
    idx = np.arange(1 << n)
    return (1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)).astype(np.float64)


def _hadamard_all(states, n):
    for q in range(n):
        _kernels.apply_1q(states, q, _H)
    return states


def zfeature_map_batch(X, spec):
    """Encode each row of ``X``: p times (Hadamards, then exp(i 2 x_k Z_k))."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != spec.n_qubits:
        raise ValueError(f"expected {spec.n_qubits} features per row, got {X.shape[1]}")
    n = spec.n_qubits
    # exp(i sum_k 2 x_k z_k(s)) for every basis state s
    phases = np.exp(1j * (2.0 * X) @ _z_table(n).T)
    states = np.zeros((X.shape[0], 1 << n), dtype=np.complex128)
    states[:, 0] = 1.0
    for _ in range(spec.reps):
        _hadamard_all(states, n)
        states *= phases
    return states


def zfeature_map(x, spec):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("zfeature_map encodes a single feature vector")
    return Statevector(zfeature_map_batch(x[None, :], spec)[0])


def fidelity_kernel(a, b):
    if a.n_qubits != b.n_qubits:
        raise ValueError("statevectors have different qubit counts")
    ov = np.vdot(a.amplitudes, b.amplitudes)
    return float(ov.real * ov.real + ov.imag * ov.imag)


def gram_matrix(X_left, X_right, spec, block=1024):
    """Fidelity Gram matrix; ``X_right=None`` means the symmetric train/train case.

    Each row is encoded once.  The symmetric result is mirrored from its
    upper triangle with an exact unit diagonal.
    """
    left = zfeature_map_batch(X_left, spec)
    symmetric = X_right is None
    right = left if symmetric else zfeature_map_batch(X_right, spec)
    K = np.empty((left.shape[0], right.shape[0]))
    right_t = right.T.copy()
    for start in range(0, left.shape[0], block):
        ov = left[start:start + block].conj() @ right_t
        K[start:start + block] = ov.real ** 2 + ov.imag ** 2
    if symmetric:
        K = np.triu(K) + np.triu(K, 1).T
        np.fill_diagonal(K, 1.0)
    return K


def _ry(theta):
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def _rz_layer(angles, n):
    # RZ(t) = diag(e^{-it/2}, e^{+it/2}); z = +1 on |0>
    return np.exp(-0.5j * (_z_table(n) @ angles))


def entangle_linear(states, n):
    for q in range(n - 1):
        _kernels.apply_cnot(states, q, q + 1)
    return states


def apply_ansatz_batch(states, theta, spec):
    """Rotation layer, then ``layers`` times (CNOT chain, rotation layer).

    Rotation layer ``l`` uses ``theta[2nl : 2nl+n]`` for RY on qubits 0..n-1
    and the next ``n`` entries for RZ.  Works on a copy.
    """
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.size != spec.param_count:
        raise ValueError(f"ansatz needs {spec.param_count} parameters, got {theta.size}")
    n = spec.n_qubits
    states = np.array(states, dtype=np.complex128, order="C", ndmin=2)
    if states.shape[1] != 1 << n:
        raise ValueError(f"states have {states.shape[1]} amplitudes, ansatz acts on {n} qubits")
    for layer in range(spec.layers + 1):
        if layer:
            entangle_linear(states, n)
        off = 2 * n * layer
        for q in range(n):
            _kernels.apply_1q(states, q, _ry(theta[off + q]))
        states *= _rz_layer(theta[off + n:off + 2 * n], n)
    return states


def apply_ansatz(state, theta, spec):
    if state.n_qubits != spec.n_qubits:
        raise ValueError("state and ansatz qubit counts differ")
    return Statevector(apply_ansatz_batch(state.amplitudes[None, :], theta, spec)[0])


def sample_counts(state, shots, seed):
    """Multinomial measurement record in the computational basis."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, state.probabilities())
    n = state.n_qubits
    return {format(int(i), f"0{n}b"): int(counts[i]) for i in np.flatnonzero(counts)}


# ------------------------------------------------------------------ Gram cache

def feature_hash(X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    h = hashlib.sha256()
    h.update(str(X.shape).encode())
    h.update(X.tobytes())
    return h.hexdigest()


def save_gram(path, K, spec, X_left, X_right=None):
    meta = {
        "n_qubits": spec.n_qubits,
        "reps": spec.reps,
        "left_hash": feature_hash(X_left),
        "right_hash": feature_hash(X_left if X_right is None else X_right),
    }
    with open(path, "wb") as fh:
        np.savez(fh, gram=K, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8))


def load_gram(path, spec, X_left, X_right=None):
    """Cached Gram matrix, or None when the file was built for other inputs."""
    with np.load(path) as data:
        meta = json.loads(data["meta"].tobytes().decode())
        expected = {
            "n_qubits": spec.n_qubits,
            "reps": spec.reps,
            "left_hash": feature_hash(X_left),
            "right_hash": feature_hash(X_left if X_right is None else X_right),
        }
        if meta != expected:
            return None
        return data["gram"]
