"""Variational quantum classifier trained with SPSA.

Forward pass: Z feature map, RY/RZ + CNOT ansatz, computational-basis
measurement.  A bitstring ``b`` is read as class ``int(b) % class_count``.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import qsim

PROB_FLOOR = 1e-10


@dataclass
class SpsaConfig:
    iterations: int = 100
    a: float = None  # None: calibrate so the first step is about target_step
    c: float = 0.1
    A: float = 10.0
    alpha: float = 0.602
    gamma: float = 0.101
    target_step: float = 0.1
    calibration_probes: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.c <= 0:
            raise ValueError("c must be positive")

    def gains(self, k, a=None):
        """(a_k, c_k) at zero-based iteration k."""
        a = self.a if a is None else a
        return a / (self.A + k + 1) ** self.alpha, self.c / (k + 1) ** self.gamma


@dataclass
class SpsaResult:
    theta: np.ndarray
    history: np.ndarray
    a: float
    evaluations: int


def calibrate_gain(loss, theta0, config, rng):
    """``a`` such that a_0 times the mean gradient magnitude is ``target_step``."""
    mags = []
    for probe in range(config.calibration_probes):
        delta = rng.choice((-1.0, 1.0), size=theta0.size)
        key = -(probe + 1)
        df = loss(theta0 + config.c * delta, key) - loss(theta0 - config.c * delta, key)
        mags.append(abs(df) / (2.0 * config.c))
    mean = float(np.mean(mags))
    scale = config.target_step * (config.A + 1) ** config.alpha
    return scale / mean if mean > 0 else scale


def spsa_minimize(loss, theta0, config):
    """Minimize ``loss(theta, k)``; ``k`` is the iteration index.

    Both perturbed evaluations of an iteration receive the same ``k`` so a
    stochastic loss can use common random numbers for them.  Calibration
    probes use negative keys.  ``history[k]`` is the mean of the two
    perturbed losses at iteration ``k``.
    """
    rng = np.random.default_rng(config.seed)
    theta = np.array(theta0, dtype=np.float64)
    evaluations = 0
    a = config.a
    if a is None:
        a = calibrate_gain(loss, theta, config, rng)
        evaluations += 2 * config.calibration_probes
    history = np.empty(config.iterations)
    for k in range(config.iterations):
        ak, ck = config.gains(k, a)
        delta = rng.choice((-1.0, 1.0), size=theta.size)
        f_plus = loss(theta + ck * delta, k)
        f_minus = loss(theta - ck * delta, k)
        evaluations += 2
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise FloatingPointError(f"non-finite loss at SPSA iteration {k}")
        theta -= ak * (f_plus - f_minus) / (2.0 * ck) * delta
        history[k] = 0.5 * (f_plus + f_minus)
    return SpsaResult(theta, history, a, evaluations)


# ------------------------------------------------------------------ model

@dataclass
class VqcModel:
    feature_map: qsim.FeatureMapSpec
    ansatz: qsim.AnsatzSpec
    theta: np.ndarray
    class_count: int
    shots: int = 600
    seed: int = 0
    loss_history: np.ndarray = field(default=None, repr=False)
    spsa: SpsaConfig = field(default=None, repr=False)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.size != self.ansatz.param_count:
            raise ValueError(f"theta has {self.theta.size} entries, ansatz needs {self.ansatz.param_count}")
        if self.feature_map.n_qubits != self.ansatz.n_qubits:
            raise ValueError("feature map and ansatz act on different qubit counts")
        if self.class_count < 2 or self.class_count > 1 << self.ansatz.n_qubits:
            raise ValueError("class_count must lie in [2, 2**n_qubits]")

    def with_theta(self, theta):
        return VqcModel(self.feature_map, self.ansatz, theta, self.class_count, self.shots, self.seed)


def _readout_matrix(n_qubits, class_count):
    idx = np.arange(1 << n_qubits)
    R = np.zeros((idx.size, class_count))
    R[idx, idx % class_count] = 1.0
    return R


def output_states(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return qsim.apply_ansatz_batch(qsim.zfeature_map_batch(X, model.feature_map), model.theta, model.ansatz)


def exact_class_probabilities(model, X):
    """Born-rule class masses (the infinite-shot limit)."""
    states = output_states(model, X)
    p = states.real ** 2 + states.imag ** 2
    masses = p @ _readout_matrix(model.ansatz.n_qubits, model.class_count)
    return masses / masses.sum(axis=1, keepdims=True)


def sampled_class_probabilities(model, X, rng, shots=None):
    """Class frequencies from ``shots`` measurements per row.

    Binning the bitstring distribution first and drawing one multinomial
    over classes has the same law as sampling bitstrings and binning them.
    """
    shots = model.shots if shots is None else shots
    exact = exact_class_probabilities(model, X)
    counts = rng.multinomial(shots, exact)
    return counts / shots


def vqc_forward(x, model, seed=None, shots=None):
    """Class probability vector for one row; ``shots=0`` gives exact masses."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != model.feature_map.n_qubits:
        raise ValueError(f"expected a row of {model.feature_map.n_qubits} features")
    shots = model.shots if shots is None else shots
    if shots == 0:
        return exact_class_probabilities(model, x[None, :])[0]
    state = qsim.Statevector(output_states(model, x[None, :])[0])
    counts = qsim.sample_counts(state, shots, model.seed if seed is None else seed)
    probs = np.zeros(model.class_count)
    for bits, n in counts.items():
        probs[int(bits, 2) % model.class_count] += n
    return probs / shots


def cross_entropy(probs, y):
    p = probs[np.arange(len(y)), np.asarray(y)]
    return float(np.mean(-np.log(np.maximum(p, PROB_FLOOR))))


def ce_loss(model, X, y, seed=None, shots=None):
    """Mean -log p(true class); ``shots=0`` uses exact probabilities."""
    X = np.atleast_2d(X)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    shots = model.shots if shots is None else shots
    if shots == 0:
        probs = exact_class_probabilities(model, X)
    else:
        rng = np.random.default_rng(model.seed if seed is None else seed)
        probs = sampled_class_probabilities(model, X, rng, shots)
    return cross_entropy(probs, y)


def _eval_seed(seed, key):
    return np.random.SeedSequence([seed, 0 if key >= 0 else 1, abs(key)])


def initial_theta(ansatz, seed):
    return np.random.default_rng(np.random.SeedSequence([seed, 2])).uniform(-np.pi, np.pi, ansatz.param_count)


def vqc_train(X, y, feature_map, ansatz, spsa=None, class_count=None, shots=600, seed=0):
    """Full-batch SPSA on the sampled cross-entropy."""
    spsa = SpsaConfig(seed=seed) if spsa is None else spsa
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    class_count = int(y.max()) + 1 if class_count is None else class_count
    model = VqcModel(feature_map, ansatz, initial_theta(ansatz, seed), class_count, shots, seed)
    readout = _readout_matrix(ansatz.n_qubits, class_count)
    encoded = qsim.zfeature_map_batch(X, feature_map)

    def loss(theta, key):
        states = qsim.apply_ansatz_batch(encoded, theta, ansatz)
        masses = (states.real ** 2 + states.imag ** 2) @ readout
        masses /= masses.sum(axis=1, keepdims=True)
        if shots == 0:
            return cross_entropy(masses, y)
        rng = np.random.default_rng(_eval_seed(seed, key))
        return cross_entropy(rng.multinomial(shots, masses) / shots, y)

    result = spsa_minimize(loss, model.theta, spsa)
    model.theta = result.theta
    model.loss_history = result.history
    model.spsa = SpsaConfig(**{**spsa.__dict__, "a": result.a})
    return model


EVAL_SEED = 12345


def vqc_predict(model, X, seed=EVAL_SEED, shots=None):
    """argmax of sampled class frequencies (ties go to the lowest class)."""
    shots = model.shots if shots is None else shots
    X = np.atleast_2d(X)
    if shots == 0:
        probs = exact_class_probabilities(model, X)
    else:
        probs = sampled_class_probabilities(model, X, np.random.default_rng(seed), shots)
    return np.argmax(probs, axis=1)


# ------------------------------------------------------------------ persistence

def model_to_dict(model):
    return {
        "feature_map": {"n_qubits": model.feature_map.n_qubits, "reps": model.feature_map.reps},
        "ansatz": {"n_qubits": model.ansatz.n_qubits, "layers": model.ansatz.layers,
                   "entanglement": model.ansatz.entanglement},
        "theta": model.theta.tolist(),
        "class_count": model.class_count,
        "shots": model.shots,
        "seed": model.seed,
        "spsa": None if model.spsa is None else dict(model.spsa.__dict__),
        "loss_history": None if model.loss_history is None else model.loss_history.tolist(),
    }


def model_from_dict(d):
    m = VqcModel(
        qsim.FeatureMapSpec(**d["feature_map"]), qsim.AnsatzSpec(**d["ansatz"]),
        d["theta"], d["class_count"], d["shots"], d["seed"],
    )
    if d.get("loss_history") is not None:
        m.loss_history = np.asarray(d["loss_history"])
    if d.get("spsa") is not None:
        m.spsa = SpsaConfig(**d["spsa"])
    return m


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def write_loss_history(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,loss\n")
        for k, v in enumerate(model.loss_history):
            fh.write(f"{k},{v:.12g}\n")
