"""Quantum-kernel SVM: a fidelity Gram matrix fed to the precomputed-kernel SVM.

Only the kernel is quantum.  Training rows are stored so that prediction can
form test-by-train kernel rows against them.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from . import ml, qsim


@dataclass
class QsvmModel:
    svm: ml.SvmModel
    train_X: np.ndarray
    feature_map: qsim.FeatureMapSpec
    selected_features: list = field(default_factory=list)
    kernel: str = "quantum"  # "quantum" | "rbf"
    gamma: float = None

    def __post_init__(self):
        self.train_X = np.asarray(self.train_X, dtype=np.float64)
        if self.train_X.shape[0] != self.svm.n_train:
            raise ValueError(
                f"{self.train_X.shape[0]} stored rows but the SVM was fit on a {self.svm.n_train}-row Gram"
            )

    def kernel_rows(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_map.n_qubits:
            raise ValueError(f"expected {self.feature_map.n_qubits} features, got {X.shape[1]}")
        if self.kernel == "rbf":
            return ml.rbf_gram(X, self.train_X, self.gamma)
        return qsim.gram_matrix(X, self.train_X, self.feature_map)


def qsvm_train(train, y, spec, C=1.0, kernel="quantum", gamma=None, gram=None, selected_features=None):
    """Train on a scaled feature matrix with one qubit per column.

    ``gram`` may supply a precomputed train/train kernel (e.g. from a cache);
    ``kernel="rbf"`` swaps in a classical RBF kernel of width ``gamma``.
    """
    train = np.atleast_2d(np.asarray(train, dtype=np.float64))
    if train.shape[1] != spec.n_qubits:
        raise ValueError(f"feature map has {spec.n_qubits} qubits but the data has {train.shape[1]} columns")
    if kernel == "rbf":
        gamma = ml.scale_gamma(train) if gamma is None else float(gamma)
    elif kernel != "quantum":
        raise ValueError(f"unknown kernel {kernel!r}")
    if gram is None:
        gram = ml.rbf_gram(train, train, gamma) if kernel == "rbf" else qsim.gram_matrix(train, None, spec)
    svm = ml.svm_train(gram, y, C=C, kernel="precomputed")
    sel = [] if selected_features is None else [int(i) for i in selected_features]
    return QsvmModel(svm, train, spec, sel, kernel, gamma)


def qsvm_predict(model, X_test):
    return model.svm.predict(model.kernel_rows(X_test))


def model_to_dict(model):
    return {
        "selected_features": list(model.selected_features),
        "feature_map": {"n_qubits": model.feature_map.n_qubits, "reps": model.feature_map.reps},
        "kernel": model.kernel,
        "gamma": model.gamma,
        "train_X": model.train_X.tolist(),
        "svm": ml.model_to_dict(model.svm),
    }


def model_from_dict(d):
    return QsvmModel(
        ml.model_from_dict(d["svm"]), np.asarray(d["train_X"], dtype=np.float64),
        qsim.FeatureMapSpec(**d["feature_map"]), list(d["selected_features"]),
        d.get("kernel", "quantum"), d.get("gamma"),
    )


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
