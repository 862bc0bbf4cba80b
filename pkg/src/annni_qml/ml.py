"""Min-max scaling, shuffled splits, RBF kernel and an SMO-trained kernel SVM.

Multiclass problems are decomposed one-vs-one.  In the binary problem for
classes ``(a, b)`` with ``a < b`` class ``a`` carries label +1, so a positive
decision value votes for ``a``.
"""
import itertools
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lanczos import ConvergenceError

log = logging.getLogger(__name__)

KKT_TOL = 1e-3
MAX_ITER = 1_000_000


# ------------------------------------------------------------------ scaling

@dataclass
class ScalerParams:
    min: np.ndarray
    max: np.ndarray


def fit_scaler(X_train):
    X = np.asarray(X_train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty matrix")
    return ScalerParams(X.min(axis=0), X.max(axis=0))


def apply_scaler(params, X):
    X = np.asarray(X, dtype=np.float64)
    span = params.max - params.min
    safe = np.where(span > 0, span, 1.0)
    out = (X - params.min) / safe
    # constant training columns map to 0
    out[..., span <= 0] = 0.0
    return out


# ------------------------------------------------------------------ splitting

@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.3
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie strictly between 0 and 1")


def split_indices(n, spec):
    if n < 2:
        raise ValueError("need at least two rows to split")
    n_test = int(np.floor(spec.test_fraction * n + 0.5))
    order = np.random.default_rng(spec.seed).permutation(n) if spec.shuffle else np.arange(n)
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def train_test_split(ds, spec):
    """(train, test) datasets; rows keep their original relative order."""
    train_idx, test_idx = split_indices(len(ds), spec)
    return ds.subset(train_idx), ds.subset(test_idx)


# ------------------------------------------------------------------ kernels

def rbf_kernel(x, x2, gamma):
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise ValueError("rbf_kernel needs vectors of equal dimension")
    d = x - x2
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_gram(A, B, gamma):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError("feature dimensions differ")
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def scale_gamma(X):
    """1 / (n_features * Var(X)), the usual data-driven RBF width."""
    X = np.asarray(X, dtype=np.float64)
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


# ------------------------------------------------------------------ SVM

@dataclass
class BinarySvm:
    classes: tuple  # (positive, negative)
    support: np.ndarray  # indices into the training rows
    dual_coef: np.ndarray  # alpha_i * y_i on the support
    bias: float
    iterations: int = 0
    objective: np.ndarray = field(default=None, repr=False)

    def decision(self, K_rows):
        """K_rows: kernel values against *all* training rows, (m, n_train)."""
        return K_rows[:, self.support] @ self.dual_coef + self.bias


@dataclass
class SvmModel:
    kernel: str  # "rbf" | "precomputed"
    C: float
    gamma: float
    classes: np.ndarray
    machines: list
    support_vectors: np.ndarray = None  # training rows (rbf only)
    n_train: int = 0

    def kernel_rows(self, X):
        if self.kernel != "rbf":
            raise ValueError("a precomputed-kernel model needs kernel rows, not features")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ValueError(
                f"model expects {self.support_vectors.shape[1]} features, got {X.shape[1]}"
            )
        return rbf_gram(X, self.support_vectors, self.gamma)

    def _as_kernel_rows(self, K_or_X):
        if self.kernel == "rbf":
            return self.kernel_rows(K_or_X)
        K = np.atleast_2d(np.asarray(K_or_X, dtype=np.float64))
        if K.shape[1] != self.n_train:
            raise ValueError(f"kernel rows need {self.n_train} columns, got {K.shape[1]}")
        return K

    def pair_decisions(self, K_or_X):
        """(m, n_pairs) binary decision values, pairs in ``machines`` order."""
        K = self._as_kernel_rows(K_or_X)
        return np.column_stack([mach.decision(K) for mach in self.machines])

    def class_scores(self, K_or_X):
        """Per-class one-vs-one vote counts plus a bounded margin tiebreaker.

        score_c = votes_c + m_c / (3 (|m_c| + 1)) with m_c the sum of signed
        margins toward ``c``; the fraction never overturns a vote difference.
        """
        return ovo_scores(self.pair_decisions(K_or_X), len(self.classes))

    def predict(self, K_or_X):
        votes = ovo_votes(self.pair_decisions(K_or_X), len(self.classes))
        return self.classes[np.argmax(votes, axis=1)]


def class_pairs(n_classes):
    return list(itertools.combinations(range(n_classes), 2))


def ovo_votes(decisions, n_classes):
    votes = np.zeros((decisions.shape[0], n_classes))
    for p, (a, b) in enumerate(class_pairs(n_classes)):
        win_a = decisions[:, p] > 0
        votes[:, a] += win_a
        votes[:, b] += ~win_a
    return votes


def ovo_scores(decisions, n_classes):
    margins = np.zeros((decisions.shape[0], n_classes))
    for p, (a, b) in enumerate(class_pairs(n_classes)):
        margins[:, a] += decisions[:, p]
        margins[:, b] -= decisions[:, p]
    return ovo_votes(decisions, n_classes) + margins / (3.0 * (np.abs(margins) + 1.0))


def _bias(alpha, G, y, C):
    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        rho = yG[free].mean()
    else:
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb)
    return -float(rho)


def solve_binary(K, y, C, tol=KKT_TOL, max_iter=MAX_ITER, record=False):
    """SMO on one binary dual; returns (alpha, bias, iterations, objective history)."""
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    alpha, G, it, converged, hist = _kernels.smo(K, y, float(C), float(tol), int(max_iter), bool(record))
    if not converged:
        raise ConvergenceError(f"SMO hit the iteration cap ({max_iter}) before KKT tolerance {tol}")
    return alpha, _bias(alpha, G, y, C), it, (hist if record else None)


def svm_train(K_or_X, y, C=1.0, kernel="rbf", gamma="scale", tol=KKT_TOL, max_iter=MAX_ITER,
              record_objective=False):
    """One-vs-one C-SVC.

    ``kernel="rbf"``: ``K_or_X`` is the feature matrix.  ``kernel="precomputed"``:
    it is the square train/train Gram matrix (symmetrized before use).
    """
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("training labels contain a single class")
    if kernel == "rbf":
        X = np.asarray(K_or_X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ValueError("feature matrix rows must match labels")
        g = scale_gamma(X) if gamma == "scale" else float(gamma)
        if g <= 0:
            raise ValueError("gamma must be positive")
        K_full = rbf_gram(X, X, g)
    elif kernel == "precomputed":
        K_full = np.asarray(K_or_X, dtype=np.float64)
        if K_full.ndim != 2 or K_full.shape[0] != K_full.shape[1]:
            raise ValueError("precomputed kernel must be square")
        if K_full.shape[0] != y.size:
            raise ValueError("kernel size must match labels")
        K_full = 0.5 * (K_full + K_full.T)
        g = float("nan")
    else:
        raise ValueError(f"unknown kernel {kernel!r}")

    machines = []
    for a, b in class_pairs(classes.size):
        idx = np.flatnonzero((y == classes[a]) | (y == classes[b]))
        yy = np.where(y[idx] == classes[a], 1.0, -1.0)
        alpha, bias, it, hist = solve_binary(K_full[np.ix_(idx, idx)], yy, C, tol, max_iter, record_objective)
        sv = np.flatnonzero(alpha > 0)
        machines.append(BinarySvm((a, b), idx[sv], alpha[sv] * yy[sv], bias, it, hist))
        log.debug("pair (%s, %s): %d SVs, %d iterations", classes[a], classes[b], sv.size, it)

    model = SvmModel(kernel, float(C), g, classes, machines, n_train=y.size)
    if kernel == "rbf":
        # keep only rows that are support vectors somewhere; reindex machines
        used = np.unique(np.concatenate([m.support for m in machines]))
        remap = np.full(y.size, -1)
        remap[used] = np.arange(used.size)
        for m in machines:
            m.support = remap[m.support]
        model.support_vectors = X[used]
        model.n_train = used.size
    return model


def svm_predict(model, K_row_or_x):
    return model.predict(K_row_or_x)


def accuracy(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("prediction and truth must be non-empty and equally shaped")
    return float(np.count_nonzero(pred == truth)) / pred.size


def confusion_counts(pred, truth, n_classes):
    M = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(M, (np.asarray(truth), np.asarray(pred)), 1)
    return M


# ------------------------------------------------------------------ persistence

def model_to_dict(model):
    return {
        "kernel": model.kernel,
        "C": model.C,
        "gamma": None if np.isnan(model.gamma) else model.gamma,
        "classes": [int(c) for c in model.classes],
        "n_train": int(model.n_train),
        "machines": [
            {
                "classes": [int(c) for c in m.classes],
                "support": m.support.tolist(),
                "dual_coef": m.dual_coef.tolist(),
                "bias": m.bias,
                "iterations": int(m.iterations),
            }
            for m in model.machines
        ],
        "support_vectors": None if model.support_vectors is None else model.support_vectors.tolist(),
    }


def model_from_dict(d):
    machines = [
        BinarySvm(tuple(m["classes"]), np.asarray(m["support"], dtype=np.int64),
                  np.asarray(m["dual_coef"], dtype=np.float64), float(m["bias"]), m.get("iterations", 0))
        for m in d["machines"]
    ]
    sv = d.get("support_vectors")
    return SvmModel(
        d["kernel"], float(d["C"]), float("nan") if d["gamma"] is None else float(d["gamma"]),
        np.asarray(d["classes"]), machines,
        None if sv is None else np.asarray(sv, dtype=np.float64), int(d["n_train"]),
    )


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
