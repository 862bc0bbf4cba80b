"""Shapley-value attributions: brute-force enumeration and Kernel SHAP.

The coalition game for a row ``x`` is ``v(S) = mean_b f(h_x(S, b))`` where
``h_x`` keeps the features in ``S`` from ``x`` and takes the rest from a
background row ``b``.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import ml

MAX_EXACT_FEATURES = 20
MAX_EXHAUSTIVE_FEATURES = 20
DEFAULT_EXHAUSTIVE_LIMIT = 14


def all_masks(M):
    idx = np.arange(1 << M)
    return ((idx[:, None] >> np.arange(M)) & 1).astype(bool)


def _mask_index(masks):
    return masks.astype(np.int64) @ (1 << np.arange(masks.shape[1], dtype=np.int64))


class MaskingModel:
    """Black-box ``predict`` plus a background set defining feature removal."""

    chunk_rows = 200_000

    def __init__(self, predict, background):
        self.predict = predict
        self.background = np.atleast_2d(np.asarray(background, dtype=np.float64))
        if self.background.shape[0] == 0:
            raise ValueError("background set is empty")
        probe = np.asarray(predict(self.background[:1]))
        self.scalar_output = probe.ndim == 1
        self.n_outputs = 1 if self.scalar_output else probe.shape[1]

    @property
    def n_features(self):
        return self.background.shape[1]

    def _predict2d(self, rows):
        out = np.asarray(self.predict(rows), dtype=np.float64)
        return out.reshape(rows.shape[0], self.n_outputs)

    def values(self, x, masks):
        """v(S) for every row of the boolean ``masks``; shape (n_masks, n_outputs)."""
        x = np.asarray(x, dtype=np.float64)
        masks = np.atleast_2d(masks)
        nb = self.background.shape[0]
        per_chunk = max(1, self.chunk_rows // nb)
        out = np.empty((masks.shape[0], self.n_outputs))
        for start in range(0, masks.shape[0], per_chunk):
            mk = masks[start:start + per_chunk]
            rows = np.where(mk[:, None, :], x[None, None, :], self.background[None, :, :])
            preds = self._predict2d(rows.reshape(-1, self.n_features))
            out[start:start + mk.shape[0]] = preds.reshape(mk.shape[0], nb, -1).mean(axis=1)
        return out


class SvmMaskingModel(MaskingModel):
    """Per-class one-vs-one scores of an RBF ``SvmModel`` with a fast coalition game.

    exp(-gamma ||z - s||^2) factorizes over features, so the kernel between
    a masked row and a support vector is a product of one factor from the
    first half of the features and one from the second half.  Tables of
    those factors over all half-masks turn the full coalition table into a
    matrix product per background row.  The result is exact, not an
    approximation of the black-box game.
    """

    def __init__(self, svm, background):
        if svm.kernel != "rbf":
            raise ValueError("SvmMaskingModel needs an RBF SvmModel")
        self.svm = svm
        super().__init__(svm.class_scores, background)
        n_sv = svm.support_vectors.shape[0]
        self._coef = np.zeros((n_sv, len(svm.machines)))
        for p, m in enumerate(svm.machines):
            self._coef[m.support, p] = m.dual_coef
        self._bias = np.array([m.bias for m in svm.machines])
        self._cols = [np.flatnonzero(self._coef[:, p]) for p in range(len(svm.machines))]

    def values(self, x, masks):
        x = np.asarray(x, dtype=np.float64)
        masks = np.atleast_2d(masks)
        M = self.n_features
        if M < 2:
            return super().values(x, masks)
        sv = self.svm.support_vectors
        gamma = self.svm.gamma
        n_classes = len(self.svm.classes)
        ma = M // 2
        half_a, half_b = all_masks(ma).astype(np.float64), all_masks(M - ma).astype(np.float64)
        ia = _mask_index(masks[:, :ma])
        ib = _mask_index(masks[:, ma:])
        full = masks.shape[0] * 8 >= 1 << M
        dx = (x[None, :] - sv) ** 2
        acc = np.zeros((masks.shape[0], self.n_outputs))
        for b in self.background:
            db = (b[None, :] - sv) ** 2
            diff = (dx - db).T
            ea = np.exp(-gamma * (half_a @ diff[:ma] + db[:, :ma].sum(1)))
            eb = np.exp(-gamma * (half_b @ diff[ma:] + db[:, ma:].sum(1)))
            if full:
                dec = np.empty((masks.shape[0], len(self._cols)))
                for p, cols in enumerate(self._cols):
                    table = ea[:, cols] @ (eb[:, cols] * self._coef[cols, p]).T
                    dec[:, p] = table[ia, ib]
            else:
                dec = (ea[ia] * eb[ib]) @ self._coef
            dec += self._bias
            acc += ml.ovo_scores(dec, n_classes)
        return acc / self.background.shape[0]


# ------------------------------------------------------------------ exact

def _squeeze(model, arr):
    arr = np.asarray(arr)
    if model.scalar_output:
        return float(arr.reshape(-1)[0]) if arr.size == 1 else arr[..., 0]
    return arr


def shapley_exact(model, x, j):
    """Shapley value of feature ``j`` by summing over every coalition of the others."""
    M = model.n_features
    if M > MAX_EXACT_FEATURES:
        raise ValueError(f"exact enumeration refused for {M} > {MAX_EXACT_FEATURES} features")
    if not 0 <= j < M:
        raise ValueError(f"feature index {j} out of range")
    others = [k for k in range(M) if k != j]
    sub = all_masks(M - 1)
    without = np.zeros((sub.shape[0], M), dtype=bool)
    without[:, others] = sub
    with_j = without.copy()
    with_j[:, j] = True
    sizes = sub.sum(axis=1)
    fact = [math.factorial(s) for s in range(M + 1)]
    weights = np.array([fact[s] * fact[M - s - 1] / fact[M] for s in sizes])
    v = model.values(x, np.vstack([with_j, without]))
    marg = v[: sub.shape[0]] - v[sub.shape[0]:]
    return _squeeze(model, weights @ marg)


# ------------------------------------------------------------------ Kernel SHAP

@dataclass
class Attribution:
    phi0: np.ndarray
    phi: np.ndarray  # (M,) or (M, n_outputs)
    target_output: np.ndarray

    def efficiency_gap(self):
        return np.max(np.abs(self.phi0 + np.sum(self.phi, axis=0) - self.target_output))


def shapley_kernel_weight(M, s):
    return (M - 1) / (math.comb(M, s) * s * (M - s))


def exhaustive_coalitions(M):
    masks = all_masks(M)[1:-1]
    sizes = masks.sum(axis=1)
    w = np.array([0.0] + [shapley_kernel_weight(M, s) for s in range(1, M)] + [0.0])
    return masks, w[sizes]


def sampled_coalitions(M, budget, rng):
    """Shapley-kernel coalitions under a mask budget.

    Sizes (paired with their complements) are enumerated completely, from
    the smallest, while the budget covers them in expectation; the rest is
    drawn proportionally to the kernel mass, each draw paired with its
    complement.  Duplicate draws merge their weights.
    """
    n_sizes = (M - 1 + 1) // 2
    n_paired = (M - 1) // 2
    size_mass = np.array([(M - 1) / (s * (M - s)) for s in range(1, n_sizes + 1)])
    size_mass[:n_paired] *= 2
    size_mass /= size_mass.sum()
    masks, weights = [], []
    left = budget
    remaining = size_mass.copy()
    full_sizes = 0
    for s in range(1, n_sizes + 1):
        paired = s <= n_paired
        n_sub = math.comb(M, s) * (2 if paired else 1)
        if remaining[s - 1] <= 0 or left * remaining[s - 1] / n_sub < 1 - 1e-8:
            break
        base = all_masks(M)
        base = base[base.sum(axis=1) == s]
        w = shapley_kernel_weight(M, s)
        masks.append(base)
        weights.append(np.full(base.shape[0], w))
        if paired:
            masks.append(~base)
            weights.append(np.full(base.shape[0], w))
        left -= n_sub
        full_sizes = s
        if remaining[s - 1] < 1:
            remaining = remaining / (1 - remaining[s - 1])
        remaining[s - 1] = 0.0

    if full_sizes < n_sizes and left > 0:
        rest = remaining[full_sizes:]
        rest = rest / rest.sum()
        rest_mass = sum(
            math.comb(M, s) * shapley_kernel_weight(M, s)
            for s in range(full_sizes + 1, M - full_sizes)
        )
        draws = {}
        n_draw = max(1, left // 2)
        for _ in range(n_draw):
            s = full_sizes + 1 + int(rng.choice(rest.size, p=rest))
            m = np.zeros(M, dtype=bool)
            m[rng.permutation(M)[:s]] = True
            for mm in (m, ~m):
                key = mm.tobytes()
                draws[key] = draws.get(key, 0) + 1
        keys = list(draws)
        sampled = np.array([np.frombuffer(k, dtype=bool) for k in keys])
        counts = np.array([draws[k] for k in keys], dtype=np.float64)
        masks.append(sampled)
        weights.append(counts * rest_mass / counts.sum())
    if not masks:
        raise ValueError("coalition budget too small")
    return np.vstack(masks), np.concatenate(weights)


def _solve(masks, weights, V, phi0, fx):
    """Weighted least squares with phi0 fixed and sum(phi) = fx - phi0."""
    Z = masks.astype(np.float64)
    M = Z.shape[1]
    A = Z[:, :-1] - Z[:, -1:]
    t = V - phi0 - Z[:, -1:] * (fx - phi0)
    sw = np.sqrt(weights)[:, None]
    Aw = A * sw
    if np.linalg.matrix_rank(Aw) < M - 1:
        raise ValueError("degenerate Kernel SHAP regression: coalition masks do not span the features")
    beta, *_ = np.linalg.lstsq(Aw, t * sw, rcond=None)
    last = (fx - phi0) - beta.sum(axis=0)
    return np.vstack([beta, last[None, :]])


def kernel_shap(model, x, n_coalitions=None, seed=0, exhaustive=None):
    """Kernel SHAP attribution of row ``x``.

    ``exhaustive`` defaults to True when ``n_coalitions`` is None and
    ``M <= 14``, or when the budget covers every coalition.  Exhaustive mode
    reproduces the brute-force Shapley values.
    """
    x = np.asarray(x, dtype=np.float64)
    M = model.n_features
    if x.shape != (M,):
        raise ValueError(f"row has shape {x.shape}, model expects {M} features")
    if M < 2:
        raise ValueError("need at least two features")
    if exhaustive is None:
        exhaustive = (n_coalitions is None and M <= DEFAULT_EXHAUSTIVE_LIMIT) or (
            n_coalitions is not None and n_coalitions >= (1 << M) - 2
        )
    ends = np.zeros((2, M), dtype=bool)
    ends[1] = True
    if exhaustive:
        if M > MAX_EXHAUSTIVE_FEATURES:
            raise ValueError(f"exhaustive Kernel SHAP refused for {M} features")
        masks, weights = exhaustive_coalitions(M)
    else:
        if n_coalitions is None:
            raise ValueError(f"{M} features: give n_coalitions or request exhaustive mode")
        if n_coalitions < M + 2:
            raise ValueError(f"need at least M + 2 = {M + 2} coalitions")
        masks, weights = sampled_coalitions(M, n_coalitions, np.random.default_rng(seed))
    V = model.values(x, np.vstack([ends, masks]))
    phi0, fx = V[0], V[1]
    phi = _solve(masks, weights, V[2:], phi0, fx)
    if model.scalar_output:
        return Attribution(phi0[0], phi[:, 0], fx[0])
    return Attribution(phi0, phi, fx)


# ------------------------------------------------------------------ reports

@dataclass
class ShapReport:
    importance: np.ndarray
    ranking: np.ndarray
    n_samples_explained: int
    feature_names: list = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        names = self.feature_names or [str(k) for k in range(self.importance.size)]
        return {
            "feature_names": names,
            "importance": [float(v) for v in self.importance],
            "ranking": [int(k) for k in self.ranking],
            "ranked_names": [names[k] for k in self.ranking],
            "n_samples_explained": int(self.n_samples_explained),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["importance"]), np.asarray(d["ranking"], dtype=np.int64),
                   d["n_samples_explained"], d.get("feature_names"), d.get("meta", {}))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, ensure_ascii=False)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def write_plot_csv(self, path):
        names = self.feature_names or [str(k) for k in range(self.importance.size)]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("rank,feature,importance\n")
            for r, k in enumerate(self.ranking):
                fh.write(f"{r + 1},{names[k]},{self.importance[k]:.12g}\n")


def rank_features(importance):
    importance = np.asarray(importance)
    return np.lexsort((np.arange(importance.size), -importance))


def global_importance(model, X_explain, n_coalitions=None, seed=0, exhaustive=None, feature_names=None):
    """Mean |phi| over explained rows and model outputs, ranked descending."""
    X_explain = np.atleast_2d(np.asarray(X_explain, dtype=np.float64))
    if X_explain.shape[0] == 0:
        raise ValueError("nothing to explain")
    total = np.zeros(model.n_features)
    for r, x in enumerate(X_explain):
        att = kernel_shap(model, x, n_coalitions, seed=(seed, r) if seed is not None else None,
                          exhaustive=exhaustive)
        phi = np.abs(np.asarray(att.phi).reshape(model.n_features, -1))
        total += phi.mean(axis=1)
    importance = total / X_explain.shape[0]
    return ShapReport(importance, rank_features(importance), X_explain.shape[0], feature_names)


def select_top_k(report, k):
    M = report.ranking.size
    if not 1 <= k <= M:
        raise ValueError(f"k must lie in [1, {M}], got {k}")
    return [int(i) for i in report.ranking[:k]]
