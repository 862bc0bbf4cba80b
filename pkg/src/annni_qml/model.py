"""ANNNI chain: Hamiltonian, ground manifold, spin correlations, phase labels.

Basis convention: site ``j`` (1-based) is bit ``j - 1`` of the basis index,
bit value 0 is spin up (sigma^z = +1).  The chain is periodic.
"""
import csv
import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .lanczos import ConvergenceError, ground_cluster

log = logging.getLogger(__name__)

AXES = ("xx", "yy", "zz")
MIN_SITES = 4
MAX_SITES = 14
DEGENERACY_TOL = 1e-8
RESIDUAL_TOL = 1e-9


class Phase(enum.IntEnum):
    FERROMAGNETIC = 0
    PARAMAGNETIC = 1
    ANTIPHASE = 2

    @property
    def label(self):
        return self.name.lower()

    @classmethod
    def from_label(cls, text):
        return cls[text.strip().upper()]


@dataclass(frozen=True)
class ChainConfig:
    n_sites: int
    kappa: float
    g: float
    j_coupling: float = 1.0

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites % 2:
            raise ValueError(f"n_sites must be an even integer, got {self.n_sites}")
        if not MIN_SITES <= self.n_sites <= MAX_SITES:
            raise ValueError(f"n_sites must lie in [{MIN_SITES}, {MAX_SITES}], got {self.n_sites}")
        if self.kappa < 0 or self.g < 0:
            raise ValueError("kappa and g must be non-negative")
        if self.j_coupling != 1.0:
            raise ValueError("j_coupling is fixed to 1")


@lru_cache(maxsize=None)
def _bond_sums(n_sites):
    """Per basis state: sum of z_j z_{j+1} and of z_j z_{j+2} around the ring."""
    states = np.arange(1 << n_sites)
    z = 1 - 2 * ((states[:, None] >> np.arange(n_sites)) & 1)
    nn = (z * np.roll(z, -1, axis=1)).sum(axis=1)
    nnn = (z * np.roll(z, -2, axis=1)).sum(axis=1)
    return nn.astype(np.float64), nnn.astype(np.float64)


@lru_cache(maxsize=None)
def _z_signs(n_sites):
    states = np.arange(1 << n_sites)
    return (1 - 2 * ((states[:, None] >> np.arange(n_sites)) & 1)).astype(np.float64)


class HamiltonianMatrix:
    """H = -J sum_j (z_j z_{j+1} - kappa z_j z_{j+2} + g x_j), stored matrix-free.

    The diagonal carries the Ising terms, the transverse field contributes
    ``-J g`` on every single-spin-flip pair.  ``matrix`` materializes the
    sparse CSR form when one is needed.
    """

    def __init__(self, config):
        self.config = config
        nn, nnn = _bond_sums(config.n_sites)
        J = config.j_coupling
        self.diagonal = -J * (nn - config.kappa * nnn)
        self.field = J * config.g

    @property
    def n_sites(self):
        return self.config.n_sites

    @property
    def dimension(self):
        return 1 << self.config.n_sites

    @property
    def is_diagonal(self):
        return self.field == 0.0

    def norm_lower_bound(self):
        """max |H_ss| <= ||H||_2; cheap scale for residual tolerances."""
        return float(np.abs(self.diagonal).max())

    def matvec(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        squeeze = X.ndim == 1
        if squeeze:
            X = X[:, None]
        out = np.empty_like(X)
        _kernels.hamiltonian_matvec(self.diagonal, self.field, self.n_sites, X, out)
        return out[:, 0] if squeeze else out

    @property
    def matrix(self):
        n = self.dimension
        states = np.arange(n)
        rows = np.repeat(states, self.n_sites)
        cols = (states[:, None] ^ (1 << np.arange(self.n_sites))).ravel()
        flips = sp.csr_matrix((np.full(rows.size, -self.field), (rows, cols)), shape=(n, n))
        return (sp.diags(self.diagonal) + flips).tocsr()

    def toarray(self):
        return self.matrix.toarray()


def build_hamiltonian(config):
    if not isinstance(config, ChainConfig):
        raise TypeError("expected a ChainConfig")
    return HamiltonianMatrix(config)


@dataclass
class GroundSubspace:
    energy: float
    basis: np.ndarray  # (dimension, degeneracy), orthonormal columns
    degeneracy_tol: float
    n_sites: int
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def degeneracy(self):
        return self.basis.shape[1]


def ground_subspace(h, degeneracy_tol=DEGENERACY_TOL, *, start=None, seed=0):
    """Orthonormal basis of every eigenvector within ``degeneracy_tol`` of E0.

    A purely diagonal H is read off directly.  Otherwise block Lanczos is
    run; ``start`` may carry vectors from a nearby parameter point.
    Residuals satisfy ``||Hv - Ev|| <= 1e-9 ||H||``.
    """
    n = h.dimension
    if h.is_diagonal:
        e0 = float(h.diagonal.min())
        idx = np.flatnonzero(h.diagonal - e0 <= degeneracy_tol)
        basis = np.zeros((n, idx.size))
        basis[idx, np.arange(idx.size)] = 1.0
        return GroundSubspace(e0, basis, degeneracy_tol, h.n_sites, np.zeros(idx.size))
    res_tol = RESIDUAL_TOL * h.norm_lower_bound()
    if n <= 64:
        evals, evecs = np.linalg.eigh(h.toarray())
        d = int(np.count_nonzero(evals - evals[0] <= degeneracy_tol))
        basis = evecs[:, :d]
        res = np.linalg.norm(h.matvec(basis) - evals[0] * basis, axis=0)
        return GroundSubspace(float(evals[0]), basis, degeneracy_tol, h.n_sites, res)
    result = ground_cluster(h.matvec, n, degeneracy_tol, res_tol, start=start, seed=seed)
    basis = result.vectors
    return GroundSubspace(
        float(result.values[0]), basis, degeneracy_tol, h.n_sites, result.residuals
    )


def _check_sites(n_sites, i, j):
    if not 1 <= i < j <= n_sites:
        raise ValueError(f"need 1 <= i < j <= {n_sites}, got i={i}, j={j}")


def _correlation(basis, n_sites, axis, i, j):
    mask = (1 << (i - 1)) | (1 << (j - 1))
    z = _z_signs(n_sites)
    zz = z[:, i - 1] * z[:, j - 1]
    if axis == "z":
        val = np.sum(zz[:, None] * basis * basis)
    else:
        flipped = basis[np.arange(basis.shape[0]) ^ mask]
        if axis == "x":
            val = np.sum(basis * flipped)
        elif axis == "y":
            val = -np.sum(zz[:, None] * basis * flipped)
        else:
            raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    return float(val) / basis.shape[1]


def pair_correlation(sub, axis, i, j):
    """Degeneracy-averaged <sigma^a_i sigma^a_j>, sites 1-based."""
    _check_sites(sub.n_sites, i, j)
    return _correlation(sub.basis, sub.n_sites, axis, i, j)


def feature_names(n_sites):
    half = n_sites // 2
    return [f"⟨{a}⟩_1_{j}" for a in AXES for j in range(2, half + 2)]


def correlation_features(sub):
    half = sub.n_sites // 2
    return np.array(
        [_correlation(sub.basis, sub.n_sites, a[0], 1, j) for a in AXES for j in range(2, half + 2)]
    )


# ---------------------------------------------------------------- phase labels

def g_ising(kappa):
    """Approximate ferro/para critical field for 0 <= kappa <= 1/2 (1 at kappa=0)."""
    if kappa == 0:
        return 1.0
    return (1.0 - kappa) / kappa * (
        1.0 - math.sqrt((1.0 - 3.0 * kappa + 4.0 * kappa * kappa) / (1.0 - kappa))
    )


def g_bkt(kappa):
    """Approximate floating/para (BKT) critical field for kappa > 1/2."""
    return 1.05 * math.sqrt((kappa - 0.5) * (kappa - 0.1))


def phase_label(kappa, g):
    if kappa < 0 or g < 0:
        raise ValueError("kappa and g must be non-negative")
    if kappa <= 0.5:
        return Phase.FERROMAGNETIC if g < g_ising(kappa) else Phase.PARAMAGNETIC
    return Phase.ANTIPHASE if g < g_bkt(kappa) else Phase.PARAMAGNETIC


def boundary_field(kappa):
    return g_ising(kappa) if kappa <= 0.5 else g_bkt(kappa)


# ---------------------------------------------------------------- dataset

@dataclass
class Dataset:
    kappa: np.ndarray
    g: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    feature_names: list
    n_sites: int

    def __post_init__(self):
        self.kappa = np.asarray(self.kappa, dtype=np.float64)
        self.g = np.asarray(self.g, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.feature_names = list(self.feature_names)
        if self.features.shape != (self.kappa.size, len(self.feature_names)):
            raise ValueError("feature matrix does not match rows x feature names")

    def __len__(self):
        return self.kappa.size

    @property
    def n_features(self):
        return len(self.feature_names)

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(
            self.kappa[idx], self.g[idx], self.features[idx], self.labels[idx],
            self.feature_names, self.n_sites,
        )

    def rows(self):
        for k, g, x, y in zip(self.kappa, self.g, self.features, self.labels):
            yield {"kappa": float(k), "g": float(g), "features": x, "label": Phase(int(y))}

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kappa", "g", *self.feature_names, "label"])
            for k, g, x, y in zip(self.kappa, self.g, self.features, self.labels):
                w.writerow([fmt_float(k), fmt_float(g), *map(fmt_float, x), Phase(int(y)).label])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            r = csv.reader(fh)
            header = next(r)
            if header[:2] != ["kappa", "g"] or header[-1] != "label":
                raise ValueError(f"{path}: not a dataset file (header {header[:3]}...)")
            rows = list(r)
        names = header[2:-1]
        if not rows:
            raise ValueError(f"{path}: no rows")
        body = np.array([row[:-1] for row in rows], dtype=np.float64)
        labels = [Phase.from_label(row[-1]) for row in rows]
        n_sites = 2 * (len(names) // 3)
        return cls(body[:, 0], body[:, 1], body[:, 2:], labels, names, n_sites)


def fmt_float(v):
    return f"{float(v) + 0.0:.12g}"


def grid_values(grid_step=0.01):
    count = int(round(1.0 / grid_step))
    if count < 1 or not math.isclose(count * grid_step, 1.0, rel_tol=1e-9):
        raise ValueError(f"grid_step must divide 1, got {grid_step}")
    return np.round(np.arange(count) * grid_step, 12)


def _kappa_row(n_sites, kappa, gs):
    feats = np.empty((len(gs), 3 * (n_sites // 2)))
    start = None
    for col, g in enumerate(gs):
        h = build_hamiltonian(ChainConfig(n_sites, float(kappa), float(g)))
        try:
            sub = ground_subspace(h, start=start)
        except ConvergenceError as exc:
            raise ConvergenceError(f"kappa={kappa:g}, g={g:g}: {exc}") from exc
        if not h.is_diagonal:
            start = sub.basis
        feats[col] = correlation_features(sub)
    return feats


def generate_dataset(n_sites, grid_step=0.01, workers=1):
    """Ground-state correlation features on the (kappa, g) grid, kappa-major.

    Each kappa row is solved left to right in g with the previous ground
    manifold as the Lanczos seed; rows are independent, so ``workers > 1``
    farms them out without changing any value.
    """
    ChainConfig(n_sites, 0.0, 0.0)
    values = grid_values(grid_step)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_kappa_row, [n_sites] * len(values), values, [values] * len(values)))
    else:
        blocks = []
        for r, kappa in enumerate(values):
            blocks.append(_kappa_row(n_sites, kappa, values))
            log.debug("kappa row %d/%d done", r + 1, len(values))
    kk, gg = np.meshgrid(values, values, indexing="ij")
    kk, gg = kk.ravel(), gg.ravel()
    labels = [phase_label(k, g) for k, g in zip(kk, gg)]
    return Dataset(kk, gg, np.vstack(blocks), labels, feature_names(n_sites), n_sites)
