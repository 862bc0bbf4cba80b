"""Thick-restart block Lanczos for the low end of a real symmetric spectrum.

Full reorthogonalization (two passes of classical Gram-Schmidt) keeps the
basis orthonormal to machine precision, so Ritz values are trustworthy even
inside clusters.  The block width must be at least the multiplicity of the
eigenvalue being resolved: a Krylov space seeded by ``b`` vectors holds at
most ``b`` directions of any exactly degenerate eigenspace.
"""
from dataclasses import dataclass

import numpy as np


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""


@dataclass
class LanczosResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    n_requested: int
    restarts: int
    matvecs: int


def _orthonormalize_against(Q, W):
    W = W - Q @ (Q.T @ W)
    W -= Q @ (Q.T @ W)
    W, R = np.linalg.qr(W)
    return W, np.abs(np.diag(R))


def _lowest_cluster(matvec, n, k, deg_tol, res_tol, start, rng, steps, max_restarts):
    b = k
    keep = k + b
    width = min(n, keep + b * (steps + 1))
    Q = np.empty((n, width), order="F")
    AQ = np.empty((n, width), order="F")
    X = rng.standard_normal((n, b))
    if start is not None:
        m = min(start.shape[1], b)
        X[:, :m] = start[:, :m]
    X, _ = np.linalg.qr(X)
    Q[:, :b] = X
    AQ[:, :b] = matvec(X)
    m = b
    matvecs = b
    for restart in range(max_restarts):
        while m + b <= width:
            W, norms = _orthonormalize_against(Q[:, :m], AQ[:, m - b:m])
            if norms.min() < 1e-10 * max(norms.max(), 1.0):
                # invariant subspace reached: reseed the deficient directions
                W, _ = _orthonormalize_against(Q[:, :m], rng.standard_normal((n, b)))
            Q[:, m:m + b] = W
            AQ[:, m:m + b] = matvec(W)
            m += b
            matvecs += b

        T = Q[:, :m].T @ AQ[:, :m]
        T = 0.5 * (T + T.T)
        theta, Y = np.linalg.eigh(T)
        nk = min(keep, m)
        X = Q[:, :m] @ Y[:, :nk]
        AX = AQ[:, :m] @ Y[:, :nk]
        R = AX - X * theta[:nk]
        rnorm = np.linalg.norm(R, axis=0)

        d = int(np.count_nonzero(theta[:k] - theta[0] <= deg_tol))
        cluster_ok = bool(np.all(rnorm[:d] <= res_tol))
        if d == k and cluster_ok:
            # every requested pair sits in the ground window: ask for more
            return None, X[:, :k], restart, matvecs
        if cluster_ok and theta[d] - rnorm[d] > theta[0] + deg_tol:
            return (
                LanczosResult(theta[:d], X[:, :d], rnorm[:d], k, restart, matvecs),
                None,
                restart,
                matvecs,
            )

        # thick restart: keep the lowest Ritz pairs, extend along their residuals
        Q[:, :nk] = X
        AQ[:, :nk] = AX
        W, _ = _orthonormalize_against(Q[:, :nk], R[:, :b])
        Q[:, nk:nk + b] = W
        AQ[:, nk:nk + b] = matvec(W)
        m = nk + b
        matvecs += b
    raise ConvergenceError(
        f"block Lanczos did not converge after {max_restarts} restarts "
        f"(k={k}, dimension {n})"
    )


def ground_cluster(
    matvec,
    n,
    deg_tol=1e-8,
    res_tol=1e-9,
    n_eig=4,
    start=None,
    seed=0,
    steps=10,
    max_restarts=400,
):
    """Eigenpairs within ``deg_tol`` of the lowest eigenvalue.

    ``matvec`` maps an (n, b) block to H times that block.  Starts with
    ``n_eig`` pairs; when all of them fall inside the degeneracy window the
    request is doubled and the solve repeated, seeded with what was found.
    ``res_tol`` is an absolute bound on ``||H v - E v||``.
    """
    if n <= 4 * n_eig:
        raise ValueError("dimension too small for an iterative solve; use a dense solver")
    rng = np.random.default_rng(seed)
    k = n_eig
    while True:
        result, seed_vectors, _, _ = _lowest_cluster(
            matvec, n, k, deg_tol, res_tol, start, rng, steps, max_restarts
        )
        if result is not None:
            return result
        if 2 * k > n // 4:
            raise ConvergenceError(
                f"ground manifold wider than {k} states; dimension {n} is too small for Lanczos"
            )
        start = seed_vectors
        k *= 2
