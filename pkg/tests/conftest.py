import functools

import numpy as np
import pytest

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]]),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def site_operator(ops, n_sites):
    """Kronecker product with ``ops[site]`` (1-based) on the given sites.

    Site 1 is the least significant bit of the basis index, i.e. the
    rightmost factor of the Kronecker product.
    """
    out = np.eye(1, dtype=complex)
    for site in range(n_sites, 0, -1):
        out = np.kron(out, ops.get(site, np.eye(2)))
    return out


@functools.lru_cache(maxsize=None)
def dense_annni(n_sites, kappa, g):
    """ANNNI Hamiltonian assembled from Pauli Kronecker products."""
    Z, X = PAULI["z"], PAULI["x"]
    H = np.zeros((1 << n_sites, 1 << n_sites), dtype=complex)
    for j in range(1, n_sites + 1):
        j1 = j % n_sites + 1
        j2 = (j + 1) % n_sites + 1
        H -= site_operator({j: Z, j1: Z}, n_sites)
        H += kappa * site_operator({j: Z, j2: Z}, n_sites)
        H -= g * site_operator({j: X}, n_sites)
    return H


def dense_ground(n_sites, kappa, g, tol=1e-8):
    evals, evecs = np.linalg.eigh(dense_annni(n_sites, kappa, g))
    d = int(np.count_nonzero(evals - evals[0] <= tol))
    return evals, evecs[:, :d]


def dense_correlation(basis, n_sites, axis, i, j):
    op = site_operator({i: PAULI[axis], j: PAULI[axis]}, n_sites)
    vals = [np.vdot(v, op @ v) for v in basis.T]
    return float(np.mean(vals).real)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one (criterion, passed, detail) entry per acceptance check, echoed in the summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
