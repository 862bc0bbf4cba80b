import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annni_qml import model
from annni_qml.model import ChainConfig, Phase, build_hamiltonian, ground_subspace, pair_correlation

from conftest import dense_annni, dense_correlation, dense_ground


def _sub(n, kappa, g):
    return ground_subspace(build_hamiltonian(ChainConfig(n, kappa, g)))


@pytest.mark.parametrize("n", [3, 2, 5, 16, 0])
def test_chain_config_rejects_bad_sizes(n):
    with pytest.raises(ValueError):
        ChainConfig(n, 0.1, 0.1)


def test_chain_config_rejects_other_couplings():
    with pytest.raises(ValueError):
        ChainConfig(8, 0.1, 0.1, j_coupling=2.0)


@pytest.mark.parametrize("n,kappa,g", [(4, 0.0, 0.0), (4, 0.3, 0.7), (6, 0.8, 0.2), (8, 0.45, 1.1)])
def test_hamiltonian_matches_kronecker_construction(n, kappa, g):
    h = build_hamiltonian(ChainConfig(n, kappa, g))
    H = h.toarray()
    assert np.allclose(H, H.T)
    np.testing.assert_allclose(H, dense_annni(n, kappa, g).real, atol=1e-14)
    v = np.random.default_rng(1).standard_normal((h.dimension, 3))
    np.testing.assert_allclose(h.matvec(v), H @ v, atol=1e-12)


def test_hamiltonian_row_sparsity():
    H = build_hamiltonian(ChainConfig(8, 0.3, 0.7)).toarray()
    off = H - np.diag(H.diagonal())
    assert np.count_nonzero(off, axis=1).max() == 8


def test_classical_ferromagnet_energy():
    h = build_hamiltonian(ChainConfig(4, 0.0, 0.0))
    assert h.diagonal.min() == -4.0
    assert h.diagonal[0] == -4.0  # all up
    assert h.diagonal[0b1111] == -4.0  # all down


def test_lowest_eigenvalue_matches_dense():
    sub = _sub(8, 0.3, 0.7)
    evals = np.linalg.eigvalsh(dense_annni(8, 0.3, 0.7))
    assert abs(sub.energy - evals[0]) < 1e-9


@pytest.mark.parametrize(
    "n,kappa,g,expected",
    [(4, 0.0, 0.0, 2), (8, 0.8, 0.0, 4), (8, 0.0, 0.5, 1)],
)
def test_degeneracy(n, kappa, g, expected):
    assert _sub(n, kappa, g).degeneracy == expected
    _, dense_basis = dense_ground(n, kappa, g)
    assert dense_basis.shape[1] == expected


@pytest.mark.parametrize("kappa,g", [(0.8, 0.01), (0.3, 0.02), (0.5, 0.0), (0.9, 0.05)])
def test_ground_subspace_invariants(kappa, g):
    h = build_hamiltonian(ChainConfig(8, kappa, g))
    sub = ground_subspace(h)
    B = sub.basis
    np.testing.assert_allclose(np.linalg.norm(B, axis=0), 1.0, atol=1e-12)
    gram = B.T @ B - np.eye(B.shape[1])
    assert np.abs(gram).max() < 1e-10
    H = h.toarray()
    norm = np.linalg.norm(H, 2)
    res = np.linalg.norm(H @ B - sub.energy * B, axis=0)
    assert res.max() <= 1e-9 * norm
    evals, dense_basis = dense_ground(8, kappa, g)
    assert sub.degeneracy == dense_basis.shape[1]
    assert abs(sub.energy - evals[0]) <= 1e-9 * abs(evals[0])


def test_multiphase_point_degeneracy_matches_dense():
    # kappa = 1/2, g = 0: every ring with domains of length >= 2 is a ground state
    sub = _sub(8, 0.5, 0.0)
    _, dense_basis = dense_ground(8, 0.5, 0.0)
    assert sub.degeneracy == dense_basis.shape[1] > 4


def test_sparse_energy_matches_dense_on_subgrid():
    for n in (6, 8):
        for kappa in np.linspace(0.0, 1.0, 5):
            for g in np.linspace(0.0, 1.0, 5):
                e = _sub(n, kappa, g).energy
                e_dense = np.linalg.eigvalsh(dense_annni(n, kappa, g))[0]
                assert abs(e - e_dense) <= 1e-9 * abs(e_dense)


@pytest.mark.parametrize(
    "kappa,g,axis,j,expected",
    [(0.0, 0.0, "z", 2, 1.0), (0.8, 0.0, "z", 3, -1.0), (0.8, 0.0, "z", 2, 0.0)],
)
def test_classical_correlations(kappa, g, axis, j, expected):
    sub = _sub(8, kappa, g)
    assert abs(pair_correlation(sub, axis, 1, j) - expected) < 1e-9
    _, dense_basis = dense_ground(8, kappa, g)
    assert abs(dense_correlation(dense_basis, 8, axis, 1, j) - expected) < 1e-9


@pytest.mark.parametrize("kappa,g", [(0.2, 0.4), (0.7, 0.3), (0.45, 1.3), (0.0, 1.0)])
@pytest.mark.parametrize("axis", ["x", "y", "z"])
def test_correlations_match_dense_operators(kappa, g, axis):
    sub = _sub(8, kappa, g)
    _, dense_basis = dense_ground(8, kappa, g)
    for j in range(2, 6):
        c = pair_correlation(sub, axis, 1, j)
        assert -1.0 - 1e-12 <= c <= 1.0 + 1e-12
        assert abs(c - dense_correlation(dense_basis, 8, axis, 1, j)) < 1e-9


def test_pair_correlation_site_checks():
    sub = _sub(4, 0.1, 0.1)
    with pytest.raises(ValueError):
        pair_correlation(sub, "z", 2, 2)
    with pytest.raises(ValueError):
        pair_correlation(sub, "z", 1, 5)
    with pytest.raises(ValueError):
        pair_correlation(sub, "w", 1, 2)


def test_correlations_invariant_under_basis_remixing(rng):
    sub = _sub(8, 0.8, 0.0)
    assert sub.degeneracy == 4
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    mixed = model.GroundSubspace(sub.energy, sub.basis @ q, sub.degeneracy_tol, 8)
    for axis in "xyz":
        for j in range(2, 6):
            assert abs(pair_correlation(sub, axis, 1, j) - pair_correlation(mixed, axis, 1, j)) < 1e-9


# ---------------------------------------------------------------- phase labels

def _g_ising_mp(kappa):
    k = mpmath.mpf(kappa)
    return (1 - k) / k * (1 - mpmath.sqrt((1 - 3 * k + 4 * k * k) / (1 - k)))


def _g_bkt_mp(kappa):
    k = mpmath.mpf(kappa)
    return mpmath.mpf("1.05") * mpmath.sqrt((k - mpmath.mpf("0.5")) * (k - mpmath.mpf("0.1")))


def test_boundary_values_high_precision():
    mpmath.mp.dps = 40
    assert abs(model.g_ising(0.2) - float(_g_ising_mp("0.2"))) < 1e-12
    assert abs(model.g_bkt(0.6) - float(_g_bkt_mp("0.6"))) < 1e-12
    # closed forms at these points: 4 (1 - sqrt(0.7)) and 1.05 sqrt(0.05)
    assert abs(model.g_ising(0.2) - 0.6533599) < 1e-6
    assert abs(float(_g_ising_mp("0.2")) - float(4 * (1 - mpmath.sqrt(mpmath.mpf("0.7"))))) < 1e-15
    assert abs(model.g_bkt(0.6) - 0.234787) < 1e-6


def test_g_ising_limits():
    assert model.g_ising(0.0) == 1.0
    assert abs(model.g_ising(1e-6) - 1.0) < 1e-4
    assert model.g_ising(0.5) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 0.5))
def test_g_ising_continuous_and_decreasing(kappa):
    eps = 1e-7
    a, b = model.g_ising(kappa), model.g_ising(min(0.5, kappa + eps))
    assert abs(a - b) < 1e-4
    assert b <= a + 1e-12


@pytest.mark.parametrize(
    "kappa,g,expected",
    [
        (0.0, 0.5, Phase.FERROMAGNETIC),
        (0.2, 0.66, Phase.PARAMAGNETIC),
        (0.6, 0.1, Phase.ANTIPHASE),
        (0.5, 1e-6, Phase.PARAMAGNETIC),
        (0.0, 1.0, Phase.PARAMAGNETIC),
        (0.9, 2.0, Phase.PARAMAGNETIC),
    ],
)
def test_phase_label(kappa, g, expected):
    assert model.phase_label(kappa, g) is expected


@given(st.floats(0, 2), st.floats(0, 2))
def test_phase_label_is_pure(kappa, g):
    assert model.phase_label(kappa, g) == model.phase_label(kappa, g)


def test_phase_label_rejects_negative():
    with pytest.raises(ValueError):
        model.phase_label(-0.1, 0.2)


# ---------------------------------------------------------------- dataset

def test_feature_names_order():
    names = model.feature_names(8)
    assert len(names) == 12
    assert names[:4] == ["⟨xx⟩_1_2", "⟨xx⟩_1_3", "⟨xx⟩_1_4", "⟨xx⟩_1_5"]
    assert names[-1] == "⟨zz⟩_1_5"
    assert len(model.feature_names(12)) == 18


def test_grid_values():
    v = model.grid_values(0.01)
    assert v.size == 100 and v[0] == 0.0 and v[50] == 0.5 and v[-1] == 0.99
    with pytest.raises(ValueError):
        model.grid_values(0.03)


def test_generate_small_dataset(tmp_path):
    ds = model.generate_dataset(6, grid_step=0.25)
    assert len(ds) == 16 and ds.n_features == 9
    assert np.all(np.abs(ds.features) <= 1.0 + 1e-12)
    # kappa-major ordering
    assert list(ds.kappa[:4]) == [0.0] * 4 and list(ds.g[:4]) == [0.0, 0.25, 0.5, 0.75]
    zz = [ds.feature_names.index(f"⟨zz⟩_1_{j}") for j in range(2, 5)]
    np.testing.assert_allclose(ds.features[0, zz], 1.0, atol=1e-9)
    assert ds.labels[0] == Phase.FERROMAGNETIC
    # each row equals an independent solve
    for r in (5, 11, 14):
        sub = _sub(6, ds.kappa[r], ds.g[r])
        np.testing.assert_allclose(ds.features[r], model.correlation_features(sub), atol=1e-9)

    path = tmp_path / "annni_n6.csv"
    ds.to_csv(path)
    back = model.Dataset.from_csv(path)
    np.testing.assert_allclose(back.features, ds.features, rtol=1e-11, atol=1e-15)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.feature_names == ds.feature_names and back.n_sites == 6
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("kappa,g,⟨xx⟩_1_2") and header.endswith(",label")


def test_generate_is_deterministic_across_workers():
    a = model.generate_dataset(6, grid_step=0.5)
    b = model.generate_dataset(6, grid_step=0.5, workers=2)
    np.testing.assert_array_equal(a.features, b.features)


def test_float_format():
    assert model.fmt_float(-0.0) == "0"
    assert model.fmt_float(1 / 3) == "0.333333333333"
