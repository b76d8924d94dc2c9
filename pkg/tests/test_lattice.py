import numpy as np
import pytest
import scipy.sparse as sp

from kreinacm import lattice as L
from kreinacm import models
from kreinacm import perturbation as P
from kreinacm.fields import TrigPolynomial, random_trig_polynomial
from kreinacm.graded import rel_diff


def test_spec_validation():
    with pytest.raises(ValueError, match="even total dimension required"):
        L.LatticeSpec(1, 2, (4, 4, 4))
    with pytest.raises(ValueError, match="at least 4"):
        L.LatticeSpec(1, 1, (4, 3))
    with pytest.raises(ValueError):
        L.LatticeSpec(1, 1, (4,))
    spec = L.LatticeSpec(1, 1, (8, 16))
    assert spec.lengths == pytest.approx((2 * np.pi, 2 * np.pi))
    assert L.LatticeSpec(1, 1, (4, 4), 0.5).spacing == (0.5, 0.5)


def test_memory_cap(monkeypatch):
    monkeypatch.setenv(L.MAX_DIM_ENV, "100")
    with pytest.raises(L.ResourceError):
        L.build_lattice_dirac(L.LatticeSpec(1, 1, (8, 8)))
    monkeypatch.setenv(L.MAX_DIM_ENV, "nonsense")
    with pytest.raises(L.ResourceError):
        L.max_dim()


def test_dense_cap():
    with pytest.raises(L.ResourceError):
        L.build_lattice_dirac(L.LatticeSpec(1, 3, (8, 8, 4, 8))).dense()


@pytest.mark.parametrize("t,s,sites", [(1, 1, (8, 8)), (1, 3, (4, 4, 4, 4)), (0, 2, (6, 4))])
def test_stencil_matches_matrix(t, s, sites, rng):
    D = L.build_lattice_dirac(L.LatticeSpec(t, s, sites))
    psi = rng.standard_normal(sites + (D.dS,)) + 1j * rng.standard_normal(sites + (D.dS,))
    assert np.abs(D.apply(psi).ravel() - D.matrix @ psi.ravel()).max() < 1e-12


def test_krein_symmetry_of_phase_dirac(rng):
    D = L.build_lattice_dirac(L.LatticeSpec(1, 1, (8, 8)))
    K, J = D.krein_operator, D.J
    for _ in range(5):
        psi = rng.standard_normal(D.dim) + 1j * rng.standard_normal(D.dim)
        phi = rng.standard_normal(D.dim) + 1j * rng.standard_normal(D.dim)
        lhs = np.vdot(J @ psi, K @ phi)
        rhs = np.vdot(K @ psi, J @ phi)
        assert abs(lhs - rhs) < 1e-12 * abs(lhs)
    # odd with respect to the spinor grading
    p = D.parity
    assert np.abs(K.toarray()[p[:, None] == p[None, :]]).max() == 0


def test_plane_wave_symbol():
    spec = L.LatticeSpec(1, 3, (4, 6, 4, 8))
    D = L.build_lattice_dirac(spec)
    k = np.array([1, -2, 0, 3])
    X = spec.coordinates()
    wave = 2 * np.pi * k / np.array(spec.lengths)
    phase = np.exp(1j * sum(w * x for w, x in zip(wave, X)))
    u = np.array([1, 2j, -1, 0.5])
    psi = phase[..., None] * u
    cm = D.clifford
    symbol = 1j * sum(cm.coordinate_gamma(m) * np.sin(wave[m] * spec.spacing[m]) / spec.spacing[m]
                      for m in range(4))
    assert np.abs(D.apply(psi) - phase[..., None] * (symbol @ u)).max() < 1e-12


def test_constant_section_is_annihilated():
    D = L.build_lattice_dirac(L.LatticeSpec(1, 1, (6, 6)))
    psi = np.ones((6, 6, 2), dtype=complex) * np.array([1, 3j])
    assert np.abs(D.apply(psi)).max() < 1e-13


@pytest.mark.parametrize("model", ["ED", "EW", "SM"])
def test_product_invariants(products, model):
    pg = products[model]
    checks = L.product_checks(pg)
    assert max(checks.values()) < 1e-12, checks
    assert L.is_lorentz_type(pg)
    # the two halves of D anticommute by the Koszul sign
    K, M = pg.kinetic, pg.mass
    assert abs(K @ M + M @ K).max() < 1e-12


@pytest.mark.parametrize("t,s,sites", [(0, 2, (4, 4)), (2, 2, (4, 4, 4, 4)), (1, 3, (4, 4, 4, 4))])
def test_product_other_signatures(t, s, sites):
    pg = L.assemble_product(models.ew_triple(), L.LatticeSpec(t, s, sites))
    assert max(L.product_checks(pg).values()) < 1e-12
    assert L.is_lorentz_type(pg) == bool(t % 2)


def test_trivial_finite_space():
    T = models.triple_from_dict({"algebra": ["C"], "summands": [{"name": "x", "parity": 0, "left": [0, "as_is"]}],
                                 "D_F": [[0]]})
    spec = L.LatticeSpec(1, 1, (6, 6))
    pg = L.assemble_product(T, spec)
    assert abs(pg.D_matrix - L.build_lattice_dirac(spec).krein_operator).max() < 1e-15


def test_evaluate_action(products, rng):
    pg = products["ED"]
    assert L.evaluate_action(pg, pg.D, np.zeros(pg.dim)) == (0.0, 0.0)
    DA = P.fluctuate(pg.D, P.random_perturbation(pg, rng), pg).total
    xi = pg.random_section(rng)
    val, imag = L.evaluate_action(pg, DA, xi)
    dense = DA.matrix.toarray()
    oracle = np.conj(pg.J.toarray() @ xi) @ dense @ xi * pg.weight
    assert abs(val - oracle) < 1e-10 * abs(oracle)
    assert imag < 1e-10 * abs(val)


def test_massless_constant_section_has_zero_action():
    pg = L.assemble_product(models.ed_triple(0.0), L.LatticeSpec(1, 1, (6, 6)))
    xi = np.ones(pg.dim, dtype=complex)
    xi[pg.parity == 1] = 0
    val, _ = L.evaluate_action(pg, pg.D, xi)
    assert abs(val) < 1e-13


def test_sitewise_layout(products, rng):
    pg = products["EW"]
    M = rng.standard_normal((pg.V, 4, 4))
    op = pg.sitewise(M)
    v = pg.random_section(rng, None)
    out = pg.components(op @ v)
    ref = np.einsum("xfg,gxs->fxs", M, pg.components(v))
    assert np.abs(out - ref).max() < 1e-12
    assert sp.issparse(op)


def test_convergence_constant_is_exact():
    f = TrigPolynomial([[0, 0]], [1.5 - 0.5j])
    r = L.commutator_convergence(1, 1, f)
    # zero up to rounding in the products f * psi
    assert max(r["errors"]) < 1e-13
    assert r["min_order"] == float("inf")


def test_convergence_single_mode_ratio():
    f = TrigPolynomial([[0, 1]], [1.0])
    r = L.commutator_convergence(1, 1, f)
    assert 3.6 <= r["ratios"][0] <= 4.4


def test_convergence_multi_mode_order(rng):
    for _ in range(3):
        f = random_trig_polynomial(rng, 2, 2, 3)
        assert L.commutator_convergence(1, 1, f)["min_order"] >= 1.9


def test_section_shape_checked(products):
    pg = products["ED"]
    with pytest.raises(ValueError):
        pg.section(np.zeros((2, 3, 2)))
    assert rel_diff(pg.section(np.ones((2, pg.V, 2))), np.ones(pg.dim)) == 0
