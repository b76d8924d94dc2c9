import json

import numpy as np
import pytest

from kreinacm import fields as F
from kreinacm import lattice as L
from kreinacm import models
from kreinacm import perturbation as P
from kreinacm.clifford import SignatureError
from kreinacm.finite import AlgebraElement
from kreinacm.graded import rel_diff


def _fields(kind, spec, seed=0):
    rng = np.random.default_rng(seed)
    return models.fields_from_spec(kind, F.random_field_spec(rng, spec.n, models.model_slots(kind)), spec)


def test_ed_mass_matrix():
    T = models.ed_triple(2.5)
    assert np.array_equal(T.D_F, [[0, -2.5j], [2.5j, 0]])
    assert T.parity.tolist() == [1, 0]


def test_ew_mass_matrix_and_basis():
    T = models.ew_triple(0.5, 2.0)
    assert [s.name for s in T.reps.summands] == ["nu_R", "e_R", "L"]
    assert T.parity.tolist() == [1, 1, 0, 0]
    D = T.D_F
    # hermitian, odd, with the masses linking nu_R-nu_L and e_R-e_L
    assert np.abs(D - D.conj().T).max() == 0
    assert abs(D[0, 2]) == 0.5 and abs(D[1, 3]) == 2.0
    assert D[0, 3] == 0 and D[1, 2] == 0 and np.all(D[:2, :2] == 0)


def test_sm_yukawas_hermitian():
    T = models.sm_triple(seed=4)
    for Y in models.yukawa_matrices(T).values():
        assert np.abs(Y - Y.conj().T).max() == 0
    with pytest.raises(ValueError):
        models.sm_triple({"nu": np.ones((3, 3)) + 1j * np.eye(3), "e": np.eye(3), "u": np.eye(3), "d": np.eye(3)})


def test_build_model_dispatch():
    assert models.model_kind(models.build_model("ED", {"m": 2})) == "ED"
    assert models.model_kind(models.build_model("EW")) == "EW"
    assert models.model_kind(models.build_model("SM", {"generations": 1})) == "SM"
    with pytest.raises(ValueError):
        models.build_model("QCD")


def test_custom_triple_round_trip(tmp_path):
    T = models.ed_triple(1.5)
    data = {"name": "copy", "algebra": ["C", "C"],
            "summands": [{"name": "a", "parity": 1, "left": [0, "as_is"], "right": [1, "as_is"]},
                         {"name": "b", "parity": 0, "left": [0, "as_is"], "right": [1, "as_is"]}],
            "D_F": [[[0, 0], [0, -1.5]], [[0, 1.5], [0, 0]]]}
    path = tmp_path / "t.json"
    path.write_text(json.dumps(data))
    U = models.load_triple(path)
    assert np.array_equal(U.D_F, T.D_F)
    with pytest.raises(ValueError, match="unknown keys"):
        models.triple_from_dict(dict(data, extra=1))


def _c_only_perturbation(spec, rng, n):
    """Perturbation varying only in the complex block; H and M3 entries stay 1."""
    def element():
        polys = []
        for kind in spec.blocks:
            if kind.kind == "C":
                polys.append((F.random_trig_polynomial(rng, n, 1, 2, 0.5),))
            elif kind.kind == "H":
                polys.append((F.TrigPolynomial([[0] * n], [1.0]), F.TrigPolynomial([[0] * n], [0.0])))
            else:
                k = kind.size
                polys.append(tuple(F.TrigPolynomial([[0] * n], [float(i % (k + 1) == 0)]) for i in range(k * k)))
        return F.SmoothField(F.SmoothAlgebraField(spec, tuple(polys)))

    a, b = element(), element()
    one = F.ConstantField(AlgebraElement.unit(spec))
    return F.SmoothPerturbation(spec, [(a, b), (one, one - a * b)]).symmetrized()


def test_hypercharge_pattern(rng):
    spec = L.LatticeSpec(1, 1, (4, 4))
    pg = L.assemble_product(models.sm_triple(generations=1), spec)
    A = _c_only_perturbation(pg.algebra, rng, spec.n)
    gauge, _ = models.fluctuation_fibers(pg, A)
    f = models.extract_fields(pg, A)
    lam = f.Lambda
    assert np.abs(lam).max() > 1e-3
    assert np.abs(f.Q).max() < 1e-12 and np.abs(f.V).max() < 1e-12
    lep, q = models.lepton_index(pg.finite.reps), models.quark_index(pg.finite.reps)
    parts = ("up_R", "down_R", "up_L", "down_L")

    def pattern(fiber, idx):
        diag = np.diagonal(fiber, axis1=-2, axis2=-1)
        out = []
        for part in parts:
            vals = diag[..., getattr(idx, part)] / lam[..., None]
            assert np.abs(vals - vals.flat[0]).max() < 1e-10
            out.append(round(float(vals.flat[0].real), 10))
        return out

    assert pattern(gauge, lep) == [0, -2, -1, -1]
    # with the colour block held fixed the quarks only see the left action
    assert pattern(gauge, q) == [1, -1, 0, 0]
    # the unimodular closed form shifts every quark by Lambda/3
    closed = models.gauge_fiber(pg.finite, f)
    assert pattern(closed, lep) == [0, -2, -1, -1]
    assert pattern(closed, q) == [round(4 / 3, 10), round(-2 / 3, 10), round(1 / 3, 10), round(1 / 3, 10)]
    assert abs(f.extra["unimodular_defect"] - np.abs(lam).max() / 3) < 1e-12


@pytest.mark.parametrize("model", ["ED", "EW", "SM"])
def test_unit_perturbation_has_no_fields(products, model):
    pg = products[model]
    f = models.extract_fields(pg, F.unit_perturbation(pg.algebra, 2))
    for name in ("A", "Lambda", "Q", "V", "phi1", "phi2"):
        assert np.abs(getattr(f, name)).max() < 1e-14


@pytest.mark.parametrize("model", ["ED", "EW", "SM"])
def test_extraction_reproduces_fluctuation(products, model, rng):
    pg = products[model]
    A = F.random_smooth_perturbation(pg.algebra, rng, 2)
    f = models.extract_fields(pg, A)
    assert f.extra.get("gauge_residual", 0.0) < 1e-12
    assert f.extra.get("higgs_residual", 0.0) < 1e-12
    assert max(f.pointwise_defects().values()) < 1e-12
    assert P.krein_self_adjoint_defect(pg.space, models.continuum_operator(pg, f)) < 1e-12


def test_ed_field_is_lambda_d_lambda_prime(rng):
    spec = L.LatticeSpec(1, 1, (8, 8))
    pg = L.assemble_product(models.ed_triple(), spec)
    # lambda unimodular on a single mode, lambda' = conj(lambda), second block inert
    k = F.TrigPolynomial([[1, 0]], [1.0])
    kc = F.TrigPolynomial([[-1, 0]], [1.0])
    zero = F.TrigPolynomial([[0, 0]], [0.0])
    a = F.SmoothField(F.SmoothAlgebraField(pg.algebra, ((k,), (zero,))))
    b = F.SmoothField(F.SmoothAlgebraField(pg.algebra, ((kc,), (zero,))))
    one = F.ConstantField(AlgebraElement.unit(pg.algebra))
    A = F.SmoothPerturbation(pg.algebra, [(a, b), (one, one - a * b)]).symmetrized()
    f = models.extract_fields(pg, A)
    lam, dlam = k.evaluate(spec), kc.derivative(spec, 0)
    # symmetrization averages lambda d lambda' with its conjugate image, which here coincide
    assert np.abs(f.A[0] - lam * dlam).max() < 1e-12
    assert np.abs(f.A[0].real).max() < 1e-12


def test_non_real_perturbation_rejected(products, rng):
    pg = products["EW"]
    A = F.random_smooth_perturbation(pg.algebra, rng, 2, real=False)
    with pytest.raises(P.RealityError):
        models.extract_fields(pg, A)


@pytest.mark.parametrize("model", ["ED", "EW", "SM"])
def test_decomposition_identity(products, model):
    pg = products[model]
    rng = np.random.default_rng(9)
    for _ in range(5):
        f = _fields(model, pg.lattice.spec, int(rng.integers(1 << 30)))
        d = models.decompose_action(pg, f, pg.random_section(rng))
        assert d["residual"] < 1e-9


def test_decomposition_term_labels(products, rng):
    pg = products["SM"]
    f = _fields("SM", pg.lattice.spec)
    d = models.decompose_action(pg, f, pg.random_section(rng))
    assert "colour" in d["terms"] and abs(d["terms"]["colour"]) > 0
    assert "hypercharge e_R" in d["terms"]
    ew = models.decompose_action(products["EW"], _fields("EW", pg.lattice.spec), products["EW"].random_section(rng))
    assert "colour" not in ew["terms"]
    ed = models.decompose_action(products["ED"], _fields("ED", pg.lattice.spec), products["ED"].random_section(rng))
    assert set(ed["terms"]) == {"kinetic", "gauge", "mass"}


def test_e_R_hypercharge_coefficient(products, rng):
    # only Lambda switched on: the e_R coupling is -2 Lambda, the nu_R coupling vanishes
    pg = products["EW"]
    spec = pg.lattice.spec
    lam = 1j * np.full((2, pg.V), 0.3)
    f = models.GaugeHiggsFields("EW", 2, pg.V, Lambda=lam)
    gauge = models.gauge_fiber(pg.finite, f)
    assert np.allclose(gauge[..., 1, 1], -2 * lam)
    assert np.allclose(gauge[..., 0, 0], 0)


def test_ed_lagrangian_form(rng):
    spec = L.LatticeSpec(1, 3, (4, 4, 4, 4))
    pg = L.assemble_product(models.ed_triple(0.6), spec)
    f = _fields("ED", spec, 3)
    xi = pg.random_section(rng)
    full = models.decompose_action(pg, f, xi)["full"]
    lag = models.ed_lagrangian_action(pg, f, xi)
    assert abs(full - lag) < 1e-9 * abs(lag)
    with pytest.raises(SignatureError):
        models.ed_lagrangian_action(L.assemble_product(models.ed_triple(), L.LatticeSpec(1, 1, (4, 4))), f, xi)


@pytest.mark.parametrize("model", ["EW", "SM"])
def test_vev_generic(products, model, rng):
    pg = products[model]
    for v in (0.3, 1.7, 246.0):
        assert models.vev_substitute(pg, v, pg.random_section(rng))["residual"] < 1e-10


def test_vev_special_values(products, rng):
    pg = products["EW"]
    T = pg.finite
    f = models.vev_fields("EW", pg, 0.0)
    # phi1 = -1 cancels the bare mass completely
    X = pg.c_M * T.D_F + models.higgs_fiber(T, f)
    assert np.abs(X).max() < 1e-15
    f = models.vev_fields("EW", pg, np.sqrt(2))
    assert np.abs(models.higgs_fiber(T, f)).max() < 1e-15


def test_backend_agreement_second_order():
    # closed-form operator from extracted fields against the lattice commutator operator, on smooth probes
    errs = []
    for N in (8, 16, 32):
        spec = L.LatticeSpec(1, 1, (N, N))
        pg = L.assemble_product(models.ew_triple(), spec)
        A = F.random_smooth_perturbation(pg.algebra, np.random.default_rng(0), 2)
        Dc = models.continuum_operator(pg, models.extract_fields(pg, A)).matrix
        Da = P.fluctuate(pg.D, A.at(spec), pg).total.matrix
        probe = np.stack([F.TrigPolynomial([[1, 0], [0, 1]], [1.0, 0.5j]).evaluate(spec)] * (pg.dF * pg.dS))
        psi = probe.reshape(pg.dF, pg.dS, pg.V).transpose(0, 2, 1).ravel()
        errs.append(np.linalg.norm((Dc - Da) @ psi) * np.sqrt(spec.cell_volume))
    assert 3.0 < errs[0] / errs[1] < 4.6 and 3.5 < errs[1] / errs[2] < 4.4


# ---------------------------------------------------------------- Majorana


@pytest.fixture(scope="module")
def majorana():
    ms = models.majorana_space(0.7, 1.3, 0.9)
    return ms, models.majorana_product(ms, L.LatticeSpec(1, 3, (4, 4, 4, 4)))


def _particle(mp, rng):
    x = mp.pg.random_section(rng)
    x.reshape(mp.pg.dF, -1)[mp.ms.particle_dim:] = 0
    return x


def test_majorana_finite_relations(majorana):
    ms, _ = majorana
    res = models.majorana_relations(ms)
    assert max(res.values()) < 1e-12, res
    assert ms.D_M[0, 0] == 0.9j and np.count_nonzero(ms.D_M) == 1


def test_majorana_product_relations(majorana):
    _, mp = majorana
    assert max(mp.relations().values()) < 1e-12


def test_majorana_action_identity(majorana, rng):
    ms, mp = majorana
    f = _fields("EW", mp.pg.lattice.spec, 2)
    for _ in range(2):
        r = models.majorana_action(mp, f, _particle(mp, rng))
        assert r["residual"] < 1e-9 and r["J eta = eta"] < 1e-12
        assert r["cross term"] < 1e-9 * max(abs(r["direct"]), 1.0)


def test_majorana_polarized_terms_nonzero(majorana, rng):
    _, mp = majorana
    f = _fields("EW", mp.pg.lattice.spec, 2)
    r = models.majorana_action(mp, f, _particle(mp, rng), _particle(mp, rng))
    assert r["residual"] < 1e-9
    assert abs(r["majorana terms"]) > 1e-3 * abs(r["direct"])


def test_majorana_diagonal_terms_vanish_for_commuting_spinors(majorana, rng):
    _, mp = majorana
    # gamma(e_0) C is antisymmetric, so psi^T (gamma(e_0) C)^* psi = 0 for any c-number spinor
    M = mp.pg.lattice.clifford.J_M @ mp.C
    assert np.abs(M + M.T).max() < 1e-12
    f = _fields("EW", mp.pg.lattice.spec, 2)
    r = models.majorana_action(mp, f, _particle(mp, rng))
    assert abs(r["majorana terms"]) < 1e-10 * abs(r["direct"])


def test_majorana_nu_R_only(majorana):
    ms, mp = majorana
    pg = mp.pg
    xi = np.zeros((pg.dF, pg.V, pg.dS), dtype=complex)
    even = pg.parity.reshape(pg.dF, pg.V, pg.dS)[0] == 0
    xi[0] = np.array([1, 2j, -1, 0.5])[None, :] * even
    empty = models.GaugeHiggsFields("EW", 4, pg.V)
    r = models.majorana_action(mp, empty, xi.ravel())
    assert abs(r["direct"] - r["majorana terms"]) < 1e-12
    assert abs(r["electroweak part"]) < 1e-12


def test_majorana_zero_mass_decouples(rng):
    ms = models.majorana_space(0.7, 1.3, 0.0)
    mp = models.majorana_product(ms, L.LatticeSpec(1, 3, (4, 4, 4, 4)))
    f = _fields("EW", mp.pg.lattice.spec, 5)
    xi, xi2 = _particle(mp, rng), _particle(mp, rng)
    r = models.majorana_action(mp, f, xi, xi2)
    assert r["majorana terms"] == 0
    assert abs(r["direct"] - r["electroweak part"]) < 1e-10 * abs(r["direct"])


def test_majorana_input_checks(majorana, rng):
    _, mp = majorana
    x = mp.pg.random_section(rng)
    with pytest.raises(ValueError, match="particle"):
        models.majorana_action(mp, _fields("EW", mp.pg.lattice.spec), x)
    with pytest.raises(SignatureError):
        models.majorana_product(models.majorana_space(), L.LatticeSpec(1, 1, (4, 4)))
