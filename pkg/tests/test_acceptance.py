"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances, sample counts and runtime limits are the contract values; do
not loosen them here.
"""
import time

import numpy as np
import pytest

from kreinacm import fields as F
from kreinacm import lattice as L
from kreinacm import models
from kreinacm import perturbation as P
from kreinacm.cli import main
from kreinacm.clifford import build_charge_conjugation, build_clifford, charge_conjugation_residuals
from kreinacm.clifford import clifford_residuals
from kreinacm.finite import AlgebraElement, check_axioms, check_order_one
from kreinacm.graded import krein_adjoint, rel_diff

MODELS = ("ED", "EW", "SM")


@pytest.fixture(scope="module")
def geometries():
    spec = L.LatticeSpec(1, 1, (8, 8))
    triples = {"ED": models.ed_triple(0.8), "EW": models.ew_triple(0.7, 1.3), "SM": models.sm_triple(seed=5)}
    return {k: L.assemble_product(T, spec) for k, T in triples.items()}


def _field_values(kind, spec, rng):
    fs = F.random_field_spec(rng, spec.n, models.model_slots(kind))
    return models.fields_from_spec(kind, fs, spec)


def test_criterion_01_clifford(verdict):
    t0 = time.perf_counter()
    worst = {}
    for t, s in [(1, 1), (1, 3), (3, 1), (0, 4), (2, 2)]:
        cm = build_clifford(t, s)
        res = clifford_residuals(cm)
        if (t, s) == (1, 3):
            res.update(charge_conjugation_residuals(cm, build_charge_conjugation(cm)))
        worst[(t, s)] = max(res.values())
    dt = time.perf_counter() - t0
    top = max(worst.values())
    verdict(1, "Clifford suite", top < 1e-12 and dt < 1.0, f"max residual {top:.1e}, {dt:.2f}s")


def test_criterion_02_finite_axioms(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    failed = []
    for name, T in (("ED", models.ed_triple()), ("EW", models.ew_triple()), ("SM", models.sm_triple(seed=0))):
        checks = list(check_axioms(T, 100, seed=1).checks) + list(check_order_one(T, samples=100, seed=2).checks)
        for c in checks:
            worst = max(worst, c.residual)
            if not c.residual < 1e-12:
                failed.append(f"{name}: {c.name}")
    dt = time.perf_counter() - t0
    verdict(2, "finite triple axioms and order-one", not failed and dt < 5.0,
            f"max residual {worst:.1e}, {dt:.2f}s{', failed ' + ', '.join(failed) if failed else ''}")


def test_criterion_03_involutive(verdict, geometries):
    rng = np.random.default_rng(3)
    worst = 0.0
    for kind in MODELS:
        pg = geometries[kind]
        for _ in range(100):
            A = P.random_perturbation(pg, rng, real=False)
            worst = max(worst, rel_diff(P.eta(pg.D, P.bar(A), pg).matrix, krein_adjoint(P.eta(pg.D, A, pg)).matrix))
    verdict(3, "eta(bar A) = eta(A)^+", worst < 1e-10, f"max relative residual {worst:.1e}")


def test_criterion_04_composition(verdict, geometries):
    rng = np.random.default_rng(4)
    worst = 0.0
    for kind in MODELS:
        pg = geometries[kind]
        for _ in range(50):
            A, B = P.random_perturbation(pg, rng), P.random_perturbation(pg, rng)
            lhs = P.fluctuate(P.fluctuate(pg.D, A, pg).total, B, pg).total.matrix
            rhs = P.fluctuate(pg.D, P.pert_multiply(B, A), pg).total.matrix
            worst = max(worst, rel_diff(lhs, rhs))
    verdict(4, "(D_A)_A' = D_(A'A)", worst < 1e-9, f"max relative residual {worst:.1e}")


def test_criterion_05_gauge(verdict, geometries):
    rng = np.random.default_rng(5)
    cov = inv = 0.0
    for kind in MODELS:
        pg = geometries[kind]
        for _ in range(50):
            A, u, xi = P.random_perturbation(pg, rng), pg.random_unitary(rng), pg.random_section(rng)
            uA = P.gauge_act(u, A)
            cov = max(cov, rel_diff(P.eta(pg.D, uA, pg).matrix,
                                    P.gauge_transform_potential(P.eta(pg.D, A, pg), u, pg.D, pg).matrix))
            S0 = P.krein_action(pg.space, P.fluctuate(pg.D, A, pg).total, xi)
            S1 = P.krein_action(pg.space, P.fluctuate(pg.D, uA, pg).total, P.rho(pg, u) @ xi)
            inv = max(inv, abs(S1 - S0) / abs(S0))
    verdict(5, "gauge covariance and invariance", max(cov, inv) < 1e-9,
            f"covariance {cov:.1e}, invariance {inv:.1e}")


def test_criterion_06_gauge_group(verdict):
    t0 = time.perf_counter()
    ed = P.gauge_group_report(models.ed_triple(), samples=10_000)
    T = models.ed_triple()
    # rho(lambda, lambda) on the whole scanned circle
    lam = np.exp(2j * np.pi * np.arange(100) / 100)
    u = AlgebraElement(T.algebra, [lam[:, None, None], lam[:, None, None]], check=False)
    diag = float(np.abs(T.pi(u) @ T.pi_op(u.star()) - np.eye(T.dim)).max())
    diag_kernel = all(abs(complex(*a) - complex(*b)) < 1e-12 for a, b in ed["kernel_elements"])
    ew = P.gauge_group_report(models.ew_triple(), samples=10_000)
    ew_kernel = sorted(ew["kernel_elements"]) == [[[-1.0, 0.0], [-1.0, 0.0]], [[1.0, 0.0], [1.0, 0.0]]]
    sm = P.gauge_group_report(models.sm_triple(seed=0), samples=100)
    dt = time.perf_counter() - t0
    ok = (ed["kernel_dimension"] == 1 and diag < 1e-12 and diag_kernel and ew["differential_rank"] == 4
          and ew["center_points"] >= 10_000 and ew_kernel and sm["unimodular_dimension"] == 12 and dt < 10.0)
    verdict(6, "gauge-group evidence", ok,
            f"ED kernel dim {ed['kernel_dimension']}, rho(l,l)-1 {diag:.1e}; EW rank {ew['differential_rank']}, "
            f"kernel {len(ew['kernel_elements'])} of {ew['center_points']}; SM unimodular dim "
            f"{sm['unimodular_dimension']}; {dt:.2f}s")


def test_criterion_07_reality_grading(verdict, geometries):
    rng = np.random.default_rng(7)
    real = graded = 0.0
    for kind in MODELS:
        pg = geometries[kind]
        for _ in range(100):
            DA = P.fluctuate(pg.D, P.random_perturbation(pg, rng), pg).total
            xi, odd = pg.random_section(rng), pg.random_section(rng, 1)
            S = P.krein_action(pg.space, DA, xi)
            real = max(real, abs(S.imag) / abs(S))
            graded = max(graded, abs(P.quadratic_form(pg.space, DA, xi, odd))
                         / (np.linalg.norm(xi) * np.linalg.norm(odd)))
    verdict(7, "action reality and grading", real < 1e-10 and graded < 1e-12,
            f"|Im S|/|S| {real:.1e}, |F(even,odd)| {graded:.1e}")


def test_criterion_08_decomposition(verdict, geometries):
    rng = np.random.default_rng(8)
    worst = 0.0
    for kind in MODELS:
        pg = geometries[kind]
        for _ in range(200):
            d = models.decompose_action(pg, _field_values(kind, pg.lattice.spec, rng), pg.random_section(rng))
            worst = max(worst, d["residual"])
    spec = L.LatticeSpec(1, 3, (4, 4, 4, 4))
    pg = L.assemble_product(models.ed_triple(0.8), spec)
    lag = 0.0
    for _ in range(5):
        f, xi = _field_values("ED", spec, rng), pg.random_section(rng)
        full = models.decompose_action(pg, f, xi)["full"]
        L_val = models.ed_lagrangian_action(pg, f, xi)
        lag = max(lag, abs(full - L_val) / abs(L_val))
    verdict(8, "decomposition identities", worst < 1e-9 and lag < 1e-9,
            f"term sum {worst:.1e}, ED Lagrangian on (1,3) 4^4 {lag:.1e}")


def test_criterion_09_vev(verdict, geometries):
    rng = np.random.default_rng(9)
    worst = 0.0
    for kind in ("EW", "SM"):
        pg = geometries[kind]
        for v in (0.0, 0.5, 1.0, np.sqrt(2), 246.0):
            for _ in range(10):
                worst = max(worst, models.vev_substitute(pg, v, pg.random_section(rng))["residual"])
    verdict(9, "VEV reduction to mass terms", worst < 1e-10, f"max relative residual {worst:.1e}")


def test_criterion_10_majorana(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    ms = models.majorana_space(0.7, 1.3, 0.9)
    rel = max(models.majorana_relations(ms).values())
    mp = models.majorana_product(ms, L.LatticeSpec(1, 3, (4, 4, 4, 4)))
    rel = max(rel, max(mp.relations().values()))
    d = ms.particle_dim
    worst = 0.0
    for _ in range(3):
        f = _field_values("EW", mp.pg.lattice.spec, rng)
        xs = []
        for _ in range(2):
            x = mp.pg.random_section(rng)
            x.reshape(mp.pg.dF, -1)[d:] = 0
            xs.append(x)
        worst = max(worst, models.majorana_action(mp, f, xs[0])["residual"],
                    models.majorana_action(mp, f, xs[0], xs[1])["residual"])
    dt = time.perf_counter() - t0
    verdict(10, "Majorana suite", rel < 1e-12 and worst < 1e-9 and dt < 60.0,
            f"relations {rel:.1e}, action identity {worst:.1e}, {dt:.2f}s")


def test_criterion_11_convergence(verdict):
    rng = np.random.default_rng(11)
    funcs = [F.random_trig_polynomial(rng, 2, 2, 3) for _ in range(5)]
    funcs.append(F.TrigPolynomial([[1, 0]], [1.0]))
    orders = [L.commutator_convergence(1, 1, f, sizes=(16, 32, 64), seed=i)["min_order"]
              for i, f in enumerate(funcs)]
    low = min(orders)
    verdict(11, "lattice commutator convergence", low >= 1.9,
            "orders " + ", ".join(f"{o:.3f}" for o in orders))


def test_criterion_12_determinism(verdict, tmp_path):
    specs = {
        "action": '{"model": "SM", "generations": 1, "lattice": {"t": 1, "s": 1, "sites": [4, 4]}, "seed": 12}',
        "fluctuate": '{"model": "EW", "seed": 3, "samples": 5}',
        "decompose": '{"model": "EW", "seed": 4, "samples": 5}',
        "convergence": '{"seed": 5, "samples": 2, "sizes": [8, 16]}',
    }
    same = True
    for cmd, text in specs.items():
        path = tmp_path / f"{cmd}.json"
        path.write_text(text)
        outs = []
        for i in range(2):
            out = tmp_path / f"{cmd}-{i}.out"
            main([cmd, "--spec", str(path), "--samples", "3", "--out", str(out)])
            outs.append(out.read_bytes())
        same = same and outs[0] == outs[1] and len(outs[0]) > 0
    verdict(12, "byte-identical reports", same, f"{len(specs)} commands, two runs each")
