"""Built-in finite spaces (electrodynamics, electroweak, Standard Model and the
Majorana doubling of the electroweak space), their gauge and Higgs fields,
and the term-by-term decomposition of the Krein action.

Fiber bases follow the summand tables below. With ``g`` generations the
index order inside a summand is (left factor, right factor, generation), so
the lepton doublet runs ``nu_L(g), e_L(g)`` and quark summands carry colour
before generation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .clifford import SignatureError, build_charge_conjugation
from .fields import SmoothFieldSpec, SmoothPerturbation
from .finite import (
    AlgebraBlockSpec,
    FiniteSpectralTriple,
    RepresentationTable,
    Summand,
)
from .perturbation import RealityError, krein_action, reality_defect

ED, EW, SM = "ED", "EW", "SM"


# ------------------------------------------------------------ finite spaces


def ed_triple(m: float = 1.0) -> FiniteSpectralTriple:
    """``C + C`` on ``{e_R (odd), e_L (even)}``, ``D_F = [[0, -im], [im, 0]]``."""
    spec = AlgebraBlockSpec.of("C", "C")
    reps = RepresentationTable(spec, [Summand("e_R", 1, (0,), (1,)), Summand("e_L", 0, (0,), (1,))])
    D = np.array([[0, -1j * m], [1j * m, 0]])
    return FiniteSpectralTriple("ED", spec, reps, D, params={"m": float(m)})


def _lepton_summands(g: int, q_block: int = 1) -> list[Summand]:
    return [
        Summand("nu_R", 1, (0, "as_is"), (0, "as_is"), g),
        Summand("e_R", 1, (0, "conj"), (0, "as_is"), g),
        Summand("L", 0, (q_block, "as_is"), (0, "as_is"), g),
    ]


def _quark_summands(g: int) -> list[Summand]:
    return [
        Summand("u_R", 1, (0, "as_is"), (2, "transpose"), g),
        Summand("d_R", 1, (0, "conj"), (2, "transpose"), g),
        Summand("Q_L", 0, (1, "as_is"), (2, "transpose"), g),
    ]


@dataclass(frozen=True)
class DoubletIndex:
    """Fiber indices of one doublet sector, each an array over (colour, generation)."""

    up_R: np.ndarray
    down_R: np.ndarray
    up_L: np.ndarray
    down_L: np.ndarray
    colours: int = 1

    @property
    def R(self) -> np.ndarray:
        return np.concatenate([self.up_R, self.down_R])

    @property
    def L(self) -> np.ndarray:
        return np.concatenate([self.up_L, self.down_L])


def lepton_index(reps: RepresentationTable) -> DoubletIndex:
    nu, e, L = (np.arange(reps.slice(k).start, reps.slice(k).stop) for k in ("nu_R", "e_R", "L"))
    g = nu.size
    return DoubletIndex(nu, e, L[:g], L[g:])


def quark_index(reps: RepresentationTable) -> DoubletIndex:
    u, d, Q = (np.arange(reps.slice(k).start, reps.slice(k).stop) for k in ("u_R", "d_R", "Q_L"))
    half = Q.size // 2
    return DoubletIndex(u, d, Q[:half], Q[half:], colours=3)


def _place(D, rows, cols, block):
    D[np.ix_(rows, cols)] += block


def _mass_block(D, idx: DoubletIndex, Y_up, Y_down):
    eye = np.eye(idx.colours)
    Yu, Yd = np.kron(eye, Y_up), np.kron(eye, Y_down)
    _place(D, idx.up_R, idx.up_L, -1j * Yu)
    _place(D, idx.down_R, idx.down_L, -1j * Yd)
    _place(D, idx.up_L, idx.up_R, 1j * Yu)
    _place(D, idx.down_L, idx.down_R, 1j * Yd)


def _as_yukawa(y, g: int) -> np.ndarray:
    y = np.asarray(y, dtype=complex)
    if y.ndim == 0:
        return y * np.eye(g)
    if y.shape != (g, g):
        raise ValueError(f"Yukawa matrix must be {g}x{g}, got {y.shape}")
    if np.abs(y - y.conj().T).max() > 1e-12:
        raise ValueError("Yukawa matrices must be hermitian")
    return y


def ew_triple(m_nu: float = 1.0, m_e: float = 1.0, generations: int = 1) -> FiniteSpectralTriple:
    """``C + H`` on ``{nu_R, e_R, nu_L, e_L}`` (per generation) with the lepton mass matrix."""
    g = int(generations)
    spec = AlgebraBlockSpec.of("C", "H")
    reps = RepresentationTable(spec, _lepton_summands(g))
    Y = {"nu": _as_yukawa(m_nu, g), "e": _as_yukawa(m_e, g)}
    D = np.zeros((reps.dim, reps.dim), dtype=complex)
    _mass_block(D, lepton_index(reps), Y["nu"], Y["e"])
    params = {"m_nu": m_nu, "m_e": m_e, "generations": g, "yukawa": Y}
    return FiniteSpectralTriple("EW", spec, reps, D, params=params)


def random_hermitian(rng: np.random.Generator, k: int) -> np.ndarray:
    z = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
    return (z + z.conj().T) / 2


def random_yukawas(rng: np.random.Generator, generations: int = 3) -> dict:
    return {k: random_hermitian(rng, generations) for k in ("nu", "e", "u", "d")}


def sm_triple(yukawa: dict = None, generations: int = 3, seed: int = 0) -> FiniteSpectralTriple:
    """``C + H + M3`` on leptons and coloured quarks, 16 states per generation."""
    g = int(generations)
    if yukawa is None:
        yukawa = random_yukawas(np.random.default_rng(seed), g)
    Y = {k: _as_yukawa(yukawa[k], g) for k in ("nu", "e", "u", "d")}
    spec = AlgebraBlockSpec.of("C", "H", "M3")
    reps = RepresentationTable(spec, _lepton_summands(g) + _quark_summands(g))
    D = np.zeros((reps.dim, reps.dim), dtype=complex)
    _mass_block(D, lepton_index(reps), Y["nu"], Y["e"])
    _mass_block(D, quark_index(reps), Y["u"], Y["d"])
    return FiniteSpectralTriple("SM", spec, reps, D, params={"generations": g, "yukawa": Y})


def build_model(name: str, params: dict = None, seed: int = 0) -> FiniteSpectralTriple:
    params = dict(params or {})
    if name == ED:
        return ed_triple(params.get("m", 1.0))
    if name == EW:
        return ew_triple(params.get("m_nu", 1.0), params.get("m_e", 1.0), params.get("generations", 1))
    if name == SM:
        y = params.get("yukawa")
        if y is not None:
            y = {k: _parse_complex_matrix(v) for k, v in y.items()}
        return sm_triple(y, params.get("generations", 3), seed)
    raise ValueError(f"unknown model {name!r}")


def model_kind(triple: FiniteSpectralTriple) -> str:
    names = [s.name for s in triple.reps.summands]
    if names == ["e_R", "e_L"]:
        return ED
    if "u_R" in names:
        return SM
    if names[:3] == ["nu_R", "e_R", "L"]:
        return EW
    raise ValueError(f"triple {triple.name!r} is not one of the built-in models")


def yukawa_matrices(triple: FiniteSpectralTriple) -> dict:
    Y = triple.params.get("yukawa")
    if Y is None:
        raise ValueError("triple carries no Yukawa data")
    return Y


# -------------------------------------------------------------- custom triples


def _parse_complex_matrix(data) -> np.ndarray:
    """``[[...]]`` of reals, ``[[[re, im], ...]]`` pairs, or ``{"re": ..., "im": ...}``."""
    if isinstance(data, dict):
        re = np.asarray(data.get("re", 0.0), dtype=float)
        im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
        return re + 1j * im
    a = np.asarray(data, dtype=float)
    if a.ndim == 3 and a.shape[-1] == 2:
        return a[..., 0] + 1j * a[..., 1]
    return a.astype(complex)


def triple_from_dict(data: dict) -> FiniteSpectralTriple:
    """Build a finite triple from the JSON layout::

        {"name": "...", "algebra": ["C", "H", "M3"],
         "summands": [{"name": "x", "parity": 0, "left": [0, "as_is"],
                       "right": [1, "conj"], "multiplicity": 1}, ...],
         "D_F": [[...]], "J_F": [[...]]}

    ``left``/``right`` may be ``null`` for the scalar action.
    """
    allowed = {"name", "algebra", "summands", "D_F", "J_F"}
    extra = set(data) - allowed
    if extra:
        raise ValueError(f"unknown keys in custom triple: {sorted(extra)}")
    spec = AlgebraBlockSpec(tuple(data["algebra"]))
    summands = []
    for s in data["summands"]:
        summands.append(Summand(s["name"], int(s["parity"]), s.get("left"), s.get("right"),
                                int(s.get("multiplicity", 1))))
    reps = RepresentationTable(spec, summands)
    D = _parse_complex_matrix(data["D_F"])
    J = _parse_complex_matrix(data["J_F"]) if "J_F" in data else None
    return FiniteSpectralTriple(data.get("name", "custom"), spec, reps, D, J)


def load_triple(path) -> FiniteSpectralTriple:
    with open(path, encoding="utf-8") as fh:
        return triple_from_dict(json.load(fh))


# ------------------------------------------------------------------ fields


@dataclass
class GaugeHiggsFields:
    """Gauge and Higgs fields on the lattice sites.

    ``A`` (ED), ``Lambda``: ``(n, V)`` imaginary; ``Q``: ``(n, V, 2, 2)``;
    ``V``: ``(n, V, 3, 3)``; ``phi1``, ``phi2``: ``(V,)`` complex. Missing
    entries are zero. ``extra`` carries bookkeeping such as the unimodular
    defect of an extracted colour field.
    """

    model: str
    n: int
    sites: int
    A: np.ndarray = None
    Lambda: np.ndarray = None
    Q: np.ndarray = None
    V: np.ndarray = None
    phi1: np.ndarray = None
    phi2: np.ndarray = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        n, V = self.n, self.sites
        zero = {"A": (n, V), "Lambda": (n, V), "Q": (n, V, 2, 2), "V": (n, V, 3, 3), "phi1": (V,), "phi2": (V,)}
        for name, shape in zero.items():
            val = getattr(self, name)
            if val is None:
                setattr(self, name, np.zeros(shape, dtype=complex))
            else:
                val = np.asarray(val, dtype=complex)
                if val.shape != shape:
                    raise ValueError(f"field {name} has shape {val.shape}, expected {shape}")
                setattr(self, name, val)

    def pointwise_defects(self) -> dict[str, float]:
        """How far each gauge field is from its Lie algebra, maximum over sites."""
        def ah(m):
            return float(np.abs(m + np.conj(np.swapaxes(m, -1, -2))).max(initial=0.0))

        def tr(m):
            return float(np.abs(np.trace(m, axis1=-2, axis2=-1)).max(initial=0.0))

        return {
            "A imaginary": float(np.abs(self.A.real).max(initial=0.0)),
            "Lambda imaginary": float(np.abs(self.Lambda.real).max(initial=0.0)),
            "Q anti-hermitian": ah(self.Q),
            "Q traceless": tr(self.Q),
            "V anti-hermitian": ah(self.V),
            "V traceless": tr(self.V),
        }


def fields_from_spec(model: str, fs: SmoothFieldSpec, lattice) -> GaugeHiggsFields:
    """Evaluate a :class:`SmoothFieldSpec` at the sites (continuum-form backend input)."""
    out = GaugeHiggsFields(model, lattice.n, lattice.volume_sites)
    if model == ED:
        out.A = fs.gauge("A", lattice)
        return out
    out.Lambda = fs.gauge("Lambda", lattice)
    out.Q = fs.gauge("Q", lattice)
    out.phi1 = fs.higgs("phi1", lattice)
    out.phi2 = fs.higgs("phi2", lattice)
    if model == SM:
        out.V = fs.gauge("V", lattice)
    return out


def model_slots(model: str) -> tuple:
    return {ED: ("A",), EW: ("Lambda", "Q", "phi1", "phi2"), SM: ("Lambda", "Q", "V", "phi1", "phi2")}[model]


# ------------------------------------------------- closed-form fiber matrices


def _diag_add(M, idx, values):
    # values broadcast as (..., ) scalars on the listed diagonal entries
    M[..., idx, idx] += values[..., None]


def gauge_fiber(triple: FiniteSpectralTriple, f: GaugeHiggsFields) -> np.ndarray:
    """Fiber matrix ``A_mu(x)`` of shape ``(n, V, dF, dF)`` from the field values."""
    dF = triple.dim
    out = np.zeros((f.n, f.sites, dF, dF), dtype=complex)
    kind = model_kind(triple)
    if kind == ED:
        _diag_add(out, np.arange(dF), f.A)
        return out
    lep = lepton_index(triple.reps)
    g = lep.up_R.size
    _diag_add(out, lep.down_R, -2 * f.Lambda)
    eye_g = np.eye(g)
    weak = np.einsum("mvab,gh->mvagbh", f.Q - f.Lambda[..., None, None] * np.eye(2), eye_g).reshape(f.n, f.sites, 2 * g, 2 * g)
    out[..., lep.L[:, None], lep.L[None, :]] += weak
    if kind == SM:
        q = quark_index(triple.reps)
        V = f.V
        colour = np.einsum("mvcd,gh->mvcgdh", V, eye_g).reshape(f.n, f.sites, 3 * g, 3 * g)
        for rows, hyper in ((q.up_R, 4 / 3), (q.down_R, -2 / 3)):
            _diag_add(out, rows, hyper * f.Lambda)
            out[..., rows[:, None], rows[None, :]] += colour
        eye3g = np.eye(3 * g)
        QL = np.einsum("mvab,ij->mvaibj", f.Q + f.Lambda[..., None, None] / 3 * np.eye(2), eye3g)
        QL = QL.reshape(f.n, f.sites, 6 * g, 6 * g)
        QL = QL + np.einsum("ab,mvij->mvaibj", np.eye(2), colour).reshape(f.n, f.sites, 6 * g, 6 * g)
        out[..., q.L[:, None], q.L[None, :]] += QL
    return out


def _higgs_block(M, idx: DoubletIndex, Y_up, Y_down, phi1, phi2):
    eye = np.eye(idx.colours)
    Yu, Yd = np.kron(eye, Y_up), np.kron(eye, Y_down)
    p1, p2 = phi1[:, None, None], phi2[:, None, None]
    c1, c2 = np.conj(p1), np.conj(p2)

    def put(rows, cols, block):
        M[:, rows[:, None], cols[None, :]] += block

    put(idx.up_R, idx.up_L, Yu * c1)
    put(idx.up_R, idx.down_L, Yu * c2)
    put(idx.down_R, idx.up_L, -Yd * p2)
    put(idx.down_R, idx.down_L, Yd * p1)
    put(idx.up_L, idx.up_R, -Yu * p1)
    put(idx.up_L, idx.down_R, Yd * c2)
    put(idx.down_L, idx.up_R, -Yu * p2)
    put(idx.down_L, idx.down_R, -Yd * c1)


def higgs_fiber(triple: FiniteSpectralTriple, f: GaugeHiggsFields) -> np.ndarray:
    """Higgs matrix ``phi(x)`` of shape ``(V, dF, dF)`` (zero for ED)."""
    out = np.zeros((f.sites, triple.dim, triple.dim), dtype=complex)
    kind = model_kind(triple)
    if kind == ED:
        return out
    Y = yukawa_matrices(triple)
    _higgs_block(out, lepton_index(triple.reps), Y["nu"], Y["e"], f.phi1, f.phi2)
    if kind == SM:
        _higgs_block(out, quark_index(triple.reps), Y["u"], Y["d"], f.phi1, f.phi2)
    return out


def continuum_operator(pg, f: GaugeHiggsFields):
    """``D_A = 1 (x) i^t Dslash + A_mu (x) i^t gamma^mu + (i D_F + phi) (x) 1`` from field values."""
    return pg.assemble_fluctuated(gauge_fiber(pg.finite, f), higgs_fiber(pg.finite, f))


# ------------------------------------------------------------- extraction


def fluctuation_fibers(pg, A: SmoothPerturbation, reality_tol: float = 1e-10):
    """Fiber gauge matrices and Higgs matrix of a smooth perturbation.

    ``A_mu = sum pi(a) pi(d_mu b) + sum pi^op(a^*) pi^op(d_mu b^*)`` and
    ``phi = sum pi(a) [c D_F, pi(b)] + sum pi^op(a^*) [c D_F, pi^op(b^*)]``,
    with exact derivatives of the trigonometric-polynomial entries.
    """
    lat = pg.lattice.spec
    T = pg.finite
    values = A.at(lat)
    defect = reality_defect(values)
    if defect > reality_tol:
        raise RealityError(f"perturbation is not real (defect {defect:.3e})")
    V, dF, n = lat.volume_sites, T.dim, lat.n

    def fib(m):
        return np.broadcast_to(m, (V, dF, dF))

    gauge = np.zeros((n, V, dF, dF), dtype=complex)
    phi = np.zeros((V, dF, dF), dtype=complex)
    DF = pg.c_M * T.D_F
    for a_expr, b_expr in A.terms:
        a, b = a_expr.value(lat), b_expr.value(lat)
        pa, pb = fib(T.pi(a)), fib(T.pi(b))
        oa, ob = fib(T.pi_op(a.star())), fib(T.pi_op(b.star()))
        phi += pa @ (DF @ pb - pb @ DF) + oa @ (DF @ ob - ob @ DF)
        for mu in range(n):
            db = b_expr.derivative(lat, mu)
            gauge[mu] += pa @ fib(T.pi(db)) + oa @ fib(T.pi_op(db.star()))
    return gauge, phi


def _project(block, Y) -> np.ndarray:
    """Least-squares scalar ``c(x)`` with ``block(x) = c(x) Y``; ``None`` when ``Y = 0``."""
    norm = np.vdot(Y, Y).real
    if norm < 1e-24:
        return None
    return np.einsum("ij,vij->v", Y.conj(), block) / norm


def _read_higgs(triple, phi) -> tuple[np.ndarray, np.ndarray]:
    Y = yukawa_matrices(triple)
    lep = lepton_index(triple.reps)

    def blk(rows, cols):
        return phi[:, rows[:, None], cols[None, :]]

    phi1 = _project(-blk(lep.up_L, lep.up_R), Y["nu"])
    phi2 = _project(-blk(lep.down_L, lep.up_R), Y["nu"])
    if phi1 is None:
        c = _project(-blk(lep.down_L, lep.down_R), Y["e"])
        d = _project(blk(lep.up_L, lep.down_R), Y["e"])
        if c is None:
            zero = np.zeros(phi.shape[0], dtype=complex)
            return zero, zero
        phi1, phi2 = np.conj(c), np.conj(d)
    return phi1, phi2


def _read_electroweak(triple, gauge, out: GaugeHiggsFields):
    lep = lepton_index(triple.reps)
    g = lep.up_R.size
    e0 = lep.down_R[0]
    out.Lambda = -gauge[:, :, e0, e0] / 2
    L2 = gauge[:, :, lep.L[::g][:, None], lep.L[::g][None, :]]
    out.Q = L2 + out.Lambda[..., None, None] * np.eye(2)


def extract_fields_ed(pg, A: SmoothPerturbation) -> GaugeHiggsFields:
    """``A_mu = sum_j (lambda_j d_mu lambda'_j + mu_j d_mu mu'_j)`` read from the fluctuation."""
    gauge, _ = fluctuation_fibers(pg, A)
    lat = pg.lattice.spec
    out = GaugeHiggsFields(ED, lat.n, lat.volume_sites)
    out.A = gauge[:, :, 0, 0]
    out.extra["fiber_residual"] = float(np.abs(gauge - gauge[:, :, :1, :1] * np.eye(2)).max())
    return out


def extract_fields_ew(pg, A: SmoothPerturbation) -> GaugeHiggsFields:
    gauge, phi = fluctuation_fibers(pg, A)
    lat = pg.lattice.spec
    out = GaugeHiggsFields(EW, lat.n, lat.volume_sites)
    _read_electroweak(pg.finite, gauge, out)
    out.phi1, out.phi2 = _read_higgs(pg.finite, phi)
    _record_residuals(pg.finite, out, gauge, phi)
    return out


def extract_fields_sm(pg, A: SmoothPerturbation) -> GaugeHiggsFields:
    """Also reads the colour field; its trace part is reported as ``unimodular_defect``.

    The right action of the ``M3`` block yields ``W in u(3)`` on every quark
    summand; the hypercharge pattern needs ``tr W = Lambda``, which is the
    infinitesimal unimodularity condition. ``V`` is the traceless part.
    """
    gauge, phi = fluctuation_fibers(pg, A)
    T = pg.finite
    lat = pg.lattice.spec
    out = GaugeHiggsFields(SM, lat.n, lat.volume_sites)
    _read_electroweak(T, gauge, out)
    q = quark_index(T.reps)
    g = T.params["generations"]
    # colour block of u_R at generation 0: Lambda from the left action plus W
    rows = q.up_R[::g]
    W = gauge[:, :, rows[:, None], rows[None, :]] - out.Lambda[..., None, None] * np.eye(3)
    trW = np.trace(W, axis1=-2, axis2=-1)
    out.V = W - trW[..., None, None] / 3 * np.eye(3)
    defect = (trW - out.Lambda) / 3
    out.extra["unimodular_defect"] = float(np.abs(defect).max())
    out.phi1, out.phi2 = _read_higgs(T, phi)
    _record_residuals(T, out, gauge, phi, colour_shift=defect)
    return out


def _record_residuals(T, out, gauge, phi, colour_shift=None):
    """Distance between the measured fibers and the closed forms of the read-off fields.

    ``colour_shift`` adds the trace part of the colour field that the closed
    form (which assumes unimodularity) leaves out.
    """
    ref = gauge_fiber(T, out)
    if colour_shift is not None:
        q = quark_index(T.reps)
        _diag_add(ref, np.concatenate([q.R, q.L]), colour_shift)
    out.extra["gauge_residual"] = float(np.abs(ref - gauge).max())
    out.extra["higgs_residual"] = float(np.abs(higgs_fiber(T, out) - phi).max())


EXTRACTORS = {ED: extract_fields_ed, EW: extract_fields_ew, SM: extract_fields_sm}


def extract_fields(pg, A: SmoothPerturbation) -> GaugeHiggsFields:
    return EXTRACTORS[model_kind(pg.finite)](pg, A)


# ---------------------------------------------------------- decomposition


def _components(pg, xi) -> np.ndarray:
    return np.asarray(xi, dtype=complex).reshape(pg.dF, pg.V, pg.dS)


def _kinetic_spinor(pg, psi) -> np.ndarray:
    lat = pg.lattice
    out = lat.apply(psi.reshape(lat.spec.sites + (pg.dS,))).reshape(pg.V, pg.dS)
    return lat.phase * out


def _gauge_spinor(pg, mu, field_v, psi) -> np.ndarray:
    """``i^t gamma^mu f(x) psi(x)`` for a scalar site field ``f``."""
    g = pg.lattice.phase * pg.lattice.clifford.coordinate_gamma(mu)
    return field_v[:, None] * (psi @ g.T)


def _bilinear_gauge(pg, comps, rows, cols, M) -> complex:
    """``sum_mu sum_{f,g} <psi_f | i^t gamma^mu M_mu(x)_{fg} psi_g>`` over index lists."""
    total = 0j
    for mu in range(M.shape[0]):
        for i, f in enumerate(rows):
            for j, g in enumerate(cols):
                coef = M[mu, :, i, j]
                if not np.any(coef):
                    continue
                total += pg.spinor_inner(comps[f], _gauge_spinor(pg, mu, coef, comps[g]))
    return total


def _bilinear_scalar(pg, comps, rows, cols, M) -> complex:
    """``sum_{f,g} <psi_f | M(x)_{fg} psi_g>`` with ``M`` of shape ``(V, len(rows), len(cols))``."""
    total = 0j
    for i, f in enumerate(rows):
        for j, g in enumerate(cols):
            coef = M[:, i, j]
            if not np.any(coef):
                continue
            total += pg.spinor_inner(comps[f], coef[:, None] * comps[g])
    return total


def yukawa_matrix(triple, f: GaugeHiggsFields, sector: str = "lepton") -> np.ndarray:
    """``Phi(x)`` mapping left doublets to right doublets, shape ``(V, |R|, |L|)``."""
    Y = yukawa_matrices(triple)
    up, down = ("nu", "e") if sector == "lepton" else ("u", "d")
    c = 1 if sector == "lepton" else 3
    Yu, Yd = np.kron(np.eye(c), Y[up]), np.kron(np.eye(c), Y[down])
    p1 = (f.phi1 + 1)[:, None, None]
    p2 = f.phi2[:, None, None]
    top = np.concatenate([-Yu * np.conj(p1), -Yu * np.conj(p2)], axis=2)
    bottom = np.concatenate([Yd * p2, -Yd * p1], axis=2)
    return np.concatenate([top, bottom], axis=1)


def _yukawa_terms(pg, comps, idx: DoubletIndex, Phi) -> complex:
    R, L = idx.R, idx.L
    Phi_h = np.conj(np.swapaxes(Phi, -1, -2))
    return _bilinear_scalar(pg, comps, R, L, Phi) + _bilinear_scalar(pg, comps, L, R, Phi_h)


def decompose_action(pg, f: GaugeHiggsFields, xi, D_A=None) -> dict:
    """Labelled terms of the Krein action and the full value ``<J xi | D_A xi>``.

    The full value comes from the assembled product operator, the terms from
    the spinor components of ``xi`` with the sitewise Krein product, so their
    agreement is a genuine identity check.
    """
    T = pg.finite
    kind = model_kind(T)
    if D_A is None:
        D_A = continuum_operator(pg, f)
    full = krein_action(pg.space, D_A, xi, weight=pg.weight)
    comps = _components(pg, xi)
    terms = {}
    terms["kinetic"] = sum(pg.spinor_inner(comps[k], _kinetic_spinor(pg, comps[k])) for k in range(pg.dF))
    n = f.n
    if kind == ED:
        A = f.A[:, :, None, None]
        terms["gauge"] = _bilinear_gauge(pg, comps, [0, 1], [0, 1], A * np.eye(2))
        psi = comps[0] + comps[1]
        terms["mass"] = -T.params["m"] * pg.spinor_inner(psi, psi)
    else:
        lep = lepton_index(T.reps)
        eR = lep.down_R
        terms["hypercharge e_R"] = _bilinear_gauge(pg, comps, eR, eR,
                                                   np.einsum("mv,ij->mvij", -2 * f.Lambda, np.eye(eR.size)))
        weak = _gen_kron(f.Q - f.Lambda[..., None, None] * np.eye(2), lep.up_R.size)
        terms["weak lepton doublet"] = _bilinear_gauge(pg, comps, lep.L, lep.L, weak)
        terms["yukawa lepton"] = _yukawa_terms(pg, comps, lep, yukawa_matrix(T, f, "lepton"))
        if kind == SM:
            q = quark_index(T.reps)
            g = lep.up_R.size
            for name, rows, hyper in (("hypercharge u_R", q.up_R, 4 / 3), ("hypercharge d_R", q.down_R, -2 / 3)):
                terms[name] = _bilinear_gauge(pg, comps, rows, rows,
                                              np.einsum("mv,ij->mvij", hyper * f.Lambda, np.eye(rows.size)))
            quark_weak = _gen_kron(f.Q + f.Lambda[..., None, None] / 3 * np.eye(2), 3 * g)
            terms["weak quark doublet"] = _bilinear_gauge(pg, comps, q.L, q.L, quark_weak)
            colour = _gen_kron(f.V, g)
            allq = [q.up_R, q.down_R, q.up_L, q.down_L]
            terms["colour"] = sum(_bilinear_gauge(pg, comps, r, r, colour) for r in allq)
            terms["yukawa quark"] = _yukawa_terms(pg, comps, q, yukawa_matrix(T, f, "quark"))
    total = sum(terms.values())
    scale = max(abs(full), 1e-300)
    return {
        "model": kind,
        "terms": {k: complex(v) for k, v in terms.items()},
        "term_sum": complex(total),
        "full": complex(full),
        "residual": abs(total - full) / scale,
        "n": n,
    }


def ed_lagrangian_action(pg, f: GaugeHiggsFields, xi) -> complex:
    """``sum_x a^n psibar (i gamma^mu (d_mu + A_mu) - m) psi`` with ``psibar = psi^dagger gamma(e_0)``.

    Independent of the product operator: derivatives are taken by explicit
    rolls and the Dirac adjoint is formed directly. Needs signature (1,3).
    """
    lat = pg.lattice
    spec = lat.spec
    if (spec.t, spec.s) != (1, 3):
        raise SignatureError("Lagrangian form is stated for signature (1,3)")
    if model_kind(pg.finite) != ED:
        raise ValueError("Lagrangian form applies to the ED model")
    comps = _components(pg, xi)
    psi = (comps[0] + comps[1]).reshape(spec.sites + (pg.dS,))
    cl = lat.clifford
    bar = np.conj(psi) @ cl.gamma[0]
    body = -pg.finite.params["m"] * psi
    for mu in range(spec.n):
        d = (np.roll(psi, -1, axis=mu) - np.roll(psi, 1, axis=mu)) / (2 * spec.spacing[mu])
        d = d + f.A[mu].reshape(spec.sites)[..., None] * psi
        body = body + 1j * d @ cl.coordinate_gamma(mu).T
    return complex(np.sum(bar * body)) * spec.cell_volume


def _gen_kron(M, g):
    """``M (x) 1_g`` on the trailing matrix axes of ``(n, V, k, k)``."""
    n, V, k, _ = M.shape
    return np.einsum("mvab,ij->mvaibj", M, np.eye(g)).reshape(n, V, k * g, k * g)


def vev_fields(model: str, pg, v: float) -> GaugeHiggsFields:
    """Zero gauge fields with ``phi1 + 1 = v / sqrt 2`` and ``phi2 = 0``."""
    lat = pg.lattice.spec
    return GaugeHiggsFields(model, lat.n, lat.volume_sites,
                            phi1=np.full(lat.volume_sites, v / np.sqrt(2) - 1, dtype=complex))


def vev_substitute(pg, v: float, xi) -> dict:
    """Yukawa terms at the vacuum value against the Dirac mass closed form.

    For the standard model the closed form uses the Yukawa matrices in place
    of the scalar masses.
    """
    T = pg.finite
    kind = model_kind(T)
    if kind == ED:
        raise ValueError("vacuum substitution needs a Higgs field (EW or SM)")
    f = vev_fields(kind, pg, v)
    comps = _components(pg, xi)
    # Higgs part of the action straight from the product operator
    X = pg.sitewise(pg.c_M * T.D_F + higgs_fiber(T, f))
    direct = krein_action(pg.space, X, xi, weight=pg.weight)
    Y = yukawa_matrices(T)
    c = v / np.sqrt(2)
    closed = 0j
    sectors = [(lepton_index(T.reps), Y["nu"], Y["e"])]
    if kind == SM:
        q = quark_index(T.reps)
        sectors.append((q, np.kron(np.eye(3), Y["u"]), np.kron(np.eye(3), Y["d"])))
    for idx, Yu, Yd in sectors:
        for L, R, Ym in ((idx.up_L, idx.up_R, Yu), (idx.down_L, idx.down_R, Yd)):
            M = np.broadcast_to(Ym, (pg.V,) + Ym.shape)
            closed += -c * (_bilinear_scalar(pg, comps, L, R, M)
                            + _bilinear_scalar(pg, comps, R, L, np.conj(np.swapaxes(M, -1, -2))))
    return {"v": v, "direct": complex(direct), "closed_form": complex(closed),
            "residual": abs(direct - closed) / max(abs(direct), 1e-300)}


# ---------------------------------------------------------------- Majorana


@dataclass(frozen=True, eq=False)
class MajoranaSpace:
    """Doubled electroweak space with particle and antiparticle sectors.

    The real structure acts as ``v -> K conj(v)`` with ``K`` the sector swap.
    """

    triple: FiniteSpectralTriple
    base: FiniteSpectralTriple
    D_M: np.ndarray
    m_R: float

    @property
    def K(self) -> np.ndarray:
        d = self.base.dim
        z = np.zeros((d, d))
        return np.block([[z, np.eye(d)], [np.eye(d), z]]).astype(complex)

    @property
    def particle_dim(self) -> int:
        return self.base.dim


def majorana_space(m_nu: float = 1.0, m_e: float = 1.0, m_R: float = 1.0) -> MajoranaSpace:
    base = ew_triple(m_nu, m_e)
    spec = base.algebra
    anti = [
        Summand("nubar_R", 0, (0, "as_is"), (0, "as_is")),
        Summand("ebar_R", 0, (0, "as_is"), (0, "conj")),
        Summand("Lbar", 1, (0, "as_is"), (1, "transpose")),
    ]
    reps = RepresentationTable(spec, list(base.reps.summands) + anti)
    d = base.dim
    D_M = np.zeros((d, d), dtype=complex)
    D_M[0, 0] = 1j * m_R
    D = np.block([[base.D_F, -D_M.conj().T], [D_M, base.D_F.conj()]])
    J = np.diag(np.r_[np.ones(d), -np.ones(d)]).astype(complex)
    T = FiniteSpectralTriple("EW+Majorana", spec, reps, D, J, params={**base.params, "m_R": float(m_R)})
    return MajoranaSpace(T, base, D_M, float(m_R))


def majorana_relations(ms: MajoranaSpace) -> dict[str, float]:
    """Residuals of the finite relations of the doubled space.

    The real structure is ``K o conj``; an antilinear ``K conj`` composed with
    a linear ``X`` gives ``K conj(X)``, so the relations become matrix ones.
    """
    T, K, D_M = ms.triple, ms.K, ms.D_M
    D, J, G = T.D_F, T.J_F, T.Gamma_F
    comm = D @ K - K @ D.conj()
    d = ms.particle_dim
    # block-diagonal: -2 conj(D_M) on the particle block, 2 D_M on the antiparticle block
    expected = np.zeros_like(comm)
    expected[:d, :d] = -2 * D_M.conj()
    expected[d:, d:] = 2 * D_M
    support = np.abs(comm) > 1e-14
    allowed = np.zeros_like(support)
    allowed[:d, :d] = np.abs(D_M) > 0
    allowed[d:, d:] = np.abs(D_M) > 0
    return {
        "D_M symmetric": float(np.abs(D_M - D_M.T).max()),
        "D_F hat Krein-self-adjoint": float(np.abs(J @ D.conj().T @ J - D).max()),
        "real structure anticommutes with J_F hat": float(np.abs(K @ J.conj() + J @ K).max()),
        "real structure anticommutes with Gamma_F hat": float(np.abs(K @ G.conj() + G @ K).max()),
        "D_F hat J = J D_F hat^*": float(np.abs(D @ K - K @ D.conj().T.conj()).max()),
        "commutator closed form": float(np.abs(comm - expected).max()),
        "commutator support": float(np.abs(comm[support & ~allowed]).max(initial=0.0)),
    }


@dataclass(frozen=True, eq=False)
class MajoranaProduct:
    """Product of the doubled space with a (1, 3) lattice plus its real structure.

    The real structure is ``J v = M conj(v)`` with
    ``M = (K Gamma_F) (x) 1_sites (x) C``.
    """

    ms: MajoranaSpace
    pg: object
    C: np.ndarray

    @property
    def M(self) -> sp.csr_matrix:
        ms, pg = self.ms, self.pg
        left = ms.K @ ms.triple.Gamma_F
        right = sp.kron(sp.identity(pg.V), self.C)
        return sp.kron(left, right, format="csr")

    def apply_J(self, v) -> np.ndarray:
        return self.M @ np.conj(v)

    def conjugate_operator(self, X) -> sp.csr_matrix:
        """``J X J^{-1} = M conj(X) conj(M)`` (``J`` is an involution)."""
        M = self.M
        return (M @ X.conj() @ M.conj()).tocsr()

    def relations(self) -> dict[str, float]:
        pg, M = self.pg, self.M
        I = sp.identity(pg.dim, format="csr")

        def mx(m):
            m = sp.csr_matrix(m)
            return float(np.abs(m.data).max(initial=0.0))

        G = pg.Gamma
        return {
            "J^2 = 1": mx(M @ M.conj() - I),
            "J Gamma = Gamma J": mx(M @ G.conj() - G @ M),
            "J commutes with Krein symmetry": mx(M @ pg.J.conj() - pg.J @ M),
            "J commutes with kinetic term": mx(M @ pg.kinetic.conj() - pg.kinetic @ M),
        }


def majorana_product(ms: MajoranaSpace, lattice) -> MajoranaProduct:
    from .lattice import LatticeDirac, LatticeSpec, assemble_product

    spec = lattice.spec if isinstance(lattice, LatticeDirac) else lattice
    if not isinstance(spec, LatticeSpec) or (spec.t, spec.s) != (1, 3):
        raise SignatureError("the Majorana extension is built for the (1, 3) signature only")
    pg = assemble_product(ms.triple, lattice)
    C = build_charge_conjugation(pg.lattice.clifford).C
    return MajoranaProduct(ms, pg, C)


def _embed_particle(ms: MajoranaSpace, m: np.ndarray) -> np.ndarray:
    d = ms.particle_dim
    out = np.zeros(m.shape[:-2] + (2 * d, 2 * d), dtype=complex)
    out[..., :d, :d] = m
    return out


def majorana_operator(mp: MajoranaProduct, f: GaugeHiggsFields) -> sp.csr_matrix:
    """``D_A = bare + F + J F J^{-1}`` with ``F`` the particle-sector fluctuation."""
    ms, pg = mp.ms, mp.pg
    gauge = _embed_particle(ms, gauge_fiber(ms.base, f))
    phi = _embed_particle(ms, higgs_fiber(ms.base, f))
    F = (pg.gauge_term(gauge) + pg.sitewise(phi)).tocsr()
    return (pg.D_matrix + F + mp.conjugate_operator(F)).tocsr()


def majorana_action(mp: MajoranaProduct, f: GaugeHiggsFields, xi, xi2=None) -> dict:
    """Direct action on ``eta = xi + J xi`` against ``2 S_EW`` plus the Majorana terms.

    With ``xi2`` the polarized form ``<J_K eta_1 | D_A eta_2>`` is compared
    with ``S_EW(xi_1, xi_2) + S_EW(xi_2, xi_1)`` plus the two Majorana
    pieces. For commuting spinors ``gamma(e_0) C`` is antisymmetric, so the
    diagonal Majorana terms vanish identically and only the polarized form
    exercises them.
    """
    from .lattice import ProductGeometry

    ms, pg = mp.ms, mp.pg
    d = ms.particle_dim
    x1 = np.asarray(xi, dtype=complex)
    x2 = x1 if xi2 is None else np.asarray(xi2, dtype=complex)
    for x in (x1, x2):
        if np.abs(x.reshape(pg.dF, -1)[d:]).max(initial=0.0) > 0:
            raise ValueError("xi must lie in the particle sector")
    for x in (x1, x2):
        if np.abs(x[pg.parity == 1]).max(initial=0.0) > 0:
            raise ValueError("xi must be even")
    eta1, eta2 = x1 + mp.apply_J(x1), x2 + mp.apply_J(x2)
    D_A = majorana_operator(mp, f)
    direct = complex(np.vdot(pg.J @ eta1, D_A @ eta2)) * pg.weight
    fixed_point = max(float(np.abs(mp.apply_J(e) - e).max()) for e in (eta1, eta2))

    # electroweak form on the particle components alone
    ew_pg = ProductGeometry(ms.base, pg.lattice)
    D_ew = continuum_operator(ew_pg, f).matrix
    p1, p2 = x1.reshape(pg.dF, -1)[:d].ravel(), x2.reshape(pg.dF, -1)[:d].ravel()

    def s_ew(a, b):
        return complex(np.vdot(ew_pg.J @ a, D_ew @ b)) * pg.weight

    S12, S21 = s_ew(p1, p2), s_ew(p2, p1)
    C = mp.C
    psi1 = x1.reshape(pg.dF, pg.V, pg.dS)[0]
    psi2 = x2.reshape(pg.dF, pg.V, pg.dS)[0]
    maj = -ms.m_R * (pg.spinor_inner(psi1, np.conj(psi2) @ C.T) + pg.spinor_inner(np.conj(psi1) @ C.T, psi2))
    closed = S12 + S21 + maj

    # cross term <J J_K xi | [D_A, J] xi> vanishes by sector orthogonality
    comm_xi = D_A @ mp.apply_J(x2) - mp.apply_J(D_A @ x2)
    left = mp.apply_J(pg.J @ x1)
    cross = complex(np.vdot(pg.J @ left, comm_xi)) * pg.weight
    return {
        "direct": direct,
        "closed_form": complex(closed),
        "electroweak part": complex(S12 + S21),
        "majorana terms": complex(maj),
        "residual": abs(direct - closed) / max(abs(direct), abs(closed), 1e-300),
        "J eta = eta": fixed_point,
        "cross term": abs(cross),
        "polarized": xi2 is not None,
    }


__all__ = [
    "ED", "EW", "SM", "GaugeHiggsFields", "MajoranaProduct", "MajoranaSpace", "build_model",
    "continuum_operator", "decompose_action", "ed_triple", "ew_triple", "extract_fields",
    "extract_fields_ed", "extract_fields_ew", "extract_fields_sm", "fields_from_spec", "gauge_fiber",
    "higgs_fiber", "lepton_index", "load_triple", "majorana_action", "majorana_operator",
    "majorana_product", "majorana_relations", "majorana_space", "model_kind", "model_slots",
    "quark_index", "random_yukawas", "sm_triple", "triple_from_dict", "vev_fields", "vev_substitute",
    "yukawa_matrix",
]
