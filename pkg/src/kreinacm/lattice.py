"""Periodic Lorentzian lattice, the central-difference Dirac operator and the
almost-commutative product with a finite space.

Product basis order is (fiber f, site x, spinor s) with flat index
``f * V * dS + x * dS + s``; sites are flattened row-major.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property, reduce

import numpy as np
import scipy.sparse as sp

from .clifford import CliffordModule, build_clifford
from .finite import AlgebraElement, FiniteSpectralTriple, random_element, random_unitary
from .graded import (
    GradedKreinSpace,
    GradedOperator,
    _degree,
    graded_tensor_op,
    parity_signs,
)
from .perturbation import krein_action, krein_self_adjoint_defect, parity_defect

MAX_DIM_ENV = "KREINACM_MAX_DIM"
DEFAULT_MAX_DIM = 65536
DENSE_CAP = 4096


class ResourceError(RuntimeError):
    """A requested operator exceeds the configured dimension cap."""


def max_dim() -> int:
    raw = os.environ.get(MAX_DIM_ENV)
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        return int(raw)
    except ValueError:
        raise ResourceError(f"{MAX_DIM_ENV} must be an integer, got {raw!r}") from None


def _check_cap(dim: int, what: str):
    cap = max_dim()
    if dim > cap:
        raise ResourceError(f"{what} has dimension {dim}, above the cap {cap} (set {MAX_DIM_ENV})")


@dataclass(frozen=True)
class LatticeSpec:
    """Periodic lattice with ``t`` time-like and ``s`` space-like directions.

    The spacing defaults to ``2 pi / N`` so every direction has length ``2 pi``.
    """

    t: int
    s: int
    sites: tuple
    spacing: tuple = None

    def __post_init__(self):
        n = self.t + self.s
        if self.t < 0 or self.s < 0:
            raise ValueError("signature entries must be non-negative")
        if n < 2 or n % 2:
            raise ValueError(f"even total dimension required, got t+s={n}")
        sites = tuple(int(v) for v in self.sites)
        if len(sites) != n:
            raise ValueError(f"need {n} site counts, got {len(sites)}")
        if min(sites) < 4:
            raise ValueError("every direction needs at least 4 sites")
        spacing = self.spacing
        if spacing is None:
            spacing = tuple(2 * np.pi / N for N in sites)
        elif np.isscalar(spacing):
            spacing = (float(spacing),) * n
        spacing = tuple(float(a) for a in spacing)
        if len(spacing) != n or min(spacing) <= 0:
            raise ValueError("spacing must be positive, one value per direction")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "spacing", spacing)

    @property
    def n(self) -> int:
        return self.t + self.s

    @property
    def volume_sites(self) -> int:
        return int(np.prod(self.sites))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lengths(self) -> tuple:
        return tuple(N * a for N, a in zip(self.sites, self.spacing))

    def coordinates(self) -> list[np.ndarray]:
        axes = [np.arange(N) * a for N, a in zip(self.sites, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")


def _shift(N: int) -> sp.csr_matrix:
    """``(P psi)(i) = psi(i + 1)`` with periodic wrap."""
    return sp.csr_matrix((np.ones(N), (np.arange(N), (np.arange(N) + 1) % N)), shape=(N, N))


class LatticeDirac:
    """Central-difference Dirac operator ``sum_mu kappa(mu) gamma(e_mu) d^c_mu``."""

    def __init__(self, spec: LatticeSpec, clifford: CliffordModule = None):
        self.spec = spec
        self.clifford = clifford or build_clifford(spec.t, spec.s)
        if (self.clifford.t, self.clifford.s) != (spec.t, spec.s):
            raise ValueError("Clifford module signature does not match the lattice")
        _check_cap(self.dim, "lattice spinor space")

    @property
    def dS(self) -> int:
        return self.clifford.dim

    @property
    def dim(self) -> int:
        return self.spec.volume_sites * self.dS

    def central_difference(self, mu: int) -> sp.csr_matrix:
        mats = [sp.identity(N, format="csr") for N in self.spec.sites]
        P = _shift(self.spec.sites[mu])
        mats[mu] = (P - P.T) / (2 * self.spec.spacing[mu])
        return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        out = None
        for mu in range(self.spec.n):
            term = sp.kron(self.central_difference(mu), self.clifford.coordinate_gamma(mu), format="csr")
            out = term if out is None else out + term
        return out.tocsr()

    @property
    def phase(self) -> complex:
        return 1j ** (self.spec.t % 4)

    @cached_property
    def krein_operator(self) -> sp.csr_matrix:
        """``i^t`` times the Dirac operator, the Krein-self-adjoint one."""
        return (self.phase * self.matrix).tocsr()

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Matrix-free stencil; ``psi`` has shape ``sites + (dS,)``."""
        psi = np.asarray(psi, dtype=complex)
        out = np.zeros_like(psi)
        for mu in range(self.spec.n):
            d = (np.roll(psi, -1, axis=mu) - np.roll(psi, 1, axis=mu)) / (2 * self.spec.spacing[mu])
            out += d @ self.clifford.coordinate_gamma(mu).T
        return out

    @cached_property
    def J(self) -> sp.csr_matrix:
        return sp.kron(sp.identity(self.spec.volume_sites), self.clifford.J_M, format="csr")

    @cached_property
    def parity(self) -> np.ndarray:
        return np.tile(self.clifford.parity, self.spec.volume_sites)

    @cached_property
    def space(self) -> GradedKreinSpace:
        return GradedKreinSpace(self.parity, self.J)

    def operator(self) -> GradedOperator:
        return GradedOperator(self.space, self.krein_operator)

    def dense(self) -> np.ndarray:
        if self.dim > DENSE_CAP:
            raise ResourceError(f"dense materialization limited to dimension {DENSE_CAP}")
        return self.matrix.toarray()


def build_lattice_dirac(spec: LatticeSpec) -> LatticeDirac:
    return LatticeDirac(spec)


@dataclass
class LatticeSection:
    """Section of fiber (x) spinor bundle; ``values`` has shape ``(dF, V, dS)``."""

    values: np.ndarray

    def vector(self) -> np.ndarray:
        return np.asarray(self.values, dtype=complex).ravel()

    @classmethod
    def from_vector(cls, v, dF, V, dS) -> "LatticeSection":
        return cls(np.asarray(v).reshape(dF, V, dS))


class ProductGeometry:
    """Almost-commutative product of a finite space with the lattice.

    ``D = i^{|J_F|} (x) i^t Dslash + i^{|J_M|} D_F (x) 1`` and
    ``J = i^{|J_F||J_M|} J_F (x) J_M`` with graded tensor products.
    """

    def __init__(self, finite: FiniteSpectralTriple, lattice: LatticeDirac):
        self.finite = finite
        self.lattice = lattice
        self.dF, self.V, self.dS = finite.dim, lattice.spec.volume_sites, lattice.dS
        _check_cap(self.dim, "product space")
        self.deg_JF = _degree(finite.space.J_parity)
        self.deg_JM = _degree(lattice.space.J_parity)
        self.c_F = 1j ** self.deg_JF
        self.c_M = 1j ** self.deg_JM

    # plumbing shared with FiniteSpectralTriple
    @property
    def dim(self) -> int:
        return self.dF * self.V * self.dS

    @property
    def algebra(self):
        return self.finite.algebra

    @property
    def site_shape(self) -> tuple:
        return (self.V,)

    @property
    def name(self) -> str:
        return f"{self.finite.name} x lattice{self.lattice.spec.sites}"

    @property
    def weight(self) -> float:
        return self.lattice.spec.cell_volume

    def random_element(self, rng, sites=None) -> AlgebraElement:
        return random_element(self.algebra, rng, self.site_shape if sites is None else sites)

    def random_unitary(self, rng, sites=None) -> AlgebraElement:
        return random_unitary(self.algebra, rng, self.site_shape if sites is None else sites)

    @cached_property
    def parity(self) -> np.ndarray:
        p = self.finite.parity[:, None] + self.lattice.parity[None, :]
        return (p % 2).ravel().astype(np.int8)

    @cached_property
    def J(self) -> sp.csr_matrix:
        T = graded_tensor_op(GradedOperator(self.finite.space, self.finite.J_F),
                             GradedOperator(self.lattice.space, self.lattice.J),
                             space=_PlainSpace(self.parity))
        return (T.matrix * 1j ** (self.deg_JF * self.deg_JM)).tocsr()

    @cached_property
    def space(self) -> GradedKreinSpace:
        return GradedKreinSpace(self.parity, self.J)

    @cached_property
    def Gamma(self) -> sp.csr_matrix:
        return sp.diags(parity_signs(self.parity).astype(complex), format="csr")

    @cached_property
    def kinetic(self) -> sp.csr_matrix:
        """``i^{|J_F|} (x) i^t Dslash``."""
        one = GradedOperator(self.finite.space, self.c_F * np.eye(self.dF))
        T = graded_tensor_op(one, self.lattice.operator(), space=_PlainSpace(self.parity))
        return T.matrix.tocsr()

    @cached_property
    def mass(self) -> sp.csr_matrix:
        """``i^{|J_M|} D_F (x) 1``."""
        return self.sitewise(self.c_M * self.finite.D_F)

    @cached_property
    def D_matrix(self) -> sp.csr_matrix:
        return (self.kinetic + self.mass).tocsr()

    @property
    def D(self) -> GradedOperator:
        return GradedOperator(self.space, self.D_matrix, "odd")

    # ------------------------------------------------------------ sitewise
    def sitewise(self, M, S=None) -> sp.csr_matrix:
        """``sum_x M(x) (x) |x><x| (x) S`` in (fiber, site, spinor) order.

        ``M`` is ``(dF, dF)`` or ``(V, dF, dF)``; ``S`` defaults to the spinor identity.
        """
        M = np.asarray(M, dtype=complex)
        if M.ndim == 2:
            M = np.broadcast_to(M, (self.V,) + M.shape)
        if M.shape != (self.V, self.dF, self.dF):
            raise ValueError(f"fiber field has shape {M.shape}, expected {(self.V, self.dF, self.dF)}")
        S = np.eye(self.dS, dtype=complex) if S is None else np.asarray(S, dtype=complex)
        x, f, g = np.nonzero(M)
        s, r = np.nonzero(S)
        vals = (M[x, f, g][:, None] * S[s, r][None, :]).ravel()
        VS = self.V * self.dS
        rows = (f * VS + x * self.dS)[:, None] + s[None, :]
        cols = (g * VS + x * self.dS)[:, None] + r[None, :]
        return sp.csr_matrix((vals, (rows.ravel(), cols.ravel())), shape=(self.dim, self.dim))

    def _fiber(self, m: np.ndarray) -> np.ndarray:
        return m if m.ndim == 3 else np.broadcast_to(m, (self.V,) + m.shape)

    def pi(self, a: AlgebraElement) -> sp.csr_matrix:
        return self.sitewise(self._fiber(self.finite.pi(a)))

    def pi_op(self, b: AlgebraElement) -> sp.csr_matrix:
        return self.sitewise(self._fiber(self.finite.pi_op(b)))

    def gauge_term(self, A_mu) -> sp.csr_matrix:
        """``sum_mu A_mu (x) i^{|J_F|} i^t gamma^mu`` for even fiber fields ``A_mu``.

        ``A_mu`` has shape ``(n, V, dF, dF)``; the Koszul sign puts ``Gamma_F``
        next to ``A_mu`` because the spinor factor is odd.
        """
        cm = self.lattice.clifford
        G = np.diag(parity_signs(self.finite.parity))
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for mu in range(cm.n):
            S = self.c_F * self.lattice.phase * cm.coordinate_gamma(mu)
            out = out + self.sitewise(np.asarray(A_mu[mu]) @ G, S)
        return out.tocsr()

    def assemble_fluctuated(self, A_mu, phi) -> GradedOperator:
        """Continuum-form ``D_A = kinetic + A_mu (x) i^t gamma^mu + (i D_F + phi) (x) 1``."""
        m = self.kinetic + self.gauge_term(A_mu) + self.sitewise(self.c_M * self.finite.D_F + self._fiber(np.asarray(phi)))
        return GradedOperator(self.space, m.tocsr(), "odd")

    # ------------------------------------------------------------ sections
    def section(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=complex)
        if v.shape != (self.dF, self.V, self.dS):
            raise ValueError(f"section has shape {v.shape}, expected {(self.dF, self.V, self.dS)}")
        return v.ravel()

    def random_section(self, rng, parity: int | None = 0) -> np.ndarray:
        v = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
        if parity is not None:
            v[self.parity != parity] = 0
        return v

    def components(self, xi) -> np.ndarray:
        return np.asarray(xi).reshape(self.dF, self.V, self.dS)

    def spinor_inner(self, psi, phi) -> complex:
        """Lattice Krein product ``sum_x <J_M psi(x) | phi(x)> a^n`` of spinor fields ``(V, dS)``."""
        JM = self.lattice.clifford.J_M
        return complex(np.vdot(np.asarray(psi) @ JM.T, np.asarray(phi))) * self.weight


class _PlainSpace:
    """Parity carrier for graded_tensor_op when the product J is built separately."""

    def __init__(self, parity):
        self.parity = parity
        self.dim = parity.size


def assemble_product(finite: FiniteSpectralTriple, lattice) -> ProductGeometry:
    if isinstance(lattice, LatticeSpec):
        lattice = LatticeDirac(lattice)
    return ProductGeometry(finite, lattice)


def product_checks(pg: ProductGeometry, tol: float = 1e-12) -> dict[str, float]:
    """Structural residuals of the product geometry."""
    J, D, G = pg.J, pg.D_matrix, pg.Gamma
    I = sp.identity(pg.dim, format="csr")

    def mx(m):
        m = m.tocoo()
        return float(np.abs(m.data).max(initial=0.0))

    j_par = pg.space.J_parity
    return {
        "D odd": parity_defect(pg.space, D, "odd"),
        "D Krein-self-adjoint": krein_self_adjoint_defect(pg.space, D),
        "J self-adjoint": mx(J - J.conj().T),
        "J involution": mx(J @ J - I),
        "Gamma anticommutes with D": mx(G @ D + D @ G),
        "J parity": float(_degree(j_par) != (pg.deg_JF + pg.deg_JM) % 2),
    }


def is_lorentz_type(pg: ProductGeometry) -> bool:
    return pg.space.J_parity == "odd"


def evaluate_action(pg: ProductGeometry, D_A, xi) -> tuple[float, float]:
    """Volume-weighted Krein action; returns ``(value, imaginary residual)``."""
    S = krein_action(pg.space, D_A, xi, weight=pg.weight)
    return S.real, abs(S.imag)


# ------------------------------------------------------------ convergence


def _probe_spinors(spec: LatticeSpec, dS: int, count: int, seed: int):
    from .fields import random_trig_polynomial

    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        polys = [random_trig_polynomial(rng, spec.n, 1, 3) for _ in range(dS)]
        out.append(polys)
    return out


def commutator_error(spec: LatticeSpec, f, probes) -> float:
    """``max_psi || ([Dslash, f] - gamma^mu d_mu f) psi ||`` over smooth probes."""
    Dl = LatticeDirac(spec)
    fv = f.evaluate(spec)
    df = [f.derivative(spec, mu) for mu in range(spec.n)]
    shape = spec.sites + (Dl.dS,)
    err = 0.0
    for polys in probes:
        psi = np.stack([p.evaluate(spec) for p in polys], axis=-1)
        lhs = Dl.apply((fv[:, None] * psi).reshape(shape)).reshape(-1, Dl.dS) - fv[:, None] * Dl.apply(psi.reshape(shape)).reshape(-1, Dl.dS)
        rhs = sum(df[mu][:, None] * (psi @ Dl.clifford.coordinate_gamma(mu).T) for mu in range(spec.n))
        err = max(err, float(np.sqrt(np.sum(np.abs(lhs - rhs) ** 2) * spec.cell_volume)))
    return err


def commutator_convergence(t: int, s: int, f, sizes=(16, 32, 64), n_probes: int = 3, seed: int = 0) -> dict:
    """Observed convergence order of the lattice commutator ``[Dslash, f]``."""
    errors = []
    probes = None
    for N in sizes:
        spec = LatticeSpec(t, s, (N,) * (t + s))
        if probes is None:
            probes = _probe_spinors(spec, build_clifford(t, s).dim, n_probes, seed)
        errors.append(commutator_error(spec, f, probes))
    orders = []
    for e1, e2, n1, n2 in zip(errors, errors[1:], sizes, sizes[1:]):
        if e1 < 1e-13 and e2 < 1e-13:
            orders.append(float("inf"))
        else:
            orders.append(float(np.log(e1 / e2) / np.log(n2 / n1)))
    return {"sizes": list(sizes), "errors": errors, "orders": orders,
            "ratios": [e1 / e2 if e2 else float("inf") for e1, e2 in zip(errors, errors[1:])],
            "min_order": min(orders) if orders else float("nan")}
