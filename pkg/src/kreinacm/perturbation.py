"""Perturbations ``sum_j a_j (x) b_j^op``, the fluctuation map, gauge
transformations and the Krein action.

A *geometry* here is anything exposing ``pi``, ``pi_op``, ``space``,
``site_shape``, ``random_element`` and ``random_unitary``: both
:class:`~kreinacm.finite.FiniteSpectralTriple` and
:class:`~kreinacm.lattice.ProductGeometry` qualify. Operators may be dense or
sparse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .finite import AlgebraElement, CheckReport, order_one_residual, unitary_lie_basis
from .graded import (
    EVEN,
    ODD,
    STRUCT_TOL,
    GradedOperator,
    classify_parity,
    dagger,
    max_abs,
    rel_diff,
)


class OrderOneError(ValueError):
    """The order-one shortcut was requested for an operator that violates it."""


class RealityError(ValueError):
    """A field extraction received a perturbation that is not real."""


# ------------------------------------------------------------ perturbations


class PerturbationElement:
    """Finite sum ``sum_j a_j (x) b_j^op`` stored as a list of pairs."""

    __slots__ = ("terms",)

    def __init__(self, terms):
        terms = tuple((a, b) for a, b in terms)
        if not terms:
            raise ValueError("perturbation needs at least one term")
        spec = terms[0][0].spec
        for a, b in terms:
            if a.spec != spec or b.spec != spec:
                raise ValueError("all terms must share one algebra block spec")
        self.terms = terms

    @property
    def spec(self):
        return self.terms[0][0].spec

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def scaled(self, c: float) -> "PerturbationElement":
        return PerturbationElement([(c * a, b) for a, b in self.terms])

    def __add__(self, other):
        return PerturbationElement(self.terms + other.terms)

    def __repr__(self):
        return f"PerturbationElement({len(self.terms)} terms)"


def identity_perturbation(spec, sites=()) -> PerturbationElement:
    one = AlgebraElement.unit(spec, sites)
    return PerturbationElement([(one, one)])


def pert_multiply(A: PerturbationElement, B: PerturbationElement) -> PerturbationElement:
    """``A B`` in ``A (x) A^op``: ``(a (x) b^op)(a' (x) b'^op) = a a' (x) (b' b)^op``."""
    if A.spec != B.spec:
        raise ValueError("perturbations belong to different algebras")
    return PerturbationElement([(a * a2, b2 * b) for a, b in A.terms for a2, b2 in B.terms])


def bar(A: PerturbationElement) -> PerturbationElement:
    """``bar(sum a_j (x) b_j^op) = sum b_j^* (x) (a_j^*)^op``."""
    return PerturbationElement([(b.star(), a.star()) for a, b in A.terms])


def normalization(A: PerturbationElement) -> AlgebraElement:
    out = None
    for a, b in A.terms:
        out = a * b if out is None else out + a * b
    return out


def normalization_defect(A: PerturbationElement) -> float:
    N = normalization(A)
    return N.distance(AlgebraElement.unit(A.spec, N.site_shape))


def is_normalized(A: PerturbationElement, tol: float = 1e-10) -> bool:
    return normalization_defect(A) <= tol


def real_tensor(A: PerturbationElement) -> np.ndarray:
    """Coordinates of ``A`` in the real tensor product, shape ``(..., n, n)``."""
    out = 0.0
    for a, b in A.terms:
        ca, cb = a.real_coordinates(), b.real_coordinates()
        out = out + ca[..., :, None] * cb[..., None, :]
    return out


def reality_defect(A: PerturbationElement) -> float:
    """Distance between the tensors of ``A`` and ``bar(A)`` (exact, basis-free)."""
    t, tb = real_tensor(A), real_tensor(bar(A))
    scale = max(np.abs(t).max(), 1.0)
    return float(np.abs(t - tb).max() / scale)


def is_real(A: PerturbationElement, tol: float = 1e-10) -> bool:
    return reality_defect(A) <= tol


def delta(u: AlgebraElement) -> PerturbationElement:
    """``Delta(u) = u (x) (u^*)^op``."""
    return PerturbationElement([(u, u.star())])


def gauge_act(u: AlgebraElement, A: PerturbationElement) -> PerturbationElement:
    """``Delta(u) A = sum u a_j (x) (b_j u^*)^op``."""
    return pert_multiply(delta(u), A)


def random_perturbation(geometry, rng: np.random.Generator, n_terms: int = 2, real: bool = True,
                        scale: float = 0.5) -> PerturbationElement:
    """Random normalized perturbation over ``geometry.site_shape``.

    ``n_terms`` random pairs are completed by ``1 (x) (1 - sum a_j b_j)`` so
    the sum of products is one. With ``real=True`` the result is averaged with
    its bar image, which keeps normalization and makes it real.
    """
    sites = geometry.site_shape
    spec = geometry.algebra
    terms = [(scale * geometry.random_element(rng, sites), scale * geometry.random_element(rng, sites))
             for _ in range(n_terms)]
    one = AlgebraElement.unit(spec, sites)
    rest = one
    for a, b in terms:
        rest = rest - a * b
    A = PerturbationElement(terms + [(one, rest)])
    if real:
        A = (A + bar(A)).scaled(0.5)
    return A


# ---------------------------------------------------------- fluctuations


def _matrix(D):
    return D.matrix if isinstance(D, GradedOperator) else D


def _wrap(geometry, m, parity=None):
    return GradedOperator(geometry.space, m, parity)


def represent_tilde(geometry, A: PerturbationElement):
    """``pi~(A) = sum_j pi(a_j) pi^op(b_j^op)``."""
    out = None
    for a, b in A.terms:
        m = geometry.pi(a) @ geometry.pi_op(b)
        out = m if out is None else out + m
    return out


def eta_double_sum(D, A: PerturbationElement, geometry):
    """Literal double sum ``sum_{j,k} pi~(a_j (x) a_k^*) [D, pi~(b_j (x) b_k^*)]``.

    Quadratic in the number of terms; kept as an oracle for :func:`eta`.
    """
    Dm = _matrix(D)
    out = None
    for aj, bj in A.terms:
        for ak, bk in A.terms:
            L = geometry.pi(aj) @ geometry.pi_op(ak.star())
            R = geometry.pi(bj) @ geometry.pi_op(bk.star())
            m = L @ (Dm @ R - R @ Dm)
            out = m if out is None else out + m
    return out


def _eta_general(Dm, A, geometry):
    # pi and pi^op commute, so the double sum factorizes into two single sums:
    # sum_k pi^op(a_k^*) X pi^op(b_k^*) - pi(N) pi^op(N^*) D, X = sum_j pi(a_j) D pi(b_j)
    X = None
    for a, b in A.terms:
        m = geometry.pi(a) @ Dm @ geometry.pi(b)
        X = m if X is None else X + m
    out = None
    for a, b in A.terms:
        m = geometry.pi_op(a.star()) @ X @ geometry.pi_op(b.star())
        out = m if out is None else out + m
    N = normalization(A)
    return out - geometry.pi(N) @ geometry.pi_op(N.star()) @ Dm


def _eta_order_one(Dm, A, geometry):
    out = None
    for a, b in A.terms:
        pb = geometry.pi(b)
        ob = geometry.pi_op(b.star())
        m = geometry.pi(a) @ (Dm @ pb - pb @ Dm) + geometry.pi_op(a.star()) @ (Dm @ ob - ob @ Dm)
        out = m if out is None else out + m
    return out


def eta(D, A: PerturbationElement, geometry, mode: str = "general", order_one_tol: float = 1e-10,
        order_one_samples: int = 4, seed: int = 0) -> GradedOperator:
    """Fluctuation ``eta_D(A)``.

    ``mode="general"`` evaluates the double-sum definition (valid without the
    order-one condition); ``mode="order_one"`` uses the single-sum shortcut
    after checking the order-one condition on random samples.
    """
    Dm = _matrix(D)
    if mode == "general":
        m = _eta_general(Dm, A, geometry)
    elif mode == "order_one":
        res = order_one_residual(geometry, Dm, order_one_samples, seed)
        if res > order_one_tol:
            raise OrderOneError(f"order-one condition fails (residual {res:.3e}); use mode='general'")
        m = _eta_order_one(Dm, A, geometry)
    else:
        raise ValueError(f"unknown eta mode {mode!r}")
    return _wrap(geometry, m)


@dataclass(frozen=True, eq=False)
class FluctuatedOperator:
    base: GradedOperator
    delta: GradedOperator

    @property
    def total(self) -> GradedOperator:
        return self.base + self.delta


def fluctuate(D, A: PerturbationElement, geometry, mode: str = "general") -> FluctuatedOperator:
    """``D -> D_A = D + eta_D(A)``."""
    base = D if isinstance(D, GradedOperator) else _wrap(geometry, D)
    return FluctuatedOperator(base, eta(base, A, geometry, mode))


# ------------------------------------------------------------------ gauge


@dataclass(frozen=True, eq=False)
class GaugeElement:
    u: AlgebraElement
    rho_u: object

    @property
    def inverse(self):
        return dagger(self.rho_u)


def rho(geometry, u: AlgebraElement):
    """``rho(u) = pi(u) pi^op((u^*)^op)`` as a bare matrix."""
    return geometry.pi(u) @ geometry.pi_op(u.star())


def gauge_rho(geometry, u: AlgebraElement, tol: float = 1e-10) -> GaugeElement:
    defect = u.unitarity_defect()
    if defect > tol:
        raise ValueError(f"gauge element is not unitary (defect {defect:.3e})")
    return GaugeElement(u, rho(geometry, u))


def gauge_transform_potential(T, u: AlgebraElement, D, geometry) -> GradedOperator:
    """``gamma_u(T) = rho(u) T rho(u^*) + rho(u) [D, rho(u^*)]``."""
    g = gauge_rho(geometry, u)
    r, ri = g.rho_u, g.inverse
    Tm, Dm = _matrix(T), _matrix(D)
    return _wrap(geometry, r @ Tm @ ri + r @ (Dm @ ri - ri @ Dm))


def lie_differential(geometry, X: AlgebraElement):
    """``d rho(X) = pi(X) - pi^op(X)`` for anti-hermitian ``X``."""
    return geometry.pi(X) - geometry.pi_op(X)


def _real_rank(mats, tol=1e-10) -> int:
    cols = [np.concatenate([np.asarray(m).real.ravel(), np.asarray(m).imag.ravel()]) for m in mats]
    if not cols:
        return 0
    s = np.linalg.svd(np.stack(cols, axis=1), compute_uv=False)
    return int((s > tol * max(s[0], 1.0)).sum())


def gauge_group_report(triple, samples: int = 10_000, seed: int = 0, claim: str = "",
                       tol: float = STRUCT_TOL) -> dict:
    """Evidence about the gauge group from the Lie differential and a centre scan.

    The centre scan evaluates ``rho`` on elements whose blocks are scalar:
    ``lambda`` on C blocks, ``+-1`` on H blocks and ``omega * 1`` on M blocks
    with ``lambda`` and ``omega`` drawn from roots of unity of order about
    ``samples / 2^h``.
    """
    spec = triple.algebra
    basis = unitary_lie_basis(spec)
    mats = [lie_differential(triple, X) for X in basis]
    rank = _real_rank(mats)
    out = {
        "lie_dimension": len(basis),
        "differential_rank": rank,
        "kernel_dimension": len(basis) - rank,
    }
    # unimodular subalgebra: tr d rho(X) = 0
    traces = np.array([np.trace(m) for m in mats])
    constraint = np.stack([traces.real, traces.imag])
    _, s, vt = np.linalg.svd(constraint)
    n_constr = int((s > 1e-10 * max(s.max(initial=0.0), 1.0)).sum())
    null = vt[n_constr:]
    sub = [sum(c * m for c, m in zip(row, mats)) for row in null]
    out["unimodular_dimension"] = _real_rank(sub)
    out["kernel_elements"] = _centre_scan(triple, samples, tol)
    out["center_points"] = _centre_count(spec, samples)
    if claim:
        out["claim"] = claim
    return out


def _centre_roots(spec, samples):
    n_c = sum(1 for b in spec.blocks if b.kind != "H")
    n_h = sum(1 for b in spec.blocks if b.kind == "H")
    # at least +-1 on every scalar block, so sign kernels are always visible
    per = max(int(round((samples / 2 ** n_h) ** (1.0 / max(n_c, 1)))), 2)
    return n_c, n_h, per


def _centre_count(spec, samples) -> int:
    n_c, n_h, per = _centre_roots(spec, samples)
    return per ** n_c * 2 ** n_h


def _centre_scan(triple, samples, tol, chunk: int = 1024):
    """All scanned centre elements with ``rho(u) = 1``, as ``[re, im]`` per block."""
    spec = triple.algebra
    n_c, n_h, per = _centre_roots(spec, samples)
    roots = np.exp(2j * np.pi * np.arange(per) / per)
    axes = [roots if k.kind != "H" else np.array([1.0, -1.0]) for k in spec.blocks]
    grids = [g.ravel() for g in np.meshgrid(*axes, indexing="ij")]
    eye = np.eye(triple.dim)
    found = []
    for lo in range(0, grids[0].size, chunk):
        vals = [g[lo:lo + chunk] for g in grids]
        blocks = [v[:, None, None] * np.eye(k.size) for v, k in zip(vals, spec.blocks)]
        u = AlgebraElement(spec, blocks, check=False)
        r = triple.pi(u) @ triple.pi_op(u.star())
        dev = np.abs(r - eye).max(axis=(-2, -1))
        for i in np.flatnonzero(dev <= tol):
            found.append([[round(float(v[i].real), 12) + 0.0, round(float(np.imag(v[i])), 12) + 0.0]
                          for v in vals])
    return found


def unimodular_filter(triple, u: AlgebraElement, tol: float = 1e-10) -> bool:
    """``det rho(u) = 1`` on the finite space."""
    if u.site_shape:
        raise ValueError("unimodular_filter takes a single algebra element")
    if u.spec != triple.algebra:
        raise ValueError("algebra element does not match the triple")
    d = np.linalg.det(rho(triple, u))
    return bool(abs(d - 1.0) <= tol)


# ----------------------------------------------------------------- action


def krein_action(space, D_A, xi, weight: float = 1.0, tol: float = 1e-10) -> complex:
    """``S = <J xi | D_A xi>_J`` for an even vector ``xi``.

    Returns the complex value; its imaginary part vanishes when ``D_A`` is
    Krein-self-adjoint.
    """
    xi = np.asarray(xi, dtype=complex)
    if xi.shape != (space.dim,):
        raise ValueError(f"xi must have length {space.dim}")
    odd = np.abs(xi[space.parity == 1]).max(initial=0.0)
    if odd > tol * max(np.abs(xi).max(initial=0.0), 1.0):
        raise ValueError("the Krein action is defined on even vectors only")
    return complex(np.vdot(space.J @ xi, _matrix(D_A) @ xi)) * weight


def quadratic_form(space, D, v, w, weight: float = 1.0) -> complex:
    """``F(v, w) = <v | D w>`` without parity restriction."""
    return complex(np.vdot(space.J @ np.asarray(v), _matrix(D) @ np.asarray(w))) * weight


def krein_self_adjoint_defect(space, T) -> float:
    Tm = _matrix(T)
    return rel_diff(space.J @ dagger(Tm) @ space.J, Tm)


def parity_defect(space, T, expected: str) -> float:
    """Size of the block of ``T`` that ``expected`` parity forbids."""
    Tm = _matrix(T)
    p = space.parity
    if sp.issparse(Tm):
        coo = Tm.tocoo()
        same = p[coo.row] == p[coo.col]
        data = coo.data[~same] if expected == EVEN else coo.data[same]
        return float(np.abs(data).max(initial=0.0))
    mask = p[:, None] != p[None, :] if expected == EVEN else p[:, None] == p[None, :]
    return float(np.abs(Tm[mask]).max(initial=0.0))


__all__ = [
    "FluctuatedOperator", "GaugeElement", "OrderOneError", "PerturbationElement", "RealityError",
    "bar", "delta", "eta", "eta_double_sum", "fluctuate", "gauge_act", "gauge_group_report", "gauge_rho",
    "gauge_transform_potential", "identity_perturbation", "is_normalized", "is_real", "krein_action",
    "krein_self_adjoint_defect", "lie_differential", "normalization", "normalization_defect",
    "parity_defect", "pert_multiply", "quadratic_form", "random_perturbation", "reality_defect",
    "real_tensor", "represent_tilde", "rho", "unimodular_filter", "classify_parity", "ODD",
]
