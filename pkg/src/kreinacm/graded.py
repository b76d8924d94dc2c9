"""Z2-graded Krein spaces and operators on them.

Operators are stored as dense ``numpy`` arrays or ``scipy.sparse`` matrices;
every function here accepts either. The basis of a graded space carries an
explicit parity tag per vector, so even and odd vectors may interleave.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

EVEN, ODD, INHOMOGENEOUS = "even", "odd", "inhomogeneous"

STRUCT_TOL = 1e-12
REL_TOL = 1e-10


class GradingError(ValueError):
    """Raised when an operation needs a homogeneous operator or vector."""


def dagger(m):
    """Conjugate transpose of a dense or sparse matrix."""
    return m.conj().T


def fro_norm(m) -> float:
    if sp.issparse(m):
        return float(spla.norm(m)) if m.nnz else 0.0
    return float(np.linalg.norm(m))


def max_abs(m) -> float:
    if sp.issparse(m):
        return float(abs(m).max()) if m.nnz else 0.0
    m = np.asarray(m)
    return float(np.abs(m).max()) if m.size else 0.0


def rel_diff(a, b) -> float:
    """Relative Frobenius distance ``|a-b| / max(|a|, |b|)`` (0 if both vanish)."""
    scale = max(fro_norm(a), fro_norm(b))
    if scale == 0.0:
        return 0.0
    return fro_norm(a - b) / scale


def identity_like(m):
    n = m.shape[0]
    if sp.issparse(m):
        return sp.identity(n, dtype=complex, format="csr")
    return np.eye(n, dtype=complex)


def _as_matrix(m):
    if sp.issparse(m):
        return m.tocsr().astype(complex)
    return np.asarray(m, dtype=complex)


def parity_signs(parity) -> np.ndarray:
    """Diagonal of the grading operator: +1 on even, -1 on odd basis vectors."""
    return 1.0 - 2.0 * np.asarray(parity, dtype=float)


def classify_parity(parity, m, tol: float = STRUCT_TOL) -> str:
    """Decide whether ``m`` is even, odd or neither in the graded basis."""
    p = np.asarray(parity, dtype=int)
    if sp.issparse(m):
        coo = m.tocoo()
        same = p[coo.row] == p[coo.col]
        even_part = np.abs(coo.data[same]).max(initial=0.0)
        odd_part = np.abs(coo.data[~same]).max(initial=0.0)
    else:
        m = np.asarray(m)
        same = p[:, None] == p[None, :]
        even_part = np.abs(m[same]).max(initial=0.0)
        odd_part = np.abs(m[~same]).max(initial=0.0)
    if odd_part <= tol:
        return EVEN
    if even_part <= tol:
        return ODD
    return INHOMOGENEOUS


def _degree(parity: str) -> int:
    if parity == EVEN:
        return 0
    if parity == ODD:
        return 1
    raise GradingError("operator is not homogeneous")


def _combine(p1: str, p2: str) -> str:
    if INHOMOGENEOUS in (p1, p2):
        return INHOMOGENEOUS
    return EVEN if (_degree(p1) + _degree(p2)) % 2 == 0 else ODD


@dataclass(frozen=True, eq=False)
class GradedKreinSpace:
    """A finite-dimensional graded Krein space.

    ``parity`` holds 0 (even) or 1 (odd) per basis vector and ``J`` is the
    fundamental symmetry. The indefinite product is ``<v|w> = (Jv)^dagger w``.
    """

    parity: np.ndarray
    J: object
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        parity = np.asarray(self.parity, dtype=np.int8)
        if parity.ndim != 1 or not np.isin(parity, (0, 1)).all():
            raise ValueError("parity must be a 1-d array of 0/1 tags")
        J = _as_matrix(self.J)
        if J.shape != (parity.size, parity.size):
            raise ValueError(f"J has shape {J.shape}, expected {(parity.size,) * 2}")
        object.__setattr__(self, "parity", parity)
        object.__setattr__(self, "J", J)
        if self.check:
            self.validate()

    @property
    def dim(self) -> int:
        return int(self.parity.size)

    @property
    def Gamma(self):
        signs = parity_signs(self.parity).astype(complex)
        if sp.issparse(self.J):
            return sp.diags(signs, format="csr")
        return np.diag(signs)

    @property
    def J_parity(self) -> str:
        return classify_parity(self.parity, self.J)

    def validate(self, tol: float = STRUCT_TOL) -> dict[str, float]:
        """Check the fundamental-symmetry axioms, raising on failure."""
        J = self.J
        res = {
            "self_adjoint": max_abs(J - dagger(J)),
            "involution": max_abs(J @ J - identity_like(J)),
        }
        bad = {k: v for k, v in res.items() if v > tol}
        if bad:
            raise ValueError(f"J is not a fundamental symmetry: {bad}")
        if self.dim and self.J_parity == INHOMOGENEOUS:
            raise ValueError("J must be homogeneous (even or odd)")
        if self.dim and not sp.issparse(J):
            if np.linalg.eigvalsh(J).max() < 0.5:
                raise ValueError("J has no +1 eigenvalue")
        return res

    def __repr__(self):
        return f"GradedKreinSpace(dim={self.dim}, J {self.J_parity})"


@dataclass(frozen=True, eq=False)
class GradedOperator:
    """Matrix acting on a :class:`GradedKreinSpace`, tagged with its parity."""

    space: GradedKreinSpace
    matrix: object
    parity: str = None

    def __post_init__(self):
        m = _as_matrix(self.matrix)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"matrix shape {m.shape} does not match space dim {self.space.dim}")
        object.__setattr__(self, "matrix", m)
        if self.parity is None:
            object.__setattr__(self, "parity", classify_parity(self.space.parity, m))
        elif self.parity not in (EVEN, ODD, INHOMOGENEOUS):
            raise ValueError(f"unknown parity {self.parity!r}")

    @property
    def degree(self) -> int:
        return _degree(self.parity)

    def _wrap(self, m, parity):
        return GradedOperator(self.space, m, parity)

    def __add__(self, other):
        p = self.parity if self.parity == other.parity else INHOMOGENEOUS
        return self._wrap(self.matrix + other.matrix, p)

    def __sub__(self, other):
        p = self.parity if self.parity == other.parity else INHOMOGENEOUS
        return self._wrap(self.matrix - other.matrix, p)

    def __neg__(self):
        return self._wrap(-self.matrix, self.parity)

    def __mul__(self, c):
        return self._wrap(self.matrix * c, self.parity)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, GradedOperator):
            return self._wrap(self.matrix @ other.matrix, _combine(self.parity, other.parity))
        return self.matrix @ other

    def dense(self) -> np.ndarray:
        if sp.issparse(self.matrix):
            return self.matrix.toarray()
        return self.matrix

    def __repr__(self):
        kind = "sparse" if sp.issparse(self.matrix) else "dense"
        return f"GradedOperator(dim={self.space.dim}, {self.parity}, {kind})"


def hilbert_adjoint(T: GradedOperator) -> GradedOperator:
    return GradedOperator(T.space, dagger(T.matrix), T.parity)


def krein_adjoint(T: GradedOperator) -> GradedOperator:
    """``T^+ = J T^* J``; conjugation by a homogeneous J keeps the parity class."""
    J = T.space.J
    return GradedOperator(T.space, J @ dagger(T.matrix) @ J, T.parity)


def krein_inner(space: GradedKreinSpace, v, w) -> complex:
    """Indefinite product ``<v|w> = <Jv|w>_J``, conjugate-linear in ``v``."""
    v = np.asarray(v, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if v.shape != (space.dim,) or w.shape != (space.dim,):
        raise ValueError(f"vectors must have length {space.dim}, got {v.shape} and {w.shape}")
    return complex(np.vdot(space.J @ v, w))


def krein_self_adjoint_residual(T: GradedOperator) -> float:
    return rel_diff(krein_adjoint(T).matrix, T.matrix)


def graded_tensor_space(A: GradedKreinSpace, B: GradedKreinSpace, J=None) -> GradedKreinSpace:
    """Graded tensor product of two spaces in Kronecker basis order.

    The fundamental symmetry of the product carries a phase that depends on
    the parities of the factors; callers who know it pass ``J`` directly,
    otherwise it is built with :func:`product_fundamental_symmetry`.
    """
    parity = (A.parity[:, None] + B.parity[None, :]).ravel() % 2
    if J is None:
        J = product_fundamental_symmetry(A, B)
    return GradedKreinSpace(parity, J)


def _graded_kron(m1, parity1, m2, deg2: int):
    """Matrix of ``T1 (x) T2`` with the Koszul sign ``(-1)^{|T2||psi1|}``."""
    if deg2:
        signs = parity_signs(parity1)
        if sp.issparse(m1):
            m1 = m1 @ sp.diags(signs)
        else:
            m1 = np.asarray(m1) * signs[None, :]
    if sp.issparse(m1) or sp.issparse(m2):
        return sp.kron(m1, m2, format="csr")
    return np.kron(m1, m2)


def graded_tensor_op(T1: GradedOperator, T2: GradedOperator, space: GradedKreinSpace = None) -> GradedOperator:
    """Graded tensor product of homogeneous operators."""
    if INHOMOGENEOUS in (T1.parity, T2.parity):
        raise GradingError("graded tensor product needs homogeneous operators")
    m = _graded_kron(T1.matrix, T1.space.parity, T2.matrix, T2.degree)
    if space is None:
        space = graded_tensor_space(T1.space, T2.space)
    return GradedOperator(space, m, _combine(T1.parity, T2.parity))


def product_fundamental_symmetry(A: GradedKreinSpace, B: GradedKreinSpace):
    """``i^{|J_A||J_B|} J_A (x) J_B``, which is again self-adjoint and unitary."""
    dA = _degree(A.J_parity) if A.dim else 0
    dB = _degree(B.J_parity) if B.dim else 0
    m = _graded_kron(A.J, A.parity, B.J, dB)
    return m * (1j ** (dA * dB))

