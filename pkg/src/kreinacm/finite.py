"""Finite Krein spectral triples built from a block algebra and a table of
direct summands carrying commuting left and right actions.

Algebra elements may carry leading site axes: a block of shape ``(V, d, d)``
is a field of ``d x d`` values over ``V`` lattice sites, and every algebra
operation broadcasts over those axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graded import (
    EVEN,
    INHOMOGENEOUS,
    ODD,
    STRUCT_TOL,
    GradedKreinSpace,
    GradedOperator,
    classify_parity,
    parity_signs,
)

COMPLEX, QUATERNION, MATRIX = "C", "H", "M"
MODES = ("as_is", "conj", "transpose")


# ---------------------------------------------------------------- algebra


@dataclass(frozen=True)
class BlockKind:
    kind: str
    size: int = 1

    def __post_init__(self):
        if self.kind not in (COMPLEX, QUATERNION, MATRIX):
            raise ValueError(f"unknown block kind {self.kind!r}")
        expected = {COMPLEX: 1, QUATERNION: 2}.get(self.kind)
        if expected is not None and self.size != expected:
            object.__setattr__(self, "size", expected)
        if self.size < 1:
            raise ValueError("block size must be positive")

    @property
    def real_dim(self) -> int:
        return {COMPLEX: 2, QUATERNION: 4}.get(self.kind, 2 * self.size * self.size)

    def label(self) -> str:
        return f"M{self.size}" if self.kind == MATRIX else self.kind


def parse_block(label) -> BlockKind:
    """``"C"``, ``"H"`` or ``"M<k>"`` (also accepts ``["M", k]``)."""
    if isinstance(label, BlockKind):
        return label
    if isinstance(label, (list, tuple)) and len(label) == 2 and label[0] == MATRIX:
        return BlockKind(MATRIX, int(label[1]))
    if label in (COMPLEX, QUATERNION):
        return BlockKind(label)
    if isinstance(label, str) and label.startswith(MATRIX) and label[1:].isdigit():
        return BlockKind(MATRIX, int(label[1:]))
    raise ValueError(f"cannot parse algebra block {label!r}")


@dataclass(frozen=True)
class AlgebraBlockSpec:
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(parse_block(b) for b in self.blocks)
        if not blocks:
            raise ValueError("algebra needs at least one block")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def of(cls, *labels) -> "AlgebraBlockSpec":
        return cls(tuple(labels))

    def __len__(self):
        return len(self.blocks)

    @property
    def real_dim(self) -> int:
        return sum(b.real_dim for b in self.blocks)

    def labels(self) -> list[str]:
        return [b.label() for b in self.blocks]


def quaternion(alpha, beta) -> np.ndarray:
    """``alpha + beta j`` as ``[[alpha, beta], [-conj(beta), conj(alpha)]]``."""
    alpha = np.asarray(alpha, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    out = np.empty(np.broadcast(alpha, beta).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = alpha
    out[..., 0, 1] = beta
    out[..., 1, 0] = -np.conj(beta)
    out[..., 1, 1] = np.conj(alpha)
    return out


def quaternion_defect(q: np.ndarray) -> float:
    """Distance of a ``(..., 2, 2)`` array from the quaternion form."""
    d1 = np.abs(q[..., 1, 1] - np.conj(q[..., 0, 0]))
    d2 = np.abs(q[..., 1, 0] + np.conj(q[..., 0, 1]))
    return float(max(d1.max(initial=0.0), d2.max(initial=0.0)))


class AlgebraElement:
    """Element of a block algebra; each block is a ``(..., d, d)`` complex array."""

    __slots__ = ("spec", "blocks")

    def __init__(self, spec: AlgebraBlockSpec, blocks, check: bool = True):
        blocks = tuple(np.asarray(b, dtype=complex) for b in blocks)
        if len(blocks) != len(spec):
            raise ValueError(f"expected {len(spec)} blocks, got {len(blocks)}")
        if check:
            for kind, b in zip(spec.blocks, blocks):
                if b.ndim < 2 or b.shape[-2:] != (kind.size, kind.size):
                    raise ValueError(f"block {kind.label()} has shape {b.shape}, expected (..., {kind.size}, {kind.size})")
                if kind.kind == QUATERNION and quaternion_defect(b) > 1e-10:
                    raise ValueError("quaternion block is not of the form [[a, b], [-conj(b), conj(a)]]")
        self.spec = spec
        self.blocks = blocks

    @classmethod
    def from_values(cls, spec: AlgebraBlockSpec, *values) -> "AlgebraElement":
        """Build from scalars (C), ``(alpha, beta)`` pairs (H) and square arrays (M)."""
        blocks = []
        for kind, v in zip(spec.blocks, values):
            if kind.kind == COMPLEX:
                v = np.asarray(v, dtype=complex)
                blocks.append(v[..., None, None])
            elif kind.kind == QUATERNION:
                if isinstance(v, tuple):
                    blocks.append(quaternion(*v))
                else:
                    blocks.append(np.asarray(v, dtype=complex))
            else:
                blocks.append(np.asarray(v, dtype=complex))
        return cls(spec, blocks)

    @classmethod
    def unit(cls, spec: AlgebraBlockSpec, sites: tuple = ()) -> "AlgebraElement":
        return cls(spec, [np.broadcast_to(np.eye(k.size, dtype=complex), tuple(sites) + (k.size, k.size)).copy()
                          for k in spec.blocks], check=False)

    @classmethod
    def zero(cls, spec: AlgebraBlockSpec, sites: tuple = ()) -> "AlgebraElement":
        return cls(spec, [np.zeros(tuple(sites) + (k.size, k.size), dtype=complex) for k in spec.blocks], check=False)

    @property
    def site_shape(self) -> tuple:
        return np.broadcast_shapes(*(b.shape[:-2] for b in self.blocks))

    def _same(self, other):
        if self.spec != other.spec:
            raise ValueError("algebra elements belong to different block specs")

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            self._same(other)
            return AlgebraElement(self.spec, [x @ y for x, y in zip(self.blocks, other.blocks)], check=False)
        c = complex(other)
        if c.imag and any(k.kind == QUATERNION for k in self.spec.blocks):
            raise ValueError("quaternion blocks admit only real scalars")
        return AlgebraElement(self.spec, [c * x for x in self.blocks], check=False)

    def __rmul__(self, c):
        return self.__mul__(c)

    def __add__(self, other):
        self._same(other)
        return AlgebraElement(self.spec, [x + y for x, y in zip(self.blocks, other.blocks)], check=False)

    def __sub__(self, other):
        self._same(other)
        return AlgebraElement(self.spec, [x - y for x, y in zip(self.blocks, other.blocks)], check=False)

    def __neg__(self):
        return AlgebraElement(self.spec, [-x for x in self.blocks], check=False)

    def star(self) -> "AlgebraElement":
        return AlgebraElement(self.spec, [np.conj(np.swapaxes(x, -1, -2)) for x in self.blocks], check=False)

    def max_abs(self) -> float:
        return max(float(np.abs(b).max(initial=0.0)) for b in self.blocks)

    def distance(self, other) -> float:
        return (self - other).max_abs()

    def unitarity_defect(self) -> float:
        eye = AlgebraElement.unit(self.spec)
        return (self * self.star() - eye).max_abs()

    def real_coordinates(self) -> np.ndarray:
        """Coordinates over the reals, shape ``(..., real_dim)``."""
        parts = []
        for kind, b in zip(self.spec.blocks, self.blocks):
            if kind.kind == QUATERNION:
                z = np.stack([b[..., 0, 0], b[..., 0, 1]], axis=-1)
            else:
                z = b.reshape(b.shape[:-2] + (-1,))
            parts.append(np.concatenate([z.real, z.imag], axis=-1))
        return np.concatenate([np.broadcast_to(p, self.site_shape + p.shape[-1:]) for p in parts], axis=-1)

    def __repr__(self):
        return f"AlgebraElement({'+'.join(self.spec.labels())}, sites={self.site_shape})"


def random_element(spec: AlgebraBlockSpec, rng: np.random.Generator, sites: tuple = ()) -> AlgebraElement:
    """Independent standard complex Gaussian entries per block."""
    def cg(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    blocks = []
    for kind in spec.blocks:
        if kind.kind == QUATERNION:
            blocks.append(quaternion(cg(sites), cg(sites)))
        else:
            blocks.append(cg(tuple(sites) + (kind.size, kind.size)))
    return AlgebraElement(spec, blocks, check=False)


def random_unitary(spec: AlgebraBlockSpec, rng: np.random.Generator, sites: tuple = ()) -> AlgebraElement:
    """Random unitary: phases for C, unit quaternions for H, QR of Gaussians for M."""
    blocks = []
    for kind in spec.blocks:
        if kind.kind == COMPLEX:
            blocks.append(np.exp(2j * np.pi * rng.random(tuple(sites) + (1, 1))))
        elif kind.kind == QUATERNION:
            v = rng.standard_normal(tuple(sites) + (4,))
            v /= np.linalg.norm(v, axis=-1, keepdims=True)
            blocks.append(quaternion(v[..., 0] + 1j * v[..., 1], v[..., 2] + 1j * v[..., 3]))
        else:
            k = kind.size
            z = rng.standard_normal(tuple(sites) + (k, k)) + 1j * rng.standard_normal(tuple(sites) + (k, k))
            q, r = np.linalg.qr(z)
            d = np.diagonal(r, axis1=-2, axis2=-1)
            blocks.append(q * (d / np.abs(d))[..., None, :])
    return AlgebraElement(spec, blocks, check=False)


def unitary_lie_basis(spec: AlgebraBlockSpec) -> list[AlgebraElement]:
    """Real basis of the Lie algebra of the unitary group: ``i R`` per C block,
    ``su(2)`` per H block and ``u(k)`` per M block."""
    basis = []
    zero = [np.zeros((k.size, k.size), dtype=complex) for k in spec.blocks]
    for i, kind in enumerate(spec.blocks):
        if kind.kind == COMPLEX:
            gens = [np.array([[1j]])]
        elif kind.kind == QUATERNION:
            gens = [quaternion(1j, 0), quaternion(0, 1), quaternion(0, 1j)]
        else:
            k = kind.size
            gens = []
            for r in range(k):
                for c in range(k):
                    m = np.zeros((k, k), dtype=complex)
                    if r == c:
                        m[r, r] = 1j
                    elif r < c:
                        m[r, c], m[c, r] = 1, -1
                    else:
                        m[r, c], m[c, r] = 1j, 1j
                    gens.append(m)
        for g in gens:
            blocks = list(zero)
            blocks[i] = np.asarray(g, dtype=complex)
            basis.append(AlgebraElement(spec, blocks, check=False))
    return basis


# ---------------------------------------------------------- representations


@dataclass(frozen=True)
class ActionRule:
    """Block ``block`` acting as-is, entrywise conjugated or transposed."""

    block: int
    mode: str = "as_is"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown action mode {self.mode!r}")

    def apply(self, a: AlgebraElement) -> np.ndarray:
        b = a.blocks[self.block]
        if self.mode == "conj":
            return np.conj(b)
        if self.mode == "transpose":
            return np.swapaxes(b, -1, -2)
        return b


def _rule(r) -> ActionRule | None:
    if r is None or isinstance(r, ActionRule):
        return r
    if isinstance(r, int):
        return ActionRule(r)
    return ActionRule(int(r[0]), r[1] if len(r) > 1 else "as_is")


@dataclass(frozen=True)
class Summand:
    """Direct summand ``C^l (x) C^r (x) C^mult`` of the finite space.

    ``left``/``right`` are :class:`ActionRule` or ``None`` (scalar 1). The
    left action acts on the first factor, the right action on the second.
    """

    name: str
    parity: int
    left: ActionRule | None
    right: ActionRule | None
    multiplicity: int = 1

    def __post_init__(self):
        object.__setattr__(self, "left", _rule(self.left))
        object.__setattr__(self, "right", _rule(self.right))
        if self.parity not in (0, 1):
            raise ValueError("summand parity must be 0 or 1")
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be positive")


def bkron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product over the last two axes, broadcasting the leading ones."""
    out = np.einsum("...ij,...kl->...ikjl", a, b)
    s = out.shape
    return out.reshape(s[:-4] + (s[-4] * s[-3], s[-2] * s[-1]))


class RepresentationTable:
    def __init__(self, spec: AlgebraBlockSpec, summands):
        self.spec = spec
        self.summands = tuple(summands)
        if not self.summands:
            raise ValueError("representation table is empty")
        self._dims = []
        for s in self.summands:
            for r in (s.left, s.right):
                if r is not None and not 0 <= r.block < len(spec):
                    raise ValueError(f"summand {s.name} refers to missing block {r.block}")
            dl = spec.blocks[s.left.block].size if s.left else 1
            dr = spec.blocks[s.right.block].size if s.right else 1
            self._dims.append((dl, dr, s.multiplicity))
        sizes = [dl * dr * m for dl, dr, m in self._dims]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        names = [s.name for s in self.summands]
        if len(set(names)) != len(names):
            raise ValueError("summand names must be unique")

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    @property
    def parity(self) -> np.ndarray:
        return np.concatenate([np.full(self.offsets[i + 1] - self.offsets[i], s.parity, dtype=np.int8)
                               for i, s in enumerate(self.summands)])

    def index(self, name: str) -> int:
        for i, s in enumerate(self.summands):
            if s.name == name:
                return i
        raise KeyError(name)

    def slice(self, name: str) -> slice:
        i = self.index(name)
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def factor_dims(self, name: str) -> tuple:
        return self._dims[self.index(name)]

    def _assemble(self, a: AlgebraElement, side: str) -> np.ndarray:
        lead = a.site_shape
        out = np.zeros(lead + (self.dim, self.dim), dtype=complex)
        for i, s in enumerate(self.summands):
            dl, dr, mult = self._dims[i]
            if side == "left":
                f = s.left.apply(a) if s.left else np.ones(lead + (1, 1))
                m = bkron(bkron(f, np.eye(dr)), np.eye(mult))
            else:
                f = s.right.apply(a) if s.right else np.ones(lead + (1, 1))
                m = bkron(bkron(np.eye(dl), f), np.eye(mult))
            lo, hi = self.offsets[i], self.offsets[i + 1]
            out[..., lo:hi, lo:hi] = m
        return out

    def left(self, a: AlgebraElement) -> np.ndarray:
        return self._assemble(a, "left")

    def right(self, a: AlgebraElement) -> np.ndarray:
        return self._assemble(a, "right")


# ------------------------------------------------------------ finite triple


@dataclass(frozen=True, eq=False)
class FiniteSpectralTriple:
    """``(A_F, H_F, D_F, J_F)`` with grading from the summand parities.

    ``J_F`` defaults to the identity. Basis order follows the summand table.
    """

    name: str
    algebra: AlgebraBlockSpec
    reps: RepresentationTable
    D_F: np.ndarray
    J_F: np.ndarray = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.reps.dim
        D = np.asarray(self.D_F, dtype=complex)
        if D.shape != (n, n):
            raise ValueError(f"D_F has shape {D.shape}, expected {(n, n)}")
        J = np.eye(n, dtype=complex) if self.J_F is None else np.asarray(self.J_F, dtype=complex)
        object.__setattr__(self, "D_F", D)
        object.__setattr__(self, "J_F", J)
        object.__setattr__(self, "space", GradedKreinSpace(self.reps.parity, J))

    @property
    def dim(self) -> int:
        return self.reps.dim

    @property
    def parity(self) -> np.ndarray:
        return self.reps.parity

    @property
    def Gamma_F(self) -> np.ndarray:
        return np.diag(parity_signs(self.parity)).astype(complex)

    @property
    def J(self):
        return self.J_F

    @property
    def D(self) -> GradedOperator:
        return GradedOperator(self.space, self.D_F)

    def pi(self, a: AlgebraElement) -> np.ndarray:
        return self.reps.left(a)

    def pi_op(self, b: AlgebraElement) -> np.ndarray:
        return self.reps.right(b)

    def random_element(self, rng, sites=()) -> AlgebraElement:
        return random_element(self.algebra, rng, sites)

    def random_unitary(self, rng, sites=()) -> AlgebraElement:
        return random_unitary(self.algebra, rng, sites)

    @property
    def site_shape(self) -> tuple:
        return ()

    def __repr__(self):
        return f"FiniteSpectralTriple({self.name}, dim={self.dim}, algebra={'+'.join(self.algebra.labels())})"


def represent(triple: FiniteSpectralTriple, a: AlgebraElement, side: str = "left") -> GradedOperator:
    """Left action ``pi(a)`` or right action ``pi^op(a^op)`` as an operator on H_F."""
    if a.spec != triple.algebra:
        raise ValueError("algebra element does not match the triple's block spec")
    if a.site_shape:
        raise ValueError("represent takes a single algebra element, not a field")
    if side == "left":
        m = triple.pi(a)
    elif side == "right":
        m = triple.pi_op(a)
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return GradedOperator(triple.space, m)


# ------------------------------------------------------------------ checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    samples: int = 0
    detail: str = ""


@dataclass
class CheckReport:
    subject: str
    checks: list = field(default_factory=list)

    def add(self, name, residual, tolerance, samples=0, detail="", passed=None) -> CheckResult:
        residual = float(residual)
        if passed is None:
            passed = bool(np.isfinite(residual) and residual <= tolerance)
        c = CheckResult(name, bool(passed), residual, tolerance, samples, detail)
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = [f"{self.subject}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            lines.append(f"  {'ok ' if c.passed else 'BAD'} {c.name:<32} {c.residual:.3e} (tol {c.tolerance:.0e})")
        return "\n".join(lines)


def _odd_part(parity, m) -> float:
    p = np.asarray(parity)
    mask = p[:, None] != p[None, :]
    return float(np.abs(np.asarray(m)[..., mask]).max(initial=0.0))


def _even_part(parity, m) -> float:
    p = np.asarray(parity)
    mask = p[:, None] == p[None, :]
    return float(np.abs(np.asarray(m)[..., mask]).max(initial=0.0))


def check_axioms(triple: FiniteSpectralTriple, samples: int = 100, seed: int = 0,
                 tol: float = STRUCT_TOL) -> CheckReport:
    """Finite-dimensional Krein spectral triple axioms, sampled over the algebra."""
    rng = np.random.default_rng(seed)
    rep = CheckReport(triple.name)
    D, J, p = triple.D_F, triple.J_F, triple.parity
    eye = np.eye(triple.dim)

    rep.add("J_F self-adjoint", np.abs(J - J.conj().T).max(), tol)
    rep.add("J_F involution", np.abs(J @ J - eye).max(), tol)
    jp = classify_parity(p, J, tol)
    rep.add("J_F homogeneous", 0.0 if jp != INHOMOGENEOUS else min(_odd_part(p, J), _even_part(p, J)), tol)
    rep.add("D_F odd", _even_part(p, D), tol)
    rep.add("D_F Krein-self-adjoint", np.abs(J @ D.conj().T @ J - D).max(), tol)

    comm_J = even = lr = hom = 0.0
    for _ in range(samples):
        a = triple.random_element(rng)
        b = triple.random_element(rng)
        pa, pb = triple.pi(a), triple.pi(b)
        oa, ob = triple.pi_op(a), triple.pi_op(b)
        comm_J = max(comm_J, np.abs(J @ pa - pa @ J).max(), np.abs(J @ oa - oa @ J).max())
        even = max(even, _odd_part(p, pa), _odd_part(p, oa))
        lr = max(lr, np.abs(pa @ ob - ob @ pa).max())
        hom = max(hom, np.abs(triple.pi(a * b) - pa @ pb).max(), np.abs(triple.pi_op(a * b) - ob @ oa).max(),
                  np.abs(triple.pi(a.star()) - pa.conj().T).max())
    rep.add("J_F commutes with algebra", comm_J, tol, samples)
    rep.add("representations even", even, tol, samples)
    rep.add("left and right actions commute", lr, tol, samples)
    rep.add("representations multiplicative", hom, 1e-10, samples)
    # finite dimension: bounded commutators and compact resolvents hold trivially
    rep.add("bounded commutators", 0.0, tol, detail="finite dimension")
    rep.add("compactness", 0.0, tol, detail="finite dimension")
    return rep


def order_one_residual(geometry, D, samples: int = 20, seed: int = 0) -> float:
    """``max |[pi(a), [D, pi^op(b)]]|`` over random ``a, b``."""
    from .graded import max_abs

    Dm = D.matrix if isinstance(D, GradedOperator) else D
    rng = np.random.default_rng(seed)
    res = 0.0
    sites = geometry.site_shape
    for _ in range(samples):
        a = geometry.random_element(rng, sites)
        b = geometry.random_element(rng, sites)
        pa, ob = geometry.pi(a), geometry.pi_op(b)
        inner = Dm @ ob - ob @ Dm
        res = max(res, max_abs(pa @ inner - inner @ pa))
    return res


def check_order_one(triple, D=None, samples: int = 100, seed: int = 0, tol: float = STRUCT_TOL) -> CheckReport:
    """Order-one condition for ``D`` (default: the triple's own operator)."""
    if D is None:
        D = triple.D
    rep = CheckReport(getattr(triple, "name", "geometry"))
    rep.add("order-one condition", order_one_residual(triple, D, samples, seed), tol, samples)
    return rep


__all__ = [
    "AlgebraBlockSpec", "AlgebraElement", "ActionRule", "BlockKind", "CheckReport", "CheckResult",
    "FiniteSpectralTriple", "RepresentationTable", "Summand", "bkron", "check_axioms", "check_order_one",
    "order_one_residual", "parse_block", "quaternion", "quaternion_defect", "random_element",
    "random_unitary", "represent", "unitary_lie_basis", "EVEN", "ODD",
]
