"""Trigonometric-polynomial fields on the periodic lattice.

A field is a sum of plane waves ``c exp(2 pi i k.x / L)`` with integer mode
vectors ``k``; values and derivatives are evaluated exactly at the lattice
sites, so the fields double as continuum reference data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .finite import AlgebraElement, quaternion

PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


def gell_mann() -> np.ndarray:
    """The eight Gell-Mann matrices, shape ``(8, 3, 3)``."""
    g = np.zeros((8, 3, 3), dtype=complex)
    g[0][0, 1] = g[0][1, 0] = 1
    g[1][0, 1], g[1][1, 0] = -1j, 1j
    g[2][0, 0], g[2][1, 1] = 1, -1
    g[3][0, 2] = g[3][2, 0] = 1
    g[4][0, 2], g[4][2, 0] = -1j, 1j
    g[5][1, 2] = g[5][2, 1] = 1
    g[6][1, 2], g[6][2, 1] = -1j, 1j
    g[7] = np.diag([1, 1, -2]) / np.sqrt(3)
    return g


GELL_MANN = gell_mann()


@dataclass(frozen=True, eq=False)
class TrigPolynomial:
    modes: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        modes = np.atleast_2d(np.asarray(self.modes, dtype=int))
        coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        if modes.shape[0] != coeffs.shape[0]:
            raise ValueError("one coefficient per mode vector required")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def dim(self) -> int:
        return self.modes.shape[1]

    @property
    def max_mode(self) -> int:
        return int(np.abs(self.modes).max(initial=0))

    def _phases(self, lattice) -> np.ndarray:
        if self.dim != lattice.n:
            raise ValueError(f"mode vectors have {self.dim} entries, lattice has {lattice.n} directions")
        X = lattice.coordinates()
        wave = 2 * np.pi * self.modes / np.asarray(lattice.lengths)[None, :]
        arg = np.tensordot(wave, np.stack([x.ravel() for x in X]), axes=(1, 0))
        return np.exp(1j * arg), wave

    def evaluate(self, lattice) -> np.ndarray:
        """Values at the sites, flattened in row-major site order."""
        ph, _ = self._phases(lattice)
        return self.coeffs @ ph

    def derivative(self, lattice, mu: int) -> np.ndarray:
        ph, wave = self._phases(lattice)
        return (self.coeffs * 1j * wave[:, mu]) @ ph

    def to_json(self) -> list:
        return [{"k": [int(v) for v in k], "c": [float(c.real), float(c.imag)]}
                for k, c in zip(self.modes, self.coeffs)]

    @classmethod
    def from_json(cls, terms, dim: int) -> "TrigPolynomial":
        if not terms:
            return cls(np.zeros((1, dim), dtype=int), [0.0])
        modes = [t["k"] for t in terms]
        coeffs = [complex(*t["c"]) if isinstance(t["c"], (list, tuple)) else complex(t["c"]) for t in terms]
        if any(len(k) != dim for k in modes):
            raise ValueError(f"mode vectors must have {dim} entries")
        return cls(modes, coeffs)


def random_trig_polynomial(rng: np.random.Generator, dim: int, max_mode: int = 1, n_terms: int = 3,
                           amplitude: float = 1.0) -> TrigPolynomial:
    modes = rng.integers(-max_mode, max_mode + 1, size=(n_terms, dim))
    coeffs = amplitude * (rng.standard_normal(n_terms) + 1j * rng.standard_normal(n_terms)) / np.sqrt(2 * n_terms)
    return TrigPolynomial(modes, coeffs)


# number of real components per direction for each gauge slot; Higgs slots are scalars
SLOT_SHAPES = {"A": 1, "Lambda": 1, "Q": 3, "V": 8}
HIGGS_SLOTS = ("phi1", "phi2")


@dataclass(frozen=True, eq=False)
class SmoothFieldSpec:
    """Gauge and Higgs fields as trigonometric polynomials.

    ``slots[name]`` is a list of polynomials: for gauge slots it has
    ``n * components`` entries ordered direction-major, for Higgs slots one.
    Gauge components are real (the real part is taken) and enter as
    ``A = i a``, ``Lambda = i l``, ``Q = i w^a sigma_a``, ``V = i v^a lambda_a``.
    """

    n: int
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, polys in self.slots.items():
            if name in SLOT_SHAPES:
                want = self.n * SLOT_SHAPES[name]
            elif name in HIGGS_SLOTS:
                want = 1
            else:
                raise ValueError(f"unknown field slot {name!r}")
            if len(polys) != want:
                raise ValueError(f"slot {name!r} needs {want} polynomials, got {len(polys)}")

    def _real(self, name, lattice) -> np.ndarray:
        c = SLOT_SHAPES[name]
        polys = self.slots.get(name)
        if polys is None:
            return np.zeros((self.n, c, lattice.volume_sites))
        vals = np.array([p.evaluate(lattice).real for p in polys])
        return vals.reshape(self.n, c, -1)

    def gauge(self, name: str, lattice) -> np.ndarray:
        """Anti-hermitian values, shape ``(n, V)`` for scalars or ``(n, V, k, k)``."""
        r = self._real(name, lattice)
        if name in ("A", "Lambda"):
            return 1j * r[:, 0, :]
        basis = PAULI if name == "Q" else GELL_MANN
        return 1j * np.einsum("mav,aij->mvij", r, basis)

    def higgs(self, name: str, lattice) -> np.ndarray:
        polys = self.slots.get(name)
        if polys is None:
            return np.zeros(lattice.volume_sites, dtype=complex)
        return polys[0].evaluate(lattice)

    def max_mode(self) -> int:
        return max((p.max_mode for ps in self.slots.values() for p in ps), default=0)

    def to_json(self) -> dict:
        return {name: [p.to_json() for p in polys] for name, polys in sorted(self.slots.items())}

    @classmethod
    def from_json(cls, data: dict, n: int) -> "SmoothFieldSpec":
        return cls(n, {name: [TrigPolynomial.from_json(t, n) for t in polys] for name, polys in data.items()})


def random_field_spec(rng: np.random.Generator, n: int, slots, max_mode: int = 1, n_terms: int = 3,
                      amplitude: float = 0.5) -> SmoothFieldSpec:
    out = {}
    for name in slots:
        count = n * SLOT_SHAPES[name] if name in SLOT_SHAPES else 1
        out[name] = [random_trig_polynomial(rng, n, max_mode, n_terms, amplitude) for _ in range(count)]
    return SmoothFieldSpec(n, out)


@dataclass(frozen=True, eq=False)
class SmoothAlgebraField:
    """Algebra-valued field with every block entry a trigonometric polynomial."""

    spec: object
    polys: tuple

    def _assemble(self, lattice, fn) -> AlgebraElement:
        blocks = []
        for kind, ps in zip(self.spec.blocks, self.polys):
            vals = [fn(p) for p in ps]
            if kind.kind == "H":
                blocks.append(quaternion(vals[0], vals[1]))
            else:
                k = kind.size
                blocks.append(np.stack(vals, axis=-1).reshape(-1, k, k))
        return AlgebraElement(self.spec, blocks, check=False)

    def value(self, lattice) -> AlgebraElement:
        return self._assemble(lattice, lambda p: p.evaluate(lattice))

    def derivative(self, lattice, mu: int) -> AlgebraElement:
        return self._assemble(lattice, lambda p: p.derivative(lattice, mu))


def random_smooth_element(spec, rng: np.random.Generator, n: int, max_mode: int = 1, n_terms: int = 2,
                          amplitude: float = 0.5, constant: complex = 0.0) -> SmoothAlgebraField:
    """Random smooth algebra field; ``constant`` is added on the diagonal of every block."""
    polys = []
    for kind in spec.blocks:
        count = 2 if kind.kind == "H" else kind.size * kind.size
        ps = []
        for i in range(count):
            p = random_trig_polynomial(rng, n, max_mode, n_terms, amplitude)
            diag = (kind.kind == "H" and i == 0) or (kind.kind != "H" and i % (kind.size + 1) == 0)
            if diag and constant:
                p = TrigPolynomial(np.vstack([p.modes, np.zeros((1, n), dtype=int)]),
                                   np.append(p.coeffs, constant))
            ps.append(p)
        polys.append(tuple(ps))
    return SmoothAlgebraField(spec, tuple(polys))


# ------------------------------------------------------ field expressions
# Small expression tree over smooth algebra fields; every node returns
# values and exact derivatives at the lattice sites (product rule inline).


class _FieldExpr:
    def value(self, lattice) -> AlgebraElement:
        raise NotImplementedError

    def derivative(self, lattice, mu: int) -> AlgebraElement:
        raise NotImplementedError

    def star(self) -> "_FieldExpr":
        return StarField(self)

    def __mul__(self, other) -> "_FieldExpr":
        if isinstance(other, _FieldExpr):
            return ProductField(self, other)
        return ScaledField(self, float(other))

    __rmul__ = __mul__

    def __add__(self, other) -> "_FieldExpr":
        return SumField(self, other, 1.0)

    def __sub__(self, other) -> "_FieldExpr":
        return SumField(self, other, -1.0)


class SmoothField(_FieldExpr):
    """Expression leaf wrapping a :class:`SmoothAlgebraField`."""

    def __init__(self, field: SmoothAlgebraField):
        self.field = field

    def value(self, lattice):
        return self.field.value(lattice)

    def derivative(self, lattice, mu):
        return self.field.derivative(lattice, mu)


class ConstantField(_FieldExpr):
    def __init__(self, element: AlgebraElement):
        self.element = element

    def value(self, lattice):
        return self.element

    def derivative(self, lattice, mu):
        return AlgebraElement.zero(self.element.spec, self.element.site_shape)


class StarField(_FieldExpr):
    def __init__(self, inner: _FieldExpr):
        self.inner = inner

    def value(self, lattice):
        return self.inner.value(lattice).star()

    def derivative(self, lattice, mu):
        return self.inner.derivative(lattice, mu).star()


class ScaledField(_FieldExpr):
    # real scalars only, so quaternion blocks stay quaternions
    def __init__(self, inner: _FieldExpr, c: float):
        self.inner, self.c = inner, c

    def value(self, lattice):
        return self.c * self.inner.value(lattice)

    def derivative(self, lattice, mu):
        return self.c * self.inner.derivative(lattice, mu)


class ProductField(_FieldExpr):
    def __init__(self, f: _FieldExpr, g: _FieldExpr):
        self.f, self.g = f, g

    def value(self, lattice):
        return self.f.value(lattice) * self.g.value(lattice)

    def derivative(self, lattice, mu):
        return (self.f.derivative(lattice, mu) * self.g.value(lattice)
                + self.f.value(lattice) * self.g.derivative(lattice, mu))


class SumField(_FieldExpr):
    def __init__(self, f: _FieldExpr, g: _FieldExpr, sign: float):
        self.f, self.g, self.sign = f, g, sign

    def value(self, lattice):
        return self.f.value(lattice) + self.sign * self.g.value(lattice)

    def derivative(self, lattice, mu):
        return self.f.derivative(lattice, mu) + self.sign * self.g.derivative(lattice, mu)


class SmoothPerturbation:
    """``sum_j a_j (x) b_j^op`` with smooth field expressions as entries."""

    def __init__(self, spec, terms):
        self.spec = spec
        self.terms = tuple(terms)
        if not self.terms:
            raise ValueError("perturbation needs at least one term")

    def bar(self) -> "SmoothPerturbation":
        return SmoothPerturbation(self.spec, [(b.star(), a.star()) for a, b in self.terms])

    def symmetrized(self) -> "SmoothPerturbation":
        """``(A + bar A) / 2``: real, and normalized whenever ``A`` is."""
        both = self.terms + self.bar().terms
        return SmoothPerturbation(self.spec, [(0.5 * a, b) for a, b in both])

    def at(self, lattice):
        """Site values as a :class:`~kreinacm.perturbation.PerturbationElement`."""
        from .perturbation import PerturbationElement

        return PerturbationElement([(a.value(lattice), b.value(lattice)) for a, b in self.terms])


def unit_perturbation(spec, n: int) -> SmoothPerturbation:
    one = ConstantField(AlgebraElement.unit(spec))
    return SmoothPerturbation(spec, [(one, one)])


def random_smooth_perturbation(spec, rng: np.random.Generator, n: int, n_terms: int = 2, max_mode: int = 1,
                               amplitude: float = 0.4, real: bool = True) -> SmoothPerturbation:
    """Random normalized smooth perturbation, completed by ``1 (x) (1 - sum a_j b_j)``."""
    terms = [(SmoothField(random_smooth_element(spec, rng, n, max_mode, amplitude=amplitude)),
              SmoothField(random_smooth_element(spec, rng, n, max_mode, amplitude=amplitude)))
             for _ in range(n_terms)]
    one = ConstantField(AlgebraElement.unit(spec))
    rest = one
    for a, b in terms:
        rest = rest - a * b
    A = SmoothPerturbation(spec, terms + [(one, rest)])
    return A.symmetrized() if real else A
