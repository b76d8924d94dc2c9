"""Gamma matrices, chirality, fundamental symmetry and charge conjugation for
signature (t, s) with ``t`` time-like and ``s`` space-like directions.

Conventions: ``gamma(e_i) gamma(e_j) + gamma(e_j) gamma(e_i) = -2 g(e_i, e_j)``
with ``g = diag(-1,...,-1, +1,...,+1)``, so time-like generators square to
``+1`` and space-like ones to ``-1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.linalg

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class SignatureError(ValueError):
    pass


def _kron_all(mats):
    return reduce(np.kron, mats)


def _euclidean_generators(n: int) -> list[np.ndarray]:
    """Hermitian generators squaring to +1 (Jordan-Wigner ladder of Pauli blocks)."""
    m = n // 2
    out = []
    for k in range(m):
        head = [_Z] * k
        tail = [_I2] * (m - k - 1)
        out.append(_kron_all(head + [_X] + tail))
        out.append(_kron_all(head + [_Y] + tail))
    return out


@dataclass(frozen=True, eq=False)
class CliffordModule:
    t: int
    s: int
    gamma: tuple
    Gamma_M: np.ndarray
    J_M: np.ndarray

    @property
    def n(self) -> int:
        return self.t + self.s

    @property
    def dim(self) -> int:
        return 2 ** (self.n // 2)

    def kappa(self, j: int) -> int:
        """Metric sign of direction ``j`` (0-based): -1 time-like, +1 space-like."""
        return -1 if j < self.t else 1

    def coordinate_gamma(self, j: int) -> np.ndarray:
        """``gamma^j = gamma(dx^j) = kappa(j) gamma(e_j)`` in an orthonormal frame."""
        return self.kappa(j) * self.gamma[j]

    @property
    def parity(self) -> np.ndarray:
        """Per-basis parity tags; the chirality is diagonal in this basis."""
        d = np.real(np.diag(self.Gamma_M))
        return (d < 0).astype(np.int8)

    def reflect(self, j: int) -> np.ndarray:
        """``gamma(r e_j)`` where ``r`` flips the time-like directions."""
        return -self.gamma[j] if j < self.t else self.gamma[j]


def build_clifford(t: int, s: int) -> CliffordModule:
    """Build the complex Clifford module of signature (t, s), ``t + s`` even."""
    if t < 0 or s < 0:
        raise SignatureError("signature entries must be non-negative")
    n = t + s
    if n < 2 or n % 2:
        raise SignatureError(f"even total dimension required, got t+s={n}")
    base = _euclidean_generators(n)
    gamma = tuple(g if j < t else 1j * g for j, g in enumerate(base))
    dim = base[0].shape[0]
    eye = np.eye(dim, dtype=complex)

    vol = reduce(np.matmul, gamma, eye)
    Gamma_M = (1j ** ((s - t) // 2 % 4)) * vol
    if (s - t) % 2:
        raise SignatureError("unreachable: s - t is even when t + s is")
    J_M = (1j ** ((t * (t - 1) // 2) % 4)) * reduce(np.matmul, gamma[:t], eye)
    return CliffordModule(t, s, gamma, _clean(Gamma_M), _clean(J_M))


def _clean(m: np.ndarray) -> np.ndarray:
    m = m.copy()
    m.real[np.abs(m.real) < 1e-15] = 0.0
    m.imag[np.abs(m.imag) < 1e-15] = 0.0
    return m


def clifford_residuals(cm: CliffordModule) -> dict[str, float]:
    """Maximum deviation for every structural relation of the module."""
    n, dim = cm.n, cm.dim
    eye = np.eye(dim)
    g, G, J = cm.gamma, cm.Gamma_M, cm.J_M
    anti = 0.0
    for i in range(n):
        for j in range(n):
            target = -2.0 * (i == j) * cm.kappa(j) * eye
            anti = max(anti, np.abs(g[i] @ g[j] + g[j] @ g[i] - target).max())
    refl = max(np.abs(J @ g[j] @ J - (-1) ** cm.t * cm.reflect(j)).max() for j in range(n))
    return {
        "anticommutators": anti,
        "J_self_adjoint": np.abs(J - J.conj().T).max(),
        "J_involution": np.abs(J @ J - eye).max(),
        "J_reflection": refl,
        "Gamma_self_adjoint": np.abs(G - G.conj().T).max(),
        "Gamma_involution": np.abs(G @ G - eye).max(),
        "Gamma_anticommutes_gamma": max(np.abs(G @ x + x @ G).max() for x in g),
        "Gamma_J_relation": np.abs(G @ J - (-1) ** cm.t * J @ G).max(),
        "Gamma_diagonal": np.abs(G - np.diag(np.diag(G))).max(),
    }


@dataclass(frozen=True, eq=False)
class ChargeConjugation:
    """Antilinear operator ``psi -> C conj(psi)``."""

    C: np.ndarray

    def __call__(self, psi: np.ndarray, axis: int = -1) -> np.ndarray:
        psi = np.moveaxis(np.asarray(psi, dtype=complex), axis, -1)
        out = np.conj(psi) @ self.C.T
        return np.moveaxis(out, -1, axis)

    def square(self) -> np.ndarray:
        return self.C @ self.C.conj()


def build_charge_conjugation(cm: CliffordModule) -> ChargeConjugation:
    """Solve ``C conj(gamma_j) = gamma_j C`` with ``(C conj)^2 = -1``, C unitary.

    Only the 4-dimensional Lorentzian signature (1, 3) is supported.
    """
    if (cm.t, cm.s) != (1, 3):
        raise SignatureError(f"charge conjugation is only provided for (1, 3), got {(cm.t, cm.s)}")
    d = cm.dim
    eye = np.eye(d)
    # row-major vec(A C B) = (A kron B^T) vec(C)
    blocks = [np.kron(eye, g.conj().T) - np.kron(g, eye) for g in cm.gamma]
    null = scipy.linalg.null_space(np.vstack(blocks))
    if null.shape[1] != 1:
        raise SignatureError(f"expected a one-dimensional solution space, got {null.shape[1]}")
    C = null[:, 0].reshape(d, d)
    C = C / np.sqrt(np.abs(np.trace(C @ C.conj().T)) / d)
    k = np.flatnonzero(np.abs(C.ravel()) > 1e-8)[0]
    C = C * np.exp(-1j * np.angle(C.ravel()[k]))
    C = _clean(C)
    sq = C @ C.conj()
    if np.abs(sq + eye).max() > 1e-10:
        raise SignatureError("charge conjugation does not square to -1 in this signature")
    return ChargeConjugation(C)


def charge_conjugation_residuals(cm: CliffordModule, cc: ChargeConjugation) -> dict[str, float]:
    C = cc.C
    eye = np.eye(cm.dim)
    return {
        "commutes_gamma": max(np.abs(C @ g.conj() - g @ C).max() for g in cm.gamma),
        "anticommutes_Gamma": np.abs(C @ cm.Gamma_M.conj() + cm.Gamma_M @ C).max(),
        "commutes_J": np.abs(C @ cm.J_M.conj() - cm.J_M @ C).max(),
        "squares_to_minus_one": np.abs(C @ C.conj() + eye).max(),
        "unitary": np.abs(C @ C.conj().T - eye).max(),
    }
