"""Photon polarization states, basis measurement and the uncertainty checker."""

from __future__ import annotations

import enum

import numpy as np

from .rng import RandomSource

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-12


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class Basis(enum.IntEnum):
    RECTILINEAR = 0
    DIAGONAL = 1
    CIRCULAR = 2

    @property
    def symbol(self) -> str:
        return "RDC"[self]

    @classmethod
    def from_symbol(cls, symbol: str) -> "Basis":
        try:
            return cls("RDC".index(symbol))
        except ValueError:
            raise ValidationError(f"unknown basis symbol {symbol!r}") from None


class Polarization(enum.IntEnum):
    DEG0 = 0
    DEG45 = 1
    DEG90 = 2
    DEG135 = 3
    SPIN_L = 4
    SPIN_R = 5

    @property
    def basis(self) -> Basis:
        return _BASIS_OF[self]


# Photon polarization table: (basis, bit) -> state.
_ENCODE = {
    (Basis.RECTILINEAR, 0): Polarization.DEG0,
    (Basis.RECTILINEAR, 1): Polarization.DEG90,
    (Basis.DIAGONAL, 0): Polarization.DEG45,
    (Basis.DIAGONAL, 1): Polarization.DEG135,
    (Basis.CIRCULAR, 0): Polarization.SPIN_L,
    (Basis.CIRCULAR, 1): Polarization.SPIN_R,
}
_DECODE = {state: bit for (_, bit), state in _ENCODE.items()}
_BASIS_OF = {state: basis for (basis, _), state in _ENCODE.items()}

TWO_BASES = (Basis.RECTILINEAR, Basis.DIAGONAL)
THREE_BASES = (Basis.RECTILINEAR, Basis.DIAGONAL, Basis.CIRCULAR)


def encode(bit: int, basis: Basis) -> Polarization:
    if bit not in (0, 1):
        raise ValidationError(f"bit must be 0 or 1, got {bit!r}")
    return _ENCODE[basis, bit]


def decode(polarization: Polarization) -> int:
    return _DECODE[polarization]


def measure(photon: Polarization, basis: Basis, rng: RandomSource) -> tuple[int, Polarization]:
    """Measure ``photon`` in ``basis``; returns ``(outcome, collapsed_state)``.

    A matching basis reads the encoded bit without disturbance and consumes no
    randomness. Any other basis is conjugate: the outcome is a fair coin drawn
    from ``rng`` and the photon collapses into the measurement basis.
    """
    if _BASIS_OF[photon] == basis:
        return _DECODE[photon], photon
    outcome = rng.bit()
    return outcome, _ENCODE[basis, outcome]


# --- uncertainty relation -------------------------------------------------

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class Observable:
    """A 2x2 Hermitian matrix."""

    def __init__(self, matrix) -> None:
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValidationError(f"observable must be 2x2, got shape {m.shape}")
        if not np.allclose(m, m.conj().T, rtol=0.0, atol=HERMITIAN_TOL):
            raise ValidationError("observable is not Hermitian")
        self.matrix = m

    def __repr__(self) -> str:
        return f"Observable({self.matrix.tolist()!r})"


class PureState:
    """A normalized 2-component state vector."""

    def __init__(self, amplitudes) -> None:
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if v.shape != (2,):
            raise ValidationError(f"state must have 2 amplitudes, got {v.shape}")
        if abs(np.vdot(v, v).real - 1.0) > NORM_TOL:
            raise ValidationError("state is not normalized")
        self.amplitudes = v

    def __repr__(self) -> str:
        return f"PureState({self.amplitudes.tolist()!r})"

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.vdot(self.amplitudes, op @ self.amplitudes))


def _as_observable(x) -> Observable:
    return x if isinstance(x, Observable) else Observable(x)


def _as_state(x) -> PureState:
    return x if isinstance(x, PureState) else PureState(x)


def uncertainty_product(a, b, psi) -> tuple[float, float]:
    """Both sides of Var(A) Var(B) >= |<[A, B]>|^2 / 4 for state ``psi``.

    Returns ``(lhs, rhs)``. Variances are taken as ``<X^2> - <X>^2``.
    """
    a, b, psi = _as_observable(a), _as_observable(b), _as_state(psi)
    A, B = a.matrix, b.matrix

    def variance(m: np.ndarray) -> float:
        mean = psi.expect(m).real
        return max(psi.expect(m @ m).real - mean * mean, 0.0)

    lhs = variance(A) * variance(B)
    rhs = 0.25 * abs(psi.expect(A @ B - B @ A)) ** 2
    return lhs, rhs
