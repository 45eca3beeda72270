"""Small exact qubit arithmetic: density matrices, dichotomic observables,
tensor products and expectation values (at most 4 qubits)."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

MAX_QUBITS = 4
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = -1e-9
DICHOTOMIC_TOL = 1e-9

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = np.stack([PAULI_I, PAULI_X, PAULI_Y, PAULI_Z])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def kron(a: np.ndarray, b: np.ndarray, *more: np.ndarray) -> np.ndarray:
    """Kronecker product; extra operands are folded left to right."""
    return reduce(np.kron, (b, *more), np.asarray(a, dtype=complex))


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return m.shape[0] == m.shape[1] and bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol)


def _num_qubits(dim: int) -> int:
    n = dim.bit_length() - 1
    if dim < 1 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    num_qubits: int = field(init=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        n = _num_qubits(m.shape[0])
        if n > MAX_QUBITS:
            raise ValueError(f"at most {MAX_QUBITS} qubits supported, got {n}")
        if not is_hermitian(m):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > TRACE_TOL:
            raise ValueError(f"trace {np.trace(m).real!r} differs from 1")
        if np.linalg.eigvalsh(m).min() < POSITIVITY_TOL:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "num_qubits", n)

    @classmethod
    def from_vector(cls, psi: Sequence[complex]) -> DensityMatrix:
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        m = np.outer(psi, psi.conj())
        # exact Hermitian symmetrisation; outer() is Hermitian only up to rounding
        return cls((m + m.conj().T) / 2)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def tensor(self, other: DensityMatrix) -> DensityMatrix:
        return DensityMatrix(kron(self.matrix, other.matrix))


@dataclass(frozen=True, eq=False)
class Observable:
    """Dichotomic (+1/-1 valued) Hermitian observable acting on `arity` qubits."""

    matrix: np.ndarray
    arity: int = field(init=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        if not is_hermitian(m):
            raise ValueError("observable is not Hermitian")
        if np.max(np.abs(m @ m - np.eye(m.shape[0]))) > DICHOTOMIC_TOL:
            raise ValueError("observable does not square to identity")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "arity", _num_qubits(m.shape[0]))

    def projector(self, outcome: int) -> np.ndarray:
        """Projector onto the eigenspace of outcome 0 (+1) or 1 (-1)."""
        sign = 1 - 2 * outcome
        return (np.eye(self.matrix.shape[0]) + sign * self.matrix) / 2


def identity(arity: int = 1) -> Observable:
    return Observable(np.eye(2**arity))


def expectation(rho: DensityMatrix, per_site: Sequence[Observable]) -> float:
    """Tr(rho * O_1 x ... x O_m) for observables laid out over consecutive qubits."""
    if sum(o.arity for o in per_site) != rho.num_qubits:
        raise ValueError(
            f"observables cover {sum(o.arity for o in per_site)} qubits, state has {rho.num_qubits}"
        )
    op = kron(*(o.matrix for o in per_site)) if len(per_site) > 1 else per_site[0].matrix
    val = np.trace(rho.matrix @ op)
    if abs(val.imag) >= 1e-9:
        raise ArithmeticError(f"expectation has imaginary part {val.imag}")
    return float(val.real)


def bloch_vector(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def observable_from_vector(r: Sequence[float]) -> Observable:
    r = np.asarray(r, dtype=float)
    r = r / np.linalg.norm(r)
    return Observable(r[0] * PAULI_X + r[1] * PAULI_Y + r[2] * PAULI_Z)


def bloch_observable(theta: float, phi: float) -> Observable:
    return observable_from_vector(bloch_vector(theta, phi))


def bloch_angles(r: Sequence[float]) -> tuple[float, float]:
    r = np.asarray(r, dtype=float)
    r = r / np.linalg.norm(r)
    return float(np.arccos(np.clip(r[2], -1.0, 1.0))), float(np.arctan2(r[1], r[0]))


def _basis(bits: str) -> np.ndarray:
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1
    return v


def named_state(name: str, n: int | None = None, bits: str | None = None) -> DensityMatrix:
    """Pure fixture states: singlet, ghz(n), w(n), product(bits), plus(n).

    ``name`` may also carry its argument inline, e.g. ``"ghz3"`` or ``"product:01"``.
    """
    key = name.lower()
    if key.startswith("product:"):
        key, bits = "product", key.split(":", 1)[1]
    elif key[:3] in ("ghz", "plu") or key[:1] == "w":
        stem = key.rstrip("0123456789")
        if stem != key:
            key, n = stem, int(name[len(stem):])

    if key == "singlet":
        return DensityMatrix.from_vector((_basis("01") - _basis("10")) / np.sqrt(2))
    if key in ("phi+", "bell"):
        return DensityMatrix.from_vector((_basis("00") + _basis("11")) / np.sqrt(2))
    if key == "product":
        if not bits or set(bits) - {"0", "1"} or len(bits) > MAX_QUBITS:
            raise ValueError(f"bad product bitstring {bits!r}")
        return DensityMatrix.from_vector(_basis(bits))

    if key not in ("ghz", "w", "plus"):
        raise ValueError(f"unknown state {name!r}")
    if n is None or not 1 <= n <= MAX_QUBITS or (key != "plus" and n < 2):
        raise ValueError(f"qubit count {n!r} out of range for {key}")
    if key == "ghz":
        return DensityMatrix.from_vector(_basis("0" * n) + _basis("1" * n))
    if key == "w":
        return DensityMatrix.from_vector(sum(_basis("0" * i + "1" + "0" * (n - i - 1)) for i in range(n)))
    return DensityMatrix.from_vector(np.ones(2**n))


def random_pure_state(num_qubits: int, seed: int) -> DensityMatrix:
    """Haar-random pure state from i.i.d. complex Gaussian amplitudes."""
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise ValueError(f"num_qubits must be in 1..{MAX_QUBITS}")
    rng = np.random.default_rng(seed)
    dim = 2**num_qubits
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return DensityMatrix.from_vector(psi)


def mixture(states: Sequence[DensityMatrix], weights: Sequence[float]) -> DensityMatrix:
    return DensityMatrix(sum(w * s.matrix for s, w in zip(states, weights)))


def correlation_tensor(rho: DensityMatrix) -> np.ndarray:
    """T[m1..mN] = Tr(rho sigma_m1 x ... x sigma_mN) with sigma_0 = identity; shape (4,)*N."""
    n = rho.num_qubits
    rows, cols, mus = list(range(n)), list(range(n, 2 * n)), list(range(2 * n, 3 * n))
    operands: list = [rho.matrix.reshape((2,) * (2 * n)), rows + cols]
    for q in range(n):
        operands += [PAULIS, [mus[q], cols[q], rows[q]]]
    return np.real(np.einsum(*operands, mus, optimize=True))
