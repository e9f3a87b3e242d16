"""State vectors, piecewise-constant propagation and expectation values."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm

from rydkit.core.basis import CONSTRAINED, FULL, Basis, enumerate_basis, parse_bits
from rydkit.core.krylov import expmv
from rydkit.core.operators import Operator
from rydkit.errors import DegenerateStateError

DENSE_MAX_DIM = 64
DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StateVector:
    basis: Basis
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError("amplitude vector does not match basis dimension")

    @classmethod
    def from_config(cls, basis: Basis, bits: int | str = 0) -> "StateVector":
        amps = np.zeros(basis.dim, dtype=complex)
        amps[basis.index(bits)] = 1.0
        return cls(basis, amps)

    @classmethod
    def from_amplitudes(cls, basis: Basis, mapping: dict) -> "StateVector":
        amps = np.zeros(basis.dim, dtype=complex)
        for bits, a in mapping.items():
            amps[basis.index(bits)] += a
        return cls(basis, amps)

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "StateVector":
        n2 = self.norm2()
        if n2 <= 0:
            raise DegenerateStateError("cannot normalize a zero-norm state")
        return replace(self, amplitudes=self.amplitudes / np.sqrt(n2))

    def probabilities(self) -> np.ndarray:
        """Configuration populations of the normalized state."""
        p = np.abs(self.amplitudes) ** 2
        total = p.sum()
        if total <= 0:
            raise DegenerateStateError("zero-norm state has no populations")
        return p / total

    def amplitude(self, bits: int | str) -> complex:
        return complex(self.amplitudes[self.basis.index(bits)])

    def density_matrix(self) -> np.ndarray:
        psi = self.normalized().amplitudes
        return np.outer(psi, psi.conj())

    def dumps(self) -> str:
        mode = FULL if self.basis.mode == FULL else CONSTRAINED
        lines = [f"N={self.basis.n_sites} mode={mode} dim={self.basis.dim}"]
        for label, a in zip(self.basis.labels(), self.amplitudes):
            lines.append(f"{label} {a.real:.17g} {a.imag:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "StateVector":
        rows = [ln for ln in text.splitlines() if ln.strip()]
        header = dict(tok.split("=", 1) for tok in rows[0].split())
        n = int(header["N"])
        mode = header["mode"]
        dim = int(header["dim"])
        bits, amps = [], []
        for ln in rows[1:]:
            b, re_, im_ = ln.split()
            bits.append(parse_bits(b))
            amps.append(complex(float(re_), float(im_)))
        if len(bits) != dim:
            raise ValueError(f"header announces dim={dim}, found {len(bits)} rows")
        order = np.argsort(bits)
        configs = np.asarray(bits, dtype=np.int64)[order]
        if mode == FULL:
            basis = enumerate_basis(n, FULL, max_sites=max(n, 1))
        else:
            basis = Basis(n, CONSTRAINED, configs)
        return cls(basis, np.asarray(amps, dtype=complex)[order])


def _exp_dense(op: Operator, duration: float) -> np.ndarray:
    h = op.to_dense()
    if op.is_hermitian:
        evals, evecs = np.linalg.eigh(h)
        return (evecs * np.exp(-1j * duration * evals)) @ evecs.conj().T
    return expm(-1j * duration * h)


def propagate_vector(
    op: Operator,
    psi: np.ndarray,
    duration: float,
    tol: float = DEFAULT_TOL,
    dense_max_dim: int = DENSE_MAX_DIM,
) -> np.ndarray:
    """``exp(-i H duration) psi`` for a time-independent segment."""
    if duration == 0.0:
        return np.array(psi, dtype=complex, copy=True)
    if op.dim <= dense_max_dim:
        return _exp_dense(op, duration) @ psi
    if op.is_diagonal:
        d = op.effective_diagonal()
        phase = np.exp(-1j * duration * d)
        return phase[:, None] * psi if psi.ndim == 2 else phase * psi
    out, _ = expmv(lambda x: -1j * op.matvec(x), psi, duration, tol=tol)
    return out


def propagate(
    state: StateVector,
    segments: Iterable[tuple[Operator, float]],
    tol: float = DEFAULT_TOL,
    dense_max_dim: int = DENSE_MAX_DIM,
) -> StateVector:
    """Apply ``prod_j exp(-i H_j dt_j)`` to ``state`` (first segment acts first)."""
    psi = state.amplitudes
    t = state.time
    for op, duration in segments:
        if op.basis is not state.basis and op.basis.dim != state.basis.dim:
            raise ValueError("segment operator lives on a different basis")
        if duration < 0:
            raise ValueError("segment durations must be non-negative")
        psi = propagate_vector(op, psi, duration, tol, dense_max_dim)
        t += duration
    return StateVector(state.basis, psi, t)


def expectation(state: StateVector, observable: Operator, imag_tol: float = 1e-10) -> float:
    """``<psi|O|psi> / <psi|psi>`` for a Hermitian observable."""
    n2 = state.norm2()
    if n2 <= 0:
        raise DegenerateStateError("expectation value of a zero-norm state")
    val = np.vdot(state.amplitudes, observable.matvec(state.amplitudes)) / n2
    if abs(val.imag) > imag_tol * max(1.0, abs(val.real)):
        raise ValueError(f"observable is not Hermitian: imaginary part {val.imag:.3e}")
    return float(val.real)


def haar_random_qubit_state(n_qubits: int, seed) -> StateVector:
    """Haar-random pure state on ``n_qubits`` qubits (1 or 2)."""
    if n_qubits not in (1, 2):
        raise ValueError("n_qubits must be 1 or 2")
    rng = np.random.default_rng(seed)
    dim = 2**n_qubits
    z = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    z /= np.linalg.norm(z)
    return StateVector(enumerate_basis(n_qubits, FULL), z)


def haar_random_vectors(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` Haar-random unit vectors of length ``dim`` as rows."""
    z = rng.normal(size=(count, dim)) + 1j * rng.normal(size=(count, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def segments_from(ops: Sequence[Operator], durations: Sequence[float]) -> list[tuple[Operator, float]]:
    if len(ops) != len(durations):
        raise ValueError("one duration per operator required")
    return list(zip(ops, durations))
