"""Two atoms with four levels each: m0, m1, r (Rydberg) and an auxiliary
decayed level d that couples to nothing.

The product index of (a, b) is ``4 * a + b`` with atom 0 leading.  The drive
couples m1 <-> r on both atoms with a common phase; the interaction only
shifts |rr>.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from rydkit.errors import IntegrationError

M0, M1, R, D = 0, 1, 2, 3
LEVELS = ("m0", "m1", "r", "d")
DIM = 16
# |m0 m0>, |m0 m1>, |m1 m0>, |m1 m1>
COMPUTATIONAL = np.array([0, 1, 4, 5])
JUMP_DESTINATIONS = ("d", "m0", "m1")


def pair_index(a: int, b: int) -> int:
    return 4 * a + b


@dataclass(frozen=True)
class FourLevelBasis:
    dim: int = DIM
    levels: tuple = LEVELS

    def label(self, index: int) -> str:
        return f"{LEVELS[index // 4]},{LEVELS[index % 4]}"

    def index(self, a: str, b: str) -> int:
        return pair_index(LEVELS.index(a), LEVELS.index(b))

    @property
    def computational(self) -> np.ndarray:
        return COMPUTATIONAL.copy()


@dataclass
class DensityMatrix4L:
    rho: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.shape != (DIM, DIM):
            raise ValueError("density matrix must be 16x16")

    @classmethod
    def pure(cls, psi, time: float = 0.0) -> "DensityMatrix4L":
        psi = np.asarray(psi, dtype=complex)
        return cls(np.outer(psi, psi.conj()), time)

    @classmethod
    def basis_state(cls, a: int, b: int) -> "DensityMatrix4L":
        psi = np.zeros(DIM, dtype=complex)
        psi[pair_index(a, b)] = 1
        return cls.pure(psi)

    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def population(self, a: int, b: int) -> float:
        i = pair_index(a, b)
        return float(self.rho[i, i].real)

    def check(self, tol: float = 1e-10, psd_tol: float = 1e-8) -> None:
        herm = np.max(np.abs(self.rho - self.rho.conj().T))
        if herm > tol:
            raise IntegrationError(f"density matrix not Hermitian ({herm:.2e})")
        if abs(self.trace() - 1) > tol:
            raise IntegrationError(f"trace drifted to {self.trace():.12f}")
        lo = np.linalg.eigvalsh(self.rho).min()
        if lo < -psd_tol:
            raise IntegrationError(f"negative eigenvalue {lo:.2e}")


def _single(op: np.ndarray, atom: int) -> np.ndarray:
    eye = np.eye(4)
    return np.kron(op, eye) if atom == 0 else np.kron(eye, op)


def ket_bra(i: int, j: int) -> np.ndarray:
    out = np.zeros((4, 4))
    out[i, j] = 1
    return out


def hamiltonian(omega, phase, delta, interaction: float) -> np.ndarray:
    """Drive Hamiltonian, batched over leading axes.

    ``omega`` and ``delta`` have a trailing axis of length 2 (one value per
    atom); ``phase`` is common to both atoms.  ``interaction = inf`` removes
    |rr> from the dynamics (perfect blockade).
    """
    omega = np.asarray(omega, dtype=float)
    delta = np.asarray(delta, dtype=float)
    phase = np.asarray(phase, dtype=float)
    shape = np.broadcast_shapes(omega.shape[:-1], delta.shape[:-1], phase.shape)
    h = np.zeros(shape + (DIM, DIM), dtype=complex)
    up = np.exp(1j * phase)
    for atom in range(2):
        raise_ = _single(ket_bra(R, M1), atom)
        num = _single(ket_bra(R, R), atom)
        w = 0.5 * omega[..., atom]
        h += (w * up)[..., None, None] * raise_
        h += (w * up.conj())[..., None, None] * raise_.T
        h -= delta[..., atom][..., None, None] * num
    rr = pair_index(R, R)
    if np.isinf(interaction):
        h[..., rr, :] = 0
        h[..., :, rr] = 0
    else:
        h[..., rr, rr] += interaction
    return h


@dataclass(frozen=True)
class JumpSet:
    """The six Lindblad channels r -> {d, m0, m1} on each atom.

    ``rates`` maps destination to rate (1/us); the d channel may be split
    into tagged parts (e.g. the g-manifold share) so that a tag can be
    dropped from the refilling term while still depleting |r>.
    """

    rates: dict = field(default_factory=dict)
    tags: dict = field(default_factory=dict)

    @classmethod
    def from_decay(cls, decay, split_g: bool = True) -> "JumpSet":
        b = decay.branches()
        g = decay.gamma
        to_d = b["detected"] + b["other"] + (0.0 if split_g else b["g"])
        tags = {"g": g * b["g"]} if split_g else {}
        return cls({"d": g * to_d, "m0": g * b["m0"], "m1": g * b["m1"]}, tags)

    def total(self) -> float:
        return sum(self.rates.values()) + sum(self.tags.values())

    def refill_rate(self, dest: str, drop: frozenset = frozenset()) -> float:
        rate = self.rates.get(dest, 0.0)
        if dest == "d":
            rate += sum(v for k, v in self.tags.items() if k not in drop)
        return rate

    def operators(self) -> list:
        """The six jump operators as dense 16x16 matrices (with sqrt(rate))."""
        ops = []
        for atom in range(2):
            for dest in JUMP_DESTINATIONS:
                lev = LEVELS.index(dest)
                ops.append(np.sqrt(self.refill_rate(dest)) * _single(ket_bra(lev, R), atom))
        return ops


def _jump_tables():
    # index maps implementing |dest><r| (x) I and I (x) |dest><r| on a matrix
    tables = []
    for atom in range(2):
        for dest in JUMP_DESTINATIONS:
            lev = LEVELS.index(dest)
            src, dst = [], []
            for other in range(4):
                if atom == 0:
                    src.append(pair_index(R, other))
                    dst.append(pair_index(lev, other))
                else:
                    src.append(pair_index(other, R))
                    dst.append(pair_index(other, lev))
            tables.append((dest, np.array(src), np.array(dst)))
    return tables


_TABLES = _jump_tables()
_R_OCC = np.array([(i // 4 == R) + (i % 4 == R) for i in range(DIM)], dtype=float)


def apply_jumps(rho: np.ndarray, jumps: JumpSet, drop: frozenset = frozenset()) -> np.ndarray:
    """sum_k L_k rho L_k^dagger, batched over leading axes."""
    out = np.zeros_like(rho)
    for dest, src, dst in _TABLES:
        rate = jumps.refill_rate(dest, drop)
        if rate == 0:
            continue
        out[..., dst[:, None], dst[None, :]] += rate * rho[..., src[:, None], src[None, :]]
    return out


def effective_hamiltonian(h: np.ndarray, jumps: JumpSet) -> np.ndarray:
    # sum_k L_k^dag L_k is diagonal: total rate times the number of atoms in r
    return h - 0.5j * jumps.total() * np.diag(_R_OCC)


def _sandwich(u, rho):
    return u @ rho @ np.conj(np.swapaxes(u, -1, -2))


def lindblad_slice(rho, h, jumps: JumpSet, dt: float, drop: frozenset = frozenset()):
    """One slice of length dt with piecewise-constant H.

    Integrating-factor (Lawson) RK4: the no-jump part exp(-i H_eff dt) is
    applied exactly, the jump feed is integrated to fourth order.  ``rho``
    may carry extra batch axes between the batch axes of ``h`` and the
    matrix axes (``h`` of shape (B, 16, 16) applies to ``rho`` of shape
    (B, K, 16, 16)).
    """
    heff = effective_hamiltonian(h, jumps)
    u_half = expm(-0.5j * dt * heff)
    u_full = u_half @ u_half
    extra = rho.ndim - h.ndim
    uh = u_half.reshape(u_half.shape[:-2] + (1,) * extra + (DIM, DIM))
    uf = u_full.reshape(uh.shape)
    if jumps.total() == 0:
        return _sandwich(uf, rho)

    def feed(x):
        return apply_jumps(x, jumps, drop)

    k1 = feed(rho)
    k2 = feed(_sandwich(uh, rho + 0.5 * dt * k1))
    rho_h = _sandwich(uh, rho)
    k3 = feed(rho_h + 0.5 * dt * k2)
    k4 = feed(_sandwich(uf, rho) + dt * _sandwich(uh, k3))
    return _sandwich(uf, rho + dt / 6.0 * k1) + dt / 6.0 * (_sandwich(uh, 2.0 * (k2 + k3)) + k4)


def master_equation_step(
    rho,
    h,
    jumps: JumpSet,
    dt: float,
    tol: float = 1e-12,
    psd_tol: float = 1e-8,
    max_halvings: int = 12,
):
    """Advance a single density matrix by dt under constant H.

    The step is halved until the trace change stays within ``tol`` and
    positivity within ``psd_tol``.  The default ``tol`` leaves room for a
    hundred steps inside a 1e-10 overall trace budget.  Returns a DensityMatrix4L when given
    one, else an array.
    """
    wrap = isinstance(rho, DensityMatrix4L)
    arr = rho.rho if wrap else np.asarray(rho, dtype=complex)
    t0 = rho.time if wrap else 0.0
    h = np.asarray(h, dtype=complex)
    tr0 = np.trace(arr).real
    for level in range(max_halvings + 1):
        n = 2**level
        out = arr
        for _ in range(n):
            out = lindblad_slice(out, h, jumps, dt / n)
        out = 0.5 * (out + out.conj().T)
        trace_err = abs(np.trace(out).real - tr0)
        lo = np.linalg.eigvalsh(out).min()
        if trace_err <= tol and lo >= -psd_tol:
            return DensityMatrix4L(out, t0 + dt) if wrap else out
    raise IntegrationError(
        f"step {dt} did not meet tolerances after {max_halvings} halvings "
        f"(trace error {trace_err:.2e}, min eigenvalue {lo:.2e})"
    )
