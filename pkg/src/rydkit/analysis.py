"""Observables and statistics for Rydberg-array experiments.

Shot data are integer arrays of shape (n_shots, N) holding 0, 1 or ``LOST``.
Outcome 1 means the site was found in |r> (bit 1 of a configuration).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import expm
from scipy.optimize import nnls

from rydkit.core.basis import FULL, Basis
from rydkit.core.state import StateVector
from rydkit.errors import (
    ConditioningError,
    DegenerateStateError,
    PartialBoundError,
    UndefinedDisplacementError,
)
from rydkit.rydberg import Geometry

LOST = -1


def sigma_z(bits):
    """sigma^z = |r><r| - |m><m| for occupation bits (1 = |r>)."""
    return 2 * np.asarray(bits) - 1


# ------------------------------------------------------------------ state views


@dataclass(frozen=True, eq=False)
class DensityState:
    """A density matrix on a basis (pure states use :class:`StateVector`)."""

    basis: Basis
    rho: np.ndarray


def _populations(data) -> tuple[Basis, np.ndarray]:
    if isinstance(data, StateVector):
        return data.basis, data.probabilities()
    p = np.real(np.diag(data.rho))
    tr = p.sum()
    if tr <= 0:
        raise DegenerateStateError("density matrix has zero trace")
    return data.basis, p / tr


def _flip_coherences(data) -> tuple[Basis, np.ndarray]:
    """``rho_{n, nbar}`` for every configuration n (zero when nbar is missing)."""
    basis = data.basis
    flip = basis.flip_indices
    ok = flip >= 0
    out = np.zeros(basis.dim, dtype=complex)
    if isinstance(data, StateVector):
        psi = data.normalized().amplitudes
        out[ok] = psi[ok] * np.conj(psi[flip[ok]])
    else:
        rho = data.rho / np.trace(data.rho).real
        out[ok] = rho[np.nonzero(ok)[0], flip[ok]]
    return basis, out


def sample_shots(state: StateVector, n_shots: int, rng: np.random.Generator) -> np.ndarray:
    probs = state.probabilities()
    picks = rng.choice(state.basis.dim, size=n_shots, p=probs)
    return state.basis.occupations[picks].astype(np.int8)


# ------------------------------------------------------------------------- g2


def _lattice_coords(geometry: Geometry) -> np.ndarray:
    if geometry.is_ladder:
        # ladder sites sit on an integer grid
        k = np.arange(geometry.n_sites)
        return np.column_stack([k // 2, k % 2]).astype(float)
    return geometry.positions


def displacement_pairs(geometry: Geometry, dx: float, dy: float, tol: float = 1e-6) -> list[tuple[int, int]]:
    """Ordered pairs (i, j) with r_i = r_j + (dx, dy) (lattice units on ladders)."""
    r = _lattice_coords(geometry)
    diff = r[:, None, :] - r[None, :, :]
    hit = (np.abs(diff[..., 0] - dx) < tol) & (np.abs(diff[..., 1] - dy) < tol)
    np.fill_diagonal(hit, False)
    return [(int(i), int(j)) for i, j in np.argwhere(hit)]


def g2(data, geometry: Geometry, dx: float, dy: float) -> float:
    """Connected density correlation averaged over pairs at displacement (dx, dy).

    ``data`` is a StateVector/DensityState (exact) or a shot array; shots
    with either site of a pair lost are left out of that pair.
    """
    pairs = displacement_pairs(geometry, dx, dy)
    if not pairs:
        raise UndefinedDisplacementError(f"no site pair at displacement ({dx}, {dy})")
    vals = []
    if isinstance(data, (StateVector, DensityState)):
        basis, p = _populations(data)
        occ = basis.occupations.astype(float)
        n = occ.T @ p
        for i, j in pairs:
            vals.append(float(p @ (occ[:, i] * occ[:, j]) - n[i] * n[j]))
    else:
        shots = np.asarray(data)
        for i, j in pairs:
            ok = (shots[:, i] != LOST) & (shots[:, j] != LOST)
            if not ok.any():
                continue
            a = shots[ok, i].astype(float)
            b = shots[ok, j].astype(float)
            vals.append(float(np.mean(a * b) - a.mean() * b.mean()))
        if not vals:
            raise UndefinedDisplacementError("every pair touches a lost site")
    return float(np.mean(vals))


def g2_shot_error(shots: np.ndarray, geometry: Geometry, dx: float, dy: float, n_boot: int = 200, seed=0) -> float:
    """Bootstrap standard error of the shot-based g2."""
    rng = np.random.default_rng(seed)
    n = shots.shape[0]
    vals = [g2(shots[rng.integers(0, n, n)], geometry, dx, dy) for _ in range(n_boot)]
    return float(np.std(vals, ddof=1))


# ---------------------------------------------------------- staggered magnetism


def staggered_magnetism(shots: np.ndarray, geometry: Geometry) -> np.ndarray:
    """Per-shot M = sum_k (-1)^k sigma^z along the circular index; NaN for shots with loss."""
    shots = np.atleast_2d(np.asarray(shots))
    signs = geometry.staggered_signs()
    m = sigma_z(shots) @ signs
    bad = np.any(shots == LOST, axis=1)
    return np.where(bad, np.nan, m.astype(float))


def staggered_distribution(data, geometry: Geometry) -> dict[int, float]:
    """Exact distribution of M for a state."""
    basis, p = _populations(data)
    m = sigma_z(basis.occupations) @ geometry.staggered_signs()
    out: dict[int, float] = {}
    for val, prob in zip(np.rint(m).astype(int), p):
        out[int(val)] = out.get(int(val), 0.0) + float(prob)
    return dict(sorted(out.items()))


def z2_population(data, geometry: Geometry) -> float:
    """Fraction with |M| = N (shots ignore lost-site shots)."""
    n = geometry.n_sites
    if isinstance(data, (StateVector, DensityState)):
        dist = staggered_distribution(data, geometry)
        return float(sum(p for m, p in dist.items() if abs(m) == n))
    m = staggered_magnetism(data, geometry)
    m = m[~np.isnan(m)]
    if m.size == 0:
        raise DegenerateStateError("no usable shots")
    return float(np.mean(np.abs(m) == n))


# ------------------------------------------------------------------ GHZ fidelity


@dataclass
class GhzFidelity:
    fidelity: float
    population_a: float
    population_abar: float
    coherence: float  # Re rho_{A Abar}


def ghz_fidelity_exact(data, target) -> GhzFidelity:
    """F = (rho_AA + rho_AbarAbar)/2 + Re rho_AAbar."""
    ia, ib = target.indices
    if isinstance(data, StateVector):
        psi = data.normalized().amplitudes
        raa, rbb = abs(psi[ia]) ** 2, abs(psi[ib]) ** 2
        rab = psi[ia] * np.conj(psi[ib])
    else:
        rho = data.rho / np.trace(data.rho).real
        raa, rbb, rab = rho[ia, ia].real, rho[ib, ib].real, rho[ia, ib]
    coh = float(np.real(rab))
    return GhzFidelity(float(0.5 * (raa + rbb) + coh), float(raa), float(rbb), coh)


# --------------------------------------------------------------------- parity


@dataclass
class ParityScan:
    phis: np.ndarray
    parity: np.ndarray

    def __post_init__(self):
        if np.any(np.abs(self.parity) > 1 + 1e-9):
            raise ValueError("parity values must lie in [-1, 1]")

    @property
    def offset(self) -> float:
        return float(np.mean(self.parity))


def default_phis(n_points: int = 11) -> np.ndarray:
    return 2 * np.pi * np.arange(n_points) / n_points


def parity_closed_form(data, phis) -> np.ndarray:
    """Pi(phi) = sum_n (-1)^(N_n + N/2) rho_{n nbar} exp(-i phi (N_n - N_nbar))."""
    basis, coh = _flip_coherences(data)
    if basis.mode != FULL:
        raise ValueError("parity scan needs the full basis")
    n = basis.n_sites
    counts = basis.excitation_counts
    sign = (-1.0) ** (counts + n // 2)
    dn = 2 * counts - n
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    vals = (sign * coh)[None, :] * np.exp(-1j * phis[:, None] * dn[None, :])
    return np.real(vals.sum(axis=1))


def parity_scan(data, phis=None) -> ParityScan:
    phis = default_phis() if phis is None else np.asarray(phis, dtype=float)
    return ParityScan(phis, parity_closed_form(data, phis))


def _global_rotation(n: int) -> np.ndarray:
    """exp(-i pi/4 sum_i sigma^x_i) on the full basis (site 0 = leading bit)."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    single = expm(-1j * np.pi / 4 * sx)
    out = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        out = np.kron(out, single)
    return out


def parity_dense(data, phis) -> np.ndarray:
    """Brute-force Tr(U_x U(phi) rho U(phi)^dag U_x^dag prod_i sigma^z_i)."""
    basis = data.basis
    if basis.mode != FULL:
        raise ValueError("dense parity needs the full basis")
    if isinstance(data, StateVector):
        psi = data.normalized().amplitudes
        rho = np.outer(psi, psi.conj())
    else:
        rho = data.rho / np.trace(data.rho).real
    n = basis.n_sites
    ux = _global_rotation(n)
    counts = basis.excitation_counts
    parity_diag = np.prod(sigma_z(basis.occupations), axis=1).astype(float)
    out = []
    for phi in np.atleast_1d(phis):
        u = np.exp(-1j * phi * counts)
        r = ux @ (u[:, None] * rho * u.conj()[None, :]) @ ux.conj().T
        out.append(float(np.real(np.sum(np.diag(r) * parity_diag))))
    return np.array(out)


def symmetric_set(basis: Basis, target) -> list[int]:
    """S_A: configurations with N/2 excitations other than A and Abar."""
    n = basis.n_sites
    half = np.nonzero(basis.excitation_counts * 2 == n)[0]
    ia, ib = target.indices
    return [int(i) for i in half if i not in (ia, ib)]


def coherence_lower_bound(scan: ParityScan, populations, target) -> float:
    """Lower bound on 2 Re rho_{A Abar}: Pi_bar - sum_{m in S_A} sqrt(P_m P_mbar).

    ``populations`` is an array over the basis or a mapping from bit labels
    (strings or ints) to probabilities.
    """
    basis = target.basis
    idx = symmetric_set(basis, target)
    flip = basis.flip_indices
    if isinstance(populations, dict):
        lookup = {}
        for k, v in populations.items():
            lookup[basis.index(k)] = float(v)
        missing = [basis.labels()[i] for i in idx if i not in lookup or flip[i] not in lookup]
        if missing:
            raise PartialBoundError("populations missing for the coherence bound", sorted(set(missing)))
        pops = np.zeros(basis.dim)
        for k, v in lookup.items():
            pops[k] = v
    else:
        pops = np.asarray(populations, dtype=float)
        if pops.shape != (basis.dim,):
            raise PartialBoundError("population array does not cover the basis", [])
    total = sum(np.sqrt(pops[m] * pops[flip[m]]) for m in idx)
    return float(scan.offset - total)


def oscillation_amplitude(data, delta_n: int) -> tuple[float, float]:
    """(exact amplitude, population bound) of the exp(-i phi delta_n) parity component."""
    if delta_n <= 0 or delta_n % 2:
        raise ValueError("delta_n must be a positive even integer")
    basis, coh = _flip_coherences(data)
    _, pops = _populations(data)
    n = basis.n_sites
    counts = basis.excitation_counts
    dn = 2 * counts - n
    sign = (-1.0) ** (counts + n // 2)
    plus = np.abs(np.sum((sign * coh)[dn == delta_n]))
    minus = np.abs(np.sum((sign * coh)[dn == -delta_n]))
    sel = np.abs(dn) == delta_n
    flip = basis.flip_indices
    bound = float(np.sum(np.sqrt(pops[sel] * pops[flip[sel]])))
    return float(plus + minus), bound


# -------------------------------------------------------- measurement correction


def measurement_matrix(e00: float, e01: float, e10: float, e11: float) -> np.ndarray:
    """Observed counts = M @ actual counts, spins ordered (0, 1).

    e_ab is the probability that spin a is reported as spin b for b != a, and
    1 - e_aa the probability that spin a is reported correctly.
    """
    m = np.array([[1 - e00, e10], [e01, 1 - e11]], dtype=float)
    if np.any(m < 0) or np.any(m > 1):
        raise ValueError("measurement matrix entries must lie in [0, 1]")
    return m


def table_measurement_matrix(spin_flip: bool = True) -> np.ndarray:
    """Matrix for spin 0 = m0 and spin 1 = m1 from the three-outcome detection table."""
    e01 = 0.0070 if spin_flip else 0.0
    e10 = 0.0018 if spin_flip else 0.0
    return measurement_matrix(1 - 0.949, e01, e10, 1 - 0.969)


@dataclass
class CorrectionResult:
    counts: np.ndarray
    residual: float


def correct_measurement(observed, m_single: np.ndarray, n_qubits: int = 1, cond_max: float = 1e12) -> CorrectionResult:
    """Non-negative least squares inversion of the (M x ... x M) counts map."""
    observed = np.asarray(observed, dtype=float)
    if np.any(observed < 0):
        raise ValueError("observed counts must be non-negative")
    m = np.ones((1, 1))
    for _ in range(n_qubits):
        m = np.kron(m, m_single)
    if observed.shape != (m.shape[1],):
        raise ValueError(f"expected {m.shape[1]} counts for {n_qubits} qubit(s)")
    if np.linalg.cond(m) > cond_max:
        raise ConditioningError("measurement matrix is too close to singular")
    counts, resid = nnls(m, observed)
    return CorrectionResult(counts, float(resid))


def bell_fidelity(population_counts, parity_counts) -> float:
    """Bell fidelity (P00 + P11)/2 + C/2 from two-qubit counts.

    ``parity_counts`` is a list of count vectors over (00, 01, 10, 11) along a
    parity scan; C is half the peak-to-peak parity contrast.
    """
    p = np.asarray(population_counts, dtype=float)
    p = p / p.sum()
    par = []
    for c in parity_counts:
        c = np.asarray(c, dtype=float)
        c = c / c.sum()
        par.append(c[0] + c[3] - c[1] - c[2])
    contrast = 0.5 * (max(par) - min(par))
    return float(0.5 * (p[0] + p[3]) + 0.5 * contrast)


# --------------------------------------------------------------------- shot IO


def shots_dumps(shots: np.ndarray) -> str:
    shots = np.atleast_2d(shots)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"site_{i}" for i in range(shots.shape[1])])
    for row in shots:
        w.writerow(["L" if v == LOST else int(v) for v in row])
    return buf.getvalue()


def shots_loads(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    body = [r for r in rows[1:] if r]
    return np.array([[LOST if v.strip() == "L" else int(v) for v in r] for r in body], dtype=np.int8)


def read_shots(path) -> np.ndarray:
    return shots_loads(Path(path).read_text())


def write_shots(shots, path) -> None:
    Path(path).write_text(shots_dumps(shots))
