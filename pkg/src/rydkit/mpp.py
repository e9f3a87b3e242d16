"""Clock-pulse transfer between two harmonic traps of different frequency.

The ground state g sits in a trap of angular frequency omega_g and the
metastable state m in one of omega_m, offset by a detuning delta_m from the
differential light shift.  After the rotating-wave approximation

    H = sum_i omega_g i |g,i><g,i| + sum_j (omega_m j + delta_m) |m,j><m,j|
        + Omega(t)/2 sum_ij M_ji |m,j><g,i| + h.c.

with M_ji = <j|_{omega_m} exp(i k x) |i>_{omega_g}.  Units: rad/us and um.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from rydkit.errors import IntegrationError

# hbar / m for 171Yb in um^2/us
HBAR_OVER_MASS_YB171 = 1.054571817e-34 / (171 * 1.66053906660e-27) * 1e6
DEFAULT_TRAP = 2 * np.pi * 0.1
DEFAULT_K = 2 * np.pi / 0.578
DEFAULT_DURATION = 100.0


@dataclass(frozen=True)
class TrapPair:
    omega_g: float = DEFAULT_TRAP
    omega_m: float = DEFAULT_TRAP
    delta_m: float = 0.0
    k: float = DEFAULT_K
    n_levels: int = 15
    omega_drive: float | None = None  # peak Rabi; None calibrates a carrier pi pulse
    hbar_over_mass: float = HBAR_OVER_MASS_YB171

    def __post_init__(self):
        if self.omega_g <= 0 or self.omega_m <= 0:
            raise ValueError("trap frequencies must be positive")
        if self.n_levels < 5:
            raise ValueError("n_levels must be at least 5")

    def length(self, omega: float) -> float:
        """Oscillator length sqrt(hbar / (m omega))."""
        return float(np.sqrt(self.hbar_over_mass / omega))

    def lamb_dicke(self) -> float:
        """eta = k x_zpf in the ground-state trap."""
        return self.k * self.length(self.omega_g) / np.sqrt(2)


def _hermite_functions(n: int, y: np.ndarray) -> np.ndarray:
    # normalized h_n(y) such that psi_n = sigma^-1/2 h_n(x/sigma) exp(-y^2/2)
    out = np.zeros((n, y.size))
    out[0] = np.pi**-0.25
    if n > 1:
        out[1] = np.sqrt(2.0) * y * out[0]
    for m in range(1, n - 1):
        out[m + 1] = np.sqrt(2.0 / (m + 1)) * y * out[m] - np.sqrt(m / (m + 1)) * out[m - 1]
    return out


def _recoil_matrix(traps: TrapPair, n_quad: int) -> np.ndarray:
    sm = traps.length(traps.omega_m)
    sg = traps.length(traps.omega_g)
    s = np.sqrt(2.0 / (1.0 / sm**2 + 1.0 / sg**2))
    u, w = np.polynomial.hermite.hermgauss(n_quad)
    x = s * u
    hm = _hermite_functions(traps.n_levels, x / sm)
    hg = _hermite_functions(traps.n_levels, x / sg)
    phase = np.exp(1j * traps.k * x) * w
    return s / np.sqrt(sm * sg) * (hm * phase) @ hg.T


def recoil_matrix(traps: TrapPair, tol: float = 1e-10) -> np.ndarray:
    """M[j, i] = <j|_{omega_m} e^{ikx} |i>_{omega_g} for all i, j < n_levels.

    Gauss-Hermite quadrature adapted to the product Gaussian; the node count
    doubles until successive results agree within ``tol``.
    """
    n = 2 * traps.n_levels + 40
    prev = _recoil_matrix(traps, n)
    for _ in range(6):
        n *= 2
        cur = _recoil_matrix(traps, n)
        if np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
    raise IntegrationError("recoil matrix quadrature did not converge")


def recoil_matrix_element(i: int, j: int, traps: TrapPair) -> complex:
    """<i|_{omega_m} e^{ikx} |j>_{omega_g}."""
    if not (0 <= i < traps.n_levels and 0 <= j < traps.n_levels):
        raise IndexError("level index outside the truncation")
    return complex(recoil_matrix(traps)[i, j])


def envelope(shape: str, t, duration: float) -> np.ndarray:
    """Unit-peak amplitude profile."""
    t = np.asarray(t, dtype=float)
    if shape == "hann":
        return np.sin(np.pi * t / duration) ** 2
    if shape == "square":
        return np.ones_like(t)
    raise ValueError(f"unknown pulse shape {shape!r}")


_MEAN = {"hann": 0.5, "square": 1.0}


@dataclass
class MppResult:
    infidelity: float
    added_quanta: float
    truncated: bool
    max_top_population: float


def simulate_mpp(
    traps: TrapPair,
    shape: str = "hann",
    duration: float = DEFAULT_DURATION,
    n_steps: int = 4000,
    start_level: int = 0,
) -> MppResult:
    """Drive |g, start_level> and report 1 - P(m) and the change in mean
    motional quantum number within the m manifold.

    Without ``traps.omega_drive`` the peak Rabi frequency is set so that the
    pulse area is pi on the carrier matrix element.  Propagation uses a
    fourth-order Magnus step (two Gauss points per step).
    """
    n = traps.n_levels
    mat = recoil_matrix(traps)
    if traps.omega_drive is None:
        peak = np.pi / (abs(mat[start_level, start_level]) * _MEAN[shape] * duration)
    else:
        peak = traps.omega_drive
    levels = np.arange(n)
    h0 = np.diag(np.concatenate([traps.omega_g * levels, traps.omega_m * levels + traps.delta_m])).astype(complex)
    coup = np.zeros((2 * n, 2 * n), dtype=complex)
    coup[n:, :n] = 0.5 * mat
    coup += coup.conj().T

    dt = duration / n_steps
    c1, c2 = 0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6
    t0 = np.arange(n_steps) * dt
    a1 = peak * envelope(shape, t0 + c1 * dt, duration)
    a2 = peak * envelope(shape, t0 + c2 * dt, duration)
    # [H2, H1] = (a2 - a1) [C, H0] since H0 commutes with itself
    comm = coup @ h0 - h0 @ coup
    gen = (
        -0.5j * dt * (2 * h0[None] + (a1 + a2)[:, None, None] * coup[None])
        - (np.sqrt(3) / 12) * dt**2 * (a2 - a1)[:, None, None] * comm[None]
    )
    steps = expm(gen)
    psi = np.zeros(2 * n, dtype=complex)
    psi[start_level] = 1
    top = 0.0
    for u in steps:
        psi = u @ psi
        top = max(top, abs(psi[n - 1]) ** 2, abs(psi[2 * n - 1]) ** 2)
    norm = np.vdot(psi, psi).real
    if abs(norm - 1) > 1e-10:
        raise IntegrationError(f"evolution not unitary (norm {norm:.12f})")
    pm = np.abs(psi[n:]) ** 2
    p_m = float(pm.sum())
    added = float(pm @ levels / p_m) - start_level if p_m > 0 else 0.0
    return MppResult(1.0 - p_m, added, bool(top > 1e-6), float(top))


def calibrate_drive(traps: TrapPair, shape: str = "hann", duration: float = DEFAULT_DURATION, n_steps: int = 4000) -> float:
    """Peak Rabi frequency maximising transfer from |g,0>, refined around the
    carrier-element estimate (absorbs the sideband light shifts)."""
    mat = recoil_matrix(traps)
    guess = np.pi / (abs(mat[0, 0]) * _MEAN[shape] * duration)

    def infid(scale):
        return simulate_mpp(replace(traps, omega_drive=guess * scale), shape, duration, n_steps).infidelity

    res = minimize_scalar(infid, bracket=(0.999, 1.0, 1.001), tol=1e-10)
    return float(guess * res.x)


@dataclass
class SweepRow:
    omega_ratio: float
    delta_m: float
    infidelity: float
    added_quanta: float


def sweep_inhomogeneity(
    template: TrapPair,
    ratios=(0.9, 1.0, 1.1),
    deltas=None,
    pairs=None,
    shape: str = "hann",
    duration: float = DEFAULT_DURATION,
    n_steps: int = 4000,
) -> list[SweepRow]:
    """Evaluate the grid ratios x deltas (omega_m = ratio * omega_g), or the
    explicit wavelength-mapped (ratio, delta_m) ``pairs`` when given."""
    if deltas is None:
        deltas = np.linspace(-0.05, 0.05, 11)
    points = list(pairs) if pairs is not None else [(r, d) for r in ratios for d in deltas]
    if not points:
        raise ValueError("empty sweep grid")
    rows = []
    for ratio, delta in points:
        traps = replace(template, omega_m=ratio * template.omega_g, delta_m=float(delta))
        res = simulate_mpp(traps, shape, duration, n_steps)
        rows.append(SweepRow(float(ratio), float(delta), res.infidelity, res.added_quanta))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["omega_ratio", "delta_m_rad_per_us", "infidelity", "added_quanta"])
    for r in rows:
        w.writerow([repr(r.omega_ratio), repr(r.delta_m), repr(r.infidelity), repr(r.added_quanta)])
    return buf.getvalue()
