"""Time-optimal CZ gate: a single global drive on m1 <-> r with a
sinusoidally modulated phase."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from rydkit.errors import ConvergenceError
from rydkit.gate.model import COMPUTATIONAL, DIM, R, hamiltonian

# Placeholder gate drive; the interaction default keeps V / Omega = 100.
DEFAULT_GATE_OMEGA = 2 * np.pi * 2.5
DEFAULT_BLOCKADE_RATIO = 100.0

# Known neighbourhood of the time-optimal solution, in units of Omega.
_GUESS = {"amplitude": 2 * np.pi * 0.1122, "frequency": 1.0431, "offset": 0.7318, "area": 7.612}


@dataclass(frozen=True)
class TogPulse:
    """phi(t) = amplitude * cos(frequency * t + offset) + slope * t on [0, duration]."""

    omega: float
    amplitude: float
    frequency: float
    offset: float
    duration: float
    slope: float = 0.0
    compensation: float = 0.0
    interaction: float = np.inf
    n_slices: int = 100

    @property
    def dt(self) -> float:
        return self.duration / self.n_slices

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_slices) + 0.5) * self.dt

    def phase(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.cos(self.frequency * t + self.offset) + self.slope * t

    def slice_hamiltonians(self, omega_scale=1.0, detuning=0.0) -> np.ndarray:
        """H per slice; ``omega_scale``/``detuning`` broadcast against
        (..., n_slices, 2)."""
        t = self.midpoints()
        om = self.omega * np.broadcast_to(omega_scale, np.broadcast_shapes(np.shape(omega_scale), (self.n_slices, 2)))
        de = np.broadcast_to(detuning, np.broadcast_shapes(np.shape(detuning), (self.n_slices, 2)))
        return hamiltonian(om, self.phase(t), de, self.interaction)


def slice_unitaries(hams: np.ndarray, dt: float) -> np.ndarray:
    w, v = np.linalg.eigh(hams)
    return (v * np.exp(-1j * dt * w)[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def closed_unitary(pulse: TogPulse) -> np.ndarray:
    """Noise-free 16x16 propagator of the pulse."""
    us = slice_unitaries(pulse.slice_hamiltonians(), pulse.dt)
    out = np.eye(DIM, dtype=complex)
    for u in us:
        out = u @ out
    return out


def cz_target(theta: float) -> np.ndarray:
    """CZ followed by a Z rotation e^{i theta} on |1> of each qubit."""
    z = np.exp(1j * theta)
    return np.diag([1.0, z, z, -(z**2)])


def target_unitary(pulse: TogPulse) -> np.ndarray:
    """Compensated CZ embedded in the 16-level space; identity elsewhere."""
    return embed(cz_target(pulse.compensation))


def embed(op4: np.ndarray) -> np.ndarray:
    out = np.eye(DIM, dtype=complex)
    out[np.ix_(COMPUTATIONAL, COMPUTATIONAL)] = op4
    return out


def average_gate_fidelity(target4: np.ndarray, actual4: np.ndarray) -> float:
    """(|Tr M|^2 + Tr M M^dag) / (d (d + 1)) with M = target^dag actual,
    valid for a possibly leaky actual block."""
    m = target4.conj().T @ actual4
    d = target4.shape[0]
    return float((abs(np.trace(m)) ** 2 + np.trace(m @ m.conj().T).real) / (d * (d + 1)))


def best_compensation(unitary: np.ndarray) -> float:
    """Single-qubit Z angle maximising the CZ fidelity of ``unitary``."""
    block = unitary[np.ix_(COMPUTATIONAL, COMPUTATIONAL)]
    guess = float(np.angle(block[1, 1] / block[0, 0]))
    res = minimize(
        lambda x: -average_gate_fidelity(cz_target(x[0]), block), [guess], method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-15},
    )
    return float(res.x[0])


def gate_infidelity(pulse: TogPulse, unitary: np.ndarray | None = None) -> float:
    u = closed_unitary(pulse) if unitary is None else unitary
    block = u[np.ix_(COMPUTATIONAL, COMPUTATIONAL)]
    return 1.0 - average_gate_fidelity(cz_target(pulse.compensation), block)


def residual_rydberg(unitary: np.ndarray) -> np.ndarray:
    """Population left with at least one atom in r, per computational input."""
    has_r = np.array([(i // 4 == R) or (i % 4 == R) for i in range(DIM)])
    cols = unitary[:, COMPUTATIONAL]
    return np.sum(np.abs(cols[has_r]) ** 2, axis=0)


def _pulse_from(x, omega, interaction, n_slices, compensation=0.0):
    amp, freq, off, area, slope = x
    return TogPulse(
        omega=omega,
        amplitude=amp,
        frequency=freq * omega,
        offset=off,
        duration=area / omega,
        slope=slope * omega,
        compensation=compensation,
        interaction=interaction,
        n_slices=n_slices,
    )


def synthesize_tog(
    omega: float,
    interaction: float = np.inf,
    n_slices: int = 100,
    tol: float = 1e-4,
    max_iter: int = 4000,
    x0=None,
) -> TogPulse:
    """Optimise the phase parameters and duration so the gate is CZ up to
    single-qubit Z rotations (compensation angle stored on the pulse).

    Raises ConvergenceError if the infidelity stays above ``tol``.
    """
    if x0 is None and np.isfinite(interaction):
        # start from the perfect-blockade optimum
        ref = synthesize_tog(omega, np.inf, n_slices, tol, max_iter)
        x0 = [ref.amplitude, ref.frequency / omega, ref.offset, ref.duration * omega, ref.slope / omega]
    if x0 is None:
        x0 = [_GUESS["amplitude"], _GUESS["frequency"], _GUESS["offset"], _GUESS["area"], 0.0]

    def objective(x):
        p = _pulse_from(x, omega, interaction, n_slices)
        u = closed_unitary(p)
        block = u[np.ix_(COMPUTATIONAL, COMPUTATIONAL)]
        theta = float(np.angle(block[1, 1] / block[0, 0]))
        return 1.0 - average_gate_fidelity(cz_target(theta), block)

    best = np.asarray(x0, dtype=float)
    good_enough = tol * 1e-4
    state = {"x": best, "f": objective(best)}

    def stop(intermediate_result):
        if intermediate_result.fun < state["f"]:
            state["x"], state["f"] = intermediate_result.x, intermediate_result.fun
        if state["f"] < good_enough:
            raise StopIteration

    for _ in range(3):
        if state["f"] < good_enough:
            break
        minimize(
            objective, state["x"], method="Nelder-Mead", callback=stop,
            options={"maxiter": max_iter, "xatol": 1e-10, "fatol": 1e-14, "adaptive": True},
        )
    best = state["x"]
    pulse = _pulse_from(best, omega, interaction, n_slices)
    u = closed_unitary(pulse)
    pulse = replace(pulse, compensation=best_compensation(u))
    infid = gate_infidelity(pulse, u)
    if infid > tol:
        raise ConvergenceError(f"TOG synthesis stalled at infidelity {infid:.3e}", infid, None)
    return pulse
