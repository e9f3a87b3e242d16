"""Disorder-robust GRAPE for Z2-ordered GHZ preparation.

The control variables are the piecewise-constant detunings Delta_j; the Rabi
envelope is fixed.  Each disorder realization k only changes the interaction
diagonal, so all realizations propagate together as columns of one block.

The gradient is exact: the derivative of each segment propagator is taken
along dH/dDelta = -sum_i n_i (Daleckii-Krein formula on small spaces,
differentiated Chebyshev recursion on large ones).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from rydkit.core.basis import Basis, enumerate_basis
from rydkit.core.chebyshev import chebyshev_expmv, chebyshev_expmv_derivative, spectral_bounds
from rydkit.core.operators import sigma_x_matrix
from rydkit.rydberg import (
    DEFAULT_OMEGA,
    DisorderSampler,
    Geometry,
    InteractionModel,
    interaction_diagonal,
    interaction_matrix,
    sample_disordered_geometry,
)

DENSE_MAX_DIM = 64


@dataclass(frozen=True, eq=False)
class PulseProfile:
    """Piecewise-constant pulse on ``n`` uniform segments of length T/n."""

    duration: float
    delta: np.ndarray
    omega: np.ndarray
    phi: np.ndarray | None = None

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        omega = np.asarray(self.omega, dtype=float)
        if delta.ndim != 1 or delta.shape != omega.shape:
            raise ValueError("delta and omega must be 1-D arrays of equal length")
        if delta.size < 2:
            raise ValueError("a pulse needs at least two segments")
        if self.duration <= 0:
            raise ValueError("pulse duration must be positive")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "omega", omega)
        if self.phi is not None:
            object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float))

    @property
    def n_segments(self) -> int:
        return int(self.delta.size)

    @property
    def dt(self) -> float:
        return self.duration / self.n_segments

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_segments) + 0.5) * self.dt

    def with_delta(self, delta: np.ndarray) -> "PulseProfile":
        return replace(self, delta=np.asarray(delta, dtype=float))

    def rescaled(self, duration: float) -> "PulseProfile":
        """Same samples on a grid stretched to ``duration`` (fixed segment count)."""
        return replace(self, duration=float(duration))


def cosine_taper(t: np.ndarray, duration: float, plateau: float, taper_fraction: float = 0.1) -> np.ndarray:
    """Tukey window: cosine ramps of length ``taper_fraction*T`` at both ends."""
    t = np.asarray(t, dtype=float)
    ramp = taper_fraction * duration
    if ramp <= 0:
        return np.full_like(t, plateau)
    env = np.ones_like(t)
    rise = t < ramp
    fall = t > duration - ramp
    env[rise] = 0.5 * (1 - np.cos(np.pi * t[rise] / ramp))
    env[fall] = 0.5 * (1 - np.cos(np.pi * (duration - t[fall]) / ramp))
    return plateau * np.clip(env, 0.0, 1.0)


def linear_ramp_pulse(
    duration: float,
    n_segments: int = 150,
    omega_plateau: float = DEFAULT_OMEGA,
    start: float | None = None,
    stop: float | None = None,
    taper_fraction: float = 0.1,
) -> PulseProfile:
    """Linear detuning sweep under a cosine-tapered Rabi envelope.

    Default endpoints are -8/3 and +2 times the plateau Rabi frequency.
    """
    start = -8.0 / 3.0 * omega_plateau if start is None else start
    stop = 2.0 * omega_plateau if stop is None else stop
    t = (np.arange(n_segments) + 0.5) * duration / n_segments
    delta = start + (stop - start) * t / duration
    return PulseProfile(duration, delta, cosine_taper(t, duration, omega_plateau, taper_fraction))


@dataclass(frozen=True)
class GrapeConfig:
    n_samples: int = 30
    delta_r_nm: float = 60.0
    eta: float = 1e-3
    dT: float = 0.1
    n_continuation: int = 0
    max_iter: int = 200
    tol: float = 1e-10
    seed: int = 0
    penalty_unit: float | None = None
    workers: int = 1
    chunk_size: int = 8
    propagation_tol: float = 1e-12
    dense_max_dim: int = DENSE_MAX_DIM

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.dT <= 0:
            raise ValueError("dT must be positive")


@dataclass(frozen=True, eq=False)
class GhzTarget:
    basis: Basis
    config_a: int
    config_abar: int

    def __post_init__(self):
        mask = (1 << self.basis.n_sites) - 1
        if self.config_a ^ mask != self.config_abar:
            raise ValueError("GHZ components must be bitwise complements")

    @classmethod
    def from_geometry(cls, geometry: Geometry, basis: Basis) -> "GhzTarget":
        a, abar = geometry.checkerboard()
        return cls(basis, a, abar)

    @property
    def indices(self) -> tuple[int, int]:
        return self.basis.index(self.config_a), self.basis.index(self.config_abar)

    @property
    def vector(self) -> np.ndarray:
        v = np.zeros(self.basis.dim, dtype=complex)
        ia, ib = self.indices
        v[ia] = v[ib] = 1 / np.sqrt(2)
        return v


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Hamiltonian pieces shared by one cost evaluation."""

    basis: Basis
    drive: object
    drive_dense: np.ndarray | None
    number: np.ndarray
    interactions: np.ndarray  # (dim, n_samples)
    row_bound: float


def build_ensemble(
    geometry: Geometry,
    model: InteractionModel,
    basis: Basis,
    n_samples: int,
    delta_r_nm: float,
    seed: int,
    dense_max_dim: int = DENSE_MAX_DIM,
) -> Ensemble:
    sampler = DisorderSampler(delta_r_nm, seed)
    cols = []
    for k in range(n_samples):
        geo = sample_disordered_geometry(geometry, sampler, k)
        cols.append(interaction_diagonal(basis, interaction_matrix(geo, model)))
    drive = sigma_x_matrix(basis)
    dense = drive.toarray() if basis.dim <= dense_max_dim else None
    row_bound = float(np.diff(drive.indptr).max()) if basis.dim > 1 else 0.0
    return Ensemble(basis, drive, dense, basis.excitation_counts.astype(float), np.column_stack(cols), row_bound)


def penalty(delta: np.ndarray, eta: float, unit: float) -> tuple[float, np.ndarray]:
    """``eta * int_0^1 (dDelta/ds)^2 ds`` with Delta measured in ``unit``."""
    n = delta.size
    d = np.diff(delta) / unit
    value = eta * n * float(np.dot(d, d))
    grad = np.zeros(n)
    grad[:-1] -= d
    grad[1:] += d
    return value, 2 * eta * n * grad / unit


def _segment_dense(ens: Ensemble, omega: float, delta: float, inter: np.ndarray):
    """Eigen-decompositions of the real symmetric segment Hamiltonians (batch, dim, dim)."""
    diag = -delta * ens.number[:, None] + inter
    h = 0.5 * omega * ens.drive_dense[None, :, :] + np.einsum("ij,jk->kij", np.eye(ens.basis.dim), diag)
    return np.linalg.eigh(h)


def _dense_step(evals, evecs, dt, psi):
    """``exp(-i dt H) psi`` for psi of shape (dim, batch)."""
    coef = np.einsum("bji,jb->bi", evecs, psi)
    coef = coef * np.exp(-1j * dt * evals)
    return np.einsum("bij,bj->ib", evecs, coef)


def _dense_overlap_derivative(evals, evecs, dt, lam, psi, number):
    """``<lam| dU psi>`` with dU the derivative of exp(-i dt H) along -diag(number)."""
    phase = np.exp(-1j * dt * evals)
    gap = evals[:, :, None] - evals[:, None, :]
    close = np.abs(gap) < 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (phase[:, :, None] - phase[:, None, :]) / np.where(close, 1.0, gap)
    diag_val = -1j * dt * 0.5 * (phase[:, :, None] + phase[:, None, :])
    g = np.where(close, diag_val, g)
    e_rot = -np.einsum("bji,j,bjk->bik", evecs, number, evecs)
    lt = np.einsum("bji,jb->bi", evecs, lam.conj())
    pt = np.einsum("bji,jb->bi", evecs, psi)
    return np.einsum("bi,bij,bj->b", lt, g * e_rot, pt)


def _chunk_value_grad(ens, pulse, inter, target, want_grad, tol):
    dim, batch = inter.shape
    n = pulse.n_segments
    dt = pulse.dt
    psi = np.zeros((dim, batch), dtype=complex)
    psi[0] = 1.0
    dense = ens.drive_dense is not None
    drive = ens.drive
    number = ens.number
    states = [psi] if want_grad else None

    def make_h(omega, delta):
        diag = -delta * number[:, None] + inter
        half = 0.5 * omega

        def apply_h(v):
            # real sparse matrix on the float view of a complex block is cheaper
            hv = (drive @ np.ascontiguousarray(v).view(float)).view(complex)
            hv *= half
            hv += diag * v
            return hv

        center, radius = spectral_bounds(diag, abs(half) * ens.row_bound)
        return apply_h, center, radius

    for j in range(n):
        if dense:
            evals, evecs = _segment_dense(ens, pulse.omega[j], pulse.delta[j], inter)
            psi = _dense_step(evals, evecs, dt, psi)
        else:
            apply_h, c, r = make_h(pulse.omega[j], pulse.delta[j])
            psi = chebyshev_expmv(apply_h, psi, dt, c, r, tol)
        if want_grad:
            states.append(psi)
    overlap = target.conj() @ psi
    fid = np.abs(overlap) ** 2
    if not want_grad:
        return fid, None

    grad = np.zeros((n, batch))
    lam = np.repeat(target[:, None], batch, axis=1).astype(complex)

    def apply_e(v):
        return -number[:, None] * v

    for j in range(n - 1, -1, -1):
        prev = states[j]
        if dense:
            evals, evecs = _segment_dense(ens, pulse.omega[j], pulse.delta[j], inter)
            dov = _dense_overlap_derivative(evals, evecs, dt, lam, prev, number)
            lam = _dense_step(evals, evecs, -dt, lam)
        else:
            apply_h, c, r = make_h(pulse.omega[j], pulse.delta[j])
            _, dpsi = chebyshev_expmv_derivative(apply_h, apply_e, prev, dt, c, r, tol)
            dov = np.einsum("ib,ib->b", lam.conj(), dpsi)
            lam = chebyshev_expmv(apply_h, lam, -dt, c, r, tol)
        grad[j] = 2.0 * np.real(np.conj(overlap) * dov)
    return fid, grad


@dataclass(frozen=True, eq=False)
class GrapeProblem:
    """Cost and gradient of one optimization at fixed total time."""

    ensemble: Ensemble
    target: GhzTarget
    config: GrapeConfig
    omega_unit: float

    @classmethod
    def build(
        cls,
        geometry: Geometry,
        model: InteractionModel,
        target: GhzTarget,
        config: GrapeConfig,
        omega_unit: float = DEFAULT_OMEGA,
    ) -> "GrapeProblem":
        ens = build_ensemble(
            geometry, model, target.basis, config.n_samples, config.delta_r_nm, config.seed, config.dense_max_dim
        )
        unit = config.penalty_unit if config.penalty_unit is not None else omega_unit
        return cls(ens, target, config, float(unit))

    def _run(self, pulse: PulseProfile, want_grad: bool):
        inter = self.ensemble.interactions
        size = max(1, self.config.chunk_size)
        chunks = [inter[:, s : s + size] for s in range(0, inter.shape[1], size)]
        tvec = self.target.vector
        tol = self.config.propagation_tol

        def work(block):
            return _chunk_value_grad(self.ensemble, pulse, block, tvec, want_grad, tol)

        if self.config.workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.config.workers) as pool:
                results = list(pool.map(work, chunks))
        else:
            results = [work(c) for c in chunks]
        fids = np.concatenate([r[0] for r in results])
        grads = np.concatenate([r[1] for r in results], axis=1) if want_grad else None
        return fids, grads

    def fidelities(self, pulse: PulseProfile) -> np.ndarray:
        return self._run(pulse, False)[0]

    def cost(self, pulse: PulseProfile) -> tuple[float, np.ndarray, float]:
        """(cost, per-sample fidelities, penalty)."""
        fids = self.fidelities(pulse)
        pen, _ = penalty(pulse.delta, self.config.eta, self.omega_unit)
        return 1.0 - float(fids.mean()) + pen, fids, pen

    def value_and_gradient(self, pulse: PulseProfile) -> tuple[float, np.ndarray, np.ndarray, float]:
        fids, grads = self._run(pulse, True)
        pen, pen_grad = penalty(pulse.delta, self.config.eta, self.omega_unit)
        cost = 1.0 - float(fids.mean()) + pen
        grad = -grads.mean(axis=1) + pen_grad
        return cost, grad, fids, pen


def _plateau(pulse: PulseProfile) -> float:
    return float(np.max(np.abs(pulse.omega))) or DEFAULT_OMEGA


def grape_cost(pulse, geometry, model, target, config) -> tuple[float, np.ndarray]:
    problem = GrapeProblem.build(geometry, model, target, config, _plateau(pulse))
    cost, fids, _ = problem.cost(pulse)
    return cost, fids


def grape_gradient(pulse, geometry, model, target, config) -> np.ndarray:
    problem = GrapeProblem.build(geometry, model, target, config, _plateau(pulse))
    return problem.value_and_gradient(pulse)[1]


@dataclass
class TraceRow:
    iteration: int
    duration: float
    cost: float
    fidelity_mean: float
    penalty: float


@dataclass
class OptimizationResult:
    pulse: PulseProfile
    trace: list[TraceRow] = field(default_factory=list)
    stalled: bool = False
    cost: float = float("nan")


def optimize_pulse(
    initial: PulseProfile,
    geometry: Geometry,
    model: InteractionModel,
    target: GhzTarget,
    config: GrapeConfig,
) -> OptimizationResult:
    """L-BFGS at each total time, then continue at T + dT from the optimum.

    ``config.n_continuation`` extra durations are visited; the result holds
    the pulse at the final duration and the full accepted-iterate trace.
    """
    problem = GrapeProblem.build(geometry, model, target, config, _plateau(initial))
    unit = problem.omega_unit
    pulse = initial
    trace: list[TraceRow] = []
    stalled = False
    it = 0
    cost = float("nan")
    for step in range(config.n_continuation + 1):
        if step:
            pulse = pulse.rescaled(pulse.duration + config.dT)
        cache: dict = {}

        def fun(x, pulse=pulse, cache=cache):
            c, g, fids, pen = problem.value_and_gradient(pulse.with_delta(x * unit))
            cache[x.tobytes()] = (c, float(fids.mean()), pen)
            return c, g * unit

        def record(x, cache=cache, pulse=pulse):
            nonlocal it
            c, fm, pen = cache.get(x.tobytes()) or _eval_row(problem, pulse.with_delta(x * unit))
            it += 1
            trace.append(TraceRow(it, pulse.duration, c, fm, pen))

        x0 = pulse.delta / unit
        record(x0)
        res = minimize(
            fun,
            x0,
            jac=True,
            method="L-BFGS-B",
            callback=record,
            options={"maxiter": config.max_iter, "ftol": config.tol, "gtol": 1e-10},
        )
        pulse = pulse.with_delta(res.x * unit)
        cost = float(res.fun)
        # hitting the iteration cap is normal; anything else is a stall
        if not res.success and res.nit < config.max_iter:
            stalled = True
    return OptimizationResult(pulse, trace, stalled, cost)


def _eval_row(problem, pulse):
    c, fids, pen = problem.cost(pulse)
    return c, float(fids.mean()), pen


def sweep_profile_report(pulse: PulseProfile, threshold: float = 1.3, plateau_fraction: float = 0.99) -> list[float]:
    """Times where Delta/Omega crosses ``threshold`` while Omega is on its plateau."""
    omax = np.max(np.abs(pulse.omega))
    if omax == 0:
        raise ValueError("pulse has no Rabi plateau")
    t = pulse.midpoints
    on = np.abs(pulse.omega) >= plateau_fraction * omax
    ratio = pulse.delta / np.where(on, pulse.omega, 1.0) - threshold
    out = []
    for j in range(len(t) - 1):
        if not (on[j] and on[j + 1]):
            continue
        a, b = ratio[j], ratio[j + 1]
        if a == 0 and j == 0:
            out.append(float(t[j]))
        if (a < 0 < b) or (a > 0 > b) or (b == 0 and a != 0):
            out.append(float(t[j] + (t[j + 1] - t[j]) * a / (a - b)))
    return out


def pulse_dumps(pulse: PulseProfile, eta: float | None = None, seed: int | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# T={pulse.duration!r}\n# N={pulse.n_segments}\n")
    if eta is not None:
        buf.write(f"# eta={eta!r}\n")
    if seed is not None:
        buf.write(f"# seed={seed}\n")
    buf.write("t_us,omega_rad_per_us,delta_rad_per_us,phi_rad\n")
    phi = pulse.phi if pulse.phi is not None else np.zeros(pulse.n_segments)
    for row in zip(pulse.midpoints, pulse.omega, pulse.delta, phi):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def pulse_loads(text: str) -> PulseProfile:
    meta = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
        elif line.strip() and not line.startswith("t_us"):
            rows.append([float(x) for x in line.split(",")])
    arr = np.asarray(rows)
    duration = float(meta["T"]) if "T" in meta else float(2 * arr[-1, 0] - arr[-2, 0] + arr[0, 0])
    phi = arr[:, 3] if np.any(arr[:, 3]) else None
    return PulseProfile(duration, arr[:, 2], arr[:, 1], phi)


def read_pulse(path) -> PulseProfile:
    return pulse_loads(Path(path).read_text())


def write_pulse(pulse: PulseProfile, path, eta=None, seed=None) -> None:
    Path(path).write_text(pulse_dumps(pulse, eta, seed))


def trace_dumps(trace: list[TraceRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "T_us", "cost", "fidelity_mean", "penalty"])
    for r in trace:
        w.writerow([r.iteration, repr(r.duration), repr(r.cost), repr(r.fidelity_mean), repr(r.penalty)])
    return buf.getvalue()


def default_target(geometry: Geometry, basis: Basis | None = None) -> GhzTarget:
    basis = enumerate_basis(geometry.n_sites) if basis is None else basis
    return GhzTarget.from_geometry(geometry, basis)
