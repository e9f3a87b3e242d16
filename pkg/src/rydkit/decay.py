"""Rydberg decay: no-jump evolution, jump trajectories and loss-detection
post-selection.

A decay from |r> ends in one of five destinations.  Whether it is flagged
as atom loss depends on the imaging mode:

* ``"r"`` (Rydberg-qubit readout): everything except the return to the
  qubit partner level m1 and the ``other`` branch is detected.
* ``"mr"`` (metastable plus Rydberg readout): returns to m0 or m1 and the
  ``other`` branch go undetected.

Undetected decays are incoherent: the atom is left outside |r> with no
phase relation to the surviving amplitudes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import brentq

from rydkit.core.basis import Basis
from rydkit.core.operators import Operator
from rydkit.core.state import StateVector, propagate
from rydkit.errors import DegenerateStateError, InvalidModelError
from rydkit.fitting import fit_exponential

BRANCHES = ("detected", "m0", "m1", "g", "other")
UNDETECTED = {"r": ("m1", "other"), "mr": ("m0", "m1", "other")}

# Placeholder lifetime; the branch split is anchored to a 96.1 % detection
# fidelity in r mode (and 93.1 % in mr mode).
DEFAULT_GAMMA = 1.0 / 60.0


@dataclass(frozen=True)
class DecayModel:
    gamma: float = DEFAULT_GAMMA
    branch_detected: float = 0.631
    branch_m0: float = 0.03
    branch_m1: float = 0.039
    branch_g: float = 0.3
    branch_other: float = 0.0

    def __post_init__(self):
        b = self.branches()
        if self.gamma < 0:
            raise InvalidModelError("decay rate must be non-negative")
        if any(v < 0 for v in b.values()) or abs(sum(b.values()) - 1) > 1e-9:
            raise InvalidModelError("branch probabilities must be non-negative and sum to 1")

    def branches(self) -> dict:
        return {
            "detected": self.branch_detected,
            "m0": self.branch_m0,
            "m1": self.branch_m1,
            "g": self.branch_g,
            "other": self.branch_other,
        }

    def detection_fidelity(self, mode: str = "r") -> float:
        """Share of decays registered as loss in the given readout mode."""
        if mode not in UNDETECTED:
            raise ValueError(f"unknown mode {mode!r}")
        b = self.branches()
        return 1.0 - sum(b[k] for k in UNDETECTED[mode])

    @classmethod
    def with_detection(cls, gamma: float, p_det: float) -> "DecayModel":
        """Two-branch model: detected with ``p_det``, otherwise back to m1."""
        return cls(gamma, p_det, 0.0, 1.0 - p_det, 0.0, 0.0)

    @classmethod
    def from_mapping(cls, cfg: dict) -> "DecayModel":
        keys = {
            "gamma_per_us": "gamma",
            "branch_detected": "branch_detected",
            "branch_m0": "branch_m0",
            "branch_m1": "branch_m1",
            "branch_g": "branch_g",
            "branch_other": "branch_other",
        }
        return cls(**{keys[k]: float(v) for k, v in cfg.items() if k in keys})


def decay_operator(op: Operator, decay: DecayModel) -> Operator:
    """``H - i Gamma/2 sum_i n_i``."""
    counts = op.basis.excitation_counts.astype(float)
    return op.with_decay(decay.gamma * counts)


def no_jump_propagate(state: StateVector, op: Operator, decay: DecayModel, duration: float, tol: float = 1e-10) -> StateVector:
    """Unnormalized conditional state; its squared norm is the no-jump probability."""
    return propagate(state, [(decay_operator(op, decay), duration)], tol=tol)


def no_jump_segments(state: StateVector, segments, decay: DecayModel, tol: float = 1e-10) -> StateVector:
    return propagate(state, [(decay_operator(op, decay), d) for op, d in segments], tol=tol)


# ---------------------------------------------------------------- trajectories


@dataclass
class TrajectoryOutcome:
    kind: str  # "survived", "lost", "undetected"
    state: StateVector | None
    weight: float
    level: str | None = None


def _drop_drive(op: Operator, parked_mask: int) -> Operator:
    """Remove couplings that flip any parked site."""
    if op.offdiagonal is None or parked_mask == 0:
        return op
    off = op.offdiagonal.tocoo()
    cfg = op.basis.configs
    keep = ((cfg[off.row] ^ cfg[off.col]) & parked_mask) == 0
    mat = sparse.csr_matrix((off.data[keep], (off.row[keep], off.col[keep])), shape=off.shape)
    return Operator(op.basis, op.diagonal, mat, op.decay)


def sample_trajectories(
    state: StateVector,
    op: Operator,
    decay: DecayModel,
    duration: float,
    n_traj: int,
    seed,
    mode: str = "r",
) -> list[TrajectoryOutcome]:
    """Monte-Carlo wave-function trajectories for a time-independent ``op``.

    Jump times come from the waiting-time distribution of the no-jump
    evolution.  A return to m1 acts as ``|m><r|`` on the decaying site; other
    undetected branches park the atom in a dark level, which removes its drive
    for the rest of the shot.  Detected decays end the shot as loss.
    """
    if op.basis.dim > 256:
        raise ValueError("trajectory oracle is meant for small systems")
    rng = np.random.default_rng(seed)
    basis = op.basis
    n = basis.n_sites
    occ = basis.occupations.astype(float)
    b = decay.branches()
    names = list(BRANCHES)
    probs = np.array([b[k] for k in names])
    undetected = UNDETECTED[mode]
    cache: dict = {}

    def heff(mask):
        if mask not in cache:
            h = decay_operator(_drop_drive(op, mask), decay).to_dense()
            cache[mask] = h
        return cache[mask]

    out = []
    psi0 = state.normalized().amplitudes
    weight = 1.0 / n_traj
    for _ in range(n_traj):
        psi = psi0.copy()
        t = 0.0
        mask = 0
        lost = None
        level = None
        while True:
            evals, right = np.linalg.eig(heff(mask))
            coeff = np.linalg.solve(right, psi)

            def evolved(s):
                return right @ (np.exp(-1j * evals * s) * coeff)

            def norm2(s):
                v = evolved(s)
                return float(np.vdot(v, v).real)

            r = rng.random()
            remaining = duration - t
            if norm2(remaining) >= r:
                psi = evolved(remaining)
                break
            tj = brentq(lambda s: norm2(s) - r, 0.0, remaining, xtol=1e-12 * max(duration, 1.0))
            psi = evolved(tj)
            psi /= np.linalg.norm(psi)
            t += tj
            # the decaying site is chosen by its Rydberg population
            pops = occ.T @ (np.abs(psi) ** 2)
            site = rng.choice(n, p=pops / pops.sum())
            branch = names[rng.choice(len(names), p=probs)]
            if branch not in undetected:
                lost = branch
                break
            bit = 1 << (n - 1 - site)
            jumped = np.zeros_like(psi)
            src = (basis.configs & bit) != 0
            jumped[basis.indices(basis.configs[src] ^ bit)] = psi[src]
            psi = jumped / np.linalg.norm(jumped)
            level = branch
            if branch != "m1":
                mask |= bit
        if lost is not None:
            out.append(TrajectoryOutcome("lost", None, weight, lost))
            continue
        final = StateVector(basis, psi / np.linalg.norm(psi), state.time + duration)
        kind = "survived" if level is None else "undetected"
        out.append(TrajectoryOutcome(kind, final, weight, level))
    return out


def postselected_populations(outcomes: list[TrajectoryOutcome]) -> tuple[np.ndarray, float]:
    """Mean configuration populations over shots without detected loss, and acceptance."""
    kept = [o for o in outcomes if o.kind != "lost"]
    total = sum(o.weight for o in outcomes)
    if not kept:
        raise DegenerateStateError("every trajectory was discarded")
    w = np.array([o.weight for o in kept])
    pops = np.array([np.abs(o.state.amplitudes) ** 2 for o in kept])
    return (w[:, None] * pops).sum(axis=0) / w.sum(), float(w.sum() / total)


# ------------------------------------------------------- single-atom decay curves


def postselected_rydberg_population(p0: float, gamma: float, p_det: float, t) -> np.ndarray:
    """P_r(t) of sqrt(1-P0)|m> + sqrt(P0)|r> after discarding detected decays (Omega = 0)."""
    t = np.asarray(t, dtype=float)
    survive = np.exp(-gamma * t)
    return p0 * survive / (1.0 - p_det * p0 * (1.0 - survive))


def single_atom_curve_nojump(p0: float, gamma: float, p_det: float, t) -> np.ndarray:
    """Same curve from the no-jump state plus the undetected admixture."""
    from rydkit.core.basis import enumerate_basis

    basis = enumerate_basis(1)
    psi = StateVector(basis, np.array([np.sqrt(1 - p0), np.sqrt(p0)], dtype=complex))
    op = Operator(basis, np.zeros(2))
    model = DecayModel.with_detection(gamma, p_det)
    out = []
    for ti in np.atleast_1d(t):
        nj = no_jump_propagate(psi, op, model, float(ti))
        s = nj.norm2()
        pr = abs(nj.amplitudes[1]) ** 2
        out.append(pr / (s + (1 - p_det) * (1 - s)))
    return np.asarray(out)


def _fit_window(t, y):
    """Points up to the first 1/e of the curve (at least three)."""
    keep = y >= y[0] / np.e
    last = np.argmin(keep) if not keep.all() else len(y)
    last = max(last, 3)
    return t[:last], y[:last]


@dataclass
class DecayFit:
    p0: float
    tau: float
    tau_err: float
    curve: np.ndarray


def shot_sigma(y, shots: int) -> np.ndarray:
    """Binomial standard error, floored at one count."""
    y = np.asarray(y, dtype=float)
    return np.sqrt(np.maximum(y * (1 - y), 1.0 / shots) / shots)


def fit_decay_curve(t, y, sigma=None, window: bool = True) -> tuple[float, float]:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if window:
        tt, yy = _fit_window(t, y)
        sig = None if sigma is None else np.asarray(sigma)[: tt.size]
    else:
        tt, yy, sig = t, y, sigma
    fit = fit_exponential(tt, yy, sig)
    return fit.params["tau"], fit.errors["tau"]


def decay_curve_analysis(
    p0_grid,
    gamma: float,
    p_det: float,
    t_grid,
    shots: int | None = None,
    seed=0,
) -> list[DecayFit]:
    """Fit ``P_r(0) exp(-t/tau)`` to post-selected curves for each P0.

    Without ``shots`` the exact curve is fitted.  With ``shots`` every time
    point is sampled binomially and the fit is weighted by the shot noise.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    rng = np.random.default_rng(seed)
    results = []
    for p0 in p0_grid:
        if not 0 <= p0 <= 1:
            raise ValueError("P0 must lie in [0, 1]")
        curve = single_atom_curve_nojump(p0, gamma, p_det, t_grid)
        if shots:
            y = rng.binomial(shots, np.clip(curve, 0, 1)) / shots
            tau, err = fit_decay_curve(t_grid, y, shot_sigma(y, shots))
            curve = y
        else:
            tau, err = fit_decay_curve(t_grid, curve)
        results.append(DecayFit(float(p0), tau, err, curve))
    return results


def implied_detection_fidelity(
    tau: float, gamma: float, t_grid, p0: float = 1.0, tau_err: float = 0.0, shots: int | None = None
) -> dict:
    """Invert a fitted lifetime back into a detection fidelity.

    ``model`` refits the exact post-selected curve on the same grid with the
    same weighting (``shots``), so it is consistent with the fitting
    procedure; ``naive`` uses the initial rate Gamma (1 - p P0) only.
    """
    t_grid = np.asarray(t_grid, dtype=float)

    def tau_of(p):
        curve = postselected_rydberg_population(p0, gamma, p, t_grid)
        return fit_decay_curve(t_grid, curve, shot_sigma(curve, shots) if shots else None)[0]

    out = {"naive": 1.0 - 1.0 / (gamma * tau * p0) if np.isfinite(tau) else 1.0}
    if not np.isfinite(tau):
        out.update(model=1.0, model_err=0.0)
        return out
    lo, hi = 0.0, 1.0 - 1e-9
    f = lambda p: tau_of(p) - tau  # noqa: E731
    if f(lo) > 0:
        p = 0.0
    elif f(hi) < 0:
        p = 1.0
    else:
        p = brentq(f, lo, hi, xtol=1e-12)
    err = 0.0
    if tau_err > 0 and 0 < p < 1:
        h = 1e-4
        slope = (tau_of(min(p + h, hi)) - tau_of(max(p - h, 0.0))) / (min(p + h, hi) - max(p - h, 0.0))
        err = tau_err / abs(slope)
    out.update(model=float(p), model_err=float(err))
    return out


def decay_csv(fits: list[DecayFit]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["P0", "tau_us", "tau_err"])
    for f in fits:
        w.writerow([repr(f.p0), repr(float(f.tau)), repr(float(f.tau_err))])
    return buf.getvalue()


# ------------------------------------------------------------ many-body branch


@dataclass
class PostselectedResult:
    fidelity: float  # loss-detected
    acceptance: float
    raw_fidelity: float  # without post-selection
    no_jump_probability: float
    closed_fidelity: float | None = None


def postselected_manybody_evolution(
    segments,
    basis: Basis,
    target_vector: np.ndarray,
    decay: DecayModel,
    mode: str = "r",
    fidelity_fn=None,
    tol: float = 1e-10,
) -> PostselectedResult:
    """Loss-detected fidelity and acceptance for a piecewise-constant drive.

    ``segments`` is a list of ``(Operator, duration)``.  Shots with an
    undetected decay are kept with fidelity zero.  With no jump probability s
    and detection fidelity p the kept fraction is ``s + (1 - p)(1 - s)``.
    ``fidelity_fn(psi)`` overrides the overlap with ``target_vector``.
    """
    psi0 = StateVector(basis, np.eye(basis.dim, 1, dtype=complex)[:, 0])
    nj = no_jump_segments(psi0, segments, decay, tol)
    s = nj.norm2()
    p = decay.detection_fidelity(mode)
    if s <= 0:
        raise DegenerateStateError("no-jump probability vanished")
    psi = nj.amplitudes / np.sqrt(s)
    if fidelity_fn is None:
        f_nj = float(abs(np.vdot(target_vector, psi)) ** 2)
    else:
        f_nj = float(fidelity_fn(psi))
    # without decay nothing is discarded; avoid rounding in the norm
    acceptance = 1.0 if decay.gamma == 0 else min(1.0, s + (1 - p) * (1 - s))
    return PostselectedResult(
        fidelity=s * f_nj / acceptance,
        acceptance=float(acceptance),
        raw_fidelity=s * f_nj,
        no_jump_probability=float(s),
    )


def pulse_segments(terms, pulse) -> list:
    """Segments ``(H_j, dt)`` of a pulse for a set of Rydberg terms."""
    return [(terms.operator(o, d), pulse.dt) for o, d in zip(pulse.omega, pulse.delta)]
