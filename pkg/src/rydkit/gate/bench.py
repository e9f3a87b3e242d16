"""Gate fidelity under noise, global randomized benchmarking and
correlated-loss statistics for the two-atom CZ."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from rydkit.core.state import haar_random_vectors
from rydkit.decay import DecayModel
from rydkit.fitting import fit_rb
from rydkit.gate.model import COMPUTATIONAL, D, DIM, JumpSet, M0, M1, R, lindblad_slice, pair_index
from rydkit.gate.noise import CHANNELS, NoiseModel
from rydkit.gate.tog import TogPulse, cz_target

DETECTION_MODES = ("raw", "erasure-decay", "loss")
B_MODE = {"raw": "zero", "erasure-decay": "zero", "loss": "quarter"}


def _unit_inputs(indices) -> np.ndarray:
    """E_ij = |i><j| for all pairs of the given 16-level indices."""
    n = len(indices)
    out = np.zeros((n * n, DIM, DIM), dtype=complex)
    for a, i in enumerate(indices):
        for b, j in enumerate(indices):
            out[a * n + b, i, j] = 1
    return out


def evolve_inputs(
    pulse: TogPulse,
    rho_in: np.ndarray,
    jumps: JumpSet,
    scale=None,
    detuning=None,
    drop: frozenset = frozenset(),
) -> np.ndarray:
    """Propagate a stack of input matrices (K, 16, 16) through the pulse for
    a batch of noise realizations; returns (B, K, 16, 16)."""
    if scale is None:
        scale = np.ones((1, pulse.n_slices, 2))
    if detuning is None:
        detuning = np.zeros_like(scale)
    hams = pulse.slice_hamiltonians(scale, detuning)
    rho = np.broadcast_to(rho_in, (hams.shape[0],) + rho_in.shape).copy()
    for s in range(pulse.n_slices):
        rho = lindblad_slice(rho, hams[:, s], jumps, pulse.dt, drop)
    return rho


def ionize(rho: np.ndarray) -> np.ndarray:
    """Convert any Rydberg population of either atom to the lost level d."""
    out = rho.copy()
    for atom in range(2):
        src = np.array([pair_index(R, o) if atom == 0 else pair_index(o, R) for o in range(4)])
        dst = np.array([pair_index(D, o) if atom == 0 else pair_index(o, D) for o in range(4)])
        moved = out[..., src[:, None], src[None, :]].copy()
        out[..., src, :] = 0
        out[..., :, src] = 0
        out[..., dst[:, None], dst[None, :]] += moved
    return out


def _realization_batches(noise: NoiseModel, pulse: TogPulse, chunk: int):
    times = pulse.midpoints()
    if noise.is_quiet():
        yield None, None, 1
        return
    for start in range(0, noise.n_realizations, chunk):
        idx = range(start, min(start + chunk, noise.n_realizations))
        scale, det = noise.sample_batch(times, idx)
        yield scale, det, len(idx)


@dataclass
class GateFidelity:
    mean: float
    std: float
    per_realization: np.ndarray
    loss_detection: bool

    @property
    def infidelity(self) -> float:
        return 1.0 - self.mean


def simulate_gate_fidelity(
    tog: TogPulse,
    noise: NoiseModel | None = None,
    decay: DecayModel | None = None,
    loss_detection: bool = False,
    n_states: int = 1000,
    chunk: int = 50,
) -> GateFidelity:
    """Average fidelity to the compensated CZ over Haar-random m-qubit inputs.

    With ``loss_detection`` the output is projected onto the m-qubit
    manifold and renormalized first.  The mean and std are over noise
    realizations (one realization when the noise model is quiet).
    """
    noise = noise or NoiseModel()
    jumps = JumpSet.from_decay(decay) if decay is not None else JumpSet()
    inputs = _unit_inputs(COMPUTATIONAL)
    psi = haar_random_vectors(4, n_states, np.random.default_rng([noise.seed, 1, 0]))
    coeff = np.einsum("ha,hb->hab", psi, psi.conj()).reshape(n_states, 16)
    ideal = psi @ cz_target(tog.compensation).T
    per = []
    for scale, det, _ in _realization_batches(noise, tog, chunk):
        out = evolve_inputs(tog, inputs, jumps, scale, det)
        block = out[..., COMPUTATIONAL[:, None], COMPUTATIONAL[None, :]]
        overlap = np.einsum("hi,bkij,hj->bkh", ideal.conj(), block, ideal)
        num = np.einsum("hk,bkh->bh", coeff, overlap).real
        if loss_detection:
            tr = np.einsum("bkii->bk", block)
            num = num / np.einsum("hk,bk->bh", coeff, tr).real
        per.append(num.mean(axis=1))
    per = np.concatenate(per)
    return GateFidelity(float(per.mean()), float(per.std()), per, loss_detection)


def error_breakdown(
    tog: TogPulse,
    noise: NoiseModel,
    decay: DecayModel,
    loss_detection: bool = False,
    n_states: int = 1000,
    chunk: int = 50,
) -> dict:
    """Infidelity per error source, each simulated alone, plus the total."""
    report = {}
    base = simulate_gate_fidelity(tog, noise.quiet(), None, loss_detection, n_states, chunk)
    report["pulse"] = base.infidelity
    report["decay"] = simulate_gate_fidelity(tog, noise.quiet(), decay, loss_detection, n_states, chunk).infidelity
    for ch in CHANNELS:
        report[ch] = simulate_gate_fidelity(tog, noise.only(ch), None, loss_detection, n_states, chunk).infidelity
    total = simulate_gate_fidelity(tog, noise, decay, loss_detection, n_states, chunk)
    report["total"] = total.infidelity
    report["total_std"] = total.std
    return report


def breakdown_json(raw: dict, detected: dict) -> str:
    return json.dumps({"without_loss_detection": raw, "with_loss_detection": detected}, indent=2)


# ---------------------------------------------------------------------------
# gRB

# per-atom levels kept between gates once the Rydberg population is ionized
_KEPT = (M0, M1, D)
_KEPT_PAIRS = [pair_index(a, b) for a in _KEPT for b in _KEPT]


def _sector(i16: int) -> tuple:
    return (i16 // 4 == D, i16 % 4 == D)


def _sector_inputs() -> list:
    # block-diagonal in which atoms are lost: 16 + 4 + 4 + 1 inputs
    pairs = []
    for i in _KEPT_PAIRS:
        for j in _KEPT_PAIRS:
            if _sector(i) == _sector(j):
                pairs.append((i, j))
    return pairs


def _to9(rho16: np.ndarray) -> np.ndarray:
    idx = np.array(_KEPT_PAIRS)
    return rho16[..., idx[:, None], idx[None, :]]


@dataclass
class GateChannel:
    """Noise-averaged CZ followed by ionization, acting on 9x9 matrices over
    {m0, m1, d} per atom (row-major vec)."""

    superop: np.ndarray
    unitary4: np.ndarray

    def apply(self, rho9: np.ndarray) -> np.ndarray:
        return (self.superop @ rho9.reshape(-1)).reshape(9, 9)


def gate_channel(
    tog: TogPulse | None,
    noise: NoiseModel | None,
    decay: DecayModel | None,
    drop: frozenset = frozenset(),
    chunk: int = 50,
) -> GateChannel:
    """Average channel of one CZ (``tog=None`` gives the identity gate)."""
    if tog is None:
        return GateChannel(np.eye(81, dtype=complex), np.eye(4, dtype=complex))
    noise = noise or NoiseModel()
    jumps = JumpSet.from_decay(decay) if decay is not None else JumpSet()
    pairs = _sector_inputs()
    inputs = np.zeros((len(pairs), DIM, DIM), dtype=complex)
    for k, (i, j) in enumerate(pairs):
        inputs[k, i, j] = 1
    total = np.zeros((len(pairs), 9, 9), dtype=complex)
    count = 0
    for scale, det, n in _realization_batches(noise, tog, chunk):
        out = ionize(evolve_inputs(tog, inputs, jumps, scale, det, drop))
        total += _to9(out).sum(axis=0)
        count += n
    total /= count
    superop = np.zeros((81, 81), dtype=complex)
    pos = {p: n for n, p in enumerate(_KEPT_PAIRS)}
    for k, (i, j) in enumerate(pairs):
        superop[:, pos[i] * 9 + pos[j]] = total[k].reshape(-1)
    return GateChannel(superop, cz_target(tog.compensation))


def clifford_group() -> list:
    """The 24 single-qubit Cliffords (up to global phase), generated from H and S."""
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    s = np.diag([1, 1j])

    def canon(u):
        k = np.flatnonzero(np.abs(u.reshape(-1)) > 1e-9)[0]
        ph = u.reshape(-1)[k] / abs(u.reshape(-1)[k])
        return np.round(u / ph, 9) + 0.0  # folds -0.0 into 0.0

    group = [np.eye(2, dtype=complex)]
    keys = {canon(group[0]).tobytes()}
    frontier = list(group)
    while frontier:
        nxt = []
        for g in frontier:
            for gen in (h, s):
                u = gen @ g
                key = canon(u).tobytes()
                if key not in keys:
                    keys.add(key)
                    group.append(u)
                    nxt.append(u)
        frontier = nxt
    return group


def _lift3(u2: np.ndarray) -> np.ndarray:
    # act on (m0, m1), leave the lost level alone
    out = np.eye(3, dtype=complex)
    out[:2, :2] = u2
    return out


def _global9(u2: np.ndarray) -> np.ndarray:
    u3 = _lift3(u2)
    return np.kron(u3, u3)


def _depolarize9(rho9: np.ndarray, p: float) -> np.ndarray:
    if p == 0:
        return rho9
    paulis = [np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
    eye3 = np.eye(3)
    for atom in range(2):
        out = (1 - 0.75 * p) * rho9
        for pm in paulis:
            k3 = _lift3(pm)
            k = np.kron(k3, eye3) if atom == 0 else np.kron(eye3, k3)
            out = out + 0.25 * p * k @ rho9 @ k.conj().T
        rho9 = out
    return rho9


@dataclass
class GrbData:
    depths: np.ndarray
    instances: int
    success: dict = field(default_factory=dict)  # mode -> (n_depths, instances)
    echo: bool = False

    def mean(self, mode: str) -> np.ndarray:
        return self.success[mode].mean(axis=1)

    def fit(self, mode: str, b_mode: str | None = None):
        y = self.success[mode]
        d = np.repeat(self.depths, y.shape[1])
        return fit_rb(d, y.reshape(-1), b_mode or B_MODE[mode])

    def fidelity(self, mode: str) -> float:
        return 1.0 - self.fit(mode).params["epg"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["depth", "instance", "detection_mode", "success"])
        for mode, arr in self.success.items():
            for a, depth in enumerate(self.depths):
                for i in range(arr.shape[1]):
                    w.writerow([int(depth), i, mode, repr(float(arr[a, i]))])
        return buf.getvalue()


def run_grb(
    tog: TogPulse | None,
    noise: NoiseModel | None,
    decay: DecayModel | None,
    depths,
    instances: int = 40,
    echo: bool = False,
    detection=DETECTION_MODES,
    seed: int = 0,
    single_qubit_error: float = 0.0,
    chunk: int = 50,
) -> GrbData:
    """Simulate global RB sequences: Clifford, then (CZ, ionize, [X], Clifford)
    per layer, same Clifford on both atoms.  Success is the probability of
    returning to |m0 m0> after an ideal recovery of the tracked ideal
    sequence.  ``tog=None`` replaces the CZ by the identity.
    """
    modes = (detection,) if isinstance(detection, str) else tuple(detection)
    for m in modes:
        if m not in DETECTION_MODES:
            raise ValueError(f"unknown detection mode {m!r}")
    depths = np.asarray(depths, dtype=int)
    full = gate_channel(tog, noise, decay, chunk=chunk)
    no_g = gate_channel(tog, noise, decay, drop=frozenset({"g"}), chunk=chunk) if "erasure-decay" in modes else None
    cliffords = clifford_group()
    x2 = np.array([[0, 1], [1, 0]], dtype=complex)
    result = {m: np.zeros((depths.size, instances)) for m in modes}
    # m-qubit block inside the 9-level space
    alive = np.array([_KEPT_PAIRS.index(pair_index(a, b)) for a in (M0, M1) for b in (M0, M1)])
    for a, depth in enumerate(depths):
        for inst in range(instances):
            rng = np.random.default_rng([seed, int(depth), inst])
            picks = rng.integers(len(cliffords), size=depth + 1)
            start = np.zeros((9, 9), dtype=complex)
            start[alive[0], alive[0]] = 1
            states = {"full": start.copy()}
            if no_g is not None:
                states["no_g"] = start.copy()
            ideal = np.zeros(4, dtype=complex)
            ideal[0] = 1
            layers = [("c", picks[0])]
            for k in range(1, depth + 1):
                if echo and k > 1:
                    layers.append(("x", None))
                layers.append(("g", None))
                layers.append(("c", picks[k]))
            for kind, arg in layers:
                if kind == "g":
                    ideal = full.unitary4 @ ideal
                    states["full"] = full.apply(states["full"])
                    if no_g is not None:
                        states["no_g"] = no_g.apply(states["no_g"])
                    continue
                u2 = cliffords[arg] if kind == "c" else x2
                ideal = np.kron(u2, u2) @ ideal
                g9 = _global9(u2)
                for key in states:
                    states[key] = g9 @ states[key] @ g9.conj().T
                    if kind == "c":
                        states[key] = _depolarize9(states[key], single_qubit_error)
            for m in modes:
                rho = states["no_g" if m == "erasure-decay" else "full"]
                block = rho[np.ix_(alive, alive)]
                hit = float(np.real(ideal.conj() @ block @ ideal))
                if m == "loss":
                    hit /= float(np.trace(block).real)
                elif m == "erasure-decay":
                    hit /= float(np.trace(rho).real)
                result[m][a, inst] = hit
    return GrbData(depths, instances, result, echo)


# ---------------------------------------------------------------------------
# correlated loss


@dataclass
class LossStats:
    p_single: float
    p_corr: float
    gate_counts: np.ndarray
    single_curve: np.ndarray
    corr_curve: np.ndarray


def correlated_loss_stats(tog: TogPulse, decay: DecayModel, gate_counts=range(1, 21)) -> LossStats:
    """Loss probabilities after repeated CZs (each followed by ionization)
    from the maximally mixed m-qubit input; per-gate rates are the slopes of
    linear fits over gate count.

    The decayed level does not interact, so a partner atom whose neighbour
    has decayed mid-gate is driven without blockade and may be left in r,
    which the ionization step then turns into a second loss.
    """
    counts = np.asarray(list(gate_counts), dtype=int)
    channel = gate_channel(tog, None, decay)
    rho = np.zeros((9, 9), dtype=complex)
    alive = [_KEPT_PAIRS.index(pair_index(a, b)) for a in (M0, M1) for b in (M0, M1)]
    for i in alive:
        rho[i, i] = 0.25
    dead0 = [n for n, p in enumerate(_KEPT_PAIRS) if _sector(p) == (True, False)]
    dead1 = [n for n, p in enumerate(_KEPT_PAIRS) if _sector(p) == (False, True)]
    both = [n for n, p in enumerate(_KEPT_PAIRS) if _sector(p) == (True, True)]
    single, corr = [], []
    for n in range(1, counts.max() + 1):
        rho = channel.apply(rho)
        if n in counts:
            pops = np.real(np.diag(rho))
            single.append(pops[dead0].sum() + pops[dead1].sum())
            corr.append(pops[both].sum())
    single = np.array(single)
    corr = np.array(corr)
    p_single = float(np.polyfit(counts, single, 1)[0])
    p_corr = float(np.polyfit(counts, corr, 1)[0])
    return LossStats(max(p_single, 0.0), max(p_corr, 0.0), counts, single, corr)
