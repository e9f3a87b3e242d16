"""Acceptance criteria 1-10.  Each test prints one PASS/FAIL line.

Criteria 4 and 5 share a pair of optimized N=8 pulses and take about a
quarter of an hour; they carry the ``slow`` marker.
"""

from dataclasses import replace

import numpy as np
import pytest

from rydkit.analysis import (
    bell_fidelity,
    coherence_lower_bound,
    correct_measurement,
    g2,
    ghz_fidelity_exact,
    oscillation_amplitude,
    parity_closed_form,
    parity_dense,
    parity_scan,
    sample_shots,
    table_measurement_matrix,
    z2_population,
)
from rydkit.core import Operator, StateVector, enumerate_basis, propagate, sigma_x_matrix
from rydkit.decay import (
    DecayModel,
    decay_curve_analysis,
    fit_decay_curve,
    implied_detection_fidelity,
    postselected_populations,
    pulse_segments,
    sample_trajectories,
    shot_sigma,
)
from rydkit.fitting import fit_rb
from rydkit.gate import (
    NoiseModel,
    correlated_loss_stats,
    error_breakdown,
    gate_infidelity,
    run_grb,
    simulate_gate_fidelity,
    synthesize_tog,
)
from rydkit.gate.tog import DEFAULT_BLOCKADE_RATIO, DEFAULT_GATE_OMEGA
from rydkit.grape import GrapeConfig, default_target, grape_cost, grape_gradient, linear_ramp_pulse, optimize_pulse
from rydkit.mpp import TrapPair, calibrate_drive, simulate_mpp, sweep_inhomogeneity
from rydkit.rydberg import (
    DEFAULT_OMEGA,
    DisorderSampler,
    InteractionModel,
    build_hamiltonian,
    chain,
    ladder,
    rydberg_terms,
    sample_disordered_geometry,
)


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for a criterion, then assert it."""

    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return report


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    basis = enumerate_basis(n)
    v = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    return StateVector(basis, v / np.linalg.norm(v))


def test_criterion_1_exact_oracles(verdict):
    basis = enumerate_basis(2, "constrained", [(0, 1)])
    omega = DEFAULT_OMEGA
    op = Operator(basis, np.zeros(basis.dim), 0.5 * omega * sigma_x_matrix(basis))
    evals = np.linalg.eigvalsh(op.to_dense())
    enhancement = (evals.max() - evals.min()) / omega
    out = propagate(StateVector.from_config(basis, 0), [(op, np.pi / (np.sqrt(2) * omega))])
    bell = abs(np.vdot(np.array([0, 1, 1]) / np.sqrt(2), out.amplitudes)) ** 2

    geo = ladder(3)
    target = default_target(geo, enumerate_basis(6))
    psi = StateVector(target.basis, target.vector)
    g2s = [g2(psi, geo, 1, 0), g2(psi, geo, 0, 1), g2(psi, geo, 1, 1), g2(psi, geo, 2, 0)]
    scan = parity_scan(psi)
    errors = {
        "enhancement": abs(enhancement - np.sqrt(2)),
        "bell": 1 - bell,
        "g2": max(abs(abs(x) - 0.25) for x in g2s),
        "z2": abs(z2_population(psi, geo) - 1),
        "parity": abs(np.mean(parity_closed_form(psi, np.linspace(0, 2 * np.pi, 64, endpoint=False))) - 1),
        "bound": abs(coherence_lower_bound(scan, psi.probabilities(), target) - 1),
        "fidelity": abs(ghz_fidelity_exact(psi, target).fidelity - 1),
    }
    ok = errors["enhancement"] < 1e-9 and errors["bell"] < 1e-9
    ok = ok and all(errors[k] < 1e-10 for k in ("g2", "z2", "parity", "bound", "fidelity"))
    verdict(1, ok, " ".join(f"{k}={v:.1e}" for k, v in errors.items()))


def test_criterion_2_brute_force(verdict):
    omega = DEFAULT_OMEGA
    a = 3.7
    model = InteractionModel(c6=1e4 * omega * a**6)
    full = enumerate_basis(2)
    cons = enumerate_basis(2, "constrained", [(0, 1)])
    t = np.pi / (np.sqrt(2) * omega)
    out_full = propagate(StateVector.from_config(full, 0), [(build_hamiltonian(chain(2, a), model, omega, 0.0, full), t)])
    out_cons = propagate(StateVector.from_config(cons, 0), [(build_hamiltonian(chain(2, a), model, omega, 0.0, cons), t)])
    rr = abs(out_full.amplitude("11")) ** 2
    pop_gap = max(abs(abs(out_full.amplitude(s)) ** 2 - abs(out_cons.amplitude(s)) ** 2) for s in ("00", "01", "10"))

    phis = np.linspace(0, 2 * np.pi, 9)
    parity_gap = max(
        np.max(np.abs(parity_closed_form(psi, phis) - parity_dense(psi, phis)))
        for psi in (random_state(n, n) for n in (2, 4, 6))
    )

    geo = ladder(3)
    psi = random_state(6, 3)
    n_shots = 100_000
    shots = sample_shots(psi, n_shots, np.random.default_rng(0))
    sigma = 0.5 / np.sqrt(n_shots)
    g2_gap = max(abs(g2(shots, geo, *d) - g2(psi, geo, *d)) / sigma for d in ((1, 0), (0, 1), (1, 1)))

    ok = rr < 1e-4 and pop_gap < 1e-4 and parity_gap < 1e-10 and g2_gap < 5
    verdict(2, ok, f"|rr|^2={rr:.1e} pop_gap={pop_gap:.1e} parity_gap={parity_gap:.1e} g2_dev={g2_gap:.2f} sigma")


def fd_gradient(pulse, geo, model, target, cfg, comps, h=1e-5):
    out = []
    for j in comps:
        d = pulse.delta.copy()
        d[j] += h
        cp, _ = grape_cost(pulse.with_delta(d), geo, model, target, cfg)
        d[j] -= 2 * h
        cm, _ = grape_cost(pulse.with_delta(d), geo, model, target, cfg)
        out.append((cp - cm) / (2 * h))
    return np.array(out)


def test_criterion_3_gradient_check(verdict):
    model = InteractionModel()
    worst = 0.0
    cases = [
        (ladder(2), GrapeConfig(n_samples=1, delta_r_nm=0)),
        (ladder(2), GrapeConfig(n_samples=3, delta_r_nm=60, seed=4)),
        (ladder(3), GrapeConfig(n_samples=1, delta_r_nm=0)),
        (ladder(3), GrapeConfig(n_samples=2, delta_r_nm=74, seed=9)),
    ]
    rng = np.random.default_rng(0)
    for geo, cfg in cases:
        target = default_target(geo)
        pulse = linear_ramp_pulse(0.6, 60)
        pulse = pulse.with_delta(pulse.delta + rng.normal(0, 2.0, pulse.n_segments))
        comps = np.arange(0, 60, 5)
        exact = grape_gradient(pulse, geo, model, target, cfg)[comps]
        fd = fd_gradient(pulse, geo, model, target, cfg, comps)
        tol = np.maximum(1e-4 * np.abs(fd), 1e-7)
        worst = max(worst, float(np.max(np.abs(exact - fd) / tol)))
    verdict(3, worst <= 1, f"worst error / tolerance = {worst:.3f} over {len(cases)} systems")


ROBUST_DURATION = 3.0
ROBUST_ITER = 150


@pytest.fixture(scope="module")
def optimized_pulses():
    geo = ladder(4)
    model = InteractionModel()
    target = default_target(geo)
    start = linear_ramp_pulse(ROBUST_DURATION)
    clean = optimize_pulse(start, geo, model, target, GrapeConfig(n_samples=1, delta_r_nm=0, max_iter=ROBUST_ITER))
    robust = optimize_pulse(
        start, geo, model, target, GrapeConfig(n_samples=30, delta_r_nm=60, max_iter=ROBUST_ITER, seed=1)
    )
    return geo, model, target, clean.pulse, robust.pulse


@pytest.mark.slow
def test_criterion_4_robustness(verdict, optimized_pulses):
    geo, model, target, clean, robust = optimized_pulses
    cfg = GrapeConfig(n_samples=200, delta_r_nm=74, seed=12345, eta=0)
    _, f_clean = grape_cost(clean, geo, model, target, cfg)
    _, f_robust = grape_cost(robust, geo, model, target, cfg)
    gap = f_robust.mean() - f_clean.mean()
    detail = (
        f"F(robust)={f_robust.mean():.3f}({f_robust.std() / np.sqrt(f_robust.size):.3f}) "
        f"F(clean)={f_clean.mean():.3f}({f_clean.std() / np.sqrt(f_clean.size):.3f}) gap={100 * gap:.1f} pp"
    )
    verdict(4, gap >= 0.05, detail)


@pytest.mark.slow
def test_criterion_5_bound_saturation(verdict, optimized_pulses):
    geo, model, target, _, robust = optimized_pulses
    basis = target.basis
    ia, ib = target.indices
    sampler = DisorderSampler(74, 7)
    gaps, osc = [], []
    for k in range(20):
        terms = rydberg_terms(sample_disordered_geometry(geo, sampler, k), model, basis)
        psi = propagate(StateVector.from_config(basis, 0), pulse_segments(terms, robust))
        exact = 2 * np.real(psi.amplitudes[ia] * np.conj(psi.amplitudes[ib]))
        gaps.append(exact - coherence_lower_bound(parity_scan(psi), psi.probabilities(), target))
        osc.append(max(oscillation_amplitude(psi, d)[1] for d in range(2, geo.n_sites + 1, 2)))
    ok = max(np.abs(gaps)) < 0.05 and max(osc) < 1e-2
    verdict(5, ok, f"max bound gap={max(np.abs(gaps)):.1e} max oscillation bound={max(osc):.1e} over 20 instances")


def trajectory_curve(p0, model, t_grid, n_traj, seed):
    """Post-selected Rydberg population from the jump-trajectory oracle."""
    basis = enumerate_basis(1)
    psi = StateVector(basis, np.array([np.sqrt(1 - p0), np.sqrt(p0)], dtype=complex))
    idle = Operator(basis, np.zeros(2))
    ys, kept = [], []
    for j, t in enumerate(t_grid):
        if t == 0:
            ys.append(p0)
            kept.append(n_traj)
            continue
        pops, acc = postselected_populations(sample_trajectories(psi, idle, model, float(t), n_traj, [seed, j]))
        ys.append(pops[1])
        kept.append(acc * n_traj)
    return np.array(ys), np.array(kept)


def test_criterion_6_decay(verdict):
    gamma, p_det = 1 / 60, 0.961
    model = DecayModel.with_detection(gamma, p_det)
    t_grid = np.linspace(0, 120, 13)
    fits = decay_curve_analysis([0.25, 0.5, 0.75, 1.0], gamma, p_det, t_grid)
    parts, ok = [], True
    for fit in fits:
        y, kept = trajectory_curve(fit.p0, model, t_grid, 2000, 11)
        # same unweighted fit as the exact curve; the curve is not a pure
        # exponential, so a differently weighted fit would shift tau
        tau_mc, _ = fit_decay_curve(t_grid, y)
        boot = np.random.default_rng(1)
        resampled = [fit_decay_curve(t_grid, boot.binomial(kept.astype(int), y) / kept.astype(int))[0] for _ in range(200)]
        err_mc = float(np.std(resampled))
        dev = abs(tau_mc - fit.tau) / err_mc
        ok = ok and dev < 3
        parts.append(f"P0={fit.p0}: tau={fit.tau:.0f} vs {tau_mc:.0f}({err_mc:.0f})")

    shots = 1000
    noisy = decay_curve_analysis([1.0], gamma, p_det, t_grid, shots=shots, seed=3)[0]
    implied = implied_detection_fidelity(noisy.tau, gamma, t_grid, tau_err=noisy.tau_err, shots=shots)
    round_trip = abs(implied["model"] - p_det) <= max(implied["model_err"], 1e-6)
    ok = ok and np.isfinite(noisy.tau) and round_trip
    parts.append(f"implied p_det={implied['model']:.4f}({implied['model_err']:.4f})")
    verdict(6, ok, "; ".join(parts))


def test_criterion_7_gate_suite(verdict):
    omega = DEFAULT_GATE_OMEGA
    tog = synthesize_tog(omega, DEFAULT_BLOCKADE_RATIO * omega)
    ideal = gate_infidelity(tog)

    decay = DecayModel()
    raw = simulate_gate_fidelity(tog, decay=decay, n_states=200).infidelity
    detected = simulate_gate_fidelity(tog, decay=decay, loss_detection=True, n_states=200).infidelity

    depths = np.array([1, 10, 20, 40, 60, 80])
    y = 0.75 * 0.99**depths + 0.25
    noiseless = abs(fit_rb(depths, y, "quarter")["p"] - 0.99)
    rng = np.random.default_rng(4)
    errs = []
    for _ in range(20):
        obs = rng.binomial(300, y) / 300
        errs.append(abs(fit_rb(depths, obs, "quarter", shot_sigma(obs, 300))["p"] - 0.99) / 0.99)
    noisy = float(np.median(errs))

    noise = NoiseModel.reference_scale(n_realizations=20, seed=0)
    data = run_grb(tog, noise, decay, [1, 10, 20, 40, 60], instances=10, seed=0)
    fids = {m: data.fidelity(m) for m in ("raw", "erasure-decay", "loss")}
    ordered = fids["raw"] < fids["erasure-decay"] < fids["loss"]

    # reported against the published theory totals, not asserted
    total_raw = error_breakdown(tog, noise, decay, False, 200)["total"]
    total_det = error_breakdown(tog, noise, decay, True, 200)["total"]

    ok = ideal < 1e-4 and detected < 0.1 * raw and noiseless < 1e-10 and noisy < 0.01 and ordered
    detail = (
        f"ideal={ideal:.1e} loss/raw={detected / raw:.3f} rb_noiseless={noiseless:.1e} rb_300shots={100 * noisy:.2f}% "
        + " ".join(f"F[{m}]={100 * f:.2f}%" for m, f in fids.items())
        + f" totals={100 * total_raw:.2f}%/{100 * total_det:.3f}% (reference theory totals 0.35%/0.019%)"
    )
    verdict(7, ok, detail)


def test_criterion_8_correlated_loss(verdict):
    omega = DEFAULT_GATE_OMEGA
    tog = synthesize_tog(omega, DEFAULT_BLOCKADE_RATIO * omega)
    stats = correlated_loss_stats(tog, DecayModel())
    ok = stats.p_corr > 10 * stats.p_single**2 and stats.p_single / 10 < stats.p_corr < 10 * stats.p_single
    verdict(8, ok, f"p_single={stats.p_single:.2e} p_corr={stats.p_corr:.2e} p_single^2={stats.p_single**2:.2e}")


def test_criterion_9_measurement(verdict):
    counts = np.array([120.0, 30.0, 45.0, 805.0])
    m = table_measurement_matrix()
    mm = np.kron(m, m)
    round_trip = float(np.max(np.abs(correct_measurement(mm @ counts, m, 2).counts - counts)))

    fid = 0.95
    pops = np.array([fid / 2 + (1 - fid) / 4, (1 - fid) / 4, (1 - fid) / 4, fid / 2 + (1 - fid) / 4])
    scans = []
    for phi in np.linspace(0, np.pi, 8, endpoint=False):
        par = fid * np.cos(2 * phi)
        scans.append(np.array([1 + par, 1 - par, 1 - par, 1 + par]) / 4)
    raw = bell_fidelity(mm @ pops, [mm @ s for s in scans])
    fixed = {}
    for flip in (True, False):
        ms = table_measurement_matrix(flip)
        corr = lambda c: correct_measurement(c, ms, 2).counts  # noqa: E731
        fixed[flip] = bell_fidelity(corr(mm @ pops), [corr(mm @ s) for s in scans])
    shift = abs(fixed[False] - raw)
    ok = round_trip < 1e-8 and fixed[True] > raw and shift < 3e-3
    verdict(9, ok, f"round_trip={round_trip:.1e} raw={raw:.4f} corrected={fixed[True]:.4f} spin-flip-free shift={shift:.1e}")


def test_criterion_10_mpp(verdict):
    traps = TrapPair()
    peak = calibrate_drive(traps)
    magic = simulate_mpp(replace(traps, omega_drive=peak)).infidelity

    rows = sweep_inhomogeneity(traps)
    minima_ok = True
    for ratio in sorted({r.omega_ratio for r in rows}):
        sub = [r for r in rows if r.omega_ratio == ratio]
        minima_ok = minima_ok and min(sub, key=lambda r: r.infidelity).delta_m == 0.0

    base = TrapPair(omega_m=1.1 * traps.omega_g, delta_m=0.03)
    stability = abs(simulate_mpp(base).infidelity - simulate_mpp(replace(base, n_levels=25)).infidelity)
    ok = magic < 1e-8 and minima_ok and stability < 1e-6
    verdict(10, ok, f"magic={magic:.1e} grid={len(rows)} points, minimum at delta_m=0: {minima_ok} n_levels 15->25={stability:.1e}")
