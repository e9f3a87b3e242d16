import numpy as np
import pytest
from scipy import sparse

from rydkit.core import Operator, StateVector, enumerate_basis, propagate, sigma_x_matrix
from rydkit.decay import (
    DecayModel,
    decay_csv,
    decay_curve_analysis,
    implied_detection_fidelity,
    no_jump_propagate,
    postselected_manybody_evolution,
    postselected_populations,
    postselected_rydberg_population,
    pulse_segments,
    sample_trajectories,
    single_atom_curve_nojump,
)
from rydkit.errors import InvalidModelError
from rydkit.grape import default_target, linear_ramp_pulse
from rydkit.rydberg import InteractionModel, ladder, rydberg_terms


def idle(basis):
    return Operator(basis, np.zeros(basis.dim), sparse.csr_matrix((basis.dim, basis.dim)))


def superposition(p0):
    basis = enumerate_basis(1)
    return StateVector(basis, np.array([np.sqrt(1 - p0), np.sqrt(p0)], dtype=complex))


def test_default_branches_give_detection_fidelities():
    model = DecayModel()
    assert model.detection_fidelity("r") == pytest.approx(0.961)
    assert model.detection_fidelity("mr") == pytest.approx(0.931)
    with pytest.raises(InvalidModelError):
        DecayModel(branch_detected=0.9)


def test_ground_state_does_not_decay():
    basis = enumerate_basis(1)
    out = no_jump_propagate(StateVector.from_config(basis, 0), idle(basis), DecayModel(gamma=0.3), 50.0)
    assert out.norm2() == pytest.approx(1.0, abs=1e-12)


def test_rydberg_norm_decays():
    basis = enumerate_basis(1)
    out = no_jump_propagate(StateVector.from_config(basis, 1), idle(basis), DecayModel(gamma=0.25), 4.0)
    assert abs(out.norm2() - np.exp(-1)) < 1e-10


def test_postselected_curve_matches_trajectories():
    gamma, p0, t = 0.1, 0.6, 7.0
    psi = superposition(p0)
    outcomes = sample_trajectories(psi, idle(psi.basis), DecayModel.with_detection(gamma, 1.0), t, 4000, seed=5)
    pops, acceptance = postselected_populations(outcomes)
    exact = postselected_rydberg_population(p0, gamma, 1.0, t)
    n_kept = acceptance * 4000
    sigma = np.sqrt(exact * (1 - exact) / n_kept)
    assert abs(pops[1] - exact) < 5 * sigma
    assert abs(acceptance - (1 - p0 * (1 - np.exp(-gamma * t)))) < 5 * np.sqrt(0.25 / 4000)


def test_nojump_curve_matches_closed_form():
    t = np.linspace(0, 80, 9)
    for p_det in (1.0, 0.961, 0.5):
        for p0 in (0.25, 1.0):
            curve = single_atom_curve_nojump(p0, 1 / 60, p_det, t)
            assert np.allclose(curve, postselected_rydberg_population(p0, 1 / 60, p_det, t), atol=1e-10)


def test_perfect_detection_full_rydberg_never_decays():
    t = np.linspace(0, 100, 11)
    assert np.allclose(postselected_rydberg_population(1.0, 1 / 60, 1.0, t), 1.0)
    fits = decay_curve_analysis([1.0], 1 / 60, 1.0, t)
    assert fits[0].tau == np.inf
    assert "inf" in decay_csv(fits)


def test_small_population_decays_at_gamma():
    gamma = 1 / 60
    t = np.linspace(0, 30, 31)
    fit = decay_curve_analysis([1e-4], gamma, 1.0, t)[0]
    assert fit.tau == pytest.approx(1 / gamma, rel=2e-3)


def test_detection_fidelity_round_trip():
    gamma = 1 / 60
    t = np.linspace(0, 120, 25)
    fit = decay_curve_analysis([1.0], gamma, 0.961, t)[0]
    assert np.isfinite(fit.tau)
    implied = implied_detection_fidelity(fit.tau, gamma, t, tau_err=fit.tau_err)
    assert implied["model"] == pytest.approx(0.961, abs=1e-6)


def test_tau_grows_with_initial_population():
    fits = decay_curve_analysis([0.25, 0.5, 0.75, 1.0], 1 / 60, 0.961, np.linspace(0, 120, 25))
    taus = [f.tau for f in fits]
    assert taus == sorted(taus)


def blockaded_pair():
    basis = enumerate_basis(2, "constrained", [(0, 1)])
    omega = 2 * np.pi * 3
    op = Operator(basis, np.zeros(3), 0.5 * omega * sigma_x_matrix(basis))
    t = np.pi / (np.sqrt(2) * omega)
    target = np.array([0, 1, 1]) / np.sqrt(2)
    return basis, op, t, target


def test_no_decay_gives_full_acceptance():
    basis, op, t, target = blockaded_pair()
    res = postselected_manybody_evolution([(op, t)], basis, target, DecayModel(gamma=0.0))
    closed = propagate(StateVector.from_config(basis, 0), [(op, t)])
    assert res.acceptance == 1.0
    assert res.fidelity == pytest.approx(abs(np.vdot(target, closed.amplitudes)) ** 2, abs=1e-12)


def test_small_decay_acceptance_tracks_rydberg_time():
    basis, op, t, target = blockaded_pair()
    gamma = 0.05
    res = postselected_manybody_evolution([(op, t)], basis, target, DecayModel.with_detection(gamma, 1.0))
    assert res.fidelity > 1 - 1e-3
    # the excitation is sin^2 of the enhanced Rabi angle, averaging 1/2 over the pulse
    assert res.acceptance == pytest.approx(np.exp(-gamma * t / 2), abs=1e-4)
    outcomes = sample_trajectories(StateVector.from_config(basis, 0), op, DecayModel.with_detection(gamma, 1.0), t, 3000, 1)
    _, acc_mc = postselected_populations(outcomes)
    assert abs(acc_mc - res.acceptance) < 5 * np.sqrt(res.acceptance * (1 - res.acceptance) / 3000) + 1e-3


def test_duration_trade_off():
    geo = ladder(4)
    basis = enumerate_basis(8)
    target = default_target(geo, basis)
    terms = rydberg_terms(geo, InteractionModel(), basis)
    model = DecayModel.with_detection(0.2, 1.0)
    rows = []
    for duration in (0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0):
        pulse = linear_ramp_pulse(duration, 150)
        rows.append(postselected_manybody_evolution(pulse_segments(terms, pulse), basis, target.vector, model))
    acc = [r.acceptance for r in rows]
    raw = [r.raw_fidelity for r in rows]
    assert all(a > b for a, b in zip(acc, acc[1:]))
    assert rows[-1].fidelity > rows[0].fidelity
    peak = int(np.argmax(raw))
    assert 0 < peak < len(raw) - 1
