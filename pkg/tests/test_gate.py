from dataclasses import replace

import numpy as np
import pytest

from rydkit.decay import DecayModel
from rydkit.errors import IntegrationError
from rydkit.gate import (
    CHANNELS,
    DensityMatrix4L,
    JumpSet,
    NoiseModel,
    Spectrum,
    closed_unitary,
    clifford_group,
    correlated_loss_stats,
    gate_infidelity,
    hamiltonian,
    master_equation_step,
    run_grb,
    simulate_gate_fidelity,
    synthesize_tog,
)
from rydkit.gate.model import COMPUTATIONAL, M0, M1, R, pair_index
from rydkit.gate.tog import DEFAULT_BLOCKADE_RATIO, DEFAULT_GATE_OMEGA, target_unitary

OMEGA = DEFAULT_GATE_OMEGA


@pytest.fixture(scope="module")
def tog_inf():
    return synthesize_tog(OMEGA)


@pytest.fixture(scope="module")
def tog():
    return synthesize_tog(OMEGA, DEFAULT_BLOCKADE_RATIO * OMEGA)


def idle_h():
    return np.zeros((16, 16), dtype=complex)


def test_idle_master_step_is_identity():
    rho = DensityMatrix4L.pure(np.ones(16) / 4)
    out = master_equation_step(rho, idle_h(), JumpSet(), 0.3)
    assert np.allclose(out.rho, rho.rho, atol=1e-14)
    assert out.time == pytest.approx(0.3)


def test_double_rydberg_decay():
    gamma = 0.7
    rho = DensityMatrix4L.basis_state(R, R)
    for _ in range(10):
        rho = master_equation_step(rho, idle_h(), JumpSet({"d": gamma}), 0.1)
    assert abs(rho.population(R, R) - np.exp(-2 * gamma)) < 1e-8
    assert abs(rho.trace() - 1) < 1e-10


def test_refill_follows_rate_equation():
    gamma = 0.4
    rho = DensityMatrix4L.basis_state(R, M0)
    for _ in range(20):
        rho = master_equation_step(rho, idle_h(), JumpSet({"m0": gamma}), 0.1)
    assert abs(rho.population(M0, M0) - (1 - np.exp(-2 * gamma))) < 1e-8
    assert abs(rho.trace() - 1) < 1e-10
    rho.check()


def test_driven_step_keeps_trace():
    h = hamiltonian(np.full(2, OMEGA), 0.3, np.zeros(2), 20.0)
    psi = np.zeros(16, dtype=complex)
    psi[pair_index(M1, M1)] = 1
    rho = DensityMatrix4L.pure(psi)
    jumps = JumpSet.from_decay(DecayModel(gamma=0.05))
    for _ in range(20):
        rho = master_equation_step(rho, h, jumps, 0.05)
    rho.check()


def test_step_failure_raises():
    h = hamiltonian(np.full(2, 1e4), 0.0, np.zeros(2), 1e5)
    rho = DensityMatrix4L.basis_state(M1, M1)
    with pytest.raises(IntegrationError):
        master_equation_step(rho, h, JumpSet({"d": 1e3}), 10.0, max_halvings=1)


def test_ideal_tog_is_cz(tog_inf, tog):
    assert gate_infidelity(tog_inf) < 1e-4
    assert gate_infidelity(tog) < 1e-4
    u = closed_unitary(tog)
    # the uncoupled level is untouched
    assert abs(abs(u[pair_index(M0, M0), pair_index(M0, M0)]) - 1) < 1e-12


def test_tog_makes_bell_state(tog):
    u = closed_unitary(tog)
    plus = np.zeros(16, dtype=complex)
    plus[COMPUTATIONAL] = 0.5
    out = u @ plus
    want = target_unitary(tog) @ plus
    assert abs(np.vdot(want, out)) ** 2 >= 0.9999


def test_finite_blockade_close_to_perfect(tog_inf):
    finite = replace(tog_inf, interaction=DEFAULT_BLOCKADE_RATIO * OMEGA)
    assert abs(gate_infidelity(finite) - gate_infidelity(tog_inf)) < 1e-3


def test_tog_swap_symmetric(tog):
    u = closed_unitary(tog)
    swap = np.zeros((16, 16))
    for a in range(4):
        for b in range(4):
            swap[pair_index(b, a), pair_index(a, b)] = 1
    assert np.allclose(swap @ u @ swap, u, atol=1e-12)


def test_noiseless_simulation(tog):
    res = simulate_gate_fidelity(tog, n_states=50)
    assert res.infidelity < 1e-4


def test_loss_detection_removes_decay_error(tog):
    decay = DecayModel()
    raw = simulate_gate_fidelity(tog, decay=decay, n_states=200)
    det = simulate_gate_fidelity(tog, decay=decay, loss_detection=True, n_states=200)
    assert det.infidelity < 0.1 * raw.infidelity


def test_noise_sampling():
    model = NoiseModel.reference_scale(n_realizations=3, seed=2)
    t = np.linspace(0, 1, 5)
    s1, d1 = model.sample(t, 1)
    s2, d2 = model.sample(t, 1)
    assert np.array_equal(s1, s2) and np.array_equal(d1, d2)
    assert s1.shape == (5, 2)
    quiet_s, quiet_d = model.quiet().sample(t, 0)
    assert np.all(quiet_s == 1) and np.all(quiet_d == 0)
    assert model.only("doppler").doppler == model.doppler
    assert model.only("doppler").ac_intensity == 0
    assert set(CHANNELS) >= {"ac_intensity", "doppler", "dc_field"}


def test_flat_spectrum_rms():
    spec = Spectrum.flat(0.01, (0.01, 10.0), 400)
    assert spec.rms() == pytest.approx(0.01, rel=1e-2)
    traces = np.array([spec.trace(np.array([0.0]), np.random.default_rng(k))[0] for k in range(4000)])
    assert traces.std() == pytest.approx(0.01, rel=0.05)


def test_clifford_group_order():
    group = clifford_group()
    assert len(group) == 24
    for u in group:
        assert np.allclose(u @ u.conj().T, np.eye(2), atol=1e-12)


def test_grb_identity_gate_succeeds():
    data = run_grb(None, None, None, [1, 5, 10], instances=3)
    for mode in ("raw", "erasure-decay", "loss"):
        assert np.allclose(data.success[mode], 1.0, atol=1e-12)


def test_grb_decay_only_ordering(tog):
    data = run_grb(tog, None, DecayModel(), [1, 10, 20, 40], instances=4)
    assert np.all(data.mean("loss") > data.mean("raw"))
    assert data.fidelity("loss") > data.fidelity("erasure-decay") > data.fidelity("raw")
    assert data.to_csv().startswith("depth,instance,detection_mode,success\n")


def test_correlated_loss(tog):
    # without decay only the residual Rydberg population of the pulse is ionized
    none = correlated_loss_stats(tog, DecayModel(gamma=0.0), range(1, 6))
    assert none.p_single < 1e-7 and none.p_corr < 1e-7
    base = correlated_loss_stats(tog, DecayModel(gamma=1 / 60))
    double = correlated_loss_stats(tog, DecayModel(gamma=2 / 60))
    assert base.p_corr > 10 * base.p_single**2
    assert base.p_single / 10 < base.p_corr < 10 * base.p_single
    assert double.p_single / base.p_single == pytest.approx(2, rel=0.1)
    assert double.p_corr / base.p_corr == pytest.approx(2, rel=0.1)
