"""Two-atom CZ gate simulation."""

from rydkit.gate.bench import (
    DETECTION_MODES,
    GateChannel,
    GateFidelity,
    GrbData,
    LossStats,
    breakdown_json,
    clifford_group,
    correlated_loss_stats,
    error_breakdown,
    gate_channel,
    run_grb,
    simulate_gate_fidelity,
)
from rydkit.gate.model import DensityMatrix4L, FourLevelBasis, JumpSet, hamiltonian, master_equation_step
from rydkit.gate.noise import CHANNELS, NoiseModel, Spectrum, read_spectrum
from rydkit.gate.tog import TogPulse, closed_unitary, gate_infidelity, synthesize_tog
