import numpy as np
import pytest
from scipy import sparse
from scipy.linalg import expm

from rydkit.core import (
    Operator,
    StateVector,
    chain_edges,
    chebyshev_expmv,
    enumerate_basis,
    expectation,
    expmv,
    haar_random_qubit_state,
    number_operator,
    pair_number_operator,
    propagate,
    sigma_x_matrix,
    spectral_bounds,
)
from rydkit.core.state import haar_random_vectors
from rydkit.errors import CapacityError, DegenerateStateError


def drive_op(basis, omega, delta=0.0):
    diag = -delta * basis.excitation_counts.astype(float)
    return Operator(basis, diag, 0.5 * omega * sigma_x_matrix(basis))


def test_full_basis_size():
    assert enumerate_basis(3).dim == 8


def test_constrained_chain_is_fibonacci():
    basis = enumerate_basis(4, "constrained", chain_edges(4))
    brute = [c for c in range(16) if not any((c >> k) & 3 == 3 for k in range(3))]
    assert basis.dim == 8
    assert list(basis.configs) == brute


def test_constrained_pair():
    basis = enumerate_basis(2, "constrained", [(0, 1)])
    assert basis.labels() == ["00", "01", "10"]


def test_capacity_guard():
    with pytest.raises(CapacityError):
        enumerate_basis(23)


def test_site_zero_is_leading_bit():
    basis = enumerate_basis(3)
    assert basis.occupations[basis.index("100")].tolist() == [1, 0, 0]


def test_single_atom_pi_pulse():
    basis = enumerate_basis(1)
    omega = 2 * np.pi
    out = propagate(StateVector.from_config(basis, 0), [(drive_op(basis, omega), np.pi / omega)])
    assert abs(abs(out.amplitude(1)) - 1) < 1e-9


def test_blockaded_pair_rabi_enhancement():
    basis = enumerate_basis(2, "constrained", [(0, 1)])
    omega = 2 * np.pi * 3
    out = propagate(StateVector.from_config(basis, 0), [(drive_op(basis, omega), np.pi / (np.sqrt(2) * omega))])
    bell = np.array([0, 1, 1]) / np.sqrt(2)
    assert abs(np.vdot(bell, out.amplitudes)) ** 2 > 1 - 1e-9


def test_zero_duration_is_identity():
    basis = enumerate_basis(2)
    psi = haar_random_qubit_state(2, 4)
    out = propagate(psi, [(drive_op(basis, 5.0, 1.0), 0.0)])
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-14)


def test_krylov_matches_dense():
    basis = enumerate_basis(8)
    op = drive_op(basis, 4.0, 1.3)
    rng = np.random.default_rng(1)
    v = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    v /= np.linalg.norm(v)
    ref = expm(-1j * 0.7 * op.to_dense()) @ v
    out, err = expmv(lambda x: -1j * op.matvec(x), v, 0.7, tol=1e-12)
    assert np.max(np.abs(out - ref)) < 1e-9
    assert err < 1e-9
    # the propagate front end chooses Krylov above 64 states
    out2 = propagate(StateVector(basis, v), [(op, 0.7)])
    assert np.max(np.abs(out2.amplitudes - ref)) < 1e-9


def test_chebyshev_matches_dense():
    basis = enumerate_basis(5)
    op = drive_op(basis, 3.0, 2.0)
    drive = sigma_x_matrix(basis)
    rng = np.random.default_rng(2)
    v = rng.normal(size=(basis.dim, 1)) + 0j
    diag = op.diagonal[:, None]
    row = 0.5 * 3.0 * float(np.diff(drive.indptr).max())
    center, radius = spectral_bounds(diag, row)
    out = chebyshev_expmv(lambda x: op.matvec(x), v, 0.4, center, radius)
    ref = expm(-1j * 0.4 * op.to_dense()) @ v
    assert np.max(np.abs(out - ref)) < 1e-10


def test_expectation_values():
    basis = enumerate_basis(1)
    n0 = number_operator(basis, 0)
    assert expectation(StateVector.from_config(basis, 1), n0) == pytest.approx(1.0)
    sup = StateVector.from_amplitudes(basis, {0: 1 / np.sqrt(2), 1: 1 / np.sqrt(2)})
    assert expectation(sup, n0) == pytest.approx(0.5)
    pair = enumerate_basis(2, "constrained", [(0, 1)])
    bell = StateVector.from_amplitudes(pair, {"01": 1 / np.sqrt(2), "10": 1 / np.sqrt(2)})
    assert expectation(bell, pair_number_operator(pair, 0, 1)) == 0.0


def test_haar_state_determinism_and_norm():
    a = haar_random_qubit_state(2, 7)
    b = haar_random_qubit_state(2, 7)
    assert np.array_equal(a.amplitudes, b.amplitudes)
    assert abs(haar_random_qubit_state(1, 3).norm2() - 1) < 1e-12


def test_haar_sigma_z_mean_vanishes():
    vecs = haar_random_vectors(2, 10_000, np.random.default_rng(0))
    z = np.abs(vecs[:, 0]) ** 2 - np.abs(vecs[:, 1]) ** 2
    # sigma_z is uniform on [-1, 1] for Haar qubits: std 1/sqrt(3)
    assert abs(z.mean()) < 5 / np.sqrt(3 * 10_000)


def test_state_round_trip_text():
    basis = enumerate_basis(4, "constrained", chain_edges(4))
    psi = StateVector(basis, np.arange(basis.dim) * (1 + 0.5j))
    back = StateVector.loads(psi.dumps())
    assert back.basis.labels() == basis.labels()
    assert np.array_equal(back.amplitudes, psi.amplitudes)


def test_zero_state_cannot_normalize():
    basis = enumerate_basis(1)
    with pytest.raises(DegenerateStateError):
        StateVector(basis, np.zeros(2, dtype=complex)).normalized()


def test_non_hermitian_decay_norm():
    basis = enumerate_basis(1)
    op = Operator(basis, np.zeros(2), sparse.csr_matrix((2, 2)), decay=np.array([0.0, 1.0]))
    out = propagate(StateVector.from_config(basis, 1), [(op, 1.0)])
    assert abs(out.norm2() - np.exp(-1)) < 1e-10
