from rydkit.core.basis import (
    CONSTRAINED,
    FULL,
    Basis,
    BasisConfig,
    chain_edges,
    enumerate_basis,
)
from rydkit.core.chebyshev import chebyshev_expmv, chebyshev_expmv_derivative, spectral_bounds
from rydkit.core.krylov import expmv
from rydkit.core.operators import (
    Operator,
    diagonal_operator,
    number_operator,
    pair_number_operator,
    sigma_x_matrix,
    sigma_x_operator,
    total_number_diagonal,
)
from rydkit.core.state import (
    StateVector,
    expectation,
    haar_random_qubit_state,
    propagate,
    propagate_vector,
)

__all__ = [
    "CONSTRAINED",
    "FULL",
    "Basis",
    "BasisConfig",
    "Operator",
    "StateVector",
    "chain_edges",
    "chebyshev_expmv",
    "chebyshev_expmv_derivative",
    "diagonal_operator",
    "enumerate_basis",
    "expectation",
    "expmv",
    "haar_random_qubit_state",
    "number_operator",
    "pair_number_operator",
    "propagate",
    "propagate_vector",
    "sigma_x_matrix",
    "sigma_x_operator",
    "spectral_bounds",
    "total_number_diagonal",
]
