"""Chebyshev expansion of ``exp(-i tau H) V`` for Hermitian ``H``.

Only matrix-vector products are needed, so a batch of Hamiltonians that
share the sparse hopping part and differ in their diagonals propagates
together.  The spectrum of each column's Hamiltonian must lie inside
``[center - radius, center + radius]``.

The truncation error is bounded by the tail of the Bessel coefficients,
so the requested tolerance holds a priori with no step control.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import jv

MatVec = Callable[[np.ndarray], np.ndarray]


def chebyshev_coefficients(tau_radius: np.ndarray, tol: float) -> np.ndarray:
    """Coefficients ``a_k`` (shape (K, batch)) of the expansion of ``exp(-i x t)``."""
    tau_radius = np.atleast_1d(np.asarray(tau_radius, dtype=float))
    # negative tau_radius (backward propagation) is fine: J_k(-x) = (-1)^k J_k(x)
    kmax = int(np.ceil(np.abs(tau_radius).max() * 1.3 + 30))
    k = np.arange(kmax + 1)
    bes = jv(k[:, None], tau_radius[None, :])
    big = np.abs(bes) > tol * 1e-3
    last = int(np.max(np.nonzero(big.any(axis=1))[0])) if big.any() else 0
    k = k[: last + 2]
    bes = bes[: last + 2]
    coeff = 2.0 * ((-1j) ** k)[:, None] * bes
    coeff[0] *= 0.5
    return coeff


def spectral_bounds(diagonals: np.ndarray, offdiag_row_bound: float) -> tuple[np.ndarray, np.ndarray]:
    """Gershgorin center/radius per column for ``diag + offdiagonal`` Hamiltonians."""
    hi = diagonals.max(axis=0) + offdiag_row_bound
    lo = diagonals.min(axis=0) - offdiag_row_bound
    center = 0.5 * (hi + lo)
    radius = np.maximum(0.5 * (hi - lo), 1e-12)
    return center, radius


def chebyshev_expmv(
    apply_h: MatVec,
    v: np.ndarray,
    tau: float,
    center: np.ndarray,
    radius: np.ndarray,
    tol: float = 1e-12,
) -> np.ndarray:
    """``exp(-i tau H) v`` for ``v`` of shape (dim, batch)."""
    coeff = chebyshev_coefficients(tau * radius, tol)
    inv_r = 1.0 / radius

    def scaled(x):
        return (apply_h(x) - center * x) * inv_r

    t_prev = v
    out = coeff[0] * v
    if coeff.shape[0] > 1:
        t_cur = scaled(v)
        out = out + coeff[1] * t_cur
        for k in range(2, coeff.shape[0]):
            t_next = 2.0 * scaled(t_cur) - t_prev
            out += coeff[k] * t_next
            t_prev, t_cur = t_cur, t_next
    return np.exp(-1j * tau * center) * out


def chebyshev_expmv_derivative(
    apply_h: MatVec,
    apply_e: MatVec,
    v: np.ndarray,
    tau: float,
    center: np.ndarray,
    radius: np.ndarray,
    tol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``exp(-i tau H) v`` and its derivative along ``H -> H + eps E``.

    The recursion is differentiated term by term with the expansion interval
    held fixed, which is exact up to the same truncation error.
    """
    coeff = chebyshev_coefficients(tau * radius, tol)
    inv_r = 1.0 / radius

    def scaled(x):
        return (apply_h(x) - center * x) * inv_r

    out = coeff[0] * v
    dout = np.zeros_like(out)
    if coeff.shape[0] > 1:
        t_prev, d_prev = v, np.zeros_like(out)
        t_cur = scaled(v)
        d_cur = apply_e(v) * inv_r
        out = out + coeff[1] * t_cur
        dout = dout + coeff[1] * d_cur
        for k in range(2, coeff.shape[0]):
            t_next = 2.0 * scaled(t_cur) - t_prev
            d_next = 2.0 * (apply_e(t_cur) * inv_r + scaled(d_cur)) - d_prev
            out += coeff[k] * t_next
            dout += coeff[k] * d_next
            t_prev, t_cur = t_cur, t_next
            d_prev, d_cur = d_cur, d_next
    phase = np.exp(-1j * tau * center)
    return phase * out, phase * dout
