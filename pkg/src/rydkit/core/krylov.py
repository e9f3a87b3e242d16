"""Batched Krylov approximation of ``exp(tau * A) @ V``.

Every column of ``V`` gets its own Arnoldi basis; all columns advance with a
common substep so a batch of disorder samples can share one Python loop.
The basis is independent of the step length, so rejected steps are retried
with a shorter step without rebuilding it.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.linalg import expm

from rydkit.errors import ConvergenceError

MatVec = Callable[[np.ndarray], np.ndarray]

_CHECKPOINTS = (6, 10, 16, 24, 32, 40, 48, 64)


def _small_expm_e1(hess: np.ndarray, tau: complex) -> np.ndarray:
    """First column of ``exp(tau * hess)`` for a stack of square matrices."""
    return expm(tau * hess)[..., :, 0]


def expmv(
    apply_a: MatVec,
    v: np.ndarray,
    tau: float,
    tol: float = 1e-10,
    m_max: int = 40,
    max_substeps: int = 100_000,
) -> tuple[np.ndarray, float]:
    """Approximate ``exp(tau * A) v`` for ``v`` of shape (dim,) or (dim, batch).

    ``tol`` is relative to the initial column norm and is spent uniformly over
    the interval.  Returns the result and the accumulated error estimate
    (largest over columns, relative).
    """
    squeeze = v.ndim == 1
    w = np.array(v, dtype=complex, copy=True)
    if squeeze:
        w = w[:, None]
    dim, batch = w.shape
    if tau == 0.0 or dim == 0:
        return (w[:, 0] if squeeze else w), 0.0

    norm0 = np.linalg.norm(w, axis=0)
    scale = np.where(norm0 > 0, norm0, 1.0)
    m_cap = max(1, min(m_max, dim))
    checkpoints = [c for c in _CHECKPOINTS if c < m_cap] + [m_cap]

    t_done = 0.0
    err_total = np.zeros(batch)
    substeps = 0
    tau_next = tau
    while t_done < tau * (1 - 1e-14):
        substeps += 1
        if substeps > max_substeps:
            raise ConvergenceError(
                "Krylov propagation exceeded the substep cap",
                residual=float(err_total.max()),
            )
        remaining = tau - t_done
        beta = np.linalg.norm(w, axis=0)
        live = beta > 0
        if not np.any(live):
            break
        # row layout: q[b, k] is the k-th Krylov vector of column b
        q = np.zeros((batch, m_cap + 1, dim), dtype=complex)
        qc = np.zeros((batch, m_cap + 1, dim), dtype=complex)
        q[live, 0] = (w[:, live] / beta[live]).T
        qc[:, 0] = q[:, 0].conj()
        hess = np.zeros((batch, m_cap + 1, m_cap + 1), dtype=complex)
        m_used = m_cap
        accepted = None
        breakdown_all = False
        ci = 0
        for j in range(m_cap):
            x = np.ascontiguousarray(apply_a(q[:, j].T).T)
            # two passes of classical Gram-Schmidt
            for _ in range(2):
                h = np.matmul(qc[:, : j + 1], x[:, :, None])[:, :, 0]
                x -= np.matmul(h[:, None, :], q[:, : j + 1])[:, 0, :]
                hess[:, : j + 1, j] += h
            hn = np.sqrt(np.einsum("bd,bd->b", x.real, x.real) + np.einsum("bd,bd->b", x.imag, x.imag))
            tiny = hn <= 1e-13 * np.maximum(np.abs(hess[:, j, j]), 1.0)
            hn = np.where(tiny, 0.0, hn)
            hess[:, j + 1, j] = hn
            safe = np.where(hn > 0, hn, 1.0)
            q[:, j + 1] = np.where((hn > 0)[:, None], x / safe[:, None], 0.0)
            qc[:, j + 1] = q[:, j + 1].conj()
            breakdown_all = bool(np.all(hn == 0))
            m = j + 1
            if breakdown_all or m == checkpoints[ci]:
                ci = min(ci + 1, len(checkpoints) - 1)
                step = min(tau_next, remaining)
                res = _try_step(hess, m, beta, step, tol, tau, scale, breakdown_all)
                if res is not None:
                    m_used = m
                    accepted = res
                    break
                if m == m_cap:
                    m_used = m
                    break
        if accepted is None:
            step = min(tau_next, remaining)
            while True:
                step *= 0.5
                if step < tau * 1e-12:
                    raise ConvergenceError(
                        "Krylov step size underflow", residual=float(err_total.max())
                    )
                res = _try_step(hess, m_used, beta, step, tol, tau, scale, breakdown_all)
                if res is not None:
                    accepted = res
                    break
        coeffs, err, step = accepted
        w = np.matmul(coeffs[:, None, :m_used], q[:, :m_used])[:, 0, :].T
        err_total += err
        t_done += step
        # grow the step again after a cut
        tau_next = min(2.0 * step, tau) if step < remaining else tau
    out = w[:, 0] if squeeze else w
    return out, float(err_total.max()) if batch else 0.0


def _try_step(hess, m, beta, step, tol, tau, scale, exact):
    """Return (coeffs scaled by beta, relative error per column, step) or None."""
    h_aug = hess[:, : m + 1, : m + 1].copy()
    # Saad's corrected scheme: the extra row gives the error estimate
    h_aug[:, :, m] = 0.0
    e1 = _small_expm_e1(h_aug, step)
    coeffs = beta[:, None] * e1[:, :m]
    err = np.abs(beta * e1[:, m]) / scale
    if exact:
        err = np.zeros_like(err)
    allowed = tol * step / tau
    if np.all(err <= allowed):
        return coeffs, err, step
    return None
