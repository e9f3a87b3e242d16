"""Operators on a :class:`~rydkit.core.basis.Basis`.

An :class:`Operator` is stored as a real diagonal, an optional Hermitian
off-diagonal sparse block, and an optional decay diagonal that enters as the
anti-Hermitian term ``-i/2 * decay``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from rydkit.core.basis import Basis


@dataclass(frozen=True, eq=False)
class Operator:
    basis: Basis
    diagonal: np.ndarray
    offdiagonal: sparse.csr_matrix | None = None
    decay: np.ndarray | None = None

    def __post_init__(self):
        if self.diagonal.shape != (self.basis.dim,):
            raise ValueError("diagonal length does not match basis dimension")

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def is_hermitian(self) -> bool:
        return self.decay is None or not np.any(self.decay)

    @property
    def is_diagonal(self) -> bool:
        return self.offdiagonal is None or self.offdiagonal.nnz == 0

    def effective_diagonal(self) -> np.ndarray:
        if self.decay is None:
            return self.diagonal.astype(complex)
        return self.diagonal - 0.5j * self.decay

    def matvec(self, v: np.ndarray) -> np.ndarray:
        d = self.effective_diagonal()
        out = d[:, None] * v if v.ndim == 2 else d * v
        if self.offdiagonal is not None:
            out = out + self.offdiagonal @ v
        return out

    __matmul__ = matvec

    def to_dense(self) -> np.ndarray:
        mat = np.diag(self.effective_diagonal())
        if self.offdiagonal is not None:
            mat = mat + self.offdiagonal.toarray()
        return mat

    def norm_bound(self) -> float:
        """Cheap upper bound on the spectral radius (max absolute row sum)."""
        bound = np.abs(self.effective_diagonal())
        if self.offdiagonal is not None:
            bound = bound + np.asarray(abs(self.offdiagonal).sum(axis=1)).ravel()
        return float(bound.max()) if bound.size else 0.0

    def with_decay(self, decay: np.ndarray | None) -> "Operator":
        return Operator(self.basis, self.diagonal, self.offdiagonal, decay)


def diagonal_operator(basis: Basis, values: np.ndarray) -> Operator:
    return Operator(basis, np.asarray(values, dtype=float))


def number_operator(basis: Basis, site: int) -> Operator:
    return diagonal_operator(basis, basis.occupations[:, site].astype(float))


def total_number_diagonal(basis: Basis) -> np.ndarray:
    return basis.excitation_counts.astype(float)


def pair_number_operator(basis: Basis, i: int, j: int) -> Operator:
    occ = basis.occupations
    return diagonal_operator(basis, (occ[:, i] * occ[:, j]).astype(float))


def sigma_x_matrix(basis: Basis, sites=None) -> sparse.csr_matrix:
    """Sum of single-site flips ``|r><m| + |m><r|`` restricted to ``basis``.

    Flips that leave the basis (blockade-violating targets) are dropped.
    """
    n = basis.n_sites
    sites = range(n) if sites is None else sites
    rows, cols = [], []
    src = np.arange(basis.dim)
    for s in sites:
        target = basis.indices(basis.configs ^ (1 << (n - 1 - s)))
        ok = target >= 0
        rows.append(target[ok])
        cols.append(src[ok])
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
    else:
        r = c = np.zeros(0, dtype=np.int64)
    data = np.ones(r.shape[0], dtype=float)
    return sparse.csr_matrix((data, (r, c)), shape=(basis.dim, basis.dim))


def sigma_x_operator(basis: Basis, site: int) -> Operator:
    return Operator(basis, np.zeros(basis.dim), sigma_x_matrix(basis, [site]))
