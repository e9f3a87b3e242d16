"""Occupation-number bases over the two-level {m, r} site space.

A configuration is an integer whose binary string, read left to right,
lists sites 0..N-1 (``1`` means the site is in the Rydberg state).  With
this convention lexicographic order of the strings equals integer order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from rydkit.errors import CapacityError

DEFAULT_MAX_SITES = 22

FULL = "full"
CONSTRAINED = "constrained"


def site_bit(n_sites: int, site: int) -> int:
    """Integer mask of ``site`` in an ``n_sites`` configuration."""
    return 1 << (n_sites - 1 - site)


def parse_bits(text: str) -> int:
    return int(text, 2)


@dataclass(frozen=True)
class BasisConfig:
    bits: int
    n_sites: int

    @property
    def excitation_count(self) -> int:
        return self.bits.bit_count()

    def flipped(self) -> "BasisConfig":
        return BasisConfig(self.bits ^ ((1 << self.n_sites) - 1), self.n_sites)

    def occupation(self, site: int) -> int:
        return (self.bits >> (self.n_sites - 1 - site)) & 1

    def __str__(self) -> str:
        return format(self.bits, f"0{self.n_sites}b")

    @classmethod
    def from_string(cls, text: str) -> "BasisConfig":
        return cls(parse_bits(text), len(text))


@dataclass(frozen=True, eq=False)
class Basis:
    """Ordered list of configurations with an index lookup.

    Immutable after construction; safe to share between workers.
    """

    n_sites: int
    mode: str
    configs: np.ndarray
    edges: tuple[tuple[int, int], ...] = field(default=())

    @property
    def dim(self) -> int:
        return int(self.configs.shape[0])

    def __len__(self) -> int:
        return self.dim

    def config(self, index: int) -> BasisConfig:
        return BasisConfig(int(self.configs[index]), self.n_sites)

    def __iter__(self):
        for i in range(self.dim):
            yield self.config(i)

    def index(self, bits: int | str | BasisConfig) -> int:
        if isinstance(bits, BasisConfig):
            bits = bits.bits
        elif isinstance(bits, str):
            bits = parse_bits(bits)
        if self.mode == FULL:
            if 0 <= bits < self.dim:
                return int(bits)
            raise KeyError(bits)
        pos = int(np.searchsorted(self.configs, bits))
        if pos < self.dim and self.configs[pos] == bits:
            return pos
        raise KeyError(format(bits, f"0{self.n_sites}b"))

    def indices(self, bits: np.ndarray) -> np.ndarray:
        """Vectorized lookup; configurations outside the basis map to -1."""
        bits = np.asarray(bits, dtype=np.int64)
        if self.mode == FULL:
            ok = (bits >= 0) & (bits < self.dim)
            return np.where(ok, bits, -1)
        pos = np.searchsorted(self.configs, bits)
        pos_c = np.minimum(pos, self.dim - 1)
        found = self.configs[pos_c] == bits
        return np.where(found, pos_c, -1)

    def __contains__(self, bits: int) -> bool:
        return bool(self.indices(np.array([bits]))[0] >= 0)

    @cached_property
    def occupations(self) -> np.ndarray:
        """(dim, N) array of 0/1 site occupations."""
        shifts = np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        return ((self.configs[:, None] >> shifts[None, :]) & 1).astype(np.int8)

    @cached_property
    def excitation_counts(self) -> np.ndarray:
        return self.occupations.sum(axis=1).astype(np.int64)

    @cached_property
    def flip_indices(self) -> np.ndarray:
        """Index of the fully flipped configuration, -1 when it is not in the basis."""
        mask = (1 << self.n_sites) - 1
        return self.indices(self.configs ^ mask)

    def labels(self) -> list[str]:
        return [format(int(c), f"0{self.n_sites}b") for c in self.configs]


def enumerate_basis(
    n_sites: int,
    mode: str = FULL,
    adjacency: Iterable[Sequence[int]] = (),
    max_sites: int = DEFAULT_MAX_SITES,
) -> Basis:
    """Enumerate configurations in lexicographic order.

    In ``constrained`` mode only configurations with no excited pair on an
    adjacency edge are kept (the blockade subspace).  ``max_sites`` caps the
    full-space size at ``2**max_sites`` states.
    """
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    if mode not in (FULL, CONSTRAINED):
        raise ValueError(f"unknown basis mode {mode!r}")
    edges = tuple(sorted({tuple(sorted((int(a), int(b)))) for a, b in adjacency}))
    for a, b in edges:
        if a == b or not (0 <= a < n_sites and 0 <= b < n_sites):
            raise ValueError(f"invalid adjacency edge ({a}, {b}) for {n_sites} sites")

    if mode == FULL:
        if n_sites > max_sites:
            raise CapacityError(
                f"full basis with {n_sites} sites exceeds cap of {max_sites} sites"
            )
        return Basis(n_sites, FULL, np.arange(1 << n_sites, dtype=np.int64), edges)

    earlier: list[list[int]] = [[] for _ in range(n_sites)]
    for a, b in edges:
        earlier[b].append(a)
    cap = 1 << max_sites
    # grow prefixes one site at a time; after s sites, site k is bit (s - 1 - k)
    prefixes = np.array([0], dtype=np.int64)
    for s in range(n_sites):
        zero = prefixes << 1
        one = zero | 1
        if earlier[s]:
            blocked = np.zeros(prefixes.shape, dtype=bool)
            for a in earlier[s]:
                blocked |= ((prefixes >> (s - 1 - a)) & 1).astype(bool)
            one = one[~blocked]
        prefixes = np.sort(np.concatenate([zero, one]))
        if prefixes.size > cap:
            raise CapacityError(
                f"constrained basis exceeds cap of 2**{max_sites} configurations"
            )
    return Basis(n_sites, CONSTRAINED, prefixes, edges)


def chain_edges(n_sites: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(n_sites - 1)]
