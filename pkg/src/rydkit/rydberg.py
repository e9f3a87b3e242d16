"""Atom geometries, position disorder, van der Waals interactions and the
driven Rydberg Hamiltonian

    H = sum_i (Omega/2 sigma^x_i - Delta n_i) + sum_{i<j} V_ij n_i n_j.

All frequencies are angular frequencies in rad/us (a value quoted as
"2pi x f MHz" is stored as ``2*pi*f``); distances are in um, so C6 carries
units of rad/us * um^6.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from rydkit.core.basis import CONSTRAINED, FULL, Basis, enumerate_basis
from rydkit.core.operators import Operator, sigma_x_matrix
from rydkit.errors import InvalidModelError, SingularInteractionError

TWO_PI = 2.0 * np.pi

# Documented placeholders: the diagonal ladder interaction is 2pi x 1 MHz at
# 3.7 um spacing, nearest neighbours then sit at 2pi x 8 MHz.
DEFAULT_SPACING_UM = 3.7
DEFAULT_C6 = TWO_PI * 8.0 * DEFAULT_SPACING_UM**6
DEFAULT_OMEGA = TWO_PI * 3.0


@dataclass(frozen=True, eq=False)
class Geometry:
    """2-D atom positions with optional ladder metadata.

    ``circular_order[k]`` is the site visited k-th when walking around the
    ladder perimeter; staggered observables use ``(-1)**k`` along it.
    """

    positions: np.ndarray
    lattice: dict = field(default_factory=lambda: {"kind": "explicit"})
    circular_order: tuple[int, ...] = ()

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must have shape (N, 2)")
        object.__setattr__(self, "positions", pos)
        if not self.circular_order:
            object.__setattr__(self, "circular_order", tuple(range(pos.shape[0])))

    @property
    def n_sites(self) -> int:
        return int(self.positions.shape[0])

    @property
    def is_ladder(self) -> bool:
        return self.lattice.get("kind") == "ladder"

    def distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))

    def staggered_signs(self) -> np.ndarray:
        """Per-site sign (-1)**k with k the circular index."""
        signs = np.empty(self.n_sites)
        for k, site in enumerate(self.circular_order):
            signs[site] = (-1) ** k
        return signs

    def checkerboard(self) -> tuple[int, int]:
        """The two Z2 configurations (A, A-bar) as bit integers.

        A excites the sites with even circular index.
        """
        n = self.n_sites
        a = 0
        for k, site in enumerate(self.circular_order):
            if k % 2 == 0:
                a |= 1 << (n - 1 - site)
        return a, a ^ ((1 << n) - 1)

    def nearest_neighbor_edges(self, rtol: float = 1e-6) -> list[tuple[int, int]]:
        """Pairs at the minimum lattice distance along either ladder axis."""
        if self.is_ladder:
            rungs = self.lattice["rungs"]
            edges = [(2 * k, 2 * k + 1) for k in range(rungs)]
            edges += [(2 * k + leg, 2 * k + 2 + leg) for k in range(rungs - 1) for leg in (0, 1)]
            return sorted(edges)
        d = self.distances()
        iu = np.triu_indices(self.n_sites, 1)
        dmin = d[iu].min()
        return [(int(i), int(j)) for i, j in zip(*iu) if d[i, j] <= dmin * (1 + rtol)]

    def blockade_edges(self, radius_um: float) -> list[tuple[int, int]]:
        d = self.distances()
        iu = np.triu_indices(self.n_sites, 1)
        return [(int(i), int(j)) for i, j in zip(*iu) if d[i, j] <= radius_um]

    def with_positions(self, positions: np.ndarray) -> "Geometry":
        return replace(self, positions=np.asarray(positions, dtype=float))


def ladder(rungs: int, ax: float = DEFAULT_SPACING_UM, ay: float | None = None) -> Geometry:
    """Two-leg ladder; site 2k is (k*ax, 0) and site 2k+1 is (k*ax, ay)."""
    if rungs < 1:
        raise ValueError("ladder needs at least one rung")
    ay = ax if ay is None else ay
    pos = np.array([(k * ax, leg * ay) for k in range(rungs) for leg in (0, 1)], dtype=float)
    order = [2 * k for k in range(rungs)] + [2 * k + 1 for k in reversed(range(rungs))]
    meta = {"kind": "ladder", "rungs": rungs, "ax": float(ax), "ay": float(ay)}
    return Geometry(pos, meta, tuple(order))


def chain(n_sites: int, spacing: float = DEFAULT_SPACING_UM) -> Geometry:
    pos = np.column_stack([np.arange(n_sites) * spacing, np.zeros(n_sites)])
    return Geometry(pos, {"kind": "explicit"})


@dataclass(frozen=True)
class DisorderSampler:
    """Isotropic Gaussian position noise of std ``delta_r_nm`` per coordinate."""

    delta_r_nm: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.delta_r_nm < 0:
            raise ValueError("delta_r_nm must be non-negative")

    def rng(self, index: int) -> np.random.Generator:
        # per-sample derived stream, independent of evaluation order
        return np.random.default_rng([int(self.seed), int(index)])


def sample_disordered_geometry(geometry: Geometry, sampler: DisorderSampler, index: int = 0) -> Geometry:
    if sampler.delta_r_nm == 0:
        return geometry
    shift = sampler.rng(index).normal(scale=sampler.delta_r_nm * 1e-3, size=geometry.positions.shape)
    return geometry.with_positions(geometry.positions + shift)


def sample_ensemble(geometry: Geometry, sampler: DisorderSampler, count: int) -> list[Geometry]:
    return [sample_disordered_geometry(geometry, sampler, k) for k in range(count)]


@dataclass(frozen=True, eq=False)
class InteractionModel:
    """``V_ij = scale(theta_ij) * C6 / r_ij**6``.

    ``theta_ij`` is the angle between the pair axis and the quantization
    field, which points along ``field_angle`` (radians, 0 = x axis).  The
    anisotropy is a table of ``(angle, scale)`` samples interpolated with
    period pi; an empty table means isotropic.
    """

    c6: float = DEFAULT_C6
    anisotropy_angles: tuple[float, ...] = ()
    anisotropy_scales: tuple[float, ...] = ()
    field_angle: float = 0.0
    blockade_radius: float | None = None

    def __post_init__(self):
        if len(self.anisotropy_angles) != len(self.anisotropy_scales):
            raise InvalidModelError("anisotropy table needs one scale per angle")
        if any(s < 0 for s in self.anisotropy_scales):
            raise InvalidModelError("anisotropy scales must be non-negative")

    @property
    def isotropic(self) -> bool:
        return len(self.anisotropy_angles) == 0

    def scale(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.isotropic:
            return np.ones_like(theta)
        ang = np.mod(np.asarray(self.anisotropy_angles, dtype=float), np.pi)
        order = np.argsort(ang)
        return np.interp(np.mod(theta, np.pi), ang[order], np.asarray(self.anisotropy_scales)[order], period=np.pi)

    @classmethod
    def two_axis(cls, c6: float, scale_parallel: float, scale_perpendicular: float, field_angle: float = 0.0) -> "InteractionModel":
        """Anisotropy fixed by its values along and across the field."""
        return cls(c6, (0.0, np.pi / 2), (scale_parallel, scale_perpendicular), field_angle)


def interaction_matrix(geometry: Geometry, model: InteractionModel) -> np.ndarray:
    """Symmetric (N, N) matrix of pair interactions with zero diagonal."""
    diff = geometry.positions[:, None, :] - geometry.positions[None, :, :]
    r2 = (diff**2).sum(axis=-1)
    n = geometry.n_sites
    off = ~np.eye(n, dtype=bool)
    if np.any(r2[off] <= 0):
        i, j = np.argwhere((r2 <= 0) & off)[0]
        raise SingularInteractionError(f"atoms {i} and {j} coincide")
    theta = np.arctan2(diff[..., 1], diff[..., 0]) - model.field_angle
    with np.errstate(divide="ignore"):
        v = model.scale(theta) * model.c6 / r2**3
    v[~off] = 0.0
    return 0.5 * (v + v.T)


def interaction_diagonal(basis: Basis, vmat: np.ndarray) -> np.ndarray:
    """``sum_{i<j} V_ij n_i n_j`` for every configuration."""
    occ = basis.occupations.astype(float)
    return 0.5 * np.einsum("ci,ij,cj->c", occ, vmat, occ)


def default_basis(geometry: Geometry, model: InteractionModel) -> Basis:
    if model.blockade_radius is None:
        return enumerate_basis(geometry.n_sites, FULL)
    return enumerate_basis(geometry.n_sites, CONSTRAINED, geometry.blockade_edges(model.blockade_radius))


@dataclass(frozen=True, eq=False)
class RydbergTerms:
    """Matrix-free pieces: ``H = omega/2 * drive + diag(-delta * number + interaction)``."""

    basis: Basis
    drive: object
    number: np.ndarray
    interaction: np.ndarray
    offsets: np.ndarray

    def operator(self, omega: float, delta: float) -> Operator:
        diag = -delta * self.number + self.interaction + self.offsets
        return Operator(self.basis, diag, (0.5 * omega) * self.drive)


def rydberg_terms(
    geometry: Geometry,
    model: InteractionModel,
    basis: Basis,
    site_detunings: np.ndarray | None = None,
) -> RydbergTerms:
    """``site_detunings`` adds ``-delta_i n_i`` (constant per-site offsets)."""
    if geometry.n_sites != basis.n_sites:
        raise ValueError("geometry and basis disagree on the number of sites")
    vmat = interaction_matrix(geometry, model)
    number = basis.excitation_counts.astype(float)
    offsets = np.zeros(basis.dim)
    if site_detunings is not None:
        offsets = -basis.occupations.astype(float) @ np.asarray(site_detunings, dtype=float)
    return RydbergTerms(basis, sigma_x_matrix(basis), number, interaction_diagonal(basis, vmat), offsets)


def build_hamiltonian(
    geometry: Geometry,
    model: InteractionModel,
    omega: float,
    delta: float,
    basis: Basis,
    site_detunings: np.ndarray | None = None,
) -> Operator:
    return rydberg_terms(geometry, model, basis, site_detunings).operator(omega, delta)


def two_photon_shift(geometry: Geometry, model: InteractionModel, pair: tuple[int, int]) -> float:
    """Detuning of the |mm> -> |rr> two-photon resonance: half the pair energy."""
    i, j = pair
    if i == j:
        raise ValueError("pair must contain two distinct sites")
    return 0.5 * float(interaction_matrix(geometry, model)[i, j])


def mapping_detuning(geometry: Geometry, model: InteractionModel, config: int | None = None) -> float:
    """Mean interaction energy felt by an excited atom of a Z2 configuration."""
    vmat = interaction_matrix(geometry, model)
    n = geometry.n_sites
    bits = geometry.checkerboard()[0] if config is None else config
    excited = np.array([(bits >> (n - 1 - i)) & 1 for i in range(n)], dtype=bool)
    if not excited.any():
        raise ValueError("configuration has no excited atoms")
    felt = vmat[np.ix_(excited, excited)].sum(axis=1)
    return float(felt.mean())


def compensate_anisotropy(geometry: Geometry, model: InteractionModel) -> tuple[Geometry, float]:
    """Rescale the ladder axis perpendicular to the field so the nearest-neighbour
    interactions along x and y are equal.

    The field must lie along one lattice axis.  Returns the new geometry and
    the change of the aspect ratio ay/ax (1.0 for an isotropic square ladder).
    """
    if not geometry.is_ladder:
        raise ValueError("anisotropy compensation needs a ladder geometry")
    ax, ay = geometry.lattice["ax"], geometry.lattice["ay"]
    sx = float(model.scale(0.0 - model.field_angle))
    sy = float(model.scale(np.pi / 2 - model.field_angle))
    if sx <= 0 or sy <= 0:
        raise InvalidModelError("anisotropy ratio must be positive")
    along_x = abs(np.sin(model.field_angle)) < 1e-9
    along_y = abs(np.cos(model.field_angle)) < 1e-9
    if not (along_x or along_y):
        raise InvalidModelError("field must be aligned with a lattice axis")
    # equal NN energies: sx / ax**6 == sy / ay**6
    if along_x:
        new_ay = ax * (sy / sx) ** (1 / 6)
        new_ax = ax
    else:
        new_ax = ay * (sx / sy) ** (1 / 6)
        new_ay = ay
    new = ladder(geometry.lattice["rungs"], new_ax, new_ay)
    factor = (new_ay / new_ax) / (ay / ax)
    return new, float(factor)


def geometry_dumps(geometry: Geometry) -> str:
    lines = []
    if geometry.is_ladder:
        m = geometry.lattice
        lines.append(f"ladder rungs={m['rungs']} ax={m['ax']:.12g} ay={m['ay']:.12g}")
    for i, (x, y) in enumerate(geometry.positions):
        lines.append(f"{i} {x:.12g} {y:.12g}")
    return "\n".join(lines) + "\n"


def geometry_loads(text: str) -> Geometry:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    meta = None
    if rows and rows[0][0] == "ladder":
        kv = dict(tok.split("=", 1) for tok in rows[0][1:])
        meta = (int(kv["rungs"]), float(kv["ax"]), float(kv["ay"]))
        rows = rows[1:]
    pos = np.zeros((len(rows), 2))
    for r in rows:
        pos[int(r[0])] = float(r[1]), float(r[2])
    if meta is not None:
        geo = ladder(*meta)
        return geo.with_positions(pos)
    return Geometry(pos)


def read_geometry(path: str | Path) -> Geometry:
    return geometry_loads(Path(path).read_text())


def write_geometry(geometry: Geometry, path: str | Path) -> None:
    Path(path).write_text(geometry_dumps(geometry))
