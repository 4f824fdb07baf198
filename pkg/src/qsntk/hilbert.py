"""Basis enumeration for spin and fermion lattice models, and network input encodings.

Spin configurations are stored as integers whose bit i is the occupation of
site i (bit 1 = spin up); fermionic Fock states in a fixed particle-number
sector are (up_bits, down_bits) pairs. All bases are enumerated in integer /
lexicographic order so that indices are reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

# Dense Gram matrices and amplitude vectors are built downstream, so cap the
# spin Hilbert space at 2^20 states.
MAX_SPIN_SITES = 20


class CapacityError(Exception):
    """Requested basis exceeds the dense-storage guard."""


@dataclass(frozen=True)
class Lattice:
    """Rectangular lattice with open boundaries and nearest-neighbor bonds."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"lattice shape must be positive, got {self.rows}x{self.cols}")

    @property
    def sites(self) -> int:
        return self.rows * self.cols

    def site_index(self, r: int, c: int) -> int:
        return r * self.cols + c

    @property
    def adjacency(self) -> list[tuple[int, int]]:
        """Nearest-neighbor bonds (i, j) with i < j, open boundary."""
        bonds = []
        for r in range(self.rows):
            for c in range(self.cols):
                i = self.site_index(r, c)
                if c + 1 < self.cols:
                    bonds.append((i, self.site_index(r, c + 1)))
                if r + 1 < self.rows:
                    bonds.append((i, self.site_index(r + 1, c)))
        return bonds


@dataclass(frozen=True)
class SpinBasis:
    """All 2^n_sites spin-1/2 configurations in integer order."""

    n_sites: int
    states: np.ndarray = field(repr=False)  # uint32 vector, states[k] = k

    @property
    def size(self) -> int:
        return self.states.shape[0]

    def index_of(self, state: int) -> int:
        return int(state)

    def lookup(self, index: int) -> int:
        return int(self.states[index])


@dataclass(frozen=True)
class FockBasis:
    """Fixed-(n_up, n_down) fermionic occupation basis on n_sites sites.

    Ordered lexicographically by (up_bits, down_bits); the up/down bitstrings
    enumerate C(n_sites, n_up) x C(n_sites, n_down) states.
    """

    n_sites: int
    n_up: int
    n_down: int
    up_states: np.ndarray = field(repr=False)
    down_states: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.up_states.shape[0] * self.down_states.shape[0]

    def lookup(self, index: int) -> tuple[int, int]:
        n_dn = self.down_states.shape[0]
        return (int(self.up_states[index // n_dn]), int(self.down_states[index % n_dn]))

    def index_of(self, state: tuple[int, int]) -> int:
        up, down = state
        iu = int(np.searchsorted(self.up_states, up))
        idn = int(np.searchsorted(self.down_states, down))
        if (
            iu >= self.up_states.shape[0]
            or idn >= self.down_states.shape[0]
            or self.up_states[iu] != up
            or self.down_states[idn] != down
        ):
            raise KeyError(f"state {state} not in sector (n_up={self.n_up}, n_down={self.n_down})")
        return iu * self.down_states.shape[0] + idn


def _bit_combinations(n_sites: int, n_occ: int) -> np.ndarray:
    """All n_sites-bit integers with n_occ bits set, ascending."""
    vals = [sum(1 << b for b in bits) for bits in combinations(range(n_sites), n_occ)]
    return np.array(sorted(vals), dtype=np.uint32)


def enumerate_spin_basis(n_sites: int) -> SpinBasis:
    if not 1 <= n_sites <= MAX_SPIN_SITES:
        raise CapacityError(f"n_sites={n_sites} outside dense-storage range [1, {MAX_SPIN_SITES}]")
    return SpinBasis(n_sites=n_sites, states=np.arange(2**n_sites, dtype=np.uint32))


def enumerate_hubbard_basis(n_sites: int, n_up: int, n_down: int) -> FockBasis:
    if not (0 <= n_up <= n_sites and 0 <= n_down <= n_sites):
        raise ValueError(f"impossible filling: {n_up}+{n_down} fermions on {n_sites} sites")
    size = comb(n_sites, n_up) * comb(n_sites, n_down)
    if size > 2**MAX_SPIN_SITES:
        raise CapacityError(f"sector size {size} exceeds dense-storage guard")
    return FockBasis(
        n_sites=n_sites,
        n_up=n_up,
        n_down=n_down,
        up_states=_bit_combinations(n_sites, n_up),
        down_states=_bit_combinations(n_sites, n_down),
    )


def encode_spin(state: int, n_sites: int) -> np.ndarray:
    """Map a spin configuration to a +/-1 vector (bit set -> +1)."""
    bits = (int(state) >> np.arange(n_sites)) & 1
    return (2.0 * bits - 1.0).astype(np.float64)


# Site occupation values, in the order hole < down < up < double.
_HOLE, _DOWN, _UP, _DOUBLE = -1.5, -0.5, 0.5, 1.5


def encode_fock(state: tuple[int, int], n_sites: int) -> np.ndarray:
    """Map a (up_bits, down_bits) Fock state to the 4-level site encoding."""
    up, down = state
    u = (int(up) >> np.arange(n_sites)) & 1
    d = (int(down) >> np.arange(n_sites)) & 1
    out = np.full(n_sites, _HOLE)
    out[(u == 1) & (d == 0)] = _UP
    out[(u == 0) & (d == 1)] = _DOWN
    out[(u == 1) & (d == 1)] = _DOUBLE
    return out


def encode(state, basis) -> np.ndarray:
    """Encode a basis state of either kind as a real input vector."""
    if isinstance(basis, SpinBasis):
        return encode_spin(state, basis.n_sites)
    if isinstance(basis, FockBasis):
        return encode_fock(state, basis.n_sites)
    raise TypeError(f"unsupported basis type {type(basis).__name__}")


def encode_basis(basis) -> np.ndarray:
    """Stack the encodings of every basis element into a (size, n_sites) array."""
    if isinstance(basis, SpinBasis):
        ks = np.arange(basis.size, dtype=np.int64)
        bits = (ks[:, None] >> np.arange(basis.n_sites)[None, :]) & 1
        return (2.0 * bits - 1.0).astype(np.float64)
    if isinstance(basis, FockBasis):
        n = basis.n_sites
        u = (basis.up_states.astype(np.int64)[:, None] >> np.arange(n)[None, :]) & 1
        d = (basis.down_states.astype(np.int64)[:, None] >> np.arange(n)[None, :]) & 1
        # broadcast (n_up_states, 1, n) x (1, n_down_states, n)
        uu = np.broadcast_to(u[:, None, :], (u.shape[0], d.shape[0], n))
        dd = np.broadcast_to(d[None, :, :], (u.shape[0], d.shape[0], n))
        out = np.full(uu.shape, _HOLE)
        out[(uu == 1) & (dd == 0)] = _UP
        out[(uu == 0) & (dd == 1)] = _DOWN
        out[(uu == 1) & (dd == 1)] = _DOUBLE
        return out.reshape(-1, n)
    raise TypeError(f"unsupported basis type {type(basis).__name__}")
