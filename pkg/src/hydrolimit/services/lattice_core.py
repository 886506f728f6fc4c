"""
Lattice core service for hydrolimit

Torus geometry, particle configurations and the elementary moves
(exchange, flip, translation) shared by the Kawasaki and Glauber parts
of the dynamics.

Conventions
-----------
* Sites are linearised row-major: coordinates ``(c_0, ..., c_{d-1})`` map to
  ``sum_k c_k * N**(d-1-k)``. Axis ``k`` is the unit vector ``e_{k+1}``.
* Window offsets are sorted lexicographically; bit ``i`` of a pattern index
  is the occupancy at the ``i``-th offset (``WINDOW_BIT_ORDER``).
* Snapshot format: ``b"GKCF"``, uint8 ``d``, uint32 ``N`` (little endian),
  then the row-major occupancy packed little-endian into bytes.
"""

import itertools
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from ..core import DomainError, CapacityError

Site = Union[int, Sequence[int]]

WINDOW_BIT_ORDER = "lexicographic-offsets/bit-i-is-offset-i"
SNAPSHOT_MAGIC = b"GKCF"
_HEADER = struct.Struct("<4sBI")


@dataclass(frozen=True)
class TorusGeometry:
    """d-dimensional discrete torus with N sites per side"""
    d: int
    N: int

    def __post_init__(self):
        if self.d < 1:
            raise DomainError(f"dimension must be >= 1, got {self.d}")
        if self.N < 2:
            raise DomainError(f"side length must be >= 2, got {self.N}")

    @property
    def n_sites(self) -> int:
        return self.N ** self.d

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.N,) * self.d

    def index(self, site: Site) -> int:
        """Linear index of a site given as an int or a coordinate tuple (wrapped)"""
        if isinstance(site, (int, np.integer)):
            if not 0 <= int(site) < self.n_sites:
                raise DomainError(f"site {site} outside torus of {self.n_sites} sites")
            return int(site)
        coords = tuple(int(c) for c in site)
        if len(coords) != self.d:
            raise DomainError(f"expected {self.d} coordinates, got {len(coords)}")
        idx = 0
        for c in coords:
            idx = idx * self.N + (c % self.N)
        return idx

    def coords(self, site: Site) -> Tuple[int, ...]:
        """Coordinate tuple of a site"""
        return tuple(int(c) for c in np.unravel_index(self.index(site), self.shape))

    def shift(self, site: Site, offset: Sequence[int]) -> int:
        """Linear index of ``site + offset`` with modular wrap"""
        return self.index(tuple(c + o for c, o in zip(self.coords(site), offset)))

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        """(n_sites, 2d) array: columns are x+e_1, x-e_1, x+e_2, x-e_2, ..."""
        grid = np.arange(self.n_sites).reshape(self.shape)
        cols = []
        for axis in range(self.d):
            cols.append(np.roll(grid, -1, axis=axis).ravel())
            cols.append(np.roll(grid, 1, axis=axis).ravel())
        table = np.stack(cols, axis=1)
        table.setflags(write=False)
        return table

    def neighbors(self, site: Site) -> np.ndarray:
        return self.neighbor_table[self.index(site)]

    def is_neighbor(self, x: Site, y: Site) -> bool:
        xi, yi = self.index(x), self.index(y)
        return xi != yi and bool(np.any(self.neighbor_table[xi] == yi))

    @cached_property
    def bond_table(self) -> np.ndarray:
        """Oriented bonds (x, x+e_i) for every site and axis, shape (d*n_sites, 2).

        For N = 2 the bonds (x, x+e_i) and (x+e_i, x) join the same pair and
        both are kept, so the pair carries twice the exchange rate.
        """
        sites = np.arange(self.n_sites)
        blocks = [np.stack([sites, self.neighbor_table[:, 2 * axis]], axis=1) for axis in range(self.d)]
        table = np.concatenate(blocks, axis=0)
        table.setflags(write=False)
        return table

    def bonds(self) -> np.ndarray:
        return self.bond_table

    def offset_table(self, offsets: np.ndarray) -> np.ndarray:
        """(n_sites, len(offsets)) array of ``x + offset`` for every site"""
        grid = np.arange(self.n_sites).reshape(self.shape)
        cols = []
        for off in offsets:
            shifted = grid
            for axis, o in enumerate(off):
                if o:
                    shifted = np.roll(shifted, -int(o), axis=axis)
            cols.append(shifted.ravel())
        return np.stack(cols, axis=1)


@dataclass(frozen=True)
class LocalWindow:
    """Cube {-r..r}^d of offsets around the origin, sorted lexicographically"""
    radius: int
    d: int = 1
    offsets: np.ndarray = field(init=False, repr=False, compare=False)

    MAX_BITS = 20

    def __post_init__(self):
        if self.radius < 0:
            raise DomainError(f"window radius must be >= 0, got {self.radius}")
        offsets = np.array(list(itertools.product(range(-self.radius, self.radius + 1), repeat=self.d)),
                           dtype=np.int64).reshape(-1, self.d)
        offsets.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)

    @property
    def size(self) -> int:
        return (2 * self.radius + 1) ** self.d

    @property
    def origin_bit(self) -> int:
        return self.size // 2

    @property
    def n_patterns(self) -> int:
        return 1 << self.size

    def bit_of(self, offset: Sequence[int]) -> int:
        """Bit position of an offset in the pattern index"""
        target = tuple(int(o) for o in offset)
        for i, off in enumerate(self.offsets):
            if tuple(int(o) for o in off) == target:
                return i
        raise DomainError(f"offset {target} is not inside a radius-{self.radius} window")

    def require_enumerable(self):
        if self.size > self.MAX_BITS:
            raise CapacityError(
                f"window of {self.size} sites exceeds {self.MAX_BITS}-bit enumeration limit",
                {"radius": self.radius, "d": self.d},
            )


class Configuration:
    """Occupancy state on a torus; changed only through move operations"""

    __slots__ = ("geometry", "_occ")

    def __init__(self, geometry: TorusGeometry, occupancy: Iterable[int]):
        occ = np.asarray(occupancy).reshape(-1)
        if occ.size != geometry.n_sites:
            raise DomainError(f"expected {geometry.n_sites} occupancies, got {occ.size}")
        if not np.all((occ == 0) | (occ == 1)):
            raise DomainError("occupancy values must be exactly 0 or 1")
        occ = occ.astype(np.uint8)
        occ.setflags(write=False)
        self.geometry = geometry
        self._occ = occ

    @classmethod
    def empty(cls, geometry: TorusGeometry) -> "Configuration":
        return cls(geometry, np.zeros(geometry.n_sites, dtype=np.uint8))

    @classmethod
    def full(cls, geometry: TorusGeometry) -> "Configuration":
        return cls(geometry, np.ones(geometry.n_sites, dtype=np.uint8))

    @property
    def occupancy(self) -> np.ndarray:
        """Read-only flat occupancy array"""
        return self._occ

    def as_grid(self) -> np.ndarray:
        return self._occ.reshape(self.geometry.shape)

    def __getitem__(self, site: Site) -> int:
        return int(self._occ[self.geometry.index(site)])

    def __eq__(self, other) -> bool:
        return (isinstance(other, Configuration) and self.geometry == other.geometry
                and np.array_equal(self._occ, other._occ))

    def __hash__(self):
        return hash((self.geometry, self._occ.tobytes()))

    def __repr__(self):
        return f"Configuration(d={self.geometry.d}, N={self.geometry.N}, particles={self.particle_count})"

    @property
    def particle_count(self) -> int:
        return int(self._occ.sum())

    def state_index(self) -> int:
        """Integer code with bit i = occupancy of site i"""
        if self.geometry.n_sites > 62:
            raise CapacityError("state index needs at most 62 sites")
        return int(np.dot(self._occ.astype(np.int64), 1 << np.arange(self.geometry.n_sites, dtype=np.int64)))

    @classmethod
    def from_state_index(cls, geometry: TorusGeometry, index: int) -> "Configuration":
        bits = (int(index) >> np.arange(geometry.n_sites)) & 1
        return cls(geometry, bits)

    def to_bytes(self) -> bytes:
        """Serialize to the snapshot format"""
        header = _HEADER.pack(SNAPSHOT_MAGIC, self.geometry.d, self.geometry.N)
        return header + np.packbits(self._occ, bitorder="little").tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes) -> "Configuration":
        if len(payload) < _HEADER.size:
            raise DomainError("snapshot too short")
        magic, d, N = _HEADER.unpack_from(payload)
        if magic != SNAPSHOT_MAGIC:
            raise DomainError(f"bad snapshot magic {magic!r}")
        geometry = TorusGeometry(d, N)
        bits = np.unpackbits(np.frombuffer(payload[_HEADER.size:], dtype=np.uint8),
                             bitorder="little", count=geometry.n_sites)
        return cls(geometry, bits)


def exchange(eta: Configuration, x: Site, y: Site) -> Configuration:
    """Return eta^{x,y}: occupancies at neighbors x and y swapped"""
    geometry = eta.geometry
    if not geometry.is_neighbor(x, y):
        raise DomainError(f"sites {x} and {y} are not nearest neighbors",
                          {"N": geometry.N, "d": geometry.d})
    xi, yi = geometry.index(x), geometry.index(y)
    occ = eta.occupancy.copy()
    occ[xi], occ[yi] = occ[yi], occ[xi]
    return Configuration(geometry, occ)


def flip(eta: Configuration, x: Site) -> Configuration:
    """Return eta^x: occupancy at x complemented"""
    xi = eta.geometry.index(x)
    occ = eta.occupancy.copy()
    occ[xi] ^= 1
    return Configuration(eta.geometry, occ)


def translate(eta: Configuration, x: Site) -> Configuration:
    """Return tau_x eta with (tau_x eta)_z = eta_{z+x}"""
    geometry = eta.geometry
    if isinstance(x, (int, np.integer)) and geometry.d == 1:
        shift = (int(x),)
    elif isinstance(x, (int, np.integer)):
        shift = geometry.coords(int(x) % geometry.n_sites)
    else:
        shift = tuple(int(c) for c in x)
    grid = eta.as_grid()
    shifted = np.roll(grid, tuple(-s for s in shift), axis=tuple(range(geometry.d)))
    return Configuration(geometry, shifted.ravel())


def read_window(eta: Configuration, x: Site, window: LocalWindow) -> int:
    """Pattern index of tau_x eta restricted to the window offsets"""
    geometry = eta.geometry
    if window.d != geometry.d:
        raise DomainError(f"window dimension {window.d} does not match torus dimension {geometry.d}")
    xi = geometry.index(x)
    pattern = 0
    for bit, off in enumerate(window.offsets):
        if eta.occupancy[geometry.shift(xi, off)]:
            pattern |= 1 << bit
    return pattern


def window_patterns(occupancy: np.ndarray, window_sites: np.ndarray) -> np.ndarray:
    """Vectorised pattern indices for every site.

    ``window_sites`` is ``geometry.offset_table(window.offsets)``.
    """
    weights = (1 << np.arange(window_sites.shape[1], dtype=np.int64))
    return (occupancy[window_sites].astype(np.int64) * weights).sum(axis=1)


def pattern_bits(pattern: int, window: LocalWindow) -> np.ndarray:
    """Occupancy vector (per offset) of a pattern index"""
    return ((int(pattern) >> np.arange(window.size)) & 1).astype(np.uint8)

