"""Nearest-neighbour geometry on the torus (Z mod L)^d and on Z^d.

Sites are plain tuples of ints.  Integer keys are row-major: axis 0 is the
most significant digit, so on a 10x10 torus ``(3, 7)`` encodes to ``73``.

On the unbounded lattice coordinates are shifted by a fixed offset and packed
into a single non-negative int64.  The packing width depends on the dimension
(31 bits per axis for d <= 2, 21 bits for d = 3) so that a key always fits in
63 bits; see :data:`COORD_BOUND`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

Site = Tuple[int, ...]

#: bits per packed coordinate on the unbounded lattice, by dimension
PACK_BITS = {1: 31, 2: 31, 3: 21}
#: strict bound on |coordinate| for the unbounded lattice, by dimension
COORD_BOUND = {d: 1 << (b - 1) for d, b in PACK_BITS.items()}


class CoordinateOverflow(OverflowError):
    """A site left the packable region of the unbounded lattice."""


@dataclass(frozen=True)
class Geometry:
    """Lattice geometry.

    ``side=None`` means the unbounded lattice Z^d; otherwise the torus
    (Z mod side)^d with ``side >= 3``.
    """

    dimension: int
    side: Optional[int] = None

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if self.side is not None and self.side < 3:
            raise ValueError(f"torus side must be >= 3, got {self.side}")

    @classmethod
    def torus(cls, dimension: int, side: int) -> "Geometry":
        return cls(dimension, side)

    @classmethod
    def unbounded(cls, dimension: int) -> "Geometry":
        return cls(dimension, None)

    @property
    def is_torus(self) -> bool:
        return self.side is not None

    @property
    def site_count(self) -> float:
        """N = L^d on the torus, ``inf`` on Z^d."""
        if self.side is None:
            return float("inf")
        return self.side**self.dimension

    @property
    def degree(self) -> int:
        return 2 * self.dimension

    # -- packing constants used by the compiled kernels -------------------

    @property
    def pack_bits(self) -> int:
        return PACK_BITS[self.dimension]

    @property
    def strides(self) -> Tuple[int, ...]:
        """Key increment for a unit step along each axis."""
        d = self.dimension
        base = self.side if self.side is not None else 1 << self.pack_bits
        return tuple(base ** (d - 1 - i) for i in range(d))

    @property
    def origin_key(self) -> int:
        return encode(self, (0,) * self.dimension)

    def validate(self, x: Sequence[int]) -> Site:
        if len(x) != self.dimension:
            raise ValueError(f"expected {self.dimension} coordinates, got {len(x)}")
        x = tuple(int(c) for c in x)
        if self.side is not None:
            return tuple(c % self.side for c in x)
        bound = COORD_BOUND[self.dimension]
        if any(abs(c) >= bound for c in x):
            raise CoordinateOverflow(f"site {x} outside |coordinate| < {bound}")
        return x


def neighbors(g: Geometry, x: Sequence[int]) -> list:
    """The 2d nearest neighbours of ``x``: axis by axis, minus before plus."""
    x = tuple(x)
    out = []
    for i in range(g.dimension):
        for step in (-1, 1):
            y = list(x)
            y[i] += step
            if g.side is not None:
                y[i] %= g.side
            out.append(tuple(y))
    return out


def encode(g: Geometry, x: Sequence[int]) -> int:
    """Integer key of a site.

    On the torus the key is sum x_i L^i, so (3, 7) with L = 10 maps to 73.
    The unbounded packing puts the first coordinate in the high bits.
    """
    x = g.validate(x)
    if g.side is not None:
        key = 0
        for c in reversed(x):
            key = key * g.side + c
        return key
    bits = g.pack_bits
    off = 1 << (bits - 1)
    key = 0
    for c in x:
        key = (key << bits) | (c + off)
    return key


def decode(g: Geometry, key: int) -> Site:
    """Inverse of :func:`encode`."""
    key = int(key)
    d = g.dimension
    if g.side is not None:
        if not 0 <= key < g.side**d:
            raise ValueError(f"key {key} out of range for torus side {g.side}")
        coords = []
        for _ in range(d):
            key, c = divmod(key, g.side)
            coords.append(c)
        return tuple(coords)
    bits = g.pack_bits
    if not 0 <= key < 1 << (bits * d):
        raise CoordinateOverflow(f"key {key} out of packing range")
    mask = (1 << bits) - 1
    off = 1 << (bits - 1)
    coords = []
    for _ in range(d):
        coords.append((key & mask) - off)
        key >>= bits
    return tuple(reversed(coords))
