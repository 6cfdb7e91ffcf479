"""Hypercubic lattice geometry, regions and cubic subsystems."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

#: maximum number of qubit-equivalents a basis index may span
MAX_INDEX_BITS = 30

METRICS = ("manhattan", "chebyshev")


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    """A ``dim``-dimensional hypercubic lattice with side ``n``.

    Sites are linearized in row-major order, so site ``i`` has coordinates
    ``np.unravel_index(i, (n,) * dim)``. Site 0 is the most significant
    digit of a basis index.
    """

    dim: int
    n: int
    local_dim: int = 2
    metric: str = "manhattan"
    periodic: bool = False

    def __post_init__(self):
        if self.dim < 1 or self.n < 1:
            raise LatticeError(f"dim and n must be positive, got dim={self.dim}, n={self.n}")
        if self.local_dim < 2:
            raise LatticeError(f"local_dim must be >= 2, got {self.local_dim}")
        if self.metric not in METRICS:
            raise LatticeError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        if self.num_sites * math.log2(self.local_dim) > MAX_INDEX_BITS:
            raise LatticeError(
                f"Hilbert space {self.local_dim}^{self.num_sites} exceeds the "
                f"{MAX_INDEX_BITS}-bit basis index width"
            )

    @property
    def num_sites(self) -> int:
        return self.n**self.dim

    @property
    def hilbert_dim(self) -> int:
        return self.local_dim**self.num_sites

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    def coords(self, site: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(site, self.shape))

    def index(self, coords: Iterable[int]) -> int:
        return int(np.ravel_multi_index(tuple(coords), self.shape))

    def site_distance(self, i: int, j: int) -> int:
        a = np.asarray(self.coords(i))
        b = np.asarray(self.coords(j))
        diff = np.abs(a - b)
        if self.periodic:
            diff = np.minimum(diff, self.n - diff)
        if self.metric == "manhattan":
            return int(diff.sum())
        return int(diff.max())

    def region(self, sites: Iterable[int]) -> "Region":
        return Region(self, sites)

    def all_sites(self) -> "Region":
        return Region(self, range(self.num_sites))

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour pairs ``(i, j)`` with ``i`` the lower coordinate.

        Periodic wrap bonds are included only when ``periodic`` is set and
        ``n > 2`` (for ``n == 2`` the wrap bond duplicates the open one).
        """
        out = []
        for i in range(self.num_sites):
            c = list(self.coords(i))
            for axis in range(self.dim):
                nxt = list(c)
                nxt[axis] += 1
                if nxt[axis] < self.n:
                    out.append((i, self.index(nxt)))
                elif self.periodic and self.n > 2:
                    nxt[axis] = 0
                    out.append((i, self.index(nxt)))
        return out

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "n": self.n,
            "local_dim": self.local_dim,
            "metric": self.metric,
            "periodic": self.periodic,
        }


@dataclass(frozen=True)
class Region:
    """A sorted set of sites of a parent lattice."""

    spec: LatticeSpec = field(repr=False)
    sites: tuple[int, ...]

    def __init__(self, spec: LatticeSpec, sites: Iterable[int]):
        s = tuple(sorted(int(x) for x in sites))
        if len(set(s)) != len(s):
            raise LatticeError(f"duplicate sites in region {s}")
        if s and (s[0] < 0 or s[-1] >= spec.num_sites):
            raise LatticeError(f"region {s} out of range for {spec.num_sites} sites")
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "sites", s)

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, site) -> bool:
        return site in self.sites

    @property
    def dim(self) -> int:
        """Hilbert space dimension ``local_dim ** |S|``."""
        return self.spec.local_dim ** len(self.sites)

    def union(self, other: "Region") -> "Region":
        return Region(self.spec, set(self.sites) | set(other.sites))

    def intersects(self, other: "Region") -> bool:
        return not set(self.sites).isdisjoint(other.sites)

    def diameter(self, metric: str | None = None) -> int:
        if len(self.sites) <= 1:
            return 0
        spec = self.spec if metric is None else _with_metric(self.spec, metric)
        return max(spec.site_distance(i, j) for i, j in itertools.combinations(self.sites, 2))


def _with_metric(spec: LatticeSpec, metric: str) -> LatticeSpec:
    return LatticeSpec(spec.dim, spec.n, spec.local_dim, metric, spec.periodic)


def distance(spec: LatticeSpec, x: Region, y: Region) -> int:
    """Minimum site-to-site distance between two nonempty regions."""
    if len(x) == 0 or len(y) == 0:
        raise LatticeError("distance is undefined for an empty region")
    return min(spec.site_distance(i, j) for i in x for j in y)


def cubic_subsystems(spec: LatticeSpec, l: int) -> list[Region]:
    """All axis-aligned hypercubes of side ``l``; they never wrap around."""
    if l < 1 or l > spec.n:
        raise LatticeError(f"cube side l={l} must lie in [1, n={spec.n}]")
    cubes = []
    offsets = list(itertools.product(range(l), repeat=spec.dim))
    for anchor in itertools.product(range(spec.n - l + 1), repeat=spec.dim):
        sites = [spec.index(tuple(a + o for a, o in zip(anchor, off))) for off in offsets]
        cubes.append(Region(spec, sites))
    return cubes


def complement(spec: LatticeSpec, s: Region) -> Region:
    return Region(spec, set(range(spec.num_sites)) - set(s.sites))
