import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermolattice.lattice import LatticeError, LatticeSpec, Region, complement, cubic_subsystems, distance


def test_row_major_indexing():
    spec = LatticeSpec(2, 4)
    assert spec.num_sites == 16 and spec.hilbert_dim == 2**16
    assert spec.coords(6) == (1, 2)
    assert spec.index((1, 2)) == 6


def test_hilbert_width_guard():
    with pytest.raises(LatticeError):
        LatticeSpec(1, 31)
    LatticeSpec(1, 30)


def test_region_validation():
    spec = LatticeSpec(1, 4)
    assert Region(spec, [3, 1]).sites == (1, 3)
    with pytest.raises(LatticeError):
        Region(spec, [1, 1])
    with pytest.raises(LatticeError):
        Region(spec, [4])
    assert Region(spec, [0, 2]).dim == 4


def test_distance_examples():
    chain = LatticeSpec(1, 8)
    assert distance(chain, chain.region([0]), chain.region([0])) == 0
    assert distance(chain, chain.region([0]), chain.region([5])) == 5
    sq = LatticeSpec(2, 4)
    assert distance(sq, sq.region([sq.index((0, 0))]), sq.region([sq.index((2, 3))])) == 5


def test_distance_chebyshev_and_periodic():
    sq = LatticeSpec(2, 4, metric="chebyshev")
    assert distance(sq, sq.region([0]), sq.region([sq.index((2, 3))])) == 3
    ring = LatticeSpec(1, 8, periodic=True)
    assert distance(ring, ring.region([0]), ring.region([7])) == 1


def test_distance_empty_region():
    chain = LatticeSpec(1, 4)
    with pytest.raises(LatticeError):
        distance(chain, chain.region([]), chain.region([1]))


def test_cubic_subsystem_counts():
    chain = LatticeSpec(1, 8)
    singles = cubic_subsystems(chain, 1)
    assert [r.sites for r in singles] == [(i,) for i in range(8)]
    triples = cubic_subsystems(chain, 3)
    assert [r.sites for r in triples] == [tuple(range(i, i + 3)) for i in range(6)]
    assert len(cubic_subsystems(LatticeSpec(2, 4), 2)) == 9
    with pytest.raises(LatticeError):
        cubic_subsystems(chain, 9)


def test_complement_examples():
    chain = LatticeSpec(1, 8)
    assert complement(chain, chain.region([])).sites == tuple(range(8))
    assert complement(chain, chain.all_sites()).sites == ()
    assert complement(chain, chain.region([2, 3])).sites == (0, 1, 4, 5, 6, 7)


def test_open_and_periodic_bonds():
    assert LatticeSpec(1, 4).bonds() == [(0, 1), (1, 2), (2, 3)]
    assert (0, 3) in LatticeSpec(1, 4, periodic=True).bonds() or (3, 0) in LatticeSpec(1, 4, periodic=True).bonds()
    assert len(LatticeSpec(2, 3).bonds()) == 12


lattices = st.builds(
    LatticeSpec,
    dim=st.integers(1, 2),
    n=st.integers(2, 5),
    metric=st.sampled_from(["manhattan", "chebyshev"]),
)


@given(lattices, st.data())
def test_distance_symmetric_and_reflexive(spec, data):
    sites = st.lists(st.integers(0, spec.num_sites - 1), min_size=1, max_size=3, unique=True)
    x = spec.region(data.draw(sites))
    y = spec.region(data.draw(sites))
    assert distance(spec, x, y) == distance(spec, y, x)
    assert distance(spec, x, x) == 0


@given(lattices, st.data())
def test_cubes_have_side_l(spec, data):
    l = data.draw(st.integers(1, spec.n))
    cubes = cubic_subsystems(spec, l)
    assert len(cubes) == (spec.n - l + 1) ** spec.dim
    for c in cubes:
        assert len(c) == l**spec.dim
        assert c.diameter("chebyshev") == l - 1


@given(lattices, st.data())
def test_complement_involution(spec, data):
    s = spec.region(data.draw(st.lists(st.integers(0, spec.num_sites - 1), unique=True)))
    b = complement(spec, s)
    assert not s.intersects(b) or len(s) == 0
    assert len(s) + len(b) == spec.num_sites
    assert complement(spec, b) == s
