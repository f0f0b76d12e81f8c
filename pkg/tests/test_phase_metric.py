import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfplane_ac.heteroclinic import solve_connection
from halfplane_ac.phase_metric import (
    MetricLattice, check_hypothesis_h3, extrapolated_sigma_matrix, metric_distance, richardson, sigma_matrix,
    stencil_offsets,
)
from halfplane_ac.potential import equilateral_wells, make_product_potential


@pytest.fixture(scope="module")
def lattice(triple_well):
    return MetricLattice(triple_well, 100)


def test_identity_case(lattice, triple_well):
    value, poly = metric_distance(lattice, triple_well.wells[0], triple_well.wells[0])
    assert value == 0.0
    assert len(poly) == 1


def test_edge_weights_symmetric_and_nonnegative(lattice):
    g = lattice.graph
    assert (g.data >= 0).all()
    assert abs(g - g.T).max() == 0.0


def test_wells_inside_box(lattice, triple_well):
    assert np.all(triple_well.wells > lattice.lo) and np.all(triple_well.wells < lattice.hi)


def test_stencil_is_primitive():
    offs = stencil_offsets(3)
    assert (1, 0) not in offs or (0, 1) in offs
    assert all(np.gcd(a, abs(b)) == 1 for a, b in offs)
    assert (2, 2) not in offs and (0, 2) not in offs
    assert len(offs) == 16


def test_cross_oracle_against_connection_energy(triple_well):
    ex = extrapolated_sigma_matrix(triple_well, 400)
    sigma_1d = solve_connection(triple_well, 0, 1, step=0.02, n_seeds=1).energy
    assert abs(ex.extrapolated[0, 1] - sigma_1d) / sigma_1d < 0.02


def test_equilateral_entries_equal(triple_well):
    s = sigma_matrix(MetricLattice(triple_well, 200))
    off = s[~np.eye(3, dtype=bool)]
    assert off.min() > 0
    assert (off.max() - off.min()) / off.mean() < 0.01
    assert np.array_equal(s, s.T)


def test_two_well_positive(two_well):
    s = sigma_matrix(MetricLattice(two_well, 100))
    assert s.shape == (2, 2) and s[0, 1] > 0


def test_scaling_potential_by_four_doubles_sigma(triple_well):
    quad = make_product_potential(equilateral_wells(), scale=4.0)
    s1 = sigma_matrix(MetricLattice(triple_well, 100))
    s4 = sigma_matrix(MetricLattice(quad, 100))
    off = ~np.eye(3, dtype=bool)
    assert np.allclose(s4[off], 2.0 * s1[off], rtol=0.01)


def test_geodesic_stays_off_the_box(lattice, triple_well):
    _, poly = metric_distance(lattice, triple_well.wells[0], triple_well.wells[1])
    assert not lattice.touches_box(poly)


def test_h3_reports():
    eq = check_hypothesis_h3(np.ones((3, 3)) - np.eye(3))
    assert eq.triangle_ok and eq.equal_sigma and eq.spread == 0.0
    bad = np.array([[0, 1, 2.5], [1, 0, 1], [2.5, 1, 0]], dtype=float)
    r = check_hypothesis_h3(bad)
    assert r.triangle_ok is False
    assert any(not t[4] and {t[0], t[2]} == {0, 2} for t in r.triangles)
    two = check_hypothesis_h3(np.array([[0, 1.0], [1.0, 0]]))
    assert not two.applicable and two.triangle_ok is None and two.equal_sigma
    assert two.to_dict()["triangle_ok"] == "not applicable"


def test_equilateral_table_strict_triangles(triple_well):
    r = check_hypothesis_h3(sigma_matrix(MetricLattice(triple_well, 200)))
    assert r.triangle_ok and r.spread < 0.01


def test_richardson_first_order():
    # values c + k h: exact limit recovered
    assert richardson(1.0 + 0.2, 1.0 + 0.1) == pytest.approx(1.0)


def test_outside_box_rejected(lattice):
    with pytest.raises(ValueError, match="outside"):
        lattice.snap([10.0, 0.0])


@pytest.mark.parametrize("k", [25, 50, 100])
def test_refinement_never_lengthens(triple_well, k):
    coarse = MetricLattice(triple_well, k)
    fine = MetricLattice(triple_well, 2 * k)
    shared = coarse.node_coords(np.array([coarse.snap(w) for w in triple_well.wells]))
    a = sigma_matrix(coarse, shared)
    b = sigma_matrix(fine, shared)
    assert np.all(b <= a + 1e-12)


_LAT = MetricLattice(make_product_potential(equilateral_wells()), 40)
point = st.tuples(st.floats(-1.2, 1.2), st.floats(-1.2, 1.2))


@settings(max_examples=1000, deadline=None)
@given(point, point)
def test_symmetric_exactly(p, q):
    assert metric_distance(_LAT, p, q)[0] == metric_distance(_LAT, q, p)[0]


@settings(max_examples=1000, deadline=None)
@given(point, point, point)
def test_triangle_inequality(p, q, r):
    d = lambda a, b: metric_distance(_LAT, a, b)[0]
    assert d(p, r) <= d(p, q) + d(q, r) + 1e-12
