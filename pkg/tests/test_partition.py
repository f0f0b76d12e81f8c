import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfplane_ac.domain import ConePartition
from halfplane_ac.partition import (
    SharpInterface, classify_minimal_cones, cone_energy, gamma0, half_disk_partition_search, minimize_slicing,
    slicing_lower_bound, unit, young_angles, young_gap,
)

EQUAL = np.ones((3, 3)) - np.eye(3)
UNEQUAL = np.array([[0, 1.0, 1.0], [1.0, 0, 1.2], [1.0, 1.2, 0]])


def test_young_equal():
    a = young_angles(1.0, 1.0, 1.0).as_array()
    assert np.allclose(a, 2 * np.pi / 3, atol=1e-15)


def test_young_unequal_sine_relation():
    a = young_angles(1.0, 1.0, 1.2)
    r = a.sine_ratios(1.0, 1.0, 1.2)
    assert np.ptp(r) < 1e-10
    assert a.as_array().sum() == pytest.approx(2 * np.pi, abs=1e-14)


def test_young_near_degenerate():
    # phase 1 is squeezed out as sigma_23 approaches sigma_12 + sigma_13
    seq = [young_angles(1.0, 1.0, 2.0 - eps).theta1 for eps in (1e-1, 1e-2, 1e-4)]
    assert seq[0] > seq[1] > seq[2] and seq[2] < 0.03


def test_young_rejects_triangle_violation():
    with pytest.raises(ValueError, match="triangle inequality fails for triple"):
        young_angles(1.0, 1.0, 2.5)


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.05, 0.95))
def test_young_force_balance(a, b, t):
    c = abs(a - b) + t * (a + b - abs(a - b))
    ang = young_angles(a, b, c)
    assert ang.as_array().sum() == pytest.approx(2 * np.pi, abs=1e-12)
    r = ang.sine_ratios(a, b, c)
    assert np.ptp(r) <= 1e-9 * max(r.max(), 1e-300) + 1e-12


def test_cone_energy_examples():
    d = np.array([[0, 1.0, 1.3], [1.0, 0, 1.3], [1.3, 1.3, 0]])
    assert cone_energy(ConePartition(np.pi / 6, 5 * np.pi / 6, 2), EQUAL) == 2.0
    assert cone_energy(ConePartition(0.0, 2 * np.pi / 3, 2), EQUAL, d) == pytest.approx(1.3 + 1.0)
    assert cone_energy(ConePartition(np.pi, np.pi), UNEQUAL) == 1.0


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.0, np.pi), st.floats(0.0, np.pi), st.floats(0.3, 2.0), st.floats(0.3, 2.0),
       st.floats(0.3, 2.0))
def test_cone_energy_reflection(x, y, s01, s02, s12):
    a1, a2 = min(x, y), max(x, y)
    if a2 - a1 < 1e-9:
        # arcs narrower than the rounding of pi - alpha collapse under reflection
        a2 = a1
    s = np.array([[0, s01, s02], [s01, 0, s12], [s02, s12, 0]])
    swap = s[np.ix_([1, 0, 2], [1, 0, 2])]
    c = ConePartition(a1, a2, 2 if a1 < a2 else None)
    assert cone_energy(c, s) == pytest.approx(cone_energy(c.reflected(), swap), rel=1e-14)


def test_classification_equal_sigma():
    step = np.pi / 180
    cls = classify_minimal_cones(EQUAL, step)
    assert cls.min_gap >= 2 * np.pi / 3 - step
    assert cls.gap_law_holds


def test_classification_two_wells_single_jumps():
    cls = classify_minimal_cones(np.array([[0, 1.0], [1.0, 0]]))
    best = [r for r in cls.minimal if r.energy == cls.minimal[0].energy]
    assert any(0 < r.cone.alpha1 == r.cone.alpha2 < np.pi for r in best)
    assert all(len(r.cone.discontinuities()) == 1 for r in best)
    assert cls.min_gap is None


def test_classification_unequal_gap_bound():
    step = np.pi / 360
    cls = classify_minimal_cones(UNEQUAL, step)
    assert abs(cls.gap_bound - young_angles(1.0, 1.0, 1.2).theta3) < 1e-14
    assert abs(cls.min_gap - cls.gap_bound) <= step


def test_classification_step_halving():
    a = classify_minimal_cones(UNEQUAL, np.pi / 180)
    b = classify_minimal_cones(UNEQUAL, np.pi / 360)
    assert abs(a.minimal[0].energy - b.minimal[0].energy) <= np.pi / 180
    with pytest.raises(ValueError):
        classify_minimal_cones(EQUAL, np.pi / 90)


def test_gamma0_young_gap_is_two_rays():
    g = gamma0(np.pi / 6, 5 * np.pi / 6, 10.0)
    assert not g.junctions and g.total == pytest.approx(20.0, rel=1e-14)


def _stationary(iface: SharpInterface, R: float):
    base = iface.total
    for k in range(8):
        d = 1e-4 * R * unit(k * np.pi / 4)
        moved = [np.asarray(j) + d for j in iface.junctions]
        assert iface.length_with_junctions(moved) > base


def test_gamma0_steiner_junction():
    R = 10.0
    g = gamma0(np.pi / 4, 3 * np.pi / 4, R)
    assert len(g.junctions) == 1 and g.junctions[0][1] > 0
    assert np.allclose(g.incident_angles(g.junctions[0]), 2 * np.pi / 3, atol=1e-6)
    assert g.total < 2 * R
    _stationary(g, R)


def test_gamma0_weighted_angles():
    R = 10.0
    g = gamma0(np.pi / 3, 2 * np.pi / 3, R, UNEQUAL)
    want = young_angles(1.0, 1.0, 1.2)
    got = sorted(g.incident_angles(g.junctions[0]))
    assert np.allclose(got, sorted(want.as_array()), atol=1e-6)
    _stationary(g, R)


def test_slicing_formula():
    R, s = 7.0, 1.3
    assert slicing_lower_bound(0.0, 2 * np.pi / 3, R, s) == pytest.approx(2 * s * R, rel=1e-15)
    y, v = minimize_slicing(2 * np.pi / 3, R, s)
    assert y == 0.0 and v == pytest.approx(2 * s * R, rel=1e-15)
    for gap in (0.3, 1.0, 2.5):
        assert slicing_lower_bound(0.0, gap, R, s) == pytest.approx(2 * s * R, rel=1e-15)
    with pytest.raises(ValueError):
        slicing_lower_bound(-1.0, 1.0, R, s)


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.05, np.pi - 0.05))
def test_slicing_minimizer_against_grid(gap):
    R, s = 1.0, 1.0
    ys = np.linspace(0, R, 4001)
    brute = slicing_lower_bound(ys, gap, R, s).min()
    _, v = minimize_slicing(gap, R, s)
    assert v <= brute + 1e-12
    assert v >= brute - 1e-6


def test_search_two_rays():
    t = 0.4
    arcs = [(0.0, t, 0), (t, t + 2 * np.pi / 3 + 0.05, 2), (t + 2 * np.pi / 3 + 0.05, np.pi, 1)]
    res = half_disk_partition_search(arcs, EQUAL)
    assert res.value == pytest.approx(2.0, abs=1e-9)
    ends = {tuple(np.round(p, 9)) for seg in res.interface.segments for p in seg[:2]}
    assert (0.0, 0.0) in ends


def test_search_single_interface():
    res = half_disk_partition_search([(0.0, np.pi / 2, 0), (np.pi / 2, np.pi, 1)], EQUAL)
    assert res.value == pytest.approx(1.0, abs=1e-12)
    assert len(res.interface.segments) == 1


def test_search_tripod_matches_gamma0():
    a, b = np.pi / 4, 3 * np.pi / 4
    res = half_disk_partition_search([(0.0, a, 0), (a, b, 2), (b, np.pi, 1)], EQUAL)
    ref = gamma0(a, b, 1.0)
    assert abs(res.value - ref.total) < 1e-4
    assert len(res.interface.junctions) == 1
    _stationary(res.interface, 1.0)


def test_json_round_trip():
    g = gamma0(np.pi / 4, 3 * np.pi / 4, 5.0)
    back = SharpInterface.from_json(g.to_json())
    assert back.total == pytest.approx(g.total, rel=1e-15)
    assert back.junctions == [tuple(j) for j in g.junctions]


def test_young_gap_helper():
    assert young_gap(EQUAL) == pytest.approx(2 * math.pi / 3)
