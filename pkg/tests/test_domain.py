import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfplane_ac.domain import (
    ARC, FLAT, INTERIOR, ConePartition, GeodesicTransition, build_arc_boundary_data, build_flat_boundary_data,
    build_grid, reflect_values,
)
from halfplane_ac.phase_metric import MetricLattice, metric_distance


def test_interior_count_matches_lattice_count():
    R, h = 10.0, 0.5
    g = build_grid(R, h)
    count = 0
    for i, j in itertools.product(range(-20, 21), range(1, 21)):
        x, y = i * h, j * h
        if x * x + y * y < (R - h) ** 2:
            count += 1
    assert g.counts()["interior"] == count


def test_flat_nodes_on_axis():
    g = build_grid(1.0, 0.05)
    assert np.all(g.Y[g.types == FLAT] == 0.0)
    assert g.counts()["flat"] == 41


def test_arc_band_and_stencils():
    g = build_grid(10.0, 0.5)
    r = g.radius[g.types == ARC]
    assert np.all((r >= g.R - g.h) & (r <= g.R))
    ii, jj = np.nonzero(g.interior)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        assert np.all(g.active[ii + di, jj + dj])


def test_coarse_grid_rejected():
    with pytest.raises(ValueError, match="grid rule"):
        build_grid(10.0, 1.0)


def test_flat_data_values(triple_well):
    a1, a2 = triple_well.wells[0], triple_well.wells[1]
    w = 0.7
    u0 = build_flat_boundary_data(triple_well.wells, w)
    assert np.allclose(u0(0.0), 0.5 * (a1 + a2), atol=1e-15)
    assert np.linalg.norm(u0(8 * w) - a1) < 1e-6
    assert np.linalg.norm(u0(-8 * w) - a2) < 1e-6
    with pytest.raises(ValueError):
        build_flat_boundary_data(triple_well.wells, 0.0)


def test_flat_data_exponential_tails(triple_well):
    w = 0.5
    u0 = build_flat_boundary_data(triple_well.wells, w)
    x = np.linspace(1, 20, 50)
    gap = np.linalg.norm(u0(x) - triple_well.wells[0], axis=1)
    K = np.linalg.norm(triple_well.wells[0] - triple_well.wells[1])
    assert np.all(gap <= K * np.exp(-2 * x / w) + 1e-16)


def test_moment_sum_refinement(triple_well):
    u0 = build_flat_boundary_data(triple_well.wells, 1.0)
    a = u0.moment_sum(40.0, 0.1)
    b = u0.moment_sum(40.0, 0.05)
    assert np.isfinite(a) and abs(a - b) / b < 0.01
    assert np.isfinite(u0.energy_sum(triple_well, 40.0, 0.1))


def test_cone_taxonomy():
    assert ConePartition(0.0, np.pi, 2).kind() == "constant"
    assert ConePartition(np.pi / 2, np.pi / 2).kind() == "two_phase"
    assert ConePartition(np.pi / 3, np.pi, 2).kind() == "two_phase"
    assert ConePartition(np.pi / 6, 5 * np.pi / 6, 2).kind() == "triple_junction"
    with pytest.raises(ValueError):
        ConePartition(1.0, 0.5, 2)
    with pytest.raises(ValueError):
        ConePartition(0.5, 1.0)


@pytest.fixture(scope="module")
def transitions(triple_well):
    lat = MetricLattice(triple_well, 100)
    out = {}
    for i, j in ((0, 1), (0, 2), (1, 2)):
        poly = metric_distance(lat, triple_well.wells[i], triple_well.wells[j])[1]
        out[(i, j)] = GeodesicTransition(poly, triple_well)
    return out


def test_arc_value_away_from_windows(triple_well, transitions):
    g = build_grid(20.0, 0.25)
    bd = build_arc_boundary_data(ConePartition(np.pi / 3, np.pi, 2), 0.1, g, triple_well.wells, transitions)
    top = (g.index_of_x(0.0), len(g.ys) - 1)
    assert g.types[top] == ARC
    assert np.array_equal(bd.values[top], triple_well.wells[2])


def test_window_center_is_metric_midpoint(triple_well, transitions):
    g = build_grid(20.0, 0.25)
    bd = build_arc_boundary_data(ConePartition(np.pi / 2, np.pi, 2), 0.1, g, triple_well.wells, transitions)
    top = (g.index_of_x(0.0), len(g.ys) - 1)
    mid = bd.values[top]
    assert np.allclose(mid, transitions[(0, 2)](np.array(0.0), 1.0))
    # a_1 and a_3 are mirror images, so the metric midpoint is equidistant from both
    a, c = triple_well.wells[0], triple_well.wells[2]
    assert abs(np.linalg.norm(mid - a) - np.linalg.norm(mid - c)) < 0.05


def test_overlapping_windows_rejected(triple_well, transitions):
    g = build_grid(20.0, 0.25)
    cone = ConePartition(np.pi / 2, np.pi / 2 + 0.25, 2)
    with pytest.raises(ValueError, match="overlap"):
        build_arc_boundary_data(cone, 0.6 * cone.gap * 2, g, triple_well.wells, transitions)


def _arc_jumps(bd):
    g = bd.grid
    arc = g.types == ARC
    order = np.argsort(g.angle[arc])
    v = bd.values[arc][order]
    return np.linalg.norm(np.diff(v, axis=0), axis=1).max()


def test_arc_data_continuous(triple_well, transitions):
    cone = ConePartition(np.pi / 6, 5 * np.pi / 6, 2)
    for h in (0.5, 0.25, 0.125):
        g = build_grid(20.0, h)
        bd = build_arc_boundary_data(cone, 0.2, g, triple_well.wells, transitions)
        T = g.R * np.sin(0.2)
        # largest phase-plane speed of any transition per unit signed distance
        speed = max(np.max(np.linalg.norm(np.diff(t.poly, axis=0), axis=1) / (np.diff(t.frac) * 2 * T))
                    for t in transitions.values())
        assert _arc_jumps(bd) <= 2.0 * h * speed


def test_flat_ends_match_arc(triple_well, transitions):
    g = build_grid(20.0, 0.25)
    bd = build_arc_boundary_data(ConePartition(np.pi / 6, 5 * np.pi / 6, 2), 0.2, g, triple_well.wells,
                                 transitions, flat_width=0.5)
    right = (len(g.xs) - 1, 0)
    left = (0, 0)
    assert np.linalg.norm(bd.values[right] - bd.flat(g.R)) < 1e-15
    assert np.linalg.norm(bd.values[right] - triple_well.wells[0]) < 1e-12
    assert np.linalg.norm(bd.values[left] - triple_well.wells[1]) < 1e-12


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.3, 1.2), st.floats(0.3, 1.5), st.floats(0.05, 0.12))
def test_reflection(triple_well, a1, gap, w):
    a2 = min(a1 + gap, math.pi - 0.3)
    cone = ConePartition(a1, a2, 2)
    wells = triple_well.wells
    swapped = wells[[1, 0, 2]]

    def straight(ws):
        return {(i, j): GeodesicTransition(np.array([ws[i], ws[j]]), triple_well)
                for i, j in ((0, 1), (0, 2), (1, 2))}

    g = build_grid(10.0, 0.5)
    bd = build_arc_boundary_data(cone, w, g, wells, straight(wells))
    rb = build_arc_boundary_data(cone.reflected(), w, g, swapped, straight(swapped))
    mask = g.boundary
    assert np.allclose(reflect_values(rb.values)[mask], bd.values[mask], atol=1e-12)


def test_bundle_written(tmp_path, triple_well, transitions):
    g = build_grid(5.0, 0.25)
    bd = build_arc_boundary_data(ConePartition(np.pi / 6, 5 * np.pi / 6, 2), 0.2, g, triple_well.wells,
                                 transitions)
    bd.to_csv_bundle(tmp_path)
    lines = (tmp_path / "nodes.csv").read_text().splitlines()
    assert lines[0] == "x,y,type,u1,u2"
    assert len(lines) - 1 == int(g.active.sum())
    assert (tmp_path / "boundary.json").exists()
