import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfplane_ac.diagnostics import (
    cross_section, decay_fit, default_annuli, diffuse_interface, directional_energy, fit_translation,
    interface_angles, loglog_fit, max_principle_check, pohozaev_check, radial_profiles, section_bounds,
)
from halfplane_ac.domain import ConePartition, ProfileTransition, build_arc_boundary_data, build_grid
from halfplane_ac.heteroclinic import profile_on_grid, solve_connection
from halfplane_ac.partition import SharpInterface
from halfplane_ac.potential import hessian_bounds
from halfplane_ac.solver2d import Disk, HalfDiskField, energy, initial_field


def _constant(p, R=10.0, h=0.25, well=0):
    g = build_grid(R, h)
    vals = np.zeros(g.shape + (2,))
    vals[g.active] = p.wells[well]
    return HalfDiskField(g, vals, p)


def _vertical_strip(p, prof, R=20.0, h=0.1, shift=0.0):
    """u(x, y) = U(-x - shift): well endpoints[0] on the right, endpoints[1] on the left."""
    g = build_grid(R, h)
    vals = prof(-g.X - shift)
    vals[~g.active] = 0.0
    return HalfDiskField(g, vals, p)


@pytest.fixture(scope="module")
def u01(triple_well):
    return solve_connection(triple_well, 0, 1, step=0.02, n_seeds=1)


@pytest.fixture(scope="module")
def strip(triple_well, u01):
    return _vertical_strip(triple_well, u01)


@pytest.fixture(scope="module")
def mollified_cone(triple_well):
    cone = ConePartition(np.pi / 6, 5 * np.pi / 6, 2)
    R, h = 20.0, 0.1
    g = build_grid(R, h)
    pairs = {(l, r) for _, l, r in cone.discontinuities()} | {(0, 1)}
    profs = {pr: profile_on_grid(triple_well, pr[0], pr[1], h, R, n_seeds=1, tol=1e-10) for pr in sorted(pairs)}
    tr = {pr: ProfileTransition(v) for pr, v in profs.items()}
    bd = build_arc_boundary_data(cone, 0.3, g, triple_well.wells, tr, flat_width=0.25)
    width = min(v.transition_width() for v in profs.values())
    return initial_field(bd, triple_well, tr, 0.5 * width)


def test_constant_field_everything_vanishes(triple_well):
    f = _constant(triple_well)
    t = radial_profiles(f, [2.0, 5.0, 9.0])
    assert not np.any(t.potential_avg) and not np.any(t.dirichlet_avg) and not np.any(t.equipartition_defect)
    rep = pohozaev_check(f, 2.0, 8.0)
    assert abs(rep.lhs) < 1e-25 and abs(rep.rhs) < 1e-25   # W at a rounded well is ~1e-32
    assert diffuse_interface(f, 0.3).count == 0
    assert directional_energy(f, (0.1, 3.0, 1.0, 9.0), (1.0, 0.0)) == 0.0
    assert max_principle_check(f, 0, Disk(5.0), 0.1).status == "pass"
    iface = SharpInterface([((0.0, 0.0), (0.0, 10.0), (0, 1), 1.0)], [])
    d = decay_fit(f, iface, 1.0)
    assert d.degenerate and not d.reliable


def test_bookkeeping_and_monotone_defect(strip):
    radii = np.linspace(1.0, 19.0, 25)
    t = radial_profiles(strip, radii)
    for r, w, n in zip(radii, t.potential_avg, t.dirichlet_avg):
        assert w + n == pytest.approx(energy(strip, Disk(r)).total / r, rel=1e-12)
    assert np.all(np.diff(t.equipartition_defect) >= 0)
    assert np.all(t.potential_avg >= 0) and np.all(t.dirichlet_avg >= 0)


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_bookkeeping_random_fields(seed):
    from halfplane_ac.potential import equilateral_wells, make_product_potential
    p = make_product_potential(equilateral_wells())
    g = _GRID
    vals = np.random.default_rng(seed).normal(size=g.shape + (2,)) * 0.5
    vals[~g.active] = 0.0
    f = HalfDiskField(g, vals, p)
    radii = [1.5, 3.0, 4.5, 5.0]
    t = radial_profiles(f, radii)
    for r, w, n in zip(radii, t.potential_avg, t.dirichlet_avg):
        assert w + n == pytest.approx(energy(f, Disk(r)).total / r, rel=1e-12)
    assert np.all(np.diff(t.equipartition_defect) >= 0)


_GRID = build_grid(5.0, 0.25)


def test_strip_equipartition(strip):
    t = radial_profiles(strip, [8.0, 12.0, 16.0])
    assert np.allclose(t.potential_avg, t.dirichlet_avg, rtol=0.02)
    total = energy(strip, Disk(16.0)).total
    assert t.equipartition_defect[-1] < 1e-3 * total


def test_diffuse_band_width(triple_well, u01, strip):
    gamma = 0.3 * np.linalg.norm(triple_well.wells[0] - triple_well.wells[1])
    d = diffuse_interface(strip, gamma)
    s = np.linspace(-3, 3, 60001)
    gaps = np.linalg.norm(u01(s)[:, None, :] - triple_well.wells[None], axis=-1).min(axis=1)
    inside = s[gaps >= gamma]
    oracle = inside.max() - inside.min()
    g = strip.grid
    cols = d.mask[:, 50]
    width = g.xs[cols].max() - g.xs[cols].min()
    assert abs(width - oracle) <= 2 * g.h
    with pytest.raises(ValueError):
        diffuse_interface(strip, 0.9)


def test_diffuse_sets_nested(mollified_cone):
    a = diffuse_interface(mollified_cone, 0.2).mask
    b = diffuse_interface(mollified_cone, 0.4).mask
    assert np.all(b <= a)


def test_angles_on_mollified_cone(mollified_cone):
    g = mollified_cone.grid
    for ann in ((2.5, 5.0), (5.0, 10.0), (10.0, 15.0)):
        track = interface_angles(mollified_cone, ann, 0.5, expected=2)
        assert track.resolved
        for est, want in zip(track.estimates, (np.pi / 6, 5 * np.pi / 6)):
            assert abs(est - want) <= g.h / ann[0]
        for angles in track.per_radius:
            assert angles[0] < angles[1]


def test_two_phase_single_angle(strip):
    track = interface_angles(strip, (5.0, 15.0), 0.5, expected=1)
    assert track.resolved and len(track.estimates) == 1
    assert track.angle_between_rays() is None
    assert abs(track.estimates[0] - np.pi / 2) < 1e-3


def test_fit_exact_member(triple_well, u01):
    f = _vertical_strip(triple_well, u01, shift=3.0)
    fit = fit_translation(f, np.pi / 2, 10.0, u01, (np.pi / 4, np.pi / 4))
    assert fit.reliable and fit.shift == pytest.approx(3.0, abs=1e-6)
    assert fit.d0 < 1e-6 and fit.orthogonality < 1e-6
    assert fit.d0 <= fit.d1


def test_fit_even_orthogonal_perturbation(two_well):
    prof = solve_connection(two_well, 0, 1, step=0.02, n_seeds=1)
    g = build_grid(20.0, 0.1)
    bump = np.exp(-(g.X / 1.5) ** 2)
    vals = prof(-g.X) + 0.01 * bump[..., None] * np.array([0.0, 1.0])
    vals[~g.active] = 0.0
    f = HalfDiskField(g, vals, two_well)
    fit = fit_translation(f, np.pi / 2, 10.0, prof, (np.pi / 4, np.pi / 4))
    y = np.arange(-200, 201) * 0.1
    norm = np.sqrt(np.sum((0.01 * np.exp(-(y / 1.5) ** 2)) ** 2) * 0.1)
    assert abs(fit.shift) < 1e-6
    assert fit.d0 == pytest.approx(norm, rel=1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.0, 2.0))
def test_fit_translation_equivariant(triple_well, u01, s):
    base = fit_translation(_STRIP_CACHE(triple_well, u01, 0.0), np.pi / 2, 10.0, u01, (np.pi / 4, np.pi / 4))
    moved = fit_translation(_STRIP_CACHE(triple_well, u01, s), np.pi / 2, 10.0, u01, (np.pi / 4, np.pi / 4))
    assert abs((moved.shift - base.shift) - s) <= 0.25
    assert moved.d0 <= moved.d1


def _STRIP_CACHE(p, prof, s, _cache={}):
    if s not in _cache:
        _cache.clear()
        _cache[s] = _vertical_strip(p, prof, R=20.0, h=0.25, shift=s)
    return _cache[s]


def test_section_substitutes_wells(strip, u01):
    sec = cross_section(strip, np.pi / 2, 5.0, (0.1, 0.1), u01.left, u01.right, 6.0)
    assert not sec.inside.all()
    out = ~sec.inside
    assert np.all((sec.values[out & (sec.y < 0)] == u01.left))
    assert np.all((sec.values[out & (sec.y > 0)] == u01.right))
    assert section_bounds(np.pi / 2, (0.0, np.pi)) == (np.pi / 4, np.pi / 4)


def test_directional_energy_invariant_direction(strip):
    along = directional_energy(strip, (0.3, 2.8, 2.0, 15.0), (0.0, 1.0))
    across = directional_energy(strip, (0.3, 2.8, 2.0, 15.0), (1.0, 0.0))
    assert along < 1e-20 and across > 1.0


def test_max_principle_guard_and_pass(strip):
    deep = Disk(3.0)
    off = max_principle_check(strip, 0, deep, 0.05)
    assert off.status == "not applicable"

    class Ball:
        def contains(self, X, Y):
            return np.hypot(X - 10.0, Y - 10.0) <= 3.0

    pre = max_principle_check(strip, 0, Ball(), 1.0)
    r = 2.0 * pre.boundary_max
    assert max_principle_check(strip, 0, Ball(), r).status == "pass"


def test_decay_rate_of_strip(triple_well, u01, strip):
    c1 = hessian_bounds(triple_well)[0]
    iface = SharpInterface([((0.0, 0.0), (0.0, 20.0), (0, 1), 1.0)], [])
    d = decay_fit(strip, iface, 5.0 / np.sqrt(c1), max_distance=2.4)
    assert d.reliable and not d.degenerate
    assert d.k == pytest.approx(np.sqrt(c1), rel=0.15)


def test_pohozaev_mollified_cone(mollified_cone):
    g = mollified_cone.grid
    for a, b in default_annuli(g.R):
        rep = pohozaev_check(mollified_cone, a, b)
        assert rep.margin >= -g.h * 2.0


def test_loglog_fit_recovers_power():
    x = np.geomspace(1, 100, 20)
    fit = loglog_fit(x, 3.0 * x ** 0.4)
    assert fit.slope == pytest.approx(0.4, abs=1e-12) and fit.r_squared == pytest.approx(1.0)
