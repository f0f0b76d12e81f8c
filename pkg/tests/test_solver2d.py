import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from halfplane_ac.domain import ConePartition, ProfileTransition, build_arc_boundary_data, build_grid
from halfplane_ac.heteroclinic import profile_on_grid, solve_connection
from halfplane_ac.solver2d import (
    Annulus, BudgetExhausted, Disk, HalfDiskField, NonFiniteField, Quadrilateral, Schedule, Sector, blow_down,
    cone_map, energy, field_from_boundary, initial_field, load_field, local_minimality_probe, minimize,
    pde_residual, sample, save_field, total_energy,
)


def _constant(p, R, h, well=0):
    g = build_grid(R, h)
    vals = np.zeros(g.shape + (2,))
    vals[g.active] = p.wells[well]
    return HalfDiskField(g, vals, p)


def _boundary(p, cone, R, h, smoothing=0.3):
    g = build_grid(R, h)
    pairs = {(l, r) for _, l, r in cone.discontinuities()} | {(0, 1)}
    profiles = {pr: profile_on_grid(p, pr[0], pr[1], h, R, n_seeds=1, tol=1e-11) for pr in sorted(pairs)}
    transitions = {pr: ProfileTransition(v) for pr, v in profiles.items()}
    bd = build_arc_boundary_data(cone, smoothing, g, p.wells, transitions, flat_width=0.25)
    return bd, transitions, profiles


def _solve(p, cone, R, h, tol=1e-9):
    bd, transitions, profiles = _boundary(p, cone, R, h)
    width = min(v.transition_width() for v in profiles.values())
    f0 = initial_field(bd, p, transitions, 0.5 * width)
    field, log = minimize(f0, Schedule(tol=tol, max_iter=500))
    return f0, field, log


@pytest.fixture(scope="module")
def two_phase(triple_well):
    return _solve(triple_well, ConePartition(np.pi / 2, np.pi / 2), 20.0, 0.1)


def test_constant_field_energy_and_residual(triple_well):
    f = _constant(triple_well, 10.0, 0.25)
    assert total_energy(f) == 0.0
    assert pde_residual(f).sup == 0.0


def test_strip_energy_per_length(triple_well):
    prof = solve_connection(triple_well, 0, 1, step=0.02, n_seeds=1)
    g = build_grid(20.0, 0.1)
    vals = prof(g.Y - 10.0)
    vals[~g.active] = 0.0
    f = HalfDiskField(g, vals, triple_well)
    w = 6.0
    rect = Quadrilateral(((-w / 2, 0.0), (w / 2, 0.0), (w / 2, 19.0), (-w / 2, 19.0)))
    per_length = energy(f, rect).total / w
    assert abs(per_length - prof.energy) / prof.energy < 0.02


def test_breakdown_sums():
    from halfplane_ac.potential import equilateral_wells, make_product_potential
    p = make_product_potential(equilateral_wells())
    g = build_grid(10.0, 0.25)
    rng = np.random.default_rng(3)
    vals = rng.normal(size=g.shape + (2,)) * 0.3
    vals[~g.active] = 0.0
    f = HalfDiskField(g, vals, p)
    e = energy(f)
    assert e.total == e.dirichlet_part + e.potential_part
    assert e.total == pytest.approx(total_energy(f), rel=1e-13)
    R = g.R
    whole = energy(f, Disk(R)).total
    parts = energy(f, Disk(R / 2)).total + energy(f, Annulus(R / 2, R)).total
    assert whole == pytest.approx(parts, rel=1e-13, abs=1e-13)
    empty = energy(f, Sector(0.1, 0.2, 50.0, 60.0))
    assert empty.empty and empty.total == 0.0


def test_residual_second_order(triple_well):
    prof = solve_connection(triple_well, 0, 1, step=0.005, L=3.5, n_seeds=1, tol=1e-10)
    sups = []
    for h in (0.2, 0.1):
        g = build_grid(12.0, h)
        vals = prof(g.Y - 6.0)
        vals[~g.active] = 0.0
        f = HalfDiskField(g, vals, triple_well)
        sups.append(pde_residual(f).sup)
    order = np.log2(sups[0] / sups[1])
    assert 1.8 < order < 2.2


def test_constant_data_converges_to_well(triple_well, rng):
    f = _constant(triple_well, 5.0, 0.25)
    g = f.grid
    f.values[g.interior] += 0.2 * rng.uniform(-1, 1, size=(int(g.interior.sum()), 2))
    before = f.values.copy()
    out, log = minimize(f, Schedule(tol=1e-10))
    assert np.abs(out.values[g.active] - triple_well.wells[0]).max() < 1e-10
    assert np.array_equal(out.values[g.boundary], before[g.boundary])
    assert np.all(np.diff(log.energies) <= 1e-12)


def test_two_phase_contract(two_phase, triple_well):
    f0, field, log = two_phase
    g = field.grid
    assert np.array_equal(field.values[g.boundary], f0.values[g.boundary])
    assert np.all(np.diff(log.energies) <= 1e-12)
    assert log.converged and pde_residual(field).sup < 10 * 1e-9 / g.h ** 2
    assert np.abs(field.values[g.active]).max() <= triple_well.coercivity_radius + 1


def test_two_phase_sections_match_connection(two_phase, triple_well):
    _, field, _ = two_phase
    prof = solve_connection(triple_well, 1, 0, step=0.02, n_seeds=1)
    xs = np.arange(-8.0, 8.0 + 1e-9, 0.1)
    for y in (5.0, 10.0):
        v = sample(field, np.stack([xs, np.full_like(xs, y)], axis=-1))

        def err(s):
            return np.sqrt(np.sum((v - prof(xs - s)) ** 2) * 0.1)

        best = minimize_scalar(err, bounds=(-2, 2), method="bounded", options={"xatol": 1e-8})
        assert best.fun < 5e-2


def test_probe_on_converged_field(two_phase):
    rep = local_minimality_probe(two_phase[1], trials=50)
    assert rep.passed and rep.trials == 50


def test_probe_on_well_and_perturbed(triple_well):
    f = _constant(triple_well, 10.0, 0.25)
    rep = local_minimality_probe(f, trials=10)
    assert min(rep.margins) > 0
    g = f.grid
    d2 = (g.X ** 2 + (g.Y - 5.0) ** 2) / 4.0
    bump = np.where(d2 < 1, (1 - d2) ** 2, 0.0)
    bump[~g.interior] = 0.0
    f.values = f.values + 0.8 * bump[..., None] * np.array([1.0, 0.0])
    rep = local_minimality_probe(f, trials=50, amplitudes=(0.5, 1.0))
    assert not rep.passed


def test_nan_fault_names_node(triple_well):
    f = _constant(triple_well, 5.0, 0.25)
    g = f.grid
    i, j = np.argwhere(g.interior)[7]
    f.values[i, j] = np.nan
    with pytest.raises(NonFiniteField) as info:
        minimize(f)
    assert f"{g.xs[i]:g}" in str(info.value) or str((int(i), int(j))) in str(info.value)


def test_budget_fault(two_phase):
    f0 = two_phase[0]
    with pytest.raises(BudgetExhausted) as info:
        minimize(f0, Schedule(tol=1e-12, max_iter=1, newton=False))
    assert info.value.residual > 0


def test_blow_down_identity_and_rejection(two_phase):
    field = two_phase[1]
    g = field.grid
    b = blow_down(field, 1.0, g)
    assert np.abs(b.values[g.active] - field.values[g.active]).max() < 1e-12
    with pytest.raises(ValueError):
        blow_down(field, 1.5, g)


def test_blow_down_of_cone_map(triple_well):
    cone = ConePartition(np.pi / 6, 5 * np.pi / 6, 2)
    g = build_grid(20.0, 0.25)
    f = HalfDiskField(g, cone_map(g, cone, triple_well.wells), triple_well)
    unit = build_grid(1.0, 0.05)
    target = cone_map(unit, cone, triple_well.wells)
    for r in (5.0, 10.0, 20.0):
        b = blow_down(f, r, unit)
        same = np.all(b.values == target, axis=-1)[unit.active]
        assert same.mean() > 0.9


def test_checkpoint_round_trip(tmp_path, two_phase):
    field = two_phase[1]
    save_field(field, tmp_path / "f.csv")
    back = load_field(tmp_path / "f.csv")
    assert np.array_equal(back.values, field.values)
    assert total_energy(back) == total_energy(field)


def test_reflection_equivariance(triple_well):
    R, h, tol = 8.0, 0.25, 1e-10
    cone = ConePartition(np.pi / 4, 2 * np.pi / 3, 2)
    _, field, _ = _solve(triple_well, cone, R, h, tol)
    bd, transitions, profiles = _boundary(triple_well, cone, R, h)
    # mirror in space and apply the phase-plane reflection that swaps wells 0 and 1
    d = triple_well.wells[2] / np.linalg.norm(triple_well.wells[2])

    def mirror(v):
        v = v[::-1]
        return 2.0 * (v @ d)[..., None] * d - v

    assert np.allclose(mirror(triple_well.wells[None, [1, 0, 2]])[0], triple_well.wells)
    g = bd.grid
    width = min(v.transition_width() for v in profiles.values())
    f0 = initial_field(bd, triple_well, transitions, 0.5 * width)
    start = mirror(f0.values)
    start[~g.active] = 0.0
    out, _ = minimize(HalfDiskField(g, start, triple_well), Schedule(tol=tol))
    assert np.abs(mirror(out.values)[g.active] - field.values[g.active]).max() < 2 * tol
