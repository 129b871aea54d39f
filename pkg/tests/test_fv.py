import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import TC1_EOS, random_eos, random_state
from nphase import AdmissibilityError, DomainError
from nphase.fv import (
    PERIODIC,
    TRANSMISSIVE,
    WALL,
    Grid,
    _finish,
    apply_boundaries,
    cfl_dt,
    energy_audit,
    relaxation_interfaces,
    run,
    step_relaxation,
    step_rusanov,
    uniform_grid,
    update_kernel,
)
from nphase.model import conservative, first_inadmissible, lift
from nphase.reference import build_test_case, l1_errors, variable_names

SUBSONIC = conservative([0.5, 0.3, 0.2], [2.0, 1.0, 1.2], [0.3, -0.2, 0.5])


def flat_grid(U, n_cells=20, left=TRANSMISSIVE, right=TRANSMISSIVE, eos=TC1_EOS):
    return Grid(0.0, 1.0, np.tile(U, (n_cells, 1)), eos, left, right)


def smooth_periodic(n_cells=64):
    def init(x):
        s = np.sin(2 * np.pi * x)
        return conservative([0.5 + 0.1 * s, 0.3 - 0.05 * s, 0.2 - 0.05 * s],
                            [2.0 + 0.2 * s, 1.0 + 0.1 * np.cos(2 * np.pi * x), 1.2],
                            [0.3 + 0.1 * s, -0.2, 0.5 - 0.1 * s])

    return uniform_grid(0.0, 1.0, n_cells, TC1_EOS, init, PERIODIC, PERIODIC)


def totals(U, n):
    return U[:, n - 1 : 2 * n - 1].sum(axis=0), U[:, 2 * n - 1 :].sum()


@pytest.fixture(scope="module")
def tc1_runs():
    case = build_test_case("tc1")
    rel = run(case.grid(100), case.t_max, "relaxation", audit=True)
    rus = run(case.grid(100), case.t_max, "rusanov")
    return case, rel, rus


# ------------------------------------------------------------------- grid


def test_grid_rejects_degenerate_input():
    with pytest.raises(DomainError):
        Grid(1.0, 1.0, np.tile(SUBSONIC, (4, 1)), TC1_EOS)
    with pytest.raises(DomainError):
        Grid(0.0, 1.0, np.empty((0, 8)), TC1_EOS)
    with pytest.raises(DomainError):
        Grid(0.0, 1.0, np.tile(SUBSONIC, (4, 1)), TC1_EOS, PERIODIC, WALL)
    with pytest.raises(DomainError):
        Grid(0.0, 1.0, np.tile(SUBSONIC, (4, 1)), TC1_EOS, "open")
    with pytest.raises(DomainError):
        Grid(0.0, 1.0, np.zeros((4, 5)), TC1_EOS)


def test_grid_spacing():
    g = flat_grid(SUBSONIC, 40)
    assert g.dx == 1.0 / 40
    np.testing.assert_allclose(g.centers[[0, -1]], [0.5 / 40, 1 - 0.5 / 40])


# ------------------------------------------------------------- boundaries


def test_transmissive_ghosts_copy_the_edge_cells():
    g = smooth_periodic(10)
    g = Grid(g.x_min, g.x_max, g.U, g.eos)
    Ug = apply_boundaries(g)
    np.testing.assert_array_equal(Ug[0], g.U[0])
    np.testing.assert_array_equal(Ug[-1], g.U[-1])
    np.testing.assert_array_equal(Ug[1:-1], g.U)


def test_wall_ghosts_mirror_velocities():
    g = smooth_periodic(10)
    g = Grid(g.x_min, g.x_max, g.U, g.eos, WALL, WALL)
    Ug = apply_boundaries(g)
    n = 3
    for ghost, edge in ((Ug[0], g.U[0]), (Ug[-1], g.U[-1])):
        np.testing.assert_array_equal(ghost[: 2 * n - 1], edge[: 2 * n - 1])
        np.testing.assert_array_equal(ghost[2 * n - 1 :], -edge[2 * n - 1 :])


def test_periodic_ghosts_wrap():
    g = smooth_periodic(10)
    Ug = apply_boundaries(g)
    np.testing.assert_array_equal(Ug[0], g.U[-1])
    np.testing.assert_array_equal(Ug[-1], g.U[0])


def test_wall_mass_flux_vanishes():
    g = smooth_periodic(16)
    g = Grid(g.x_min, g.x_max, g.U, g.eos, WALL, WALL)
    data = relaxation_interfaces(g)
    n = 3
    for face, cell in ((0, 0), (-1, -1)):
        scale = np.abs(g.U[cell, 2 * n - 1 :]).max() + np.abs(g.U[cell, n - 1 : 2 * n - 1]).max()
        assert np.all(np.abs(data.fm[face, n - 1 : 2 * n - 1]) <= 1e-14 * scale)
        assert np.all(np.abs(data.fp[face, n - 1 : 2 * n - 1]) <= 1e-14 * scale)


# -------------------------------------------------------------------- CFL


def test_cfl_of_uniform_subsonic_state():
    g = flat_grid(SUBSONIC, 20)
    W = lift(SUBSONIC, 3)
    speeds = [abs(u) + 1.01 * e.sound_speed(r) for e, r, u in zip(TC1_EOS, W.rho, W.u)]
    assert cfl_dt(g, cfl_number=0.45) == pytest.approx(0.45 * g.dx / max(speeds), rel=1e-14)


def test_cfl_halves_with_doubled_cells():
    case = build_test_case("tc1")
    assert cfl_dt(case.grid(200)) == pytest.approx(0.5 * cfl_dt(case.grid(100)), rel=1e-14)


@pytest.mark.parametrize("cfl", [0.0, 0.5, 0.7, -0.1])
def test_cfl_number_bounds(cfl):
    g = flat_grid(SUBSONIC)
    with pytest.raises(DomainError):
        cfl_dt(g, cfl_number=cfl)
    with pytest.raises(DomainError):
        step_relaxation(g, cfl_number=cfl)
    with pytest.raises(DomainError):
        step_rusanov(g, cfl_number=cfl)


def test_default_cfl_number():
    g = flat_grid(SUBSONIC)
    assert cfl_dt(g) == pytest.approx(cfl_dt(g, cfl_number=0.45), rel=0)


# ----------------------------------------------------------------- updates


@pytest.mark.parametrize("scheme", ["relaxation", "rusanov"])
def test_uniform_data_is_a_fixed_point(scheme):
    g = flat_grid(SUBSONIC, 20)
    res = run(g, 10.0, scheme, max_steps=100)
    assert res.steps == 100
    np.testing.assert_allclose(res.grid.U, g.U, rtol=1e-14, atol=1e-15)


def test_uniform_data_audit_is_an_equality():
    g = flat_grid(SUBSONIC, 20)
    _, rep = step_relaxation(g, audit=True)
    assert np.all(np.abs(rep.min_slack) <= 1e-13)


@pytest.mark.parametrize("scheme", ["relaxation", "rusanov"])
def test_periodic_conservation(scheme):
    g = smooth_periodic(64)
    m0, q0 = totals(g.U, 3)
    res = run(g, 10.0, scheme, max_steps=100)
    m1, q1 = totals(res.grid.U, 3)
    np.testing.assert_allclose(m1, m0, rtol=1e-12)
    assert abs(q1 - q0) <= 1e-12 * np.abs(res.grid.U[:, 5:]).sum()


def test_mass_is_mesh_independent_in_a_closed_tube():
    case = build_test_case("tc1")
    masses = []
    for n in (50, 100):
        g = case.grid(n)
        g = Grid(g.x_min, g.x_max, g.U, g.eos, WALL, WALL)
        res = run(g, 0.02)
        masses.append(res.grid.U[:, 2:5].sum(axis=0) * res.grid.dx)
    np.testing.assert_allclose(masses[0], masses[1], rtol=1e-12)


def test_run_lands_on_final_time():
    case = build_test_case("tc1")
    res = run(case.grid(50), 0.0123)
    assert res.time == 0.0123


def test_run_rejects_unknown_scheme():
    with pytest.raises(ValueError):
        run(flat_grid(SUBSONIC), 0.1, "godunov")


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_positivity_and_saturation_on_random_problems(seed):
    rng = np.random.default_rng(seed)
    eos = random_eos(rng, 3)
    left, right = random_state(rng, eos, du=2.0), random_state(rng, eos, du=2.0)
    g = uniform_grid(0.0, 1.0, 40, eos, lambda x: left if x < 0.5 else right)

    def watch(grid, t, rep):
        assert first_inadmissible(grid.U, 3) < 0

    res = run(g, 10.0, max_steps=60, callback=watch, audit=True)
    assert np.all(res.min_rel_slack >= -1e-10)


def test_threads_do_not_change_results():
    case = build_test_case("tc1")
    a = run(case.grid(64), 0.01, threads=1)
    b = run(case.grid(64), 0.01, threads=2)
    np.testing.assert_array_equal(a.grid.U, b.grid.U)


def test_inadmissible_update_reports_the_cell():
    case = build_test_case("tc1")
    g = case.grid(50)
    data = relaxation_interfaces(g)
    out = np.empty_like(g.U)
    update_kernel(g.U, data.fm, data.fp, 50.0, out)
    j = first_inadmissible(out, 3)
    assert j >= 0
    with pytest.raises(AdmissibilityError) as exc:
        _finish(g, out)
    assert exc.value.cell == j


# -------------------------------------------------------------- energy audit


def test_tc1_audit_holds_every_step(tc1_runs):
    _, rel, _ = tc1_runs
    assert np.all(rel.min_rel_slack >= -1e-10)
    assert rel.newton_median <= 5


def test_audit_detects_injected_violation():
    case = build_test_case("tc1")
    g = case.grid(100)
    data = relaxation_interfaces(g)
    dt = cfl_dt(g, data=data)
    lam = dt / g.dx
    out = np.empty_like(g.U)
    update_kernel(g.U, data.fm, data.fp, lam, out)
    slack, _ = energy_audit(g.U, out, g.eos_table, data, lam)
    assert slack.min() >= -1e-10 * np.abs(slack).max()
    # a cell gains kinetic energy without any flux to pay for it
    bad = out.copy()
    j = 50
    bad[j, 5:] *= 1.5
    slack, scale = energy_audit(g.U, bad, g.eos_table, data, lam)
    assert (slack / scale)[j].min() < -1e-3


def test_relaxation_beats_rusanov_on_tc1(tc1_runs):
    case, rel, rus = tc1_runs
    e_rel = l1_errors(rel.grid, case.reference, case.t_max)
    e_rus = l1_errors(rus.grid, case.reference, case.t_max)
    assert set(e_rel) == set(variable_names(3))
    for name in e_rel:
        assert e_rel[name] < e_rus[name], name
