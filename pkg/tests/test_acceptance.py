"""Acceptance criteria. Each check records one PASS/FAIL line before asserting.

The long reproduction runs are marked ``slow``; deselect them with ``-m "not slow"``.
"""

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from helpers import random_eos, random_fractions, random_state, wave_residuals
from nphase.cli import RunConfig, matched_error_ratios, sweep
from nphase.fv import PERIODIC, Grid, run, uniform_grid
from nphase.model import conservative, first_inadmissible, primitives
from nphase.reference import build_test_case, shock_plateaus, variable_names
from nphase.riemann import m0, solve_riemann

# tolerances fixed by the acceptance criteria
PLATEAU_REL = 0.01
ORDER_MIN = 0.45
PROBE_REL = 0.02
P_STAR = 2.78e5
P_STAR2 = 6.85e5
SLACK_REL = 1e-10
RH_TOL = 1e-9
M0_TOL = 1e-12
CONSERVATION_REL = 1e-12
NEWTON_MEDIAN_MAX = 5
N_RANDOM_PROBLEMS = 1000
N_RANDOM_FANS = 10000

TC1_CELLS = 12800
TC2_MESHES = (100, 200, 400, 800, 1600)
TC3_CELLS = 5000


def report(label, ok, detail):
    line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# --------------------------------------------------------------- fixtures


@pytest.fixture(scope="module")
def tc1_fine():
    case = build_test_case("tc1")
    return case, run(case.grid(TC1_CELLS), case.t_max, audit=True)


@pytest.fixture(scope="module")
def tc1_sweep():
    return sweep(RunConfig(case="tc1", n0=100, n_max=6, reps=3))


@pytest.fixture(scope="module")
def tc2_runs():
    case = build_test_case("tc2")
    return case, [run(case.grid(n), case.t_max, audit=True) for n in TC2_MESHES]


# -------------------------------------------------------------- criterion 1


@pytest.mark.slow
def test_c1_table_plateaus(tc1_fine):
    case, res = tc1_fine
    ref = case.reference
    alpha, rho, u = primitives(res.grid.U, 3)
    worst, where = 0.0, ""
    for region in ("-", "+"):
        tab = ref.regions[region]
        for k in range(3):
            a, b = ref.plateau_window(k, region, case.t_max)
            j = int((0.5 * (a + b) - res.grid.x_min) / res.grid.dx)
            entries = [(f"rho{k + 1}", rho[j, k], tab.rho[k]), (f"u{k + 1}", u[j, k], tab.u[k])]
            if k < 2:
                entries.append((f"alpha{k + 1}", alpha[j, k], tab.alpha[k]))
            for name, got, want in entries:
                err = abs(got - want) / abs(want)
                if err > worst:
                    worst, where = err, f"{name}{region}"
    ok = report("C1", worst <= PLATEAU_REL,
                f"tc1 {TC1_CELLS} cells, worst plateau deviation {worst:.3e} at {where} (limit {PLATEAU_REL}), "
                f"wall {res.wall_seconds:.0f} s")
    assert ok


# ---------------------------------------------------------- criteria 2 and 3


@pytest.mark.slow
def test_c2_convergence_order(tc1_sweep):
    orders = tc1_sweep.orders("relaxation")
    worst = min(orders, key=orders.get)
    rus = tc1_sweep.orders("rusanov")
    ok = report("C2", all(o >= ORDER_MIN for o in orders.values()),
                f"tc1 orders over 1600..6400 cells, min {orders[worst]:.3f} ({worst}), limit {ORDER_MIN}; "
                f"all: {', '.join(f'{v}={o:.3f}' for v, o in orders.items())}; "
                f"rusanov min {min(rus.values()):.3f}")
    assert ok


@pytest.mark.slow
def test_c3_scheme_comparison(tc1_sweep):
    rel = tc1_sweep.of("relaxation")
    rus = tc1_sweep.of("rusanov")
    losses = [(a.cells, v) for a, b in zip(rel, rus) for v in tc1_sweep.variables if not a.errors[v] < b.errors[v]]
    ratios = matched_error_ratios(tc1_sweep)
    inside = [q for _, q, extrapolated in ratios if not extrapolated]
    ok_err = not losses
    ok_cpu = bool(inside) and min(inside) > 1.0
    detail = (f"relaxation error below rusanov on {len(rel) * len(tc1_sweep.variables) - len(losses)}"
              f"/{len(rel) * len(tc1_sweep.variables)} (mesh, variable) pairs; "
              f"matched-alpha1 CPU ratios {', '.join(f'{q:.2f}' for q in inside)} "
              f"(extrapolated: {', '.join(f'{q:.2f}' for _, q, x in ratios if x) or 'none'})")
    ok = report("C3", ok_err and ok_cpu, detail + (f"; losses {losses}" if losses else ""))
    assert ok


# -------------------------------------------------------------- criterion 4


@pytest.mark.slow
def test_c4_vanishing_phase(tc2_runs):
    case, runs = tc2_runs
    ref = case.reference
    x_contact = ref.x0 + ref.contact_speed * case.t_max
    over = {"rho1": [], "u1": []}
    finite = True
    for res in runs:
        finite &= bool(np.isfinite(res.grid.U).all()) and first_inadmissible(res.grid.U, 3) < 0
        x = res.grid.centers
        mask = x < x_contact
        _, rho, u = primitives(res.grid.U, 3)
        _, rx, ux = ref.sample(x, case.t_max)
        over["rho1"].append(float(np.max(np.abs(rho[mask, 0] - rx[mask, 0]) / np.abs(rx[mask, 0]))))
        over["u1"].append(float(np.max(np.abs(u[mask, 0] - ux[mask, 0]) / np.abs(ux[mask, 0]))))
    monotone = all(o[-3] >= o[-2] >= o[-1] for o in over.values())
    ok = report("C4", finite and monotone,
                f"tc2 meshes {TC2_MESHES}: admissible and finite={finite}; absent-phase deviation "
                f"rho1 {['%.2e' % v for v in over['rho1']]}, u1 {['%.2e' % v for v in over['u1']]}")
    assert ok


# -------------------------------------------------------------- criterion 5


@pytest.mark.slow
@pytest.mark.parametrize("scheme", ["relaxation", "rusanov"])
def test_c5_shock_tube_probes(scheme):
    case = build_test_case("tc3")
    res = run(case.grid(TC3_CELLS), case.t_max, scheme, probes=case.reference.stations)
    first, second = shock_plateaus(res.probe_times, res.probe_values[:, 3])
    errs = [abs(p - want) / want if p is not None else np.inf for p, want in ((first, P_STAR), (second, P_STAR2))]
    ok = report(f"C5 ({scheme})", max(errs) <= PROBE_REL,
                f"tc3 {TC3_CELLS} cells, S4 plateaus {first!r} and {second!r} Pa, "
                f"deviations {errs[0]:.3e} and {errs[1]:.3e} (limit {PROBE_REL}), wall {res.wall_seconds:.0f} s")
    assert ok


# -------------------------------------------------------------- criterion 6


def vanishing_state(rng, eos):
    """Random state; half the time one phase is nearly absent."""
    n = len(eos)
    alpha = random_fractions(rng, n)
    if rng.random() < 0.5:
        alpha[rng.integers(n)] = 10.0 ** rng.uniform(-10, -2)
        alpha /= alpha.sum()
    return conservative(alpha, rng.uniform(0.3, 3.0, n), rng.uniform(-2.0, 2.0, n))


@pytest.mark.slow
def test_c6a_positivity_on_random_problems():
    rng = np.random.default_rng(20240601)
    failures = 0
    steps = 0
    for _ in range(N_RANDOM_PROBLEMS):
        n = int(rng.integers(2, 5))
        eos = random_eos(rng, n)
        left, right = (vanishing_state(rng, eos) for _ in range(2))
        g = uniform_grid(0.0, 1.0, 40, eos, lambda x: left if x < 0.5 else right)
        bad = []

        def watch(grid, t, rep):
            if first_inadmissible(grid.U, n) >= 0:
                bad.append(t)

        try:
            r = run(g, 10.0, cfl_number=0.45, max_steps=40, callback=watch)
            steps += r.steps
        except Exception:
            failures += 1
            continue
        failures += bool(bad)
    ok = report("C6a", failures == 0,
                f"{N_RANDOM_PROBLEMS} random Riemann problems (N=2..4), {steps} steps at CFL 0.45, "
                f"{failures} with a non-admissible cell; saturation holds by construction of the last fraction")
    assert ok


def test_c6b_periodic_conservation():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        eos = random_eos(rng, 3)
        base = random_state(rng, eos)
        amp = rng.uniform(0.01, 0.1, 3)

        def init(x):
            s = np.sin(2 * np.pi * x)
            W = primitives(base[None, :], 3)
            alpha = W[0][0] * (1 + amp[0] * s * np.array([1.0, -0.5, -0.5]))
            return conservative(alpha / alpha.sum(), W[1][0] * (1 + amp[1] * s), W[2][0] + amp[2] * s)

        g = uniform_grid(0.0, 1.0, 64, eos, init, PERIODIC, PERIODIC)
        for scheme in ("relaxation", "rusanov"):
            U1 = run(g, 10.0, scheme, max_steps=100).grid.U
            m0_, m1_ = g.U[:, 2:5].sum(axis=0), U1[:, 2:5].sum(axis=0)
            q0, q1 = g.U[:, 5:].sum(), U1[:, 5:].sum()
            worst = max(worst, float(np.max(np.abs(m1_ - m0_) / m0_)),
                        abs(q1 - q0) / np.abs(g.U[:, 5:]).sum())
    ok = report("C6b", worst <= CONSERVATION_REL,
                f"periodic runs of 100 steps, worst relative drift of partial masses and mixture momentum "
                f"{worst:.2e} (limit {CONSERVATION_REL})")
    assert ok


@pytest.mark.slow
def test_c6c_energy_inequalities(tc1_fine, tc2_runs):
    _, res1 = tc1_fine
    _, runs2 = tc2_runs
    worst1 = float(np.min(res1.min_rel_slack))
    worst2 = min(float(np.min(r.min_rel_slack)) for r in runs2)
    ok = report("C6c", min(worst1, worst2) >= -SLACK_REL,
                f"min relative energy slack over every cell and step: tc1 {worst1:.2e}, tc2 {worst2:.2e} "
                f"(limit {-SLACK_REL})")
    assert ok


@pytest.mark.slow
def test_c6d_jump_audit_on_random_fans():
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(N_RANDOM_FANS):
        n = int(rng.integers(2, 5))
        eos = random_eos(rng, n)
        fan = solve_riemann(random_state(rng, eos), random_state(rng, eos), eos)
        for k, rows in enumerate(wave_residuals(fan, eos)):
            for i, (sigma, dm, dq, de, sm, sq, se) in enumerate(rows):
                on_contact = fan.states[k][i][0] != fan.states[k][i + 1][0]
                if on_contact:
                    sign = -1.0 if k == 0 else 1.0
                    pd = fan.pi_dalpha[k]
                    Q = fan.dissipation[k] if k else 0.0
                    dq = dq - sign * pd
                    de = de - (sign * fan.u1_star * pd - Q)
                    sq += abs(pd)
                    se += abs(fan.u1_star * pd)
                worst = max(worst, abs(dm) / sm, abs(dq) / sq, abs(de) / se)
    ok = report("C6d", worst < RH_TOL,
                f"{N_RANDOM_FANS} random fans (N=2..4), worst relative jump residual {worst:.2e} (limit {RH_TOL})")
    assert ok


def test_c6e_m0_identity():
    m = np.linspace(0.0, 1.0, 10002)[1:-1]
    err = max(abs(m0(1.0, (1 - x) / (1 + x)) - x) for x in m)
    ok = report("C6e", err <= M0_TOL, f"M0(1,(1-m)/(1+m)) = m on 10^4 points, max error {err:.2e} (limit {M0_TOL})")
    assert ok


def test_c6f_mirror_symmetry():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 5))
        eos = random_eos(rng, n)
        UL, UR = random_state(rng, eos), random_state(rng, eos)
        VL, VR = UR.copy(), UL.copy()
        VL[2 * n - 1 :] *= -1
        VR[2 * n - 1 :] *= -1
        a = solve_riemann(UL, UR, eos)
        b = solve_riemann(VL, VR, eos)
        scale = float(np.max(a.a)) * max(float(np.max(UL[n - 1 : 2 * n - 1] ** -1)), 1.0)
        worst = max(worst, abs(a.u1_star + b.u1_star) / scale,
                    float(np.max(np.abs(a.pi_star - b.pi_star) / np.abs(a.pi_star))))
        for k in range(n):
            for s, t in zip(a.states[k], reversed(b.states[k])):
                worst = max(worst, abs(s[1] - t[1]) / s[1], abs(s[2] + t[2]) / scale)
    ok = report("C6f", worst <= 1e-9, f"1000 random fans against their mirror images, worst deviation {worst:.2e}")
    assert ok


@pytest.mark.slow
def test_c6g_newton_iterations(tc1_fine):
    _, res = tc1_fine
    ok = report("C6g", res.newton_median <= NEWTON_MEDIAN_MAX,
                f"tc1 {TC1_CELLS} cells, median Newton iterations {res.newton_median:.0f}, max {res.newton_max} "
                f"(limit median {NEWTON_MEDIAN_MAX})")
    assert ok


# -------------------------------------------------------------- criterion 7


def test_c7_uniform_fixed_point():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(5):
        eos = random_eos(rng, 3)
        U = random_state(rng, eos)
        g = Grid(0.0, 1.0, np.tile(U, (32, 1)), eos)
        for scheme in ("relaxation", "rusanov"):
            out = run(g, 1e9, scheme, max_steps=100)
            assert out.steps == 100
            worst = max(worst, float(np.max(np.abs(out.grid.U - g.U) / np.abs(g.U))))
    ok = report("C7", worst <= 1e-14, f"uniform states, 100 steps of both schemes, max relative change {worst:.1e}")
    assert ok


def test_variables_cover_the_table():
    assert variable_names(3) == ("alpha1", "alpha2", "rho1", "u1", "rho2", "u2", "rho3", "u3")
