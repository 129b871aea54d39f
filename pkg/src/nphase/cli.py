"""Command-line harness: single runs, mesh sweeps and fan dumps, all emitting CSV."""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import NPhaseError
from .fv import DEFAULT_CFL, RunResult, run
from .model import primitives
from .reference import (
    ExactRiemannReference,
    PressureProbes,
    TestCase,
    build_test_case,
    l1_errors,
    observed_order,
    variable_names,
)
from .riemann import DEFAULT_ETA, equilibrium_pack, fan_csv, solve_riemann
from .scenario import load_scenario

SCHEMES = ("relaxation", "rusanov")
MIN_CELLS = 10
EXIT_CONTRACT = 3
EXIT_IO = 4


def fmt(value) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


@dataclass
class RunConfig:
    case: str | None = "tc1"
    scenario: Path | None = None
    scheme: str = "relaxation"
    n_cells: int = 100
    cfl: float = DEFAULT_CFL
    eta: float = DEFAULT_ETA
    t_max: float | None = None
    out: Path = Path("out")
    threads: int | None = None
    probes: bool = True
    dump_fan: bool = False
    audit: bool = True
    reps: int = 3
    n0: int = 100
    n_max: int = 6

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.n_cells < MIN_CELLS or self.n0 < MIN_CELLS:
            raise ValueError(f"meshes need at least {MIN_CELLS} cells")
        if not 0.0 < self.cfl < 0.5:
            raise ValueError(f"cfl must lie in (0, 0.5), got {self.cfl}")
        if not self.eta > 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.t_max is not None and not self.t_max > 0.0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.reps < 1 or self.n_max < 0:
            raise ValueError("reps must be >= 1 and n_max >= 0")
        if (self.case is None) == (self.scenario is None):
            raise ValueError("give exactly one of a test case id or a scenario path")

    def test_case(self) -> TestCase:
        return build_test_case(self.case) if self.scenario is None else load_scenario(self.scenario)


# ------------------------------------------------------------------ single run


@dataclass
class RunOutcome:
    case: TestCase
    config: RunConfig
    result: RunResult
    wall_seconds: float
    reps: int
    errors: dict | None = None

    @property
    def min_slack(self) -> float:
        s = self.result.min_slack
        return float(np.min(s)) if s is not None else math.nan

    @property
    def min_rel_slack(self) -> float:
        s = self.result.min_rel_slack
        return float(np.min(s)) if s is not None else math.nan


def _simulate(case: TestCase, config: RunConfig, n_cells, audit=False, probes=None):
    t_max = config.t_max if config.t_max is not None else case.t_max
    return run(case.grid(n_cells), t_max, config.scheme, config.cfl, config.eta, audit=audit, probes=probes,
               threads=config.threads)


def timed(case: TestCase, config: RunConfig, n_cells, audit=False, probes=None):
    """Minimum wall time of the time loop over ``config.reps`` runs, and the first result."""
    first = None
    best = math.inf
    for _ in range(config.reps):
        res = _simulate(case, config, n_cells, audit, probes)
        first = first or res
        best = min(best, res.wall_seconds)
    return first, best


def run_case(config: RunConfig) -> RunOutcome:
    """One analysed run (audit and probes on) plus ``reps`` bare runs for timing."""
    case = config.test_case()
    probes = None
    if config.probes and isinstance(case.reference, PressureProbes):
        probes = case.reference.stations
    audit = config.audit and config.scheme == "relaxation"
    result = _simulate(case, config, config.n_cells, audit, probes)
    _, wall = timed(case, config, config.n_cells)
    errors = None
    if isinstance(case.reference, ExactRiemannReference):
        errors = l1_errors(result.grid, case.reference, result.time)
    return RunOutcome(case, config, result, wall, config.reps, errors)


SUMMARY_HEAD = ("case", "scheme", "cells", "steps", "t_final", "cfl", "eta", "wall_seconds", "repetitions",
                "min_energy_slack", "min_energy_slack_rel", "newton_median", "newton_max", "fallback_count",
                "max_selection_iterations")


def summary_row(o: RunOutcome):
    r = o.result
    rel = o.config.scheme == "relaxation"
    row = [o.case.id, o.config.scheme, r.grid.n_cells, r.steps, float(r.time), float(o.config.cfl),
           float(o.config.eta), float(o.wall_seconds), o.reps, o.min_slack, o.min_rel_slack,
           r.newton_median if rel else math.nan, r.newton_max if rel else "",
           r.fallback_count if rel else "", r.max_selection_iterations if rel else ""]
    names = variable_names(o.case.n_phases)
    row += [float(o.errors[v]) if o.errors else "" for v in names]
    return row


def summary_header(n_phases):
    return list(SUMMARY_HEAD) + [f"l1_{v}" for v in variable_names(n_phases)]


def profile_rows(result: RunResult):
    grid = result.grid
    alpha, rho, u = primitives(grid.U, grid.n_phases)
    for j, x in enumerate(grid.centers):
        row = [float(x)]
        for k in range(grid.n_phases):
            row += [float(alpha[j, k]), float(rho[j, k]), float(u[j, k])]
        yield row


def profile_header(n_phases):
    head = ["x"]
    for k in range(n_phases):
        head += [f"alpha{k + 1}", f"rho{k + 1}", f"u{k + 1}"]
    return head


def initial_fan(case: TestCase, eta=DEFAULT_ETA):
    """Relaxation fan of the first initial discontinuity."""
    if len(case.pieces) < 2:
        raise ValueError(f"{case.id} has no initial discontinuity")
    n = case.n_phases
    wl = equilibrium_pack(case.pieces[0][1].to_vector(), n)
    wr = equilibrium_pack(case.pieces[1][1].to_vector(), n)
    return solve_riemann(wl, wr, case.eos, eta=eta)


def write_run(o: RunOutcome, out: Path) -> list[Path]:
    n = o.case.n_phases
    stem = f"{o.case.id}_{o.config.scheme}_{o.result.grid.n_cells}"
    paths = [out / f"{stem}_profile.csv", out / f"{stem}_summary.csv"]
    write_csv(paths[0], profile_header(n), profile_rows(o.result))
    write_csv(paths[1], summary_header(n), [summary_row(o)])
    r = o.result
    if r.probe_times is not None:
        names = o.case.reference.names
        paths.append(out / f"{stem}_probes.csv")
        write_csv(paths[-1], ["t", *names], ([float(t), *map(float, v)] for t, v in zip(r.probe_times, r.probe_values)))
    if o.config.dump_fan:
        paths.append(out / f"{o.case.id}_fan.csv")
        paths[-1].write_text(fan_csv(initial_fan(o.case, o.config.eta)))
    return paths


# ------------------------------------------------------------------ sweep


@dataclass
class SweepRow:
    scheme: str
    cells: int
    dx: float
    wall_seconds: float
    reps: int
    errors: dict


@dataclass
class SweepTable:
    case_id: str
    variables: tuple
    rows: list = field(default_factory=list)

    def of(self, scheme):
        return [r for r in self.rows if r.scheme == scheme]

    def orders(self, scheme, last=3):
        rows = self.of(scheme)
        dx = [r.dx for r in rows]
        return {v: observed_order(dx, [r.errors[v] for r in rows], last) for v in self.variables}


def sweep(config: RunConfig, schemes: Sequence[str] = SCHEMES, progress=None) -> SweepTable:
    """Errors and timings on meshes ``n0 * 2**i`` for ``i = 0..n_max``."""
    case = config.test_case()
    if not isinstance(case.reference, ExactRiemannReference):
        raise ValueError(f"{case.id} has no exact reference to sweep against")
    table = SweepTable(case.id, variable_names(case.n_phases))
    for scheme in schemes:
        cfg = replace(config, scheme=scheme)
        for i in range(config.n_max + 1):
            cells = config.n0 * 2**i
            res, wall = timed(case, cfg, cells)
            errors = l1_errors(res.grid, case.reference, res.time)
            table.rows.append(SweepRow(scheme, cells, res.grid.dx, wall, cfg.reps, errors))
            if progress is not None:
                progress(table.rows[-1])
    return table


def matched_error_ratios(table: SweepTable, variable="alpha1", fast="relaxation", slow="rusanov"):
    """CPU ratio ``t_slow / t_fast`` at the errors reached by ``fast``.

    The slow scheme's time at a given error is interpolated log-log along its
    sweep; errors outside its range use the power law fitted to its last
    three meshes. Returns ``[(error, ratio, extrapolated)]``.
    """
    ref = table.of(slow)
    le = np.log([r.errors[variable] for r in ref])
    lt = np.log([max(r.wall_seconds, 1e-12) for r in ref])
    order = np.argsort(le)
    le, lt = le[order], lt[order]
    fit = np.polyfit(le[:3], lt[:3], 1)
    out = []
    for r in table.of(fast):
        e = math.log(r.errors[variable])
        inside = le[0] <= e <= le[-1]
        t = np.interp(e, le, lt) if inside else np.polyval(fit if e < le[0] else np.polyfit(le[-3:], lt[-3:], 1), e)
        out.append((r.errors[variable], math.exp(t) / r.wall_seconds, not inside))
    return out


def write_sweep(table: SweepTable, out: Path) -> list[Path]:
    paths = [out / f"{table.case_id}_sweep.csv", out / f"{table.case_id}_orders.csv",
             out / f"{table.case_id}_cpu_ratio.csv"]
    head = ["scheme", "cells", "dx", "wall_seconds", "repetitions", *[f"l1_{v}" for v in table.variables]]
    write_csv(paths[0], head, ([r.scheme, r.cells, float(r.dx), float(r.wall_seconds), r.reps,
                                *[float(r.errors[v]) for v in table.variables]] for r in table.rows))
    schemes = sorted({r.scheme for r in table.rows})
    rows = []
    for s in schemes:
        if len(table.of(s)) >= 2:
            rows += [[s, v, float(o)] for v, o in table.orders(s).items()]
    write_csv(paths[1], ["scheme", "variable", "order"], rows)
    if set(SCHEMES) <= set(schemes) and len(table.of("rusanov")) >= 3:
        ratios = matched_error_ratios(table)
        write_csv(paths[2], ["l1_alpha1", "cpu_ratio", "extrapolated"],
                  ([float(e), float(q), int(x)] for e, q, x in ratios))
    else:
        paths.pop()
    return paths


# ------------------------------------------------------------------ entry point


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--case", choices=("tc1", "tc2", "tc3"), help="registered test case (default tc1)")
    src.add_argument("--scenario", type=Path, help="scenario file (INI syntax) for a custom Riemann problem")
    common.add_argument("--cfl", type=float, default=DEFAULT_CFL)
    common.add_argument("--eta", type=float, default=DEFAULT_ETA, help="Whitham margin of the relaxation coefficients")
    common.add_argument("--tmax", type=float, help="override the final time")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--threads", type=int, help="interface-solve threads (fallback: NPHASE_THREADS)")
    common.add_argument("--reps", type=int, default=3, help="timing repetitions, minimum reported")

    p = argparse.ArgumentParser(prog="nphase", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one case and write profile, probe and summary CSVs")
    r.add_argument("--scheme", choices=SCHEMES, default="relaxation")
    r.add_argument("--cells", type=int, default=100)
    r.add_argument("--no-probes", dest="probes", action="store_false", help="skip probe recording")
    r.add_argument("--no-audit", dest="audit", action="store_false", help="skip the energy audit")
    r.add_argument("--dump-fan", action="store_true", help="also dump the fan of the initial discontinuity")
    s = sub.add_parser("sweep", parents=[common], help="mesh-refinement sweep over n0 * 2**i cells")
    s.add_argument("--scheme", choices=(*SCHEMES, "both"), default="both")
    s.add_argument("--cells", type=int, default=100, help="coarsest mesh n0")
    s.add_argument("--levels", type=int, default=6, help="finest refinement level n_max")
    d = sub.add_parser("dump-fan", parents=[common], help="write the fan of the initial discontinuity")
    d.set_defaults(scheme="relaxation", cells=100)
    return p


def _config(args) -> RunConfig:
    case = args.case if args.case or args.scenario else "tc1"
    scheme = args.scheme if args.scheme in SCHEMES else "relaxation"
    return RunConfig(
        case=None if args.scenario else case,
        scenario=args.scenario,
        scheme=scheme,
        n_cells=args.cells,
        cfl=args.cfl,
        eta=args.eta,
        t_max=args.tmax,
        out=args.out,
        threads=args.threads if args.threads is not None else _env_threads(),
        probes=getattr(args, "probes", True),
        dump_fan=getattr(args, "dump_fan", False),
        audit=getattr(args, "audit", True),
        reps=args.reps,
        n0=args.cells,
        n_max=getattr(args, "levels", 0),
    )


def _env_threads():
    env = os.environ.get("NPHASE_THREADS")
    return int(env) if env else None


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        config = _config(args)
    except ValueError as exc:
        parser.error(str(exc))
    try:
        if args.command == "run":
            paths = write_run(run_case(config), config.out)
        elif args.command == "sweep":
            schemes = SCHEMES if args.scheme == "both" else (args.scheme,)
            table = sweep(config, schemes, progress=lambda r: print(
                f"{r.scheme} {r.cells} cells: {r.wall_seconds:.3g} s", file=sys.stderr))
            paths = write_sweep(table, config.out)
        else:
            case = config.test_case()
            paths = [config.out / f"{case.id}_fan.csv"]
            paths[0].parent.mkdir(parents=True, exist_ok=True)
            paths[0].write_text(fan_csv(initial_fan(case, config.eta)))
    except NPhaseError as exc:
        print(f"nphase: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"nphase: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
