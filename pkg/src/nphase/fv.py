"""First-order finite-volume time stepping on a uniform 1D grid.

The cell array ``U`` has shape ``(n_cells, 3N-1)`` in the layout of
:mod:`nphase.model`. Interface ``i`` of the ghosted array separates ghost-array
cells ``i`` and ``i+1``; real cell ``j`` is ghost-array cell ``j+1``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numba
import numpy as np
from numba import njit, prange

from .eos import Eos, eos_pressure, eos_sound_speed, stack_rows
from .exceptions import AdmissibilityError, DomainError
from .model import cell_energies, first_inadmissible, validate
from .riemann import (
    DEFAULT_ETA,
    MAX_NEWTON,
    OK,
    TOL_REL,
    allocate_scratch,
    interface_kernel,
    raise_for_status,
    selection_cap,
)

log = logging.getLogger(__name__)

TRANSMISSIVE = "transmissive"
WALL = "wall"
PERIODIC = "periodic"
BOUNDARY_KINDS = (TRANSMISSIVE, WALL, PERIODIC)
_BC_CODE = {TRANSMISSIVE: 0, WALL: 1, PERIODIC: 2}

DEFAULT_CFL = 0.45
AUDIT_TOL = 1e-10
N_INFO = 7


@dataclass
class Grid:
    """Uniform grid with one ghost layer per end."""

    x_min: float
    x_max: float
    U: np.ndarray
    eos: tuple
    left: str = TRANSMISSIVE
    right: str = TRANSMISSIVE

    def __post_init__(self):
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.eos = tuple(self.eos)
        if self.U.ndim != 2 or self.U.shape[0] < 1:
            raise DomainError("grid needs at least one cell")
        if self.U.shape[1] != 3 * len(self.eos) - 1:
            raise DomainError("state width does not match the number of phases")
        if not self.x_max > self.x_min:
            raise DomainError("degenerate grid: x_max must exceed x_min")
        for side in (self.left, self.right):
            if side not in BOUNDARY_KINDS:
                raise DomainError(f"unknown boundary kind {side!r}")
        if (self.left == PERIODIC) != (self.right == PERIODIC):
            raise DomainError("periodic boundaries must be set on both ends")

    @property
    def n_phases(self) -> int:
        return len(self.eos)

    @property
    def n_cells(self) -> int:
        return self.U.shape[0]

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self):
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def eos_table(self):
        return stack_rows(self.eos)

    def with_state(self, U):
        return replace(self, U=U)


@dataclass
class StepReport:
    dt: float
    max_speed: float
    min_slack: np.ndarray | None = None
    slack_scale: np.ndarray | None = None
    newton_hist: np.ndarray | None = None
    max_selection_iterations: int = 0
    fallback_count: int = 0


@dataclass
class StepData:
    """Per-interface results kept for the energy audit."""

    fm: np.ndarray
    fp: np.ndarray
    Gp: np.ndarray
    pidal: np.ndarray
    Q: np.ndarray
    info: np.ndarray
    status: np.ndarray

    @property
    def ustar(self):
        return self.info[:, 0]


# ------------------------------------------------------------------ kernels


@njit(cache=True, error_model="numpy")
def fill_ghosts(U, n, left, right, Ug):
    nc = U.shape[0]
    nv = U.shape[1]
    for j in range(nc):
        for v in range(nv):
            Ug[j + 1, v] = U[j, v]
    for v in range(nv):
        if left == 2:
            Ug[0, v] = U[nc - 1, v]
            Ug[nc + 1, v] = U[0, v]
        else:
            Ug[0, v] = U[0, v]
            Ug[nc + 1, v] = U[nc - 1, v]
    if left == 1:
        for k in range(n):
            Ug[0, 2 * n - 1 + k] = -U[0, 2 * n - 1 + k]
    if right == 1:
        for k in range(n):
            Ug[nc + 1, 2 * n - 1 + k] = -U[nc - 1, 2 * n - 1 + k]


@njit(cache=True, error_model="numpy", inline="always")
def _pack(row, n, w):
    s = 0.0
    for k in range(n - 1):
        s += row[k]
    for k in range(n):
        alpha = row[k] if k < n - 1 else 1.0 - s
        m = row[n - 1 + k]
        tau = alpha / m
        w[k, 0] = alpha
        w[k, 1] = tau
        w[k, 2] = row[2 * n - 1 + k] / m
        w[k, 3] = tau


def _relaxation_loop_py(Ug, n, eos, eta, cap, tol, maxit, fm, fp, Gp, pidal, Q, info, status, nchunks, with_q):
    nf = Ug.shape[0] - 1
    for c in prange(nchunks):
        sc = allocate_scratch(n)
        wl = np.empty((n, 4))
        wr = np.empty((n, 4))
        i0 = c * nf // nchunks
        i1 = (c + 1) * nf // nchunks
        for i in range(i0, i1):
            _pack(Ug[i], n, wl)
            _pack(Ug[i + 1], n, wr)
            st = interface_kernel(wl, wr, eos, n, eta, cap, tol, maxit, sc, fm[i], fp[i], Gp[i], info[i], with_q)
            status[i] = st
            for k in range(n):
                pidal[i, k] = sc[10][k]
                Q[i, k] = sc[11][k] if with_q else np.nan


_relaxation_loop_serial = njit(cache=True)(_relaxation_loop_py)
_relaxation_loop_parallel = njit(cache=True, parallel=True)(_relaxation_loop_py)


def _rusanov_loop_py(Ug, n, eos, fm, fp, speed, nchunks):
    nf = Ug.shape[0] - 1
    nv = 3 * n - 1
    for c in prange(nchunks):
        wl = np.empty((n, 4))
        wr = np.empty((n, 4))
        fl = np.empty(nv)
        fr = np.empty(nv)
        pl = np.empty(n)
        pr = np.empty(n)
        i0 = c * nf // nchunks
        i1 = (c + 1) * nf // nchunks
        for i in range(i0, i1):
            _pack(Ug[i], n, wl)
            _pack(Ug[i + 1], n, wr)
            r = 0.0
            for k in range(n - 1):
                fl[k] = 0.0
                fr[k] = 0.0
            for k in range(n):
                rho = 1.0 / wl[k, 1]
                pl[k] = eos_pressure(eos[k], rho)
                r = max(r, abs(wl[k, 2]) + eos_sound_speed(eos[k], rho))
                m = wl[k, 0] * rho
                fl[n - 1 + k] = m * wl[k, 2]
                fl[2 * n - 1 + k] = m * wl[k, 2] * wl[k, 2] + wl[k, 0] * pl[k]
                rho = 1.0 / wr[k, 1]
                pr[k] = eos_pressure(eos[k], rho)
                r = max(r, abs(wr[k, 2]) + eos_sound_speed(eos[k], rho))
                m = wr[k, 0] * rho
                fr[n - 1 + k] = m * wr[k, 2]
                fr[2 * n - 1 + k] = m * wr[k, 2] * wr[k, 2] + wr[k, 0] * pr[k]
            for v in range(nv):
                f = 0.5 * (fl[v] + fr[v]) - 0.5 * r * (Ug[i + 1, v] - Ug[i, v])
                fm[i, v] = f
                fp[i, v] = f
            ubar = 0.5 * (wl[0, 2] + wr[0, 2])
            for k in range(n - 1):
                b = 0.5 * ubar * (wr[k, 0] - wl[k, 0])
                fm[i, k] += b
                fp[i, k] -= b
            for k in range(1, n):
                b = 0.5 * 0.5 * (pl[k] + pr[k]) * (wr[k, 0] - wl[k, 0])
                fm[i, 2 * n - 1] += b
                fp[i, 2 * n - 1] -= b
                fm[i, 2 * n - 1 + k] -= b
                fp[i, 2 * n - 1 + k] += b
            speed[i] = r


_rusanov_loop_serial = njit(cache=True)(_rusanov_loop_py)
_rusanov_loop_parallel = njit(cache=True, parallel=True)(_rusanov_loop_py)


@njit(cache=True, error_model="numpy")
def update_kernel(U, fm, fp, lam, out):
    for j in range(U.shape[0]):
        for v in range(U.shape[1]):
            out[j, v] = U[j, v] - lam * (fm[j + 1, v] - fp[j, v])


@njit(cache=True, error_model="numpy")
def audit_kernel(E0, E1, M0, M1, Gp, ustar, pidal, lam, n, slack, scale):
    """Slack of the discrete phasic energy inequalities per cell and phase."""
    for j in range(E0.shape[0]):
        jl = j
        jr = j + 1
        for k in range(n):
            sgn = -1.0 if k == 0 else 1.0
            tl = 0.0
            if ustar[jl] >= 0.0:
                tl = sgn * lam * ustar[jl] * pidal[jl, k]
            tr = 0.0
            if ustar[jr] <= 0.0:
                tr = sgn * lam * ustar[jr] * pidal[jr, k]
            fl = lam * (Gp[jr, k] - Gp[jl, k])
            rhs = E0[j, k] - fl + tl + tr
            slack[j, k] = rhs - E1[j, k]
            scale[j, k] = (
                M0[j, k] + M1[j, k] + lam * (abs(Gp[jr, k]) + abs(Gp[jl, k])) + abs(tl) + abs(tr)
            )


@njit(cache=True, error_model="numpy")
def mixture_pressure(U, n, eos, out):
    """``sum_k alpha_k p_k`` per cell."""
    for j in range(U.shape[0]):
        s = 0.0
        for k in range(n - 1):
            s += U[j, k]
        P = 0.0
        for k in range(n):
            alpha = U[j, k] if k < n - 1 else 1.0 - s
            P += alpha * eos_pressure(eos[k], U[j, n - 1 + k] / alpha)
        out[j] = P


# --------------------------------------------------------------- workspace


class Workspace:
    """Preallocated buffers for one grid size and phase count."""

    def __init__(self, n_cells, n_phases, threads=1):
        n = n_phases
        nv = 3 * n - 1
        nf = n_cells + 1
        self.Ug = np.empty((n_cells + 2, nv))
        self.fm = np.empty((nf, nv))
        self.fp = np.empty((nf, nv))
        self.Gp = np.zeros((nf, n))
        self.pidal = np.zeros((nf, n))
        self.Q = np.zeros((nf, n))
        self.info = np.zeros((nf, N_INFO))
        self.status = np.zeros(nf, dtype=np.int64)
        self.speed = np.zeros(nf)
        self.E0 = np.empty((n_cells, n))
        self.E1 = np.empty((n_cells, n))
        self.M0 = np.empty((n_cells, n))
        self.M1 = np.empty((n_cells, n))
        self.slack = np.empty((n_cells, n))
        self.scale = np.empty((n_cells, n))
        self.threads = max(1, int(threads))

    @property
    def nchunks(self):
        return 1 if self.threads == 1 else 8 * self.threads


def _workspace_for(grid, ws, threads):
    if ws is None or ws.Ug.shape[0] != grid.n_cells + 2 or ws.fm.shape[1] != grid.U.shape[1]:
        ws = Workspace(grid.n_cells, grid.n_phases, threads or 1)
    return ws


def apply_boundaries(grid: Grid, out=None):
    """Ghosted copy of the cell array, shape ``(n_cells + 2, 3N-1)``."""
    if out is None:
        out = np.empty((grid.n_cells + 2, grid.U.shape[1]))
    fill_ghosts(grid.U, grid.n_phases, _BC_CODE[grid.left], _BC_CODE[grid.right], out)
    return out


def relaxation_interfaces(grid: Grid, eta=DEFAULT_ETA, ws: Workspace | None = None, threads=None,
                          with_q=False) -> StepData:
    """Solve every interface of the grid and return fluxes and fan data.

    The contact energy residuals ``Q`` are NaN unless ``with_q`` is set.
    """
    ws = _workspace_for(grid, ws, threads)
    n = grid.n_phases
    apply_boundaries(grid, ws.Ug)
    loop = _relaxation_loop_serial if ws.nchunks == 1 else _relaxation_loop_parallel
    loop(ws.Ug, n, grid.eos_table, eta, selection_cap(eta), TOL_REL, MAX_NEWTON,
         ws.fm, ws.fp, ws.Gp, ws.pidal, ws.Q, ws.info, ws.status, ws.nchunks, with_q)
    bad = np.flatnonzero(ws.status != OK)
    if bad.size:
        i = int(bad[0])
        raise_for_status(int(ws.status[i]), where=f"interface {i} (x = {grid.x_min + i * grid.dx:.6g})")
    return StepData(ws.fm, ws.fp, ws.Gp, ws.pidal, ws.Q, ws.info, ws.status)


def rusanov_interfaces(grid: Grid, ws: Workspace | None = None, threads=None):
    ws = _workspace_for(grid, ws, threads)
    apply_boundaries(grid, ws.Ug)
    loop = _rusanov_loop_serial if ws.nchunks == 1 else _rusanov_loop_parallel
    loop(ws.Ug, grid.n_phases, grid.eos_table, ws.fm, ws.fp, ws.speed, ws.nchunks)
    return ws.fm, ws.fp, ws.speed


def _check_cfl(cfl_number):
    if not (0.0 < cfl_number < 0.5):
        raise DomainError(f"CFL number must lie in (0, 0.5), got {cfl_number}")


def cfl_dt(grid: Grid, eta=DEFAULT_ETA, cfl_number=DEFAULT_CFL, data: StepData | None = None):
    """Time step from the relaxation wave speeds of every interface."""
    _check_cfl(cfl_number)
    if data is None:
        data = relaxation_interfaces(grid, eta)
    smax = float(np.max(data.info[:, 1]))
    if not smax > 0.0:
        raise DomainError("all wave speeds vanish; time step undefined")
    return cfl_number * grid.dx / smax


def _finish(grid, U_new, where="update"):
    j = first_inadmissible(U_new, grid.n_phases)
    if j >= 0:
        raise AdmissibilityError(
            f"inadmissible state after {where} in cell {j} (x = {grid.centers[j]:.6g})",
            validate(U_new[j], grid.n_phases),
            cell=j,
        )


def step_relaxation(grid: Grid, eta=DEFAULT_ETA, cfl_number=DEFAULT_CFL, dt_max=None, audit=True,
                    ws: Workspace | None = None, threads=None):
    """One step of the relaxation scheme. Returns ``(new_grid, report)``."""
    _check_cfl(cfl_number)
    ws = _workspace_for(grid, ws, threads)
    data = relaxation_interfaces(grid, eta, ws)
    smax = float(np.max(data.info[:, 1]))
    dt = cfl_number * grid.dx / smax
    if dt_max is not None and dt > dt_max:
        dt = dt_max
    lam = dt / grid.dx
    U_new = np.empty_like(grid.U)
    update_kernel(grid.U, data.fm, data.fp, lam, U_new)
    _finish(grid, U_new)
    solved = data.info[:, 6] > 0
    report = StepReport(
        dt=dt,
        max_speed=smax,
        newton_hist=np.bincount(data.info[solved, 2].astype(np.int64), minlength=1),
        max_selection_iterations=int(data.info[:, 3].max()),
        fallback_count=int(data.info[:, 4].sum()),
    )
    if audit:
        slack, scale = energy_audit(grid.U, U_new, grid.eos_table, data, lam, ws)
        rel = slack / np.maximum(scale, np.finfo(float).tiny)
        report.min_slack = slack.min(axis=0)
        report.slack_scale = rel.min(axis=0)
    return grid.with_state(U_new), report


def step_rusanov(grid: Grid, cfl_number=DEFAULT_CFL, dt_max=None, ws: Workspace | None = None, threads=None):
    """One step of the Rusanov baseline. Returns ``(new_grid, report)``."""
    _check_cfl(cfl_number)
    ws = _workspace_for(grid, ws, threads)
    fm, fp, speed = rusanov_interfaces(grid, ws)
    smax = float(speed.max())
    dt = cfl_number * grid.dx / smax
    if dt_max is not None and dt > dt_max:
        dt = dt_max
    U_new = np.empty_like(grid.U)
    update_kernel(grid.U, fm, fp, dt / grid.dx, U_new)
    _finish(grid, U_new)
    return grid.with_state(U_new), StepReport(dt=dt, max_speed=smax)


def energy_audit(U_before, U_after, eos_table, data: StepData, lam, ws: Workspace | None = None):
    """Slack ``rhs - lhs`` of the discrete energy inequalities and its magnitude scale.

    Both arrays have shape ``(n_cells, N)``; a negative slack beyond roundoff
    marks a violated inequality.
    """
    n = eos_table.shape[0]
    nc = U_before.shape[0]
    if ws is None:
        E0 = np.empty((nc, n))
        E1 = np.empty((nc, n))
        M0 = np.empty((nc, n))
        M1 = np.empty((nc, n))
        slack = np.empty((nc, n))
        scale = np.empty((nc, n))
    else:
        E0, E1, M0, M1, slack, scale = ws.E0, ws.E1, ws.M0, ws.M1, ws.slack, ws.scale
    cell_energies(U_before, n, eos_table, E0, M0)
    cell_energies(U_after, n, eos_table, E1, M1)
    audit_kernel(E0, E1, M0, M1, data.Gp, np.ascontiguousarray(data.info[:, 0]), data.pidal, lam, n, slack, scale)
    return slack.copy(), scale.copy()


# ------------------------------------------------------------------ driver


@dataclass
class RunResult:
    grid: Grid
    time: float
    steps: int
    wall_seconds: float
    min_slack: np.ndarray | None = None
    min_rel_slack: np.ndarray | None = None
    newton_hist: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))
    fallback_count: int = 0
    max_selection_iterations: int = 0
    probe_times: np.ndarray | None = None
    probe_values: np.ndarray | None = None

    @property
    def newton_median(self):
        h = self.newton_hist
        total = h.sum()
        if total == 0:
            return 0.0
        c = np.cumsum(h)
        return float(np.searchsorted(c, 0.5 * total))

    @property
    def newton_max(self):
        nz = np.flatnonzero(self.newton_hist)
        return int(nz[-1]) if nz.size else 0


def probe_weights(grid: Grid, stations):
    """Linear interpolation indices and weights between cell centres."""
    xc = grid.centers
    idx = np.clip(np.searchsorted(xc, stations) - 1, 0, grid.n_cells - 2)
    w = (np.asarray(stations) - xc[idx]) / grid.dx
    return idx, np.clip(w, 0.0, 1.0)


def run(grid: Grid, t_end, scheme="relaxation", cfl_number=DEFAULT_CFL, eta=DEFAULT_ETA, audit=False,
        probes: Sequence[float] | None = None, threads=None, max_steps=None,
        callback: Callable | None = None) -> RunResult:
    """Advance ``grid`` to ``t_end``; the last step is shortened to land exactly on it."""
    if scheme not in ("relaxation", "rusanov"):
        raise ValueError(f"unknown scheme {scheme!r}")
    _check_cfl(cfl_number)
    threads = resolve_threads(threads)
    ws = Workspace(grid.n_cells, grid.n_phases, threads)
    n = grid.n_phases
    eos = grid.eos_table
    t = 0.0
    steps = 0
    hist = np.zeros(1, dtype=np.int64)
    min_slack = np.full(n, np.inf) if audit and scheme == "relaxation" else None
    min_rel = np.full(n, np.inf) if min_slack is not None else None
    fallback = 0
    sel_max = 0
    times, values = [], []
    if probes is not None:
        pidx, pw = probe_weights(grid, probes)
        Pbuf = np.empty(grid.n_cells)

        def record(g, tt):
            mixture_pressure(g.U, n, eos, Pbuf)
            times.append(tt)
            values.append(Pbuf[pidx] * (1.0 - pw) + Pbuf[pidx + 1] * pw)

        record(grid, 0.0)
    start = time.perf_counter()
    while t < t_end:
        remaining = t_end - t
        if scheme == "relaxation":
            grid, rep = step_relaxation(grid, eta, cfl_number, dt_max=remaining, audit=audit, ws=ws)
            if rep.newton_hist.size > hist.size:
                hist = np.pad(hist, (0, rep.newton_hist.size - hist.size))
            hist[: rep.newton_hist.size] += rep.newton_hist
            fallback += rep.fallback_count
            sel_max = max(sel_max, rep.max_selection_iterations)
            if audit:
                min_slack = np.minimum(min_slack, rep.min_slack)
                min_rel = np.minimum(min_rel, rep.slack_scale)
        else:
            grid, rep = step_rusanov(grid, cfl_number, dt_max=remaining, ws=ws)
        t = t + rep.dt if rep.dt < remaining else t_end
        steps += 1
        if probes is not None:
            record(grid, t)
        if callback is not None:
            callback(grid, t, rep)
        if max_steps is not None and steps >= max_steps:
            break
    wall = time.perf_counter() - start
    res = RunResult(grid, t, steps, wall, min_slack, min_rel, hist, fallback, sel_max)
    if probes is not None:
        res.probe_times = np.asarray(times)
        res.probe_values = np.asarray(values)
    return res


def resolve_threads(threads=None):
    """Thread count from the argument, then ``NPHASE_THREADS``, default 1."""
    import os

    if threads is None:
        env = os.environ.get("NPHASE_THREADS")
        threads = int(env) if env else 1
    threads = max(1, int(threads))
    if threads > 1:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    return threads


def uniform_grid(x_min, x_max, n_cells, eos: Sequence[Eos], init: Callable, left=TRANSMISSIVE, right=TRANSMISSIVE):
    """Build a grid by evaluating ``init(x) -> U`` at cell centres."""
    dx = (x_max - x_min) / n_cells
    xc = x_min + (np.arange(n_cells) + 0.5) * dx
    U = np.array([init(x) for x in xc], dtype=np.float64)
    return Grid(x_min, x_max, U, tuple(eos), left, right)
