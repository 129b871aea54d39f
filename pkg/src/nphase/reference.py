"""Registered test cases, exact Riemann references, error norms and pressure probes.

The two Riemann test cases come with tabulated constant states on both sides
of the ``u_1`` contact. Wave speeds and rarefaction fans are derived from the
tables (never typed in), and the tables are audited against the jump relations
when a reference is built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .eos import POWER_LAW, Eos
from .exceptions import DomainError, NPhaseError, TableConsistencyError
from .fv import TRANSMISSIVE, WALL, Grid, mixture_pressure, probe_weights
from .model import MixtureState, primitives, validate

SHOCK = "shock"
RAREFACTION = "rarefaction"
REGIONS = ("L", "-", "+", "R")
RH_TOL = 1e-3


class UnknownCaseError(NPhaseError, ValueError):
    """No test case is registered under the requested id."""


@dataclass(frozen=True)
class Region:
    """Constant state of all phases; ``alpha`` includes the last phase."""

    alpha: np.ndarray
    rho: np.ndarray
    u: np.ndarray

    @classmethod
    def of(cls, alpha_head, rho, u):
        head = np.asarray(alpha_head, dtype=np.float64)
        alpha = np.append(head, 1.0 - head.sum())
        return cls(alpha, np.asarray(rho, dtype=np.float64), np.asarray(u, dtype=np.float64))

    def mixture(self) -> MixtureState:
        return MixtureState.from_arrays(self.alpha, self.rho, self.u)


def invariant_integral(eos: Eos, rho):
    """``int c(rho)/rho drho`` up to a constant."""
    rho = np.asarray(rho, dtype=np.float64)
    if eos.kind == POWER_LAW and eos.gamma != 1.0:
        return 2.0 * eos.sound_speed(rho) / (eos.gamma - 1.0)
    return eos.sound_speed(rho) * np.log(rho)


def _fan_state(eos: Eos, J, xi, sign):
    """State inside a rarefaction with invariant ``u - sign * I(rho) = J`` at ``xi = u + sign * c``."""
    xi = np.asarray(xi, dtype=np.float64)
    if eos.kind == POWER_LAW and eos.gamma != 1.0:
        g = eos.gamma
        c = sign * (xi - J) * (g - 1.0) / (g + 1.0)
        rho = (c * c / (eos.kappa * g)) ** (1.0 / (g - 1.0))
        return rho, xi - sign * c
    c = eos.sound_speed(1.0)
    u = xi - sign * c
    return np.exp(sign * (u - J) / c), u


@dataclass(frozen=True)
class Wave:
    """One acoustic wave of one phase. ``speeds`` is ``(s,)`` for a shock, ``(foot, end)`` for a fan."""

    kind: str
    speeds: tuple
    invariant: float = math.nan

    @property
    def first(self):
        return min(self.speeds)

    @property
    def last(self):
        return max(self.speeds)


@dataclass(frozen=True)
class ExactRiemannReference:
    """Self-similar exact solution assembled from four tabulated regions.

    ``left_waves[k]`` and ``right_waves[k]`` give the wave type of phase ``k``
    on either side of the contact, or ``None`` for a phase absent on that side.
    Positions are measured from ``x0``.
    """

    eos: tuple
    regions: dict
    left_waves: tuple
    right_waves: tuple
    x0: float = 0.0
    waves: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "eos", tuple(self.eos))
        missing = [r for r in REGIONS if r not in self.regions]
        if missing:
            raise TableConsistencyError(f"missing regions {missing}")
        object.__setattr__(self, "waves", tuple(self._derive(k) for k in range(self.n_phases)))

    @property
    def n_phases(self) -> int:
        return len(self.eos)

    @property
    def contact_speed(self) -> float:
        return float(self.regions["-"].u[0])

    def _derive(self, k):
        L, m, p, R = (self.regions[r] for r in REGIONS)
        if k == 0:
            jump = abs(m.u[0] - p.u[0])
            if jump > RH_TOL * max(1.0, abs(m.u[0])):
                raise TableConsistencyError(f"u_1 jumps across the contact by {jump:g}")
        for a, b, side in ((L, m, "left"), (p, R, "right")):
            if not np.allclose(a.alpha, b.alpha, rtol=0.0, atol=1e-12):
                raise TableConsistencyError(f"phase fractions change across a {side} acoustic wave")
        for name in REGIONS:
            s = self.regions[name].alpha.sum()
            if abs(s - 1.0) > 1e-12:
                raise TableConsistencyError(f"region {name} is not saturated ({s!r})")
        left = self._wave(k, L, m, self.left_waves[k], -1)
        right = self._wave(k, p, R, self.right_waves[k], +1)
        us = self.contact_speed
        if left is not None and left.last > us:
            raise TableConsistencyError(f"phase {k + 1}: left wave crosses the contact")
        if right is not None and right.first < us:
            raise TableConsistencyError(f"phase {k + 1}: right wave crosses the contact")
        return left, right

    def _wave(self, k, a, b, kind, sign):
        """Wave of family ``u + sign c`` from state ``a`` (left) to ``b`` (right)."""
        if kind is None:
            return None
        eos = self.eos[k]
        ra, ua, rb, ub = a.rho[k], a.u[k], b.rho[k], b.u[k]
        # the compressed side of a shock is the one the wave has passed over
        compressed = rb > ra if sign < 0 else ra > rb
        if kind == SHOCK:
            if not compressed:
                raise TableConsistencyError(f"phase {k + 1}: tabulated shock is not compressive")
            s = (rb * ub - ra * ua) / (rb - ra)
            qa = ra * ua * ua + eos.pressure(ra)
            qb = rb * ub * ub + eos.pressure(rb)
            res = abs((qb - qa) - s * (rb * ub - ra * ua)) / max(abs(qa), abs(qb))
            if res > RH_TOL:
                raise TableConsistencyError(f"phase {k + 1}: momentum jump residual {res:.3g} across the shock")
            return Wave(SHOCK, (float(s),))
        if kind != RAREFACTION:
            raise TableConsistencyError(f"unknown wave kind {kind!r}")
        if compressed:
            raise TableConsistencyError(f"phase {k + 1}: tabulated rarefaction is compressive")
        Ia = invariant_integral(eos, ra)
        Ib = invariant_integral(eos, rb)
        Ja = ua + Ia if sign < 0 else ua - Ia
        Jb = ub + Ib if sign < 0 else ub - Ib
        scale = max(abs(ua) + abs(Ia), abs(ub) + abs(Ib))
        if abs(Ja - Jb) > RH_TOL * scale:
            raise TableConsistencyError(f"phase {k + 1}: Riemann invariant differs across the fan")
        foot = ua + sign * eos.sound_speed(ra)
        end = ub + sign * eos.sound_speed(rb)
        return Wave(RAREFACTION, (float(foot), float(end)), float(0.5 * (Ja + Jb)))

    def sample_xi(self, xi):
        """``(alpha, rho, u)`` arrays of shape ``(len(xi), N)`` at ``xi = (x - x0)/t``.

        On a discontinuity the right limit is returned.
        """
        xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
        n = self.n_phases
        L, m, p, R = (self.regions[r] for r in REGIONS)
        alpha = np.empty((xi.size, n))
        rho = np.empty((xi.size, n))
        u = np.empty((xi.size, n))
        left_side = xi < self.contact_speed
        for k in range(n):
            alpha[:, k] = np.where(left_side, m.alpha[k], p.alpha[k])
            wl, wr = self.waves[k]
            rl, ul = self._side(k, xi, wl, L, m, -1)
            rr, ur = self._side(k, xi, wr, p, R, +1)
            rho[:, k] = np.where(left_side, rl, rr)
            u[:, k] = np.where(left_side, ul, ur)
        return alpha, rho, u

    def _side(self, k, xi, wave, a, b, sign):
        if wave is None:
            return np.full(xi.size, b.rho[k] if sign < 0 else a.rho[k]), np.full(xi.size, b.u[k] if sign < 0 else a.u[k])
        if wave.kind == SHOCK:
            before = xi < wave.speeds[0]
            return np.where(before, a.rho[k], b.rho[k]), np.where(before, a.u[k], b.u[k])
        foot, end = wave.speeds
        lo, hi = min(foot, end), max(foot, end)
        inside = (xi >= lo) & (xi <= hi)
        rho = np.where(xi < lo, a.rho[k], b.rho[k])
        u = np.where(xi < lo, a.u[k], b.u[k])
        if np.any(inside):
            rf, uf = _fan_state(self.eos[k], wave.invariant, xi[inside], sign)
            rho[inside] = rf
            u[inside] = uf
        return rho, u

    def sample(self, x, t):
        if not t > 0:
            raise DomainError(f"sampling time must be positive, got {t!r}")
        return self.sample_xi((np.asarray(x, dtype=np.float64) - self.x0) / t)

    def plateau_window(self, k, region, t):
        """``(x_a, x_b)`` where phase ``k`` sits in the constant ``'-'`` or ``'+'`` region at time ``t``."""
        wl, wr = self.waves[k]
        us = self.contact_speed
        if region == "-":
            a = wl.last if wl is not None else -math.inf
            return self.x0 + a * t, self.x0 + us * t
        if region == "+":
            b = wr.first if wr is not None else math.inf
            return self.x0 + us * t, self.x0 + b * t
        raise ValueError(f"region must be '-' or '+', got {region!r}")


def exact_sample(ref: ExactRiemannReference, x, t) -> MixtureState:
    """Exact mixture state at position ``x`` and time ``t > 0``."""
    alpha, rho, u = ref.sample(float(x), t)
    return MixtureState.from_arrays(alpha[0], rho[0], u[0])


# ------------------------------------------------------------- test cases


@dataclass(frozen=True)
class PressureProbes:
    """Stations of the shock tube and the tabulated plateaus at the last one."""

    stations: tuple
    first_plateau: float
    reflected_plateau: float
    names: tuple = ("S1", "S2", "S3", "S4")


@dataclass(frozen=True)
class TestCase:
    """A registered scenario with piecewise-constant initial data.

    ``pieces`` lists ``(x_right, MixtureState)`` from left to right; a cell
    centre belongs to the first piece whose right edge exceeds it.
    """

    id: str
    eos: tuple
    domain: tuple
    t_max: float
    pieces: tuple
    left: str = TRANSMISSIVE
    right: str = TRANSMISSIVE
    floor: float = 0.0
    x0: float | None = None
    reference: ExactRiemannReference | PressureProbes | None = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        n = len(self.eos)
        for _, state in self.pieces:
            report = validate(state, n)
            if report:
                raise DomainError(f"{self.id}: inadmissible initial state {report}")

    @property
    def n_phases(self) -> int:
        return len(self.eos)

    def initial_vectors(self):
        return [state.to_vector() for _, state in self.pieces]

    def initial_state(self, x):
        for (edge, _), U in zip(self.pieces, self.initial_vectors()):
            if x < edge:
                return U
        return self.initial_vectors()[-1]

    def grid(self, n_cells) -> Grid:
        x_min, x_max = self.domain
        dx = (x_max - x_min) / n_cells
        xc = x_min + (np.arange(n_cells) + 0.5) * dx
        vectors = np.array(self.initial_vectors())
        edges = np.array([edge for edge, _ in self.pieces])
        idx = np.minimum(np.searchsorted(edges, xc, side="right"), len(edges) - 1)
        return Grid(x_min, x_max, vectors[idx], self.eos, self.left, self.right)


def _tc1():
    eos = (Eos.power_law(1.0, 3.0), Eos.power_law(10.0, 1.4), Eos.power_law(1.0, 1.6))
    regions = {
        "L": Region.of([0.9, 0.05], [2.5, 0.2, 0.5], [-0.56603, 6.18311, 0.31861]),
        "-": Region.of([0.9, 0.05], [2.0, 1.0, 1.0], [0.3, 0.2, -0.5]),
        "+": Region.of([0.4, 0.4], [2.06193, 1.00035, 1.19853], [0.3, 0.28750, 0.13313]),
        "R": Region.of([0.4, 0.4], [1.03097, 1.25044, 0.59926], [-1.62876, 1.14140, -0.73119]),
    }
    ref = ExactRiemannReference(
        eos,
        regions,
        left_waves=(RAREFACTION, SHOCK, SHOCK),
        right_waves=(SHOCK, RAREFACTION, SHOCK),
        x0=0.5,
    )
    pieces = ((0.5, regions["L"].mixture()), (1.0, regions["R"].mixture()))
    return TestCase("tc1", eos, (0.0, 1.0), 0.05, pieces, x0=0.5, reference=ref)


TC2_FLOOR = 1e-10


def _tc2():
    eos = (Eos.power_law(1.0, 3.0), Eos.power_law(10.0, 1.4), Eos.power_law(5.0, 1.6))
    plus = Region.of([0.4, 0.2], [1.35516, 1.0, 0.99669], [0.3, 0.3, 0.04917])
    # absent phases carry the values right of the contact
    regions = {
        "L": Region.of([0.0, 0.0], [plus.rho[0], plus.rho[1], 0.5], [plus.u[0], plus.u[1], 2.03047]),
        "-": Region.of([0.0, 0.0], [plus.rho[0], plus.rho[1], 1.0], [plus.u[0], plus.u[1], 0.2]),
        "+": plus,
        "R": Region.of([0.4, 0.2], [0.67758, 0.5, 1.24587], [-0.96764, -2.19213, 0.70127]),
    }
    ref = ExactRiemannReference(
        eos,
        regions,
        left_waves=(None, None, SHOCK),
        right_waves=(SHOCK, SHOCK, RAREFACTION),
        x0=0.5,
    )
    L = regions["L"]
    left = Region.of([TC2_FLOOR, TC2_FLOOR], L.rho, L.u)
    pieces = ((0.5, left.mixture()), (1.0, regions["R"].mixture()))
    return TestCase("tc2", eos, (0.0, 1.0), 0.05, pieces, floor=TC2_FLOOR, x0=0.5, reference=ref)


TC3_FLOOR = 1e-10
TC3_LID = (2.97, 3.37)
TC3_ALPHA_LID = 0.0104
TC3_STATIONS = (2.7, 3.0, 3.2, 3.7)


def tc3_eos():
    particles = Eos.stiffened(1500.0, 1.0e3, 1.0e5)
    gas = Eos.calibrated_power_law(1.4, 1.27, 1.0e5)
    return particles, gas, gas


def _density_at(eos: Eos, p):
    if eos.kind == POWER_LAW:
        return (p / eos.kappa) ** (1.0 / eos.gamma)
    return (p - eos.p_ref) / (eos.c * eos.c)


def _tc3():
    eos = tc3_eos()

    def state(p, alpha1):
        rho = [_density_at(e, p) for e in eos]
        alpha = [alpha1, 1.0 - alpha1 - TC3_FLOOR, TC3_FLOOR]
        return MixtureState.from_arrays(alpha, rho, [0.0, 0.0, 0.0])

    pieces = (
        (0.75, state(7.0e5, TC3_FLOOR)),
        (TC3_LID[0], state(1.0e5, TC3_FLOOR)),
        (TC3_LID[1], state(1.0e5, TC3_ALPHA_LID)),
        (3.75, state(1.0e5, TC3_FLOOR)),
    )
    probes = PressureProbes(TC3_STATIONS, 2.78e5, 6.85e5)
    return TestCase("tc3", eos, (0.0, 3.75), 0.01, pieces, WALL, WALL, TC3_FLOOR, reference=probes)


_CASES = {"tc1": _tc1, "tc2": _tc2, "tc3": _tc3}


def build_test_case(case_id: str) -> TestCase:
    try:
        factory = _CASES[case_id]
    except KeyError:
        raise UnknownCaseError(f"unknown test case {case_id!r}; known: {sorted(_CASES)}") from None
    return factory()


def riemann_case(case_id, eos, left: MixtureState, right: MixtureState, domain=(0.0, 1.0), x0=0.5,
                 t_max=0.05, left_bc=TRANSMISSIVE, right_bc=TRANSMISSIVE) -> TestCase:
    """A two-state test case without an exact reference."""
    pieces = ((x0, left), (domain[1], right))
    return TestCase(case_id, tuple(eos), tuple(domain), t_max, pieces, left_bc, right_bc, x0=x0)


# ------------------------------------------------------------ error norms


def variable_names(n_phases):
    """Non-conservative variables in report order: ``alpha_1..alpha_{N-1}``, then ``rho_k, u_k``."""
    names = [f"alpha{k + 1}" for k in range(n_phases - 1)]
    for k in range(n_phases):
        names += [f"rho{k + 1}", f"u{k + 1}"]
    return tuple(names)


def _variable(name, alpha, rho, u):
    kind = name.rstrip("0123456789")
    k = int(name[len(kind):]) - 1
    table = {"alpha": alpha, "rho": rho, "u": u}
    if kind not in table or not 0 <= k < alpha.shape[-1]:
        raise ValueError(f"unknown variable {name!r}")
    return table[kind][..., k]


def l1_error(grid: Grid, ref: ExactRiemannReference, variable: str, t: float):
    """``sum |phi_j - phi_ex(x_j)| / sum |phi_ex(x_j)|`` on the cell centres."""
    return l1_errors(grid, ref, t, (variable,))[variable]


def l1_errors(grid: Grid, ref: ExactRiemannReference, t: float, variables: Sequence[str] | None = None):
    """Relative L1 errors of the requested variables (all of them by default)."""
    n = grid.n_phases
    variables = variable_names(n) if variables is None else tuple(variables)
    num = primitives(grid.U, n)
    ex = ref.sample(grid.centers, t)
    out = {}
    for name in variables:
        phi = _variable(name, *num)
        phx = _variable(name, *ex)
        norm = np.abs(phx).sum()
        if not norm > 0.0:
            raise DomainError(f"exact {name} has zero L1 norm")
        out[name] = float(np.abs(phi - phx).sum() / norm)
    return out


def observed_order(dx, errors, last=3):
    """Least-squares slope of ``log(error)`` against ``log(dx)`` over the last meshes."""
    x = np.log(np.asarray(dx, dtype=np.float64)[-last:])
    y = np.log(np.asarray(errors, dtype=np.float64)[-last:])
    return float(np.polyfit(x, y, 1)[0])


# ----------------------------------------------------------------- probes


def probe_pressure(history: Iterable, stations=TC3_STATIONS):
    """Mixture pressure ``sum alpha_k p_k`` at ``stations`` for each ``(t, grid)`` of ``history``.

    Values are linearly interpolated between cell centres. Returns
    ``(times, values)`` with ``values`` of shape ``(n_times, n_stations)``.
    """
    times, values = [], []
    idx = w = buf = None
    for t, grid in history:
        if idx is None:
            lo, hi = grid.x_min, grid.x_max
            if any(not lo <= s <= hi for s in stations):
                raise DomainError(f"stations {stations} outside ({lo}, {hi})")
            idx, w = probe_weights(grid, stations)
            buf = np.empty(grid.n_cells)
        mixture_pressure(grid.U, grid.n_phases, grid.eos_table, buf)
        times.append(t)
        values.append(buf[idx] * (1.0 - w) + buf[idx + 1] * w)
    return np.asarray(times), np.asarray(values)


@dataclass(frozen=True)
class Plateau:
    t_start: float
    t_end: float
    level: float

    @property
    def duration(self):
        return self.t_end - self.t_start


def find_plateaus(times, series, rel_tol=0.01, min_duration=0.0):
    """Maximal runs of a time series that stay within ``rel_tol`` of their running mean."""
    times = np.asarray(times, dtype=np.float64)
    series = np.asarray(series, dtype=np.float64)
    out = []
    i = 0
    n = series.size
    while i < n:
        total = series[i]
        j = i + 1
        while j < n:
            mean = total / (j - i)
            if abs(series[j] - mean) > rel_tol * abs(mean):
                break
            total += series[j]
            j += 1
        if times[j - 1] - times[i] >= min_duration:
            out.append(Plateau(float(times[i]), float(times[j - 1]), float(total / (j - i))))
        i = j
    return out


def shock_plateaus(times, series, rel_tol=0.01, min_duration=5e-5, rise=1.5):
    """``(P*, P**)``: the first two plateaus, each at least ``rise`` times the previous level.

    Returns ``None`` for a plateau that is never reached.
    """
    levels = []
    base = float(series[0])
    for p in find_plateaus(times, series, rel_tol, min_duration):
        if p.level > rise * base:
            levels.append(p)
            base = p.level
            if len(levels) == 2:
                break
    levels += [None] * (2 - len(levels))
    return tuple(p.level if p is not None else None for p in levels)


__all__ = [
    "SHOCK",
    "RAREFACTION",
    "Region",
    "Wave",
    "ExactRiemannReference",
    "PressureProbes",
    "TestCase",
    "UnknownCaseError",
    "build_test_case",
    "riemann_case",
    "exact_sample",
    "invariant_integral",
    "variable_names",
    "l1_error",
    "l1_errors",
    "observed_order",
    "probe_pressure",
    "find_plateaus",
    "shock_plateaus",
    "Plateau",
]
