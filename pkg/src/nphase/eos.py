"""Barotropic equations of state.

Two families are supported::

    power law        p(rho) = kappa * rho**gamma
    stiffened linear p(rho) = c**2 * rho + p_ref

Each law is packed into a row of four floats ``(kind, p0, p1, offset)`` so that
the compiled kernels in :mod:`nphase.riemann` and :mod:`nphase.fv` can evaluate
it without Python objects. ``offset`` is the additive constant of the specific
internal energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import DomainError, UnsupportedExponentError

POWER_LAW = 0
STIFFENED = 1


@njit(cache=True, error_model="numpy", inline="always")
def eos_pressure(row, rho):
    if row[0] == POWER_LAW:
        return row[1] * rho ** row[2]
    return row[1] * row[1] * rho + row[2]


@njit(cache=True, error_model="numpy", inline="always")
def eos_sound_speed(row, rho):
    if row[0] == POWER_LAW:
        return math.sqrt(row[2] * row[1] * rho ** (row[2] - 1.0))
    return row[1]


@njit(cache=True, error_model="numpy", inline="always")
def eos_internal_energy(row, rho):
    if row[0] == POWER_LAW:
        return row[1] * rho ** (row[2] - 1.0) / (row[2] - 1.0) + row[3]
    return row[1] * row[1] * math.log(rho) - row[2] / rho + row[3]


@njit(cache=True, error_model="numpy", inline="always")
def eos_energy_from_pressure(row, rho, p):
    """Internal energy reusing an already evaluated ``p = p(rho)``."""
    if row[0] == POWER_LAW:
        return p / (rho * (row[2] - 1.0)) + row[3]
    return row[1] * row[1] * math.log(rho) - row[2] / rho + row[3]


@njit(cache=True, error_model="numpy", inline="always")
def eos_sound_speed_from_pressure(row, rho, p):
    """Sound speed reusing an already evaluated ``p = p(rho)``."""
    if row[0] == POWER_LAW:
        return math.sqrt(row[2] * p / rho)
    return row[1]


@njit(cache=True, error_model="numpy", inline="always")
def eos_energy_magnitude(row, rho, p):
    """Sum of the magnitudes of the terms of the internal energy (its roundoff scale)."""
    if row[0] == POWER_LAW:
        return abs(p / (rho * (row[2] - 1.0))) + abs(row[3])
    return row[1] * row[1] * abs(math.log(rho)) + abs(row[2] / rho) + abs(row[3])


def _raw_energy(kind, p0, p1, rho):
    if kind == POWER_LAW:
        return p0 * rho ** (p1 - 1.0) / (p1 - 1.0)
    return p0 * p0 * math.log(rho) - p1 / rho


@dataclass(frozen=True)
class Eos:
    """A barotropic pressure law ``rho -> p(rho)``.

    Use :meth:`power_law` or :meth:`stiffened` rather than the raw constructor.
    ``energy_offset`` fixes the gauge of :meth:`internal_energy`.
    """

    kind: int
    p0: float
    p1: float
    energy_offset: float = 0.0

    @classmethod
    def power_law(cls, kappa, gamma, rho_ref=1.0):
        """``p = kappa * rho**gamma``; internal energy vanishes at ``rho_ref``.

        Pass ``rho_ref=None`` to keep the bare antiderivative (zero constant).
        """
        if kappa <= 0 or gamma <= 0:
            raise DomainError(f"power law needs kappa > 0 and gamma > 0, got {kappa}, {gamma}")
        offset = 0.0
        if rho_ref is not None and gamma != 1.0:
            offset = -_raw_energy(POWER_LAW, kappa, gamma, rho_ref)
        return cls(POWER_LAW, float(kappa), float(gamma), float(offset))

    @classmethod
    def stiffened(cls, c, rho_ref, p_target, energy_ref=True):
        """``p = c**2 * rho + p_ref`` with ``p_ref`` solved from ``p(rho_ref) = p_target``."""
        if c <= 0 or rho_ref <= 0:
            raise DomainError(f"stiffened law needs c > 0 and rho_ref > 0, got {c}, {rho_ref}")
        p_ref = p_target - c * c * rho_ref
        offset = -_raw_energy(STIFFENED, c, p_ref, rho_ref) if energy_ref else 0.0
        return cls(STIFFENED, float(c), float(p_ref), float(offset))

    @classmethod
    def calibrated_power_law(cls, gamma, rho_ref, p_target):
        """Power law with ``kappa`` chosen so that ``p(rho_ref) = p_target``.

        The energy gauge stays at unit density like every power law.
        """
        return cls.power_law(p_target / rho_ref**gamma, gamma)

    @property
    def kappa(self):
        return self.p0 if self.kind == POWER_LAW else None

    @property
    def gamma(self):
        return self.p1 if self.kind == POWER_LAW else None

    @property
    def c(self):
        return self.p0 if self.kind == STIFFENED else None

    @property
    def p_ref(self):
        return self.p1 if self.kind == STIFFENED else None

    def row(self):
        return np.array([self.kind, self.p0, self.p1, self.energy_offset], dtype=np.float64)

    def describe(self):
        if self.kind == POWER_LAW:
            return f"PowerLaw(kappa={self.p0:g}, gamma={self.p1:g})"
        return f"StiffenedLinear(c={self.p0:g}, p_ref={self.p1:g})"

    def pressure(self, rho):
        rho = _check_density(rho)
        return _unwrap(eos_pressure_vec(self.row(), rho))

    def sound_speed(self, rho):
        rho = _check_density(rho)
        return _unwrap(eos_sound_speed_vec(self.row(), rho))

    def internal_energy(self, rho):
        rho = _check_density(rho)
        if self.kind == POWER_LAW and self.p1 == 1.0:
            raise UnsupportedExponentError("internal energy of an isothermal power law is not supported")
        return _unwrap(eos_internal_energy_vec(self.row(), rho))


def stack_rows(eos_list):
    """Pack a sequence of :class:`Eos` into the ``(N, 4)`` kernel table."""
    return np.vstack([e.row() for e in eos_list])


def _check_density(rho):
    arr = np.asarray(rho, dtype=np.float64)
    if not np.all(arr > 0):
        raise DomainError(f"density must be positive, got {rho!r}")
    return np.atleast_1d(arr)


def _unwrap(values):
    return float(values[0]) if values.shape == (1,) else values


@njit(cache=True, error_model="numpy")
def eos_pressure_vec(row, rho):
    out = np.empty_like(rho)
    for i in range(rho.size):
        out.flat[i] = eos_pressure(row, rho.flat[i])
    return out


@njit(cache=True, error_model="numpy")
def eos_sound_speed_vec(row, rho):
    out = np.empty_like(rho)
    for i in range(rho.size):
        out.flat[i] = eos_sound_speed(row, rho.flat[i])
    return out


@njit(cache=True, error_model="numpy")
def eos_internal_energy_vec(row, rho):
    out = np.empty_like(rho)
    for i in range(rho.size):
        out.flat[i] = eos_internal_energy(row, rho.flat[i])
    return out
