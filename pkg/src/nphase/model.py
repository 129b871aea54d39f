"""State vectors and pointwise quantities of the N-phase barotropic model.

Flat layouts (phase 1 first)::

    U = (alpha_1..alpha_{N-1}, a_1 r_1..a_N r_N, a_1 r_1 u_1..a_N r_N u_N)       3N-1
    W = (U..., a_1 r_1 T_1..a_N r_N T_N)                                        4N-1

``alpha_N`` is never stored; it is ``1 - sum(alpha_1..alpha_{N-1})``.
Phase 1 carries the interface velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .eos import (
    Eos,
    eos_energy_from_pressure,
    eos_energy_magnitude,
    eos_pressure,
    eos_sound_speed,
    stack_rows,
)
from .exceptions import AdmissibilityError

SATURATION_TOL = 1e-12


@dataclass(frozen=True)
class PhaseState:
    alpha: float
    rho: float
    u: float


@dataclass(frozen=True)
class MixtureState:
    """One cell of the equilibrium model, as an ordered tuple of phases."""

    phases: tuple[PhaseState, ...]

    @property
    def n_phases(self) -> int:
        return len(self.phases)

    @classmethod
    def from_arrays(cls, alpha, rho, u):
        return cls(tuple(PhaseState(float(a), float(r), float(v)) for a, r, v in zip(alpha, rho, u)))

    @classmethod
    def from_vector(cls, U, n_phases):
        alpha, rho, u = primitives(np.asarray(U, dtype=np.float64), n_phases)
        return cls.from_arrays(alpha, rho, u)

    def arrays(self):
        alpha = np.array([p.alpha for p in self.phases])
        rho = np.array([p.rho for p in self.phases])
        u = np.array([p.u for p in self.phases])
        return alpha, rho, u

    def to_vector(self):
        alpha, rho, u = self.arrays()
        return conservative(alpha, rho, u)


@dataclass(frozen=True)
class RelaxationState:
    """A relaxation state: per phase ``alpha``, ``rho``, ``u`` and the surrogate volume ``T``."""

    alpha: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    T: np.ndarray
    source: np.ndarray | None = field(default=None, repr=False, compare=False)  # U this state was lifted from

    @property
    def n_phases(self) -> int:
        return self.alpha.size

    @property
    def tau(self):
        return 1.0 / self.rho

    def to_vector(self):
        U = conservative(self.alpha, self.rho, self.u)
        return np.concatenate([U, self.alpha * self.rho * self.T])

    @classmethod
    def from_vector(cls, W, n_phases):
        W = np.asarray(W, dtype=np.float64)
        n = n_phases
        alpha, rho, u = primitives(W[: 3 * n - 1], n)
        T = W[3 * n - 1 :] / (alpha * rho)
        return cls(alpha, rho, u, T)

    def packed(self):
        """``(N, 4)`` kernel array of ``(alpha, tau, u, T)``."""
        return np.column_stack([self.alpha, 1.0 / self.rho, self.u, self.T])


@dataclass(frozen=True)
class RelaxParams:
    """Relaxation coefficients ``a_k`` (one per phase) chosen at an interface."""

    a: np.ndarray
    iterations: int = 0


def conservative(alpha, rho, u):
    alpha = np.asarray(alpha, dtype=np.float64)
    m = alpha * np.asarray(rho, dtype=np.float64)
    return np.concatenate([alpha[:-1], m, m * np.asarray(u, dtype=np.float64)])


def primitives(U, n_phases):
    """Split a flat ``U`` (or a stack of them on the last axis) into ``alpha, rho, u``."""
    n = n_phases
    U = np.asarray(U, dtype=np.float64)
    head = U[..., : n - 1]
    alpha = np.concatenate([head, 1.0 - head.sum(axis=-1, keepdims=True)], axis=-1)
    m = U[..., n - 1 : 2 * n - 1]
    q = U[..., 2 * n - 1 : 3 * n - 1]
    return alpha, m / alpha, q / m


def lift(U, n_phases) -> RelaxationState:
    """Equilibrium lift: ``T_k = 1/rho_k``."""
    U = np.asarray(U, dtype=np.float64)
    report = validate(U, n_phases)
    if report:
        raise AdmissibilityError("cannot lift an inadmissible state", report)
    alpha, rho, u = primitives(U, n_phases)
    return RelaxationState(alpha, rho, u, 1.0 / rho, U.copy())


def project(W) -> np.ndarray:
    """Drop the relaxation block and return the flat ``U``."""
    if isinstance(W, RelaxationState):
        if W.source is not None:
            return W.source.copy()
        return conservative(W.alpha, W.rho, W.u)
    W = np.asarray(W, dtype=np.float64)
    n = (W.shape[-1] + 1) // 4
    return W[..., : 3 * n - 1].copy()


def lift_vector(U, n_phases):
    """Flat equilibrium lift; the relaxation block equals ``alpha`` exactly."""
    U = np.asarray(U, dtype=np.float64)
    head = U[..., : n_phases - 1]
    alpha_n = 1.0 - head.sum(axis=-1, keepdims=True)
    return np.concatenate([U, head, alpha_n], axis=-1)


def relaxation_pressure(eos: Eos, a, tau, T):
    """Linearized pressure ``p(1/T) + a**2 (T - tau)``."""
    return eos.pressure(1.0 / np.asarray(T, dtype=np.float64)) + a * a * (np.asarray(T) - np.asarray(tau))


def phase_energy(k, U, eos_list: Sequence[Eos]):
    """``alpha_k rho_k (u_k**2/2 + e_k(rho_k))`` for 0-based phase index ``k``."""
    alpha, rho, u = primitives(U, len(eos_list))
    e = eos_list[k].internal_energy(rho[..., k])
    return alpha[..., k] * rho[..., k] * (0.5 * u[..., k] ** 2 + e)


def relaxation_energy(k, W: RelaxationState, eos_list: Sequence[Eos], a):
    """``alpha_k rho_k E_k`` of the relaxation system for 0-based phase ``k``."""
    eos = eos_list[k]
    tau = 1.0 / W.rho[k]
    T = W.T[k]
    ak = float(np.asarray(a)[k])
    P = eos.pressure(1.0 / T)
    pi = P + ak * ak * (T - tau)
    energy = 0.5 * W.u[k] ** 2 + eos.internal_energy(1.0 / T) + (pi * pi - P * P) / (2.0 * ak * ak)
    return W.alpha[k] * W.rho[k] * energy


def model_eigenvalues(U, eos_list: Sequence[Eos]):
    """The ``3N-1`` characteristic speeds, ``u_1`` (N-1 times) then ``u_k - c_k``, ``u_k + c_k``."""
    n = len(eos_list)
    _, rho, u = primitives(U, n)
    c = np.array([eos_list[k].sound_speed(rho[k]) for k in range(n)])
    return np.concatenate([np.full(n - 1, u[0]), u - c, u + c])


def resonant_phases(U, eos_list: Sequence[Eos], rtol=1e-12):
    """Phases ``k >= 2`` (1-based) with ``|u_1 - u_k| == c_k`` within ``rtol``."""
    n = len(eos_list)
    _, rho, u = primitives(U, n)
    out = []
    for k in range(1, n):
        c = eos_list[k].sound_speed(rho[k])
        if abs(abs(u[0] - u[k]) - c) <= rtol * c:
            out.append(k + 1)
    return out


def relaxation_eigenvalues(W: RelaxationState, a):
    """The ``4N-1`` relaxation speeds: ``u_1`` (N-1 times), ``u_k -/+ a_k tau_k``, ``u_k``."""
    a = np.asarray(a, dtype=np.float64)
    n = W.n_phases
    at = a / W.rho
    return np.concatenate([np.full(n - 1, W.u[0]), W.u - at, W.u + at, W.u])


def validate(state, n_phases=None):
    """Return a list of ``(kind, phase, value)`` violations; empty means admissible.

    Accepts a :class:`MixtureState`, a :class:`RelaxationState` or a flat ``U``
    (``n_phases`` required). Phase indices in the report are 1-based.
    """
    out = []
    if isinstance(state, MixtureState):
        alpha, rho, _ = state.arrays()
        T = None
    elif isinstance(state, RelaxationState):
        alpha, rho, T = state.alpha, state.rho, state.T
    else:
        U = np.asarray(state, dtype=np.float64)
        if n_phases is None:
            raise TypeError("n_phases is required for flat vectors")
        alpha, rho, _ = primitives(U, n_phases)
        T = None
        if np.any(U[n_phases - 1 : 2 * n_phases - 1] <= 0):
            for k in np.flatnonzero(U[n_phases - 1 : 2 * n_phases - 1] <= 0):
                out.append(("partial_mass", int(k) + 1, float(U[n_phases - 1 + k])))
    for k, a in enumerate(alpha):
        if not (0.0 < a < 1.0):
            out.append(("alpha", k + 1, float(a)))
    for k, r in enumerate(rho):
        if not (r > 0.0) or not np.isfinite(r):
            out.append(("density", k + 1, float(r)))
    if T is not None:
        for k, t in enumerate(T):
            if not (t > 0.0):
                out.append(("relaxed_volume", k + 1, float(t)))
    total = float(np.sum(alpha))
    if abs(total - 1.0) > SATURATION_TOL:
        out.append(("saturation", 0, total))
    return out


def physical_flux(U, eos_list: Sequence[Eos]):
    """Conservative part of the flux (zero in the fraction rows)."""
    n = len(eos_list)
    alpha, rho, u = primitives(U, n)
    p = np.array([eos_list[k].pressure(rho[k]) for k in range(n)])
    m = alpha * rho
    return np.concatenate([np.zeros(n - 1), m * u, m * u * u + alpha * p])


# ---------------------------------------------------------------- kernels


@njit(cache=True, error_model="numpy")
def cell_primitives(U, n, alpha, tau, u):
    """Fill ``(ncell, N)`` arrays of fraction, specific volume and velocity."""
    for j in range(U.shape[0]):
        s = 0.0
        for k in range(n - 1):
            alpha[j, k] = U[j, k]
            s += U[j, k]
        alpha[j, n - 1] = 1.0 - s
        for k in range(n):
            m = U[j, n - 1 + k]
            tau[j, k] = alpha[j, k] / m
            u[j, k] = U[j, 2 * n - 1 + k] / m


@njit(cache=True, error_model="numpy")
def cell_energies(U, n, eos, out, mag):
    """``alpha_k rho_k E_k`` per cell and phase, and the magnitude of its terms."""
    for j in range(U.shape[0]):
        s = 0.0
        for k in range(n - 1):
            s += U[j, k]
        for k in range(n):
            alpha = U[j, k] if k < n - 1 else 1.0 - s
            m = U[j, n - 1 + k]
            v = U[j, 2 * n - 1 + k] / m
            rho = m / alpha
            p = eos_pressure(eos[k], rho)
            out[j, k] = m * (0.5 * v * v + eos_energy_from_pressure(eos[k], rho, p))
            # alpha_N = 1 - sum carries roundoff of order eps, hence p * (1 + s)
            frac = alpha if k < n - 1 else 1.0 + s
            mag[j, k] = m * (0.5 * v * v + eos_energy_magnitude(eos[k], rho, p)) + abs(p) * frac


@njit(cache=True, error_model="numpy")
def first_inadmissible(U, n):
    """Index of the first cell outside the physical space, or -1."""
    for j in range(U.shape[0]):
        s = 0.0
        for k in range(n - 1):
            a = U[j, k]
            if not (a > 0.0 and a < 1.0):
                return j
            s += a
        if not (1.0 - s > 0.0):
            return j
        for k in range(n):
            if not (U[j, n - 1 + k] > 0.0):
                return j
            if not np.isfinite(U[j, 2 * n - 1 + k]):
                return j
    return -1


def eos_table(eos_list: Sequence[Eos]):
    return stack_rows(eos_list)


__all__ = [
    "PhaseState",
    "MixtureState",
    "RelaxationState",
    "RelaxParams",
    "conservative",
    "primitives",
    "lift",
    "lift_vector",
    "project",
    "relaxation_pressure",
    "phase_energy",
    "relaxation_energy",
    "model_eigenvalues",
    "relaxation_eigenvalues",
    "resonant_phases",
    "validate",
    "physical_flux",
    "eos_pressure",
    "eos_sound_speed",
]
