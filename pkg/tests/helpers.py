"""Shared generators and independent audits for the test suite."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from nphase import Eos
from nphase.model import conservative

TC1_EOS = (Eos.power_law(1.0, 3.0), Eos.power_law(10.0, 1.4), Eos.power_law(1.0, 1.6))


def random_eos(rng, n):
    return tuple(Eos.power_law(rng.uniform(0.5, 10.0), rng.uniform(1.2, 3.0)) for _ in range(n))


def random_fractions(rng, n, low=0.05):
    w = rng.uniform(low, 1.0, n)
    return w / w.sum()


def random_state(rng, eos, du=0.5, rho=(0.3, 3.0), alpha_low=0.05):
    """A flat admissible ``U`` with moderate velocities."""
    n = len(eos)
    alpha = random_fractions(rng, n, alpha_low)
    r = rng.uniform(*rho, n)
    u = rng.uniform(-du, du, n)
    return conservative(alpha, r, u)


def packed(U, n):
    """Equilibrium ``(alpha, tau, u, T)`` rows of a flat ``U``."""
    head = U[: n - 1]
    alpha = np.append(head, 1.0 - head.sum())
    m = U[n - 1 : 2 * n - 1]
    tau = alpha / m
    return np.column_stack([alpha, tau, U[2 * n - 1 :] / m, tau])


# ------------------------------------------------------------------ fan audits


def relax_pressure(eos: Eos, a, tau, T):
    return eos.pressure(1.0 / T) + a * a * (T - tau)


def relax_energy(eos: Eos, a, tau, u, T):
    P = eos.pressure(1.0 / T)
    pi = P + a * a * (T - tau)
    return 0.5 * u * u + eos.internal_energy(1.0 / T) + (pi * pi - P * P) / (2.0 * a * a)


def wave_residuals(fan, eos_list):
    """Per phase and wave: ``(sigma, mass, momentum, energy, scale_mass, scale_mom, scale_energy)``.

    Residuals are ``[f] - sigma [U]`` across the wave for the phase equations
    of mass, momentum and relaxation energy.
    """
    out = []
    for k, eos in enumerate(eos_list):
        a = fan.a[k]
        rows = []
        for i, sigma in enumerate(fan.speeds[k]):
            vals = []
            for alpha, tau, u, T in (fan.states[k][i], fan.states[k][i + 1]):
                rho = 1.0 / tau
                pi = relax_pressure(eos, a, tau, T)
                E = relax_energy(eos, a, tau, u, T)
                m = alpha * rho * (u - sigma)
                # m carries an absolute error of order eps * sm, which the
                # momentum and energy fluxes inherit through u and E
                sm = abs(alpha * rho * u) + abs(alpha * rho * sigma)
                vals.append((m, m * u + alpha * pi, m * E + alpha * pi * u, sm,
                             abs(m * u) + abs(alpha * pi) + abs(u) * sm,
                             abs(m * E) + abs(alpha * pi * u) + abs(E) * sm))
            (m0, q0, e0, sm0, sq0, se0), (m1, q1, e1, sm1, sq1, se1) = vals
            rows.append((sigma, m1 - m0, q1 - q0, e1 - e0, sm0 + sm1, sq0 + sq1, se0 + se1))
        out.append(rows)
    return out


# ------------------------------------------------------ independent two-phase solver


def m0_closed(nu, omega):
    """Literal closed form, with the limit 0 at ``omega = 1``."""
    if omega == 1.0:
        return 0.0
    f = (1 + omega * omega) / (1 - omega * omega)
    s = 1 + 1 / nu
    return 0.5 * (f * s - math.sqrt(f * f * s * s - 4 / nu))


def _theta_left(u, us, tsl, a, al, ar):
    ms = (us - u) / (a * tsl)
    return a * (al + ar) * (u - us) + 2 * a * a * al * tsl * m0_closed(al / ar, (1 - ms) / (1 + ms))


def theta_phase(u, us, tsl, tsr, a, al, ar):
    """Energy-preserving momentum jump of a phase ``k >= 2``.

    The branch ``us < u`` is obtained by reflecting the problem about ``u``
    (swap sides, reverse relative velocities), which flips ``dalpha``.
    """
    if us >= u:
        return _theta_left(u, us, tsl, a, al, ar)
    return -_theta_left(u, 2 * u - us, tsr, a, ar, al)


def sharp(wl, wr, eos_list, a):
    out = []
    for k, eos in enumerate(eos_list):
        _, tl, ul, Tl = wl[k]
        _, tr, ur, Tr = wr[k]
        pl = relax_pressure(eos, a[k], tl, Tl)
        pr = relax_pressure(eos, a[k], tr, Tr)
        us = 0.5 * (ul + ur) - (pr - pl) / (2 * a[k])
        ps = 0.5 * (pl + pr) - 0.5 * a[k] * (ur - ul)
        out.append((us, ps, tl + (us - ul) / a[k], tr - (us - ur) / a[k]))
    return out


def two_phase_oracle(wl, wr, eos_list, a):
    """``u1*``, ``pi2*`` and the phase-2 intermediate states of a two-phase problem."""
    sh = sharp(wl, wr, eos_list, a)
    al, ar = wl[:, 0], wr[:, 0]
    (u1s, p1s, t1l, t1r), (u2s, p2s, t2l, t2r) = sh
    rhs = (p1s - p2s) * (ar[1] - al[1])

    def g(u):
        th1 = a[0] * (al[0] + ar[0]) * (u - u1s)
        return th1 + theta_phase(u, u2s, t2l, t2r, a[1], al[1], ar[1]) - rhs

    cl = max(wl[k, 2] - a[k] * wl[k, 1] for k in range(2))
    cr = min(wr[k, 2] + a[k] * wr[k, 1] for k in range(2))
    eps = 1e-12 * (abs(cl) + abs(cr))
    ustar = brentq(g, cl + eps, cr - eps, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    dalpha = ar[1] - al[1]
    pi2 = p2s + theta_phase(ustar, u2s, t2l, t2r, a[1], al[1], ar[1]) / dalpha if dalpha != 0 else p2s
    tau1 = (t1l + (ustar - u1s) / a[0], t1r - (ustar - u1s) / a[0])
    return ustar, pi2, tau1
