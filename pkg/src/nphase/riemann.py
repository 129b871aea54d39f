"""Exact Riemann solver of the Suliciu relaxation system.

Per-phase states inside the compiled kernels are rows ``(alpha, tau, u, T)``
of an ``(N, 4)`` array; the sharp quantities are rows
``(u_sharp, pi_sharp, tau_sharp_L, tau_sharp_R)``. Phase index 0 is the phase
carrying the interface velocity.

Fan storage for one interface: ``states[k, s]`` is sector ``s`` of phase ``k``
(sector 0 is the left data), ``speeds[k, w]`` the ``nwaves[k]`` wave speeds in
increasing order.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .eos import (
    Eos,
    eos_energy_from_pressure,
    eos_pressure,
    eos_sound_speed,
    eos_sound_speed_from_pressure,
    stack_rows,
)
from .exceptions import InconsistentSetupError, PositivityError, SolverSetupError
from .model import RelaxationState, RelaxParams, lift, primitives

DEFAULT_ETA = 0.01
EPS_TAU = 1e-10
MACH_FLOOR = 1e-14
EPS = 2.220446049250313e-16
TOL_REL = 1e-13
MAX_NEWTON = 100

BRANCH_EQUAL = 0
BRANCH_LEFT = 1  # u_sharp > u1*: phase contact right of u1*
BRANCH_RIGHT = 2  # u_sharp < u1*: phase contact left of u1*

OK = 0
ERR_SHARP_CAP = 1
ERR_EXIST_CAP = 2
ERR_NO_SIGN_CHANGE = 3
ERR_NEWTON_CAP = 4
ERR_POSITIVITY = 10  # + phase index


def selection_cap(eta):
    """Iteration cap equivalent to 200 doublings of ``a``."""
    return int(math.ceil(200.0 * math.log(2.0) / math.log1p(eta)))


# ------------------------------------------------------------ scalar kernels


@njit(cache=True, error_model="numpy")
def _mach0_parts(nu, m):
    # PA = (nu+1)(1+m^2); PAS = sqrt(PA^2 - 16 nu m^2) from the factored form
    # PA - 4 sqrt(nu) m = (nu+1)(1-m)^2 + 2m(sqrt(nu)-1)^2, exact near nu = m = 1
    omm = 1.0 - m
    sq = math.sqrt(nu)
    d1 = (nu - 1.0) / (sq + 1.0)
    PA = (nu + 1.0) * (1.0 + m * m)
    lo = (nu + 1.0) * omm * omm + 2.0 * m * d1 * d1
    PAS = math.sqrt(lo * (PA + 4.0 * sq * m))
    return omm, PA, PAS


@njit(cache=True, error_model="numpy")
def mach0_pair(nu, m):
    """``(M, 1 - M)`` with both entries free of cancellation for ``m <= 1``."""
    omm, PA, PAS = _mach0_parts(nu, m)
    den = PA + PAS
    X = (nu + 1.0) * omm * omm + 2.0 * m * (nu - 1.0)
    if X >= 0.0:
        N = X + PAS
    else:
        N = 8.0 * m * (nu + 1.0) * omm * omm / (PAS - X)
    return 4.0 * m / den, N / den


@njit(cache=True, error_model="numpy")
def mach0(nu, m):
    """Energy-preserving Mach parameter written in terms of ``m = (1-w)/(1+w)``.

    Cancellation-free for ``m -> 0`` and for ``m, nu -> 1``; ``mach0(1, m) == m``
    analytically and ``mach0(nu, 1) == min(1, 1/nu)``.
    """
    omm, PA, PAS = _mach0_parts(nu, m)
    return 4.0 * m / (PA + PAS)


@njit(cache=True, error_model="numpy")
def mach0_dm(nu, m):
    A = 1.0 + m * m
    P = nu + 1.0
    kap = 16.0 * nu / (P * P)
    omm, PA, PAS = _mach0_parts(nu, m)
    S = PAS / PA
    base = 4.0 / (P * A * (1.0 + S))
    d = base * (1.0 - 2.0 * m * m / A)
    if S > 0.0:
        d += base * kap * m * m * omm * (1.0 + m) / (A * A * A * S * (1.0 + S))
    return d


@njit(cache=True, error_model="numpy")
def phase_mach(u, us, tsl, tsr, a, all_, alr):
    """Branch, ``nu``, ``m``, chosen ``M``, ``1 - M`` and fallback flag for one phase at ``u1* = u``."""
    if u < us:
        nu = all_ / alr
        m = (us - u) / (a * tsl)
        if all_ == alr:
            return BRANCH_LEFT, nu, m, m, 1.0 - m, False
        M, omM = mach0_pair(nu, m)
        eps = EPS_TAU * tsr
        tstar = tsr + tsl * (m - nu * M) / (1.0 + nu * M)
        if tstar > eps:
            return BRANCH_LEFT, nu, m, M, omM, False
        den = nu * (tsl - tsr + eps)
        if den > 0.0:
            M = min(M, (tsr + tsl * m - eps) / den)
        M = max(M, MACH_FLOOR)
        return BRANCH_LEFT, nu, m, M, 1.0 - M, True
    if u > us:
        nu = alr / all_
        m = (u - us) / (a * tsr)
        if all_ == alr:
            return BRANCH_RIGHT, nu, m, m, 1.0 - m, False
        M, omM = mach0_pair(nu, m)
        eps = EPS_TAU * tsl
        tstar = tsl + tsr * (m - nu * M) / (1.0 + nu * M)
        if tstar > eps:
            return BRANCH_RIGHT, nu, m, M, omM, False
        den = nu * (tsr - tsl + eps)
        if den > 0.0:
            M = min(M, (tsl + tsr * m - eps) / den)
        M = max(M, MACH_FLOOR)
        return BRANCH_RIGHT, nu, m, M, 1.0 - M, True
    return BRANCH_EQUAL, 1.0, 0.0, 0.0, 1.0, False


@njit(cache=True, error_model="numpy")
def theta_general(branch, u, us, tsl, tsr, a, all_, alr, nu, m, M, omM):
    """Momentum-jump function for an arbitrary admissible ``M``."""
    if branch == BRANCH_LEFT:
        tm = tsl * (1.0 - m) / omM
        um = u + a * M * tm
        tp = tsl * (1.0 + m) / (1.0 + nu * M)
        up = u + nu * a * M * tp
        return all_ * a * M * (up - um) + a * alr * (up - us) + a * all_ * (um - us)
    if branch == BRANCH_RIGHT:
        tp = tsr * (1.0 - m) / omM
        up = u - a * M * tp
        tm = tsr * (1.0 + m) / (1.0 + nu * M)
        um = u - nu * a * M * tm
        return -alr * a * M * (up - um) + a * alr * (up - us) + a * all_ * (um - us)
    return 0.0


@njit(cache=True, error_model="numpy")
def thetak_eval(u, us, tsl, tsr, a, all_, alr):
    """``(theta, dtheta/du, fallback)``; the derivative is NaN when the fallback is active."""
    lin = a * (all_ + alr)
    if all_ == alr:
        return 0.0, 0.0, False
    branch, nu, m, M, omM, fb = phase_mach(u, us, tsl, tsr, a, all_, alr)
    if branch == BRANCH_EQUAL:
        return 0.0, lin - 4.0 * a * all_ * alr / (all_ + alr), False
    if fb:
        return theta_general(branch, u, us, tsl, tsr, a, all_, alr, nu, m, M, omM), np.nan, True
    if branch == BRANCH_LEFT:
        th = lin * (u - us) + 2.0 * a * a * all_ * tsl * M
        return th, lin - 2.0 * a * all_ * mach0_dm(nu, m), False
    th = lin * (u - us) - 2.0 * a * a * alr * tsr * M
    return th, lin - 2.0 * a * alr * mach0_dm(nu, m), False


@njit(cache=True, error_model="numpy")
def theta_total(u, sh, a, al, ar, n):
    """``Theta(u) = theta_1 + sum_k theta_k`` with derivative and fallback flag."""
    th, d, fb, _, _ = theta_terms(u, sh, a, al, ar, n)
    return th, d, fb


@njit(cache=True, error_model="numpy")
def theta_terms(u, sh, a, al, ar, n):
    """:func:`theta_total` plus two magnitudes: the sum of ``|theta_k|`` and a roundoff scale.

    The first sets the residual tolerance, so that vanishing fraction jumps do
    not leave a residual comparable to the momentum jumps themselves. The second
    bounds what cancellation inside each ``theta_k`` lets the residual reach.
    """
    slope = a[0] * (al[0] + ar[0])
    th = slope * (u - sh[0, 0])
    d = slope
    fb = False
    mag = abs(th)
    big = slope * (abs(u) + abs(sh[0, 0]))
    for k in range(1, n):
        t, dt, f = thetak_eval(u, sh[k, 0], sh[k, 2], sh[k, 3], a[k], al[k], ar[k])
        th += t
        d += dt
        fb = fb or f
        mag += abs(t)
        big += abs(t) + a[k] * (al[k] + ar[k]) * (abs(u) + abs(sh[k, 0]))
    return th, d, fb, mag, big


@njit(cache=True, error_model="numpy")
def sharp_phase(k, wl, wr, PL, PR, a, sh):
    ak = a[k]
    tl = wl[k, 1]
    ul = wl[k, 2]
    tr = wr[k, 1]
    ur = wr[k, 2]
    pl = PL[k] + ak * ak * (wl[k, 3] - tl)
    pr = PR[k] + ak * ak * (wr[k, 3] - tr)
    us = 0.5 * (ul + ur) - (pr - pl) / (2.0 * ak)
    sh[k, 0] = us
    sh[k, 1] = 0.5 * (pl + pr) - 0.5 * ak * (ur - ul)
    sh[k, 2] = tl + (us - ul) / ak
    sh[k, 3] = tr - (us - ur) / ak


@njit(cache=True, error_model="numpy")
def bracket(sh, a, n):
    cl = -np.inf
    cr = np.inf
    for k in range(n):
        cl = max(cl, sh[k, 0] - a[k] * sh[k, 2])
        cr = min(cr, sh[k, 0] + a[k] * sh[k, 3])
    return cl, cr


@njit(cache=True, error_model="numpy")
def fixed_point_rhs(sh, al, ar, n):
    rhs = 0.0
    for k in range(1, n):
        rhs += (sh[0, 1] - sh[k, 1]) * (ar[k] - al[k])
    return rhs


@njit(cache=True, error_model="numpy")
def select_kernel(wl, wr, eos, n, eta, cap, a, sh, PL, PR, al, ar, bounds):
    """Relaxation coefficients with positive sharp volumes and a solvable fixed point.

    Returns ``(status, iterations)``; ``bounds`` receives ``(cL, cR, Theta(cL), Theta(cR), rhs)``.
    """
    f = 1.0 + eta
    for k in range(n):
        row = eos[k]
        rl = 1.0 / wl[k, 1]
        rr = 1.0 / wr[k, 1]
        pl = eos_pressure(row, rl)
        pr = eos_pressure(row, rr)
        a[k] = f * max(rl * eos_sound_speed_from_pressure(row, rl, pl), rr * eos_sound_speed_from_pressure(row, rr, pr))
        PL[k] = pl if wl[k, 3] == wl[k, 1] else eos_pressure(row, 1.0 / wl[k, 3])
        PR[k] = pr if wr[k, 3] == wr[k, 1] else eos_pressure(row, 1.0 / wr[k, 3])
        al[k] = wl[k, 0]
        ar[k] = wr[k, 0]
    its = 0
    for k in range(n):
        while True:
            sharp_phase(k, wl, wr, PL, PR, a, sh)
            if sh[k, 2] > 0.0 and sh[k, 3] > 0.0:
                break
            a[k] *= f
            its += 1
            if its > cap:
                return ERR_SHARP_CAP, its
    # cL < cR is monotone in a common factor s and linear in s (u_L - s a tau_L <
    # u_R + s a tau_R), so every multiplication below the first admissible power
    # of (1 + eta) would fail; jump there directly.
    smin = 0.0
    for i in range(n):
        for k in range(n):
            num = wl[i, 2] - wr[k, 2]
            if num > 0.0:
                smin = max(smin, num / (a[i] * wl[i, 1] + a[k] * wr[k, 1]))
    jump = 0
    a0 = bounds[5:]
    if smin >= 1.0:
        jump = int(math.floor(math.log(smin) / math.log(f)))
        if jump > cap:
            return ERR_EXIST_CAP, its + jump
    for k in range(n):
        a0[k] = a[k]
    # The remaining conditions hold for every power of (1 + eta) beyond the first
    # admissible one, so gallop forward and bisect back to it.
    if _existence(jump, a0, f, wl, wr, PL, PR, a, sh, al, ar, n, bounds):
        return OK, its + jump
    lo = jump
    step = 1
    while True:
        hi = min(lo + step, cap + 1)
        if _existence(hi, a0, f, wl, wr, PL, PR, a, sh, al, ar, n, bounds):
            break
        if hi > cap:
            return ERR_EXIST_CAP, its + hi
        lo = hi
        step *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _existence(mid, a0, f, wl, wr, PL, PR, a, sh, al, ar, n, bounds):
            hi = mid
        else:
            lo = mid
    _existence(hi, a0, f, wl, wr, PL, PR, a, sh, al, ar, n, bounds)
    return OK, its + hi


@njit(cache=True, error_model="numpy")
def _existence(j, a0, f, wl, wr, PL, PR, a, sh, al, ar, n, bounds):
    """Set ``a = a0 * f**j`` and test positivity, bracket order and the sign change."""
    scale = f**j
    for k in range(n):
        a[k] = a0[k] * scale
    for k in range(n):
        sharp_phase(k, wl, wr, PL, PR, a, sh)
        if not (sh[k, 2] > 0.0 and sh[k, 3] > 0.0):
            return False
    cl, cr = bracket(sh, a, n)
    if not cl < cr:
        return False
    rhs = fixed_point_rhs(sh, al, ar, n)
    thl = theta_total(cl, sh, a, al, ar, n)[0]
    thr = theta_total(cr, sh, a, al, ar, n)[0]
    if not (thl < rhs and rhs < thr):
        return False
    bounds[0] = cl
    bounds[1] = cr
    bounds[2] = thl
    bounds[3] = thr
    bounds[4] = rhs
    return True


@njit(cache=True, error_model="numpy")
def solve_kernel(sh, a, al, ar, n, bounds, tol_rel, maxit):
    """Safeguarded Newton for ``Theta(u) = rhs`` on ``(cL, cR)``.

    Returns ``(u1*, newton_updates, status, residual)``.
    """
    cl = bounds[0]
    cr = bounds[1]
    rhs = bounds[4]
    lo = cl
    hi = cr
    u = sh[0, 0] + rhs / (a[0] * (al[0] + ar[0]))
    if not (u > lo and u < hi):
        u = 0.5 * (lo + hi)
    its = 0
    dx_old = hi - lo
    dx = dx_old
    while True:
        th, d, fb, mag, big = theta_terms(u, sh, a, al, ar, n)
        F = th - rhs
        tol = max(tol_rel * (abs(rhs) + mag), 4.0 * EPS * (big + abs(rhs)))
        if abs(F) <= tol:
            return u, its, OK, F
        if F < 0.0:
            lo = u
        else:
            hi = u
        if its >= maxit:
            return u, its, ERR_NEWTON_CAP, F
        if hi - lo <= 4.0 * EPS * max(abs(lo), abs(hi)):
            return u, its, OK, F
        if fb or not (d > 0.0):
            h = 1e-7 * (hi - lo)
            d = (theta_total(u + h, sh, a, al, ar, n)[0] - theta_total(u - h, sh, a, al, ar, n)[0]) / (2.0 * h)
        un = u - F / d
        # bisect when Newton leaves the bracket or fails to halve the last step
        if not (un > lo and un < hi) or abs(2.0 * F) > abs(dx_old * d):
            dx_old = dx
            dx = 0.5 * (hi - lo)
            un = lo + dx
        else:
            dx_old = dx
            dx = u - un
        u = un
        its += 1


@njit(cache=True, error_model="numpy")
def _put(states, k, s, alpha, tau, u, T):
    states[k, s, 0] = alpha
    states[k, s, 1] = tau
    states[k, s, 2] = u
    states[k, s, 3] = T


@njit(cache=True, error_model="numpy")
def state_energy(row, a, alpha, tau, u, T):
    """``(alpha rho E, pi)`` of a relaxation state."""
    return _state_energy(row, a, alpha, tau, u, T, eos_pressure(row, 1.0 / T))


@njit(cache=True, error_model="numpy", inline="always")
def _state_energy(row, a, alpha, tau, u, T, P):
    pi = P + a * a * (T - tau)
    E = 0.5 * u * u + eos_energy_from_pressure(row, 1.0 / T, P) + (pi * pi - P * P) / (2.0 * a * a)
    return alpha / tau * E, pi


@njit(cache=True, error_model="numpy", inline="always")
def _sector_pressure(k, T, wl, PL, PR):
    # every sector carries the left or the right T unchanged
    return PL[k] if T == wl[k, 3] else PR[k]


@njit(cache=True, error_model="numpy")
def _contact_energy_jump(row, a, states, k, sl, sr, ustar, wl, PL, PR):
    """Jump of ``alpha rho E (u - u1*) + alpha pi u`` across the ``u1*`` wave."""
    s = states[k, sl]
    en, pi = _state_energy(row, a, s[0], s[1], s[2], s[3], _sector_pressure(k, s[3], wl, PL, PR))
    left = en * (s[2] - ustar) + s[0] * pi * s[2]
    s = states[k, sr]
    en, pi = _state_energy(row, a, s[0], s[1], s[2], s[3], _sector_pressure(k, s[3], wl, PL, PR))
    right = en * (s[2] - ustar) + s[0] * pi * s[2]
    return right - left


@njit(cache=True, error_model="numpy")
def phasek_kernel(k, wl, wr, a, sh, ustar, states, speeds):
    """Sectors of phase ``k >= 1`` for a given ``u1*``.

    Returns ``(nwaves, branch, M, fallback, contact_slot, pi_dalpha)``.
    """
    ak = a[k]
    us = sh[k, 0]
    tsl = sh[k, 2]
    tsr = sh[k, 3]
    all_ = wl[k, 0]
    alr = wr[k, 0]
    _put(states, k, 0, all_, wl[k, 1], wl[k, 2], wl[k, 3])
    speeds[k, 0] = wl[k, 2] - ak * wl[k, 1]
    branch, nu, m, M, omM, fb = phase_mach(ustar, us, tsl, tsr, ak, all_, alr)
    if branch == BRANCH_LEFT:
        tm = tsl * (1.0 - m) / omM
        um = ustar + ak * M * tm
        tp = tsl * (1.0 + m) / (1.0 + nu * M)
        up = ustar + nu * ak * M * tp
        trs = tsr + tsl * (m - nu * M) / (1.0 + nu * M)
        _put(states, k, 1, all_, tm, um, wl[k, 3])
        _put(states, k, 2, alr, tp, up, wl[k, 3])
        _put(states, k, 3, alr, trs, up, wr[k, 3])
        speeds[k, 1] = ustar
        speeds[k, 2] = up
        nw = 4
        slot = 1
    elif branch == BRANCH_RIGHT:
        tp = tsr * (1.0 - m) / omM
        up = ustar - ak * M * tp
        tm = tsr * (1.0 + m) / (1.0 + nu * M)
        um = ustar - nu * ak * M * tm
        tls = tsl + tsr * (m - nu * M) / (1.0 + nu * M)
        _put(states, k, 1, all_, tls, um, wl[k, 3])
        _put(states, k, 2, all_, tm, um, wr[k, 3])
        _put(states, k, 3, alr, tp, up, wr[k, 3])
        speeds[k, 1] = um
        speeds[k, 2] = ustar
        nw = 4
        slot = 2
    else:
        _put(states, k, 1, all_, tsl, us, wl[k, 3])
        _put(states, k, 2, alr, tsr, us, wr[k, 3])
        speeds[k, 1] = ustar
        nw = 3
        slot = 1
    _put(states, k, nw, alr, wr[k, 1], wr[k, 2], wr[k, 3])
    speeds[k, nw - 1] = wr[k, 2] + ak * wr[k, 1]
    if fb:
        th = theta_general(branch, ustar, us, tsl, tsr, ak, all_, alr, nu, m, M, omM)
    else:
        th = thetak_eval(ustar, us, tsl, tsr, ak, all_, alr)[0]
    return nw, branch, M, fb, slot, sh[k, 1] * (alr - all_) + th


@njit(cache=True, error_model="numpy")
def fan_kernel(wl, wr, eos, n, a, sh, ustar, states, speeds, nwaves, pidal, Q, Mk, fbk, brk, cslot, PL, PR, with_q):
    """Fill the fan of every phase for a given ``u1*``. Returns a status code.

    ``PL``, ``PR`` hold the pressures at the left and right ``T``. The contact
    energy residuals ``Q`` are evaluated only when ``with_q`` is set.
    """
    us = sh[0, 0]
    _put(states, 0, 0, wl[0, 0], wl[0, 1], wl[0, 2], wl[0, 3])
    _put(states, 0, 1, wl[0, 0], sh[0, 2] + (ustar - us) / a[0], ustar, wl[0, 3])
    _put(states, 0, 2, wr[0, 0], sh[0, 3] - (ustar - us) / a[0], ustar, wr[0, 3])
    _put(states, 0, 3, wr[0, 0], wr[0, 1], wr[0, 2], wr[0, 3])
    speeds[0, 0] = wl[0, 2] - a[0] * wl[0, 1]
    speeds[0, 1] = ustar
    speeds[0, 2] = wr[0, 2] + a[0] * wr[0, 1]
    nwaves[0] = 3
    cslot[0] = 1
    brk[0] = BRANCH_EQUAL
    Mk[0] = 0.0
    fbk[0] = False
    total = 0.0
    for k in range(1, n):
        nw, branch, M, fb, slot, pd = phasek_kernel(k, wl, wr, a, sh, ustar, states, speeds)
        nwaves[k] = nw
        brk[k] = branch
        Mk[k] = M
        fbk[k] = fb
        cslot[k] = slot
        pidal[k] = pd
        total += pd
    pidal[0] = total
    for k in range(n):
        for s in range(1, nwaves[k]):
            if not (states[k, s, 1] > 0.0):
                return ERR_POSITIVITY + k
    if not with_q:
        return OK
    for k in range(n):
        c = cslot[k]
        jump = _contact_energy_jump(eos[k], a[k], states, k, c, c + 1, ustar, wl, PL, PR)
        if k == 0:
            Q[0] = -ustar * pidal[0] - jump
        else:
            Q[k] = ustar * pidal[k] - jump
    return OK


@njit(cache=True, error_model="numpy")
def sector_index(speeds, nw, k, xi, right):
    idx = 0
    for w in range(nw):
        s = speeds[k, w]
        if s < xi or (right and s == xi):
            idx += 1
    return idx


@njit(cache=True, error_model="numpy")
def fan_flux(states, speeds, nwaves, eos, a, n, xi, right, g, G, wl, PL, PR):
    """Conservative flux and phasic energy flux of the fan sampled at ``xi``."""
    for k in range(n - 1):
        g[k] = 0.0
    for k in range(n):
        s = sector_index(speeds, nwaves[k], k, xi, right)
        alpha = states[k, s, 0]
        tau = states[k, s, 1]
        u = states[k, s, 2]
        T = states[k, s, 3]
        en, pi = _state_energy(eos[k], a[k], alpha, tau, u, T, _sector_pressure(k, T, wl, PL, PR))
        mass = alpha / tau
        g[n - 1 + k] = mass * u
        g[2 * n - 1 + k] = mass * u * u + alpha * pi
        G[k] = en * u + alpha * pi * u


@njit(cache=True, error_model="numpy")
def _wave_at(speeds, nwaves, n, xi):
    for k in range(n):
        for w in range(nwaves[k]):
            if speeds[k, w] == xi:
                return True
    return False


@njit(cache=True, error_model="numpy")
def identical(wl, wr, n):
    for k in range(n):
        for c in range(4):
            if wl[k, c] != wr[k, c]:
                return False
    return True


@njit(cache=True, error_model="numpy")
def allocate_scratch(n):
    return (
        np.empty(n),  # a
        np.empty((n, 4)),  # sharp
        np.empty(n),  # PL
        np.empty(n),  # PR
        np.empty(n),  # alpha left
        np.empty(n),  # alpha right
        np.empty(5 + n),  # bounds, then the unscaled a during selection
        np.empty((n, 5, 4)),  # states
        np.empty((n, 4)),  # speeds
        np.empty(n, dtype=np.int64),  # nwaves
        np.empty(n),  # pi* dalpha
        np.empty(n),  # Q
        np.empty(n),  # M
        np.empty(n, dtype=np.bool_),  # fallback
        np.empty(n, dtype=np.int64),  # branch
        np.empty(n, dtype=np.int64),  # contact slot
        np.empty(3 * n - 1),  # g at 0-
        np.empty(n),  # G at 0-
    )


@njit(cache=True, error_model="numpy")
def interface_kernel(wl, wr, eos, n, eta, cap, tol_rel, maxit, scratch, fm, fp, Gp, info, with_q):
    """Relaxation fluxes ``F-``, ``F+`` and the right trace of the energy fluxes.

    ``info`` receives ``(u1*, max speed, newton updates, selection iterations,
    fallback count, residual, solved)`` where ``solved`` is 0 for identical states. ``scratch[10]`` and ``scratch[11]`` hold
    ``pi* dalpha`` and ``Q`` on exit (``Q`` only when ``with_q``). Returns a status code.
    """
    a, sh, PL, PR, al, ar, bounds, states, speeds, nwaves, pidal, Q, Mk, fbk, brk, cslot, g0, G0 = scratch
    nv = 3 * n - 1
    if identical(wl, wr, n):
        f = 1.0 + eta
        speed = 0.0
        for k in range(n):
            alpha = wl[k, 0]
            tau = wl[k, 1]
            u = wl[k, 2]
            rho = 1.0 / tau
            p = eos_pressure(eos[k], rho)
            a[k] = f * rho * eos_sound_speed_from_pressure(eos[k], rho, p)
            mass = alpha * rho
            fm[n - 1 + k] = mass * u
            fm[2 * n - 1 + k] = mass * u * u + alpha * p
            e = eos_energy_from_pressure(eos[k], rho, p)
            Gp[k] = mass * (0.5 * u * u + e) * u + alpha * p * u
            pidal[k] = 0.0
            Q[k] = 0.0
            speed = max(speed, abs(u - a[k] * tau), abs(u + a[k] * tau))
        for k in range(n - 1):
            fm[k] = 0.0
        for i in range(nv):
            fp[i] = fm[i]
        info[0] = wl[0, 2]
        info[1] = speed
        info[2] = 0.0
        info[3] = 0.0
        info[4] = 0.0
        info[5] = 0.0
        info[6] = 0.0
        return OK
    status, sel = select_kernel(wl, wr, eos, n, eta, cap, a, sh, PL, PR, al, ar, bounds)
    if status != OK:
        return status
    ustar, its, status, res = solve_kernel(sh, a, al, ar, n, bounds, tol_rel, maxit)
    if status != OK:
        return status
    status = fan_kernel(wl, wr, eos, n, a, sh, ustar, states, speeds, nwaves, pidal, Q, Mk, fbk, brk, cslot,
                        PL, PR, with_q)
    if status != OK:
        return status
    fan_flux(states, speeds, nwaves, eos, a, n, 0.0, False, fm, G0, wl, PL, PR)
    if _wave_at(speeds, nwaves, n, 0.0):
        fan_flux(states, speeds, nwaves, eos, a, n, 0.0, True, fp, Gp, wl, PL, PR)
    else:
        for i in range(nv):
            fp[i] = fm[i]
        for k in range(n):
            Gp[k] = G0[k]
    if ustar < 0.0:
        for k in range(n - 1):
            fm[k] += ustar * (ar[k] - al[k])
        fm[2 * n - 1] += pidal[0]
        for k in range(1, n):
            fm[2 * n - 1 + k] -= pidal[k]
    elif ustar > 0.0:
        for k in range(n - 1):
            fp[k] -= ustar * (ar[k] - al[k])
        fp[2 * n - 1] -= pidal[0]
        for k in range(1, n):
            fp[2 * n - 1 + k] += pidal[k]
    speed = 0.0
    nfb = 0
    for k in range(n):
        speed = max(speed, abs(wl[k, 2] - a[k] * wl[k, 1]), abs(wr[k, 2] + a[k] * wr[k, 1]))
        if fbk[k]:
            nfb += 1
    info[0] = ustar
    info[1] = speed
    info[2] = its
    info[3] = sel
    info[4] = nfb
    info[5] = res
    info[6] = 1.0
    return OK


# ------------------------------------------------------------ Python API


@dataclass(frozen=True)
class SharpQuantities:
    """Per-phase ``u_sharp``, ``pi_sharp``, ``tau_sharp_L``, ``tau_sharp_R``."""

    u: np.ndarray
    pi: np.ndarray
    tau_L: np.ndarray
    tau_R: np.ndarray

    @classmethod
    def from_array(cls, sh):
        sh = np.asarray(sh)
        return cls(sh[:, 0].copy(), sh[:, 1].copy(), sh[:, 2].copy(), sh[:, 3].copy())

    def array(self):
        return np.column_stack([self.u, self.pi, self.tau_L, self.tau_R])


@dataclass
class RiemannFan:
    """A solved relaxation Riemann problem.

    ``states[k]`` lists the ``(alpha, tau, u, T)`` sectors of phase ``k`` from
    left to right and ``speeds[k]`` the waves between them.
    """

    u1_star: float
    a: np.ndarray
    sharp: SharpQuantities
    states: list
    speeds: list
    pi_dalpha: np.ndarray  # [sum_l pi_l* dalpha_l, pi_2* dalpha_2, ...]
    dissipation: np.ndarray
    mach: np.ndarray
    fallback: np.ndarray
    branch: np.ndarray
    newton_iterations: int
    selection_iterations: int
    residual: float
    eos: np.ndarray = field(repr=False)
    contact_slot: np.ndarray = field(repr=False, default=None)

    @property
    def n_phases(self):
        return self.a.size

    @property
    def delta_alpha(self):
        return np.array([s[-1][0] - s[0][0] for s in self.states])

    @property
    def pi_star(self):
        """Interface pressures ``pi_2*..pi_N*`` (``pi_sharp`` where the fraction does not jump)."""
        out = np.empty(self.n_phases - 1)
        da = self.delta_alpha
        for k in range(1, self.n_phases):
            out[k - 1] = self.pi_dalpha[k] / da[k] if da[k] != 0.0 else self.sharp.pi[k]
        return out

    def packed(self):
        n = self.n_phases
        states = np.zeros((n, 5, 4))
        speeds = np.zeros((n, 4))
        nw = np.zeros(n, dtype=np.int64)
        for k in range(n):
            st = np.asarray(self.states[k])
            states[k, : st.shape[0]] = st
            speeds[k, : len(self.speeds[k])] = self.speeds[k]
            nw[k] = len(self.speeds[k])
        return states, speeds, nw

    def all_speeds(self):
        return np.unique(np.concatenate([np.asarray(s) for s in self.speeds]))


def _as_packed(state, n_phases=None):
    if isinstance(state, RelaxationState):
        return state.packed()
    arr = np.asarray(state, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if n_phases is None:
        raise TypeError("n_phases is required for flat vectors")
    if arr.size == 3 * n_phases - 1:
        return lift(arr, n_phases).packed()
    return RelaxationState.from_vector(arr, n_phases).packed()


def _table(eos_list):
    if isinstance(eos_list, np.ndarray):
        return eos_list
    return stack_rows(eos_list)


def select_wave_speeds(U_L, U_R, eos_list: Sequence[Eos], eta=DEFAULT_ETA, max_iter=None) -> RelaxParams:
    """Choose ``a_k`` per the (1+eta) growth algorithm; raises :class:`SolverSetupError` past the cap."""
    if not (0.0 < eta < 1.0):
        raise ValueError("eta must lie in (0, 1)")
    eos = _table(eos_list)
    n = eos.shape[0]
    wl = _as_packed(U_L, n)
    wr = _as_packed(U_R, n)
    cap = selection_cap(eta) if max_iter is None else int(max_iter)
    sc = allocate_scratch(n)
    status, its = select_kernel(wl, wr, eos, n, eta, cap, sc[0], sc[1], sc[2], sc[3], sc[4], sc[5], sc[6])
    if status != OK:
        raise SolverSetupError(
            f"relaxation coefficients not found within {cap} iterations (status {status}); "
            f"last a = {sc[0].tolist()}, sharp = {sc[1].tolist()}"
        )
    return RelaxParams(sc[0].copy(), its)


def whitham_margins(U_L, U_R, eos_list, a):
    """``a_k / max(rho c)`` over both traces; values above 1 satisfy the sub-characteristic condition."""
    eos = _table(eos_list)
    n = eos.shape[0]
    out = np.empty(n)
    for side in (U_L, U_R):
        w = _as_packed(side, n)
        for k in range(n):
            rho = 1.0 / w[k, 1]
            rc = rho * eos_sound_speed(eos[k], rho)
            out[k] = a[k] / rc if side is U_L else min(out[k], a[k] / rc)
    return out


def sharp_quantities(W_L, W_R, a, eos_list) -> SharpQuantities:
    eos = _table(eos_list)
    n = eos.shape[0]
    wl = _as_packed(W_L, n)
    wr = _as_packed(W_R, n)
    a = np.asarray(a, dtype=np.float64)
    PL = np.array([eos_pressure(eos[k], 1.0 / wl[k, 3]) for k in range(n)])
    PR = np.array([eos_pressure(eos[k], 1.0 / wr[k, 3]) for k in range(n)])
    sh = np.empty((n, 4))
    for k in range(n):
        sharp_phase(k, wl, wr, PL, PR, a, sh)
    return SharpQuantities.from_array(sh)


def m0(nu, omega):
    """The energy-preserving Mach parameter ``M0(nu, omega)``, with ``M0(nu, 1) = 0``."""
    nu = float(nu)
    omega = float(omega)
    if nu <= 0 or omega <= 0:
        raise ValueError("m0 needs nu > 0 and omega > 0")
    if omega == 1.0:
        return 0.0
    if omega < 1.0:
        return float(mach0(nu, (1.0 - omega) / (1.0 + omega)))
    f = (1.0 + omega * omega) / (1.0 - omega * omega)
    s = 1.0 + 1.0 / nu
    return 0.5 * (f * s - math.sqrt(f * f * s * s - 4.0 / nu))


def theta1(u, sharp: SharpQuantities, a, alpha1_L, alpha1_R):
    return float(a[0] * (alpha1_L + alpha1_R) * (u - sharp.u[0]))


def thetak(k, u, sharp: SharpQuantities, a, alpha_L, alpha_R):
    """Energy-preserving momentum-jump function of phase ``k`` (0-based, ``k >= 1``).

    ``alpha_L`` and ``alpha_R`` may be per-phase arrays or the two scalars of phase ``k``.
    """
    al = float(np.asarray(alpha_L).reshape(-1)[k] if np.ndim(alpha_L) else alpha_L)
    ar = float(np.asarray(alpha_R).reshape(-1)[k] if np.ndim(alpha_R) else alpha_R)
    return float(thetak_eval(float(u), sharp.u[k], sharp.tau_L[k], sharp.tau_R[k], float(a[k]), al, ar)[0])


def theta_sum(u, sharp: SharpQuantities, a, alpha_L, alpha_R):
    """``Theta(u)`` as used by the fixed point (includes the positivity fallback)."""
    return float(theta_total(float(u), sharp.array(), np.asarray(a, float), np.asarray(alpha_L, float),
                             np.asarray(alpha_R, float), len(a))[0])


def solve_interface_velocity(sharp: SharpQuantities, a, alpha_L, alpha_R, tol=TOL_REL, max_iter=MAX_NEWTON):
    """Root ``u1*`` of ``Theta(u) = sum_k (pi1_sharp - pik_sharp) dalpha_k`` and the Newton count."""
    sh = sharp.array()
    a = np.asarray(a, dtype=np.float64)
    al = np.asarray(alpha_L, dtype=np.float64)
    ar = np.asarray(alpha_R, dtype=np.float64)
    n = a.size
    cl, cr = bracket(sh, a, n)
    rhs = fixed_point_rhs(sh, al, ar, n)
    if not cl < cr:
        raise InconsistentSetupError(f"empty bracket ({cl}, {cr})")
    thl = theta_total(cl, sh, a, al, ar, n)[0]
    thr = theta_total(cr, sh, a, al, ar, n)[0]
    if not (thl < rhs < thr):
        raise InconsistentSetupError(
            f"no sign change of Theta - rhs on ({cl}, {cr}): {thl - rhs}, {thr - rhs}"
        )
    bounds = np.array([cl, cr, thl, thr, rhs])
    u, its, status, _ = solve_kernel(sh, a, al, ar, n, bounds, tol, max_iter)
    if status != OK:
        raise InconsistentSetupError(f"Newton did not converge in {max_iter} iterations")
    return float(u), int(its)


def phase1_fan(W1_L, W1_R, a1, u1_star, sharp1):
    """Sectors of phase 1: left data, two states at ``u1*`` and right data.

    ``W1_L``, ``W1_R`` are ``(alpha, tau, u, T)`` tuples; ``sharp1`` is
    ``(u_sharp, pi_sharp, tau_sharp_L, tau_sharp_R)``.
    """
    us, _, tsl, tsr = sharp1
    if not (W1_L[2] - a1 * W1_L[1] < u1_star < W1_R[2] + a1 * W1_R[1]):
        raise PositivityError("phase 1: u1* outside its acoustic waves", phase=1)
    tm = tsl + (u1_star - us) / a1
    tp = tsr - (u1_star - us) / a1
    states = [tuple(W1_L), (W1_L[0], tm, u1_star, W1_L[3]), (W1_R[0], tp, u1_star, W1_R[3]), tuple(W1_R)]
    speeds = [W1_L[2] - a1 * W1_L[1], u1_star, W1_R[2] + a1 * W1_R[1]]
    return states, speeds


def phasek_fan(Wk_L, Wk_R, ak, u1_star, sharpk):
    """Sectors of a phase ``k >= 2`` for a given ``u1*``.

    ``Wk_L``/``Wk_R`` are ``(alpha, tau, u, T)`` and ``sharpk`` is
    ``(u_sharp, pi_sharp, tau_sharp_L, tau_sharp_R)`` of that phase. Returns
    ``(states, speeds, pi_dalpha, M, fallback, branch)``.
    """
    wl = np.zeros((2, 4))
    wr = np.zeros((2, 4))
    wl[1] = Wk_L
    wr[1] = Wk_R
    sh = np.zeros((2, 4))
    sh[1] = sharpk
    a = np.array([1.0, ak], dtype=np.float64)
    st = np.zeros((2, 5, 4))
    sp = np.zeros((2, 4))
    nw, branch, M, fb, _, pd = phasek_kernel(1, wl, wr, a, sh, float(u1_star), st, sp)
    states = [tuple(float(v) for v in st[1, s]) for s in range(nw + 1)]
    if any(s[1] <= 0 for s in states[1:-1]):
        raise PositivityError("non-positive intermediate specific volume in a phase fan")
    return states, [float(v) for v in sp[1, :nw]], float(pd), float(M), bool(fb), int(branch)


def _unpack_fan(n, eos, a, sh, st, sp, nw, pidal, Q, Mk, fbk, brk, cs, ustar, its, sel, res):
    states = [[tuple(float(v) for v in st[k, s]) for s in range(nw[k] + 1)] for k in range(n)]
    speeds = [[float(v) for v in sp[k, : nw[k]]] for k in range(n)]
    return RiemannFan(
        u1_star=float(ustar),
        a=a.copy(),
        sharp=SharpQuantities.from_array(sh),
        states=states,
        speeds=speeds,
        pi_dalpha=pidal.copy(),
        dissipation=Q.copy(),
        mach=Mk.copy(),
        fallback=fbk.copy(),
        branch=brk.copy(),
        newton_iterations=int(its),
        selection_iterations=int(sel),
        residual=float(res),
        eos=eos,
        contact_slot=cs.copy(),
    )


def solve_riemann(W_L, W_R, eos_list, a=None, eta=DEFAULT_ETA, tol=TOL_REL, max_iter=MAX_NEWTON) -> RiemannFan:
    """Full relaxation Riemann solution.

    ``W_L``/``W_R`` may be :class:`RelaxationState`, packed ``(N, 4)`` arrays
    or flat ``U`` vectors (lifted to equilibrium). When ``a`` is omitted it is
    selected with :func:`select_wave_speeds`.
    """
    eos = _table(eos_list)
    n = eos.shape[0]
    wl = _as_packed(W_L, n)
    wr = _as_packed(W_R, n)
    sc = allocate_scratch(n)
    a_arr, sh, PL, PR, al, ar, bounds, st, sp, nw, pidal, Q, Mk, fbk, brk, cs, _, _ = sc
    if a is None:
        cap = selection_cap(eta)
        status, sel = select_kernel(wl, wr, eos, n, eta, cap, a_arr, sh, PL, PR, al, ar, bounds)
        if status != OK:
            raise SolverSetupError(f"relaxation coefficients not found (status {status})")
    else:
        a_arr[:] = np.asarray(a.a if isinstance(a, RelaxParams) else a, dtype=np.float64)
        sel = 0
        for k in range(n):
            PL[k] = eos_pressure(eos[k], 1.0 / wl[k, 3])
            PR[k] = eos_pressure(eos[k], 1.0 / wr[k, 3])
            sharp_phase(k, wl, wr, PL, PR, a_arr, sh)
        al[:] = wl[:, 0]
        ar[:] = wr[:, 0]
        if np.any(sh[:, 2] <= 0) or np.any(sh[:, 3] <= 0):
            raise PositivityError("non-positive sharp specific volume for the given coefficients")
    ustar, its = solve_interface_velocity(SharpQuantities.from_array(sh), a_arr, al, ar, tol, max_iter)
    status = fan_kernel(wl, wr, eos, n, a_arr, sh, ustar, st, sp, nw, pidal, Q, Mk, fbk, brk, cs, PL, PR, True)
    if status != OK:
        k = status - ERR_POSITIVITY
        raise PositivityError(f"phase {k + 1}: non-positive intermediate specific volume", phase=k + 1)
    th, _, _ = theta_total(ustar, sh, a_arr, al, ar, n)
    res = th - fixed_point_rhs(sh, al, ar, n)
    return _unpack_fan(n, eos, a_arr, sh, st, sp, nw, pidal, Q, Mk, fbk, brk, cs, ustar, its, sel, res)


def sample(fan: RiemannFan, xi, side="right") -> RelaxationState:
    """Constant state of the sector containing ``xi``; on a wave the right limit unless ``side='left'``."""
    right = side == "right"
    n = fan.n_phases
    rows = np.empty((n, 4))
    for k in range(n):
        idx = sum(1 for s in fan.speeds[k] if s < xi or (right and s == xi))
        rows[k] = fan.states[k][idx]
    return RelaxationState(rows[:, 0].copy(), 1.0 / rows[:, 1], rows[:, 2].copy(), rows[:, 3].copy())


def fan_fluxes(fan: RiemannFan):
    """``(F-, F+, G-, G+)`` of a solved fan at the interface ``x/t = 0``."""
    n = fan.n_phases
    st, sp, nw = fan.packed()
    fm = np.empty(3 * n - 1)
    fp = np.empty(3 * n - 1)
    Gm = np.empty(n)
    Gp = np.empty(n)
    wl = st[:, 0, :].copy()
    PL = np.array([eos_pressure(fan.eos[k], 1.0 / wl[k, 3]) for k in range(n)])
    PR = np.array([eos_pressure(fan.eos[k], 1.0 / st[k, nw[k], 3]) for k in range(n)])
    fan_flux(st, sp, nw, fan.eos, fan.a, n, 0.0, False, fm, Gm, wl, PL, PR)
    fan_flux(st, sp, nw, fan.eos, fan.a, n, 0.0, True, fp, Gp, wl, PL, PR)
    D = nonconservative_weights(fan)
    if fan.u1_star < 0:
        fm += D
    elif fan.u1_star > 0:
        fp -= D
    return fm, fp, Gm, Gp


def nonconservative_weights(fan: RiemannFan):
    """The vector ``D*`` carried by the ``u1*`` wave."""
    n = fan.n_phases
    D = np.zeros(3 * n - 1)
    D[: n - 1] = fan.u1_star * fan.delta_alpha[: n - 1]
    D[2 * n - 1] = fan.pi_dalpha[0]
    D[2 * n :] = -fan.pi_dalpha[1:]
    return D


def numerical_fluxes(U_L, U_R, eos_list, eta=DEFAULT_ETA):
    """``(F-, F+, fan)`` for two flat equilibrium states.

    The fluxes come from the same kernel as the time loop; the fan is solved
    separately for inspection.
    """
    eos = _table(eos_list)
    n = eos.shape[0]
    wl = equilibrium_pack(U_L, n)
    wr = equilibrium_pack(U_R, n)
    fm = np.empty(3 * n - 1)
    fp = np.empty(3 * n - 1)
    Gp = np.empty(n)
    info = np.empty(7)
    status = interface_kernel(wl, wr, eos, n, eta, selection_cap(eta), TOL_REL, MAX_NEWTON,
                              allocate_scratch(n), fm, fp, Gp, info, True)
    raise_for_status(status)
    return fm, fp, solve_riemann(wl, wr, eos, eta=eta)


def raise_for_status(status, where=""):
    if status == OK:
        return
    suffix = f" at {where}" if where else ""
    if status == ERR_SHARP_CAP or status == ERR_EXIST_CAP:
        raise SolverSetupError(f"relaxation coefficient selection hit its iteration cap{suffix}")
    if status == ERR_NO_SIGN_CHANGE or status == ERR_NEWTON_CAP:
        raise InconsistentSetupError(f"interface velocity fixed point failed{suffix}")
    k = status - ERR_POSITIVITY + 1
    raise PositivityError(f"phase {k}: non-positive intermediate specific volume{suffix}", phase=k)


def fan_csv(fan: RiemannFan) -> str:
    """CSV dump of a fan: one row per phase sector."""
    buf = io.StringIO()
    buf.write("phase,sector,speed_left,alpha,tau,u,T,pi\n")
    for k in range(fan.n_phases):
        row = fan.eos[k]
        for s, (alpha, tau, u, T) in enumerate(fan.states[k]):
            left = "-inf" if s == 0 else f"{fan.speeds[k][s - 1]:.17g}"
            pi = eos_pressure(row, 1.0 / T) + fan.a[k] ** 2 * (T - tau)
            buf.write(f"{k + 1},{s},{left},{alpha:.17g},{tau:.17g},{u:.17g},{T:.17g},{pi:.17g}\n")
    return buf.getvalue()


def equilibrium_pack(U, n_phases):
    """Packed ``(N, 4)`` equilibrium rows of a flat ``U``."""
    alpha, rho, u = primitives(np.asarray(U, dtype=np.float64), n_phases)
    return np.column_stack([alpha, 1.0 / rho, u, 1.0 / rho])
