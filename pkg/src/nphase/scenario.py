"""Scenario files: custom two-state Riemann problems in INI syntax.

Grammar (``configparser`` syntax, ``;`` or ``#`` comments)::

    [case]
    id = my_case                ; optional, defaults to the file stem
    phases = 3                  ; N >= 2
    domain = 0.0, 1.0
    x0 = 0.5                    ; initial discontinuity
    t_max = 0.05
    left_boundary = transmissive ; transmissive | wall | periodic
    right_boundary = transmissive

    [phase1]                    ; phase 1 carries the interface velocity
    eos = power_law             ; p = kappa * rho**gamma
    kappa = 1.0
    gamma = 3.0

    [phase2]
    eos = stiffened             ; p = c**2 * rho + p_ref, p(rho_ref) = p_target
    c = 1500
    rho_ref = 1000
    p_target = 1e5

    [phase3]
    eos = calibrated_power_law  ; p = kappa * rho**gamma, p(rho_ref) = p_target
    gamma = 1.4
    rho_ref = 1.27
    p_target = 1e5

    [left]
    alpha = 0.9, 0.05           ; N-1 values (the last fraction closes the sum) or N values
    rho = 2.5, 0.2, 0.5
    u = -0.56603, 6.18311, 0.31861

    [right]
    ...

Every key is required unless marked optional.
"""

from __future__ import annotations

import configparser
from pathlib import Path

import numpy as np

from .eos import Eos
from .exceptions import NPhaseError
from .fv import BOUNDARY_KINDS, TRANSMISSIVE
from .model import SATURATION_TOL, MixtureState
from .reference import TestCase, riemann_case

EOS_KINDS = ("power_law", "stiffened", "calibrated_power_law")


class ScenarioError(NPhaseError, ValueError):
    """Malformed or inadmissible scenario file."""


def _floats(section, key, count=None):
    raw = _get(section, key)
    try:
        values = [float(v) for v in raw.replace(",", " ").split()]
    except ValueError:
        raise ScenarioError(f"[{section.name}] {key}: not a list of numbers: {raw!r}") from None
    if count is not None and len(values) not in count:
        raise ScenarioError(f"[{section.name}] {key}: expected {' or '.join(map(str, count))} values, got {len(values)}")
    return values


def _float(section, key):
    return _floats(section, key, (1,))[0]


def _get(section, key):
    if key not in section:
        raise ScenarioError(f"[{section.name}] missing key {key!r}")
    return section[key].strip()


def _section(cfg, name):
    if not cfg.has_section(name):
        raise ScenarioError(f"missing section [{name}]")
    return cfg[name]


def parse_eos(section) -> Eos:
    kind = _get(section, "eos")
    if kind == "power_law":
        return Eos.power_law(_float(section, "kappa"), _float(section, "gamma"))
    if kind == "stiffened":
        return Eos.stiffened(_float(section, "c"), _float(section, "rho_ref"), _float(section, "p_target"))
    if kind == "calibrated_power_law":
        return Eos.calibrated_power_law(_float(section, "gamma"), _float(section, "rho_ref"), _float(section, "p_target"))
    raise ScenarioError(f"[{section.name}] unknown eos {kind!r}; expected one of {EOS_KINDS}")


def parse_state(section, n) -> MixtureState:
    alpha = _floats(section, "alpha", (n - 1, n))
    if len(alpha) == n - 1:
        alpha.append(1.0 - sum(alpha))
    elif abs(sum(alpha) - 1.0) > SATURATION_TOL:
        raise ScenarioError(f"[{section.name}] alpha does not sum to one: {sum(alpha)!r}")
    rho = _floats(section, "rho", (n,))
    u = _floats(section, "u", (n,))
    return MixtureState.from_arrays(np.array(alpha), np.array(rho), np.array(u))


def _boundary(section, key):
    kind = section.get(key, TRANSMISSIVE).strip()
    if kind not in BOUNDARY_KINDS:
        raise ScenarioError(f"[{section.name}] {key}: unknown boundary {kind!r}; expected one of {BOUNDARY_KINDS}")
    return kind


def parse_scenario(text: str, default_id="scenario") -> TestCase:
    """Build a test case from scenario text."""
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cfg.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"unreadable scenario: {exc}") from None
    case = _section(cfg, "case")
    try:
        n = int(_get(case, "phases"))
    except ValueError:
        raise ScenarioError("[case] phases: not an integer") from None
    if n < 2:
        raise ScenarioError(f"[case] phases must be >= 2, got {n}")
    domain = _floats(case, "domain", (2,))
    if not domain[0] < domain[1]:
        raise ScenarioError(f"[case] domain must be increasing, got {domain}")
    x0 = _float(case, "x0")
    if not domain[0] < x0 < domain[1]:
        raise ScenarioError(f"[case] x0={x0} outside the domain {domain}")
    t_max = _float(case, "t_max")
    if not t_max > 0.0:
        raise ScenarioError(f"[case] t_max must be positive, got {t_max}")
    eos = tuple(parse_eos(_section(cfg, f"phase{k + 1}")) for k in range(n))
    left = parse_state(_section(cfg, "left"), n)
    right = parse_state(_section(cfg, "right"), n)
    try:
        return riemann_case(
            case.get("id", default_id).strip(),
            eos,
            left,
            right,
            domain=tuple(domain),
            x0=x0,
            t_max=t_max,
            left_bc=_boundary(case, "left_boundary"),
            right_bc=_boundary(case, "right_boundary"),
        )
    except NPhaseError as exc:
        raise ScenarioError(str(exc)) from exc


def load_scenario(path) -> TestCase:
    path = Path(path)
    return parse_scenario(path.read_text(), default_id=path.stem)
