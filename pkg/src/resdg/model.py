"""Planar non-conservative systems of the form x' = y, y' = -dH/dx - D(x, y).

Every builtin model ships closed-form discrete partials of H so the implicit
schemes never divide by a vanishing increment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Callable, Mapping, NamedTuple

from . import dgrad

__all__ = [
    "PhaseState",
    "SystemKind",
    "SystemModel",
    "make_damped_harmonic",
    "make_van_der_pol",
    "make_duffing",
    "make_conservative",
    "make_system",
    "exact_damped_harmonic",
    "eval_K",
]


class PhaseState(NamedTuple):
    """One sample of the augmented trajectory; ``z`` is the reservoir."""

    t: float
    x: float
    y: float
    z: float = 0.0


class SystemKind(str, Enum):
    DAMPED_HARMONIC = "damped-ho"
    VAN_DER_POL = "vdp"
    DUFFING = "duffing"
    CONSERVATIVE = "conservative"


EnergyMap = Callable[[float, float], float]


@dataclass(frozen=True)
class SystemModel:
    """A planar system: energy ``H``, damping force ``D`` and their derivatives.

    ``dgradH_x(xa, xb, y)`` is the discrete x-partial of H taken at fixed y,
    ``dgradH_y(x, ya, yb)`` the discrete y-partial at fixed x. Both satisfy the
    mean-value identity ``dgrad * (b - a) == H(b) - H(a)`` along their
    coordinate.
    """

    name: str
    kind: SystemKind
    H: EnergyMap
    dH: Callable[[float, float], tuple[float, float]]
    D: EnergyMap
    dgradH_x: Callable[[float, float, float], float]
    dgradH_y: Callable[[float, float, float], float]
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    def force(self, x: float, y: float) -> float:
        """Right-hand side of the y equation, ``-dH/dx - D``."""
        return -self.dH(x, y)[0] - self.D(x, y)


def _quadratic_parts():
    def H(x, y):
        return 0.5 * x * x + 0.5 * y * y

    def dH(x, y):
        return x, y

    def dgradH_x(xa, xb, y):
        return 0.5 * (xa + xb)

    def dgradH_y(x, ya, yb):
        return 0.5 * (ya + yb)

    return H, dH, dgradH_x, dgradH_y


def _check_finite(**values):
    for key, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"parameter {key} must be finite, got {value!r}")


def make_damped_harmonic(b: float) -> SystemModel:
    """Linear oscillator with viscous damping ``D = b*y``."""
    _check_finite(b=b)
    H, dH, dgx, dgy = _quadratic_parts()

    def D(x, y):
        return b * y

    return SystemModel("damped-ho", SystemKind.DAMPED_HARMONIC, H, dH, D, dgx, dgy, {"b": b})


def make_van_der_pol(a: float) -> SystemModel:
    """Van der Pol oscillator, ``y' = -x + a(1 - x^2) y``.

    The nonlinear friction is carried by ``D = -a(1 - x^2) y``; H stays the
    harmonic energy.
    """
    _check_finite(a=a)
    H, dH, dgx, dgy = _quadratic_parts()

    def D(x, y):
        return -a * (1.0 - x * x) * y

    return SystemModel("vdp", SystemKind.VAN_DER_POL, H, dH, D, dgx, dgy, {"a": a})


def make_duffing(b: float) -> SystemModel:
    """Damped double-well Duffing oscillator, ``H = y^2/2 - x^2/2 + x^4/4``."""
    _check_finite(b=b)
    if b < 0:
        raise ValueError(f"Duffing damping must be non-negative, got b={b}")

    def H(x, y):
        x2 = x * x
        return 0.5 * y * y - 0.5 * x2 + 0.25 * x2 * x2

    def dH(x, y):
        return -x + x * x * x, y

    def D(x, y):
        return b * y

    def dgradH_x(xa, xb, y):
        s = xa + xb
        return -0.5 * s + 0.25 * s * (xa * xa + xb * xb)

    def dgradH_y(x, ya, yb):
        return 0.5 * (ya + yb)

    return SystemModel("duffing", SystemKind.DUFFING, H, dH, D, dgradH_x, dgradH_y, {"b": b})


def make_conservative(
    H: EnergyMap,
    dH: Callable[[float, float], tuple[float, float]] | None = None,
    name: str = "conservative",
    eps_switch: float = dgrad.DEFAULT_EPS_SWITCH,
) -> SystemModel:
    """Wrap a bare Hamiltonian; discrete partials come from divided differences.

    Without ``dH`` the exact partials are approximated by central differences.
    """
    if dH is None:
        def dH(x, y):
            return dgrad.central_partials(H, x, y)

    def D(x, y):
        return 0.0

    def dgradH_x(xa, xb, y):
        return dgrad.divided_x(H, xa, xb, y, eps_switch)

    def dgradH_y(x, ya, yb):
        return dgrad.divided_y(H, x, ya, yb, eps_switch)

    return SystemModel(name, SystemKind.CONSERVATIVE, H, dH, D, dgradH_x, dgradH_y, {})


_FACTORIES = {
    SystemKind.DAMPED_HARMONIC: (make_damped_harmonic, "b", 0.2),
    SystemKind.VAN_DER_POL: (make_van_der_pol, "a", 1.0),
    SystemKind.DUFFING: (make_duffing, "b", 0.2),
}


def make_system(kind: SystemKind | str, params: Mapping[str, float] | None = None) -> SystemModel:
    """Build a builtin system by name, filling in the default parameter."""
    kind = SystemKind(kind)
    if kind not in _FACTORIES:
        raise ValueError(f"no builtin factory for {kind.value!r}")
    factory, key, default = _FACTORIES[kind]
    params = dict(params or {})
    unknown = set(params) - {key}
    if unknown:
        raise ValueError(f"{kind.value} takes only parameter {key!r}, got {sorted(unknown)}")
    return factory(float(params.get(key, default)))


def exact_damped_harmonic(b: float, x0: float, y0: float, t: float) -> tuple[float, float]:
    """Closed-form underdamped solution of ``x'' + b x' + x = 0``."""
    if not 0.0 <= b < 2.0:
        raise ValueError(f"only the underdamped branch 0 <= b < 2 is available, got b={b}")
    omega = math.sqrt(1.0 - 0.25 * b * b)
    c1 = x0
    c2 = (y0 + 0.5 * b * x0) / omega
    decay = math.exp(-0.5 * b * t)
    cos_t = math.cos(omega * t)
    sin_t = math.sin(omega * t)
    osc = c1 * cos_t + c2 * sin_t
    dosc = omega * (c2 * cos_t - c1 * sin_t)
    return decay * osc, decay * (dosc - 0.5 * b * osc)


def eval_K(model: SystemModel, s: PhaseState) -> float:
    """Computational invariant ``K = H + z``."""
    return model.H(s.x, s.y) + s.z
