"""Coordinate-increment (Itoh-Abe) discrete gradients built from H alone."""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

DEFAULT_EPS_SWITCH = 1e-12

# Cube root of machine epsilon balances truncation against rounding for
# central differences.
_FD_REL_STEP = np.finfo(float).eps ** (1.0 / 3.0)


class DGradPair(NamedTuple):
    dx_part: float
    dy_part: float


def _fd_step(v: float) -> float:
    return _FD_REL_STEP * max(1.0, abs(v))


def central_partials(H: Callable[[float, float], float], x: float, y: float) -> tuple[float, float]:
    """Central finite-difference gradient of H."""
    hx = _fd_step(x)
    hy = _fd_step(y)
    gx = (H(x + hx, y) - H(x - hx, y)) / (2.0 * hx)
    gy = (H(x, y + hy) - H(x, y - hy)) / (2.0 * hy)
    return gx, gy


def _checked(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise FloatingPointError(f"non-finite H evaluation while forming {what}")
    return value


def divided_x(H, xa: float, xb: float, y: float, eps_switch: float = DEFAULT_EPS_SWITCH) -> float:
    """``[H(xb, y) - H(xa, y)] / (xb - xa)``, or dH/dx at the midpoint when the
    increment is below ``eps_switch``."""
    dx = xb - xa
    if abs(dx) > eps_switch:
        return _checked((H(xb, y) - H(xa, y)) / dx, "x divided difference")
    xm = 0.5 * (xa + xb)
    step = _fd_step(xm)
    return _checked((H(xm + step, y) - H(xm - step, y)) / (2.0 * step), "x derivative")


def divided_y(H, x: float, ya: float, yb: float, eps_switch: float = DEFAULT_EPS_SWITCH) -> float:
    dy = yb - ya
    if abs(dy) > eps_switch:
        return _checked((H(x, yb) - H(x, ya)) / dy, "y divided difference")
    ym = 0.5 * (ya + yb)
    step = _fd_step(ym)
    return _checked((H(x, ym + step) - H(x, ym - step)) / (2.0 * step), "y derivative")


def itoh_abe_dgrad(
    H: Callable[[float, float], float],
    x_a: float,
    x_b: float,
    y_a: float,
    y_b: float,
    eps_switch: float = DEFAULT_EPS_SWITCH,
) -> DGradPair:
    """Discrete gradient from the path (x_a, y_a) -> (x_b, y_a) -> (x_b, y_b).

    The x increment is taken at the old y and the y increment at the new x, so
    ``dx_part*(x_b - x_a) + dy_part*(y_b - y_a)`` telescopes to
    ``H(x_b, y_b) - H(x_a, y_a)``.
    """
    if not eps_switch > 0:
        raise ValueError(f"eps_switch must be positive, got {eps_switch}")
    return DGradPair(
        divided_x(H, x_a, x_b, y_a, eps_switch),
        divided_y(H, x_b, y_a, y_b, eps_switch),
    )


def validate_closed_forms(model, n_samples: int = 1000, seed: int = 0) -> float:
    """Largest mismatch between a model's closed-form discrete partials and
    :func:`itoh_abe_dgrad` on random quadruples drawn from [-10, 10]^4.

    Mismatches are measured on the energy increments the two partials produce,
    ``|(g_closed - g_generic) * delta|``, scaled by ``max(1, |H|)`` at the two
    endpoints. A plain quotient of the partials would blow up wherever the
    discrete gradient itself passes through zero.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    quads = rng.uniform(-10.0, 10.0, size=(n_samples, 4))
    H = model.H
    worst = 0.0
    for xa, xb, ya, yb in quads.tolist():
        generic = itoh_abe_dgrad(H, xa, xb, ya, yb)
        scale_x = max(1.0, abs(H(xa, ya)), abs(H(xb, ya)))
        scale_y = max(1.0, abs(H(xb, ya)), abs(H(xb, yb)))
        err_x = abs((model.dgradH_x(xa, xb, ya) - generic.dx_part) * (xb - xa)) / scale_x
        err_y = abs((model.dgradH_y(xb, ya, yb) - generic.dy_part) * (yb - ya)) / scale_y
        worst = max(worst, err_x, err_y)
    return worst
