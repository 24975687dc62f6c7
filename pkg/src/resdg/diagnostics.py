"""Post-processing of trajectories: invariant drift, energy decrement,
global error, convergence order and Duffing basin labels."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .integrators import Trajectory, IterationStats
from .model import SystemKind, SystemModel, exact_damped_harmonic

__all__ = [
    "DecrementMode",
    "Basin",
    "GridMismatchError",
    "DiagnosticsReport",
    "energy_decrement",
    "decrement_theory",
    "k_drift",
    "global_error",
    "convergence_order",
    "classify_basin",
    "build_report",
]

_DENOM_FLOOR = 1e-300


class DecrementMode(str, Enum):
    DIRECT = "direct"
    RESERVOIR = "reservoir"


class Basin(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    UNDECIDED = "undecided"


class GridMismatchError(ValueError):
    pass


def _ratios(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # vanishing denominators become NaN gaps instead of raising
    out = np.full(len(den), np.nan)
    ok = np.abs(den) >= _DENOM_FLOOR
    out[ok] = num[ok] / den[ok]
    return out


def energy_decrement(model: SystemModel, traj: Trajectory,
                     mode: DecrementMode | str = DecrementMode.DIRECT) -> np.ndarray:
    """Per-step energy ratio, length ``len(traj) - 1``.

    ``direct`` is ``H_{i+1}/H_i``; ``reservoir`` reads the same ratio off the
    reservoir as ``(K_0 - z_{i+1})/(K_0 - z_i)``. NaN marks a step whose
    denominator vanished.
    """
    mode = DecrementMode(mode)
    if mode is DecrementMode.DIRECT:
        H = traj.H(model)
        return _ratios(H[1:], H[:-1])
    K0 = model.H(float(traj.x[0]), float(traj.y[0])) + float(traj.z[0])
    left = K0 - traj.z
    return _ratios(left[1:], left[:-1])


def decrement_theory(model: SystemModel, times: np.ndarray, source: str = "exact", *,
                     ic: tuple[float, float] | None = None,
                     reference: Trajectory | None = None) -> np.ndarray:
    """Energy decrement along the true solution, length ``len(times) - 1``.

    ``source="exact"`` uses the closed-form damped oscillator started from
    ``ic`` at ``times[0]``; ``source="reference"`` reads H off ``reference``,
    which must sit on the same grid.
    """
    times = np.asarray(times, dtype=float)
    if source == "exact":
        if model.kind is not SystemKind.DAMPED_HARMONIC:
            raise ValueError("exact decrement only exists for the damped oscillator")
        if ic is None:
            raise ValueError("source='exact' needs the initial condition")
        b = model.params["b"]
        pts = [exact_damped_harmonic(b, ic[0], ic[1], t - times[0]) for t in times.tolist()]
        H = np.array([model.H(x, y) for x, y in pts])
    elif source == "reference":
        if reference is None:
            raise ValueError("source='reference' needs a reference trajectory")
        _check_grid(times, reference.t)
        H = reference.H(model)
    else:
        raise ValueError(f"unknown decrement source {source!r}")
    return _ratios(H[1:], H[:-1])


def k_drift(model: SystemModel, traj: Trajectory) -> np.ndarray:
    K = traj.K(model)
    return np.abs(K - K[0])


def _check_grid(t: np.ndarray, t_ref: np.ndarray) -> None:
    if len(t) != len(t_ref):
        raise GridMismatchError(f"grids differ in length: {len(t)} vs {len(t_ref)}")
    scale = max(1.0, float(np.max(np.abs(t_ref))) if len(t_ref) else 1.0)
    gap = float(np.max(np.abs(t - t_ref))) if len(t) else 0.0
    if gap > 1e-12 * scale:
        raise GridMismatchError(f"grids differ by up to {gap:.3e} in time")


def global_error(traj: Trajectory, ref: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Component-wise ``|x - x_ref|`` and ``|y - y_ref|`` on a shared grid."""
    _check_grid(traj.t, ref.t)
    return np.abs(traj.x - ref.x), np.abs(traj.y - ref.y)


def convergence_order(errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``.

    ``errors`` is a sequence of ``(h, error)`` pairs with strictly decreasing h.
    """
    pairs = [(float(h), float(e)) for h, e in errors]
    if len(pairs) < 2:
        raise ValueError("need at least two (h, error) pairs")
    hs = np.array([p[0] for p in pairs])
    es = np.array([p[1] for p in pairs])
    if np.any(np.diff(hs) >= 0):
        raise ValueError("step sizes must be strictly decreasing")
    if np.any(hs <= 0) or np.any(~np.isfinite(es)) or np.any(es <= 0):
        raise ValueError("step sizes and errors must be positive and finite")
    slope, _ = np.polyfit(np.log(hs), np.log(es), 1)
    return float(slope)


def classify_basin(traj: Trajectory, tail_fraction: float = 0.1, radius: float = 0.5) -> Basin:
    """Which Duffing well the tail of the trajectory sits in, by its mean x."""
    if not 0 < tail_fraction <= 1:
        raise ValueError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    n = max(1, int(round(tail_fraction * len(traj))))
    mean_x = float(np.mean(traj.x[-n:]))
    if abs(mean_x + 1.0) <= radius:
        return Basin.LEFT
    if abs(mean_x - 1.0) <= radius:
        return Basin.RIGHT
    return Basin.UNDECIDED


def _max(a: np.ndarray | None) -> float:
    if a is None or not len(a):
        return float("nan")
    return float(np.nanmax(a))


def _last(a: np.ndarray | None) -> float:
    if a is None or not len(a):
        return float("nan")
    return float(a[-1])


@dataclass
class DiagnosticsReport:
    k_drift: np.ndarray
    decrement_dev: np.ndarray | None = None
    err_x: np.ndarray | None = None
    err_y: np.ndarray | None = None
    basin: Basin | None = None
    iteration_stats: IterationStats = field(default_factory=IterationStats)
    decrement_gaps: int = 0

    @property
    def aggregates(self) -> dict[str, float]:
        out = {}
        for key in ("k_drift", "decrement_dev", "err_x", "err_y"):
            series = getattr(self, key)
            out[f"max_{key}"] = _max(series)
            out[f"final_{key}"] = _last(series)
        return out

    def summary(self) -> str:
        agg = self.aggregates
        parts = [
            f"max_K_drift={agg['max_k_drift']:.3e}",
            f"max_R_dev={agg['max_decrement_dev']:.3e}",
            f"max_err_x={agg['max_err_x']:.3e}",
            f"max_err_y={agg['max_err_y']:.3e}",
        ]
        if self.basin is not None:
            parts.append(f"basin={self.basin.value}")
        st = self.iteration_stats
        parts.append(f"iterations(max={st.max_iterations}, mean={st.mean_iterations:.2f}, "
                     f"stalls={st.stalls})")
        return " ".join(parts)


def build_report(model: SystemModel, traj: Trajectory, reference: Trajectory | None = None,
                 mode: DecrementMode | str | None = None,
                 theory: np.ndarray | None = None) -> DiagnosticsReport:
    """Assemble every diagnostic that the available inputs allow.

    The decrement defaults to reservoir mode for en-GR and direct mode
    otherwise; its theoretical value comes from ``theory`` if given, else from
    ``reference``.
    """
    report = DiagnosticsReport(k_drift(model, traj), iteration_stats=traj.stats)
    if mode is None:
        mode = DecrementMode.RESERVOIR if traj.meta.integrator == "en-gr" else DecrementMode.DIRECT
    if reference is not None:
        report.err_x, report.err_y = global_error(traj, reference)
        if theory is None:
            theory = decrement_theory(model, traj.t, "reference", reference=reference)
    if theory is not None:
        R = energy_decrement(model, traj, mode)
        report.decrement_dev = np.abs(R - theory)
        report.decrement_gaps = int(np.count_nonzero(np.isnan(report.decrement_dev)))
    if model.kind is SystemKind.DUFFING:
        report.basin = classify_basin(traj)
    return report
