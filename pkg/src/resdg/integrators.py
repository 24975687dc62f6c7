"""One-step maps, the fixed-point solver behind the implicit ones, and
trajectory generation.

Every stepper has the signature ``step(model, state, cfg) -> StepResult``.
Implicit steppers are seeded with an explicit Euler predictor and iterated
(Gauss-Seidel ordering) until the relative sup-norm update drops below
``cfg.tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, NamedTuple

import numpy as np

from . import _kernels
from .model import PhaseState, SystemKind, SystemModel, exact_damped_harmonic

__all__ = [
    "Starred",
    "SolverConfig",
    "StepResult",
    "IterationStats",
    "RunMeta",
    "Trajectory",
    "IntegrationError",
    "DivergenceError",
    "StallError",
    "IncompatibleSchemeError",
    "step_en_gr",
    "step_st_gr",
    "step_imr",
    "step_sv",
    "step_rk4_38",
    "step_euler",
    "attach_reservoir",
    "resolve_stepper",
    "integrate",
    "generate_reference",
    "exact_trajectory",
    "STEPPERS",
]


class Starred(str, Enum):
    """Where the damping force is sampled inside a step."""

    MIDPOINT = "midpoint"
    LEFT = "left"


@dataclass(frozen=True)
class SolverConfig:
    h: float = 1e-3
    tol: float = 1e-15
    max_iter: int = 50
    starred: Starred = Starred.MIDPOINT
    reservoir: bool = True
    predictor: str = "explicit-euler"
    # Reject st-GR on Van der Pol, where no energy-like function exists.
    strict: bool = False

    def __post_init__(self):
        object.__setattr__(self, "starred", Starred(self.starred))
        if not self.h >= 0 or not math.isfinite(self.h):
            raise ValueError(f"step size must be finite and non-negative, got {self.h}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.predictor != "explicit-euler":
            raise ValueError(f"unknown predictor {self.predictor!r}")

    def as_dict(self) -> dict:
        return {
            "h": self.h,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "starred": self.starred.value,
            "reservoir": self.reservoir,
            "predictor": self.predictor,
            "strict": self.strict,
        }


class StepResult(NamedTuple):
    next: PhaseState
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True


class IntegrationError(RuntimeError):
    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index

    def at_step(self, index: int) -> "IntegrationError":
        err = type(self)(f"step {index}: {self.args[0]}", index)
        err.__cause__ = self
        return err


class DivergenceError(IntegrationError):
    """A non-finite value appeared inside a step."""


class StallError(IntegrationError):
    """The fixed-point iteration stopped before reaching the tolerance."""


class IncompatibleSchemeError(ValueError):
    pass


VDP_STGR_MESSAGE = (
    "st-GR is not applicable to the Van der Pol oscillator: it has neither a "
    "conserved energy nor a Lyapunov function to take the discrete gradient of "
    "(run without strict mode to integrate it anyway)"
)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


def _fixed_point(update, x0: float, y0: float, cfg: SolverConfig):
    """Iterate ``(x, y) <- update(x, y)``.

    Stops when the sup-norm update relative to ``max(1, |x|, |y|)`` is within
    ``cfg.tol``, when the update no longer shrinks (rounding floor or a
    non-contracting map), or at ``cfg.max_iter``.
    """
    xn, yn = x0, y0
    previous = math.inf
    residual = math.inf
    for it in range(1, cfg.max_iter + 1):
        xk, yk = update(xn, yn)
        if not _finite(xk, yk):
            raise DivergenceError(f"non-finite fixed-point iterate after {it} iterations")
        residual = max(abs(xk - xn), abs(yk - yn)) / max(1.0, abs(xk), abs(yk))
        xn, yn = xk, yk
        if residual <= cfg.tol:
            return xn, yn, it, residual, True
        if residual >= previous:
            return xn, yn, it, residual, False
        previous = residual
    return xn, yn, cfg.max_iter, residual, False


def _euler_predictor(model: SystemModel, s: PhaseState, h: float) -> tuple[float, float]:
    return s.x + h * s.y, s.y + h * model.force(s.x, s.y)


def _discrete_gradient_solve(model: SystemModel, s: PhaseState, cfg: SolverConfig):
    """Shared (x, y) solve of the en-GR and st-GR schemes.

    Returns ``(x', y', d, iterations, residual, converged)`` where ``d`` is the
    damping force at the starred point of the converged step.
    """
    x, y, h = s.x, s.y, cfg.h
    D, dgx, dgy = model.D, model.dgradH_x, model.dgradH_y
    midpoint = cfg.starred is Starred.MIDPOINT

    def update(xn, yn):
        x_new = x + h * dgy(xn, y, yn)
        if midpoint:
            d = D(0.5 * (x + x_new), 0.5 * (y + yn))
        else:
            d = D(x, y)
        return x_new, y - h * (dgx(x, x_new, y) + d)

    xp, yp = _euler_predictor(model, s, h)
    xn, yn, it, res, ok = _fixed_point(update, xp, yp, cfg)
    d = D(0.5 * (x + xn), 0.5 * (y + yn)) if midpoint else D(x, y)
    return xn, yn, d, it, res, ok


def step_en_gr(model: SystemModel, s: PhaseState, cfg: SolverConfig) -> StepResult:
    """Reservoir-enhanced discrete gradient step.

    The (x, y) update is the coordinate-increment discrete gradient of H with
    the damping force added at the starred point; the reservoir absorbs
    exactly the work done by that force, ``z' = z + D(x*, y*) (x' - x)``, so
    ``H + z`` is preserved up to solver residual and rounding. ``z`` does not
    feed back into (x, y), so the joint solve reduces to the (x, y) iteration
    followed by the reservoir update.
    """
    if not cfg.reservoir:
        raise ValueError("en-GR carries the reservoir by construction; cfg.reservoir must be on")
    xn, yn, d, it, res, ok = _discrete_gradient_solve(model, s, cfg)
    zn = s.z + d * (xn - s.x)
    if not math.isfinite(zn):
        raise DivergenceError("non-finite reservoir update")
    return StepResult(PhaseState(s.t + cfg.h, xn, yn, zn), it, res, ok)


step_en_gr.carries_reservoir = True


def step_st_gr(model: SystemModel, s: PhaseState, cfg: SolverConfig) -> StepResult:
    """Standard discrete gradient step with the damping force added.

    Same (x, y) equations as :func:`step_en_gr`; the reservoir is not updated.
    """
    if cfg.strict and model.kind is SystemKind.VAN_DER_POL:
        raise IncompatibleSchemeError(VDP_STGR_MESSAGE)
    xn, yn, _, it, res, ok = _discrete_gradient_solve(model, s, cfg)
    return StepResult(PhaseState(s.t + cfg.h, xn, yn, s.z), it, res, ok)


step_st_gr.carries_reservoir = True


def step_imr(model: SystemModel, s: PhaseState, cfg: SolverConfig) -> StepResult:
    """Implicit midpoint rule on the full right-hand side."""
    x, y, h = s.x, s.y, cfg.h
    force = model.force

    def update(xn, yn):
        x_new = x + h * (0.5 * (y + yn))
        return x_new, y + h * force(0.5 * (x + x_new), 0.5 * (y + yn))

    xp, yp = _euler_predictor(model, s, h)
    xn, yn, it, res, ok = _fixed_point(update, xp, yp, cfg)
    return StepResult(PhaseState(s.t + h, xn, yn, s.z), it, res, ok)


def step_sv(model: SystemModel, s: PhaseState, cfg: SolverConfig) -> StepResult:
    """Velocity-Verlet kick-drift-kick.

    Both half kicks use the damping force at the half-step velocity; in the
    first kick that velocity is implicit and solved by scalar fixed-point
    iteration, which keeps the scheme symmetric.
    """
    x, y, h = s.x, s.y, cfg.h
    half = 0.5 * h
    D = model.D
    grad_x = model.dH(x, y)[0]

    v = y + half * (-grad_x - D(x, y))
    previous = math.inf
    residual = 0.0
    ok = True
    it = 0
    if h:
        ok = False
        for it in range(1, cfg.max_iter + 1):
            v_new = y + half * (-grad_x - D(x, v))
            if not math.isfinite(v_new):
                raise DivergenceError(f"non-finite half-step velocity after {it} iterations")
            residual = abs(v_new - v) / max(1.0, abs(v_new))
            v = v_new
            if residual <= cfg.tol:
                ok = True
                break
            if residual >= previous:
                break
            previous = residual

    xn = x + h * v
    yn = v + half * (-model.dH(xn, v)[0] - D(xn, v))
    if not _finite(xn, yn):
        raise DivergenceError("non-finite Verlet update")
    return StepResult(PhaseState(s.t + h, xn, yn, s.z), it, residual, ok)


def step_rk4_38(model: SystemModel, s: PhaseState, cfg: SolverConfig) -> StepResult:
    """Four-stage Runge-Kutta 3/8 rule."""
    x, y, h = s.x, s.y, cfg.h
    f = model.force
    k1x, k1y = y, f(x, y)
    x2, y2 = x + h * k1x / 3.0, y + h * k1y / 3.0
    k2x, k2y = y2, f(x2, y2)
    x3, y3 = x + h * (k2x - k1x / 3.0), y + h * (k2y - k1y / 3.0)
    k3x, k3y = y3, f(x3, y3)
    x4, y4 = x + h * (k1x - k2x + k3x), y + h * (k1y - k2y + k3y)
    k4x, k4y = y4, f(x4, y4)
    xn = x + h * (k1x + 3.0 * k2x + 3.0 * k3x + k4x) / 8.0
    yn = y + h * (k1y + 3.0 * k2y + 3.0 * k3y + k4y) / 8.0
    if not _finite(xn, yn):
        raise DivergenceError("non-finite Runge-Kutta stage")
    return StepResult(PhaseState(s.t + h, xn, yn, s.z))


def step_euler(model: SystemModel, s: PhaseState, cfg: SolverConfig) -> StepResult:
    x, y, h = s.x, s.y, cfg.h
    xn = x + h * y
    yn = y + h * model.force(x, y)
    zn = s.z + model.D(x, y) * (xn - x) if cfg.reservoir else s.z
    if not _finite(xn, yn, zn):
        raise DivergenceError("non-finite Euler update")
    return StepResult(PhaseState(s.t + h, xn, yn, zn))


step_euler.carries_reservoir = True

Stepper = Callable[[SystemModel, PhaseState, SolverConfig], StepResult]


def attach_reservoir(step: Stepper, starred: Starred | str = Starred.MIDPOINT) -> Stepper:
    """Wrap ``step`` so it also accumulates ``z' = z + D(x*, y*) (x' - x)``.

    The starred point is built from the step's start and its final
    (converged) end point. Steppers that already carry the reservoir are
    returned unchanged.
    """
    if getattr(step, "carries_reservoir", False):
        return step
    midpoint = Starred(starred) is Starred.MIDPOINT

    def with_reservoir(model: SystemModel, s: PhaseState, cfg: SolverConfig) -> StepResult:
        result = step(model, s, cfg)
        n = result.next
        if midpoint:
            d = model.D(0.5 * (s.x + n.x), 0.5 * (s.y + n.y))
        else:
            d = model.D(s.x, s.y)
        z = s.z + d * (n.x - s.x)
        if not math.isfinite(z):
            raise DivergenceError("non-finite reservoir update")
        return result._replace(next=n._replace(z=z))

    with_reservoir.carries_reservoir = True
    with_reservoir.__name__ = f"{getattr(step, '__name__', 'step')}_with_reservoir"
    with_reservoir.__wrapped__ = step
    return with_reservoir


STEPPERS: dict[str, Stepper] = {
    "en-gr": step_en_gr,
    "st-gr": step_st_gr,
    "imr": step_imr,
    "sv": step_sv,
    "euler": step_euler,
    "rk4-38": step_rk4_38,
}

_EXPLICIT = {"euler", "rk4-38"}


def resolve_stepper(name: str, cfg: SolverConfig) -> Stepper:
    """Look up a stepper by name and attach the reservoir per ``cfg``.

    Explicit schemes sample the damping at the step's initial point; implicit
    ones use ``cfg.starred``.
    """
    try:
        step = STEPPERS[name]
    except KeyError:
        raise ValueError(f"unknown integrator {name!r}; choose from {sorted(STEPPERS)}") from None
    if name == "en-gr" and not cfg.reservoir:
        raise ValueError("en-GR cannot run with the reservoir switched off")
    if cfg.reservoir:
        step = attach_reservoir(step, Starred.LEFT if name in _EXPLICIT else cfg.starred)
    return step


@dataclass(frozen=True)
class RunMeta:
    system: str
    params: dict
    integrator: str
    cfg: SolverConfig | None
    step: float
    stride: int = 1
    ic: tuple[float, float] = (0.0, 0.0)

    def as_dict(self) -> dict:
        return {
            "system": self.system,
            "params": dict(self.params),
            "integrator": self.integrator,
            "cfg": self.cfg.as_dict() if self.cfg else None,
            "step": self.step,
            "stride": self.stride,
            "ic": list(self.ic),
        }


@dataclass(frozen=True)
class IterationStats:
    max_iterations: int = 0
    mean_iterations: float = 0.0
    stalls: int = 0
    max_residual: float = 0.0


@dataclass
class Trajectory:
    """Uniformly sampled augmented trajectory, stored column-wise."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    h: float
    meta: RunMeta
    t0: float = 0.0
    stats: IterationStats = field(default_factory=IterationStats)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> PhaseState:
        return PhaseState(float(self.t[i]), float(self.x[i]), float(self.y[i]), float(self.z[i]))

    def __iter__(self) -> Iterator[PhaseState]:
        for i in range(len(self)):
            yield self[i]

    @property
    def samples(self) -> list[PhaseState]:
        return list(self)

    @property
    def n_steps(self) -> int:
        return len(self) - 1

    def H(self, model: SystemModel) -> np.ndarray:
        return np.array([model.H(x, y) for x, y in zip(self.x.tolist(), self.y.tolist())])

    def K(self, model: SystemModel) -> np.ndarray:
        return self.H(model) + self.z


def _grid(t0: float, h: float, n: int) -> np.ndarray:
    # i*h rather than accumulated sums keeps t_i exact to rounding
    return t0 + np.arange(n, dtype=float) * h


def _step_count(T: float, h: float, stride: int) -> int:
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    if stride < 1:
        raise ValueError(f"stride must be at least 1, got {stride}")
    n = round(T / h)
    if n < 1 or abs(n * h - T) > 1e-9 * T:
        raise ValueError(f"T={T} is not an integer multiple of h={h}")
    if n % stride:
        raise ValueError(f"{n} steps are not divisible by stride {stride}")
    return n


def integrate(
    model: SystemModel,
    stepper: str | Stepper,
    ic: tuple[float, float],
    cfg: SolverConfig | None = None,
    T: float = 100.0,
    *,
    t0: float = 0.0,
    stride: int = 1,
    sink: Callable[[PhaseState], None] | None = None,
    on_stall: str = "record",
) -> Trajectory:
    """Run ``round(T/h)`` steps from ``(t0, x0, y0, z=0)``.

    Every ``stride``-th state is retained. With a ``sink`` the retained states
    are streamed to it instead of being stored, and the returned trajectory
    holds only the final state. ``on_stall`` is ``"record"`` (count stalled
    steps in ``stats``) or ``"raise"`` (:class:`StallError`).
    """
    cfg = cfg or SolverConfig()
    if on_stall not in ("record", "raise"):
        raise ValueError(f"on_stall must be 'record' or 'raise', got {on_stall!r}")
    if isinstance(stepper, str):
        name = stepper
        step = resolve_stepper(stepper, cfg)
    else:
        name = getattr(stepper, "__name__", "custom")
        step = stepper
    if name == "st-gr" and cfg.strict and model.kind is SystemKind.VAN_DER_POL:
        raise IncompatibleSchemeError(VDP_STGR_MESSAGE)
    h = cfg.h
    n = _step_count(T, h, stride)

    x0, y0 = float(ic[0]), float(ic[1])
    if not _finite(x0, y0):
        raise ValueError("initial condition must be finite")
    s = PhaseState(t0, x0, y0, 0.0)
    xs, ys, zs = [x0], [y0], [0.0]
    if sink is not None:
        sink(s)

    it_max = 0
    it_sum = 0
    stalls = 0
    worst = 0.0
    for i in range(1, n + 1):
        try:
            result = step(model, s, cfg)
        except IntegrationError as err:
            raise err.at_step(i) from err
        if not result.converged:
            if on_stall == "raise":
                raise StallError(
                    f"fixed-point iteration stalled at residual {result.residual:.3e} "
                    f"after {result.iterations} iterations", i)
            stalls += 1
        it_max = max(it_max, result.iterations)
        it_sum += result.iterations
        worst = max(worst, result.residual)
        nxt = result.next
        s = PhaseState(t0 + i * h, nxt.x, nxt.y, nxt.z)
        if i % stride == 0:
            if sink is not None:
                sink(s)
            else:
                xs.append(s.x)
                ys.append(s.y)
                zs.append(s.z)

    stats = IterationStats(it_max, it_sum / n, stalls, worst)
    meta = RunMeta(model.name, dict(model.params), name, cfg, h, stride, (x0, y0))
    if sink is not None:
        return Trajectory(np.array([s.t]), np.array([s.x]), np.array([s.y]), np.array([s.z]),
                          h * stride, meta, s.t, stats)
    return Trajectory(_grid(t0, h * stride, len(xs)), np.array(xs), np.array(ys), np.array(zs),
                      h * stride, meta, t0, stats)


def generate_reference(
    model: SystemModel,
    ic: tuple[float, float],
    h_ref: float = 1e-6,
    stride: int = 1000,
    T: float = 100.0,
    *,
    h_coarse: float | None = None,
    t0: float = 0.0,
    sink: Callable[[PhaseState], None] | None = None,
) -> Trajectory:
    """RK4 (3/8 rule) reference at a fine step, keeping every ``stride``-th
    state so the output lands on the coarse grid.

    Builtin systems run in a compiled kernel that only holds the retained
    samples; other models fall back to :func:`integrate`. The reservoir is
    accumulated with the damping sampled at each step's initial point.
    """
    if h_coarse is not None and abs(stride * h_ref - h_coarse) > 1e-12 * h_coarse:
        raise ValueError(f"stride*h_ref = {stride * h_ref} does not match coarse step {h_coarse}")
    cfg = SolverConfig(h=h_ref)
    n = _step_count(T, h_ref, stride)
    code = _kernels.KIND_CODES.get(model.kind)
    if code is None:
        return integrate(model, "rk4-38", ic, cfg, T, t0=t0, stride=stride, sink=sink)

    param = next(iter(model.params.values()))
    xs, ys, zs = _kernels.rk4_38_run(code, float(param), float(ic[0]), float(ic[1]), h_ref, n, stride)
    if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
        bad = int(np.argmin(np.isfinite(xs) & np.isfinite(ys)))
        raise DivergenceError("non-finite reference state", bad * stride)
    meta = RunMeta(model.name, dict(model.params), "rk4-38", cfg, h_ref, stride,
                   (float(ic[0]), float(ic[1])))
    traj = Trajectory(_grid(t0, h_ref * stride, len(xs)), xs, ys, zs, h_ref * stride, meta, t0)
    if sink is not None:
        for state in traj:
            sink(state)
    return traj


def exact_trajectory(model: SystemModel, ic: tuple[float, float], h: float, T: float,
                     t0: float = 0.0) -> Trajectory:
    """Closed-form damped-oscillator solution sampled on the grid.

    The reservoir is filled with the energy lost so far, ``z = H0 - H(t)``.
    """
    if model.kind is not SystemKind.DAMPED_HARMONIC:
        raise ValueError("an exact solution is only available for the damped oscillator")
    b = model.params["b"]
    n = _step_count(T, h, 1)
    t = _grid(t0, h, n + 1)
    x0, y0 = float(ic[0]), float(ic[1])
    pts = [exact_damped_harmonic(b, x0, y0, ti - t0) for ti in t.tolist()]
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    z = model.H(x0, y0) - 0.5 * (xs * xs + ys * ys)
    meta = RunMeta(model.name, dict(model.params), "exact", None, h, 1, (x0, y0))
    return Trajectory(t, xs, ys, z, h, meta, t0)
