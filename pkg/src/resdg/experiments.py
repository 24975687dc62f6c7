"""Experiment runners behind the command line: single runs, side-by-side
comparisons, convergence studies and the figure datasets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import diagnostics as dg
from .integrators import (
    IncompatibleSchemeError,
    SolverConfig,
    Starred,
    Trajectory,
    VDP_STGR_MESSAGE,
    exact_trajectory,
    integrate,
)
from .model import SystemKind, SystemModel, make_system
from .storage import cached_reference, trajectory_columns

# Parameters and initial conditions of the published runs.
DEFAULT_SETUPS: dict[str, tuple[dict[str, float], tuple[float, float]]] = {
    "damped-ho": ({"b": 0.2}, (1.3, -2.2)),
    "vdp": ({"a": 1.0}, (3.42, 2.5)),
    "duffing": ({"b": 0.2}, (-6.0, 2.5)),
}


@dataclass(frozen=True)
class ReferenceSpec:
    """``none``, ``exact`` (damped oscillator only) or ``rk4`` at a fine step."""

    kind: str = "none"
    h_ref: float = 1e-6
    stride: int = 1000

    @classmethod
    def parse(cls, text: str) -> "ReferenceSpec":
        text = text.strip().lower()
        if text in ("none", "exact"):
            return cls(text)
        head, *rest = text.split(":")
        if head != "rk4":
            raise ValueError(f"reference must be none, exact or rk4:h_ref:stride, got {text!r}")
        if len(rest) != 2:
            raise ValueError(f"rk4 reference needs h_ref and stride, got {text!r}")
        h_ref, stride = float(rest[0]), int(rest[1])
        if not h_ref > 0 or stride < 1:
            raise ValueError(f"invalid rk4 reference {text!r}")
        return cls("rk4", h_ref, stride)

    def __str__(self) -> str:
        if self.kind == "rk4":
            return f"rk4:{self.h_ref!r}:{self.stride}"
        return self.kind


DEFAULT_REFERENCE = ReferenceSpec("rk4", 1e-6, 1000)


@dataclass(frozen=True)
class RunSpec:
    system: str = "damped-ho"
    params: dict = field(default_factory=dict)
    integrator: str = "en-gr"
    ic: tuple[float, float] | None = None
    cfg: SolverConfig = field(default_factory=SolverConfig)
    T: float = 100.0
    output: str | None = None
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)

    def resolved(self) -> "RunSpec":
        """Fill in the published parameters and initial condition."""
        params, ic = DEFAULT_SETUPS[SystemKind(self.system).value]
        return replace(self, params={**params, **self.params}, ic=self.ic or ic)

    def model(self) -> SystemModel:
        return make_system(self.system, self.resolved().params)

    def as_meta(self) -> dict:
        spec = self.resolved()
        return {
            "system": spec.system,
            "params": dict(spec.params),
            "integrator": spec.integrator,
            "ic": list(spec.ic),
            "cfg": spec.cfg.as_dict(),
            "T": spec.T,
            "reference": str(spec.reference),
            "convention": "reservoir obeys dz/dt = +y*D(x,y), so K = H + z is conserved",
        }


def build_reference(model: SystemModel, ic, h: float, T: float, ref: ReferenceSpec,
                    cache_dir=None) -> Trajectory | None:
    """Reference trajectory on the coarse grid of step ``h``."""
    if ref.kind == "none":
        return None
    if ref.kind == "exact":
        return exact_trajectory(model, ic, h, T)
    if abs(ref.stride * ref.h_ref - h) > 1e-12 * h:
        raise ValueError(f"reference stride {ref.stride} x h_ref {ref.h_ref} does not match h={h}")
    return cached_reference(model, ic, ref.h_ref, ref.stride, T, cache_dir)


def _theory(model, traj: Trajectory, reference: Trajectory | None, ref: ReferenceSpec, ic):
    if reference is None:
        return None
    if ref.kind == "exact":
        return dg.decrement_theory(model, traj.t, "exact", ic=ic)
    return dg.decrement_theory(model, traj.t, "reference", reference=reference)


def _check_strict(spec: RunSpec, integrator: str) -> None:
    if spec.cfg.strict and integrator == "st-gr" and SystemKind(spec.system) is SystemKind.VAN_DER_POL:
        raise IncompatibleSchemeError(VDP_STGR_MESSAGE)


@dataclass
class RunResult:
    spec: RunSpec
    model: SystemModel
    traj: Trajectory
    reference: Trajectory | None
    report: dg.DiagnosticsReport

    def columns(self) -> dict[str, np.ndarray]:
        cols = trajectory_columns(self.model, self.traj)
        if self.reference is not None:
            cols["err_x"] = self.report.err_x
            cols["err_y"] = self.report.err_y
            # R_dev of row i belongs to the step that ends at row i
            cols["R_dev"] = np.concatenate([[np.nan], self.report.decrement_dev])
            cols["K_dev"] = self.report.k_drift
        return cols


def run(spec: RunSpec, cache_dir=None, on_stall: str = "record",
        reference: Trajectory | None = None) -> RunResult:
    spec = spec.resolved()
    _check_strict(spec, spec.integrator)
    model = spec.model()
    traj = integrate(model, spec.integrator, spec.ic, spec.cfg, spec.T, on_stall=on_stall)
    if reference is None:
        reference = build_reference(model, spec.ic, spec.cfg.h, spec.T, spec.reference, cache_dir)
    theory = _theory(model, traj, reference, spec.reference, spec.ic)
    report = dg.build_report(model, traj, reference, theory=theory)
    return RunResult(spec, model, traj, reference, report)


def compare(spec: RunSpec, integrators: list[str], cache_dir=None,
            on_stall: str = "record") -> tuple[dict[str, np.ndarray], list[RunResult]]:
    """Run several integrators on one system, initial condition and grid.

    A single integrator gives exactly the :func:`run` columns; otherwise
    every column is prefixed with ``<integrator>:``.
    """
    if not integrators:
        raise ValueError("no integrators to compare")
    spec = spec.resolved()
    for name in integrators:
        _check_strict(spec, name)
    model = spec.model()
    reference = build_reference(model, spec.ic, spec.cfg.h, spec.T, spec.reference, cache_dir)
    results = [run(replace(spec, integrator=name), cache_dir, on_stall, reference)
               for name in integrators]
    if len(results) == 1:
        return results[0].columns(), results
    t = results[0].traj.t
    cols: dict[str, np.ndarray] = {"t": t}
    for res in results:
        dg._check_grid(res.traj.t, t)
        for key, series in res.columns().items():
            if key != "t":
                cols[f"{res.spec.integrator}:{key}"] = series
    return cols, results


def convergence(spec: RunSpec, hs: list[float], cache_dir=None) -> tuple[list[tuple[float, float]], float]:
    """Sup-norm global error against the exact or RK4 solution for each step size.

    The error at one step size is the largest of ``|x - x_ref|`` and
    ``|y - y_ref|`` over the whole grid.
    """
    spec = spec.resolved()
    _check_strict(spec, spec.integrator)
    model = spec.model()
    hs = sorted({float(h) for h in hs}, reverse=True)
    rows = []
    for h in hs:
        cfg = replace(spec.cfg, h=h)
        traj = integrate(model, spec.integrator, spec.ic, cfg, spec.T)
        if spec.reference.kind == "exact" or (
                spec.reference.kind == "none" and model.kind is SystemKind.DAMPED_HARMONIC):
            ref = exact_trajectory(model, spec.ic, h, spec.T)
        else:
            h_ref = spec.reference.h_ref if spec.reference.kind == "rk4" else 1e-6
            stride = round(h / h_ref)
            ref = cached_reference(model, spec.ic, h_ref, stride, spec.T, cache_dir)
        ex, ey = dg.global_error(traj, ref)
        rows.append((h, float(max(ex.max(), ey.max()))))
    return rows, dg.convergence_order(rows)


# --- figure datasets ----------------------------------------------------------

@dataclass
class FigureData:
    columns: dict[str, np.ndarray]
    meta: dict
    trailer: list[str] = field(default_factory=list)


def _standard_run(system: str, integrator: str, ref: ReferenceSpec, cache_dir, reference=None,
               **cfg_changes) -> RunResult:
    cfg = replace(SolverConfig(), **cfg_changes)
    return run(RunSpec(system, integrator=integrator, cfg=cfg, reference=ref), cache_dir,
               reference=reference)


def _meta(fig: str, system: str, ref: ReferenceSpec, series: dict[str, str]) -> dict:
    params, ic = DEFAULT_SETUPS[system]
    return {"figure": fig, "system": system, "params": params, "ic": list(ic),
            "cfg": SolverConfig().as_dict(), "T": 100.0, "reference": str(ref), "series": series}


def _fig_3_1(ref: ReferenceSpec, cache_dir) -> FigureData:
    en = _standard_run("damped-ho", "en-gr", ReferenceSpec(), cache_dir)
    sv = _standard_run("damped-ho", "sv", ReferenceSpec(), cache_dir)
    cols = {"t": en.traj.t, "K_dev_en-gr": en.report.k_drift, "K_dev_sv": sv.report.k_drift}
    meta = _meta("3.1", "damped-ho", ReferenceSpec(),
                 {"K_dev_en-gr": "|K_i - K_0| for en-GR",
                  "K_dev_sv": "|K_i - K_0| for Stormer-Verlet with the reservoir attached"})
    return FigureData(cols, meta)


def _fig_3_2(ref: ReferenceSpec, cache_dir) -> FigureData:
    exact = ReferenceSpec("exact")
    en = _standard_run("damped-ho", "en-gr", exact, cache_dir)
    imr = _standard_run("damped-ho", "imr", exact, cache_dir, reference=en.reference)
    cols = {"t": en.traj.t[1:], "R_dev_en-gr": en.report.decrement_dev,
            "R_dev_imr": imr.report.decrement_dev}
    meta = _meta("3.2", "damped-ho", exact,
                 {"R_dev_en-gr": "|R - R_exact|, R from the reservoir",
                  "R_dev_imr": "|R - R_exact|, R = H_{i+1}/H_i"})
    return FigureData(cols, meta)


def _fig_4_1(ref: ReferenceSpec, cache_dir) -> FigureData:
    en = _standard_run("vdp", "en-gr", ref, cache_dir)
    imr = _standard_run("vdp", "imr", ref, cache_dir, reference=en.reference)
    cols = {"t": en.traj.t, "err_y_en-gr": en.report.err_y, "err_y_imr": imr.report.err_y}
    meta = _meta("4.1", "vdp", ref, {"err_y_en-gr": "|y - y_ref| for en-GR",
                                     "err_y_imr": "|y - y_ref| for IMR"})
    return FigureData(cols, meta)


def _fig_4_2(ref: ReferenceSpec, cache_dir) -> FigureData:
    en = _standard_run("vdp", "en-gr", ReferenceSpec(), cache_dir)
    meta = _meta("4.2", "vdp", ReferenceSpec(), {"K_dev_en-gr": "|K_i - K_0| for en-GR"})
    return FigureData({"t": en.traj.t, "K_dev_en-gr": en.report.k_drift}, meta)


def _fig_4_3(ref: ReferenceSpec, cache_dir) -> FigureData:
    en = _standard_run("duffing", "en-gr", ref, cache_dir)
    st = _standard_run("duffing", "st-gr", ref, cache_dir, reference=en.reference)
    imr = _standard_run("duffing", "imr", ref, cache_dir, reference=en.reference)
    cols = {"t": en.traj.t[1:], "R_dev_en-gr": en.report.decrement_dev,
            "R_dev_st-gr": st.report.decrement_dev, "R_dev_imr": imr.report.decrement_dev}
    meta = _meta("4.3", "duffing", ref,
                 {"R_dev_en-gr": "|R - R_ref|, R from the reservoir",
                  "R_dev_st-gr": "|R - R_ref|, R = H_{i+1}/H_i",
                  "R_dev_imr": "|R - R_ref|, R = H_{i+1}/H_i"})
    return FigureData(cols, meta)


def _fig_4_4(ref: ReferenceSpec, cache_dir) -> FigureData:
    en = _standard_run("duffing", "en-gr", ref, cache_dir)
    st_mid = _standard_run("duffing", "st-gr", ref, cache_dir, reference=en.reference,
                        starred=Starred.MIDPOINT)
    st_left = _standard_run("duffing", "st-gr", ref, cache_dir, reference=en.reference,
                         starred=Starred.LEFT)
    cols = {"t": en.traj.t, "err_x_en-gr": en.report.err_x,
            "err_x_st-gr-midpoint": st_mid.report.err_x, "err_x_st-gr-left": st_left.report.err_x}
    meta = _meta("4.4", "duffing", ref,
                 {"err_x_en-gr": "|x - x_ref| for en-GR",
                  "err_x_st-gr-midpoint": "|x - x_ref| for st-GR, damping at the step midpoint",
                  "err_x_st-gr-left": "|x - x_ref| for st-GR, damping at the step start"})
    trailer = [
        f"basin en-gr={en.report.basin.value}",
        f"basin st-gr-midpoint={st_mid.report.basin.value}",
        f"basin st-gr-left={st_left.report.basin.value}",
        f"basin reference={dg.classify_basin(en.reference).value}",
    ]
    return FigureData(cols, meta, trailer)


FIGURES: dict[str, Callable[[ReferenceSpec, object], FigureData]] = {
    "3.1": _fig_3_1,
    "3.2": _fig_3_2,
    "4.1": _fig_4_1,
    "4.2": _fig_4_2,
    "4.3": _fig_4_3,
    "4.4": _fig_4_4,
}


def figure(fig_id: str, reference: ReferenceSpec = DEFAULT_REFERENCE, cache_dir=None) -> FigureData:
    try:
        build = FIGURES[fig_id]
    except KeyError:
        raise ValueError(f"unknown figure {fig_id!r}; choose from {sorted(FIGURES)}") from None
    return build(reference, cache_dir)
