"""Fine-tuning of the free protocol parameters so both arms close the loop.

The unknowns are solved in protocol order:

* T1 = pi / w1, half an oscillation so the arm ends at rest;
* T3 = 2 T*, so stage 3 returns the arm to |X2| with reversed velocity;
* eta_n of stage 4, so the arm comes to rest (at T4, or at a target separation);
* eta_l and T5 of stage 5, half an oscillation about X4 / 2 back to the origin.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import bisect, brentq

from .model import ExperimentConfig, PotentialKind
from .trajectory import (
    CLOSURE_POSITION_TOL,
    CLOSURE_VELOCITY_TOL,
    ClassicalState,
    NoStallError,
    arm_trajectory,
    stage3_phase,
    stall_point,
)

STALL_RESIDUAL_TOL = 1e-12
MONOTONICITY_SAMPLES = 64


class ClosureError(RuntimeError):
    """A sub-solver failed; ``stage`` names where."""

    def __init__(self, stage: int, message: str):
        self.stage = stage
        super().__init__(f"stage {stage}: {message}")


class BracketError(ClosureError):
    def __init__(self, stage, lo, hi, f_lo, f_hi):
        self.residuals = (f_lo, f_hi)
        super().__init__(stage, f"no sign change on [{lo:.6g}, {hi:.6g}]; "
                                f"residuals {f_lo:.3e}, {f_hi:.3e}")


class DegenerateClosure(ClosureError):
    """X4 = 0: the arm already sits at the origin, no recombination stage needed."""


class StallDurationWarning(UserWarning):
    pass


def solve_T1(cfg: ExperimentConfig) -> float:
    return math.pi / cfg.stage(1).frequency(cfg.constants)


def _state_before(cfg: ExperimentConfig, index: int, arm: int = 1, dynamics: str = "analytic",
                  settings=None) -> ClassicalState:
    """Arm state at the start of stage ``index``, running all earlier stages."""
    head = replace(cfg, stages=tuple(s for s in cfg.stages if s.index < index))
    if dynamics == "exact":
        from .integrator import integrate_arm

        traces = integrate_arm(head, arm, settings)
        if not traces:
            return ClassicalState(cfg.particle.x0, cfg.particle.p0 / cfg.particle.mass, 0.0)
        return traces[-1].final
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sols = arm_trajectory(head, arm)
    if not sols:
        return ClassicalState(cfg.particle.x0, cfg.particle.p0 / cfg.particle.mass, 0.0)
    return sols[-1].end_state


def solve_T3(cfg: ExperimentConfig, time_resolution: Optional[float] = None) -> float:
    """T3 = 2 (pi/2 - phi) / w3 from the stage-2 end state.

    ``time_resolution`` truncates the result to a timing grid (the reference
    table lists 2T* truncated to 10 us).
    """
    s2 = _state_before(cfg, 3)
    w3 = cfg.stage(3).frequency(cfg.constants)
    _, phi = stage3_phase(s2.x, s2.v, w3)
    T3 = max(0.0, 2 * (math.pi / 2 - phi) / w3)
    if time_resolution:
        T3 = math.floor(T3 / time_resolution + 1e-9) * time_resolution
    return T3


def _stage4_velocity(cfg, incoming, eta, T4, dynamics, settings):
    stage = cfg.stage(4).with_(eta_nonlinear=eta, duration=T4)
    if dynamics == "exact":
        from .integrator import integrate_stage

        return integrate_stage(cfg, stage, incoming, settings).final.v
    w = stage.frequency(cfg.constants)
    return incoming.x * w * math.sinh(w * T4) + incoming.v * math.cosh(w * T4)


def _check_monotone(f, lo, hi) -> bool:
    xs = np.linspace(lo, hi, MONOTONICITY_SAMPLES)
    ys = np.array([f(x) for x in xs])
    d = np.diff(ys)
    return bool(np.all(d >= 0) or np.all(d <= 0))


def _root(f, lo, hi, stage, xtol):
    f_lo, f_hi = f(lo), f(hi)
    if not (np.isfinite(f_lo) and np.isfinite(f_hi)) or f_lo * f_hi > 0:
        raise BracketError(stage, lo, hi, f_lo, f_hi)
    if _check_monotone(f, lo, hi):
        return brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return bisect(f, lo, hi, xtol=xtol, maxiter=2000)


@dataclass
class Stage4Solution:
    eta_nonlinear: float
    duration: float
    X4: float
    stall_time: float
    residual: float


def solve_stage4_eta(cfg: ExperimentConfig, stall_separation_target: Optional[float] = None,
                     T4: Optional[float] = None, mode: str = "time", dynamics: str = "analytic",
                     bracket: Optional[tuple] = None, settings=None) -> Stage4Solution:
    """Tune the stage-4 nonlinear gradient so the arm comes to rest.

    ``mode="time"`` puts the stall exactly at T4; ``mode="separation"`` puts it
    where the arm separation equals ``stall_separation_target`` and returns the
    stall time as the stage duration (with a warning if it exceeds T4).
    """
    s4 = cfg.stage(4)
    T4 = s4.duration if T4 is None else T4
    incoming = _state_before(cfg, 4, 1, dynamics, settings)
    ref = cfg.stage(2).eta_nonlinear
    lo, hi = bracket or (0.5 * ref, 1.5 * ref)
    c = cfg.constants
    if dynamics == "exact" and mode == "time" and bracket is None:
        # far from the root the quartic term turns the inverted potential into a
        # double well and v(T4) stops being monotone; seed from the quadratic model
        seed = solve_stage4_eta(cfg, None, T4, "time", "analytic").eta_nonlinear
        lo, hi = seed * (1 - 1e-3), seed * (1 + 1e-3)

    if mode == "time":
        if T4 is None or T4 <= 0:
            raise ClosureError(4, "time mode needs T4 > 0")
        scale = abs(incoming.v) or 1.0

        def resid(eta):
            return _stage4_velocity(cfg, incoming, eta, T4, dynamics, settings) / scale

        eta = _root(resid, lo, hi, 4, xtol=1e-300)
        stage = s4.with_(eta_nonlinear=eta, duration=T4)
        w = stage.frequency(c)
        if dynamics == "exact":
            from .integrator import integrate_stage

            end = integrate_stage(cfg, stage, incoming, settings).final
            X4, v = end.x, end.v
        else:
            X4 = incoming.x * math.cosh(w * T4) + incoming.v / w * math.sinh(w * T4)
            v = _stage4_velocity(cfg, incoming, eta, T4, "analytic", settings)
        return Stage4Solution(eta, T4, X4, T4, abs(v))

    if mode != "separation":
        raise ValueError(f"unknown mode {mode!r}")
    if stall_separation_target is None or stall_separation_target <= 0:
        raise ClosureError(4, "separation mode needs a positive target")
    if dynamics != "analytic":
        raise ClosureError(4, "separation mode uses the closed-form stall point")
    half = stall_separation_target / 2
    if incoming.v == 0 or half >= abs(incoming.x):
        raise ClosureError(4, f"target {stall_separation_target:.3e} m needs the arm to stop at or "
                              f"beyond |2 X3| = {2 * abs(incoming.x):.3e} m; a stall requires motion "
                              f"towards the centre")

    def resid(eta):
        w = s4.with_(eta_nonlinear=eta).frequency(c)
        try:
            _, X4 = stall_point(incoming.x, incoming.v, w)
        except NoStallError:
            return -half
        return abs(X4) - half

    eta = _root(resid, lo, hi, 4, xtol=1e-300)
    w = s4.with_(eta_nonlinear=eta).frequency(c)
    t4, X4 = stall_point(incoming.x, incoming.v, w)
    if abs(2 * abs(X4) - stall_separation_target) > STALL_RESIDUAL_TOL:
        raise ClosureError(4, f"stall separation residual {2 * abs(X4) - stall_separation_target:.3e} m")
    if T4 is not None and t4 > T4:
        warnings.warn(f"stall reached at {t4:.6g} s, after the scheduled T4 = {T4:.6g} s",
                      StallDurationWarning, stacklevel=2)
    return Stage4Solution(eta, t4, X4, t4, abs(2 * abs(X4) - stall_separation_target))


def solve_stage5(cfg: ExperimentConfig, X4: float, arm: int = 1):
    """(eta_l, T5) for half an oscillation about X4/2: eta = 2 hbar gamma mu0 / (-chi m |X4|)."""
    c = cfg.constants
    s5 = cfg.stage(5)
    if X4 == 0:
        raise DegenerateClosure(5, "X4 = 0, the arm is already at the origin")
    spin = s5.arm_spin(arm)
    if spin == 0:
        raise ClosureError(5, "recombination stage needs a spin-dependent force")
    if math.copysign(1, X4) != -spin:
        raise ClosureError(5, f"arm with spin {spin:+d} stalls at X4 = {X4:.3e} m; the spin force "
                              f"points away from the origin")
    eta = 2 * c.hbar * c.gamma_e * c.mu0 / (-c.chi_rho * cfg.particle.mass * abs(X4))
    w = c.harmonic_coefficient * eta
    return eta, math.pi / w


@dataclass
class ClosureProblem:
    fixed: ExperimentConfig
    unknowns: Optional[set] = None
    targets: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=lambda: {
        "final_x": CLOSURE_POSITION_TOL, "final_v": CLOSURE_VELOCITY_TOL,
        "stall_separation": STALL_RESIDUAL_TOL})
    T3_resolution: Optional[float] = None
    stage4_mode: str = "time"
    dynamics: str = "analytic"
    settings: object = None

    UNKNOWN_TARGETS = {
        "T1": "stage1_rest",
        "T3": "symmetric_return",
        "eta_n4": "stall",
        "eta_l5": "final_x",
        "T5": "final_v",
    }

    def resolved_unknowns(self) -> set:
        if self.unknowns is not None:
            return set(self.unknowns)
        cfg = self.fixed
        out = set()
        getters = {
            "T1": lambda: cfg.stage(1).duration,
            "T3": lambda: cfg.stage(3).duration,
            "eta_n4": lambda: cfg.stage(4).eta_nonlinear,
            "eta_l5": lambda: cfg.stage(5).eta_linear,
            "T5": lambda: cfg.stage(5).duration,
        }
        for name, get in getters.items():
            try:
                if get() is None:
                    out.add(name)
            except KeyError:
                pass
        return out

    def validate(self):
        unknowns = self.resolved_unknowns()
        bad = unknowns - set(self.UNKNOWN_TARGETS)
        if bad:
            raise ValueError(f"unsupported unknowns {sorted(bad)}")
        targets = {self.UNKNOWN_TARGETS[u] for u in unknowns}
        if ("eta_l5" in unknowns) != ("T5" in unknowns):
            raise ValueError("eta_l5 and T5 are solved together (targets final_x and final_v)")
        if len(targets) != len(unknowns):
            raise ValueError("number of unknowns must match number of targets")
        return unknowns


@dataclass
class ResidualReport:
    final_x: tuple
    final_v: tuple
    stall_separation: float
    stall_target: Optional[float]
    solved: dict
    tolerances: dict
    notes: list = field(default_factory=list)

    @property
    def closed(self) -> bool:
        return (max(abs(x) for x in self.final_x) < self.tolerances["final_x"]
                and max(abs(v) for v in self.final_v) < self.tolerances["final_v"])

    @property
    def stall_residual(self) -> float:
        if self.stall_target is None:
            return 0.0
        return abs(self.stall_separation - self.stall_target)


def closure_residuals(cfg: ExperimentConfig, dynamics: str = "analytic", settings=None):
    """Final (x, v) of both arms."""
    if dynamics == "exact":
        from .integrator import integrate_arm

        ends = [integrate_arm(cfg, arm, settings)[-1].final for arm in (1, -1)]
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ends = [arm_trajectory(cfg, arm)[-1].end_state for arm in (1, -1)]
    return tuple(e.x for e in ends), tuple(e.v for e in ends)


def solve_full_closure(problem: ClosureProblem):
    """Solve the missing parameters in protocol order; returns (config, ResidualReport)."""
    unknowns = problem.validate()
    cfg = problem.fixed
    solved = {}
    notes = []
    dyn, settings = problem.dynamics, problem.settings

    if "T1" in unknowns:
        solved["T1"] = solve_T1(cfg)
        cfg = cfg.replace_stage(1, duration=solved["T1"])
    if "T3" in unknowns:
        solved["T3"] = solve_T3(cfg, problem.T3_resolution)
        cfg = cfg.replace_stage(3, duration=solved["T3"])

    stall_sep = math.nan
    target = problem.targets.get("stall_separation")
    s4 = cfg.stage(4)
    if "eta_n4" in unknowns:
        if s4.duration == 0:
            notes.append("stage 4 has zero duration; gradient left unset")
            X4 = _state_before(cfg, 5, 1, dyn, settings).x
        else:
            try:
                sol = solve_stage4_eta(cfg, target, s4.duration, problem.stage4_mode, dyn,
                                       settings=settings)
            except (ClosureError, NoStallError) as exc:
                raise exc if isinstance(exc, ClosureError) else ClosureError(4, str(exc))
            solved["eta_n4"] = sol.eta_nonlinear
            cfg = cfg.replace_stage(4, eta_nonlinear=sol.eta_nonlinear, duration=sol.duration)
            if sol.duration != s4.duration:
                solved["T4"] = sol.duration
            X4 = sol.X4
    else:
        X4 = _state_before(cfg, 5, 1, dyn, settings).x
    stall_sep = 2 * abs(X4)

    if "eta_l5" in unknowns:
        eta5, T5 = solve_stage5(cfg, X4)
        solved["eta_l5"], solved["T5"] = eta5, T5
        cfg = cfg.replace_stage(5, eta_linear=eta5, duration=T5)

    fx, fv = closure_residuals(cfg, dyn, settings)
    report = ResidualReport(fx, fv, stall_sep, target, solved, dict(problem.tolerances), notes)
    return cfg, report
