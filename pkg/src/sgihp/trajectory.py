"""Closed-form centre-of-mass trajectories through the five protocol stages.

Each stage is a harmonic or inverted-harmonic map of (x, v). A harmonic stage
with spin s is an oscillator about the shifted centre

    d = -s hbar gamma_e eta_l / (m omega^2)

and an inverted stage (spin 0) is x(t) = x0 cosh(wt) + (v0/w) sinh(wt).

Arm +1 (spin +1 in the first stage) is displaced towards negative x, arm -1
towards positive x; ``separation`` is x_minus - x_plus so it is positive.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .model import (
    ExperimentConfig,
    PotentialKind,
    StageSpec,
    ihp_validity_bound,
)

CLOSURE_POSITION_TOL = 1e-12
CLOSURE_VELOCITY_TOL = 1e-9
VALIDITY_FRACTION = 0.1


class NoStallError(ValueError):
    """The deceleration stage never brings the arm to rest."""


class IHPValidityWarning(UserWarning):
    pass


class ClosureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ClassicalState:
    x: float
    v: float
    t: float = 0.0


@dataclass
class StageSolution:
    stage_index: int
    position_fn: Callable
    velocity_fn: Callable
    end_state: ClassicalState
    start_state: ClassicalState
    duration: float
    info: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def spin_offset(cfg: ExperimentConfig, stage: StageSpec, arm: int) -> float:
    """Centre shift of a harmonic stage for the given arm (zero for spin-0 stages)."""
    s = stage.arm_spin(arm)
    if s == 0:
        return 0.0
    c = cfg.constants
    w = stage.frequency(c)
    return -s * c.hbar * c.gamma_e * stage.eta_linear / (cfg.particle.mass * w**2)


def _harmonic(x0, v0, w, d):
    def pos(t):
        return d + (x0 - d) * np.cos(w * t) + v0 / w * np.sin(w * t)

    def vel(t):
        return -(x0 - d) * w * np.sin(w * t) + v0 * np.cos(w * t)

    return pos, vel


def _inverted(x0, v0, w):
    def pos(t):
        return x0 * np.cosh(w * t) + v0 / w * np.sinh(w * t)

    def vel(t):
        return x0 * w * np.sinh(w * t) + v0 * np.cosh(w * t)

    return pos, vel


def _solution(stage, incoming, pos, vel, duration, **info):
    end = ClassicalState(float(pos(duration)), float(vel(duration)), incoming.t + duration)
    return StageSolution(stage.index, pos, vel, end, incoming, duration, dict(info))


def propagate_stage(cfg: ExperimentConfig, stage: StageSpec, incoming: ClassicalState,
                    arm: int = 1, duration: Optional[float] = None) -> StageSolution:
    """Generic closed-form map for one stage; ``duration`` overrides the stage's own."""
    T = stage.duration if duration is None else duration
    if T is None:
        raise ValueError(f"stage {stage.index} has no duration")
    if T == 0:
        def pos(t, x=incoming.x):
            return x + 0 * np.asarray(t)

        def vel(t, v=incoming.v):
            return v + 0 * np.asarray(t)

        sol = _solution(stage, incoming, pos, vel, 0.0, omega=math.nan, center=0.0)
        sol.info.update(amplitude=math.hypot(incoming.x, 0.0), t4=0.0, X4=incoming.x)
        return sol
    w = stage.frequency(cfg.constants)
    if stage.kind is PotentialKind.HARMONIC:
        d = spin_offset(cfg, stage, arm)
        pos, vel = _harmonic(incoming.x, incoming.v, w, d)
        return _solution(stage, incoming, pos, vel, T, omega=w, center=d)
    pos, vel = _inverted(incoming.x, incoming.v, w)
    sol = _solution(stage, incoming, pos, vel, T, omega=w)
    bound = ihp_validity_bound(stage.B0, stage.eta_nonlinear)
    x_max = max(abs(incoming.x), abs(sol.end_state.x))
    if x_max > VALIDITY_FRACTION * bound:
        msg = (f"stage {stage.index}: |x| = {x_max:.3g} m exceeds "
               f"{VALIDITY_FRACTION} of the IHP validity bound {bound:.3g} m")
        sol.warnings.append(msg)
        warnings.warn(msg, IHPValidityWarning, stacklevel=2)
    return sol


def stage1_trajectory(cfg: ExperimentConfig, spin: int = 1,
                      incoming: Optional[ClassicalState] = None) -> StageSolution:
    """Initial separation: x(t) = d (1 - cos w t) for a particle released at rest at the origin."""
    if spin not in (1, -1):
        raise ValueError("stage-1 spin must be +1 or -1")
    stage = cfg.stage(1)
    incoming = incoming or ClassicalState(0.0, 0.0, 0.0)
    sol = propagate_stage(cfg, stage, incoming, arm=spin)
    sol.info["X1_half_period"] = 2 * sol.info["center"]
    return sol


def stage2_trajectory(cfg: ExperimentConfig, incoming: ClassicalState) -> StageSolution:
    """Enhancement: x(t) = X1 cosh(w2 t) + (V1/w2) sinh(w2 t)."""
    return propagate_stage(cfg, cfg.stage(2), incoming)


def stage3_phase(X2: float, V2: float, w3: float):
    """Amplitude and phase of x(t) = A sin(w3 t + phi) for the arm on the positive side."""
    sign = 1.0 if (X2 > 0 or (X2 == 0 and V2 >= 0)) else -1.0
    X, V = sign * X2, sign * V2
    A = math.hypot(X, V / w3)
    phi = math.atan2(X, V / w3)
    return A, phi


def stage3_trajectory(cfg: ExperimentConfig, incoming: ClassicalState) -> StageSolution:
    """Return stage: harmonic oscillation with amplitude sqrt(X2^2 + (V2/w3)^2)."""
    stage = cfg.stage(3)
    sol = propagate_stage(cfg, stage, incoming, arm=1)
    A, phi = stage3_phase(incoming.x, incoming.v, sol.info["omega"])
    sol.info.update(amplitude=A, phi=phi, t_peak=(math.pi / 2 - phi) / sol.info["omega"])
    return sol


def stall_point(X3: float, V3: float, w4: float):
    """(t4, X4): time for the inverted stage to bring (X3, V3) to rest, and where."""
    disc = (X3 * w4) ** 2 - V3**2
    num, den = X3 * w4 - V3, X3 * w4 + V3
    if V3 == 0:
        return 0.0, X3
    if disc <= 0 or den == 0 or num / den <= 0:
        raise NoStallError(
            f"velocity never reaches zero: X3^2 w4^2 - V3^2 = {disc:.3e}"
        )
    t4 = math.log(num / den) / (2 * w4)
    if t4 < 0:
        raise NoStallError(f"arm is moving outward (V3 = {V3:.3e}); no future stall")
    return t4, math.copysign(math.sqrt(disc) / w4, X3)


def stage4_trajectory(cfg: ExperimentConfig, incoming: ClassicalState,
                      require_stall: bool = True) -> StageSolution:
    """Deceleration: x(t) = X3 cosh(w4 t) + (V3/w4) sinh(w4 t), with the stall point attached."""
    stage = cfg.stage(4)
    sol = propagate_stage(cfg, stage, incoming)
    w = sol.info["omega"]
    try:
        t4, X4 = stall_point(incoming.x, incoming.v, w)
        sol.info.update(t4=t4, X4=X4)
    except NoStallError as exc:
        if require_stall:
            raise
        sol.warnings.append(str(exc))
        sol.info.update(t4=math.nan, X4=math.nan)
    return sol


def stage5_trajectory(cfg: ExperimentConfig, incoming: ClassicalState, arm: int = 1) -> StageSolution:
    """Recombination: half an oscillation about X4/2 brings the arm back to the origin."""
    sol = propagate_stage(cfg, cfg.stage(5), incoming, arm=arm)
    if abs(incoming.v) > CLOSURE_VELOCITY_TOL:
        msg = f"stage 5 entered with |v| = {abs(incoming.v):.3e} m/s"
        sol.warnings.append(msg)
        warnings.warn(msg, ClosureWarning, stacklevel=2)
    return sol


def arm_trajectory(cfg: ExperimentConfig, arm: int, incoming: Optional[ClassicalState] = None,
                   require_stall: bool = False) -> list:
    """Chain every configured stage for one arm with (x, v) continuity."""
    p = cfg.particle
    state = incoming or ClassicalState(p.x0, p.p0 / p.mass, 0.0)
    out = []
    for stage in cfg.stages:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = propagate_stage(cfg, stage, state, arm=arm)
        if stage.index == 4 and cfg.mode == "protocol":
            try:
                t4, X4 = stall_point(state.x, state.v, sol.info["omega"])
                sol.info.update(t4=t4, X4=X4)
            except NoStallError as exc:
                if require_stall:
                    raise
                sol.warnings.append(str(exc))
        out.append(sol)
        state = sol.end_state
    return out


@dataclass
class ProtocolResult:
    plus: list
    minus: list
    t: np.ndarray
    x_plus: np.ndarray
    x_minus: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray
    peak_time: float
    peak_separation: float

    @property
    def separation(self):
        return self.x_minus - self.x_plus

    @property
    def velocity_difference(self):
        return self.v_minus - self.v_plus

    @property
    def final_plus(self) -> ClassicalState:
        return self.plus[-1].end_state if self.plus else ClassicalState(0.0, 0.0, 0.0)

    @property
    def final_minus(self) -> ClassicalState:
        return self.minus[-1].end_state if self.minus else ClassicalState(0.0, 0.0, 0.0)

    def stage_end(self, index: int) -> ClassicalState:
        for s in self.plus:
            if s.stage_index == index:
                return s.end_state
        raise KeyError(index)

    def closed(self, x_tol=CLOSURE_POSITION_TOL, v_tol=CLOSURE_VELOCITY_TOL) -> bool:
        return all(abs(s.x) < x_tol and abs(s.v) < v_tol
                   for s in (self.final_plus, self.final_minus))


def evaluate(solutions: list, t):
    """Piecewise evaluation of a chained arm at global times ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.full(t.shape, np.nan)
    v = np.full(t.shape, np.nan)
    for i, sol in enumerate(solutions):
        t0 = sol.start_state.t
        last = i == len(solutions) - 1
        mask = (t >= t0) & ((t <= t0 + sol.duration) if last else (t < t0 + sol.duration))
        if np.any(mask):
            x[mask] = sol.position_fn(t[mask] - t0)
            v[mask] = sol.velocity_fn(t[mask] - t0)
    return x, v


def _refine_peak(sep: Callable, t: np.ndarray, values: np.ndarray):
    i = int(np.argmax(values))
    if 0 < i < len(t) - 1 and values[i] > values[i - 1] and values[i] > values[i + 1]:
        res = minimize_scalar(lambda s: -sep(s), bracket=(t[i - 1], t[i], t[i + 1]),
                              method="golden", tol=1e-12)
        return float(res.x), float(-res.fun)
    return float(t[i]), float(values[i])


def run_protocol(cfg: ExperimentConfig, dt: float = 1e-5, mirror: bool = True) -> ProtocolResult:
    """Chain both arms and sample separation and velocity difference on a uniform grid.

    The minus arm is obtained by mirroring the plus arm unless ``mirror`` is
    False, in which case it is propagated independently.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    plus = arm_trajectory(cfg, +1)
    minus = arm_trajectory(cfg, -1)
    total = cfg.total_duration
    n = int(math.floor(total / dt + 1e-9))
    t = np.arange(n + 1) * dt
    if total - t[-1] > 1e-15:
        t = np.append(t, total)
    if not plus:
        empty = np.empty(0)
        return ProtocolResult(plus, minus, empty, empty, empty, empty, empty, math.nan, math.nan)
    xp, vp = evaluate(plus, t)
    if mirror:
        xm, vm = -xp, -vp
    else:
        xm, vm = evaluate(minus, t)

    def sep(s):
        a, _ = evaluate(plus, s)
        if mirror:
            return float(-2 * a[0])
        b, _ = evaluate(minus, s)
        return float(b[0] - a[0])

    peak_t, peak_sep = _refine_peak(sep, t, xm - xp)
    return ProtocolResult(plus, minus, t, xp, xm, vp, vm, peak_t, peak_sep)


def peak_separation_time(cfg: ExperimentConfig, global_time: bool = True) -> float:
    """T* after the start of stage 3 (or the global peak time)."""
    s1 = stage1_trajectory(cfg, +1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IHPValidityWarning)
        s2 = stage2_trajectory(cfg, s1.end_state)
    X2, V2 = s2.end_state.x, s2.end_state.v
    w3 = cfg.stage(3).frequency(cfg.constants)
    _, phi = stage3_phase(X2, V2, w3)
    t_star = (math.pi / 2 - phi) / w3
    if not global_time:
        return t_star
    return s2.end_state.t + t_star


def zeta_factor(cfg: ExperimentConfig) -> float:
    """Enhancement factor sqrt(cosh^2(w2 T2) + (w2/w3)^2 sinh^2(w2 T2))."""
    c = cfg.constants
    s2, s3 = cfg.stage(2), cfg.stage(3)
    w2, w3 = s2.frequency(c), s3.frequency(c)
    u = w2 * s2.duration
    return math.sqrt(math.cosh(u) ** 2 + (w2 / w3) ** 2 * math.sinh(u) ** 2)


def max_superposition_size(cfg: ExperimentConfig) -> float:
    """Peak separation (T1/m)(4 hbar gamma_e/pi) sqrt(mu0/-chi) zeta, with T1 the stage-1 duration.

    The prefactor assumes stage 1 lasts half a period; for other durations
    use ``run_protocol(...).peak_separation``.
    """
    c = cfg.constants
    T1 = cfg.stage(1).duration
    pref = T1 / cfg.particle.mass * 4 * c.hbar * c.gamma_e / math.pi * math.sqrt(c.mu0 / -c.chi_rho)
    return pref * zeta_factor(cfg)
