"""Numerical integration of the unapproximated stage dynamics.

Harmonic stages use the linear-field force including the spin term; inverted
stages keep the quartic part of the nonlinear-field potential

    U(x) = (chi m / mu0) B0 eta x^2 - (chi m / 2 mu0) eta^2 x^4 - chi m B0^2 / (2 mu0).
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import RK45
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import minimize_scalar

from .model import ExperimentConfig, PotentialKind, StageSpec
from .trajectory import ClassicalState, max_superposition_size, run_protocol


class IntegrationError(RuntimeError):
    pass


class Method(enum.Enum):
    RK4_FIXED = "RK4Fixed"
    RK45_ADAPTIVE = "RK45Adaptive"


@dataclass(frozen=True)
class IntegratorSettings:
    method: Method = Method.RK45_ADAPTIVE
    step: float = 1e-6
    tolerance: float = 1e-12
    max_steps: int = 2_000_000
    energy_check_interval: int = 1
    # False integrates the quadratic (inverted-harmonic) model instead of the full quartic one
    quartic: bool = True

    def __post_init__(self):
        if self.method is Method.RK4_FIXED and not self.step > 0:
            raise ValueError("fixed step must be positive")
        if self.method is Method.RK45_ADAPTIVE and not 0 < self.tolerance < 1e-3:
            raise ValueError("tolerance must lie in (0, 1e-3)")


@dataclass
class NumericTrace:
    stage_index: int
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    energy_drift: float
    dynamic_energy_drift: float
    steps: int

    @property
    def final(self) -> ClassicalState:
        return ClassicalState(float(self.x[-1]), float(self.v[-1]), float(self.t[-1]))

    def interpolant(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.t, self.x, self.v)


def _coefficients(cfg: ExperimentConfig, stage: StageSpec, arm: int, quartic: bool = True):
    """(k1, k3, f0): acceleration a(x) = k1 x + k3 x^3 + f0."""
    c = cfg.constants
    m = cfg.particle.mass
    if stage.kind is PotentialKind.HARMONIC:
        w = stage.frequency(c)
        s = stage.arm_spin(arm)
        return -(w**2), 0.0, -s * c.hbar * c.gamma_e * stage.eta_linear / m
    k = 2 * c.chi_rho / c.mu0
    return -k * stage.B0 * stage.eta_nonlinear, (k * stage.eta_nonlinear**2 if quartic else 0.0), 0.0


def accel_exact(cfg: ExperimentConfig, stage: StageSpec, spin: int, x):
    """Acceleration of arm ``spin`` (the arm's stage-1 spin) at position x."""
    k1, k3, f0 = _coefficients(cfg, stage, spin)
    return k1 * x + k3 * x**3 + f0


def potential_energy(cfg: ExperimentConfig, stage: StageSpec, arm: int, x, offsets: bool = True,
                     quartic: bool = True):
    """Exact potential energy including constant offsets (or without, ``offsets=False``)."""
    c = cfg.constants
    m = cfg.particle.mass
    k1, k3, f0 = _coefficients(cfg, stage, arm, quartic)
    U = -m * (0.5 * k1 * x**2 + 0.25 * k3 * x**4 + f0 * x)
    if offsets:
        if stage.kind is PotentialKind.HARMONIC:
            U = U + c.hbar * c.zero_field_D * stage.arm_spin(arm) ** 2
        else:
            U = U - c.chi_rho * m * stage.B0**2 / (2 * c.mu0)
    return U


def stage_energy(cfg, stage, arm, x, v, offsets=True, quartic=True):
    return 0.5 * cfg.particle.mass * v**2 + potential_energy(cfg, stage, arm, x, offsets, quartic)


def _rhs(k1, k3, f0):
    def f(t, y):
        x = y[0]
        return np.array([y[1], k1 * x + k3 * x**3 + f0])
    return f


def _run_rk45(fun, y0, t0, t1, scale, settings):
    # integrate the scaled state so a single absolute tolerance fits both components
    def scaled(t, z):
        return fun(t, z * scale) / scale

    solver = RK45(scaled, t0, y0 / scale, t1, rtol=settings.tolerance,
                  atol=settings.tolerance * 1e-3, first_step=None)
    ts, ys = [t0], [np.array(y0, dtype=float)]
    n = 0
    while solver.status == "running":
        solver.step()
        n += 1
        if solver.status == "failed":
            raise IntegrationError("RK45 step failed")
        if n > settings.max_steps:
            raise IntegrationError(f"step count exceeded {settings.max_steps}")
        ts.append(solver.t)
        ys.append(solver.y * scale)
    return np.array(ts), np.array(ys), n


def _run_rk4(fun, y0, t0, t1, settings):
    T = t1 - t0
    n = max(1, int(math.ceil(abs(T) / settings.step - 1e-9)))
    if n > settings.max_steps:
        raise IntegrationError(f"step count {n} exceeds {settings.max_steps}")
    h = T / n
    ts = t0 + h * np.arange(n + 1)
    ys = np.empty((n + 1, 2))
    y = np.array(y0, dtype=float)
    ys[0] = y
    for i in range(n):
        t = ts[i]
        k1 = fun(t, y)
        k2 = fun(t + h / 2, y + h / 2 * k1)
        k3 = fun(t + h / 2, y + h / 2 * k2)
        k4 = fun(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[i + 1] = y
    ts[-1] = t1
    return ts, ys, n


def integrate_stage(cfg: ExperimentConfig, stage: StageSpec, incoming: ClassicalState,
                    settings: Optional[IntegratorSettings] = None, arm: int = 1,
                    duration: Optional[float] = None, backward: bool = False) -> NumericTrace:
    """Integrate one stage from ``incoming``; times in the trace are global.

    ``backward`` integrates from incoming.t down to incoming.t - duration.
    """
    settings = settings or IntegratorSettings()
    T = stage.duration if duration is None else duration
    if T is None or T < 0:
        raise ValueError(f"stage {stage.index} needs a non-negative duration")
    t0 = incoming.t
    t1 = t0 - T if backward else t0 + T
    y0 = np.array([incoming.x, incoming.v])
    if T == 0:
        return NumericTrace(stage.index, np.array([t0]), y0[:1].copy(), y0[1:].copy(), 0.0, 0.0, 0)
    else:
        k1, k3, f0 = _coefficients(cfg, stage, arm, settings.quartic)
        fun = _rhs(k1, k3, f0)
        if settings.method is Method.RK4_FIXED:
            ts, ys, n = _run_rk4(fun, y0, t0, t1, settings)
        else:
            w = math.sqrt(abs(k1)) or 1.0
            L = max(abs(incoming.x), abs(incoming.v) / w, abs(f0) / w**2)
            if L == 0:
                L = 1.0
            ts, ys, n = _run_rk45(fun, y0, t0, t1, np.array([L, L * w]), settings)
    if backward:
        ts, ys = ts[::-1], ys[::-1]
    x, v = ys[:, 0], ys[:, 1]
    idx = slice(None, None, max(1, settings.energy_check_interval))
    E = stage_energy(cfg, stage, arm, x[idx], v[idx], quartic=settings.quartic)
    Ed = stage_energy(cfg, stage, arm, x[idx], v[idx], offsets=False, quartic=settings.quartic)
    E0 = E[-1] if backward else E[0]
    Ed0 = Ed[-1] if backward else Ed[0]
    drift = float(np.max(np.abs(E - E0)) / abs(E0)) if E0 != 0 else float(np.max(np.abs(E - E0)))
    dyn_scale = max(abs(Ed0), float(np.max(0.5 * cfg.particle.mass * v**2)))
    dyn = float(np.max(np.abs(Ed - Ed0)) / dyn_scale) if dyn_scale > 0 else 0.0
    return NumericTrace(stage.index, ts, x, v, drift, dyn, n)


def integrate_arm(cfg: ExperimentConfig, arm: int = 1,
                  settings: Optional[IntegratorSettings] = None) -> list:
    p = cfg.particle
    state = ClassicalState(p.x0, p.p0 / p.mass, 0.0)
    traces = []
    for stage in cfg.stages:
        tr = integrate_stage(cfg, stage, state, settings, arm)
        traces.append(tr)
        state = tr.final
    return traces


def evaluate_traces(traces: list, t):
    """Hermite interpolation of a chained arm at global times ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.full(t.shape, np.nan)
    for i, tr in enumerate(traces):
        if len(tr.t) < 2:
            continue
        last = i == len(traces) - 1
        mask = (t >= tr.t[0]) & ((t <= tr.t[-1]) if last else (t < tr.t[-1]))
        if np.any(mask):
            out[mask] = tr.interpolant()(t[mask])
    return out


def numeric_peak(plus: list, minus: list):
    """(t_peak, separation_peak) of x_minus - x_plus over all integrated stages."""
    best = (math.nan, -math.inf, None)
    for tp, tm in zip(plus, minus):
        if len(tp.t) < 2:
            continue
        grid = np.union1d(tp.t, tm.t)
        sp, sm = tp.interpolant(), tm.interpolant()
        sep = sm(grid) - sp(grid)
        i = int(np.argmax(sep))
        if sep[i] > best[1]:
            best = (grid[i], sep[i], (grid, i, sp, sm))
    if best[2] is None:
        return math.nan, math.nan
    grid, i, sp, sm = best[2]
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda s: -(sm(s) - sp(s)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13})
        if -res.fun > best[1]:
            return float(res.x), float(-res.fun)
    return float(best[0]), float(best[1])


@dataclass
class ComparisonReport:
    peak_analytic: float
    peak_numeric: float
    peak_formula: float
    peak_time_analytic: float
    peak_time_numeric: float
    final_analytic: tuple
    final_numeric: tuple
    stage_end_rel_error: list
    energy_drift: list
    dynamic_energy_drift: list
    settings: IntegratorSettings
    traces_plus: list = field(default_factory=list, repr=False)
    traces_minus: list = field(default_factory=list, repr=False)

    @property
    def peak_rel_diff(self) -> float:
        return abs(self.peak_numeric - self.peak_analytic) / self.peak_analytic

    @property
    def formula_rel_diff(self) -> float:
        return abs(self.peak_numeric - self.peak_formula) / self.peak_formula

    @property
    def peak_time_diff(self) -> float:
        return abs(self.peak_time_numeric - self.peak_time_analytic)


def compare_analytic_numeric(cfg: ExperimentConfig,
                             settings: Optional[IntegratorSettings] = None) -> ComparisonReport:
    """Closed-form chain against exact-dynamics integration of both arms."""
    settings = settings or IntegratorSettings()
    analytic = run_protocol(cfg)
    plus = integrate_arm(cfg, +1, settings)
    minus = integrate_arm(cfg, -1, settings)
    t_num, peak_num = numeric_peak(plus, minus)
    try:
        formula = max_superposition_size(cfg)
    except (KeyError, TypeError, ValueError):
        formula = math.nan
    rel = []
    for sol, tr in zip(analytic.plus, plus):
        ea, en = sol.end_state, tr.final
        scale_x = max(abs(ea.x), 1e-300)
        scale_v = max(abs(ea.v), 1e-300)
        rel.append((abs(en.x - ea.x) / scale_x, abs(en.v - ea.v) / scale_v))
    fa = (analytic.final_plus, analytic.final_minus)
    fn = (plus[-1].final if plus else ClassicalState(0, 0), minus[-1].final if minus else ClassicalState(0, 0))
    return ComparisonReport(
        analytic.peak_separation, peak_num, formula, analytic.peak_time, t_num, fa, fn, rel,
        [tr.energy_drift for tr in plus + minus], [tr.dynamic_energy_drift for tr in plus + minus],
        settings, plus, minus,
    )


def quartic_force_deviation(cfg: ExperimentConfig, traces: Sequence[NumericTrace]) -> float:
    """Largest |F_exact - F_quadratic| / |F_quadratic| over inverted-stage samples (= eta x^2 / B0)."""
    worst = 0.0
    for tr in traces:
        stage = cfg.stage(tr.stage_index)
        if stage.kind is PotentialKind.HARMONIC:
            continue
        worst = max(worst, float(np.max(stage.eta_nonlinear * tr.x**2 / stage.B0)))
    return worst


@dataclass
class MassSweep:
    masses: np.ndarray
    sizes: np.ndarray
    slope: float
    analytic_sizes: np.ndarray
    analytic_slope: float


def _peak_for_mass(args):
    cfg, m, settings = args
    c = cfg.with_particle(mass=m)
    plus = integrate_arm(c, +1, settings)
    minus = integrate_arm(c, -1, settings)
    return numeric_peak(plus, minus)[1]


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def mass_scaling_sweep(cfg: ExperimentConfig, masses: Sequence[float],
                       settings: Optional[IntegratorSettings] = None,
                       workers: Optional[int] = None) -> MassSweep:
    """Numeric peak separation per mass with stages 1-3 held fixed."""
    from dataclasses import replace

    settings = settings or IntegratorSettings()
    fixed = replace(cfg, stages=tuple(s for s in cfg.stages if s.index <= 3))
    masses = np.asarray(masses, dtype=float)
    jobs = [(fixed, float(m), settings) for m in masses]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            sizes = np.array(list(ex.map(_peak_for_mass, jobs)))
    else:
        sizes = np.array([_peak_for_mass(j) for j in jobs])
    analytic = np.array([run_protocol(fixed.with_particle(mass=m)).peak_separation for m in masses])
    if len(masses) > 1:
        slope, aslope = loglog_slope(masses, sizes), loglog_slope(masses, analytic)
    else:
        slope = aslope = math.nan
    return MassSweep(masses, sizes, slope, analytic, aslope)
