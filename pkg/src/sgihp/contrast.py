"""Interferometer contrast from classical mismatch of the recombined arms.

For two packets sharing width and chirp and differing only in centre and
linear phase, the overlap magnitude is

    C = exp(-dx^2 / (8 sigma^2) - sigma^2 db^2 / 2).

``overlap`` evaluates the general two-Gaussian integral for the strict mode.
"""
from __future__ import annotations

import cmath
import enum
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .model import ExperimentConfig, PotentialKind
from .trajectory import NoStallError, arm_trajectory
from .wavepacket import PacketState, chain_through_protocol

# Gradient scales that relative fluctuations refer to (largest gradients in the scheme)
REFERENCE_GRADIENTS = {"eta_linear": 5e3, "eta_nonlinear": 1e6}
CONTRAST_TARGET = 0.99


class Axis(enum.Enum):
    ETA_LINEAR = "eta_linear"
    ETA_NONLINEAR = "eta_nonlinear"
    INITIAL_POSITION = "initial_position"

    @classmethod
    def parse(cls, text: str) -> "Axis":
        aliases = {"eta-linear": cls.ETA_LINEAR, "eta-nonlinear": cls.ETA_NONLINEAR,
                   "init-pos": cls.INITIAL_POSITION}
        return aliases.get(text) or cls(text)


@dataclass(frozen=True)
class Perturbation:
    """One deterministic offset: a gradient change (T/m or T/m^2) or an initial shift (m).

    With ``relative`` set, gradient values are fractions of the reference gradient.
    """
    axis: Axis
    value: float
    relative: bool = False

    @property
    def absolute(self) -> float:
        if self.relative and self.axis is not Axis.INITIAL_POSITION:
            return self.value * REFERENCE_GRADIENTS[self.axis.value]
        return self.value


@dataclass(frozen=True)
class Deviations:
    delta_x: float
    delta_b: float


@dataclass
class ContrastResult:
    contrast: float
    deviations: Deviations
    sigma_x_final: float
    perturbation: Perturbation
    strict_contrast: Optional[float] = None
    error: Optional[str] = None

    def recomputed(self) -> float:
        return contrast_from_deviations(self.deviations, self.sigma_x_final)


def contrast_from_deviations(d: Deviations, sigma_x: float) -> float:
    if not sigma_x > 0:
        raise ValueError("sigma_x must be positive")
    return math.exp(-d.delta_x**2 / (8 * sigma_x**2) - sigma_x**2 * d.delta_b**2 / 2)


def overlap(left: PacketState, right: PacketState) -> complex:
    """Closed-form integral of conj(psi_L) psi_R for two arbitrary packets."""
    def coeffs(s: PacketState):
        A = complex(0.25 / s.sigma_x**2, -0.25 * s.a)
        B = complex(0.5 * s.x_c / s.sigma_x**2, s.b)
        C = complex(-0.25 * s.x_c**2 / s.sigma_x**2, s.c)
        return A, B, C

    AL, BL, CL = coeffs(left)
    AR, BR, CR = coeffs(right)
    S = AL.conjugate() + AR
    T = BL.conjugate() + BR
    return left.norm_factor * right.norm_factor * cmath.sqrt(math.pi / S) * cmath.exp(
        T * T / (4 * S) + CL.conjugate() + CR)


def apply_perturbation(cfg: ExperimentConfig, p: Perturbation) -> ExperimentConfig:
    """Add the offset to every stage of the matching kind (or to the initial position)."""
    delta = p.absolute
    if p.axis is Axis.INITIAL_POSITION:
        return cfg.with_particle(x0=cfg.particle.x0 + delta)
    kind = PotentialKind.HARMONIC if p.axis is Axis.ETA_LINEAR else PotentialKind.INVERTED
    stages = []
    for s in cfg.stages:
        if s.kind is kind and s.eta is not None:
            field_name = "eta_linear" if kind is PotentialKind.HARMONIC else "eta_nonlinear"
            s = s.with_(**{field_name: s.eta + delta})
        stages.append(s)
    return replace(cfg, stages=tuple(stages))


def _final(cfg: ExperimentConfig, arm: int, label: str = "reference"):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            sols = arm_trajectory(cfg, arm, require_stall=True)
        except NoStallError as exc:
            raise NoStallError(f"{label} protocol: {exc}") from exc
    return sols[-1].end_state if sols else None


def perturbed_protocol_deviations(cfg: ExperimentConfig, perturbation: Perturbation,
                                  arm: int = 1) -> Deviations:
    """Final (dx, db) of the perturbed arm against the same arm unperturbed.

    db = m dv / hbar, reading b as the classical momentum over hbar.
    """
    ref = _final(cfg, arm)
    pert = _final(apply_perturbation(cfg, perturbation), arm, f"perturbed ({perturbation.axis.value} = {perturbation.value:g})")
    if ref is None:
        return Deviations(perturbation.absolute if perturbation.axis is Axis.INITIAL_POSITION else 0.0, 0.0)
    m, hbar = cfg.particle.mass, cfg.constants.hbar
    return Deviations(pert.x - ref.x, m * (pert.v - ref.v) / hbar)


def final_width(cfg: ExperimentConfig, arm: int = 1) -> float:
    return chain_through_protocol(cfg, arm).final.sigma_x


def evaluate_point(cfg: ExperimentConfig, perturbation: Perturbation, strict: bool = False,
                   sigma_final: Optional[float] = None, arm: int = 1) -> ContrastResult:
    sigma = sigma_final if sigma_final is not None else final_width(cfg, arm)
    try:
        d = perturbed_protocol_deviations(cfg, perturbation, arm)
        C = contrast_from_deviations(d, sigma)
        strict_c = None
        if strict:
            left = chain_through_protocol(cfg, arm).final
            right = chain_through_protocol(apply_perturbation(cfg, perturbation), arm).final
            strict_c = abs(overlap(left, right))
        return ContrastResult(C, d, sigma, perturbation, strict_c)
    except (ValueError, ArithmeticError) as exc:
        return ContrastResult(math.nan, Deviations(math.nan, math.nan), sigma, perturbation, error=str(exc))


def _sweep_job(args):
    return evaluate_point(*args)


def contrast_sweep(cfg: ExperimentConfig, axis: Axis, values: Sequence[float], relative: bool = True,
                   strict: bool = False, workers: Optional[int] = None) -> list:
    """ContrastResult per value (values ascending); failures are recorded, not raised."""
    values = list(values)
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError("sweep values must be sorted ascending")
    sigma = final_width(cfg)
    jobs = [(cfg, Perturbation(axis, v, relative), strict, sigma) for v in values]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_sweep_job, jobs))
    return [_sweep_job(j) for j in jobs]


def contrast_threshold(cfg: ExperimentConfig, axis: Axis, lo: float, hi: float, relative: bool = True,
                       target: float = CONTRAST_TARGET, iterations: int = 80) -> float:
    """Perturbation at which C crosses ``target``, by bisection in log space on [lo, hi].

    Returns nan when C(lo) < target or C(hi) >= target.
    """
    sigma = final_width(cfg)

    def C(v):
        return evaluate_point(cfg, Perturbation(axis, v, relative), sigma_final=sigma).contrast

    if not (C(lo) >= target and C(hi) < target):
        return math.nan
    a, b = math.log(lo), math.log(hi)
    for _ in range(iterations):
        mid = 0.5 * (a + b)
        if C(math.exp(mid)) >= target:
            a = mid
        else:
            b = mid
    return math.exp(0.5 * (a + b))


def hp_only_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Stage 1 alone, run for a full period so both arms recombine."""
    s1 = cfg.stage(1)
    w = s1.frequency(cfg.constants)
    return replace(cfg, stages=(s1.with_(duration=2 * math.pi / w),), mode="custom")


def hp_only_contrast(cfg: ExperimentConfig, delta_x0: float):
    """(closed form exp(-dx^2 / 8 sigma0^2), same quantity through the generic pipeline)."""
    closed = math.exp(-delta_x0**2 / (8 * cfg.particle.sigma0**2))
    hp = hp_only_config(cfg)
    res = evaluate_point(hp, Perturbation(Axis.INITIAL_POSITION, delta_x0))
    return closed, res.contrast


def robustness_gain(cfg: ExperimentConfig, axis: Axis = Axis.ETA_NONLINEAR, lo: float = 1e-14,
                    hi: float = 1e-1) -> tuple:
    """(full-protocol threshold, HP-only threshold) of the same relative gradient axis.

    The HP-only proxy perturbs the linear gradient of a single full-period stage,
    since that stage has no nonlinear gradient.
    """
    full = contrast_threshold(cfg, axis, lo, hi)
    hp_axis = Axis.ETA_LINEAR
    hp = contrast_threshold(hp_only_config(cfg), hp_axis, lo, hi)
    return full, hp
