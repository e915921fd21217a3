"""Physical constants, experiment configuration and derived trap frequencies.

All quantities are SI. Configuration objects are frozen dataclasses so they
can be shared freely between workers.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from scipy import constants as _const

# Larmor-validity checks need a bias field for the harmonic stages, whose
# bias term is dropped from the dynamics. The IHP bias is used as stand-in.
HP_BIAS_STANDIN = 10.0


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a formula."""


class PotentialKind(enum.Enum):
    HARMONIC = "Harmonic"
    INVERTED = "InvertedHarmonic"


class SpinConfig(enum.Enum):
    PLUS_MINUS_ONE = "SxPlusMinusOne"
    ZERO = "SxZero"


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = _const.hbar
    mu0: float = _const.mu_0
    # NV convention gamma_e / 2pi = 28 GHz/T
    gamma_e: float = 2 * math.pi * 28e9
    chi_rho: float = -6.2e-9
    # enters no equation of motion, only the reported energy offset
    zero_field_D: float = 2 * math.pi * 2.8e9

    @property
    def harmonic_coefficient(self) -> float:
        """sqrt(-chi_rho / mu0), so that omega_h = coefficient * eta_l."""
        return math.sqrt(-self.chi_rho / self.mu0)


@dataclass(frozen=True)
class ParticleSpec:
    mass: float = 1e-15
    sigma0: float = 2e-11
    x0: float = 0.0
    p0: float = 0.0


@dataclass(frozen=True)
class StageSpec:
    index: int
    kind: PotentialKind
    spin: SpinConfig
    duration: Optional[float] = None
    B0: float = 0.0
    eta_linear: Optional[float] = None
    eta_nonlinear: Optional[float] = None

    @property
    def is_harmonic(self) -> bool:
        return self.kind is PotentialKind.HARMONIC

    @property
    def eta(self) -> Optional[float]:
        return self.eta_linear if self.is_harmonic else self.eta_nonlinear

    def arm_spin(self, arm: int) -> int:
        """Spin quantum number felt by interferometer arm ``arm`` (+1 or -1)."""
        return arm if self.spin is SpinConfig.PLUS_MINUS_ONE else 0

    def frequency(self, constants: PhysicalConstants) -> float:
        if self.is_harmonic:
            return omega_harmonic(constants, self.eta_linear)
        return omega_inverted(constants, self.B0, self.eta_nonlinear)

    def with_(self, **changes) -> "StageSpec":
        return replace(self, **changes)


PROTOCOL_PATTERN = (
    PotentialKind.HARMONIC,
    PotentialKind.INVERTED,
    PotentialKind.HARMONIC,
    PotentialKind.INVERTED,
    PotentialKind.HARMONIC,
)


@dataclass(frozen=True)
class ExperimentConfig:
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    particle: ParticleSpec = field(default_factory=ParticleSpec)
    stages: tuple = ()
    mode: str = "protocol"

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    def stage(self, index: int) -> StageSpec:
        for s in self.stages:
            if s.index == index:
                return s
        raise KeyError(f"no stage {index}")

    def replace_stage(self, index: int, **changes) -> "ExperimentConfig":
        stages = tuple(s.with_(**changes) if s.index == index else s for s in self.stages)
        return replace(self, stages=stages)

    def with_particle(self, **changes) -> "ExperimentConfig":
        return replace(self, particle=replace(self.particle, **changes))

    @property
    def total_duration(self) -> float:
        return sum(s.duration or 0.0 for s in self.stages)

    @property
    def is_complete(self) -> bool:
        return all(
            s.duration is not None and s.eta is not None for s in self.stages
        )


def omega_harmonic(c: PhysicalConstants, eta_l: float) -> float:
    """Trap frequency of the linear-field harmonic potential."""
    if eta_l is None or not eta_l > 0:
        raise DomainError(f"linear gradient must be positive, got {eta_l}")
    return c.harmonic_coefficient * eta_l


def omega_inverted(c: PhysicalConstants, B0: float, eta_n: float) -> float:
    """Growth rate of the inverted harmonic potential of the nonlinear field."""
    if B0 is None or not B0 > 0:
        raise DomainError(f"bias field must be positive for an IHP, got {B0}")
    if eta_n is None or not eta_n > 0:
        raise DomainError(f"nonlinear gradient must be positive, got {eta_n}")
    return math.sqrt(-2 * c.chi_rho * B0 * eta_n / c.mu0)


def ihp_validity_bound(B0: float, eta_n: float) -> float:
    """Length scale sqrt(2 B0 / eta_n); the quartic term is negligible for |x| well below it."""
    if not (B0 > 0 and eta_n > 0):
        raise DomainError("B0 and eta_n must be positive")
    return math.sqrt(2 * B0 / eta_n)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def render(self) -> str:
        if self.ok:
            return "configuration valid"
        return "\n".join(f"- {v}" for v in self.violations)


def _finite_positive(value) -> bool:
    return value is not None and math.isfinite(value) and value > 0


def validate_config(cfg: ExperimentConfig, require_complete: bool = True) -> ValidationReport:
    """Collect every invariant violation of ``cfg``; never raises."""
    out = []
    c = cfg.constants
    if not (c.chi_rho < 0):
        out.append("chi_rho < 0 (diamagnet)")
    for name in ("hbar", "mu0", "gamma_e", "zero_field_D"):
        if not getattr(c, name) > 0:
            out.append(f"{name} > 0")

    p = cfg.particle
    if not _finite_positive(p.mass):
        out.append("mass > 0")
    if not _finite_positive(p.sigma0):
        out.append("sigma0 > 0")

    if cfg.mode not in ("protocol", "custom"):
        out.append(f"unknown mode {cfg.mode!r}")
    if cfg.mode == "protocol":
        kinds = tuple(s.kind for s in cfg.stages)
        if kinds != PROTOCOL_PATTERN:
            out.append("protocol mode requires stage kinds H, I, H, I, H")
        if [s.index for s in cfg.stages] != [1, 2, 3, 4, 5][: len(cfg.stages)]:
            out.append("stage indices must run 1..5 in order")

    for s in cfg.stages:
        tag = f"stage {s.index}"
        if not 1 <= s.index <= 5 and cfg.mode == "protocol":
            out.append(f"{tag}: index in 1..5")
        if s.is_harmonic:
            if s.eta_nonlinear is not None:
                out.append(f"{tag}: harmonic stage carries eta_linear only")
            if s.eta_linear is None:
                if require_complete:
                    out.append(f"{tag}: eta_linear missing")
            elif not _finite_positive(s.eta_linear):
                out.append(f"{tag}: eta_linear > 0")
        else:
            if s.eta_linear is not None:
                out.append(f"{tag}: inverted stage carries eta_nonlinear only")
            if s.eta_nonlinear is None:
                if require_complete:
                    out.append(f"{tag}: eta_nonlinear missing")
            elif not _finite_positive(s.eta_nonlinear):
                out.append(f"{tag}: eta_nonlinear > 0")
            if not _finite_positive(s.B0):
                out.append(f"{tag}: IHP requires B0 > 0")
            if s.spin is not SpinConfig.ZERO:
                out.append(f"{tag}: IHP requires S_x = 0")
        if s.duration is None:
            if require_complete:
                out.append(f"{tag}: duration missing")
        elif not (math.isfinite(s.duration) and s.duration >= 0):
            out.append(f"{tag}: duration >= 0")
    return ValidationReport(out)


def table2_config(stages: Optional[Sequence[StageSpec]] = None, **particle) -> ExperimentConfig:
    """The five-stage parameter set of the reference protocol (m = 1e-15 kg)."""
    H, I = PotentialKind.HARMONIC, PotentialKind.INVERTED
    PM, Z = SpinConfig.PLUS_MINUS_ONE, SpinConfig.ZERO
    if stages is None:
        stages = (
            StageSpec(1, H, PM, 0.01784, eta_linear=2507.0),
            StageSpec(2, I, Z, 0.03, B0=10.0, eta_nonlinear=1e6),
            StageSpec(3, H, Z, 0.00415, eta_linear=5e3),
            StageSpec(4, I, Z, 0.03, B0=10.0, eta_nonlinear=992199.56),
            StageSpec(5, H, PM, 0.01853, eta_linear=2414.07),
        )
    return ExperimentConfig(PhysicalConstants(), ParticleSpec(**particle), tuple(stages))
