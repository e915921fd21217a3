"""Gaussian-shape wavepacket evolution in harmonic and inverted-harmonic potentials.

A packet is stored in the form

    psi(x) = N exp[-(x - x_c)^2 / (4 sigma^2) + i (a x^2 / 4 + b x + c)]

with N real and positive, so the global phase lives entirely in ``c``.

Propagation uses the complex classical pair (X, P): for any quadratic
Hamiltonian the packet is determined by the classical centre (q, p) and a
complex solution of the same linear equations with X(0) = 1 and
P(0) = hbar (a/2 + i/(2 sigma^2)). The width follows as sigma |X| and the
chirp from Re(P/X). Unlike the textbook u_t^2 = hbar tan(wt)/(2 m w) form,
nothing here divides by cos(wt), so quarter periods are harmless.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import constants as _const

from .model import DomainError, ExperimentConfig, PotentialKind

HBAR = _const.hbar
MAX_HYPERBOLIC_ARG = 700.0


class PropagationRangeError(OverflowError):
    """The inverted-potential evolution would overflow double precision."""

    def __init__(self, omega, t):
        self.max_time = MAX_HYPERBOLIC_ARG / omega
        super().__init__(f"omega t = {omega * t:.1f} exceeds {MAX_HYPERBOLIC_ARG}; "
                         f"max admissible t is {self.max_time:.6g} s")


@dataclass(frozen=True)
class PacketState:
    sigma_x: float
    x_c: float
    a: float
    b: float
    c: float
    norm_factor: float
    t: float = 0.0

    @classmethod
    def gaussian(cls, sigma0: float, x0: float = 0.0, p0: float = 0.0, hbar: float = HBAR):
        """Minimum-uncertainty packet: a = 0, b = p0/hbar, c = -p0 x0/hbar."""
        if not sigma0 > 0:
            raise DomainError("sigma0 must be positive")
        return cls(sigma0, x0, 0.0, p0 / hbar, -p0 * x0 / hbar, (2 * math.pi * sigma0**2) ** -0.25)

    def momentum(self, hbar: float = HBAR) -> float:
        """Classical momentum hbar (b + a x_c / 2) carried by the phase at the centre."""
        return hbar * (self.b + 0.5 * self.a * self.x_c)

    def sigma_p(self, hbar: float = HBAR) -> float:
        """Momentum spread hbar sqrt(1/(4 sigma^2) + a^2 sigma^2 / 4)."""
        s = self.sigma_x
        return hbar * math.sqrt(0.25 / s**2 + 0.25 * self.a**2 * s**2)

    def norm(self) -> float:
        """Closed-form integral of |psi|^2."""
        return self.norm_factor**2 * math.sqrt(2 * math.pi) * self.sigma_x

    def wavefunction(self, x):
        x = np.asarray(x, dtype=float)
        return self.norm_factor * np.exp(
            -((x - self.x_c) ** 2) / (4 * self.sigma_x**2)
            + 1j * (0.25 * self.a * x**2 + self.b * x + self.c)
        )

    def shifted(self, d: float) -> "PacketState":
        """Same packet expressed in the coordinate xi = x - d."""
        return replace(self, x_c=self.x_c - d, b=self.b + 0.5 * self.a * d,
                       c=self.c + self.b * d + 0.25 * self.a * d**2)


@dataclass(frozen=True)
class PropagationAuxiliary:
    """Textbook intermediates: u_t^2 (harmonic) or v_t^2 (inverted), and alpha or beta."""
    kind: PotentialKind
    width_sq: float
    factor: float


def auxiliary(state: PacketState, m: float, omega: float, t: float, kind: PotentialKind,
              hbar: float = HBAR) -> PropagationAuxiliary:
    wt = omega * t
    if kind is PotentialKind.HARMONIC:
        s, c = math.sin(wt), math.cos(wt)
    else:
        s, c = math.sinh(wt), math.cosh(wt)
    width_sq = hbar * s / (2 * m * omega * c) if c != 0 else math.inf
    return PropagationAuxiliary(kind, width_sq, hbar * state.a / (2 * m * omega) * s + c)


def _matrix(kind, m, omega, t):
    """Classical transfer matrix acting on (q, p)."""
    if kind == "free":
        return 1.0, t / m, 0.0, 1.0
    wt = omega * t
    if kind is PotentialKind.HARMONIC:
        s, c = math.sin(wt), math.cos(wt)
        return c, s / (m * omega), -m * omega * s, c
    if abs(wt) > MAX_HYPERBOLIC_ARG:
        raise PropagationRangeError(omega, t)
    s, c = math.sinh(wt), math.cosh(wt)
    return c, s / (m * omega), m * omega * s, c


def _upper_half_phase(z: complex) -> float:
    """Phase of z known to lie in the closed upper half plane, robust to rounding."""
    phi = math.atan2(z.imag, z.real)
    if phi < 0:
        phi = 0.0 if phi > -math.pi / 2 else math.pi
    return phi


def _arg_X(kind, omega, t, X):
    """Continuous branch of arg X(t) starting from arg X(0) = 0.

    Im X >= 0 throughout, and in a harmonic potential X(t + pi/w) = -X(t), so
    every completed half period adds pi.
    """
    if kind is PotentialKind.HARMONIC:
        n = math.floor(omega * t / math.pi)
        return n * math.pi + _upper_half_phase(X if n % 2 == 0 else -X)
    return _upper_half_phase(X)


def _propagate(state: PacketState, m, omega, t, kind, hbar):
    if t < 0:
        raise DomainError("propagation time must be non-negative")
    if not m > 0:
        raise DomainError("mass must be positive")
    if kind != "free" and not omega > 0:
        raise DomainError("omega must be positive")
    if t == 0:
        return state
    A, B, C, D = _matrix(kind, m, omega, t)
    q0, p0 = state.x_c, state.momentum(hbar)
    q, p = A * q0 + B * p0, C * q0 + D * p0
    P0 = hbar * complex(0.5 * state.a, 0.5 / state.sigma_x**2)
    X = A + B * P0
    P = C + D * P0
    ratio = P / X
    sigma = state.sigma_x * abs(X)
    a = 2 * ratio.real / hbar
    b = p / hbar - 0.5 * a * q
    phase_X = _arg_X(kind, omega, t, X)
    c = (state.c + 0.25 * (a * q**2 - state.a * q0**2)
         - (p * q - p0 * q0) / (2 * hbar) - 0.5 * phase_X)
    N = state.norm_factor / math.sqrt(abs(X))
    return PacketState(sigma, q, a, b, c, N, state.t + t)


def propagate_hp(state: PacketState, m: float, omega: float, t: float, center: float = 0.0,
                 hbar: float = HBAR) -> PacketState:
    """Evolve for time t in 1/2 m w^2 (x - center)^2.

    With a nonzero ``center`` the Hamiltonian is the spin-shifted oscillator
    1/2 m w^2 x^2 + F x, whose constant -1/2 m w^2 center^2 is kept in ``c``.
    """
    if center == 0.0:
        return _propagate(state, m, omega, t, PotentialKind.HARMONIC, hbar)
    out = _propagate(state.shifted(center), m, omega, t, PotentialKind.HARMONIC, hbar)
    out = out.shifted(-center)
    return replace(out, c=out.c + 0.5 * m * omega**2 * center**2 * t / hbar)


def propagate_ihp(state: PacketState, m: float, omega: float, t: float, hbar: float = HBAR) -> PacketState:
    """Evolve for time t in -1/2 m w^2 x^2."""
    return _propagate(state, m, omega, t, PotentialKind.INVERTED, hbar)


def propagate_free(state: PacketState, m: float, t: float, hbar: float = HBAR) -> PacketState:
    return _propagate(state, m, 0.0, t, "free", hbar)


def free_limit_check(state: PacketState, m: float, t: float, hbar: float = HBAR) -> PacketState:
    """omega -> 0 limit; for a0 = 0 the width is sigma0 sqrt(1 + (hbar t / 2 m sigma0^2)^2)."""
    if state.a != 0:
        raise DomainError("free-limit anchor requires a0 = 0")
    out = propagate_free(state, m, t, hbar)
    s0 = state.sigma_x
    return replace(out, sigma_x=s0 * math.hypot(1.0, hbar * t / (2 * m * s0**2)))


@dataclass
class PacketChain:
    boundaries: list
    t: np.ndarray
    sigma_x: np.ndarray
    x_c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def final(self) -> PacketState:
        return self.boundaries[-1]


def propagate_stage(cfg: ExperimentConfig, stage, state: PacketState, arm: int, t: float) -> PacketState:
    from .trajectory import spin_offset

    c = cfg.constants
    m = cfg.particle.mass
    w = stage.frequency(c)
    if stage.kind is PotentialKind.HARMONIC:
        return propagate_hp(state, m, w, t, center=spin_offset(cfg, stage, arm), hbar=c.hbar)
    return propagate_ihp(state, m, w, t, hbar=c.hbar)


def chain_through_protocol(cfg: ExperimentConfig, arm: int = 1, dt: float = 0.0,
                           initial: PacketState | None = None) -> PacketChain:
    """Carry the packet through every stage; boundaries[i] is the state after stage i.

    With ``dt > 0`` each stage is also sampled every ``dt`` from its start.
    """
    p = cfg.particle
    hbar = cfg.constants.hbar
    state = initial or PacketState.gaussian(p.sigma0, p.x0, p.p0, hbar)
    boundaries = [state]
    rows = [state]
    for stage in cfg.stages:
        T = stage.duration
        if dt > 0:
            for k in range(1, int(math.floor(T / dt + 1e-9)) + 1):
                if k * dt < T:
                    rows.append(propagate_stage(cfg, stage, state, arm, k * dt))
        state = propagate_stage(cfg, stage, state, arm, T)
        boundaries.append(state)
        rows.append(state)
    cols = {f: np.array([getattr(r, f) for r in rows]) for f in ("t", "sigma_x", "x_c", "a", "b", "c")}
    return PacketChain(boundaries, **cols)
