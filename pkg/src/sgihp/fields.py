"""Magnetic field models, the potential they create and the force on the diamond.

The 2D fields are

    linear:     B = (B0 + eta x) e_x - eta y e_y
    nonlinear:  B = (B0 - eta x^2 + eta y^2) e_x + 2 eta x y e_y

The nonlinear y component carries the sign that makes B divergence- and
curl-free. ``y_gradient_scale`` multiplies B_y; values other than 1 break
Maxwell consistency on purpose (test fixtures), and -1 on the nonlinear field
gives the variant with the opposite B_y sign.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .model import DomainError, PhysicalConstants


class FieldKind(enum.Enum):
    LINEAR_1D = "Linear1D"
    NONLINEAR_1D = "Nonlinear1D"
    LINEAR_2D = "Linear2D"
    NONLINEAR_2D = "Nonlinear2D"

    @property
    def is_2d(self) -> bool:
        return self in (FieldKind.LINEAR_2D, FieldKind.NONLINEAR_2D)

    @property
    def is_linear(self) -> bool:
        return self in (FieldKind.LINEAR_1D, FieldKind.LINEAR_2D)


class UnsupportedFieldKind(ValueError):
    pass


@dataclass(frozen=True)
class FieldModel:
    kind: FieldKind
    B0: float
    eta: float
    y_gradient_scale: float = 1.0


@dataclass(frozen=True)
class ForceSample:
    position: tuple
    force: tuple
    dominant_term_labels: list
    terms_x: dict = field(default_factory=dict)
    terms_y: dict = field(default_factory=dict)


def field_at(f: FieldModel, x, y=0.0):
    """(Bx, By) at (x, y). Accepts scalars or broadcastable arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = f.y_gradient_scale
    if f.kind is FieldKind.LINEAR_1D:
        return f.B0 + f.eta * x, np.zeros_like(x)
    if f.kind is FieldKind.NONLINEAR_1D:
        return f.B0 - f.eta * x**2, np.zeros_like(x)
    if f.kind is FieldKind.LINEAR_2D:
        return f.B0 + f.eta * x + 0 * y, -s * f.eta * y + 0 * x
    return f.B0 - f.eta * x**2 + f.eta * y**2, 2 * s * f.eta * x * y


def field_gradients(f: FieldModel, x, y=0.0):
    """Analytic partial derivatives (dBx/dx, dBx/dy, dBy/dx, dBy/dy)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s, eta = f.y_gradient_scale, f.eta
    zero = np.zeros(np.broadcast(x, y).shape)
    if f.kind is FieldKind.LINEAR_1D:
        return zero + eta, zero, zero, zero
    if f.kind is FieldKind.NONLINEAR_1D:
        return -2 * eta * x + zero, zero, zero, zero
    if f.kind is FieldKind.LINEAR_2D:
        return zero + eta, zero, zero, zero - s * eta
    return -2 * eta * x + zero, 2 * eta * y + zero, 2 * s * eta * y + zero, 2 * s * eta * x + zero


def default_grid(half_width: float = 25e-6, points: int = 101):
    g = np.linspace(-half_width, half_width, points)
    return np.meshgrid(g, g, indexing="ij")


def maxwell_residuals(f: FieldModel, grid=None):
    """Max |div B| and max |(curl B)_z| over ``grid`` (an (X, Y) pair of arrays)."""
    if not f.kind.is_2d:
        raise UnsupportedFieldKind(f"Maxwell residuals need a 2D field, got {f.kind.value}")
    X, Y = default_grid() if grid is None else grid
    dxBx, dyBx, dxBy, dyBy = field_gradients(f, X, Y)
    div = dxBx + dyBy
    curl = dxBy - dyBx
    return float(np.max(np.abs(div))), float(np.max(np.abs(curl)))


def potential_energy(f: FieldModel, c: PhysicalConstants, m: float, spin_x: int,
                     x, y=0.0, spin_y: float = 0.0):
    """U = -(chi m / 2 mu0)|B|^2 + hbar gamma (S_x B_x + S_y B_y)."""
    Bx, By = field_at(f, x, y)
    return (-c.chi_rho * m / (2 * c.mu0) * (Bx**2 + By**2)
            + c.hbar * c.gamma_e * (spin_x * Bx + spin_y * By))


def force_at(f: FieldModel, c: PhysicalConstants, m: float, spin_x: int, x: float, y: float = 0.0,
             spin_y: float = 0.0, include_sy: bool = False) -> ForceSample:
    """Force -grad U decomposed into labelled terms.

    S_y terms vanish under Larmor averaging; they are only included when
    ``include_sy`` is set, for diagnostics.
    """
    k = c.chi_rho * m / c.mu0
    hg = c.hbar * c.gamma_e
    eta, B0, s = f.eta, f.B0, f.y_gradient_scale
    sy = spin_y if include_sy else 0.0
    if f.kind.is_linear:
        tx = {
            "diamagnetic_gradient": k * eta**2 * x,
            "diamagnetic_bias": k * B0 * eta,
            "spin_x": -hg * spin_x * eta,
        }
        ty = {"diamagnetic_gradient": k * s**2 * eta**2 * y, "spin_y": hg * sy * s * eta}
        if f.kind is FieldKind.LINEAR_1D:
            ty = {k_: 0.0 for k_ in ty}
    else:
        tx = {
            "quartic": 2 * k * eta**2 * x**3,
            "ihp_bias": -2 * k * B0 * eta * x,
            "cross": k * (4 * s**2 - 2) * eta**2 * x * y**2,
            "spin_x": 2 * hg * spin_x * eta * x,
            "spin_y": -2 * hg * sy * s * eta * y,
        }
        ty = {
            "cubic": 2 * k * eta**2 * y**3,
            "hp_bias": 2 * k * B0 * eta * y,
            "cross": k * (4 * s**2 - 2) * eta**2 * x**2 * y,
            "spin_x": -2 * hg * spin_x * eta * y,
            "spin_y": -2 * hg * sy * s * eta * x,
        }
        if f.kind is FieldKind.NONLINEAR_1D:
            tx["cross"] = 0.0
            tx["spin_y"] = 0.0
            ty = {k_: 0.0 for k_ in ty}
    if not include_sy:
        tx.pop("spin_y", None)
        ty.pop("spin_y", None)
    fx = math.fsum(tx.values())
    fy = math.fsum(ty.values())
    labels = [max(tx, key=lambda k_: abs(tx[k_])), max(ty, key=lambda k_: abs(ty[k_]))]
    return ForceSample((x, y), (fx, fy), labels, tx, ty)


def larmor_frequency(c: PhysicalConstants, B0: float) -> float:
    """Precession rate |gamma_e B0| of the electron spin about the bias field."""
    if B0 < 0:
        raise DomainError("B0 must be non-negative")
    return abs(c.gamma_e * B0)


@dataclass(frozen=True)
class YConfinementReport:
    omega_y: float
    amplitude: float
    ground_state_width: float
    ratio_to_scale: float
    scale: float

    @property
    def negligible(self) -> bool:
        return self.ratio_to_scale < 1e-6


def y_confinement_report(f: FieldModel, c: PhysicalConstants, m: float, sigma0: float,
                         scale: float = 50e-6) -> YConfinementReport:
    """Harmonic y motion implied by the dominant restoring term.

    A packet released with width ``sigma0`` oscillates in y with an amplitude of
    order sigma0, which is compared against the superposition ``scale``.
    """
    if not f.kind.is_2d:
        raise UnsupportedFieldKind("y confinement needs a 2D field")
    if f.kind.is_linear:
        stiffness = -c.chi_rho * m / c.mu0 * (f.y_gradient_scale * f.eta) ** 2
    else:
        stiffness = -2 * c.chi_rho * m / c.mu0 * f.B0 * f.eta
    omega_y = math.sqrt(stiffness / m)
    width = math.sqrt(c.hbar / (2 * m * omega_y)) if omega_y > 0 else math.inf
    return YConfinementReport(omega_y, sigma0, width, sigma0 / scale, scale)


def reference_potential(f: FieldModel, c: PhysicalConstants, m: float) -> float:
    """U at the origin with S = 0, the offset subtracted in potential-landscape plots (J)."""
    return float(potential_energy(f, c, m, 0, 0.0, 0.0))
