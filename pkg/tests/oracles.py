"""Independent reference computations used by the test suite.

None of these share code with the package: split-step Fourier propagation on
a grid, the closed-form wavefunction from the path-integral derivation, direct
quadrature of the propagator kernel, quadrature of the overlap integral and
scipy's solve_ivp on the equations of motion.
"""
from __future__ import annotations

import cmath
import math
import warnings

import numpy as np
from scipy import integrate


def split_step(psi0, x, V, m, hbar, t, steps):
    """Strang split-step Fourier propagation of psi0 on a uniform grid."""
    dx = x[1] - x[0]
    k = 2 * np.pi * np.fft.fftfreq(x.size, d=dx)
    dt = t / steps
    half_v = np.exp(-0.5j * V * dt / hbar)
    kin = np.exp(-0.5j * hbar * k**2 * dt / m)
    psi = psi0.astype(complex)
    for _ in range(steps):
        psi = half_v * psi
        psi = np.fft.ifft(kin * np.fft.fft(psi))
        psi = half_v * psi
    return psi


def grid_width(psi, x):
    """Standard deviation of |psi|^2 on the grid."""
    p = np.abs(psi) ** 2
    p /= integrate.trapezoid(p, x)
    mean = integrate.trapezoid(x * p, x)
    return math.sqrt(integrate.trapezoid((x - mean) ** 2 * p, x))


def closed_form_wavefunction(x, t, m, omega, hbar, sigma0, x0, a0, b0, c0, N0, hyperbolic=False):
    """Printed Gaussian-integral result for psi(x, t) in an HP (or IHP)."""
    sn, cs = (math.sinh, math.cosh) if hyperbolic else (math.sin, math.cos)
    u2 = hbar * sn(omega * t) / (2 * m * omega * cs(omega * t))
    den = 1 / sigma0**2 - 1j * (1 / u2 + a0)
    N = (N0 * cmath.sqrt(m * omega / (2j * math.pi * hbar * sn(omega * t)))
         * cmath.sqrt(4 * math.pi / den) * cmath.exp(1j * c0))
    num = (1j * b0 - 1j * x / (2 * u2 * cs(omega * t)) + x0 / (2 * sigma0**2)) ** 2
    return N * np.exp(1j * x**2 / (4 * u2) - x0**2 / (4 * sigma0**2)) * np.exp(num / den)


def closed_form_chirp(t, m, omega, hbar, sigma0, a0, hyperbolic=False):
    """Chirp a(t) from the closed form, with the u^3 denominator that the expansion gives."""
    sn, cs = (math.sinh, math.cosh) if hyperbolic else (math.sin, math.cos)
    u2 = hbar * sn(omega * t) / (2 * m * omega * cs(omega * t))
    return 1 / u2 - (1 + a0 * u2) / (u2**3 * cs(omega * t) ** 2 * ((1 / u2 + a0) ** 2 + 1 / sigma0**4))


def closed_form_linear_phase(t, m, omega, hbar, sigma0, x0, a0, b0, hyperbolic=False):
    """Linear phase coefficient b(t) as printed."""
    sn, cs = (math.sinh, math.cosh) if hyperbolic else (math.sin, math.cos)
    u2 = hbar * sn(omega * t) / (2 * m * omega * cs(omega * t))
    s4 = sigma0**4
    return (2 * b0 * s4 - u2 * (x0 - 2 * a0 * b0 * s4)) / (
        2 * cs(omega * t) * (s4 + 2 * a0 * u2 * s4 + u2**2 * (1 + a0**2 * s4)))


def kernel_quadrature(x, t, m, omega, hbar, psi0, grid, hyperbolic=False):
    """psi(x, t) = sum over the grid of K(x, t; x', 0) psi0(x') dx'."""
    sn, cs = (np.sinh, np.cosh) if hyperbolic else (np.sin, np.cos)
    dx = grid[1] - grid[0]
    pref = np.sqrt(m * omega / (2j * np.pi * hbar * sn(omega * t)))
    out = []
    for xf in np.atleast_1d(x):
        K = pref * np.exp(1j * m * omega / (2 * hbar)
                          * ((xf**2 + grid**2) * cs(omega * t) - 2 * xf * grid) / sn(omega * t))
        out.append(np.sum(K * psi0) * dx)
    return np.array(out)


def overlap_quadrature(left, right, span=12.0):
    """Adaptive quadrature of conj(psi_L) psi_R over +- span widths around both centres."""
    lo = min(left.x_c, right.x_c) - span * max(left.sigma_x, right.sigma_x)
    hi = max(left.x_c, right.x_c) + span * max(left.sigma_x, right.sigma_x)
    # common x-independent factors out of the integrand so quad sees O(1) values
    x_mid = 0.5 * (left.x_c + right.x_c)

    def integrand(u, part):
        x = x_mid + u
        v = np.conj(left.wavefunction(x)) * right.wavefunction(x)
        return float(v.real if part == 0 else v.imag)

    kw = dict(limit=400, epsabs=0.0, epsrel=1e-12,
              points=[left.x_c - x_mid, right.x_c - x_mid])
    with warnings.catch_warnings():
        # epsrel=1e-12 is beyond reach near roundoff; callers compare at their own tolerance
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        re = integrate.quad(integrand, lo - x_mid, hi - x_mid, args=(0,), **kw)[0]
        im = integrate.quad(integrand, lo - x_mid, hi - x_mid, args=(1,), **kw)[0]
    return complex(re, im)


def ode_trajectory(accel, x0, v0, T, rtol=1e-12, atol_scale=1e-15):
    """solve_ivp (DOP853) of x'' = accel(x) from (x0, v0) over [0, T]; returns (x(T), v(T))."""
    scale_x = max(abs(x0), 1e-12)
    scale_v = max(abs(v0), 1e-12)

    def f(_, y):
        return [y[1], accel(y[0])]

    sol = integrate.solve_ivp(f, (0.0, T), [x0, v0], method="DOP853", rtol=rtol,
                              atol=[atol_scale * scale_x, atol_scale * scale_v])
    return sol.y[0, -1], sol.y[1, -1]


def packet_scales(state, hbar):
    """Natural magnitude of each packet field, for relative comparisons that survive zero crossings.

    b and c are differences of terms of size p/hbar and p x_c/hbar, which sets their rounding floor.
    """
    k = abs(hbar * (state.b + 0.5 * state.a * state.x_c)) / hbar
    s = state.sigma_x
    return {"sigma_x": s, "x_c": max(abs(state.x_c), s), "a": max(abs(state.a), s**-2),
            "b": max(abs(state.b), k, 1 / s), "c": max(abs(state.c), k * abs(state.x_c), 1.0)}
