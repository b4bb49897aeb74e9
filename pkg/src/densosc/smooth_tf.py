"""Thomas-Fermi densities, the TF kinetic functional and smooth Fermi energies.

Spin degeneracy 2 is included in every density here, matching the exact
quantum densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .specfun import integrate
from .spectra import classical_momentum


def unit_ball_volume(D):
    return math.pi ** (D / 2) / math.gamma(D / 2 + 1)


def sphere_surface(D, R=1.0):
    """Hypersurface S_D = 2 pi^(D/2) R^(D-1) / Gamma(D/2); S_1 = 2 endpoints."""
    return 2.0 * math.pi ** (D / 2) * R ** (D - 1) / math.gamma(D / 2)


def rho_tf_of_p(D, p, hbar=1.0):
    return 2.0 * unit_ball_volume(D) * p**D / (2.0 * math.pi * hbar) ** D


def _p(model, lam, r):
    p = classical_momentum(model, lam, r)
    return np.nan_to_num(p, nan=0.0)


def rho_tf(model, lam, r):
    """TF particle density, zero where V(r) > lam."""
    return rho_tf_of_p(model.dim, _p(model, lam, r), model.hbar)


def tau_tf(model, lam, r):
    """TF kinetic-energy density D/(D+2) (p^2/2m) rho_TF."""
    p = _p(model, lam, r)
    D = model.dim
    return D / (D + 2.0) * p**2 / (2.0 * model.mass) * rho_tf_of_p(D, p, model.hbar)


def tau_tf_of_rho(D, rho, mass=1.0, hbar=1.0):
    """TF kinetic energy density as a functional of rho.

    Inverts rho = 2 V_D p^D / (2 pi hbar)^D for p and inserts it into
    tau = D/(D+2) p^2/(2m) rho.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be non-negative")
    p = 2.0 * math.pi * hbar * (rho / (2.0 * unit_ball_volume(D))) ** (1.0 / D)
    return D / (D + 2.0) * p**2 / (2.0 * mass) * rho


def weyl_surface_term(D, p, R, hbar=1.0):
    """Surface term of the smooth particle number for a spherical billiard."""
    return (-math.gamma(D / 2) / (2.0 * math.pi ** (D / 2) * hbar ** (D - 1) * math.gamma(D))
            * p ** (D - 1) * sphere_surface(D, R))


def _quartic_angular_integral(kappa):
    def g(th):
        c2, s2 = np.cos(th) ** 2, np.sin(th) ** 2
        return (0.5 * (c2 * c2 + s2 * s2) - kappa * c2 * s2) ** -0.5
    return integrate(g, 0.0, 2.0 * math.pi)[0]


def volume_count(model, lam):
    """Integral of rho_TF over space (TF particle number at Fermi energy lam)."""
    if lam <= 0:
        return 0.0
    D, m, hbar = model.dim, model.mass, model.hbar
    p = math.sqrt(2.0 * m * lam)
    if model.kind == "box1d":
        return rho_tf_of_p(1, p, hbar) * model.length
    if model.kind == "billiard":
        return rho_tf_of_p(D, p, hbar) * unit_ball_volume(D) * model.radius**D
    if model.kind == "harmonic":
        return 2.0 * lam**D / (math.factorial(D) * hbar**D * float(np.prod(model.omegas)))
    # V = r^4 g(theta) is homogeneous of degree 4: the radial integral is analytic
    return m / (math.pi * hbar**2) * lam**1.5 / 3.0 * _quartic_angular_integral(model.kappa)


def surface_count(model, lam):
    """Weyl surface correction (negative) for hard-wall models, else 0."""
    if not model.hard_wall or lam <= 0:
        return 0.0
    p = math.sqrt(2.0 * model.mass * lam)
    if model.kind == "box1d":
        # two walls, same as the D = 1 segment
        return weyl_surface_term(1, p, 0.5 * model.length, model.hbar)
    return weyl_surface_term(model.dim, p, model.radius, model.hbar)


def smooth_count(model, lam, mode="weyl"):
    n = volume_count(model, lam)
    if mode == "weyl":
        n += surface_count(model, lam)
    elif mode != "tf":
        raise ValueError(f"counting mode must be 'tf' or 'weyl', got {mode!r}")
    return n


@dataclass(frozen=True)
class SmoothFermiLevel:
    lam: float
    N: float
    mode: str


def smooth_fermi_level(model, N, mode="weyl"):
    """Smooth Fermi energy: solves smooth_count(lam) = N.

    ``mode='weyl'`` adds the surface term for hard-wall models and falls back
    to plain TF counting for smooth potentials (which have no surface).
    """
    if N < 2 or N % 2:
        raise ValueError(f"N must be even and >= 2, got {N}")
    hi = 1.0
    while smooth_count(model, hi, mode) < N:
        hi *= 2.0
        if hi > 1e30:
            raise RuntimeError("smooth count never reaches N")
    lo = hi / 2.0
    while smooth_count(model, lo, mode) > N and lo > 1e-300:
        lo /= 2.0
    if smooth_count(model, lo, mode) > N:
        raise RuntimeError("cannot bracket the smooth Fermi energy")
    lam = brentq(lambda e: smooth_count(model, e, mode) - N, lo, hi, xtol=1e-15 * hi, rtol=1e-15)
    return SmoothFermiLevel(lam, float(N), mode)
