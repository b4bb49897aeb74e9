"""Folding kernels for temperature and pairing, folded sums and modulated trace formulas.

Spin conventions: level densities g(E) are per spin (N = 2 int g); the folded
energies F and E_BCS include the factor 2 and so compare directly with
``qm_densities.thermo_report``. Trace-formula targets carry no spin factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .closed_orbits import MissingOrbitDataError, semiclassical_density_sum
from .qm_densities import OccupationScheme, SpectrumTooShortError, _check_tail
from .specfun import QuadratureSpec, bessel_k, integrate


@dataclass(frozen=True)
class FoldingKernel:
    """Normalised even weight with a closed-form Fourier transform.

    ``scale`` is T for the thermal kernel and the gap for the pairing kernel.
    """

    kind: str
    scale: float

    def __post_init__(self):
        if self.kind not in ("thermal", "pairing"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"kernel scale must be positive, got {self.scale}")

    def unit(self, u):
        """Kernel in the scaled variable u = E/scale (times scale)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "thermal":
            # 1/(4 cosh^2(u/2)) written with exp(-|u|) so it never overflows
            e = np.exp(-np.abs(u))
            return e / (1.0 + e) ** 2
        return 0.5 * (1.0 + u * u) ** -1.5

    def evaluate(self, E):
        return self.unit(np.asarray(E, dtype=float) / self.scale) / self.scale

    def cdf_unit(self, u):
        """Integral of the unit kernel from -inf to u."""
        u = np.asarray(u, dtype=float)
        if self.kind == "thermal":
            return expit(u)
        return 0.5 * (1.0 + u / np.sqrt(1.0 + u * u))

    def fourier(self, tau):
        """int kernel(E) exp(i tau E) dE, tau = orbit period / hbar."""
        z = np.abs(np.asarray(tau, dtype=float)) * self.scale
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        out = np.ones_like(z)
        nz = z > 0
        if self.kind == "thermal":
            x = math.pi * z[nz]
            # x / sinh x = 2x e^-x / (1 - e^-2x)
            out[nz] = 2.0 * x * np.exp(-x) / -np.expm1(-2.0 * x)
        else:
            zz = z[nz]
            out[nz] = zz * bessel_k(1, zz)
        return float(out[0]) if scalar else out


def kernel_thermal(T):
    if not (T > 0):
        raise ValueError(f"temperature must be positive, got {T}")
    return FoldingKernel("thermal", float(T))


def kernel_pairing(gap):
    if not (gap > 0):
        raise ValueError(f"gap must be positive, got {gap}")
    return FoldingKernel("pairing", float(gap))


# --------------------------------------------------------------------------
# folded level densities and energies

LEVEL_DENSITY_TAIL = 1e-12


def _upper_dos(spectrum):
    E, d = spectrum.energies, spectrum.degeneracies
    j = max(0, int(0.8 * len(E)) - 1)
    return d[j:].sum() / max(E[-1] - E[j], 1e-300)


def convolved_level_density(spectrum, kernel, E):
    """Per-spin folded level density sum_n d_n kernel(E - E_n).

    For a truncated spectrum the missing levels are bounded by the local level
    density times the kernel mass above the last level; a bound above 1e-12
    raises SpectrumTooShortError.
    """
    E = np.asarray(E, dtype=float)
    levels, deg = spectrum.energies, spectrum.degeneracies
    if not spectrum.complete:
        u = (levels[-1] - np.max(E)) / kernel.scale
        missing = _upper_dos(spectrum) * kernel.scale * (1.0 - kernel.cdf_unit(u))
        if missing > LEVEL_DENSITY_TAIL:
            raise SpectrumTooShortError(f"missing levels may contribute {missing:.2e} at E = {np.max(E)}")
    diff = E[..., None] - levels
    return kernel.evaluate(diff) @ deg


def _level_integral(kernel, En, lam, weight_e, spec):
    """int_{-inf}^{lam} (weight_e E + (1 - weight_e)) kernel(E - En) dE in the scaled variable."""
    s = kernel.scale
    x = (lam - En) / s

    def f(u):
        return (weight_e * (En + s * u) + (1.0 - weight_e)) * kernel.unit(u)

    # split at the kernel peak so the adaptive rule sees it
    if x > 0:
        v1, _ = integrate(f, -math.inf, 0.0, spec)
        v2, _ = integrate(f, 0.0, x, spec)
        return v1 + v2
    return integrate(f, -math.inf, x, spec)[0]


def _folded_sum(spectrum, kernel, lam, levels, spec):
    spec = spec or QuadratureSpec(rtol=1e-13, atol=1e-300)
    parts = []
    for En, d in zip(spectrum.energies[levels], spectrum.degeneracies[levels]):
        parts.append(2.0 * d * _level_integral(kernel, En, lam, 1.0, spec))
    return parts


def free_energy_via_folding(spectrum, T, lam, spec=None):
    """F = 2 int_{-inf}^lam E g_T(E) dE, summed level by level (spin 2 included).

    Per level the integral equals E_n nu_n - T s_n with s_n the entropy of the
    level, so the result carries the -TS term of the direct sum.
    """
    kernel = kernel_thermal(T)
    _check_tail(spectrum, OccupationScheme("thermal", lam, temperature=T))
    # levels that far above lam contribute below 1e-300
    keep = np.nonzero((spectrum.energies - lam) / T < 690.0)[0]
    return math.fsum(_folded_sum(spectrum, kernel, lam, keep, spec))


def bcs_energy_via_folding(spectrum, gap, lam, window, spec=None):
    """E_BCS = 2 sum_n d_n int_{-inf}^lam E f_gap(E - E_n) dE over the pairing window,
    plus 2 sum d_n E_n for the fully occupied levels below it.

    Per level the integral equals E_n v_n^2 - gap u_n v_n, so the pair
    condensation energy is included. ``window`` must be the one used for the
    direct sum (the pair sum diverges logarithmically without it).
    """
    kernel = kernel_pairing(gap)
    lo, hi = window
    E, d = spectrum.energies, spectrum.degeneracies
    if not spectrum.complete and E[-1] <= hi:
        raise SpectrumTooShortError("spectrum does not extend past the pairing window")
    inside = np.nonzero((E >= lo) & (E <= hi))[0]
    below = E < lo
    parts = _folded_sum(spectrum, kernel, lam, inside, spec)
    parts.extend(2.0 * d[below] * E[below])
    return math.fsum(parts)


def entropy_via_folding(spectrum, N, T, rel_step=1e-3):
    """S = -dF/dT at fixed N by central differences of the folded free energy."""
    from .qm_densities import fix_fermi_level

    h = rel_step * T

    def F(t):
        lam = fix_fermi_level(spectrum, "thermal", N, temperature=t)
        return free_energy_via_folding(spectrum, t, lam)

    return -(F(T + h) - F(T - h)) / (2.0 * h)


# --------------------------------------------------------------------------
# periodic-orbit trace formulas

@dataclass(frozen=True)
class PeriodicOrbit:
    """Periodic orbit with energy-dependent action, period and amplitude (callables)."""

    label: str
    action: Callable
    period: Callable
    maslov: int
    amplitude: Callable | None

    def phase(self, E, hbar=1.0):
        return self.action(E) / hbar - 0.5 * math.pi * self.maslov


def harmonic_poisson_catalog(omega, hbar=1.0, kmax=50):
    """Periodic orbits of the 1D oscillator from Poisson summation of hbar omega (n + 1/2).

    k-th repetition: S = 2 pi k E / omega, T = 2 pi k / omega, sigma = 2k,
    amplitude 2 / (hbar omega); the smooth part is 1 / (hbar omega).
    """
    amp = 2.0 / (hbar * omega)
    return [PeriodicOrbit(f"k={k}", lambda E, k=k: 2.0 * math.pi * k * E / omega,
                          lambda E, k=k: 2.0 * math.pi * k / omega, 2 * k,
                          lambda E, a=amp: a)
            for k in range(1, kmax + 1)]


TARGETS = ("dg", "dF", "dE_bcs", "dE_p")


def trace_formula_terms(catalog, kernel, E, target="dg", hbar=1.0):
    """Per-orbit contributions in catalog order (no spin factor).

    dg:      A f(T/hbar) cos(Phi)
    dF:      A (hbar/T)^2 f(T/hbar) cos(Phi)           thermal kernel
    dE_bcs:  A (hbar/T)^2 f(T/hbar) cos(Phi)           pairing kernel
    dE_p:    -gap^2 A K0(gap T/hbar) cos(Phi)          pairing kernel

    dE_p follows from gap d(dE_bcs)/d(gap) and d/dz[z K1(z)] = -z K0(z).
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    if target == "dF" and kernel.kind != "thermal":
        raise ValueError("dF needs the thermal kernel")
    if target in ("dE_bcs", "dE_p") and kernel.kind != "pairing":
        raise ValueError(f"{target} needs the pairing kernel")
    out = []
    for orb in catalog:
        if orb.amplitude is None:
            raise MissingOrbitDataError(f"orbit {orb.label!r} has no amplitude")
        amp = orb.amplitude(E)
        tau = orb.period(E) / hbar
        c = math.cos(orb.phase(E, hbar))
        if target == "dg":
            out.append(amp * kernel.fourier(tau) * c)
        elif target == "dE_p":
            z = kernel.scale * tau
            out.append(-kernel.scale**2 * amp * float(bessel_k(0, z)) * c)
        else:
            out.append(amp * kernel.fourier(tau) * c / tau**2)
    return np.array(out, dtype=float)


def modulated_trace_formula(catalog, kernel, E, target="dg", hbar=1.0):
    """Sum of :func:`trace_formula_terms`, largest terms first, compensated."""
    terms = trace_formula_terms(catalog, kernel, E, target, hbar)
    return math.fsum(terms[np.argsort(-np.abs(terms), kind="stable")])


def modulated_density(catalog, kernel, lam, coords, which="rho", hbar=1.0):
    """Closed-orbit density sum with each orbit weighted by kernel.fourier(T/hbar)."""

    def weight(orbit):
        if orbit.period is None:
            raise MissingOrbitDataError(f"orbit {orbit.label!r} has no period")
        return kernel.fourier(np.asarray(orbit.period) / hbar)

    field = semiclassical_density_sum(catalog, lam, coords, which, weight=weight)
    field.meta["kernel"] = f"{kernel.kind}:{kernel.scale}"
    return field
