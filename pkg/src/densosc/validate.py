"""Cross-module oracle checks behind ``densosc validate``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .closed_orbits import integrate_friedel_deficit, lvt_check
from .correlations import (bcs_energy_via_folding, free_energy_via_folding, harmonic_poisson_catalog,
                           kernel_pairing, kernel_thermal, modulated_trace_formula)
from .qm_densities import DensityField, density, make_scheme, thermo_report
from .smooth_tf import rho_tf, smooth_fermi_level, tau_tf, weyl_surface_term
from .specfun import QuadratureSpec, integrate, integrate_panels
from .spectra import PotentialModel, solve_spectrum


def numerical_fourier(kernel, tau, cutoff=200.0):
    """2 int_0^inf kernel(E) cos(tau E) dE by quadrature, independent of the closed forms.

    Panels follow the half periods of the cosine up to cutoff*scale; the rest
    is added by three rounds of integration by parts (derivatives by finite
    differences), which is ample for the kernels' smooth tails.
    """
    s = kernel.scale
    X = cutoff * s
    f = lambda e: kernel.evaluate(e) * np.cos(tau * e)
    if tau == 0.0:
        return 2.0 * integrate(lambda e: kernel.evaluate(e), 0.0, math.inf, QuadratureSpec(1e-13, 1e-16))[0]
    n = max(8, int(math.ceil(X * tau / math.pi)))
    edges = np.linspace(0.0, X, n + 1)
    head = integrate_panels(f, edges, QuadratureSpec(1e-13, 1e-16))[0]
    h = 1e-3 * s
    g0 = float(kernel.evaluate(X))
    g1 = float((kernel.evaluate(X + h) - kernel.evaluate(X - h)) / (2 * h))
    g2 = float((kernel.evaluate(X + h) - 2 * g0 + kernel.evaluate(X - h)) / (h * h))
    c, sn = math.cos(tau * X), math.sin(tau * X)
    # int_X^inf g cos(tau E) dE = -g sin/tau + g' (-cos)/tau^2 ... evaluated at X
    tail = -g0 * sn / tau + g1 * c / tau**2 + g2 * sn / tau**3
    return 2.0 * (head + tail)


def oscillating_fields(model, N, coords, weights=None, count=None):
    """delta rho and delta tau (quantum minus TF) at the smooth Fermi energy, zero temperature."""
    mode = "weyl" if model.hard_wall else "tf"
    lam_t = smooth_fermi_level(model, N, mode).lam
    sp = solve_spectrum(model, count or N // 2 + 40)
    sch = make_scheme(sp, N)
    rho = density(sp, sch, coords, "rho").values - rho_tf(model, lam_t, coords)
    tau = density(sp, sch, coords, "tau").values - tau_tf(model, lam_t, coords)
    meta = {"lambda": sch.lam, "lambda_smooth": lam_t}
    return (DensityField(coords, rho, "drho", meta, weights),
            DensityField(coords, tau, "dtau", meta, weights), lam_t)


def lvt_residual(model, N, points=2001):
    if model.kind == "box1d":
        x = np.linspace(0.0, model.length, points)
    else:
        lam = smooth_fermi_level(model, N, "tf").lam
        xt = math.sqrt(2.0 * lam / model.mass) / model.omegas[0]
        x = np.linspace(-1.2 * xt, 1.2 * xt, points)
    drho, dtau, lam_t = oscillating_fields(model, N, x)
    return lvt_check(dtau, drho, model, lam_t)


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    seconds: float

    @property
    def ok(self):
        return bool(self.value <= self.threshold)


@dataclass
class Report:
    checks: list = field(default_factory=list)

    @property
    def ok(self):
        return all(c.ok for c in self.checks)

    def lines(self):
        out = [f"{'PASS' if c.ok else 'FAIL'}  {c.name}: {c.value:.3e} <= {c.threshold:.1e}  ({c.seconds:.2f} s)"
               for c in self.checks]
        out.append(f"{sum(c.ok for c in self.checks)}/{len(self.checks)} checks passed")
        return out


def _timed(report, name, threshold, fn):
    t0 = time.perf_counter()
    try:
        value = float(fn())
    except Exception as exc:  # a failing check is a report entry, not a crash
        value = math.inf
        name = f"{name} [{type(exc).__name__}: {exc}]"
    report.checks.append(Check(name, value, threshold, time.perf_counter() - t0))


def _dual_free_energy(T):
    sp = solve_spectrum(PotentialModel.box1d(math.pi), 200)
    sch = make_scheme(sp, 20, "thermal", temperature=T)
    direct = thermo_report(sp, sch).F
    return abs(free_energy_via_folding(sp, T, sch.lam) / direct - 1.0)


def _dual_bcs(gap):
    sp = solve_spectrum(PotentialModel.box1d(math.pi), 200)
    sch = make_scheme(sp, 20, "bcs", gap=gap)
    direct = thermo_report(sp, sch).E_bcs
    return abs(bcs_energy_via_folding(sp, gap, sch.lam, sch.window) / direct - 1.0)


def _fourier_error(kernel):
    taus = np.linspace(0.0, 20.0 / kernel.scale, 50)
    return max(abs(numerical_fourier(kernel, t) - kernel.fourier(t)) for t in taus)


def _weyl(D, p):
    return abs(integrate_friedel_deficit(D, 1.0, p * p) / weyl_surface_term(D, p, 1.0) - 1.0)


def _trace(T):
    k = kernel_thermal(T)
    catalog = harmonic_poisson_catalog(1.0, kmax=60)
    E = np.linspace(10.0, 30.0, 101)
    levels = np.arange(600) + 0.5
    numeric = k.evaluate(E[:, None] - levels).sum(axis=1) - 1.0
    trace = np.array([modulated_trace_formula(catalog, k, e) for e in E])
    return np.max(np.abs(numeric - trace))


def validate_suite():
    r = Report()
    _timed(r, "free energy, folding vs direct sum (box N=20, T=5)", 1e-8, lambda: _dual_free_energy(5.0))
    _timed(r, "BCS energy, folding vs direct sum (box N=20, gap=3)", 1e-8, lambda: _dual_bcs(3.0))
    _timed(r, "thermal kernel Fourier transform (T=1)", 1e-6, lambda: _fourier_error(kernel_thermal(1.0)))
    _timed(r, "pairing kernel Fourier transform (gap=1)", 1e-6, lambda: _fourier_error(kernel_pairing(1.0)))
    _timed(r, "oscillator trace formula at T=0.25 hbar omega", 1e-6, lambda: _trace(0.25))
    for D in (1, 2, 3):
        _timed(r, f"Weyl surface deficit D={D}, pR=100", 1e-2, lambda D=D: _weyl(D, 100.0))
    _timed(r, "LVT box N=20, interior max residual", 0.15,
           lambda: lvt_residual(PotentialModel.box1d(math.pi), 20).max_rel)
    _timed(r, "LVT oscillator N=20, interior max residual", 0.15,
           lambda: lvt_residual(PotentialModel.harmonic(1.0), 20).max_rel)
    return r
