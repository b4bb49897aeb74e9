"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line: measured value, threshold, runtime.

Run alone with ``python3 -m pytest tests/test_acceptance.py -s -q`` to see only those lines.
"""

import math
import time

import numpy as np
import pytest
import sympy as sp

from densosc.closed_orbits import friedel_plus_density, integrate_friedel_deficit, tf_functional_check, wall_extrema
from densosc.correlations import (PeriodicOrbit, bcs_energy_via_folding, free_energy_via_folding,
                                  harmonic_poisson_catalog, kernel_pairing, kernel_thermal,
                                  modulated_trace_formula, trace_formula_terms)
from densosc.qm_densities import DensityField, density, make_scheme, thermo_report
from densosc.smooth_tf import rho_tf, smooth_fermi_level, tau_tf, weyl_surface_term
from densosc.specfun import QuadratureSpec, integrate, integrate_panels
from densosc.spectra import PotentialModel, solve_spectrum
from densosc.validate import lvt_residual, numerical_fourier


def report(capsys, number, label, value, threshold, seconds, budget):
    ok = value <= threshold and seconds <= budget
    line = (f"{'PASS' if ok else 'FAIL'}  criterion {number}: {label}: {value:.3e} <= {threshold:.1e}"
            f"  ({seconds:.2f} s, budget {budget:g} s)")
    with capsys.disabled():
        print("\n" + line)
    assert value <= threshold, line
    assert seconds <= budget, line


@pytest.fixture(scope="module")
def box200():
    return solve_spectrum(PotentialModel.box1d(math.pi), 200)


def test_c01_free_energy_dual(capsys, box200):
    t0 = time.perf_counter()
    worst = 0.0
    for T in (1.0, 5.0, 20.0):
        sch = make_scheme(box200, 20, "thermal", temperature=T)
        direct = thermo_report(box200, sch).F
        worst = max(worst, abs(free_energy_via_folding(box200, T, sch.lam) - direct) / abs(direct))
    report(capsys, 1, "free energy folding vs direct, box N=20, T in {1,5,20}", worst, 1e-8,
           time.perf_counter() - t0, 1.0)


def test_c02_bcs_energy_dual(capsys, box200):
    t0 = time.perf_counter()
    worst = 0.0
    for gap in (1.0, 3.0):
        sch = make_scheme(box200, 20, "bcs", gap=gap)
        direct = thermo_report(box200, sch).E_bcs
        worst = max(worst, abs(bcs_energy_via_folding(box200, gap, sch.lam, sch.window) - direct) / abs(direct))
    report(capsys, 2, "BCS energy folding vs direct, box N=20, gap in {1,3}", worst, 1e-8,
           time.perf_counter() - t0, 1.0)


def test_c03_kernel_fourier_transforms(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for k in (kernel_thermal(1.0), kernel_thermal(0.2), kernel_pairing(1.0), kernel_pairing(4.0)):
        taus = np.linspace(0.0, 20.0 / k.scale, 50)
        worst = max(worst, max(abs(numerical_fourier(k, t) - k.fourier(t)) for t in taus))
    report(capsys, 3, "numerical vs closed-form kernel transforms, 50 points", worst, 1e-6,
           time.perf_counter() - t0, 10.0)


def test_c04_oscillator_trace_formula(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    E = np.linspace(10.0, 30.0, 101)
    levels = np.arange(600) + 0.5
    for T in (0.1, 0.25, 0.5):
        k = kernel_thermal(T)
        catalog = harmonic_poisson_catalog(1.0, kmax=80)
        folded = k.evaluate(E[:, None] - levels).sum(axis=1) - 1.0
        total = np.array([modulated_trace_formula(catalog, k, e) for e in E])
        worst = max(worst, float(np.max(np.abs(folded - total))))
        # term by term: the k-th Poisson term of the exact level density, folded by quadrature
        for e in E[::20]:
            terms = trace_formula_terms(catalog[:4], k, e)
            for j in range(1, 5):
                f = lambda x: k.evaluate(e - x) * 2.0 * np.cos(2 * math.pi * j * x - math.pi * j)
                edges = np.linspace(e - 80 * T, e + 80 * T, 321)
                ref, _ = integrate_panels(f, edges, QuadratureSpec(1e-12, 1e-14))
                worst = max(worst, abs(terms[j - 1] - ref))
    report(capsys, 4, "oscillator: folded spectrum vs modulated trace formula", worst, 1e-6,
           time.perf_counter() - t0, 10.0)


def test_c05_friedel_boundary_law(capsys):
    t0 = time.perf_counter()
    model = PotentialModel.billiard(2)
    sp_disk = solve_spectrum(model, 460)
    r = np.linspace(0.0, 1.0, 2001)
    step = r[1] - r[0]
    wall_density, shift, wall_mismatch = 0.0, 0.0, 0.0
    for N in (100, 606):
        lam_t = smooth_fermi_level(model, N).lam
        rho = density(sp_disk, make_scheme(sp_disk, N), r).values
        tf = rho_tf(model, lam_t, r)
        plus = friedel_plus_density(2, 1.0, lam_t, r[100:])
        wall_density = max(wall_density, abs(rho[-1]))
        qm_ext = wall_extrema(r, rho - tf, 1.0, lam_t)
        sc_ext = wall_extrema(r[100:], plus, 1.0, lam_t)
        assert len(qm_ext) == len(sc_ext) == 2
        shift = max(shift, float(np.max(np.abs(np.subtract(qm_ext, sc_ext)))))
        wall_mismatch = max(wall_mismatch, abs(plus[-1] + tf[-1]))
    seconds = time.perf_counter() - t0
    assert wall_density <= 1e-8
    assert wall_mismatch == 0.0
    report(capsys, 5, "disk N in {100,606}: extremum shift in grid steps (rho(R) <= 1e-8, drho_plus(R) = -rho_TF)",
           shift / step, 1.0 + 1e-9, seconds, 30.0)


def test_c06_weyl_surface_deficit(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for D in (1, 2, 3):
        for p in (100.0, 200.0, 400.0):
            ref = weyl_surface_term(D, p, 1.0)
            worst = max(worst, abs(integrate_friedel_deficit(D, 1.0, p * p) / ref - 1.0))
    report(capsys, 6, "integrated drho_plus vs surface term, D=1,2,3 x 3 energies", worst, 1e-2,
           time.perf_counter() - t0, 30.0)


def test_c07_local_virial_theorem(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for model in (PotentialModel.box1d(math.pi), PotentialModel.harmonic(1.0)):
        for N in (20, 40):
            worst = max(worst, lvt_residual(model, N).max_rel)
    report(capsys, 7, "LVT interior max residual, box and oscillator, N in {20,40}", worst, 0.15,
           time.perf_counter() - t0, 10.0)


def test_c08_tf_functional_quartic(capsys):
    t0 = time.perf_counter()
    model = PotentialModel.quartic2d(0.6)
    N = 632
    lam_t = smooth_fermi_level(model, N, "tf").lam
    spectrum = solve_spectrum(model, N // 2 + 20)
    sch = make_scheme(spectrum, N)
    s = np.linspace(0.0, 2.0, 801)
    pts = np.stack([s, s], axis=-1)
    rho, tau = density(spectrum, sch, pts, "rho"), density(spectrum, sch, pts, "tau")
    res = tf_functional_check(rho, tau, 2, model=model, lam=lam_t)
    exact = tf_functional_check(DensityField(pts, rho_tf(model, lam_t, pts), "rho"),
                                DensityField(pts, tau_tf(model, lam_t, pts), "tau"), 2, model=model, lam=lam_t)
    exact_err = float(np.max(np.abs(exact.residual.values)) / np.max(np.abs(exact.tau_tf)))
    seconds = time.perf_counter() - t0
    assert spectrum.max_shift < 1e-6
    assert exact_err <= 1e-12
    report(capsys, 8, f"quartic N={N} diagonal cut, interior RMS(tau - tau_TF[rho]) / RMS(tau)"
           f" (TF-input residual {exact_err:.1e})", res.rms_rel, 0.05, seconds, 600.0)


def _symbolic_density(model, n_levels):
    x = sp.symbols("x", real=True)
    if model.kind == "box1d":
        L = sp.pi
        orbitals = [sp.sqrt(2 / L) * sp.sin(n * sp.pi * x / L) for n in range(1, n_levels + 1)]
    else:
        orbitals = [sp.exp(-x**2 / 2) * sp.hermite(n, x) / sp.sqrt(2**n * sp.factorial(n) * sp.sqrt(sp.pi))
                    for n in range(n_levels)]
    rho = 2 * sum(phi**2 for phi in orbitals)
    return sp.lambdify(x, sp.diff(rho, x, 2), "numpy")


def test_c09_kinetic_identity(capsys):
    t0 = time.perf_counter()
    worst_point, worst_int = 0.0, 0.0
    for model, lo, hi in ((PotentialModel.box1d(math.pi), 0.0, math.pi), (PotentialModel.harmonic(1.0), -9.0, 9.0)):
        N = 20
        spectrum = solve_spectrum(model, N // 2 + 1)
        sch = make_scheme(spectrum, N)
        x = np.linspace(lo, hi, 1001)
        lap = _symbolic_density(model, N // 2)(x)
        diff = density(spectrum, sch, x, "tau1").values - density(spectrum, sch, x, "tau").values
        rhs = model.hbar**2 / (4 * model.mass) * lap
        worst_point = max(worst_point, float(np.max(np.abs(diff - rhs)) / np.max(np.abs(rhs))))
        lim = (0.0, math.pi) if model.kind == "box1d" else (-math.inf, math.inf)
        spec = QuadratureSpec(1e-12, 1e-14)
        i_tau = integrate(lambda t: density(spectrum, sch, np.atleast_1d(t), "tau").values, *lim, spec)[0]
        i_tau1 = integrate(lambda t: density(spectrum, sch, np.atleast_1d(t), "tau1").values, *lim, spec)[0]
        worst_int = max(worst_int, abs(i_tau1 / i_tau - 1.0))
    seconds = time.perf_counter() - t0
    report(capsys, 9, f"tau1 - tau vs (hbar^2/4m) lap(rho), box and oscillator N=20"
           f" (integral mismatch {worst_int:.1e})", max(worst_point, worst_int), 1e-6, seconds, 5.0)


def test_c10_thermodynamic_identities(capsys, box200):
    t0 = time.perf_counter()
    worst = 0.0
    for T in (2.0, 5.0, 20.0):
        h = T * 1e-3

        def F(t):
            return thermo_report(box200, make_scheme(box200, 20, "thermal", temperature=t)).F

        S = thermo_report(box200, make_scheme(box200, 20, "thermal", temperature=T)).S
        worst = max(worst, abs(-(F(T + h) - F(T - h)) / (2 * h) / S - 1.0))
    catalog = [PeriodicOrbit(f"o{i}", lambda E, S0=S0, T0=T0: S0 + T0 * E, lambda E, T0=T0: T0, mu,
                             lambda E, a=a: a)
               for i, (S0, T0, mu, a) in enumerate([(11.0, 1.7, 1, 0.8), (23.0, 3.9, 2, 0.3), (31.0, 0.6, 3, 1.4)])]
    for gap in (0.3, 1.0, 2.5):
        h = gap / 200
        up = modulated_trace_formula(catalog, kernel_pairing(gap + h), 0.4, "dE_bcs")
        down = modulated_trace_formula(catalog, kernel_pairing(gap - h), 0.4, "dE_bcs")
        ep = modulated_trace_formula(catalog, kernel_pairing(gap), 0.4, "dE_p")
        worst = max(worst, abs(gap * (up - down) / (2 * h) / ep - 1.0))
    report(capsys, 10, "S = -dF/dT (box N=20) and dE_p = gap d(dE_BCS)/d(gap) (3-orbit catalog)", worst, 1e-4,
           time.perf_counter() - t0, 5.0)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
