import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from densosc.closed_orbits import MissingOrbitDataError, plus_orbit_catalog, semiclassical_density_sum
from densosc.correlations import (PeriodicOrbit, bcs_energy_via_folding, convolved_level_density,
                                  entropy_via_folding, free_energy_via_folding, harmonic_poisson_catalog,
                                  kernel_pairing, kernel_thermal, modulated_density, modulated_trace_formula,
                                  trace_formula_terms)
from densosc.qm_densities import SpectrumTooShortError, density, make_scheme, thermo_report
from densosc.smooth_tf import smooth_fermi_level
from densosc.specfun import integrate
from densosc.spectra import EnergySpectrum, PotentialModel, solve_spectrum
from densosc.validate import numerical_fourier

KERNELS = [kernel_thermal(0.3), kernel_thermal(4.0), kernel_pairing(0.5), kernel_pairing(3.0)]
IDS = ["T0.3", "T4", "gap0.5", "gap3"]


@pytest.mark.parametrize("k", KERNELS, ids=IDS)
def test_kernel_normalised(k):
    val, _ = integrate(k.evaluate, -math.inf, math.inf)
    assert val == pytest.approx(1.0, abs=1e-10)


@given(E=st.floats(-1e4, 1e4), scale=st.floats(1e-2, 1e2), kind=st.sampled_from(["thermal", "pairing"]))
def test_kernel_even_and_positive(E, scale, kind):
    k = kernel_thermal(scale) if kind == "thermal" else kernel_pairing(scale)
    assert k.evaluate(E) == k.evaluate(-E)
    assert k.evaluate(E) >= 0.0


@pytest.mark.parametrize("k", KERNELS, ids=IDS)
def test_fourier_shape(k):
    tau = np.linspace(0.0, 60.0 / k.scale, 400)
    f = k.fourier(tau)
    assert f[0] == 1.0
    assert np.all(np.diff(f) < 0)
    assert f[-1] < 1e-20
    assert k.fourier(-2.0) == k.fourier(2.0)


def test_fourier_special_values():
    T = 0.7
    assert kernel_thermal(T).fourier(1.0 / (math.pi * T)) == pytest.approx(1.0 / math.sinh(1.0), rel=1e-15)
    assert kernel_thermal(T).fourier(1.0 / (math.pi * T)) == pytest.approx(0.850918, abs=1e-6)
    assert kernel_pairing(2.0).fourier(0.5e-6) == pytest.approx(1.0, abs=1e-10)
    assert kernel_thermal(1.0).fourier(1e4) == 0.0


@pytest.mark.parametrize("k", KERNELS, ids=IDS)
def test_fourier_against_mpmath(k):
    for tau in (0.37 / k.scale, 2.9 / k.scale, 11.0 / k.scale):
        f = lambda e: float(k.evaluate(float(e))) * mpmath.cos(tau * e)
        ref = 2 * mpmath.quadosc(f, [0, mpmath.inf], omega=tau)
        assert k.fourier(tau) == pytest.approx(float(ref), abs=1e-10)


@pytest.mark.parametrize("k", KERNELS, ids=IDS)
def test_numerical_fourier_helper(k):
    taus = np.linspace(0.0, 20.0 / k.scale, 50)
    err = max(abs(numerical_fourier(k, t) - k.fourier(t)) for t in taus)
    assert err <= 1e-6


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
def test_kernel_domain(bad):
    with pytest.raises(ValueError):
        kernel_thermal(bad)
    with pytest.raises(ValueError):
        kernel_pairing(bad)


def test_convolved_single_level():
    sp = EnergySpectrum.from_levels([2.5])
    assert convolved_level_density(sp, kernel_thermal(0.4), 2.5) == pytest.approx(1 / 1.6, rel=1e-15)
    assert convolved_level_density(sp, kernel_pairing(0.4), 2.5) == pytest.approx(1 / 0.8, rel=1e-15)


def test_paired_level_density_formula():
    sp = EnergySpectrum.from_levels([1.0, 2.0, 2.0, 5.0])
    gap, E = 0.7, np.array([0.3, 1.9, 4.0])
    ref = [sum(gap**2 / (2 * ((e - en) ** 2 + gap**2) ** 1.5) for en in [1.0, 2.0, 2.0, 5.0]) for e in E]
    assert np.allclose(convolved_level_density(sp, kernel_pairing(gap), E), ref, rtol=1e-14)


def test_equally_spaced_flat():
    sp = EnergySpectrum.from_levels(np.arange(0.0, 2000.0))
    E = np.linspace(900.0, 1100.0, 37)
    assert np.allclose(convolved_level_density(sp, kernel_thermal(2.0), E), 1.0, rtol=1e-2)


def test_convolved_spectrum_too_short(box_spectrum):
    with pytest.raises(SpectrumTooShortError):
        convolved_level_density(box_spectrum, kernel_thermal(5.0), box_spectrum.energies[-1])
    assert convolved_level_density(box_spectrum, kernel_thermal(5.0), 100.0) > 0


@pytest.mark.parametrize("T", [1.0, 5.0, 20.0])
def test_free_energy_dual(box_spectrum, T):
    sch = make_scheme(box_spectrum, 20, "thermal", temperature=T)
    direct = thermo_report(box_spectrum, sch).F
    assert free_energy_via_folding(box_spectrum, T, sch.lam) == pytest.approx(direct, rel=1e-8)


def test_free_energy_limits():
    sp = EnergySpectrum.from_levels([1.0, 2.0, 3.0, 10.0])
    assert free_energy_via_folding(sp, 1e-3, 2.5) == pytest.approx(2 * (1.0 + 2.0), rel=1e-12)
    single = EnergySpectrum.from_levels([-40.0])
    assert free_energy_via_folding(single, 0.5, 0.0) == pytest.approx(-80.0, rel=1e-12)


@pytest.mark.parametrize("gap", [1.0, 3.0])
def test_bcs_energy_dual(box_spectrum, gap):
    sch = make_scheme(box_spectrum, 20, "bcs", gap=gap)
    direct = thermo_report(box_spectrum, sch).E_bcs
    assert bcs_energy_via_folding(box_spectrum, gap, sch.lam, sch.window) == pytest.approx(direct, rel=1e-8)


def test_bcs_energy_limits(box_spectrum):
    e0 = thermo_report(box_spectrum, make_scheme(box_spectrum, 20)).energy
    sch = make_scheme(box_spectrum, 20, "bcs", gap=1e-5)
    assert bcs_energy_via_folding(box_spectrum, 1e-5, sch.lam, sch.window) == pytest.approx(e0, rel=1e-8)
    single = EnergySpectrum.from_levels([3.0])
    gap = 0.8
    # v^2 = 1/2 and u v = 1/2 at E_n = lam, spin 2
    expected = 2 * (3.0 * 0.5 - gap * 0.5)
    assert bcs_energy_via_folding(single, gap, 3.0, (-10.0, 10.0)) == pytest.approx(expected, rel=1e-13)


def test_bcs_folding_window_must_fit(box_spectrum):
    short = solve_spectrum(PotentialModel.box1d(math.pi), 12)
    with pytest.raises(SpectrumTooShortError):
        bcs_energy_via_folding(short, 3.0, 110.0, (50.0, 170.0))


@pytest.mark.parametrize("T", [2.0, 5.0])
def test_entropy_from_folding(box_spectrum, T):
    S = thermo_report(box_spectrum, make_scheme(box_spectrum, 20, "thermal", temperature=T)).S
    assert entropy_via_folding(box_spectrum, 20, T) == pytest.approx(S, rel=1e-4)


def linear_orbit(S0, T0, sigma, amp, E0):
    return PeriodicOrbit("lin", lambda E: S0 + (E - E0) * T0, lambda E: T0, sigma, lambda E: amp)


def test_trace_formula_trivia():
    k = kernel_thermal(1.0)
    assert modulated_trace_formula([], k, 3.0) == 0.0
    cat = [linear_orbit(5.0, 0.8, 1, 2.0, 0.0), linear_orbit(9.0, 2.1, 3, 0.5, 0.0)]
    bare = sum(o.amplitude(0.0) * math.cos(o.phase(0.0)) for o in cat)
    assert modulated_trace_formula(cat, kernel_thermal(1e-12), 0.0) == pytest.approx(bare, rel=1e-12)
    with pytest.raises(ValueError):
        modulated_trace_formula(cat, k, 0.0, "dE_bcs")
    with pytest.raises(ValueError):
        modulated_trace_formula(cat, kernel_pairing(1.0), 0.0, "dF")
    with pytest.raises(ValueError):
        modulated_trace_formula(cat, k, 0.0, "dX")
    with pytest.raises(MissingOrbitDataError):
        modulated_trace_formula([PeriodicOrbit("x", lambda E: 1.0, lambda E: 1.0, 0, None)], k, 0.0)


@pytest.mark.parametrize("k", [kernel_thermal(0.6), kernel_pairing(0.4)], ids=["thermal", "pairing"])
@pytest.mark.parametrize("T0", [0.5, 3.0])
def test_stationary_phase_exact_for_linear_action(k, T0):
    E0, amp, sigma, S0 = 1.3, 0.9, 2, 7.0
    orb = linear_orbit(S0, T0, sigma, amp, E0)
    # convolution of A cos(S(E')/hbar - pi sigma/2) with the kernel, done by mpmath
    f = lambda u: float(k.evaluate(float(u))) * amp * mpmath.cos(orb.phase(E0 - float(u)))
    ref = mpmath.quadosc(f, [-mpmath.inf, 0], omega=T0) + mpmath.quadosc(f, [0, mpmath.inf], omega=T0)
    got = modulated_trace_formula([orb], k, E0)
    assert got == pytest.approx(float(ref), abs=1e-10)


@pytest.mark.parametrize("T", [0.1, 0.25, 0.5])
def test_oscillator_trace_formula(T):
    k = kernel_thermal(T)
    cat = harmonic_poisson_catalog(1.0, kmax=80)
    E = np.linspace(10.0, 30.0, 81)
    levels = np.arange(500) + 0.5
    folded = k.evaluate(E[:, None] - levels).sum(axis=1) - 1.0
    trace = np.array([modulated_trace_formula(cat, k, e) for e in E])
    assert np.max(np.abs(folded - trace)) <= 1e-6


def test_oscillator_trace_term_by_term():
    # each Poisson term 2/(hbar w) cos(2 pi k E/(hbar w) - pi k) convolved by quadrature
    k = kernel_thermal(0.25)
    cat = harmonic_poisson_catalog(1.0, kmax=4)
    for E in (10.0, 17.3, 30.0):
        terms = trace_formula_terms(cat, k, E)
        for j, orb in enumerate(cat, start=1):
            f = lambda e: k.evaluate(E - e) * 2.0 * np.cos(2 * math.pi * j * e - math.pi * j)
            ref, _ = integrate(f, E - 40.0, E + 40.0)
            assert terms[j - 1] == pytest.approx(ref, abs=1e-9)


def test_pair_energy_is_gap_derivative():
    cat = [linear_orbit(11.0, 1.7, 1, 0.8, 0.0), linear_orbit(23.0, 3.9, 2, 0.3, 0.0),
           linear_orbit(31.0, 0.6, 3, 1.4, 0.0)]
    for gap in (0.2, 0.9, 2.5):
        h = gap / 200
        plus = modulated_trace_formula(cat, kernel_pairing(gap + h), 0.0, "dE_bcs")
        minus = modulated_trace_formula(cat, kernel_pairing(gap - h), 0.0, "dE_bcs")
        ep = modulated_trace_formula(cat, kernel_pairing(gap), 0.0, "dE_p")
        assert gap * (plus - minus) / (2 * h) == pytest.approx(ep, rel=1e-4)


def test_modulated_density_limits():
    model = PotentialModel.billiard(2)
    r = np.linspace(0.2, 0.999, 300)
    cat = plus_orbit_catalog(model)
    bare = semiclassical_density_sum(cat, 900.0, r).values
    cold = modulated_density(cat, kernel_thermal(1e-12), 900.0, r).values
    assert np.allclose(cold, bare, rtol=1e-12, atol=0)
    hot = modulated_density(cat, kernel_thermal(50.0), 900.0, r).values
    ratio = hot / bare
    # short orbits near the wall keep their weight, long ones are damped
    assert ratio[-1] > 0.99 and ratio[0] < 0.2
    from densosc.closed_orbits import ClosedOrbit, OrbitCatalog
    no_period = OrbitCatalog(model, lambda lam, c: [ClosedOrbit("x", np.ones_like(c), None, 0, np.ones_like(c))])
    with pytest.raises(MissingOrbitDataError):
        modulated_density(no_period, kernel_thermal(1.0), 900.0, r)


@pytest.mark.parametrize("N, T", [(20, 5.0), (20, 10.0), (40, 10.0), (40, 20.0)])
def test_box_thermal_damping(box, box_spectrum, N, T):
    lam_t = smooth_fermi_level(box, N).lam
    p = math.sqrt(lam_t)
    x = np.linspace(math.pi / 2 - 0.3, math.pi / 2 + 0.3, 401)

    def amplitude(values):
        basis = np.c_[np.ones_like(x), np.cos(2 * p * x), np.sin(2 * p * x)]
        c = np.linalg.lstsq(basis, values, rcond=None)[0]
        return math.hypot(c[1], c[2])

    quantum = amplitude(density(box_spectrum, make_scheme(box_spectrum, N, "thermal", temperature=T), x).values)
    semiclassical = amplitude(modulated_density(plus_orbit_catalog(box), kernel_thermal(T), lam_t, x).values)
    assert quantum / semiclassical == pytest.approx(1.0, abs=0.1)
