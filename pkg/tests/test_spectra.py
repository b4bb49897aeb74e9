import itertools
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import eigh_tridiagonal

from densosc.spectra import (EnergySpectrum, GridSpec, OutsideDomainError, PotentialModel, classical_momentum,
                             evaluate_potential, hermite_functions, solve_spectrum)


def quartic_1d_levels(n, half_width=7.0, points=4000):
    """Levels of -1/2 d^2/dx^2 + x^4/2 by finite differences with Richardson extrapolation."""
    def fd(m):
        x = np.linspace(-half_width, half_width, m + 2)[1:-1]
        h = x[1] - x[0]
        diag = 1.0 / h**2 + 0.5 * x**4
        off = np.full(m - 1, -0.5 / h**2)
        return eigh_tridiagonal(diag, off, select="i", select_range=(0, n - 1))[0]
    coarse, fine = fd(points), fd(2 * points + 1)
    return (4.0 * fine - coarse) / 3.0


def test_box_levels(box):
    sp = solve_spectrum(box, 30)
    assert np.allclose(sp.energies, np.arange(1, 31) ** 2, rtol=1e-15)
    assert sp.n_states == 30 and not sp.complete


@pytest.mark.parametrize("omegas", [(1.0,), (1.0, 1.0), (1.0, math.sqrt(2.0)), (0.7, 0.7, 0.7)])
def test_harmonic_levels(omegas):
    sp = solve_spectrum(PotentialModel.harmonic(omegas), 60)
    quanta = itertools.product(range(90), repeat=len(omegas))
    ref = sorted(sum(w * (n + 0.5) for w, n in zip(omegas, q)) for q in quanta)[: sp.n_states]
    states = np.repeat(sp.energies, sp.degeneracies)
    assert np.allclose(states, ref, rtol=1e-13)


def test_isotropic_degeneracy():
    sp = solve_spectrum(PotentialModel.harmonic((1.0, 1.0, 1.0)), 100)
    n = np.rint(sp.energies - 1.5).astype(int)
    assert np.array_equal(sp.degeneracies, (n + 1) * (n + 2) // 2)


def test_disk_levels_against_mpmath():
    sp = solve_spectrum(PotentialModel.billiard(2), 80)
    for e, d, lab in zip(sp.energies[:25], sp.degeneracies, sp.labels):
        m, k, _ = lab[0]
        assert d == (1 if m == 0 else 2)
        assert math.sqrt(e) == pytest.approx(float(mpmath.besseljzero(m, k)), rel=1e-14)


def test_ball_levels_against_mpmath():
    sp = solve_spectrum(PotentialModel.billiard(3), 120)
    for e, d, lab in zip(sp.energies[:15], sp.degeneracies, sp.labels):
        l, k, _ = lab[0]
        assert d == 2 * l + 1
        assert math.sqrt(e) == pytest.approx(float(mpmath.besseljzero(l + 0.5, k)), rel=1e-14)


def test_segment_billiard_is_shifted_box():
    sp = solve_spectrum(PotentialModel.billiard(1, radius=1.0), 10)
    assert np.allclose(sp.energies, (np.arange(1, 11) * math.pi / 2) ** 2)
    x = np.linspace(-1, 1, 11)
    # sin(n pi) at the walls leaves only rounding
    assert np.all(sp.terms(x, ("rho",))["rho"][:, [0, -1]] < 1e-29)


def test_quartic_separable_limit():
    sp = solve_spectrum(PotentialModel.quartic2d(0.0), 40)
    e1 = quartic_1d_levels(12)
    ref = sorted(a + b for a in e1 for b in e1)[:30]
    states = np.repeat(sp.energies, sp.degeneracies)[:30]
    assert np.allclose(states, ref, rtol=1e-8)
    assert states[0] == pytest.approx(1.06036, abs=1e-5)


def test_quartic_converged_and_symmetric():
    sp = solve_spectrum(PotentialModel.quartic2d(0.6), 60)
    assert sp.max_shift < 1e-6
    # C4v symmetry: only 1- and 2-fold levels
    assert set(np.unique(sp.degeneracies)) <= {1, 2}
    big = solve_spectrum(PotentialModel.quartic2d(0.6), 60, ncut=sp.ncut + 30)
    assert np.allclose(big.energies[:20], sp.energies[:20], rtol=1e-7)


def test_quartic_rejects_unbound():
    with pytest.raises(ValueError):
        PotentialModel.quartic2d(1.0)


@pytest.mark.parametrize("model, pts", [
    (PotentialModel.box1d(math.pi), np.linspace(0, math.pi, 4001)),
    (PotentialModel.harmonic(1.0), np.linspace(-12, 12, 4001)),
])
def test_1d_orbitals_normalised(model, pts):
    sp = solve_spectrum(model, 20)
    rho = sp.terms(pts, ("rho",))["rho"]
    w = np.full(pts.size, pts[1] - pts[0])
    w[[0, -1]] *= 0.5
    assert np.allclose(rho @ w, sp.degeneracies, rtol=1e-9)


@pytest.mark.parametrize("dim", [2, 3])
def test_radial_multiplets_normalised(dim):
    model = PotentialModel.billiard(dim)
    sp = solve_spectrum(model, 40)
    grid = GridSpec.line(0.0, 1.0, 4001, dim=dim, radial=True)
    rho = sp.terms(grid.coords(), ("rho",))["rho"]
    assert np.allclose(rho @ grid.weights(), sp.degeneracies, rtol=1e-6)


def _cartesian_sum(sp, level, pts):
    rho = tau1 = 0.0
    for state in sp.labels[level]:
        val, grad, lap = sp.orbital(state, pts)
        rho = rho + np.abs(val) ** 2
        tau1 = tau1 + sp.model.hb2m * np.sum(np.abs(grad) ** 2, axis=-1)
    return rho, tau1


@pytest.mark.parametrize("dim", [2, 3])
def test_radial_terms_match_orbitals(dim):
    sp = solve_spectrum(PotentialModel.billiard(dim), 60)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.55, 0.55, size=(25, dim))
    r = np.linalg.norm(pts, axis=-1)
    terms = sp.terms(r, ("rho", "tau1"))
    for level in range(len(sp)):
        rho, tau1 = _cartesian_sum(sp, level, pts)
        assert np.allclose(terms["rho"][level], rho, rtol=1e-10, atol=1e-12)
        assert np.allclose(terms["tau1"][level], tau1, rtol=1e-9, atol=1e-9)


def test_quartic_terms_match_orbitals():
    sp = solve_spectrum(PotentialModel.quartic2d(0.6), 30)
    pts = np.random.default_rng(2).uniform(-1.5, 1.5, size=(20, 2))
    terms = sp.terms(pts)
    for level in range(len(sp)):
        rho, tau1 = _cartesian_sum(sp, level, pts)
        assert np.allclose(terms["rho"][level], rho, rtol=1e-9, atol=1e-12)
        assert np.allclose(terms["tau1"][level], tau1, rtol=1e-9, atol=1e-10)


def test_hermite_functions_orthonormal():
    xi = np.linspace(-15, 15, 6001)
    psi, dpsi, d2psi = hermite_functions(30, xi)
    w = np.full(xi.size, xi[1] - xi[0])
    gram = (psi * w) @ psi.T
    assert np.allclose(gram, np.eye(31), atol=1e-10)
    assert np.allclose(np.gradient(psi[5], xi), dpsi[5], atol=1e-4)


@given(kappa=st.floats(1.0, 10.0))
def test_quartic_kappa_bound(kappa):
    with pytest.raises(ValueError):
        PotentialModel.quartic2d(kappa)


def test_potential_domain(box):
    with pytest.raises(OutsideDomainError):
        evaluate_potential(box, [4.0])
    with pytest.raises(OutsideDomainError):
        evaluate_potential(PotentialModel.billiard(2), [1.5])
    p = classical_momentum(PotentialModel.harmonic(1.0), 0.5, np.array([0.0, 2.0]))
    assert p[0] == pytest.approx(1.0) and np.isnan(p[1])


@given(n=st.integers(16, 500), length=st.floats(0.1, 50.0))
def test_line_weights_integrate_constant(n, length):
    assert GridSpec.line(0.0, length, n).weights().sum() == pytest.approx(length, rel=1e-12)


def test_radial_weights_give_volume():
    w = GridSpec.line(0.0, 1.0, 2001, dim=3, radial=True).weights()
    assert w.sum() == pytest.approx(4.0 * math.pi / 3.0, rel=1e-6)


def test_spectrum_validation_and_json(box):
    with pytest.raises(ValueError):
        EnergySpectrum([2.0, 1.0], [1, 1])
    with pytest.raises(ValueError):
        EnergySpectrum([1.0], [0])
    synthetic = EnergySpectrum.from_levels([3.0, 1.0], [2, 1])
    assert synthetic.complete and list(synthetic.degeneracies) == [1, 2]
    data = json.loads(solve_spectrum(box, 5).to_json())
    assert [lv["energy"] for lv in data["levels"]] == [1.0, 4.0, 9.0, 16.0, 25.0]
    assert data["model"]["kind"] == "box1d"


def test_spectrum_json_round_trip():
    from densosc.spectra import EnergySpectrum, PotentialModel, solve_spectrum
    sp = solve_spectrum(PotentialModel.billiard(2), 30)
    back = EnergySpectrum.from_json(sp.to_json())
    assert np.array_equal(back.energies, sp.energies)
    assert np.array_equal(back.degeneracies, sp.degeneracies)
    assert back.complete == sp.complete
