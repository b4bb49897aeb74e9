"""Exact quantum densities and thermodynamic sums for N fermions.

All particle counts carry the spin factor 2: N = 2 sum_n d_n occ_n with d_n
the orbital degeneracy of level n. This holds for the BCS scheme as well,
where each orbital state and its time-reversed partner form one pair.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .spectra import TERMS, evaluate_potential

OCC_CUTOFF = 1e-14
TAIL_TOL = 1e-10


class SpectrumTooShortError(RuntimeError):
    pass


@dataclass(frozen=True)
class OccupationScheme:
    """Occupation rule. ``partial`` fills an open shell sitting exactly at lam.

    ``window`` (BCS only) is an energy interval (lo, hi): levels below lo are
    fully occupied and unpaired, levels above hi are empty.
    """

    kind: str
    lam: float
    temperature: float | None = None
    gap: float | None = None
    partial: float = 1.0
    window: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "thermal", "bcs"):
            raise ValueError(f"unknown occupation scheme {self.kind!r}")
        if self.kind == "thermal" and not (self.temperature and self.temperature > 0):
            raise ValueError("thermal scheme needs T > 0")
        if self.kind == "bcs" and not (self.gap and self.gap > 0):
            raise ValueError("bcs scheme needs a gap > 0")


def _quasiparticle(scheme, E):
    x = scheme.lam - np.asarray(E, dtype=float)
    return x, np.hypot(x, scheme.gap)


def _bcs_in_window(scheme, E):
    E = np.asarray(E, dtype=float)
    if scheme.window is None:
        return np.ones(E.shape, bool), np.zeros(E.shape, bool)
    lo, hi = scheme.window
    return (E >= lo) & (E <= hi), E < lo


def occupation(scheme, E):
    """Occupation fraction of a single-particle state of energy E (no spin factor)."""
    E = np.asarray(E, dtype=float)
    if scheme.kind == "zero":
        tol = 1e-12 * max(1.0, abs(scheme.lam))
        occ = np.where(E < scheme.lam - tol, 1.0, 0.0)
        return np.where(np.abs(E - scheme.lam) <= tol, scheme.partial, occ)
    if scheme.kind == "thermal":
        return expit((scheme.lam - E) / scheme.temperature)
    x, qp = _quasiparticle(scheme, E)
    # v^2 = (1 + x/qp)/2, written without cancellation for x < 0
    v2 = np.where(x >= 0, 0.5 * (1.0 + x / qp), scheme.gap**2 / (2.0 * qp * (qp + np.abs(x))))
    inside, below = _bcs_in_window(scheme, E)
    return np.where(inside, v2, np.where(below, 1.0, 0.0))


def pair_amplitude(scheme, E):
    """u_n v_n = gap / (2 qp) inside the BCS window, 0 outside."""
    x, qp = _quasiparticle(scheme, E)
    inside, _ = _bcs_in_window(scheme, E)
    return np.where(inside, scheme.gap / (2.0 * qp), 0.0)


def _tail_bound(spectrum, scheme):
    """Estimated particle number carried by levels beyond the computed ones."""
    if spectrum.complete or scheme.kind != "thermal":
        return 0.0
    E = spectrum.energies
    occ_last = float(occupation(scheme, E[-1]))
    # local state density over the upper fifth of the spectrum
    j = max(0, int(0.8 * len(E)) - 1)
    span = max(E[-1] - E[j], 1e-300)
    dos = spectrum.degeneracies[j:].sum() / span
    return 2.0 * 2.0 * dos * scheme.temperature * occ_last + 2.0 * spectrum.degeneracies[-1] * occ_last


def _check_tail(spectrum, scheme):
    if spectrum.complete or scheme.kind != "thermal":
        return 0.0
    occ_last = float(occupation(scheme, spectrum.energies[-1]))
    bound = _tail_bound(spectrum, scheme)
    if occ_last > OCC_CUTOFF or bound > TAIL_TOL:
        raise SpectrumTooShortError(
            f"last level still occupied ({occ_last:.2e}), tail bound {bound:.2e}; compute more levels")
    return bound


def particle_number(spectrum, scheme):
    return 2.0 * math.fsum(spectrum.degeneracies * occupation(scheme, spectrum.energies))


def _zero_t_level(spectrum, N):
    cum = 2 * np.cumsum(spectrum.degeneracies)
    k = int(np.searchsorted(cum, N))  # first level with cum >= N
    if k >= len(cum):
        raise SpectrumTooShortError(f"spectrum holds only {cum[-1]} particles, need {N}")
    filled_below = cum[k - 1] if k > 0 else 0
    if cum[k] == N:
        if k + 1 >= len(cum):
            raise SpectrumTooShortError("need one level above the Fermi level")
        return 0.5 * (spectrum.energies[k] + spectrum.energies[k + 1]), 1.0
    return float(spectrum.energies[k]), (N - filled_below) / (2.0 * spectrum.degeneracies[k])


def _check_n(N):
    if N < 2 or N % 2:
        raise ValueError(f"N must be even and >= 2, got {N}")


def bcs_window(spectrum, N, gap, width=None):
    """Pairing window [lam0 - W, lam0 + W] around the unpaired Fermi level (W = 20 gap)."""
    width = 20.0 * gap if width is None else width
    lam0, _ = _zero_t_level(spectrum, N)
    if not spectrum.complete and spectrum.energies[-1] <= lam0 + width:
        raise SpectrumTooShortError("spectrum does not extend past the pairing window")
    return (lam0 - width, lam0 + width)


def fix_fermi_level(spectrum, kind, N, temperature=None, gap=None, window=None):
    """Fermi energy lam with 2 sum d_n occ_n = N.

    Zero temperature returns the gap midpoint for closed shells and the shell
    energy itself for an open shell (see :func:`make_scheme`).
    """
    _check_n(N)
    if kind == "zero":
        return _zero_t_level(spectrum, N)[0]
    E = spectrum.energies
    if kind == "thermal":
        T = temperature

        def excess(lam):
            return particle_number(spectrum, OccupationScheme("thermal", lam, temperature=T)) - N

        lo, hi = E[0] - 40.0 * T, E[-1]
    elif kind == "bcs":
        if window is None:
            window = bcs_window(spectrum, N, gap)

        def excess(lam):
            return particle_number(spectrum, OccupationScheme("bcs", lam, gap=gap, window=window)) - N

        lo, hi = window[0] - 1e3 * gap, window[1] + 1e3 * gap
    else:
        raise ValueError(f"unknown scheme kind {kind!r}")
    if excess(lo) > 0 or excess(hi) < 0:
        raise SpectrumTooShortError(f"cannot bracket the Fermi level for N = {N}")
    lam = brentq(excess, lo, hi, xtol=1e-14 * max(1.0, abs(hi)), rtol=1e-15, maxiter=500)
    scheme = OccupationScheme(kind, lam, temperature=temperature, gap=gap, window=window)
    _check_tail(spectrum, scheme)
    return lam


def make_scheme(spectrum, N, kind="zero", temperature=None, gap=None, window_width=None):
    """OccupationScheme with its Fermi level fixed by N."""
    _check_n(N)
    if kind == "zero":
        lam, partial = _zero_t_level(spectrum, N)
        return OccupationScheme("zero", lam, partial=partial)
    if kind == "thermal":
        lam = fix_fermi_level(spectrum, "thermal", N, temperature=temperature)
        return OccupationScheme("thermal", lam, temperature=temperature)
    window = bcs_window(spectrum, N, gap, window_width)
    lam = fix_fermi_level(spectrum, "bcs", N, gap=gap, window=window)
    return OccupationScheme("bcs", lam, gap=gap, window=window)


# --------------------------------------------------------------------------
# densities

@dataclass
class DensityField:
    coords: np.ndarray
    values: np.ndarray
    which: str
    meta: dict = field(default_factory=dict)
    weights: np.ndarray | None = None

    def integral(self):
        if self.weights is None:
            raise ValueError("field carries no quadrature weights")
        return float(np.dot(self.weights, self.values))

    def same_grid(self, other):
        return self.coords.shape == other.coords.shape and np.allclose(self.coords, other.coords)

    def __sub__(self, other):
        if not self.same_grid(other):
            raise ValueError("grid mismatch")
        return DensityField(self.coords, self.values - other.values, self.which, dict(self.meta), self.weights)

    def to_csv(self, path=None, columns=None):
        """CSV with a commented header line (model, N, scheme, lam) and 17-digit floats."""
        buf = io.StringIO()
        meta = ", ".join(f"{k}={v}" for k, v in self.meta.items())
        buf.write(f"# {meta}\n")
        w = csv.writer(buf, lineterminator="\n")
        c = self.coords if self.coords.ndim > 1 else self.coords[:, None]
        if columns is None:
            columns = [f"x{i}" for i in range(c.shape[1])] + [self.which]
        w.writerow(columns)
        for row, v in zip(c, self.values):
            w.writerow([f"{x:.17g}" for x in row] + [f"{v:.17g}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _coords_of(grid):
    if hasattr(grid, "coords") and callable(grid.coords):
        return grid.coords(), grid.weights()
    return np.asarray(grid, dtype=float), None


def density(spectrum, scheme, grid, which="rho"):
    """rho, tau or tau1 = 2 sum_n occ_n w_n(r) on a GridSpec or an array of points."""
    if which not in TERMS:
        raise ValueError(f"which must be one of {TERMS}")
    coords, weights = _coords_of(grid)
    tail = _check_tail(spectrum, scheme)
    occ = occupation(scheme, spectrum.energies)
    active = np.nonzero(occ > 1e-17)[0]
    if active.size == 0:
        values = np.zeros(len(coords))
    else:
        n = int(active[-1]) + 1
        terms = spectrum.terms(coords, (which,), n_levels=n)[which]
        values = 2.0 * (occ[:n] @ terms)
    meta = {"model": spectrum.model.kind if spectrum.model else "synthetic",
            "N": round(particle_number(spectrum, scheme), 10),
            "scheme": scheme.kind, "lambda": scheme.lam, "tail_bound": tail}
    return DensityField(coords, values, which, meta, weights)


# --------------------------------------------------------------------------
# global sums

@dataclass
class ThermoReport:
    N: float
    lam: float
    energy: float | None = None
    F: float | None = None
    S: float | None = None
    Omega: float | None = None
    E_bcs: float | None = None
    E_p: float | None = None
    tail_bound: float = 0.0


def entropy_terms(scheme, E):
    """-(nu ln nu + (1-nu) ln(1-nu)) per state, with 0 log 0 = 0."""
    y = np.abs((np.asarray(E, dtype=float) - scheme.lam) / scheme.temperature)
    return np.log1p(np.exp(-y)) + y * expit(-y)


def thermo_report(spectrum, scheme):
    E = spectrum.energies
    d = spectrum.degeneracies
    occ = occupation(scheme, E)
    N = 2.0 * math.fsum(d * occ)
    if scheme.kind == "zero":
        U = 2.0 * math.fsum(d * E * occ)
        return ThermoReport(N, scheme.lam, energy=U, F=U, S=0.0, Omega=U - scheme.lam * N)
    if scheme.kind == "thermal":
        tail = _check_tail(spectrum, scheme)
        U = 2.0 * math.fsum(d * E * occ)
        S = 2.0 * math.fsum(d * entropy_terms(scheme, E))
        F = U - scheme.temperature * S
        return ThermoReport(N, scheme.lam, energy=U, F=F, S=S, Omega=F - scheme.lam * N, tail_bound=tail)
    uv = pair_amplitude(scheme, E)
    kinetic = 2.0 * math.fsum(d * E * occ)
    E_p = -scheme.gap * 2.0 * math.fsum(d * uv)
    return ThermoReport(N, scheme.lam, energy=kinetic, E_bcs=kinetic + E_p, E_p=E_p)
