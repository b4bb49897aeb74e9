"""Closed-orbit expansions of spatial density oscillations.

Orbit amplitudes are data: besides the billiard "+" orbit (one bounce off the
wall), catalogs are read from JSON files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .specfun import QuadratureSpec, bessel_j_scaled, bessel_j_zeros_below, integrate, integrate_panels
from .smooth_tf import rho_tf_of_p, sphere_surface
from .spectra import classical_momentum, evaluate_potential


class ForbiddenRegionError(ValueError):
    pass


class MissingOrbitDataError(ValueError):
    pass


@dataclass(frozen=True)
class ClosedOrbit:
    """One closed orbit evaluated on a set of points (fields broadcast over them)."""

    label: str
    action: np.ndarray
    period: np.ndarray | None
    morse: int
    amplitude: np.ndarray
    q_factor: np.ndarray | None = None


def phase(orbit, D, hbar=1.0):
    """S/hbar - (pi/2) mu - (pi/4)(D + 1)."""
    return np.asarray(orbit.action) / hbar - 0.5 * math.pi * orbit.morse - 0.25 * math.pi * (D + 1)


# --------------------------------------------------------------------------
# actions

def action_integral(model, lam, path, spec=None):
    """Integral of |p| ds along a piecewise linear path (vertices as rows)."""
    spec = spec or QuadratureSpec(rtol=1e-12, atol=1e-15)
    path = np.asarray(path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    tol = 1e-12 * max(1.0, abs(lam))
    total = 0.0
    for a, b in zip(path[:-1], path[1:]):
        seg = b - a
        length = float(np.linalg.norm(seg))
        if length == 0.0:
            continue
        probe = a + np.linspace(0.0, 1.0, 65)[:, None] * seg
        if np.any(evaluate_potential(model, _fmt(model, probe)) > lam + tol):
            raise ForbiddenRegionError("path enters the classically forbidden region")

        def speed(s, a=a, seg=seg):
            q = a + s[:, None] * seg
            kin = np.maximum(lam - evaluate_potential(model, _fmt(model, q)), 0.0)
            return np.sqrt(2.0 * model.mass * kin)

        val, _ = integrate(speed, 0.0, 1.0, spec)
        total += val * length
    return total


def _fmt(model, q):
    if model.dim == 1:
        return q[:, 0]
    return np.linalg.norm(q, axis=-1) if model.radial else q


# --------------------------------------------------------------------------
# the primitive "+" orbit of spherical billiards

def _fermi_momentum(lam, mass):
    return math.sqrt(2.0 * mass * lam)


def _friedel_raw(D, R, lam, r, mass, hbar):
    nu = 0.5 * D
    p = _fermi_momentum(lam, mass)
    z = 2.0 * (R - r) * p / hbar
    return -rho_tf_of_p(D, p, hbar) * (R / r) ** (nu - 0.5) * bessel_j_scaled(nu, z)


def friedel_plus_density(D, R, lam, r, mass=0.5, hbar=1.0, r_min=None):
    """Density oscillation of the "+" orbit in a D-dimensional spherical billiard.

    Equals -rho_TF exactly at the wall. The (R/r)^(nu - 1/2) factor diverges
    at the centre, so evaluation below ``r_min`` (default 0.05 R) is refused.
    """
    r = np.asarray(r, dtype=float)
    r_min = 0.05 * R if r_min is None else r_min
    if np.any(r <= 0) or np.any(r < r_min):
        raise ValueError(f"friedel_plus_density needs r >= r_min = {r_min}")
    if np.any(r > R):
        raise ValueError("r must not exceed the billiard radius")
    return _friedel_raw(D, R, lam, r, mass, hbar)


def integrate_friedel_deficit(D, R, lam, mass=0.5, hbar=1.0):
    """Particle number carried by the "+" orbit density over the whole billiard.

    The radial integral is done exactly up to the last zero z_max of J_nu
    inside the billiard; beyond it the planar (wall) form of the integrand is
    integrated analytically, using int_0^inf J_nu(z) z^-nu dz =
    sqrt(pi) / (2^nu Gamma(nu + 1/2)).
    """
    nu = 0.5 * D
    p = _fermi_momentum(lam, mass)
    zscale = 2.0 * p / hbar  # z = zscale (R - r)
    zeros = bessel_j_zeros_below(nu, zscale * R)
    if zeros.size == 0:
        raise ValueError("Fermi momentum too small: no oscillation inside the billiard")
    z_max = zeros[-1]
    surf_unit = sphere_surface(D, 1.0)
    spec = QuadratureSpec(rtol=1e-11, atol=1e-14)

    def ball(z):
        r = R - z / zscale
        return _friedel_raw(D, R, lam, r, mass, hbar) * surf_unit * r ** (D - 1) / zscale

    def planar(z):
        return bessel_j_scaled(nu, z)

    edges = np.concatenate([[0.0], zeros])
    inner = integrate_panels(ball, edges, spec)[0]
    planar_part = integrate_panels(planar, edges, spec)[0]
    weber = math.sqrt(math.pi) * math.gamma(nu + 1.0) / math.gamma(nu + 0.5)
    tail = (weber - planar_part) * (-rho_tf_of_p(D, p, hbar)) * sphere_surface(D, R) / zscale
    return inner + tail


def plus_orbit_catalog(model):
    """Catalog of the "+" orbits (one wall bounce) with their asymptotic Bessel amplitude.

    Spherical billiards have one such orbit per point (to the nearest wall);
    in one dimension (box or segment) there is one towards each wall.
    mu = 2 accounts for the Dirichlet reflection.
    """
    if not model.hard_wall:
        raise ValueError("the + orbit catalog needs a hard-wall model")
    D = model.dim
    nu = 0.5 * D

    def orbit(label, lam, dist, scale_r):
        p = _fermi_momentum(lam, model.mass)
        length = 2.0 * dist
        z = length * p / model.hbar
        with np.errstate(divide="ignore"):
            amp = (rho_tf_of_p(D, p, model.hbar) * 2.0**nu * math.gamma(nu + 1.0) * scale_r ** (nu - 0.5)
                   * math.sqrt(2.0 / math.pi) * z ** (-nu - 0.5))
        return ClosedOrbit(label, length * p, length * model.mass / p, 2, amp)

    def generate(lam, coords):
        x = np.asarray(coords, dtype=float)
        if D == 1:
            lo, hi = (0.0, model.length) if model.kind == "box1d" else (-model.radius, model.radius)
            return [orbit("+left", lam, x - lo, 1.0), orbit("+right", lam, hi - x, 1.0)]
        r = np.abs(x)
        R = model.radius
        return [orbit("+", lam, R - r, R / r)]

    return OrbitCatalog(model, generate)


class OrbitCatalog:
    """Generator (lam, coords) -> list of ClosedOrbit, sorted by period."""

    def __init__(self, model, generator):
        self.model = model
        self._generator = generator

    def orbits(self, lam, coords):
        orbits = list(self._generator(lam, coords))
        return sorted(orbits, key=lambda o: float(np.nanmax(o.period)) if o.period is not None else math.inf)

    @classmethod
    def empty(cls, model):
        return cls(model, lambda lam, coords: [])

    @classmethod
    def from_json(cls, model, path_or_text):
        """Catalog file: {"header": {"lambda", "coords"}, "orbits": [{label, S, T, mu, A, Q?}]}."""
        if isinstance(path_or_text, str) and path_or_text.lstrip().startswith("{"):
            data = json.loads(path_or_text)
        else:
            with open(path_or_text) as fh:
                data = json.load(fh)
        header = data["header"]
        grid = np.asarray(header["coords"], dtype=float)
        lam0 = float(header["lambda"])
        recs = data["orbits"]

        def generate(lam, coords):
            coords = np.asarray(coords, dtype=float)
            if not math.isclose(lam, lam0, rel_tol=1e-12):
                raise ValueError(f"catalog sampled at lambda={lam0}, requested {lam}")
            if coords.shape != grid.shape or not np.allclose(coords, grid):
                raise ValueError("catalog sampling grid does not match the requested points")
            out = []
            for rec in recs:
                q = rec.get("Q")
                out.append(ClosedOrbit(rec["label"], np.asarray(rec["S"], float),
                                       np.asarray(rec["T"], float) if "T" in rec else None,
                                       int(rec["mu"]), np.asarray(rec["A"], float),
                                       None if q is None else np.asarray(q, float)))
            return out

        return cls(model, generate)


def catalog_to_json(lam, coords, orbits):
    return json.dumps({
        "header": {"lambda": lam, "coords": np.asarray(coords).tolist()},
        "orbits": [
            {k: v for k, v in {
                "label": o.label, "S": np.broadcast_to(o.action, np.shape(coords)[:1]).tolist(),
                "T": None if o.period is None else np.broadcast_to(o.period, np.shape(coords)[:1]).tolist(),
                "mu": o.morse, "A": np.broadcast_to(o.amplitude, np.shape(coords)[:1]).tolist(),
                "Q": None if o.q_factor is None else np.broadcast_to(o.q_factor, np.shape(coords)[:1]).tolist(),
            }.items() if v is not None}
            for o in orbits
        ],
    })


def _oscillating_sum(orbits, D, hbar, which, weight=None):
    total = 0.0
    for o in orbits:
        term = np.asarray(o.amplitude) * np.cos(phase(o, D, hbar))
        if which == "tau1":
            if o.q_factor is None:
                raise MissingOrbitDataError(f"orbit {o.label!r} has no Q factor")
            term = term * o.q_factor
        if weight is not None:
            term = term * weight(o)
        total = total + term
    return total


def semiclassical_density_sum(catalog, lam, coords, which="rho", period_cutoff=math.inf, weight=None):
    """delta rho, delta tau or delta tau1 summed over the catalog's closed orbits.

    ``weight`` optionally multiplies each orbit term (used for modulation
    factors); orbits whose period exceeds ``period_cutoff`` everywhere are dropped.
    """
    from .qm_densities import DensityField

    model = catalog.model
    coords = np.asarray(coords, dtype=float)
    orbits = [o for o in catalog.orbits(lam, coords)
              if o.period is None or np.nanmin(o.period) <= period_cutoff]
    if orbits:
        total = _oscillating_sum(orbits, model.dim, model.hbar, which, weight)
        values = np.broadcast_to(total, (len(coords),)).astype(float)
    else:
        values = np.zeros(len(coords))
    if which in ("tau", "tau1"):
        p = classical_momentum(model, lam, coords)
        values = values * np.nan_to_num(p, nan=0.0) ** 2 / (2.0 * model.mass)
    return DensityField(coords, values, "d" + which, {"lambda_smooth": lam, "orbits": len(orbits)})


# --------------------------------------------------------------------------
# diagnostics

WALL_Z = 6.0 * math.pi


def interior_mask(model, lam, coords, frac=0.6, wall_z=WALL_Z):
    """Points away from turning points: V <= frac*lam and, for hard walls,
    2 p d / hbar >= wall_z with d the distance to the wall."""
    coords = np.asarray(coords, dtype=float)
    mask = evaluate_potential(model, coords) <= frac * lam
    if model.hard_wall and wall_z:
        p = _fermi_momentum(lam, model.mass)
        if model.kind == "box1d":
            d = np.minimum(coords, model.length - coords)
        elif model.dim == 1 or model.radial:
            d = model.radius - np.abs(coords)
        else:
            d = model.radius - np.linalg.norm(coords, axis=-1)
        mask &= 2.0 * d * p / model.hbar >= wall_z
    return mask


@dataclass
class CheckResult:
    residual: object
    mask: np.ndarray
    max_rel: float
    rms_rel: float


def _ratio(num, den):
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return float(num / den)


def _summary(residual, reference, mask):
    if not np.any(mask):
        raise ValueError("interior window is empty")
    r, ref = residual[mask], reference[mask]
    return (_ratio(np.max(np.abs(r)), np.max(np.abs(ref))),
            _ratio(np.sqrt(np.mean(r**2)), np.sqrt(np.mean(ref**2))))


def lvt_check(dtau, drho, model, lam, frac=0.6, wall_z=WALL_Z):
    """Residual dtau - (lam - V) drho and its interior max/rms relative to dtau."""
    if not dtau.same_grid(drho):
        raise ValueError("grid mismatch between dtau and drho")
    V = evaluate_potential(model, drho.coords)
    res = dtau.values - (lam - V) * drho.values
    mask = interior_mask(model, lam, drho.coords, frac, wall_z)
    field = type(dtau)(dtau.coords, res, "lvt_residual", {"lambda_smooth": lam}, dtau.weights)
    return CheckResult(field, mask, *_summary(res, dtau.values, mask))


def tf_functional_check(rho, tau, D, mass=1.0, hbar=1.0, model=None, lam=None, frac=0.6, wall_z=WALL_Z):
    """Residual tau - tau_TF[rho]; summary over the interior window when a model is given."""
    from .smooth_tf import tau_tf_of_rho

    if not tau.same_grid(rho):
        raise ValueError("grid mismatch between rho and tau")
    tf = tau_tf_of_rho(D, np.maximum(rho.values, 0.0), mass, hbar)
    res = tau.values - tf
    if model is not None and lam is not None:
        mask = interior_mask(model, lam, rho.coords, frac, wall_z)
    else:
        mask = np.ones(len(res), bool)
    field = type(tau)(tau.coords, res, "tf_residual", {}, tau.weights)
    out = CheckResult(field, mask, *_summary(res, tau.values, mask))
    out.tau_tf = tf
    return out


def wall_extrema(r, values, R, lam, mass=0.5, hbar=1.0, count=2, z_min=0.5 * math.pi):
    """Radii of the first ``count`` local extrema of ``values`` seen from the wall inward.

    Grid points closer to the wall than z = 2 (R - r) p / hbar = z_min are
    skipped: there the (R/r)^(nu - 1/2) factor of the "+" orbit formula makes
    a shallow extremum that is not an oscillation.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(values, dtype=float)
    order = np.argsort(-r)
    r, v = r[order], v[order]
    z = 2.0 * (R - r) * _fermi_momentum(lam, mass) / hbar
    dv = np.diff(v)
    found = []
    for i in range(1, len(v) - 1):
        if z[i] < z_min or not np.isfinite(v[i - 1:i + 2]).all():
            continue
        if dv[i - 1] * dv[i] < 0:
            found.append(float(r[i]))
            if len(found) == count:
                break
    return found
