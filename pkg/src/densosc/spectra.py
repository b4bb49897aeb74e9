"""Model potentials, their single-particle spectra and orbital evaluators.

Four model families are supported:

* ``box1d``      -- hard-wall box [0, L]
* ``harmonic``   -- (an)isotropic harmonic oscillator in D dimensions
* ``billiard``   -- spherical billiard of radius R in D = 1, 2, 3
                    (D = 1 is the segment [-R, R])
* ``quartic2d``  -- V = (x^4 + y^4)/2 - kappa x^2 y^2, diagonalised in a
                    harmonic-oscillator product basis

Coordinates passed to evaluators follow one convention per model: 1D models
take a plain array of x values, the 2D/3D billiards take radii (densities are
angle averaged), harmonic and quartic models take Cartesian points of shape
``(n, D)``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar
from scipy.special import sph_harm_y

from .specfun import bessel_j, bessel_j_prime, bessel_j_zeros_below, spherical_jn, spherical_jn_prime

KINDS = ("box1d", "harmonic", "billiard", "quartic2d")


class OutsideDomainError(ValueError):
    pass


class BasisNotConvergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class PotentialModel:
    kind: str
    dim: int
    length: float | None = None
    omegas: tuple | None = None
    radius: float | None = None
    kappa: float | None = None
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.mass <= 0 or self.hbar <= 0:
            raise ValueError("mass and hbar must be positive")
        if self.kind == "box1d":
            if self.dim != 1 or self.length is None or self.length <= 0:
                raise ValueError("box1d needs dim 1 and length > 0")
        elif self.kind == "harmonic":
            if not self.omegas or len(self.omegas) != self.dim or min(self.omegas) <= 0:
                raise ValueError("harmonic needs one positive frequency per dimension")
        elif self.kind == "billiard":
            if self.dim not in (1, 2, 3) or self.radius is None or self.radius <= 0:
                raise ValueError("billiard needs dim in {1,2,3} and radius > 0")
        elif self.kind == "quartic2d":
            if self.dim != 2 or self.kappa is None:
                raise ValueError("quartic2d needs dim 2 and a coupling kappa")
            if self.kappa >= 1.0:
                raise ValueError("quartic2d is not confining for kappa >= 1")

    # units: box and billiards default to hbar^2/2m = 1, the others to hbar = m = 1
    @classmethod
    def box1d(cls, length, mass=0.5, hbar=1.0):
        return cls("box1d", 1, length=float(length), mass=mass, hbar=hbar)

    @classmethod
    def harmonic(cls, omegas, mass=1.0, hbar=1.0):
        omegas = tuple(float(w) for w in np.atleast_1d(omegas))
        return cls("harmonic", len(omegas), omegas=omegas, mass=mass, hbar=hbar)

    @classmethod
    def billiard(cls, dim, radius=1.0, mass=0.5, hbar=1.0):
        return cls("billiard", int(dim), radius=float(radius), mass=mass, hbar=hbar)

    @classmethod
    def quartic2d(cls, kappa, mass=1.0, hbar=1.0):
        return cls("quartic2d", 2, kappa=float(kappa), mass=mass, hbar=hbar)

    @property
    def hb2m(self):
        """hbar^2 / 2m."""
        return self.hbar**2 / (2.0 * self.mass)

    @property
    def hard_wall(self):
        return self.kind in ("box1d", "billiard")

    @property
    def radial(self):
        """True when evaluators take radii rather than Cartesian points."""
        return self.kind == "billiard" and self.dim >= 2

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


def _points(model, r):
    """Cartesian points as an (n, D) array (1D models accept flat arrays)."""
    r = np.asarray(r, dtype=float)
    if model.dim == 1 or model.radial:
        return r
    if r.ndim == 1:
        r = r[None, :]
    if r.shape[-1] != model.dim:
        raise ValueError(f"expected points with {model.dim} components, got shape {r.shape}")
    return r


def evaluate_potential(model, r):
    """V(r). Hard-wall models return 0 inside and raise outside."""
    pts = _points(model, r)
    if model.kind == "box1d":
        if np.any((pts < 0) | (pts > model.length)):
            raise OutsideDomainError("point outside the box [0, L]")
        return np.zeros_like(pts)
    if model.kind == "billiard":
        rad = np.abs(pts) if (model.dim == 1 or model.radial) else np.linalg.norm(pts, axis=-1)
        if np.any(rad > model.radius * (1 + 1e-14)):
            raise OutsideDomainError("point outside the billiard |r| <= R")
        return np.zeros_like(rad)
    if model.kind == "harmonic":
        if model.dim == 1:
            return 0.5 * model.mass * model.omegas[0] ** 2 * pts**2
        w2 = np.asarray(model.omegas) ** 2
        return 0.5 * model.mass * np.sum(w2 * pts**2, axis=-1)
    x, y = pts[..., 0], pts[..., 1]
    return 0.5 * (x**4 + y**4) - model.kappa * x**2 * y**2


def classical_momentum(model, E, r):
    """|p| = sqrt(2m[E - V(r)]); NaN marks classically forbidden points."""
    kin = E - evaluate_potential(model, r)
    kin = np.asarray(kin, dtype=float)
    out = np.full(kin.shape, np.nan)
    ok = kin >= 0
    out[ok] = np.sqrt(2.0 * model.mass * kin[ok])
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# grids

@dataclass(frozen=True)
class GridSpec:
    """Regular grid; ``radial`` grids sample |r| with the D-dimensional measure."""

    dim: int
    ranges: tuple
    points: tuple
    radial: bool = False

    def __post_init__(self):
        if len(self.ranges) != len(self.points):
            raise ValueError("one range per axis required")
        if min(self.points) < 16:
            raise ValueError("at least 16 points per axis")

    @classmethod
    def line(cls, lo, hi, n, dim=1, radial=False):
        return cls(dim, ((float(lo), float(hi)),), (int(n),), radial)

    def axes(self):
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.ranges, self.points)]

    def coords(self):
        axes = self.axes()
        if len(axes) == 1:
            return axes[0]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def weights(self):
        """Trapezoid weights (times S_D r^(D-1) on radial grids)."""
        ws = []
        for ax in self.axes():
            w = np.full(ax.size, ax[1] - ax[0])
            w[0] *= 0.5
            w[-1] *= 0.5
            ws.append(w)
        if len(ws) == 1:
            w = ws[0]
            if self.radial:
                r = self.axes()[0]
                surf = 2.0 * math.pi ** (self.dim / 2) / math.gamma(self.dim / 2)
                w = w * surf * r ** (self.dim - 1)
            return w
        out = ws[0]
        for w in ws[1:]:
            out = np.multiply.outer(out, w)
        return out.ravel()


# --------------------------------------------------------------------------
# spectra

TERMS = ("rho", "tau", "tau1")


class EnergySpectrum:
    """Ordered levels with explicit degeneracies.

    ``labels[i]`` lists the quantum labels of every state in level ``i``.
    Model spectra are truncated (``complete=False``); synthetic spectra built
    with :meth:`from_levels` default to complete.
    """

    def __init__(self, energies, degeneracies, labels=None, model=None, complete=False):
        energies = np.asarray(energies, dtype=float)
        degeneracies = np.asarray(degeneracies, dtype=int)
        if energies.shape != degeneracies.shape:
            raise ValueError("energies and degeneracies differ in length")
        if np.any(np.diff(energies) < 0):
            raise ValueError("energies must be sorted ascending")
        if np.any(degeneracies < 1):
            raise ValueError("degeneracies must be >= 1")
        self.energies = energies
        self.degeneracies = degeneracies
        self.labels = labels if labels is not None else [((i,),) for i in range(len(energies))]
        self.model = model
        self.complete = complete

    @classmethod
    def from_levels(cls, energies, degeneracies=None, complete=True):
        energies = np.asarray(energies, dtype=float)
        order = np.argsort(energies, kind="stable")
        if degeneracies is None:
            degeneracies = np.ones(len(energies), dtype=int)
        degeneracies = np.asarray(degeneracies)[order]
        return cls(energies[order], degeneracies, complete=complete)

    def __len__(self):
        return len(self.energies)

    @property
    def n_states(self):
        return int(self.degeneracies.sum())

    def terms(self, coords, which=TERMS, n_levels=None):
        """Per-level multiplet sums on ``coords`` (no spin factor, no occupation).

        Returns a dict mapping each requested name to an array of shape
        ``(n_levels, n_points)``: ``rho`` sums |phi|^2, ``tau`` sums
        -(hbar^2/2m) phi* lap(phi), ``tau1`` sums (hbar^2/2m) |grad phi|^2.
        """
        raise NotImplementedError("this spectrum carries no orbitals")

    def level_terms(self, i, coords, which=TERMS):
        full = self.terms(coords, which, n_levels=i + 1)
        return {k: v[i] for k, v in full.items()}

    def orbital(self, state, coords):
        """(value, gradient, laplacian) of one state at Cartesian points."""
        raise NotImplementedError("this spectrum carries no orbitals")

    def to_json(self):
        return json.dumps(
            {
                "model": self.model.to_dict() if self.model is not None else None,
                "complete": bool(self.complete),
                "levels": [
                    {"energy": float(e), "degeneracy": int(d), "labels": [list(s) for s in lab]}
                    for e, d, lab in zip(self.energies, self.degeneracies, self.labels)
                ],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text):
        """Energies, degeneracies and labels only; orbitals are not restored."""
        data = json.loads(text)
        lv = data["levels"]
        return cls(np.array([v["energy"] for v in lv], dtype=float), np.array([v["degeneracy"] for v in lv]),
                 labels=[tuple(tuple(s) for s in v["labels"]) for v in lv], complete=data.get("complete", False))


def _as_level_count(n_levels, total):
    return total if n_levels is None else min(n_levels, total)


class BoxSpectrum(EnergySpectrum):
    """Hard-wall box [x0, x0 + L] with sin orbitals (also the D = 1 billiard)."""

    def __init__(self, model, count, x0=0.0, length=None):
        self.x0 = x0
        self.width = model.length if length is None else length
        n = np.arange(1, count + 1)
        energies = model.hb2m * (n * math.pi / self.width) ** 2
        super().__init__(energies, np.ones(count, int), [((int(k),),) for k in n], model)

    def _k(self, n):
        return n * math.pi / self.width

    def orbital(self, state, coords):
        (n,) = state
        x = np.asarray(coords, dtype=float) - self.x0
        k = self._k(n)
        amp = math.sqrt(2.0 / self.width)
        val = amp * np.sin(k * x)
        return val, amp * k * np.cos(k * x), -k * k * val

    def terms(self, coords, which=TERMS, n_levels=None):
        nl = _as_level_count(n_levels, len(self))
        x = np.asarray(coords, dtype=float) - self.x0
        n = np.arange(1, nl + 1)[:, None]
        k = n * math.pi / self.width
        s2 = (2.0 / self.width) * np.sin(k * x) ** 2
        out = {}
        if "rho" in which:
            out["rho"] = s2
        if "tau" in which:
            out["tau"] = self.model.hb2m * k * k * s2
        if "tau1" in which:
            out["tau1"] = self.model.hb2m * k * k * (2.0 / self.width) * np.cos(k * x) ** 2
        return out


def hermite_functions(nmax, xi):
    """Normalised Hermite functions psi_0..psi_nmax(xi) and their derivatives.

    Returns (psi, dpsi, d2psi), each of shape (nmax + 1, len(xi)).
    """
    xi = np.asarray(xi, dtype=float)
    psi = np.zeros((nmax + 2, xi.size))
    psi[0] = math.pi**-0.25 * np.exp(-0.5 * xi**2)
    if nmax + 1 >= 1:
        psi[1] = math.sqrt(2.0) * xi * psi[0]
    for n in range(1, nmax + 1):
        psi[n + 1] = math.sqrt(2.0 / (n + 1)) * xi * psi[n] - math.sqrt(n / (n + 1)) * psi[n - 1]
    n = np.arange(nmax + 1)[:, None]
    dpsi = np.sqrt(n / 2.0) * np.vstack([np.zeros((1, xi.size)), psi[: nmax]]) - np.sqrt((n + 1) / 2.0) * psi[1 : nmax + 2]
    d2psi = (xi**2 - (2 * n + 1)) * psi[: nmax + 1]
    return psi[: nmax + 1], dpsi, d2psi


class _ProductBasisMixin:
    """Shared evaluator for states expanded in 1D harmonic-oscillator functions."""

    # subclasses provide: self.lengths (per-axis oscillator lengths),
    # self._state_table -> list over levels of (quanta array (S, B, D), coeffs (S, B))

    def _tables(self, pts):
        nmax = self._nmax
        tabs = []
        for ax, b in enumerate(self.lengths):
            psi, dpsi, d2psi = hermite_functions(nmax, pts[:, ax] / b)
            tabs.append((psi / math.sqrt(b), dpsi / b**1.5, d2psi / b**2.5))
        return tabs

    def _eval_states(self, quanta, coeffs, tabs):
        """Values, gradients (D, S, P) and laplacians for expanded states."""
        D = len(tabs)
        # basis products for each axis
        val_b = np.ones((quanta.shape[0], tabs[0][0].shape[1]))
        per_axis = []
        for ax in range(D):
            idx = quanta[:, ax]
            per_axis.append((tabs[ax][0][idx], tabs[ax][1][idx], tabs[ax][2][idx]))
            val_b = val_b * per_axis[ax][0]
        value = coeffs @ val_b
        grads = []
        lap_b = np.zeros_like(val_b)
        for ax in range(D):
            others = np.ones_like(val_b)
            for bx in range(D):
                if bx != ax:
                    others = others * per_axis[bx][0]
            grads.append(coeffs @ (per_axis[ax][1] * others))
            lap_b += per_axis[ax][2] * others
        return value, np.array(grads), coeffs @ lap_b

    def _level_states(self, i):
        raise NotImplementedError

    def terms(self, coords, which=TERMS, n_levels=None):
        pts = _points(self.model, coords)
        if pts.ndim == 1:
            pts = pts[:, None]
        nl = _as_level_count(n_levels, len(self))
        out = {k: np.zeros((nl, pts.shape[0])) for k in which}
        for start in range(0, pts.shape[0], 2048):
            chunk = pts[start : start + 2048]
            tabs = self._tables(chunk)
            for i in range(nl):
                quanta, coeffs = self._level_states(i)
                val, grad, lap = self._eval_states(quanta, coeffs, tabs)
                sl = slice(start, start + chunk.shape[0])
                if "rho" in which:
                    out["rho"][i, sl] = np.sum(val**2, axis=0)
                if "tau" in which:
                    out["tau"][i, sl] = -self.model.hb2m * np.sum(val * lap, axis=0)
                if "tau1" in which:
                    out["tau1"][i, sl] = self.model.hb2m * np.sum(grad**2, axis=(0, 1))
        return out

    def orbital(self, state, coords):
        pts = _points(self.model, coords)
        flat = pts.ndim == 1
        if flat:
            pts = pts[:, None]
        quanta, coeffs = self._state_expansion(state)
        val, grad, lap = self._eval_states(quanta, coeffs[None, :], self._tables(pts))
        grad = grad[:, 0, :].T
        if flat:
            grad = grad[:, 0]
        return val[0], grad, lap[0]


class HarmonicSpectrum(_ProductBasisMixin, EnergySpectrum):
    def __init__(self, model, count):
        w = np.asarray(model.omegas)
        hw = model.hbar * w
        # start from the smooth count E^D / (D! prod(hbar w)) and enlarge until `count` states fit
        D = len(hw)
        ecut = hw.sum() * 0.5 + max(hw.min(), (count * math.factorial(D) * np.prod(hw)) ** (1.0 / D))
        while True:
            ranges = [range(int((ecut - 0.5 * hw.sum()) / h) + 1) for h in hw]
            states = np.array(list(itertools.product(*ranges)), dtype=int).reshape(-1, len(hw))
            en = states @ hw + 0.5 * hw.sum()
            keep = en <= ecut * (1 + 1e-12)
            if keep.sum() >= count:
                break
            ecut *= 1.25
        states, en = states[keep], en[keep]
        order = np.lexsort((*states.T[::-1], en))
        states, en = states[order], en[order]
        energies, degs, labels = [], [], []
        scale = hw.max()
        for e, s in zip(en, states):
            if energies and abs(e - energies[-1]) <= 1e-10 * scale:
                degs[-1] += 1
                labels[-1].append(tuple(int(v) for v in s))
            else:
                energies.append(e)
                degs.append(1)
                labels.append([tuple(int(v) for v in s)])
        super().__init__(energies, degs, [tuple(l) for l in labels], model)
        self.lengths = [math.sqrt(model.hbar / (model.mass * wi)) for wi in w]
        self._nmax = int(states.max()) + 1

    def _level_states(self, i):
        quanta = np.array(self.labels[i], dtype=int)
        return quanta, np.eye(len(quanta))

    def _state_expansion(self, state):
        return np.array([state], dtype=int), np.ones(1)


class DiskSpectrum(EnergySpectrum):
    """2D circular billiard: E = (hbar^2/2m) (j_mk / R)^2, degeneracy 2 for m > 0."""

    def __init__(self, model, count):
        R = model.radius
        zmax = 2.0 * math.sqrt(count) + 8.0
        while True:
            levels = []
            m = 0
            while True:
                zeros = bessel_j_zeros_below(m, zmax)
                if zeros.size == 0:
                    break
                for k, z in enumerate(zeros, start=1):
                    levels.append((z, m, k))
                m += 1
            n_states = sum(1 if m == 0 else 2 for _, m, _ in levels)
            if n_states >= count:
                break
            zmax *= 1.3
        levels.sort()
        self.zeros = np.array([z for z, _, _ in levels])
        self.m = np.array([m for _, m, _ in levels], dtype=int)
        self.k = np.array([k for _, _, k in levels], dtype=int)
        energies = model.hb2m * (self.zeros / R) ** 2
        degs = np.where(self.m == 0, 1, 2)
        labels = [((int(m), int(k), "c"),) if m == 0 else ((int(m), int(k), "c"), (int(m), int(k), "s"))
                  for m, k in zip(self.m, self.k)]
        super().__init__(energies, degs, labels, model)
        self._norm = np.array([bessel_j(m + 1, z) for m, z in zip(self.m, self.zeros)]) ** 2

    def terms(self, coords, which=TERMS, n_levels=None):
        R = self.model.radius
        r = np.asarray(coords, dtype=float)
        nl = _as_level_count(n_levels, len(self))
        out = {k: np.zeros((nl, r.size)) for k in which}
        for i in range(nl):
            m, z = int(self.m[i]), self.zeros[i]
            kk = z / R
            pref = self.degeneracies[i] / (math.pi * R * R * self._norm[i])
            x = kk * r
            jm = bessel_j(m, x)
            if "rho" in which:
                out["rho"][i] = pref * jm**2
            if "tau" in which:
                out["tau"][i] = self.energies[i] * pref * jm**2
            if "tau1" in which:
                jp = bessel_j_prime(m, x)
                # m J_m(kr)/r = k (J_{m-1} + J_{m+1}) / 2, finite at r = 0
                ang = 0.0 if m == 0 else 0.5 * kk * (bessel_j(m - 1, x) + bessel_j(m + 1, x))
                out["tau1"][i] = self.model.hb2m * pref * ((kk * jp) ** 2 + ang**2)
        return out

    def orbital(self, state, coords):
        m, k, part = state
        i = int(np.nonzero((self.m == m) & (self.k == k))[0][0])
        R = self.model.radius
        pts = np.atleast_2d(np.asarray(coords, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        th = np.arctan2(pts[:, 1], pts[:, 0])
        kk = self.zeros[i] / R
        norm = math.sqrt((1.0 if m == 0 else 2.0) / (math.pi * R * R * self._norm[i]))
        ang = np.cos(m * th) if part == "c" else np.sin(m * th)
        dang = -m * np.sin(m * th) if part == "c" else m * np.cos(m * th)
        jm = bessel_j(m, kk * r)
        val = norm * jm * ang
        dr = norm * kk * bessel_j_prime(m, kk * r) * ang
        # (1/r) d/dtheta with J_m(kr)/r = k (J_{m-1}+J_{m+1})/(2m)
        if m == 0:
            dth = np.zeros_like(r)
        else:
            dth = norm * kk * (bessel_j(m - 1, kk * r) + bessel_j(m + 1, kk * r)) / (2 * m) * dang
        gx = dr * np.cos(th) - dth * np.sin(th)
        gy = dr * np.sin(th) + dth * np.cos(th)
        return val, np.stack([gx, gy], axis=-1), -kk * kk * val


class BallSpectrum(EnergySpectrum):
    """3D spherical billiard: zeros of j_l, degeneracy 2l + 1."""

    def __init__(self, model, count):
        R = model.radius
        zmax = 2.0 * count ** (1.0 / 3.0) + 8.0
        while True:
            levels = []
            l = 0
            while True:
                zeros = bessel_j_zeros_below(l + 0.5, zmax)
                if zeros.size == 0:
                    break
                for k, z in enumerate(zeros, start=1):
                    levels.append((z, l, k))
                l += 1
            if sum(2 * l + 1 for _, l, _ in levels) >= count:
                break
            zmax *= 1.3
        levels.sort()
        self.zeros = np.array([z for z, _, _ in levels])
        self.l = np.array([l for _, l, _ in levels], dtype=int)
        self.k = np.array([k for _, _, k in levels], dtype=int)
        energies = model.hb2m * (self.zeros / R) ** 2
        labels = [tuple((int(l), int(k), mm) for mm in range(-l, l + 1)) for l, k in zip(self.l, self.k)]
        super().__init__(energies, 2 * self.l + 1, labels, model)
        # int_0^R j_l(kr)^2 r^2 dr = R^3 j_{l+1}(z)^2 / 2 at a zero of j_l
        self._norm = np.array([0.5 * R**3 * spherical_jn(l + 1, z) ** 2 for l, z in zip(self.l, self.zeros)])

    def terms(self, coords, which=TERMS, n_levels=None):
        R = self.model.radius
        r = np.asarray(coords, dtype=float)
        nl = _as_level_count(n_levels, len(self))
        out = {k: np.zeros((nl, r.size)) for k in which}
        for i in range(nl):
            l, z = int(self.l[i]), self.zeros[i]
            kk = z / R
            pref = (2 * l + 1) / (4.0 * math.pi * self._norm[i])
            x = kk * r
            jl = spherical_jn(l, x)
            if "rho" in which:
                out["rho"][i] = pref * jl**2
            if "tau" in which:
                out["tau"][i] = self.energies[i] * pref * jl**2
            if "tau1" in which:
                jp = spherical_jn_prime(l, x)
                # l(l+1) j_l(kr)^2 / r^2 with j_l(x)/x = (j_{l-1} + j_{l+1}) / (2l+1)
                if l == 0:
                    cent = 0.0
                else:
                    jl_over_x = (spherical_jn(l - 1, x) + spherical_jn(l + 1, x)) / (2 * l + 1)
                    cent = l * (l + 1) * (kk * jl_over_x) ** 2
                out["tau1"][i] = self.model.hb2m * pref * ((kk * jp) ** 2 + cent)
        return out

    def orbital(self, state, coords):
        l, k, mm = state
        i = int(np.nonzero((self.l == l) & (self.k == k))[0][0])
        R = self.model.radius
        pts = np.atleast_2d(np.asarray(coords, dtype=float))
        r = np.linalg.norm(pts, axis=-1)
        theta = np.arccos(np.clip(pts[:, 2] / np.where(r > 0, r, 1.0), -1.0, 1.0))
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        kk = self.zeros[i] / R
        rad_norm = 1.0 / math.sqrt(self._norm[i])
        jl = spherical_jn(l, kk * r) * rad_norm
        djl = kk * spherical_jn_prime(l, kk * r) * rad_norm
        Y = sph_harm_y(l, mm, theta, phi)
        # dY/dtheta = m cot(theta) Y_lm + sqrt((l-m)(l+m+1)) e^{-i phi} Y_{l,m+1}
        up = sph_harm_y(l, mm + 1, theta, phi) if mm < l else 0.0
        sin_t = np.sin(theta)
        dY_t = mm * np.cos(theta) / sin_t * Y + math.sqrt((l - mm) * (l + mm + 1)) * np.exp(-1j * phi) * up
        dY_p = 1j * mm * Y
        val = jl * Y
        g_r = djl * Y
        g_t = jl / r * dY_t
        g_p = jl / (r * sin_t) * dY_p
        ct, st, cp, sp = np.cos(theta), sin_t, np.cos(phi), np.sin(phi)
        gx = g_r * st * cp + g_t * ct * cp - g_p * sp
        gy = g_r * st * sp + g_t * ct * sp + g_p * cp
        gz = g_r * ct - g_t * st
        return val, np.stack([gx, gy, gz], axis=-1), -kk * kk * val


# --------------------------------------------------------------------------
# quartic oscillator, Ritz diagonalisation

def _ho_matrices(ncut, b, mass, hbar, pad=8):
    """1D kinetic, x^2 and x^4 matrices (size ncut+1) in the HO basis of length b."""
    size = ncut + 1 + pad
    n = np.arange(size)
    X = np.zeros((size, size))
    off = b * np.sqrt((n[:-1] + 1) / 2.0)
    X[n[:-1], n[:-1] + 1] = off
    X[n[:-1] + 1, n[:-1]] = off
    X2 = X @ X
    X4 = X2 @ X2
    omega = hbar / (mass * b * b)
    M = ncut + 1
    T = np.diag(hbar * omega * (n[:M] + 0.5)) - 0.5 * mass * omega**2 * X2[:M, :M]
    return T, X2[:M, :M], X4[:M, :M]


def _triangle(ncut):
    nx, ny = np.meshgrid(np.arange(ncut + 1), np.arange(ncut + 1), indexing="ij")
    keep = nx + ny <= ncut
    return nx[keep], ny[keep]


def _quartic_trace(model, ncut, b):
    T, X2, X4 = _ho_matrices(ncut, b, model.mass, model.hbar)
    h1 = np.diag(T) + 0.5 * np.diag(X4)
    x2 = np.diag(X2)
    nx, ny = _triangle(ncut)
    return float(np.sum(h1[nx] + h1[ny] - model.kappa * x2[nx] * x2[ny]))


def optimal_oscillator_length(model, ncut):
    """Oscillator length minimising the trace of the projected Hamiltonian."""
    res = minimize_scalar(lambda lb: _quartic_trace(model, ncut, math.exp(lb)),
                          bounds=(math.log(0.05), math.log(5.0)), method="bounded",
                          options={"xatol": 1e-4})
    return math.exp(res.x)


def _quartic_blocks(model, ncut, b, n_lowest):
    """Lowest eigenpairs of each parity block (px, py)."""
    T, X2, X4 = _ho_matrices(ncut, b, model.mass, model.hbar)
    h1 = T + 0.5 * X4
    nx_all, ny_all = _triangle(ncut)
    out = []
    for px in (0, 1):
        for py in (0, 1):
            sel = (nx_all % 2 == px) & (ny_all % 2 == py)
            nx, ny = nx_all[sel], ny_all[sel]
            same_x = nx[:, None] == nx[None, :]
            same_y = ny[:, None] == ny[None, :]
            H = h1[nx[:, None], nx[None, :]] * same_y + h1[ny[:, None], ny[None, :]] * same_x
            H -= model.kappa * X2[nx[:, None], nx[None, :]] * X2[ny[:, None], ny[None, :]]
            k = min(n_lowest, len(nx))
            vals, vecs = scipy.linalg.eigh(H, subset_by_index=[0, k - 1], driver="evr")
            out.append(((px, py), np.stack([nx, ny], axis=-1), vals, vecs))
    return out


class QuarticSpectrum(_ProductBasisMixin, EnergySpectrum):
    """Ritz spectrum of the coupled quartic oscillator.

    A level counts as converged when enlarging the triangular basis
    n_x + n_y <= ncut to ncut + 2 moves it by less than ``rtol`` (relative).
    """

    def __init__(self, model, count, ncut=None, rtol=1e-6, max_ncut=240, step=8):
        if ncut is None:
            ncut = 8
            while (ncut + 1) * (ncut + 2) // 2 < 8 * count:
                ncut += 2
        while True:
            b = optimal_oscillator_length(model, ncut)
            lo = self._solve(model, ncut, b, count)
            hi = self._solve(model, ncut + 2, b, count)
            n = len(lo[0])
            shift = np.abs(lo[0][:n] - hi[0][:n]) / np.abs(hi[0][:n])
            if np.all(shift < rtol):
                break
            if ncut + step > max_ncut:
                raise BasisNotConvergedError(
                    f"quartic levels not converged at ncut={ncut}: max relative shift {shift.max():.2e}")
            ncut += step
        energies, states = lo
        self.ncut, self.b, self.max_shift = ncut, b, float(shift.max())
        self.lengths = [b, b]
        self._nmax = ncut
        levels, degs, labels, expansions = [], [], [], []
        for e, st in zip(energies, states):
            if levels and abs(e - levels[-1]) <= 1e-8 * abs(e):
                degs[-1] += 1
                labels[-1].append(st[0])
                expansions[-1].append(st[1])
            else:
                levels.append(e)
                degs.append(1)
                labels.append([st[0]])
                expansions.append([st[1]])
        super().__init__(levels, degs, [tuple(l) for l in labels], model)
        self._expansions = expansions

    @staticmethod
    def _solve(model, ncut, b, count):
        blocks = _quartic_blocks(model, ncut, b, count)
        pool = []
        for parity, quanta, vals, vecs in blocks:
            for j, v in enumerate(vals):
                pool.append((v, (parity, j), (quanta, vecs[:, j])))
        pool.sort(key=lambda t: t[0])
        n = count
        # never split a degenerate multiplet at the cut
        while n < len(pool) and abs(pool[n][0] - pool[n - 1][0]) <= 1e-8 * abs(pool[n][0]):
            n += 1
        energies = np.array([p[0] for p in pool[:n]])
        states = [(p[1], p[2]) for p in pool[:n]]
        return energies, states

    def _level_states(self, i):
        exps = self._expansions[i]
        quanta = np.concatenate([q for q, _ in exps])
        coeffs = np.zeros((len(exps), quanta.shape[0]))
        pos = 0
        for s, (q, c) in enumerate(exps):
            coeffs[s, pos : pos + len(c)] = c
            pos += len(c)
        return quanta, coeffs

    def terms(self, coords, which=TERMS, n_levels=None):
        # one matrix product per parity block instead of one per level
        pts = _points(self.model, coords)
        nl = _as_level_count(n_levels, len(self))
        out = {k: np.zeros((nl, pts.shape[0])) for k in which}
        groups = {}
        for i in range(nl):
            for lab, (quanta, vec) in zip(self.labels[i], self._expansions[i]):
                parity = lab[0]
                g = groups.setdefault(parity, {"quanta": quanta, "vecs": [], "level": []})
                g["vecs"].append(vec)
                g["level"].append(i)
        hb2m = self.model.hb2m
        for start in range(0, pts.shape[0], 1024):
            chunk = pts[start : start + 1024]
            sl = slice(start, start + chunk.shape[0])
            tabs = self._tables(chunk)
            for g in groups.values():
                coeffs = np.array(g["vecs"])
                val, grad, lap = self._eval_states(g["quanta"], coeffs, tabs)
                level = np.array(g["level"])
                if "rho" in which:
                    np.add.at(out["rho"][:, sl], level, val**2)
                if "tau" in which:
                    np.add.at(out["tau"][:, sl], level, -hb2m * val * lap)
                if "tau1" in which:
                    np.add.at(out["tau1"][:, sl], level, hb2m * np.sum(grad**2, axis=0))
        return out

    def _state_expansion(self, state):
        for lab, exps in zip(self.labels, self._expansions):
            for l, e in zip(lab, exps):
                if l == state:
                    return e
        raise KeyError(state)


def solve_spectrum(model, count, **kwargs):
    """At least ``count`` lowest single-particle states (degeneracies counted)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if model.kind == "box1d":
        return BoxSpectrum(model, count)
    if model.kind == "harmonic":
        return HarmonicSpectrum(model, count)
    if model.kind == "billiard":
        if model.dim == 1:
            return BoxSpectrum(model, count, x0=-model.radius, length=2.0 * model.radius)
        if model.dim == 2:
            return DiskSpectrum(model, count)
        return BallSpectrum(model, count)
    return QuarticSpectrum(model, count, **kwargs)
