"""Special functions and adaptive quadrature.

Only the Bessel orders that the density and trace-formula code actually
needs are covered: integer orders ``m`` (disk spectra), half-integer orders
``l + 1/2`` (spherical billiards, ``nu = D/2`` in odd D) and the modified
functions K0, K1 (pairing modulation factors).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.57721566490153286061


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, value, error):
        super().__init__(f"{message} (best estimate {value!r}, error bound {error!r})")
        self.value = value
        self.error = error


def gamma_fn(x):
    if x <= 0:
        raise DomainError(f"gamma_fn requires x > 0, got {x}")
    return math.gamma(x)


def _order_kind(nu):
    """Return ('int', m) or ('half', l) for nu = m or nu = l + 1/2."""
    if nu < 0:
        raise DomainError(f"Bessel order must be >= 0, got {nu}")
    twice = 2.0 * nu
    if abs(twice - round(twice)) > 1e-12:
        raise DomainError(f"only integer and half-integer orders are supported, got {nu}")
    twice = int(round(twice))
    if twice % 2 == 0:
        return "int", twice // 2
    return "half", (twice - 1) // 2


def _as_array(z):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("Bessel argument must be >= 0")
    return z


# --------------------------------------------------------------------------
# integer orders

def _jn_series(m, z):
    # sum_k (-1)^k (z/2)^(2k+m) / (k! (k+m)!)
    h = 0.5 * z
    term = h**m / math.factorial(m)
    total = term.copy()
    q = -h * h
    for k in range(1, 200):
        term = term * q / (k * (k + m))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _jn_miller(m, z):
    """Miller backward recurrence normalised by J0 + 2 sum J_2k = 1 (z > 0)."""
    top = max(m, float(np.max(z)))
    start = 2 * int((top + 30 + 4 * math.sqrt(top)) / 2) + 2
    j_next = np.zeros_like(z)
    j_cur = np.full_like(z, 1e-30)
    norm = np.zeros_like(z)
    out = np.zeros_like(z)
    two_over_z = 2.0 / z
    for k in range(start, 0, -1):
        # j_cur holds J_k (unnormalised)
        if k % 2 == 0:
            norm += 2.0 * j_cur
        if k == m:
            out = j_cur.copy()
        j_prev = k * two_over_z * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        big = np.abs(j_cur) > 1e200
        if np.any(big):
            scale = np.where(big, 1e-200, 1.0)
            j_cur *= scale
            j_next *= scale
            norm *= scale
            out *= scale
    # j_cur is now J_0
    norm += j_cur
    if m == 0:
        out = j_cur
    return out / norm


def _jn(m, z):
    out = np.empty_like(z)
    zero = z == 0
    out[zero] = 1.0 if m == 0 else 0.0
    # the power series only when it cannot cancel badly
    series = ~zero & (z <= 2.0 * math.sqrt(m + 1.0))
    if np.any(series):
        out[series] = _jn_series(m, z[series])
    rest = ~zero & ~series
    if np.any(rest):
        out[rest] = _jn_miller(m, z[rest])
    return out


# --------------------------------------------------------------------------
# half-integer orders through spherical Bessel functions j_l

def _sph_series(l, z):
    # j_l(z) = z^l/(2l+1)!! sum_k (-z^2/2)^k / (k! (2l+3)(2l+5)...(2l+2k+1))
    dfact = 1.0
    for i in range(1, 2 * l + 2, 2):
        dfact *= i
    term = z**l / dfact
    total = term.copy()
    q = -0.5 * z * z
    for k in range(1, 200):
        term = term * q / (k * (2 * l + 2 * k + 1))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _sph_miller(l, z):
    """Backward recurrence for j_l, normalised to whichever of j0, j1 is larger."""
    top = max(l, float(np.max(z)))
    start = int(top + 30 + 4 * math.sqrt(top)) + 2
    j_next = np.zeros_like(z)
    j_cur = np.full_like(z, 1e-30)
    out = np.zeros_like(z)
    j1_raw = np.zeros_like(z)
    for k in range(start, 0, -1):
        if k == l:
            out = j_cur.copy()
        if k == 1:
            j1_raw = j_cur.copy()
        j_prev = (2 * k + 1) / z * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        big = np.abs(j_cur) > 1e200
        if np.any(big):
            scale = np.where(big, 1e-200, 1.0)
            j_cur *= scale
            j_next *= scale
            out *= scale
            j1_raw *= scale
    if l == 0:
        out = j_cur
    j0_true = np.sin(z) / z
    j1_true = np.sin(z) / z**2 - np.cos(z) / z
    use0 = np.abs(j0_true) >= np.abs(j1_true)
    scale = np.where(use0, j0_true / np.where(use0, j_cur, 1.0), j1_true / np.where(use0, 1.0, j1_raw))
    return out * scale


def spherical_jn(l, z):
    """Spherical Bessel function j_l(z) for integer l >= 0, z >= 0."""
    z = _as_array(z)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)
    series = z <= 2.0 * math.sqrt(l + 1.0)
    if np.any(series):
        out[series] = _sph_series(l, z[series])
    rest = ~series
    if np.any(rest):
        out[rest] = _sph_miller(l, z[rest])
    return out[0] if scalar else out


def spherical_jn_prime(l, z):
    if l == 0:
        return -spherical_jn(1, z)
    return (l * spherical_jn(l - 1, z) - (l + 1) * spherical_jn(l + 1, z)) / (2 * l + 1)


def bessel_j(nu, z):
    """Bessel function of the first kind J_nu(z), nu integer or half-integer."""
    kind, n = _order_kind(nu)
    z = _as_array(z)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if kind == "int":
        out = _jn(n, z)
    else:
        out = np.zeros_like(z)
        pos = z > 0
        out[pos] = np.sqrt(2.0 * z[pos] / np.pi) * spherical_jn(n, z[pos])
    return float(out[0]) if scalar else out


def bessel_j_prime(nu, z):
    """dJ_nu/dz from the standard three-term relation."""
    if nu == 0:
        return -bessel_j(1, z)
    return 0.5 * (bessel_j(nu - 1, z) - bessel_j(nu + 1, z)) if nu >= 1 else _jhalf_prime(z)


def _jhalf_prime(z):
    # J_{1/2}' = J_{-1/2} - J_{1/2}/(2z), J_{-1/2}(z) = sqrt(2/(pi z)) cos z
    z = np.asarray(z, dtype=float)
    return np.sqrt(2.0 / (np.pi * z)) * (np.cos(z) - 0.5 * np.sin(z) / z)


def bessel_j_scaled(nu, z):
    """2^nu Gamma(nu+1) J_nu(z) / z^nu, equal to 1 at z = 0."""
    _order_kind(nu)
    z = _as_array(z)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)
    small = z < 2.0
    if np.any(small):
        zs = z[small]
        q = -0.25 * zs * zs
        term = np.ones_like(zs)
        total = term.copy()
        for k in range(1, 60):
            term = term * q / (k * (nu + k))
            total += term
        out[small] = total
    big = ~small
    if np.any(big):
        zb = z[big]
        out[big] = 2.0**nu * math.gamma(nu + 1.0) * bessel_j(nu, zb) / zb**nu
    return float(out[0]) if scalar else out


def bessel_j_zeros_below(nu, zmax, step=0.25):
    """All positive zeros of J_nu smaller than zmax, ascending."""
    _order_kind(nu)
    if zmax <= nu:
        return np.zeros(0)
    # j_{nu,1} > nu for nu >= 0
    lo = max(nu, 1e-3)
    grid = np.arange(lo, zmax + step, step)
    grid = grid[grid <= zmax] if grid[-1] > zmax else grid
    if grid.size < 2:
        return np.zeros(0)
    vals = bessel_j(nu, grid)
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    # vectorised bisection over all brackets at once
    a, b = grid[idx], grid[idx + 1]
    fa = vals[idx]
    for _ in range(60):
        mid = 0.5 * (a + b)
        fm = bessel_j(nu, mid)
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, mid, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, mid)
        if np.all(b - a <= 4e-16 * b):
            break
    zeros = list(0.5 * (a + b)) + [float(grid[i]) for i in np.nonzero(vals == 0.0)[0]]
    return np.array(sorted(zeros))


def bessel_j_zero(order, k):
    """k-th positive zero j_{order,k} of J_order (k >= 1)."""
    if k < 1:
        raise DomainError(f"zero index must be >= 1, got {k}")
    # McMahon: j_{nu,k} ~ (k + nu/2 - 1/4) pi; scan a little beyond it
    upper = (k + 0.5 * order + 1.0) * math.pi + 5.0
    zeros = bessel_j_zeros_below(order, upper)
    while zeros.size < k:
        upper *= 1.5
        zeros = bessel_j_zeros_below(order, upper)
    return float(zeros[k - 1])


# --------------------------------------------------------------------------
# modified Bessel functions K0, K1

def _k_series(order, z):
    # A&S 9.6.11 for n = 0, 1; valid and accurate for z <= 2
    y = 0.25 * z * z
    log_half = math.log(0.5 * z)
    i_sum = 0.0
    rest = 0.0
    term = 1.0 if order == 0 else 1.0  # y^k / (k! (k+order)!)
    psi_k1 = -EULER_GAMMA  # psi(k+1)
    for k in range(0, 60):
        if k > 0:
            term *= y / (k * (k + order))
            psi_k1 += 1.0 / k
        i_sum += term
        if order == 0:
            rest += psi_k1 * term
        else:
            rest += (2.0 * psi_k1 + 1.0 / (k + 1)) * term
        if term < 1e-18 * abs(i_sum):
            break
    if order == 0:
        return -log_half * i_sum + rest
    i1 = 0.5 * z * i_sum
    return 1.0 / z + log_half * i1 - 0.25 * z * rest


def _k_steed(z):
    """K0 and K1 for z >= 2 by Steed's continued fraction (Temme's CF2)."""
    b = 2.0 * (1.0 + z)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, 10000):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < 1e-16:
            break
    h = a1 * h
    k0 = math.sqrt(math.pi / (2.0 * z)) * math.exp(-z) / s
    k1 = k0 * (z + 0.5 - h) / z
    return k0, k1


def _bessel_k_scalar(order, z):
    if z <= 0:
        raise DomainError(f"bessel_k requires z > 0, got {z}")
    if z > 705.0:
        return 0.0
    if z <= 2.0:
        return _k_series(order, z)
    return _k_steed(z)[order]


def bessel_k(order, z):
    """Modified Bessel function of the second kind, order 0 or 1."""
    if order not in (0, 1):
        raise DomainError(f"bessel_k supports orders 0 and 1, got {order}")
    z_arr = np.asarray(z, dtype=float)
    if z_arr.ndim == 0:
        return _bessel_k_scalar(order, float(z_arr))
    flat = [_bessel_k_scalar(order, float(v)) for v in z_arr.ravel()]
    return np.array(flat).reshape(z_arr.shape)


# --------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadratureSpec:
    rtol: float = 1e-12
    atol: float = 1e-14
    max_subdivisions: int = 4000

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


_GL_LO = np.polynomial.legendre.leggauss(15)
_GL_HI = np.polynomial.legendre.leggauss(31)
_NODES = np.concatenate([_GL_LO[0], _GL_HI[0]])
_N_LO = _GL_LO[0].size


def _panel(g, a, b):
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    vals = g(mid + half * _NODES)
    lo = half * np.dot(_GL_LO[1], vals[:_N_LO])
    hi = half * np.dot(_GL_HI[1], vals[_N_LO:])
    return hi, abs(hi - lo)


def _finite_adaptive(g, a, b, spec):
    val, err = _panel(g, a, b)
    heap = [(-err, a, b, val, err)]
    total, total_err = val, err
    splits = 0
    while total_err > max(spec.atol, spec.rtol * abs(total)):
        if splits >= spec.max_subdivisions:
            raise QuadratureError("maximum subdivisions reached", total, total_err)
        neg, pa, pb, pval, perr = heapq.heappop(heap)
        pm = 0.5 * (pa + pb)
        if not (pa < pm < pb):
            raise QuadratureError("panel width underflow", total, total_err)
        lval, lerr = _panel(g, pa, pm)
        rval, rerr = _panel(g, pm, pb)
        total += lval + rval - pval
        total_err += lerr + rerr - perr
        heapq.heappush(heap, (-lerr, pa, pm, lval, lerr))
        heapq.heappush(heap, (-rerr, pm, pb, rval, rerr))
        splits += 1
    # re-sum to shed accumulated rounding from the running updates
    total = math.fsum(item[3] for item in heap)
    total_err = math.fsum(item[4] for item in heap)
    return total, total_err


def integrate(f, a, b, spec=None):
    """Adaptive Gauss-Legendre quadrature of a vectorised f over [a, b].

    Infinite limits are mapped onto finite intervals (x = a + t/(1-t) and
    friends). Returns ``(value, error_estimate)``; raises QuadratureError
    carrying the best estimate when the tolerance cannot be met.
    """
    spec = spec or QuadratureSpec()
    if a == b:
        return 0.0, 0.0
    if a > b:
        val, err = integrate(f, b, a, spec)
        return -val, err
    a_inf, b_inf = math.isinf(a), math.isinf(b)
    if a_inf and b_inf:
        v1, e1 = integrate(f, -math.inf, 0.0, spec)
        v2, e2 = integrate(f, 0.0, math.inf, spec)
        return v1 + v2, e1 + e2
    if b_inf:
        def g(t):
            s = 1.0 - t
            return f(a + t / s) / (s * s)
        return _finite_adaptive(g, 0.0, 1.0, spec)
    if a_inf:
        def g(t):
            s = 1.0 - t
            return f(b - t / s) / (s * s)
        return _finite_adaptive(g, 0.0, 1.0, spec)
    return _finite_adaptive(f, float(a), float(b), spec)


def integrate_panels(f, edges, spec=None):
    """Sum of integrals of f over consecutive panels [edges[i], edges[i+1]].

    All panels are first done in one vectorised Gauss-Legendre pass; panels
    whose 15/31-point estimates disagree are redone adaptively.
    """
    spec = spec or QuadratureSpec()
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    vals = f((mid[:, None] + half[:, None] * _NODES[None, :]).ravel()).reshape(a.size, -1)
    lo = half * (vals[:, :_N_LO] @ _GL_LO[1])
    hi = half * (vals[:, _N_LO:] @ _GL_HI[1])
    err = np.abs(hi - lo)
    scale = max(float(np.sum(np.abs(hi))), 1e-300)
    bad = err > max(spec.atol, spec.rtol * scale) / max(a.size, 1)
    parts, errs = list(hi[~bad]), list(err[~bad])
    for i in np.nonzero(bad)[0]:
        v, e = _finite_adaptive(f, float(a[i]), float(b[i]), spec)
        parts.append(v)
        errs.append(e)
    return math.fsum(parts), math.fsum(errs)
