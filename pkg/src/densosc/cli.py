"""Command line: ``densosc run <config>``, ``densosc validate``, ``densosc export-spectrum <config>``.

Exit codes: 0 success, 1 invalid input or failed validation, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import __version__
from .closed_orbits import (ForbiddenRegionError, friedel_plus_density, integrate_friedel_deficit,
                            lvt_check, tf_functional_check, wall_extrema)
from .config import ConfigError, load_config
from .correlations import (bcs_energy_via_folding, free_energy_via_folding, harmonic_poisson_catalog,
                           kernel_pairing, kernel_thermal, modulated_trace_formula)
from .qm_densities import SpectrumTooShortError, density, make_scheme, particle_number, thermo_report
from .smooth_tf import rho_tf, smooth_fermi_level, tau_tf, weyl_surface_term
from .specfun import QuadratureError
from .spectra import BasisNotConvergedError, GridSpec, evaluate_potential, solve_spectrum

OUTPUT_ENV = "DENSOSC_OUTPUT_DIR"
NUMERICAL_ERRORS = (SpectrumTooShortError, BasisNotConvergedError, QuadratureError, ForbiddenRegionError,
                    ArithmeticError, RuntimeError)


# --------------------------------------------------------------------------
# file output

def atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(columns):
    """Columns as (name, unit, values); header 'name [unit]', 17 significant digits."""
    header = ",".join(f"{name} [{unit}]" for name, unit, _ in columns)
    cols = [np.asarray(v, dtype=float) for _, _, v in columns]
    lines = [header]
    for row in zip(*cols):
        lines.append(",".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# run setup

@dataclass
class Setup:
    config: object
    model: object
    spectrum: object
    scheme: object
    lam_smooth: float
    coords: np.ndarray
    axis: np.ndarray
    weights: np.ndarray | None


def _spectrum_for(cfg, model):
    count = cfg.levels or cfg.N // 2 + max(40, cfg.N // 4)
    if model.kind == "quartic2d" and cfg.levels is None:
        count = cfg.N // 2 + 20
    for _ in range(12):
        spectrum = solve_spectrum(model, count)
        try:
            scheme = make_scheme(spectrum, cfg.N, cfg.scheme.kind, temperature=cfg.scheme.temperature,
                                 gap=cfg.scheme.gap, window_width=cfg.scheme.window_width)
            return spectrum, scheme
        except SpectrumTooShortError:
            if cfg.levels is not None:
                raise
            count *= 2
    raise SpectrumTooShortError(f"no adequate spectrum up to {count} states")


def _turning_extent(model, lam, direction):
    """Distance along a unit direction at which V reaches lam."""
    def V(s):
        pt = s * direction
        return float(evaluate_potential(model, pt if model.dim == 1 else pt[None])[0])

    hi = 1.0
    while V(hi) < lam:
        hi *= 2.0
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if V(mid) < lam else (lo, mid)
    return hi


def _grid(cfg, model, lam_smooth):
    g = cfg.grid
    if model.kind == "box1d":
        lo, hi = 0.0, model.length
    elif model.kind == "billiard":
        lo, hi = (-model.radius, model.radius) if model.dim == 1 else (0.0, model.radius)
    else:
        direction = np.ones(model.dim) / math.sqrt(model.dim) if g.cut == "diagonal" else np.eye(model.dim)[0]
        ext = _turning_extent(model, lam_smooth, direction)
        if model.dim > 1:
            # cut coordinate: x along the chosen direction (y = x on the diagonal)
            ext = ext * direction[0]
        lo, hi = (-1.2 * ext, 1.2 * ext) if model.dim == 1 else (0.0, 1.2 * ext)
    lo = g.lo if g.lo is not None else lo
    hi = g.hi if g.hi is not None else hi
    if not hi > lo:
        raise ConfigError("grid", "need hi > lo")
    radial = model.kind == "billiard" and model.dim > 1
    if model.dim == 1 or radial:
        spec = GridSpec.line(lo, hi, g.points, dim=model.dim, radial=radial)
        axis = spec.coords()
        return axis, axis, spec.weights()
    axis = np.linspace(lo, hi, g.points)
    coords = np.zeros((g.points, model.dim))
    coords[:, 0] = axis
    if g.cut == "diagonal":
        coords[:, :] = axis[:, None]
    return coords, axis, None


def prepare(cfg):
    model = cfg.model.build()
    mode = "weyl" if model.hard_wall else "tf"
    lam_smooth = smooth_fermi_level(model, cfg.N, mode).lam
    spectrum, scheme = _spectrum_for(cfg, model)
    coords, axis, weights = _grid(cfg, model, lam_smooth)
    try:
        evaluate_potential(model, coords)
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None
    return Setup(cfg, model, spectrum, scheme, lam_smooth, coords, axis, weights)


# --------------------------------------------------------------------------
# diagnostics; each returns (summary, {filename: csv text})

def _oscillating(st):
    rho = density(st.spectrum, st.scheme, st.coords, "rho").values
    tau = density(st.spectrum, st.scheme, st.coords, "tau").values
    return rho, tau, rho_tf(st.model, st.lam_smooth, st.coords), tau_tf(st.model, st.lam_smooth, st.coords)


def _field(values, st, which):
    from .qm_densities import DensityField
    return DensityField(st.coords, np.asarray(values, dtype=float), which, {}, st.weights)


def _sampled(residual, mask, seed, n=16):
    idx = np.nonzero(mask)[0]
    rng = np.random.default_rng(seed)
    pick = rng.choice(idx, size=min(n, idx.size), replace=False)
    return float(np.max(np.abs(residual[pick])))


def _friedel_column(st):
    m = st.model
    r = np.abs(st.axis)
    out = np.full(r.shape, np.nan)
    ok = r >= 0.05 * m.radius
    out[ok] = friedel_plus_density(m.dim, m.radius, st.lam_smooth, r[ok], m.mass, m.hbar)
    return out


def diag_density(st):
    rho = density(st.spectrum, st.scheme, st.coords, "rho")
    tf = rho_tf(st.model, st.lam_smooth, st.coords)
    D = st.model.dim
    cols = [("x", "length", st.axis), ("rho_qm", f"length^-{D}", rho.values), ("rho_tf", f"length^-{D}", tf),
            ("drho", f"length^-{D}", rho.values - tf)]
    summary = {}
    if st.model.kind == "billiard":
        cols.append(("drho_plus", f"length^-{D}", _friedel_column(st)))
    if st.weights is not None:
        summary["integral_rho"] = float(st.weights @ rho.values)
    if st.model.hard_wall:
        summary["rho_at_wall"] = float(rho.values[np.argmax(np.abs(st.axis))])
    return summary, {"density.csv": csv_text(cols)}


def diag_lvt(st):
    rho, tau, rtf, ttf = _oscillating(st)
    res = lvt_check(_field(tau - ttf, st, "dtau"), _field(rho - rtf, st, "drho"), st.model, st.lam_smooth)
    V = evaluate_potential(st.model, st.coords)
    unit = f"energy/length^{st.model.dim}"
    cols = [("x", "length", st.axis), ("dtau", unit, tau - ttf),
            ("lvt_rhs", unit, (st.lam_smooth - V) * (rho - rtf)),
            ("residual", unit, res.residual.values), ("interior", "1", res.mask.astype(float))]
    summary = {"max_rel": res.max_rel, "rms_rel": res.rms_rel,
               "sampled_max_abs": _sampled(res.residual.values, res.mask, st.config.seed)}
    return summary, {"lvt.csv": csv_text(cols)}


def diag_tf_functional(st):
    rho = density(st.spectrum, st.scheme, st.coords, "rho")
    tau = density(st.spectrum, st.scheme, st.coords, "tau")
    m = st.model
    res = tf_functional_check(rho, tau, m.dim, m.mass, m.hbar, model=m, lam=st.lam_smooth)
    unit = f"energy/length^{m.dim}"
    cols = [("x", "length", st.axis), ("tau_qm", unit, tau.values),
            ("tau_tf_of_rho", unit, res.tau_tf), ("interior", "1", res.mask.astype(float))]
    summary = {"max_rel": res.max_rel, "rms_rel": res.rms_rel,
               "sampled_max_abs": _sampled(res.residual.values, res.mask, st.config.seed)}
    return summary, {"tf_functional.csv": csv_text(cols)}


def diag_friedel(st):
    m = st.model
    if m.kind != "billiard":
        raise ConfigError("diagnostics", "friedel needs a billiard model")
    rho = density(st.spectrum, st.scheme, st.coords, "rho").values
    drho = rho - rho_tf(m, st.lam_smooth, st.coords)
    plus = _friedel_column(st)
    r = np.abs(st.axis)
    half = st.axis >= 0
    args = (m.radius, st.lam_smooth, m.mass, m.hbar)
    p = math.sqrt(2.0 * m.mass * st.lam_smooth)
    deficit = integrate_friedel_deficit(m.dim, m.radius, st.lam_smooth, m.mass, m.hbar)
    weyl = weyl_surface_term(m.dim, p, m.radius, m.hbar)
    summary = {
        "extrema_qm": wall_extrema(r[half], drho[half], *args),
        "extrema_plus": wall_extrema(r[half], plus[half], *args),
        "grid_step": float(st.axis[1] - st.axis[0]),
        "rho_at_wall": float(rho[np.argmax(r)]),
        "deficit": deficit, "weyl_surface": weyl, "deficit_rel_error": abs(deficit / weyl - 1.0),
    }
    cols = [("r", "length", st.axis), ("drho_qm", f"length^-{m.dim}", drho), ("drho_plus", f"length^-{m.dim}", plus)]
    return summary, {"friedel.csv": csv_text(cols)}


def diag_trace(st):
    m = st.model
    if m.kind != "harmonic" or m.dim != 1:
        raise ConfigError("diagnostics", "trace is available for the 1D harmonic oscillator")
    sc = st.config.scheme
    if sc.kind == "thermal":
        kernel = kernel_thermal(sc.temperature)
    elif sc.kind == "bcs":
        kernel = kernel_pairing(sc.gap)
    else:
        raise ConfigError("scheme.kind", "trace needs a thermal or bcs scheme")
    hw = m.hbar * m.omegas[0]
    E = np.linspace(10.0 * hw, 30.0 * hw, 401)
    nmax = 4000
    levels = hw * (np.arange(nmax) + 0.5)
    folded = kernel.evaluate(E[:, None] - levels) @ np.ones(nmax)
    # levels above the explicit sum, as a continuum with density 1/(hbar omega)
    folded += (1.0 - kernel.cdf_unit((levels[-1] + 0.5 * hw - E) / kernel.scale)) / hw
    smooth = kernel.cdf_unit(E / kernel.scale) / hw
    catalog = harmonic_poisson_catalog(m.omegas[0], m.hbar, kmax=200)
    trace = np.array([modulated_trace_formula(catalog, kernel, e, "dg", m.hbar) for e in E])
    summary = {"max_abs_diff": float(np.max(np.abs(folded - smooth - trace)))}
    cols = [("E", "energy", E), ("dg_folded", "1/energy", folded - smooth), ("dg_trace", "1/energy", trace)]
    return summary, {"trace.csv": csv_text(cols)}


def diag_folding_validate(st):
    sch = st.scheme
    if sch.kind == "thermal":
        direct = thermo_report(st.spectrum, sch).F
        folded = free_energy_via_folding(st.spectrum, sch.temperature, sch.lam)
        name = "F"
    elif sch.kind == "bcs":
        direct = thermo_report(st.spectrum, sch).E_bcs
        folded = bcs_energy_via_folding(st.spectrum, sch.gap, sch.lam, sch.window)
        name = "E_bcs"
    else:
        raise ConfigError("scheme.kind", "folding-validate needs a thermal or bcs scheme")
    return {"quantity": name, "direct": direct, "folding": folded, "rel_diff": abs(folded / direct - 1.0)}, {}


DIAGNOSTIC_FUNCS = {"density": diag_density, "lvt": diag_lvt, "tf-functional": diag_tf_functional,
                    "friedel": diag_friedel, "trace": diag_trace, "folding-validate": diag_folding_validate}


def _truncation(st):
    sp = st.spectrum
    info = {"levels": len(sp.energies), "states": int(sp.n_states), "complete": bool(sp.complete),
            "highest_level": float(sp.energies[-1])}
    if st.scheme.kind == "thermal":
        info["tail_bound"] = thermo_report(sp, st.scheme).tail_bound
    if st.scheme.kind == "bcs":
        info["pairing_window"] = list(st.scheme.window)
    for attr in ("ncut", "max_shift"):
        if hasattr(sp, attr):
            info[attr] = getattr(sp, attr)
    return info


def output_dir_for(cfg, config_path, override=None):
    if override:
        return override
    if os.environ.get(OUTPUT_ENV):
        return os.environ[OUTPUT_ENV]
    if cfg.output_dir:
        return cfg.output_dir
    stem = os.path.splitext(os.path.basename(config_path))[0]
    return os.path.join("runs", stem)


def run(config_path, output_dir=None):
    """Execute a config; returns (manifest dict, output directory)."""
    cfg = load_config(config_path)
    st = prepare(cfg)
    out = output_dir_for(cfg, config_path, output_dir)
    results = {}
    for name in cfg.diagnostics:
        summary, files = DIAGNOSTIC_FUNCS[name](st)
        for fname, text in files.items():
            atomic_write(os.path.join(out, fname), text)
        results[name] = {"summary": summary, "files": sorted(files)}
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "N": particle_number(st.spectrum, st.scheme),
        "lambda": st.scheme.lam,
        "lambda_smooth": st.lam_smooth,
        "delta_lambda": st.scheme.lam - st.lam_smooth,
        "truncation": _truncation(st),
        "diagnostics": results,
    }
    atomic_write(os.path.join(out, "manifest.json"), json.dumps(manifest, indent=2, default=float) + "\n")
    return manifest, out


def export_spectrum(config_path, output_dir=None):
    cfg = load_config(config_path)
    model = cfg.model.build()
    spectrum, _ = _spectrum_for(cfg, model)
    out = output_dir_for(cfg, config_path, output_dir)
    path = os.path.join(out, "spectrum.json")
    atomic_write(path, spectrum.to_json() + "\n")
    return path


def _guarded(fn):
    try:
        return fn()
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None):
    parser = argparse.ArgumentParser(prog="densosc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the diagnostics of a config file")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", help=f"overrides the config and ${OUTPUT_ENV}")
    sub.add_parser("validate", help="cross-module oracle checks")
    p_exp = sub.add_parser("export-spectrum", help="write the spectrum of a config as JSON")
    p_exp.add_argument("config")
    p_exp.add_argument("--output-dir")
    args = parser.parse_args(argv)

    if args.command == "run":
        def go():
            manifest, out = run(args.config, args.output_dir)
            print(f"wrote {out}/manifest.json")
            for name, res in manifest["diagnostics"].items():
                print(f"{name}: {json.dumps(res['summary'], default=float)}")
            return 0
        return _guarded(go)
    if args.command == "export-spectrum":
        def go():
            print(f"wrote {export_spectrum(args.config, args.output_dir)}")
            return 0
        return _guarded(go)
    from .validate import validate_suite
    report = validate_suite()
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
