"""Quantum density, TF density and the "+" orbit correction for the disk billiard
(hbar^2/2m = R = 1), one CSV per particle number.

Usage: python3 scripts/disk_friedel_overlay.py [N ...]
"""

import sys

import numpy as np

from densosc.cli import atomic_write, csv_text
from densosc.closed_orbits import friedel_plus_density, wall_extrema
from densosc.qm_densities import density, make_scheme
from densosc.smooth_tf import rho_tf, smooth_fermi_level
from densosc.spectra import PotentialModel, solve_spectrum


def main(argv):
    numbers = [int(a) for a in argv[1:]] or [100, 606]
    model = PotentialModel.billiard(2)
    spectrum = solve_spectrum(model, max(numbers) // 2 + max(40, max(numbers) // 4))
    r = np.linspace(0.0, 1.0, 2001)
    for N in numbers:
        lam_t = smooth_fermi_level(model, N).lam
        rho = density(spectrum, make_scheme(spectrum, N), r).values
        tf = rho_tf(model, lam_t, r)
        plus = np.full_like(r, np.nan)
        inner = r >= 0.05
        plus[inner] = friedel_plus_density(2, 1.0, lam_t, r[inner])
        out = f"disk_N{N}_friedel.csv"
        atomic_write(out, csv_text([("r", "length", r), ("rho_qm", "length^-2", rho), ("rho_tf", "length^-2", tf),
                                    ("drho_plus", "length^-2", plus)]))
        qm = wall_extrema(r, rho - tf, 1.0, lam_t)
        sc = wall_extrema(r[inner], plus[inner], 1.0, lam_t)
        print(f"N={N}: extrema near wall qm={np.round(qm, 5)} plus={np.round(sc, 5)} -> {out}")


if __name__ == "__main__":
    main(sys.argv)
