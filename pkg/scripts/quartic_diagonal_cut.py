"""tau_qm and tau_TF[rho_qm] along x = y for the coupled quartic oscillator (hbar = m = 1).

Usage: python3 scripts/quartic_diagonal_cut.py [N] [kappa] [out.csv]
"""

import sys

import numpy as np

from densosc.cli import atomic_write, csv_text
from densosc.closed_orbits import tf_functional_check
from densosc.qm_densities import density, make_scheme
from densosc.smooth_tf import smooth_fermi_level
from densosc.spectra import PotentialModel, solve_spectrum


def main(argv):
    N = int(argv[1]) if len(argv) > 1 else 632
    kappa = float(argv[2]) if len(argv) > 2 else 0.6
    out = argv[3] if len(argv) > 3 else f"quartic_N{N}_diagonal.csv"
    model = PotentialModel.quartic2d(kappa)
    lam_t = smooth_fermi_level(model, N, "tf").lam
    spectrum = solve_spectrum(model, N // 2 + 20)
    scheme = make_scheme(spectrum, N)
    s = np.linspace(0.0, 2.2, 1101)
    pts = np.stack([s, s], axis=-1)
    rho, tau = density(spectrum, scheme, pts, "rho"), density(spectrum, scheme, pts, "tau")
    res = tf_functional_check(rho, tau, 2, model=model, lam=lam_t)
    atomic_write(out, csv_text([("x", "length", s), ("rho_qm", "length^-2", rho.values),
                                ("tau_qm", "energy/length^2", tau.values),
                                ("tau_tf_of_rho", "energy/length^2", res.tau_tf)]))
    print(f"N={N} kappa={kappa} lambda={scheme.lam:.10g} lambda_smooth={lam_t:.10g} "
          f"basis ncut={spectrum.ncut} interior rms_rel={res.rms_rel:.3e} -> {out}")


if __name__ == "__main__":
    main(sys.argv)
