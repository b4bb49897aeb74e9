"""Quantum and semiclassical density oscillations of fermions in model potentials."""

__version__ = "0.1.0"

from .spectra import PotentialModel, GridSpec, solve_spectrum  # noqa: E402
from .qm_densities import OccupationScheme, density, make_scheme, thermo_report  # noqa: E402
from .smooth_tf import smooth_fermi_level  # noqa: E402
from .correlations import kernel_pairing, kernel_thermal  # noqa: E402

__all__ = ["PotentialModel", "GridSpec", "solve_spectrum", "OccupationScheme", "density", "make_scheme",
           "thermo_report", "smooth_fermi_level", "kernel_pairing", "kernel_thermal", "__version__"]
