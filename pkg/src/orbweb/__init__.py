"""orbweb: vibration of a spider orb-web membrane.

Forward problem: eigenvalues/eigenfunctions of the singular radial operator,
transient response to an impact load g(t)*f(rho, theta), synthetic ring
measurements near the hub. Inverse problem: recovery of f from those
measurements (deconvolution, angular decomposition, modal fitting) with
impact localization.
"""

from .model import (DomainError, ValidationError, WebParameters,
                    circumferential_prestress, linear_mass_density,
                    radial_prestress, surface_mass_density)
from .spectral import (ModalBasis, RadialEigenpair, compute_basis,
                       spectrum_gap_diagnostic)
from .forward import (ModalCoefficients, RingMeasurement, SourceField,
                      TimeProfile, constant_profile, decaying_exponential,
                      duhamel, evaluate_displacement, gaussian_bump,
                      load_measurement, project_source, raised_cosine,
                      reconstruct_field_from_coeffs, save_measurement,
                      synthesize_ring)
from .inverse import (ReconstructionConfig, ReconstructionResult, invert,
                      localize, recommended_observation_time,
                      volterra_deconvolve)

__version__ = "0.1.0"

__all__ = [
    "WebParameters", "ValidationError", "DomainError",
    "radial_prestress", "circumferential_prestress",
    "linear_mass_density", "surface_mass_density",
    "ModalBasis", "RadialEigenpair", "compute_basis", "spectrum_gap_diagnostic",
    "SourceField", "TimeProfile", "ModalCoefficients", "RingMeasurement",
    "gaussian_bump", "constant_profile", "decaying_exponential",
    "raised_cosine", "project_source", "duhamel", "evaluate_displacement",
    "synthesize_ring", "reconstruct_field_from_coeffs",
    "save_measurement", "load_measurement",
    "ReconstructionConfig", "ReconstructionResult", "invert", "localize",
    "recommended_observation_time", "volterra_deconvolve",
    "__version__",
]
