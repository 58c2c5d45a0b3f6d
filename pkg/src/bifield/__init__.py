"""Multicentered exact solutions of Born-Infeld-type nonlinear electrodynamics.

Point (and smooth) electric/magnetic sources prescribe the flux densities
D and B; this package inverts the nonlinear constitutive relations to get
E and H, evaluates the induced electric/magnetic currents those fields
carry, and integrates field energies and fluxes.
"""

from .constitutive import (
    AuxScalars,
    FieldState,
    MediumMatrix,
    dyonic_eh,
    electrostatic_e,
    forward_fields,
    magnetostatic_h,
    medium_matrix,
    round_trip_residual,
    state_from_db,
)
from .continuous import (
    ContinuousSource,
    bump_source,
    continuous_fields,
    continuous_residual_suite,
    curl_formula_continuous,
    gaussian_source,
    gridded_source,
    merge_sources,
    newton_potential,
    potential_gradient,
    two_gaussian_source,
)
from .errors import (
    BracketFailure,
    ConfigError,
    DomainViolation,
    FieldError,
    InversionFailure,
    NegativeArgument,
    NoNonnegativeRoot,
    QuadratureError,
    SingularPoint,
)
from .currents import (
    CurrentSample,
    current_at,
    fd_curl,
    fd_div,
    je_classical_dyonic_k0,
    je_classical_magnetostatic,
    je_generic_magnetostatic,
    jm_classical_dyonic_k0,
    jm_classical_electrostatic,
    jm_generic_electrostatic,
)
from .models import ModelParams
from .observables import (
    EnergyReport,
    QuadratureSpec,
    ResidualReport,
    divergence_exponent_probe,
    energy_density,
    flux_charge,
    free_charge_with_inner_spheres,
    hamiltonian_at,
    residual_suite,
    total_energy,
)
from .sources import (
    ChargeConfig,
    PointCharge,
    Potential,
    displacement_field,
    magnetic_field,
    scalar_potential,
)

__version__ = "0.1.0"

__all__ = [
    "AuxScalars",
    "BracketFailure",
    "ChargeConfig",
    "ConfigError",
    "ContinuousSource",
    "CurrentSample",
    "DomainViolation",
    "EnergyReport",
    "FieldError",
    "FieldState",
    "InversionFailure",
    "MediumMatrix",
    "ModelParams",
    "NegativeArgument",
    "NoNonnegativeRoot",
    "PointCharge",
    "Potential",
    "QuadratureError",
    "QuadratureSpec",
    "ResidualReport",
    "SingularPoint",
    "__version__",
    "bump_source",
    "continuous_fields",
    "continuous_residual_suite",
    "curl_formula_continuous",
    "current_at",
    "displacement_field",
    "divergence_exponent_probe",
    "dyonic_eh",
    "electrostatic_e",
    "energy_density",
    "fd_curl",
    "fd_div",
    "flux_charge",
    "forward_fields",
    "free_charge_with_inner_spheres",
    "gaussian_source",
    "gridded_source",
    "hamiltonian_at",
    "je_classical_dyonic_k0",
    "je_classical_magnetostatic",
    "je_generic_magnetostatic",
    "jm_classical_dyonic_k0",
    "jm_classical_electrostatic",
    "jm_generic_electrostatic",
    "magnetic_field",
    "magnetostatic_h",
    "medium_matrix",
    "merge_sources",
    "newton_potential",
    "potential_gradient",
    "residual_suite",
    "round_trip_residual",
    "scalar_potential",
    "state_from_db",
    "total_energy",
    "two_gaussian_source",
]
