"""Resonant transmission of spinless fermions through a tight-binding chain
coupled to two dissipative ring reservoirs.

Four routes to the stationary current are implemented and cross-validated:

- ``fulldynamics``: exact evolution of the composite single-particle
  density matrix (chain plus both reservoirs);
- ``smallgamma``: closed-form spectral stationary state, accurate for
  small relaxation rates;
- ``nonmarkov``: memory-kernel master equation for the chain alone, plus
  its algebraic linear-response limit;
- ``markov``: memoryless reduction with the effective rate epsilon^2/gamma
  and a closed-form mean current.

``diagnostics`` adds peak detection, asymptotic slope fits, coherence
spectra, and an exact many-body Fock-space oracle for small systems;
``sweep``/``cli`` drive parameter grids to CSV.
"""

__version__ = "0.1.0"

from .fulldynamics import (
    FullSPDM,
    SolverConfig,
    StationaryResult,
    bond_currents,
    evolve_to_stationary,
    full_rhs,
    full_spdm_at,
    mean_current,
)
from .markov import closed_form_current, effective_rate, stationary_markov
from .model import (
    BlockLayout,
    ContactSpec,
    ModelParams,
    OperatorSet,
    build_operators,
    chain_eigensystem,
    fermi_occupation,
    kappa_to_mu,
    params_for_point,
    thermal_contact_spdm,
)
from .nonmarkov import (
    conductance_current,
    contact_dos,
    evolve_nonmarkov,
    kernel_jF,
    linear_response_stationary,
)
from .smallgamma import (
    current_smallgamma,
    current_spectral_function,
    local_density_of_states,
    stationary_spdm_smallgamma,
)
from .sweep import SweepConfig, resolve_config, run_compare, run_sweep

__all__ = [
    "BlockLayout",
    "ContactSpec",
    "FullSPDM",
    "ModelParams",
    "OperatorSet",
    "SolverConfig",
    "StationaryResult",
    "SweepConfig",
    "bond_currents",
    "build_operators",
    "chain_eigensystem",
    "closed_form_current",
    "conductance_current",
    "contact_dos",
    "current_smallgamma",
    "current_spectral_function",
    "effective_rate",
    "evolve_nonmarkov",
    "evolve_to_stationary",
    "fermi_occupation",
    "full_rhs",
    "full_spdm_at",
    "kappa_to_mu",
    "kernel_jF",
    "linear_response_stationary",
    "local_density_of_states",
    "mean_current",
    "params_for_point",
    "resolve_config",
    "run_compare",
    "run_sweep",
    "stationary_markov",
    "stationary_spdm_smallgamma",
    "thermal_contact_spdm",
]
