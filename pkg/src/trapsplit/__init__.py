"""trapsplit: fast splitting of a harmonic trap into an asymmetric double well.

Designs two-level control schedules (FAQUAD and invariant-based inverse
engineering), maps them onto a realizable lattice-plus-harmonic potential,
and verifies the resulting vibrational-mode demultiplexing by direct 1D
Schrodinger/Gross-Pitaevskii propagation, including the fast-forward
splitting construction and its perturbation-stability analysis.
"""

from .constants import HBAR, M_RB87
from .lattice1d import Grid1D, TrapParameters, default_grid
from .protocols import (
    AnglePair,
    ControlProtocol,
    FaquadProtocol,
    InvariantProtocol,
    LinearReferenceProtocol,
    TabulatedProtocol,
    design_invariant_angles,
    faquad_min_time,
    faquad_schedule,
    linear_ramp,
    protocol_from_angles,
)
from .twolevel import (
    TwoLevelAmplitudes,
    TwoLevelHamiltonian,
    adiabaticity_parameter,
    eigensystem,
    fidelity,
    mixing_angle,
    propagate,
)

__version__ = "0.1.0"

__all__ = [
    "HBAR",
    "M_RB87",
    "Grid1D",
    "TrapParameters",
    "default_grid",
    "AnglePair",
    "ControlProtocol",
    "FaquadProtocol",
    "InvariantProtocol",
    "LinearReferenceProtocol",
    "TabulatedProtocol",
    "design_invariant_angles",
    "faquad_min_time",
    "faquad_schedule",
    "linear_ramp",
    "protocol_from_angles",
    "TwoLevelAmplitudes",
    "TwoLevelHamiltonian",
    "adiabaticity_parameter",
    "eigensystem",
    "fidelity",
    "mixing_angle",
    "propagate",
    "__version__",
]
