"""Real-normalized differentials on plumbed families of Riemann surfaces.

Core pieces: dual graphs and Kirchhoff problems, the blowup of the resistance
sphere with multi-scale limits, rational components with exact meromorphic
differentials, the jump (Riemann-Hilbert) problem on plumbing seams, the
assembled RN differential, and the degeneration laboratory (limits, strata,
twisted differentials, zero tracking, balanced approximations).
"""

__version__ = "0.1.0"

from .graphs import DualGraph, OrientedCycle, build_graph, cycle_basis, \
    contract_edges, split_subgraph                                    # noqa: F401
from .kirchhoff import CurrentAssignment, ElectromotiveForce, VoltagePotential, \
    solve_flow, solve_force, solve_general, voltage_potential         # noqa: F401
from .blowup import BlowupPoint, ResistanceSchedule, classify_sequence, \
    project_base, solve_multiscale, limit_of_flow_solutions           # noqa: F401
from .mobius import INF, Mobius                                       # noqa: F401
from .components import (Jet, PlumbedCurve, RationalComponent,         # noqa: F401
                         RationalDifferential, SingularPart, build_phi,
                         laurent_expand, make_component, rn_genus0, zeros_of)
from .jump import ARNSolution, SeamFunction, arn_l2_norm, \
    jump_data_from_forms, seam_restrict, sokhotski_boundary, solve_arn  # noqa: F401
from .plumbing import (GluedDifferential, PathRealization, PeriodReport,  # noqa: F401
                       RNConstruction, build_omega_holo, build_psi_c,
                       global_tree_oracle, period_im, rn_construct,
                       seam_integral)
from .degeneration import (BalancedApproximation, DegeneratingFamily,  # noqa: F401
                           Stratification, TwistedLimitDifferential,
                           balanced_approximation, balancing_singular_part,
                           limit_rn, stratify, track_zeros, twisted_limit)
from .scenario import Scenario, parse_scenario, load_fixture           # noqa: F401
