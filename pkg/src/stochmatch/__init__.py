"""Online stochastic bipartite matching: LP relaxations, rounding, exact oracles."""

from .errors import (InfeasibleSolutionError, InvalidParameterError, ResourceError,
                     SolverError, StochMatchError, ValidationError)
from .instances import (Arrival, Edge, EdgeArrivalInstance, GeneralArrival,
                        GeneralVertexArrivalInstance, Scenario, VertexArrivalInstance,
                        gen_correlation, gen_random, gen_tightness, validate)
from .relaxation import (FractionalSolution, GeneralFractionalSolution, LinearProgram,
                         build_edge_lp, build_general_lp, build_lp, build_vertex_lp,
                         constraint_slacks, solve, solve_instance, validate_solution)
from .rounding_vertex import (build_general_schedule, build_schedule, monte_carlo,
                              run_trial, run_trial_general)
from .rounding_edge import build_edge_schedule, monte_carlo_edge, run_trial_edge
from .oracles import (Tolerances, VerificationReport, exact_edge_rounding,
                      exact_vertex_rounding, optimal_online, verify_all)

__version__ = "0.1.0"
