"""Standard and padded sample-average approximation for two-stage
stochastic linear programs without relatively complete recourse."""

from .backend import (FEASIBILITY_TOL, OPTIMALITY_TOL, MathProgram,
                      SolveResult, solve_lp, solve_milp)
from .bounds import (FiniteXBoundInputs, LPBoundInputs, PaddingBoundInputs,
                     basic_solution_count_bound, feasibility_prob_bound,
                     sample_size_finite_X, sample_size_padded,
                     sample_size_two_stage_lp)
from .feasibility import (INFEASIBLE, DeterministicBlockInfeasibleError,
                          LikelihoodEstimate, RecourseEval,
                          UnboundedRecourseError, estimate_recourse_likelihood,
                          eval_H, eval_Q, eval_recourse, is_infeasible)
from .model import (DeterministicSecondStage, LinearScenarioMap,
                    OpaqueScenarioMap, PolyhedralSet, ScenarioRealization,
                    TwoStageProblem, load_problem, mixed_scenario,
                    realize_scenario, save_problem, validate_problem)
from .padded import (CGTrace, PaddingMode, SeparationResult,
                     brute_force_separation, build_padded_monotone,
                     build_padded_rhs, constraint_generation_solve,
                     separation_milp_fixed_recourse, separation_milp_general,
                     solve_padded)
from .saa import (FiniteXResult, SAASolution, build_extensive_form,
                  solve_finite_X, solve_saa)
from .sampling import (Constant, DistributionSpec, SampleSet, ScaledBinomial,
                       TruncatedNormal, Uniform, componentwise_extrema,
                       derive_seed, draw_iid_sample)
from .trp import (TRPConfig, TRPInstance, TRPParams, build_trp_padded,
                  generate_trp, hardest_scenario, is_completely_reliable)

__version__ = "0.1.0"
