"""Exponential-cone programming: program container, builder, and the
primal-dual interior-point solver."""

from .program import ConicProgram, exp_cone_contains, load_problem, save_problem
from .solver import Solution, SolverOptions, solve
from .builder import build_ecp, group_observations, monotone_tighten, recover_solution
