'''
FDI assess: worst-case stealthy false-data-injection attacks on DC power grids.

Given a network and a target line, find the attack vector ``c`` (perturbing
the measured bus injections by ``H c``, invisible to the bad data detector)
that makes the operator's own re-dispatch push the most physical flow over
the target.

Package overview:

 * :any:`case_io` reads and writes MATPOWER case files (:any:`NetworkCase`).
 * :any:`grid_model` builds the PTDF and injection matrices and audits attack
   vectors.
 * :any:`opt_kernel` holds the LP/MILP types and the backend registry;
   :any:`opt_kernel_simplex` (own bounded simplex with branch and bound) and
   :any:`opt_kernel_highs` (scipy/HiGHS) implement it.
 * :any:`dcopf` solves the operator's DC optimal power flow with duals.
 * :any:`attack_milp` has the KKT/big-M attack model and its solvers: the
   full MILP, row generation and row-and-column generation.
 * :any:`dm_bounds` gives an LP-based upper and lower bound.
 * :any:`mbd` runs a modified Benders decomposition on the bi-level form.
 * :any:`assess` sweeps targets and budgets and writes reports;
   :any:`cli` is the ``assess`` command.
'''
from .case_io import NetworkCase, load_case, parse_case, format_case, validate_case
from .grid_model import build_matrices
from .opt_kernel import set_backend, get_backend, SolverOptions
from .dcopf import solve_dcopf
from .attack_milp import AttackInstance, AttackResult, solve_original_milp, solve_rg, solve_rcg
from .dm_bounds import solve_dm
from .mbd import to_adblp, solve_sp, solve_mbd, solve_mbd_attack
from .assess import AssessmentConfig, run_assessment, emit_report
from .event import event, Event, CancelEvent

__version__ = "0.1.0"

__all__ = [
    '__version__',
    'NetworkCase',
    'load_case',
    'parse_case',
    'format_case',
    'validate_case',
    'build_matrices',
    'set_backend',
    'get_backend',
    'SolverOptions',
    'solve_dcopf',
    'AttackInstance',
    'AttackResult',
    'solve_original_milp',
    'solve_rg',
    'solve_rcg',
    'solve_dm',
    'to_adblp',
    'solve_sp',
    'solve_mbd',
    'solve_mbd_attack',
    'AssessmentConfig',
    'run_assessment',
    'emit_report',
    'event',
    'Event',
    'CancelEvent',
    ]
