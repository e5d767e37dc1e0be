from .common import SolveResult, SolverBudget, SubEvaluator
from .exact import solve_exact
from .fifo import solve_fifo
from .mcts import solve_mcts
from .resequence import solve_greedy_resequence

__all__ = ["SolveResult", "SolverBudget", "SubEvaluator", "solve_exact", "solve_fifo",
           "solve_mcts", "solve_greedy_resequence"]
