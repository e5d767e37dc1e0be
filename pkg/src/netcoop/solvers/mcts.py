"""Monte Carlo tree search over single-intersection passing orders.

A node is a prefix of the passing sequence.  Expanding a node appends the
head of one lane chain, so lane precedence holds by construction.  Each new
node is scored by completing its prefix with FIFO and evaluating the
weighted sub-problem objective on the full sequence.  Selection is UCT on
the score normalised to [0, 1] over the scores seen so far (lower is
better).  Subtrees whose leaves have all been evaluated are marked
exhausted, so small instances are searched exactly.
"""

from __future__ import annotations

import math
import random
import time

from ..scheduling import SchedulingInstance
from .common import SolveResult, SolverBudget, SubEvaluator, carry_then_fifo, finish
from .fifo import fifo_sub


class _Node:
    __slots__ = ("state", "actions", "untried", "children", "visits", "total", "exhausted")

    def __init__(self, state, actions):
        self.state = state
        self.actions = actions
        self.untried = list(actions)
        self.children = {}
        self.visits = 0
        self.total = 0.0
        self.exhausted = not actions


def solve_mcts(inst: SchedulingInstance, budget: SolverBudget | None = None,
               warm_start=None, c: float = math.sqrt(2.0)) -> SolveResult:
    """Anytime search; ``warm_start`` is an optional previous sequence of ids."""
    budget = budget or SolverBudget()
    start = time.perf_counter()
    if not inst.vehicles:
        return SolveResult({}, 0.0, "mcts", solve_time=time.perf_counter() - start)
    ev = SubEvaluator(inst)
    fifo = fifo_sub(ev)
    if budget.zero:
        return finish(inst, ev.order(fifo), "mcts", start, fallback=True, complete=False)

    rng = random.Random(budget.seed)
    # keep a tenth of the wall-clock budget for building the result
    deadline = math.inf if budget.time_limit is None else start + 0.9 * budget.time_limit
    best_seq, best_val = fifo, ev.evaluate(fifo)
    if warm_start:
        ws = carry_then_fifo(ev, warm_start)
        val = ev.evaluate(ws)
        if val < best_val:
            best_seq, best_val = ws, val
    curve = [(0, best_val)]
    lo = hi = best_val

    root = _Node(ev.root, _actions(ev, ev.root))
    it = 0
    per_iter = 0.0
    while not root.exhausted:
        if budget.iterations is not None and it >= budget.iterations:
            break
        now = time.perf_counter()
        if now + per_iter > deadline:
            break
        it += 1
        # selection
        node, path, prefix = root, [root], []
        while not node.untried and node.children:
            node_ln = math.log(node.visits) if node.visits > 0 else 0.0
            span = hi - lo
            best_c, best_s = None, -math.inf
            for a in node.actions:
                ch = node.children[a]
                if ch.exhausted:
                    continue
                q = 1.0 if span <= 0 else (hi - ch.total / ch.visits) / span
                s = q + c * math.sqrt(node_ln / ch.visits)
                if s > best_s:
                    best_c, best_s = a, s
            node = node.children[best_c]
            path.append(node)
            prefix.append(best_c)
        # expansion
        if node.untried:
            a = node.untried.pop(rng.randrange(len(node.untried)))
            st = ev.push(node.state, a)
            child = _Node(st, _actions(ev, st))
            node.children[a] = child
            node = child
            path.append(child)
            prefix.append(a)
        # rollout
        val, suffix = ev.complete(node.state)
        if val < best_val:
            best_val = val
            best_seq = ev.prefix + prefix + suffix
            curve.append((it, val))
        lo, hi = min(lo, val), max(hi, val)
        # backpropagation
        for nd in path:
            nd.visits += 1
            nd.total += val
        for nd in reversed(path):
            if not nd.untried and all(ch.exhausted for ch in nd.children.values()):
                nd.exhausted = True
            else:
                break
        per_iter = (time.perf_counter() - start) / it
    return finish(inst, ev.order(best_seq), "mcts", start, iterations=it,
                  complete=root.exhausted, curve=curve)


def _actions(ev: SubEvaluator, st) -> list[int]:
    return sorted(ev.heads(st[3]), key=lambda i: ev.key[i])
