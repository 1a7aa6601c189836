"""Best-first branch and bound over the LP relaxation.

Nodes are ordered by their LP lower bound; branching fixes the binary whose
relaxed value is closest to 0.5 (ties to the lowest index). A node is fathomed
when its bound cannot beat the incumbent by more than 1e-9. When the problem
carries its structure, rounding the root relaxation seeds the incumbent.
"""
from __future__ import annotations

import heapq
import itertools
import time

import numpy as np

from .errors import Infeasible
from .milp import MilpProblem, Solution, evaluate_crf_assignment, greedy_crf_assignment
from .simplex import solve_lp


def solve_branch_and_bound(problem: MilpProblem, time_limit: float = 30.0,
                           integrality_tol: float = 1e-7,
                           fathom_tol: float = 1e-9) -> Solution:
    """Prove the MILP optimum, or return the best incumbent on timeout."""
    problem.validate()
    binaries = problem.binary_indices
    start = time.monotonic()
    counter = itertools.count()
    node_count = 0

    def lp(bounds):
        nonlocal node_count
        node_count += 1
        return solve_lp(problem, bounds)

    try:
        root = lp({})
    except Infeasible:
        return Solution(np.zeros(len(problem.variables)), np.inf, "infeasible", node_count)

    incumbent_value = np.inf
    incumbent = None

    def try_incumbent(value, assignment):
        nonlocal incumbent_value, incumbent
        if value < incumbent_value - fathom_tol:
            incumbent_value = value
            incumbent = np.asarray(assignment, dtype=float)

    if problem.structure is not None and binaries:
        # seed the incumbent: empty selection, rounded root, greedy construction
        for bits in (np.zeros(len(binaries)), np.round(root.assignment[binaries])):
            value, full = evaluate_crf_assignment(problem, bits)
            try_incumbent(value, full)
        value, full = greedy_crf_assignment(problem)
        try_incumbent(value, full)

    heap = [(root.objective_value, next(counter), {}, root)]
    timed_out = False
    while heap:
        if time.monotonic() - start > time_limit:
            timed_out = True
            break
        bound, _, fixed, relax = heapq.heappop(heap)
        if bound >= incumbent_value - fathom_tol:
            continue

        values = relax.assignment[binaries] if binaries else np.zeros(0)
        frac = np.abs(values - np.round(values)) > integrality_tol
        if not frac.any():
            try_incumbent(relax.objective_value, relax.assignment)
            continue

        # most fractional binary, lowest index on ties
        distances = np.where(frac, np.abs(values - 0.5), np.inf)
        pick = int(np.argmin(distances))
        var = binaries[pick]
        for side in (0.0, 1.0):
            child_fixed = dict(fixed)
            child_fixed[var] = (side, side)
            try:
                child = lp(child_fixed)
            except Infeasible:
                continue
            if child.objective_value < incumbent_value - fathom_tol:
                heapq.heappush(heap, (child.objective_value, next(counter), child_fixed, child))

    if incumbent is None:
        # every leaf was infeasible under the branching; only possible when
        # binaries interact with infeasible side constraints
        return Solution(np.zeros(len(problem.variables)), np.inf, "infeasible", node_count)

    assignment = incumbent.copy()
    bin_arr = np.asarray(binaries, dtype=int)
    if bin_arr.size:
        assignment[bin_arr] = np.round(assignment[bin_arr])
    status = "time_limit" if timed_out else "optimal"
    return Solution(assignment, float(incumbent_value), status, node_count)
