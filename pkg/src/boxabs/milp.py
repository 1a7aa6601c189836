"""MILP assembly for the selection energy, plus an exhaustive reference solver.

Variables: one binary selector per proposal, then continuous auxiliaries in
[0, 1]: pair products (overlap), per-region coverage gates, and co-occurrence
products against already-selected neighbor primitives (constants 1). The
exhaustive solver enumerates every binary assignment with the auxiliaries at
their forced or objective-optimal values; it shares no code with the LP-based
search and serves as its oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyContext, TooLarge
from .potentials import CrfWeights, ShapeContext, fuse_unary


@dataclass
class Variable:
    name: str
    kind: str            # "binary" | "continuous"
    lower: float
    upper: float

    def __post_init__(self):
        if self.kind not in ("binary", "continuous"):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == "binary" and (self.lower, self.upper) != (0.0, 1.0):
            raise ValueError("binary variables must have bounds [0, 1]")


@dataclass
class Constraint:
    coeffs: dict[int, float]
    sense: str           # "<=" | ">=" | "="
    rhs: float

    def __post_init__(self):
        if self.sense not in ("<=", ">=", "="):
            raise ValueError(f"unknown sense {self.sense!r}")


@dataclass
class CrfStructure:
    """Role map for variables, used by the exhaustive solver and heuristics."""

    v: list[int]                                 # binary selector indices
    y: list[tuple[int, int, int]]                # (var, v-position i, v-position j)
    s: list[tuple[int, tuple[int, ...]]]         # (var, incident v positions)
    u: list[tuple[int, int]]                     # (var, v-position i)
    gates: list[tuple[int, int]]                 # (v-position, matched count)


@dataclass
class MilpProblem:
    variables: list[Variable]
    objective: dict[int, float]
    constraints: list[Constraint]
    structure: CrfStructure | None = None

    def validate(self) -> None:
        n = len(self.variables)
        for idx in self.objective:
            if not 0 <= idx < n:
                raise ValueError(f"objective references unknown variable {idx}")
        for c in self.constraints:
            for idx in c.coeffs:
                if not 0 <= idx < n:
                    raise ValueError(f"constraint references unknown variable {idx}")

    @property
    def binary_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.kind == "binary"]


@dataclass
class Solution:
    assignment: np.ndarray
    objective_value: float
    status: str          # "optimal" | "infeasible" | "time_limit"
    node_count: int = 0

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=float)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def assemble_crf_milp(fused_unary, pairwise: dict[tuple[int, int], float],
                      coverage, incidence: list[list[int]],
                      cooc: list[list[float]], weights: CrfWeights) -> MilpProblem:
    """Build the selection MILP from precomputed costs.

    ``fused_unary``: per-proposal fused unary cost. ``pairwise``: overlap cost
    per proposal pair (only positive entries get a product variable).
    ``incidence``: per region, the proposals containing it. ``cooc``: per
    proposal, the IoUs of its matched neighbor primitives.
    """
    fused_unary = np.asarray(fused_unary, dtype=float)
    n = len(fused_unary)
    variables: list[Variable] = []
    objective: dict[int, float] = {}
    constraints: list[Constraint] = []
    structure = CrfStructure(v=[], y=[], s=[], u=[], gates=[])

    for i in range(n):
        idx = len(variables)
        variables.append(Variable(f"v_{i}", "binary", 0.0, 1.0))
        structure.v.append(idx)
        objective[idx] = float(fused_unary[i] + weights.mu_parsimony)

    for (i, j), cost in sorted(pairwise.items()):
        if cost <= 0.0:
            continue
        idx = len(variables)
        variables.append(Variable(f"y_{i}_{j}", "continuous", 0.0, 1.0))
        structure.y.append((idx, i, j))
        objective[idx] = float(weights.mu_pairwise * cost)
        vi, vj = structure.v[i], structure.v[j]
        constraints.append(Constraint({idx: 1.0, vi: -1.0}, "<=", 0.0))
        constraints.append(Constraint({idx: 1.0, vj: -1.0}, "<=", 0.0))
        constraints.append(Constraint({vi: 1.0, vj: 1.0, idx: -1.0}, "<=", 1.0))

    for k, cov in enumerate(np.asarray(coverage, dtype=float)):
        idx = len(variables)
        variables.append(Variable(f"s_{k}", "continuous", 0.0, 1.0))
        incident = tuple(int(i) for i in incidence[k]) if k < len(incidence) else ()
        structure.s.append((idx, incident))
        if weights.mu_coverage != 0.0:
            objective[idx] = float(weights.mu_coverage * cov)
        coeffs = {idx: 1.0}
        for i in incident:
            coeffs[structure.v[i]] = -1.0
        constraints.append(Constraint(coeffs, "<=", 0.0))

    for i, matched in enumerate(cooc):
        if not matched:
            continue
        vi = structure.v[i]
        for j, iou in enumerate(matched):
            idx = len(variables)
            variables.append(Variable(f"u_{i}_{j}", "continuous", 0.0, 1.0))
            structure.u.append((idx, i))
            if weights.mu_cooccurrence != 0.0:
                objective[idx] = float(weights.mu_cooccurrence * iou)
            # linearization against the matched neighbor primitive (constant 1)
            constraints.append(Constraint({idx: 1.0, vi: -1.0}, "<=", 0.0))
            constraints.append(Constraint({vi: 1.0, idx: -1.0}, "<=", 0.0))
        structure.gates.append((i, len(matched)))
        constraints.append(Constraint({vi: 1.0}, "<=", float(len(matched))))

    problem = MilpProblem(variables, objective, constraints, structure)
    problem.validate()
    return problem


def build_milp(ctx: ShapeContext, weights: CrfWeights) -> MilpProblem:
    """Assemble the energy for one shape context."""
    if not ctx.proposals:
        raise EmptyContext("no proposals to select from")
    fused = [fuse_unary(cv, weights) for cv in ctx.unary]
    cooc = ctx.cooc if weights.mu_cooccurrence != 0.0 else [[] for _ in ctx.proposals]
    return assemble_crf_milp(fused, ctx.overlap, ctx.coverage, ctx.incidence, cooc, weights)


def selected_proposals(problem: MilpProblem, solution) -> list[int]:
    """Indices of proposals chosen in a solved instance."""
    if problem.structure is None:
        raise ValueError("problem carries no structure")
    return [pos for pos, idx in enumerate(problem.structure.v)
            if solution.assignment[idx] > 0.5]


# ---------------------------------------------------------------------------
# exhaustive reference solver
# ---------------------------------------------------------------------------

def evaluate_crf_assignment(problem: MilpProblem, bits: np.ndarray) -> tuple[float, np.ndarray]:
    """Objective and full assignment for fixed binaries.

    Products are forced (y = v_i v_j, u = v_i); each coverage gate takes its
    objective-optimal feasible value.
    """
    st = problem.structure
    if st is None:
        raise ValueError("problem carries no structure")
    x = np.zeros(len(problem.variables))
    for pos, idx in enumerate(st.v):
        x[idx] = float(bits[pos])
    for idx, i, j in st.y:
        x[idx] = x[st.v[i]] * x[st.v[j]]
    for idx, i in st.u:
        x[idx] = x[st.v[i]]
    for idx, incident in st.s:
        gate = min(1.0, float(sum(x[st.v[i]] for i in incident)))
        coeff = problem.objective.get(idx, 0.0)
        x[idx] = gate if coeff < 0 else 0.0
    value = float(sum(coeff * x[idx] for idx, coeff in problem.objective.items()))
    return value, x


def greedy_crf_assignment(problem: MilpProblem) -> tuple[float, np.ndarray]:
    """Add-one-at-a-time construction used to seed branch and bound."""
    st = problem.structure
    if st is None:
        raise ValueError("problem carries no structure")
    n = len(st.v)
    bits = np.zeros(n)
    best_value, best_x = evaluate_crf_assignment(problem, bits)
    while True:
        candidate = None
        candidate_value = best_value - 1e-12
        for i in range(n):
            if bits[i]:
                continue
            bits[i] = 1.0
            value, _ = evaluate_crf_assignment(problem, bits)
            bits[i] = 0.0
            if value < candidate_value:
                candidate, candidate_value = i, value
        if candidate is None:
            break
        bits[candidate] = 1.0
        best_value, best_x = evaluate_crf_assignment(problem, bits)
    return best_value, best_x


def solve_exhaustive(problem: MilpProblem) -> Solution:
    """Enumerate all binary assignments; auxiliaries take induced values."""
    if not problem.variables:
        return Solution(np.zeros(0), 0.0, "optimal", node_count=1)
    st = problem.structure
    if st is None:
        raise ValueError("exhaustive solver needs the problem structure")
    n = len(st.v)
    if n > 20:
        raise TooLarge(f"{n} binaries exceed the exhaustive limit of 20")

    count = 1 << n
    codes = np.arange(count, dtype=np.int64)
    V = ((codes[:, None] >> np.arange(n)) & 1).astype(float)  # (count, n)

    obj = np.zeros(count)
    for pos, idx in enumerate(st.v):
        obj += problem.objective.get(idx, 0.0) * V[:, pos]
    for idx, i, j in st.y:
        obj += problem.objective.get(idx, 0.0) * V[:, i] * V[:, j]
    for idx, i in st.u:
        obj += problem.objective.get(idx, 0.0) * V[:, i]
    for idx, incident in st.s:
        coeff = problem.objective.get(idx, 0.0)
        if coeff < 0 and incident:
            gate = np.minimum(V[:, list(incident)].sum(axis=1), 1.0)
            obj += coeff * gate

    best = int(np.argmin(obj))
    value, x = evaluate_crf_assignment(problem, V[best])
    return Solution(x, value, "optimal", node_count=count)


# ---------------------------------------------------------------------------
# LP text export (grammar in docs/formats.md)
# ---------------------------------------------------------------------------

def write_lp(problem: MilpProblem) -> str:
    def term(coeff, name, lead):
        sign = "-" if coeff < 0 else ("" if lead else "+")
        return f"{sign} {abs(coeff):.12g} {name}".strip()

    lines = ["Minimize", " obj:"]
    parts = []
    for idx in sorted(problem.objective):
        coeff = problem.objective[idx]
        if coeff != 0.0:
            parts.append(term(coeff, problem.variables[idx].name, not parts))
    lines[1] += " " + (" ".join(parts) if parts else "0")

    lines.append("Subject To")
    for k, c in enumerate(problem.constraints):
        row = []
        for idx in sorted(c.coeffs):
            row.append(term(c.coeffs[idx], problem.variables[idx].name, not row))
        lines.append(f" c{k}: {' '.join(row)} {c.sense} {c.rhs:.12g}")

    lines.append("Bounds")
    for v in problem.variables:
        upper = "+inf" if np.isinf(v.upper) else f"{v.upper:.12g}"
        lines.append(f" {v.lower:.12g} <= {v.name} <= {upper}")

    binaries = [v.name for v in problem.variables if v.kind == "binary"]
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"
