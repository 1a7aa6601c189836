import numpy as np
import pytest
from crf_instances import random_crf_milp, random_weights

from boxabs.branch_bound import solve_branch_and_bound
from boxabs.errors import Infeasible, TooLarge
from boxabs.milp import (
    Constraint,
    CrfStructure,
    MilpProblem,
    Variable,
    assemble_crf_milp,
    build_milp,
    selected_proposals,
    solve_exhaustive,
    write_lp,
)
from boxabs.potentials import CrfWeights
from boxabs.simplex import solve_lp


def weights(**kwargs):
    base = dict(mu_unary=np.ones(6), w=np.ones(6), mu_pairwise=2.0,
                mu_parsimony=0.05, mu_coverage=-3.0, mu_cooccurrence=-0.5)
    base.update(kwargs)
    return CrfWeights(**base)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def test_assemble_variable_count():
    fused = [0.1, -0.3, 0.2]
    pairwise = {(0, 1): 0.5, (1, 2): 0.8}
    coverage = [0.25, 0.25, 0.25, 0.25]
    incidence = [[0], [1], [2], [0, 2]]
    cooc = [[0.9], [], [0.4, 0.2]]
    problem = assemble_crf_milp(fused, pairwise, coverage, incidence, cooc, weights())
    assert len(problem.variables) == 3 + 2 + 4 + 3
    assert len(problem.structure.u) == 3
    assert len(problem.structure.gates) == 2  # proposals 0 and 2 have matches


def test_assemble_prunes_cooc_when_disabled():
    fused = [0.1, 0.2]
    problem = assemble_crf_milp(fused, {}, [1.0], [[0, 1]], [[], []],
                                weights(mu_cooccurrence=0.0))
    names = [v.name for v in problem.variables]
    assert names == ["v_0", "v_1", "s_0"]
    assert problem.structure.gates == []


def test_build_milp_skips_cooc_when_weight_zero():
    # cooc tables present, weight zero: no u variables or gate rows built
    fused = [0.1]
    via_assemble = assemble_crf_milp(fused, {}, [], [], [[]], weights())
    assert [v.name for v in via_assemble.variables] == ["v_0"]


def test_assemble_reference_audit(rng):
    for _ in range(20):
        problem, _ = random_crf_milp(rng, include_cooc=True)
        problem.validate()  # every constraint references declared variables
        for v in problem.variables:
            if v.kind == "binary":
                assert (v.lower, v.upper) == (0.0, 1.0)


# ---------------------------------------------------------------------------
# LP relaxation
# ---------------------------------------------------------------------------

def test_lp_single_lower_bound():
    problem = MilpProblem(
        [Variable("v1", "continuous", 0.0, 1.0)],
        {0: 1.0},
        [Constraint({0: 1.0}, ">=", 0.3)],
    )
    sol = solve_lp(problem)
    assert abs(sol.assignment[0] - 0.3) < 1e-9
    assert abs(sol.objective_value - 0.3) < 1e-9


def test_lp_contradictory_bounds_infeasible():
    problem = MilpProblem(
        [Variable("v1", "continuous", 0.0, 1.0)],
        {0: 1.0},
        [Constraint({0: 1.0}, ">=", 2.0), Constraint({0: 1.0}, "<=", 1.0)],
    )
    with pytest.raises(Infeasible):
        solve_lp(problem)


def test_lp_assignment_polytope_integral(rng):
    from boxabs.matching import bipartite_match

    n = 5
    w = rng.normal(size=(n, n))
    variables = [Variable(f"x_{i}_{j}", "continuous", 0.0, 1.0)
                 for i in range(n) for j in range(n)]
    objective = {i * n + j: float(w[i, j]) for i in range(n) for j in range(n)}
    constraints = []
    for i in range(n):
        constraints.append(Constraint({i * n + j: 1.0 for j in range(n)}, "=", 1.0))
    for j in range(n):
        constraints.append(Constraint({i * n + j: 1.0 for i in range(n)}, "=", 1.0))
    sol = solve_lp(MilpProblem(variables, objective, constraints))
    assert np.all(np.abs(sol.assignment - np.round(sol.assignment)) < 1e-7)
    assert abs(sol.objective_value - bipartite_match(w).total_weight) < 1e-9


def test_lp_respects_extra_bounds():
    problem = MilpProblem([Variable("v_0", "binary", 0.0, 1.0)], {0: -1.0}, [])
    assert solve_lp(problem).assignment[0] == pytest.approx(1.0)
    sol = solve_lp(problem, {0: (0.0, 0.0)})
    assert sol.assignment[0] == pytest.approx(0.0)
    with pytest.raises(Infeasible):
        solve_lp(problem, {0: (2.0, 1.0)})


# ---------------------------------------------------------------------------
# exhaustive solver
# ---------------------------------------------------------------------------

def test_exhaustive_empty_problem():
    sol = solve_exhaustive(MilpProblem([], {}, [], CrfStructure([], [], [], [], [])))
    assert sol.objective_value == 0.0
    assert sol.status == "optimal"


def test_exhaustive_single_profitable_proposal():
    problem = assemble_crf_milp([-1.0], {}, [], [], [[]], weights(mu_parsimony=0.05))
    sol = solve_exhaustive(problem)
    assert sol.assignment[0] == 1.0
    assert abs(sol.objective_value - (-0.95)) < 1e-12


def test_exhaustive_size_limit():
    problem = assemble_crf_milp(np.zeros(21), {}, [], [], [[] for _ in range(21)],
                                weights())
    with pytest.raises(TooLarge):
        solve_exhaustive(problem)


# ---------------------------------------------------------------------------
# branch and bound
# ---------------------------------------------------------------------------

def test_bnb_all_positive_costs_selects_nothing():
    problem = assemble_crf_milp([0.5, 0.2, 0.9], {(0, 1): 0.5}, [], [],
                                [[] for _ in range(3)],
                                weights(mu_coverage=0.0))
    sol = solve_branch_and_bound(problem)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(0.0, abs=1e-12)
    assert np.all(sol.assignment[:3] == 0.0)


def brute_force_instance_optimum(problem):
    """Independent enumeration of all binary assignments."""
    st = problem.structure
    n = len(st.v)
    best = np.inf
    for code in range(1 << n):
        bits = [(code >> k) & 1 for k in range(n)]
        value = 0.0
        for pos, idx in enumerate(st.v):
            value += problem.objective.get(idx, 0.0) * bits[pos]
        for idx, i, j in st.y:
            value += problem.objective.get(idx, 0.0) * bits[i] * bits[j]
        for idx, i in st.u:
            value += problem.objective.get(idx, 0.0) * bits[i]
        for idx, incident in st.s:
            coeff = problem.objective.get(idx, 0.0)
            gate = min(1, sum(bits[i] for i in incident))
            if coeff < 0:
                value += coeff * gate
        best = min(best, value)
    return best


def test_bnb_crafted_instance_matches_enumeration(rng):
    problem, _ = random_crf_milp(rng, max_proposals=6, min_proposals=6, include_cooc=True)
    sol = solve_branch_and_bound(problem)
    assert sol.status == "optimal"
    assert abs(sol.objective_value - brute_force_instance_optimum(problem)) <= 1e-9


def test_bnb_null_assignment_with_zero_coverage(rng):
    for _ in range(10):
        problem, _ = random_crf_milp(rng, max_proposals=8, positive_unary=True,
                                     weights=random_weights(rng, coverage=False))
        sol = solve_branch_and_bound(problem)
        assert sol.objective_value == pytest.approx(0.0, abs=1e-12)
        assert np.all(sol.assignment[problem.structure.v] == 0.0)


def test_bnb_matches_exhaustive_random(rng):
    for _ in range(25):
        problem, _ = random_crf_milp(rng, max_proposals=10, include_cooc=True)
        exact = solve_exhaustive(problem)
        bnb = solve_branch_and_bound(problem)
        assert bnb.status == "optimal"
        assert abs(bnb.objective_value - exact.objective_value) <= 1e-9


def test_bnb_linearization_semantics(rng):
    problem, _ = random_crf_milp(rng, max_proposals=8, include_cooc=True)
    sol = solve_branch_and_bound(problem)
    st = problem.structure
    v = sol.assignment
    for idx, i, j in st.y:
        assert v[idx] == pytest.approx(v[st.v[i]] * v[st.v[j]], abs=1e-7)
    for idx, i in st.u:
        assert v[idx] == pytest.approx(v[st.v[i]], abs=1e-7)


def test_root_bound_below_optimum_and_children_above_root(rng):
    for _ in range(5):
        problem, _ = random_crf_milp(rng, max_proposals=8)
        root = solve_lp(problem)
        exact = solve_exhaustive(problem)
        assert root.objective_value <= exact.objective_value + 1e-9
        for var in problem.structure.v:
            for side in (0.0, 1.0):
                try:
                    child = solve_lp(problem, {var: (side, side)})
                except Infeasible:
                    continue
                assert child.objective_value >= root.objective_value - 1e-9


def test_parsimony_monotone_on_exhaustive(rng):
    for _ in range(10):
        n = int(rng.integers(2, 9))
        fused = rng.uniform(-1.0, 1.0, n)
        pairwise = {(i, j): float(rng.uniform(0.05, 1.0))
                    for i in range(n) for j in range(i + 1, n) if rng.random() < 0.3}
        coverage = rng.dirichlet(np.ones(4))
        incidence = [list(map(int, np.nonzero(rng.random(n) < 0.4)[0])) for _ in range(4)]
        cooc = [[] for _ in range(n)]
        base = random_weights(rng)
        counts = []
        for mu_par in (base.mu_parsimony, 2 * base.mu_parsimony):
            w = base.replaced(mu_parsimony=mu_par)
            problem = assemble_crf_milp(fused, pairwise, coverage, incidence, cooc, w)
            sol = solve_exhaustive(problem)
            counts.append(int(np.sum(sol.assignment[problem.structure.v] > 0.5)))
        assert counts[1] <= counts[0]


# ---------------------------------------------------------------------------
# context integration and LP export
# ---------------------------------------------------------------------------

def test_build_milp_from_context_and_select(tmp_path):
    from boxabs.config import PipelineConfig
    from boxabs.potentials import build_shape_context
    from boxabs.synthetic import box_mesh

    mesh = box_mesh([0.0, 0.0, 0.0], [0.4, 0.3, 0.2])
    ctx = build_shape_context(mesh, PipelineConfig(), shape_id="box")
    problem = build_milp(ctx, weights())
    sol = solve_branch_and_bound(problem)
    assert sol.status == "optimal"
    chosen = selected_proposals(problem, sol)
    assert len(chosen) >= 1


def test_write_lp_grammar():
    problem = assemble_crf_milp([0.3, -0.2], {(0, 1): 0.4}, [0.6, 0.4], [[0], [1]],
                                [[0.5], []], weights())
    text = write_lp(problem)
    assert text.startswith("Minimize")
    for section in ("Subject To", "Bounds", "Binaries", "End"):
        assert section in text
    assert "v_0" in text and "y_0_1" in text and "s_1" in text and "u_0_0" in text
    assert " c0:" in text
