"""Random selection-energy instances for solver tests and acceptance runs."""
import numpy as np

from boxabs.milp import assemble_crf_milp
from boxabs.potentials import CrfWeights


def random_weights(rng, cooc=False, coverage=True):
    return CrfWeights(
        mu_unary=np.ones(6),
        w=np.ones(6),
        mu_pairwise=float(rng.uniform(0.5, 3.0)),
        mu_parsimony=float(rng.uniform(0.01, 0.3)),
        mu_coverage=-float(rng.uniform(0.5, 4.0)) if coverage else 0.0,
        mu_cooccurrence=-float(rng.uniform(0.1, 1.0)) if cooc else 0.0,
    )


def random_crf_milp(rng, max_proposals=12, max_regions=10, min_proposals=2,
                    include_cooc=False, positive_unary=False, weights=None):
    """Instance with random fused unary costs, overlaps, coverage, incidence."""
    n = int(rng.integers(min_proposals, max_proposals + 1))
    r = int(rng.integers(1, max_regions + 1))
    if weights is None:
        weights = random_weights(rng, cooc=include_cooc)
    if positive_unary:
        fused = rng.uniform(0.05, 1.5, n)
    else:
        fused = rng.uniform(-1.0, 1.5, n)
    pairwise = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.3:
                pairwise[(i, j)] = float(rng.uniform(0.05, 1.0))
    coverage = rng.dirichlet(np.ones(r))
    incidence = [list(map(int, np.nonzero(rng.random(n) < 0.3)[0])) for _ in range(r)]
    if include_cooc:
        cooc = [[float(rng.uniform(0.1, 1.0)) for _ in range(int(rng.integers(0, 3)))]
                for _ in range(n)]
    else:
        cooc = [[] for _ in range(n)]
    problem = assemble_crf_milp(fused, pairwise, coverage, incidence, cooc, weights)
    return problem, weights
