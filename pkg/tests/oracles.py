"""Independent reference computations used by the tests.

These work on explicit ``HubState`` objects through the model's scalar
reward and observation functions, never through the compiled search.
"""

import numpy as np

from hubats.hub import QueryProfile
from hubats.pomdp import HubPomdpModel, SimplexGrid, UtilityGrid

STATE_A = ((10.0, 0.0), ((0.75, 0.25), (0.5, 0.5)))
STATE_B = ((10.0, 0.0), ((0.25, 0.75), (1.0, 0.0)))


def two_state_model(gamma=0.9):
    """Two arms, no teachers, two hidden states with informative pulls."""
    keep = {STATE_A, STATE_B}
    return HubPomdpModel.from_grids(
        2, 2, UtilityGrid((0.0, 10.0)), SimplexGrid(4), (), QueryProfile.uniform(2), gamma,
        state_filter=lambda s: (s.utility, s.arm_dists) in keep,
    )


def expectimax(model, b, depth):
    """Exhaustive finite-horizon Bayes-optimal values: returns (value, q-values)."""
    if depth == 0:
        return 0.0, []
    states = [model.state(i) for i in range(model.num_states)]
    qs = []
    for a in model.actions:
        q = sum(w * model.reward(s, a) for w, s in zip(b, states))
        for o in model.observation_space(a):
            lik = np.array([model.observation_probability(s, a, o) for s in states])
            po = float(lik @ b)
            if po > 0:
                q += model.gamma * po * expectimax(model, lik * b / po, depth - 1)[0]
        qs.append(q)
    return max(qs), qs


def truncated_geometric(value, gamma, depth):
    return value * (1.0 - gamma ** depth) / (1.0 - gamma)
