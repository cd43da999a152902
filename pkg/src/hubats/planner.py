"""Online Monte Carlo planning for the HUB-POMDP (active teacher selection).

Each step draws a root particle set from the exact belief, runs a fixed
number of POMCPOW simulations, acts, and folds the real observation back into
the exact belief.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from . import _search
from .episode import EpisodeLog
from .errors import ImpossibleObservationError, InvalidParameterError
from .hub import HubInstance, pull_arm, query_teacher
from .pomdp import (
    HubPomdpModel,
    HubState,
    Pull,
    initial_belief,
    update_belief,
)


class RolloutPolicy(str, Enum):
    RANDOM_ACTION = "random_action"
    RANDOM_ARM = "random_arm"
    BEST_ARM = "best_arm"


_KIND = {
    RolloutPolicy.RANDOM_ACTION: _search.RANDOM_ACTION,
    RolloutPolicy.RANDOM_ARM: _search.RANDOM_ARM,
    RolloutPolicy.BEST_ARM: _search.BEST_ARM,
}


@dataclass(frozen=True)
class PlannerParams:
    simulations_per_step: int = 1000
    max_depth: int = 30
    ucb_exploration: Optional[float] = None   # None: 0.1 * (u_max - u_min) / (1 - gamma)
    obs_widen_k: float = 3.0
    obs_widen_alpha: float = 0.15
    rollout_policy: RolloutPolicy = RolloutPolicy.BEST_ARM
    discount: Optional[float] = None          # None: the model's gamma
    max_root_particles: int = 1000
    exact_support_limit: int = 2048
    belief_values: bool = True

    def __post_init__(self):
        object.__setattr__(self, "rollout_policy", RolloutPolicy(self.rollout_policy))

    def validate(self, model: HubPomdpModel = None):
        if self.simulations_per_step < 1:
            raise InvalidParameterError("simulations_per_step must be >= 1")
        if self.max_depth < 1:
            raise InvalidParameterError("max_depth must be >= 1")
        if self.ucb_exploration is not None and self.ucb_exploration < 0:
            raise InvalidParameterError("ucb_exploration must be >= 0")
        if self.obs_widen_k <= 0 or not 0 <= self.obs_widen_alpha < 1:
            raise InvalidParameterError("need obs_widen_k > 0 and obs_widen_alpha in [0, 1)")
        if self.max_root_particles < 1 or self.exact_support_limit < 1:
            raise InvalidParameterError("particle limits must be positive")
        if model is not None and self.discount is not None and not math.isclose(self.discount, model.gamma):
            raise InvalidParameterError(
                f"planner discount {self.discount} differs from the hub's gamma {model.gamma}"
            )

    def resolve(self, model: HubPomdpModel) -> "PlannerParams":
        """Fill the model-dependent defaults."""
        gamma = model.gamma if self.discount is None else self.discount
        c = self.ucb_exploration
        if c is None:
            c = 0.1 * (model.u_max - model.u_min) / (1.0 - gamma)
        return replace(self, ucb_exploration=float(c), discount=float(gamma))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rollout_policy"] = self.rollout_policy.value
        return d


def root_particles(model: HubPomdpModel, belief, params: PlannerParams, rng: np.random.Generator):
    """Weighted root particles: the exact support when small, else a deduplicated sample."""
    sup = belief.support(model, params.exact_support_limit)
    if sup is not None:
        codes, w = sup
    else:
        n = min(params.simulations_per_step, params.max_root_particles)
        codes, counts = np.unique(belief.sample(model, rng, n), axis=0, return_counts=True)
        w = counts.astype(float)
    return np.ascontiguousarray(codes, dtype=np.int64), w / w.sum()


class SearchTree:
    """POMCPOW tree rooted at a weighted particle set.

    Thin holder for the compiled kernel's arrays; ``simulate`` runs one descent.
    """

    def __init__(self, model: HubPomdpModel, codes, weights, params: PlannerParams,
                 depth_limit: Optional[int] = None, capacity: Optional[int] = None):
        params = params.resolve(model)
        self.model = model
        self.params = params
        self.depth_limit = int(params.max_depth if depth_limit is None else min(depth_limit, params.max_depth))
        self.codes = codes
        self.weights = weights
        qt = model.query_teachers
        pv = model.arm_value_table[codes[:, [0]], codes[:, 1:]]
        self.model_arrays = (
            codes,
            np.ascontiguousarray(pv),
            model.d_table,
            np.cumsum(model.d_table, axis=1),
            np.ascontiguousarray(model.teacher_pref_tables[list(qt)]),
            model.pair_probs,
            np.cumsum(model.pair_probs),
            np.array([model.teachers[m].cost for m in qt], dtype=float),
            np.cumsum(weights),
        )
        self.param_array = np.array([
            model.n_arms, model.num_actions, self.depth_limit,
            _KIND[params.rollout_policy], params.discount, params.ucb_exploration,
            params.obs_widen_k, params.obs_widen_alpha, float(params.belief_values),
        ], dtype=float)
        cap = params.simulations_per_step if capacity is None else capacity
        self.capacity = int(cap)
        self.arrays = _search.new_tree(self.capacity, self.depth_limit, len(codes),
                                       model.num_actions, weights, self.model_arrays[1])

    def simulate(self, particle: int, depth: int = 0) -> float:
        if self.arrays[14][_search.C_NODES] >= self.capacity + 1:
            raise InvalidParameterError("search tree capacity exhausted")
        return float(_search.simulate(self.arrays, self.model_arrays, self.param_array,
                                      int(particle), int(depth)))

    def run(self, n_sims: int):
        _search.search(self.arrays, self.model_arrays, self.param_array, int(n_sims))

    @property
    def root_values(self) -> np.ndarray:
        return self.arrays[2][: self.model.num_actions].copy()

    @property
    def root_visits(self) -> np.ndarray:
        return self.arrays[1][: self.model.num_actions].copy()

    @property
    def size(self) -> int:
        return int(self.arrays[14][_search.C_NODES])

    @property
    def invigorations(self) -> int:
        return int(self.arrays[14][_search.C_INVIGORATED])

    def best_action_index(self) -> int:
        """Highest value; ties go to the most visited, then the lowest index."""
        q, n = self.root_values, self.root_visits
        tried = np.flatnonzero(n > 0)
        if len(tried) == 0:
            return 0
        return int(min(tried, key=lambda a: (-q[a], -n[a], a)))


def plan(model: HubPomdpModel, belief, params: PlannerParams, rng: np.random.Generator,
         remaining: Optional[int] = None, return_tree: bool = False):
    """Choose an action for ``belief``; deterministic given the generator state."""
    params.validate(model)
    codes, w = root_particles(model, belief, params, rng)
    tree = SearchTree(model, codes, w, params, depth_limit=remaining)
    _search.seed(int(rng.integers(2**31 - 1)))
    tree.run(params.simulations_per_step)
    action = model.actions[tree.best_action_index()]
    return (action, tree) if return_tree else action


def rollout_value(policy, model: HubPomdpModel, state, depth: int, rng: np.random.Generator,
                  belief=None, params: PlannerParams = PlannerParams()) -> float:
    """Return of one rollout of ``policy`` from ``state`` for ``depth`` steps.

    ``belief`` is only consulted by the best-arm policy, which commits to the
    arm with the highest expected utility under it (uniform if omitted).
    """
    params = replace(params, rollout_policy=RolloutPolicy(policy)).resolve(model)
    if isinstance(state, HubState):
        state = model.codes_of(state)
    state = np.asarray(state, dtype=np.int64).reshape(1, -1)
    if belief is None:
        belief = initial_belief(model)
    codes, w = root_particles(model, belief, params, rng)
    codes = np.vstack([codes, state])
    w = np.append(w, 0.0)
    tree = SearchTree(model, codes, w, params, capacity=1)
    _search.seed(int(rng.integers(2**31 - 1)))
    return float(_search.rollout(
        _KIND[params.rollout_policy], len(codes) - 1, 0, tree.arrays[15], tree.model_arrays[1],
        tree.model_arrays[7], model.n_arms, model.num_actions, params.discount, int(depth),
        params.belief_values,
    ))


def run_ats_episode(hub: HubInstance, model: HubPomdpModel, params: PlannerParams,
                    horizon: int, rng: np.random.Generator, name: Optional[str] = None,
                    diagnostics: Optional[list] = None) -> EpisodeLog:
    """Plan, act on the real hub, observe and update the belief for ``horizon`` steps."""
    log = EpisodeLog(name or f"ATS[{model.mode}]", hub.gamma)
    belief = initial_belief(model)
    nan = float("nan")
    for t in range(horizon):
        action, tree = plan(model, belief, params, rng, remaining=horizon - t, return_tree=True)
        if isinstance(action, Pull):
            obs, u = pull_arm(hub, action.arm, rng)
            kind, index, hidden, reward = "pull", action.arm, u, u
        else:
            m = model.resolve_teacher(action)
            obs, reward = query_teacher(hub, m, rng)
            kind, index, hidden = "query", m, nan
        flags = ""
        try:
            belief = update_belief(model, belief, action, obs)
        except ImpossibleObservationError:
            belief = initial_belief(model)
            flags = "belief-reset"
            log.events.append(f"t={t}: impossible observation {obs!r}; belief reset to uniform")
        if diagnostics is not None:
            diagnostics.append({
                "t": t, "tree_size": tree.size, "invigorations": tree.invigorations,
                "root_values": tree.root_values.tolist(), "root_visits": tree.root_visits.tolist(),
            })
        log.append(kind, index, obs, hidden, reward,
                   belief.mean_utility(model), belief.arm_estimates(model), flags)
    return log
