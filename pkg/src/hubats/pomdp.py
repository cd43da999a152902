"""Discrete POMDP over hidden utility functions and arm distributions.

The hidden state is a pair (utility function, joint arm distributions), both
restricted to finite grids. The state never changes; actions either pull an
arm (observe an item, earn the arm's expected utility) or query a teacher
(observe a preference, pay the teacher's cost).

States are addressed by integer codes ``(u, d_1, ..., d_K)``: ``u`` indexes a
row of ``u_table`` (one utility function per row) and ``d_k`` a row of
``d_table`` (one simplex point per row). When no state filter is applied the
state space is the full product and its beliefs factorise exactly, because
pulls only inform the pulled arm's distribution and queries only inform the
utility function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, product
from typing import Callable, Optional, Union

import numpy as np

from .errors import (
    EmptyStateSpaceError,
    ImpossibleObservationError,
    InvalidIndexError,
    InvalidParameterError,
)
from .hub import (
    HubInstance,
    ItemSample,
    PreferenceSample,
    QueryProfile,
    Teacher,
    boltzmann_preference,
    preference_matrix,
)

DENSE_LIMIT = 10**6


@dataclass(frozen=True)
class UtilityGrid:
    levels: tuple[float, ...]

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        if not levels:
            raise InvalidParameterError("utility grid needs at least one level")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise InvalidParameterError("utility levels must be strictly increasing")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def linspace(cls, u_min: float, u_max: float, n: int) -> "UtilityGrid":
        return cls(tuple(np.linspace(u_min, u_max, n).tolist()))

    @property
    def u_min(self) -> float:
        return self.levels[0]

    @property
    def u_max(self) -> float:
        return self.levels[-1]

    def functions(self, n_items: int) -> np.ndarray:
        """Every utility function on the grid, one per row, in product order."""
        return np.array(list(product(self.levels, repeat=n_items)), dtype=float).reshape(-1, n_items)


@dataclass(frozen=True)
class SimplexGrid:
    resolution: int

    def __post_init__(self):
        if int(self.resolution) < 2:
            raise InvalidParameterError("simplex resolution must be >= 2")

    def points(self, n_items: int) -> np.ndarray:
        """All distributions whose entries are multiples of ``1/resolution``."""
        R = int(self.resolution)
        rows = []
        # stars and bars, in lexicographic order of bar positions
        for bars in combinations(range(R + n_items - 1), n_items - 1):
            prev, parts = -1, []
            for b in bars:
                parts.append(b - prev - 1)
                prev = b
            parts.append(R + n_items - 2 - prev)
            rows.append(parts)
        return np.array(rows, dtype=float) / R


@dataclass(frozen=True)
class HubState:
    utility: tuple[float, ...]
    arm_dists: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class Pull:
    arm: int


@dataclass(frozen=True)
class QuerySpecific:
    teacher: int


@dataclass(frozen=True)
class QueryGeneral:
    pass


PomdpAction = Union[Pull, QuerySpecific, QueryGeneral]


def enumerate_states(n_items: int, n_arms: int, u_grid: UtilityGrid, d_grid: SimplexGrid,
                     state_filter: Optional[Callable[[HubState], bool]] = None) -> list:
    """Materialise the (optionally filtered) product state space as HubStates."""
    U = u_grid.functions(n_items)
    D = d_grid.points(n_items)
    states = []
    for u in U:
        ut = tuple(u.tolist())
        for ds in product(range(len(D)), repeat=n_arms):
            s = HubState(ut, tuple(tuple(D[d].tolist()) for d in ds))
            if state_filter is None or state_filter(s):
                states.append(s)
    if not states:
        raise EmptyStateSpaceError("no state satisfies the filter")
    return states


class HubPomdpModel:
    """Planner-side model of a hub.

    Parameters
    ----------
    u_table, d_table:
        Candidate utility functions (rows of length N) and candidate arm
        distributions (rows summing to one), shared by every arm.
    teachers, query_profile, gamma:
        Observable hub parameters.
    mode:
        ``"specific"`` exposes one query action per teacher, ``"general"`` a
        single query action answered by ``general_teacher``.
    state_codes:
        Optional explicit ``(S, K + 1)`` array of allowed states. ``None``
        means the full product of the two tables.
    """

    def __init__(self, n_arms: int, u_table, d_table, teachers, query_profile: QueryProfile,
                 gamma: float, mode: str = "specific", general_teacher: Optional[int] = None,
                 state_codes=None, u_range=None):
        self.u_table = np.asarray(u_table, dtype=float)
        self.d_table = np.asarray(d_table, dtype=float)
        self.n_items = self.u_table.shape[1]
        self.n_arms = int(n_arms)
        self.teachers = tuple(teachers)
        self.query_profile = query_profile
        self.gamma = float(gamma)
        if mode not in ("specific", "general"):
            raise InvalidParameterError(f"unknown teacher-selection mode {mode!r}")
        self.mode = mode
        if general_teacher is None:
            general_teacher = len(self.teachers) // 2
        self.general_teacher = int(general_teacher)
        self.state_codes = None if state_codes is None else np.asarray(state_codes, dtype=np.int64)
        if self.state_codes is not None and len(self.state_codes) == 0:
            raise EmptyStateSpaceError("model has no states")
        if u_range is None:
            u_range = (float(self.u_table.min()), float(self.u_table.max()))
        self.u_min, self.u_max = map(float, u_range)
        self.pairs = tuple(combinations(range(self.n_items), 2))

    # construction -----------------------------------------------------------

    @classmethod
    def from_grids(cls, n_items, n_arms, u_grid: UtilityGrid, d_grid: SimplexGrid, teachers,
                   query_profile, gamma, mode="specific", general_teacher=None,
                   state_filter=None) -> "HubPomdpModel":
        U = u_grid.functions(n_items)
        D = d_grid.points(n_items)
        codes = None
        if state_filter is not None:
            kept = []
            for u in range(len(U)):
                ut = tuple(U[u].tolist())
                for ds in product(range(len(D)), repeat=n_arms):
                    s = HubState(ut, tuple(tuple(D[d].tolist()) for d in ds))
                    if state_filter(s):
                        kept.append((u, *ds))
            if not kept:
                raise EmptyStateSpaceError("no state satisfies the filter")
            codes = np.array(kept, dtype=np.int64)
        return cls(n_arms, U, D, teachers, query_profile, gamma, mode, general_teacher,
                   codes, (u_grid.u_min, u_grid.u_max))

    @classmethod
    def for_hub(cls, hub: HubInstance, u_grid: UtilityGrid, d_grid: SimplexGrid,
                mode="specific", general_teacher=None) -> "HubPomdpModel":
        return cls.from_grids(hub.n_items, hub.n_arms, u_grid, d_grid, hub.teachers,
                              hub.query_profile, hub.gamma, mode, general_teacher)

    # state space --------------------------------------------------------------

    @property
    def is_product(self) -> bool:
        return self.state_codes is None

    @property
    def num_states(self) -> int:
        if self.state_codes is not None:
            return len(self.state_codes)
        return len(self.u_table) * len(self.d_table) ** self.n_arms

    def decode(self, idx) -> np.ndarray:
        """State codes for one or many state indices."""
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        if self.state_codes is not None:
            return self.state_codes[idx]
        nd = len(self.d_table)
        out = np.empty((len(idx), self.n_arms + 1), dtype=np.int64)
        rest = idx.copy()
        for k in range(self.n_arms, 0, -1):
            out[:, k] = rest % nd
            rest //= nd
        out[:, 0] = rest
        return out

    def state(self, idx: int) -> HubState:
        c = self.decode(idx)[0]
        return self.state_from_codes(c)

    def state_from_codes(self, codes) -> HubState:
        return HubState(
            tuple(self.u_table[codes[0]].tolist()),
            tuple(tuple(self.d_table[d].tolist()) for d in codes[1:]),
        )

    @property
    def states(self) -> list:
        if self.num_states > DENSE_LIMIT:
            raise InvalidParameterError(f"refusing to materialise {self.num_states} states")
        return [self.state(i) for i in range(self.num_states)]

    def codes_of(self, state: HubState) -> np.ndarray:
        """Grid codes of a state; raises if the state is off-grid."""
        u = np.flatnonzero(np.all(np.isclose(self.u_table, state.utility), axis=1))
        if len(u) == 0:
            raise InvalidParameterError("utility function not on the grid")
        codes = [int(u[0])]
        for dist in state.arm_dists:
            d = np.flatnonzero(np.all(np.isclose(self.d_table, dist), axis=1))
            if len(d) == 0:
                raise InvalidParameterError("arm distribution not on the grid")
            codes.append(int(d[0]))
        return np.array(codes, dtype=np.int64)

    def true_state_codes(self, hub: HubInstance) -> np.ndarray:
        return self.codes_of(HubState(hub.utility.values, tuple(a.probs for a in hub.arms)))

    # actions ----------------------------------------------------------------

    @cached_property
    def actions(self) -> tuple:
        pulls = tuple(Pull(k) for k in range(self.n_arms))
        if self.mode == "specific":
            return pulls + tuple(QuerySpecific(m) for m in range(len(self.teachers)))
        return pulls + (QueryGeneral(),)

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def action_index(self, action: PomdpAction) -> int:
        return self.actions.index(action)

    def check_action(self, action: PomdpAction):
        if isinstance(action, Pull):
            if not 0 <= action.arm < self.n_arms:
                raise InvalidIndexError(f"arm {action.arm} out of range")
        elif isinstance(action, QuerySpecific):
            if self.mode != "specific":
                raise InvalidParameterError("specific query in a general-selection model")
            if not 0 <= action.teacher < len(self.teachers):
                raise InvalidIndexError(f"teacher {action.teacher} out of range")
        elif isinstance(action, QueryGeneral):
            if self.mode != "general":
                raise InvalidParameterError("general query in a specific-selection model")
        else:
            raise InvalidParameterError(f"unknown action {action!r}")

    def resolve_teacher(self, action: PomdpAction) -> int:
        """Physical teacher answering a query action."""
        if isinstance(action, QuerySpecific):
            return action.teacher
        if isinstance(action, QueryGeneral):
            return self.general_teacher
        raise InvalidParameterError(f"{action!r} is not a query")

    @property
    def query_teachers(self) -> tuple:
        """Teacher index behind each query action, in action order."""
        if self.mode == "specific":
            return tuple(range(len(self.teachers)))
        return (self.general_teacher,)

    # tables used by beliefs and the planner ---------------------------------

    @cached_property
    def arm_value_table(self) -> np.ndarray:
        """``[u, d]`` expected utility of simplex point ``d`` under utility row ``u``."""
        return self.u_table @ self.d_table.T

    @cached_property
    def pair_array(self) -> np.ndarray:
        return np.array(self.pairs, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def pair_probs(self) -> np.ndarray:
        return np.array([self.query_profile.prob(i, j) for i, j in self.pairs])

    @cached_property
    def teacher_pref_tables(self) -> np.ndarray:
        """``[m, u, q]`` probability that teacher m prefers the first item of pair q."""
        if not self.teachers:
            return np.zeros((0, len(self.u_table), len(self.pairs)))
        return np.stack([
            preference_matrix(t.beta, self.u_table, self.pair_array) for t in self.teachers
        ])

    # model functions ----------------------------------------------------------

    def reward(self, state: HubState, action: PomdpAction) -> float:
        self.check_action(action)
        if isinstance(action, Pull):
            return float(np.dot(state.utility, state.arm_dists[action.arm]))
        return float(self.teachers[self.resolve_teacher(action)].cost)

    def observation_space(self, action: PomdpAction) -> list:
        self.check_action(action)
        if isinstance(action, Pull):
            return [ItemSample(action.arm, i) for i in range(self.n_items)]
        m = self.resolve_teacher(action)
        return [
            PreferenceSample(m, (i, j), p)
            for i in range(self.n_items) for j in range(self.n_items) if i != j
            for p in (True, False)
        ]

    def observation_probability(self, state: HubState, action: PomdpAction, obs) -> float:
        """Probability of ``obs`` after ``action`` in ``state``.

        Query observations carry the presented order, which is uniform, so an
        ordered pair has half the probability of its unordered pair.
        """
        self.check_action(action)
        if isinstance(action, Pull):
            if not isinstance(obs, ItemSample) or obs.arm != action.arm:
                raise InvalidParameterError(f"observation {obs!r} does not match {action!r}")
            return float(state.arm_dists[action.arm][obs.item])
        m = self.resolve_teacher(action)
        if not isinstance(obs, PreferenceSample) or obs.teacher != m:
            raise InvalidParameterError(f"observation {obs!r} does not match {action!r}")
        i, j = obs.pair
        p = boltzmann_preference(i, j, self.teachers[m].beta, state.utility)
        q = 0.5 * self.query_profile.prob(i, j)
        return q * (p if obs.preferred_first else 1.0 - p)

    # vectorised likelihoods ---------------------------------------------------

    def utility_likelihood(self, obs: PreferenceSample) -> np.ndarray:
        """Likelihood of a preference observation for every utility row."""
        i, j = obs.pair
        a, b = min(i, j), max(i, j)
        q = self.pairs.index((a, b))
        p_first = self.teacher_pref_tables[obs.teacher][:, q]
        winner = i if obs.preferred_first else j
        lik = p_first if winner == a else 1.0 - p_first
        return 0.5 * self.pair_probs[q] * lik

    def item_likelihood(self, obs: ItemSample) -> np.ndarray:
        return self.d_table[:, obs.item]


class Belief:
    """Dense distribution over the model's enumerated states."""

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=float)

    def sample(self, model: HubPomdpModel, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        return model.decode(idx)

    def support(self, model: HubPomdpModel, limit: int):
        nz = np.flatnonzero(self.weights > 0)
        if len(nz) > limit:
            return None
        return model.decode(nz), self.weights[nz]

    def mean_utility(self, model: HubPomdpModel) -> np.ndarray:
        codes = model.decode(np.arange(len(self.weights)))
        return self.weights @ model.u_table[codes[:, 0]]

    def arm_estimates(self, model: HubPomdpModel) -> np.ndarray:
        codes = model.decode(np.arange(len(self.weights)))
        vals = np.stack([model.arm_value_table[codes[:, 0], codes[:, 1 + k]]
                         for k in range(model.n_arms)], axis=1)
        return self.weights @ vals

    def entropy(self) -> float:
        w = self.weights[self.weights > 0]
        return float(-(w * np.log(w)).sum())


class FactoredBelief:
    """Exact belief over a full product state space.

    Utility and per-arm distribution marginals are independent under a uniform
    prior and stay independent after every observation.
    """

    def __init__(self, u_weights, arm_weights):
        self.u_weights = np.asarray(u_weights, dtype=float)
        self.arm_weights = np.asarray(arm_weights, dtype=float)

    @property
    def weights(self) -> np.ndarray:
        """Joint weights in the model's state order (small models only)."""
        n = len(self.u_weights) * self.arm_weights.shape[1] ** len(self.arm_weights)
        if n > DENSE_LIMIT:
            raise InvalidParameterError(f"joint belief over {n} states is too large to expand")
        w = self.u_weights
        for row in self.arm_weights:
            w = np.multiply.outer(w, row).ravel()
        return w

    def sample(self, model: HubPomdpModel, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.empty((n, model.n_arms + 1), dtype=np.int64)
        out[:, 0] = rng.choice(len(self.u_weights), size=n, p=self.u_weights)
        for k, row in enumerate(self.arm_weights):
            out[:, 1 + k] = rng.choice(len(row), size=n, p=row)
        return out

    def support(self, model: HubPomdpModel, limit: int):
        us = np.flatnonzero(self.u_weights > 0)
        ds = [np.flatnonzero(row > 0) for row in self.arm_weights]
        size = len(us) * math.prod(len(d) for d in ds)
        if size > limit:
            return None
        grids = np.meshgrid(us, *ds, indexing="ij")
        codes = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
        w = self.u_weights[codes[:, 0]].copy()
        for k in range(model.n_arms):
            w *= self.arm_weights[k][codes[:, 1 + k]]
        return codes, w

    def mean_utility(self, model: HubPomdpModel) -> np.ndarray:
        return self.u_weights @ model.u_table

    def mean_arm_distributions(self, model: HubPomdpModel) -> np.ndarray:
        return self.arm_weights @ model.d_table

    def arm_estimates(self, model: HubPomdpModel) -> np.ndarray:
        return self.mean_arm_distributions(model) @ self.mean_utility(model)

    def entropy(self) -> float:
        h = 0.0
        for w in (self.u_weights, *self.arm_weights):
            w = w[w > 0]
            h -= float((w * np.log(w)).sum())
        return h


def initial_belief(model: HubPomdpModel):
    """Uniform belief over every state of the model."""
    if model.is_product:
        nd = len(model.d_table)
        return FactoredBelief(
            np.full(len(model.u_table), 1.0 / len(model.u_table)),
            np.full((model.n_arms, nd), 1.0 / nd),
        )
    n = model.num_states
    return Belief(np.full(n, 1.0 / n))


def _normalise(w: np.ndarray, what: str) -> np.ndarray:
    total = w.sum()
    if not total > 0:
        raise ImpossibleObservationError(f"observation has zero probability under the belief ({what})")
    return w / total


def update_belief(model: HubPomdpModel, belief, action: PomdpAction, obs):
    """Bayes update with the identity transition; returns a new belief."""
    model.check_action(action)
    if isinstance(action, Pull):
        if not isinstance(obs, ItemSample) or obs.arm != action.arm:
            raise InvalidParameterError(f"observation {obs!r} does not match {action!r}")
        lik = model.item_likelihood(obs)
        if isinstance(belief, FactoredBelief):
            arms = belief.arm_weights.copy()
            arms[action.arm] = _normalise(arms[action.arm] * lik, f"arm {action.arm}")
            return FactoredBelief(belief.u_weights, arms)
        codes = model.decode(np.arange(len(belief.weights)))
        return Belief(_normalise(belief.weights * lik[codes[:, 1 + action.arm]], "joint"))

    if not isinstance(obs, PreferenceSample) or obs.teacher != model.resolve_teacher(action):
        raise InvalidParameterError(f"observation {obs!r} does not match {action!r}")
    lik = model.utility_likelihood(obs)
    if isinstance(belief, FactoredBelief):
        return FactoredBelief(_normalise(belief.u_weights * lik, "utility"), belief.arm_weights)
    codes = model.decode(np.arange(len(belief.weights)))
    return Belief(_normalise(belief.weights * lik[codes[:, 0]], "joint"))
