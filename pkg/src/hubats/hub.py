"""Hidden Utility Bandit environment.

A hub holds a set of items with hidden utilities, stochastic arms that emit
items, and Boltzmann-rational teachers that answer pairwise preference
queries at a cost. The agent never sees utilities directly: pulling an arm
reveals the item, querying a teacher reveals a noisy comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InvalidIndexError, InvalidParameterError

PROB_TOL = 1e-9


@dataclass(frozen=True)
class UtilityFunction:
    values: tuple[float, ...]
    u_min: float
    u_max: float

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __getitem__(self, item: int) -> float:
        return self.values[item]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ArmDistribution:
    probs: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


@dataclass(frozen=True)
class Teacher:
    """Boltzmann-rational teacher; ``cost`` is the (non-positive) query reward."""

    beta: float
    cost: float = 0.0
    name: str = ""


@dataclass(frozen=True)
class QueryProfile:
    """Distribution over unordered item pairs ``(i, j)`` with ``i < j``."""

    pairs: tuple[tuple[int, int], ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(i), int(j)) for i, j in self.pairs))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    @classmethod
    def uniform(cls, n_items: int) -> "QueryProfile":
        pairs = tuple(combinations(range(n_items), 2))
        return cls(pairs, tuple(1.0 / len(pairs) for _ in pairs))

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def prob(self, i: int, j: int) -> float:
        """Probability of the unordered pair {i, j} (0 if absent)."""
        key = (min(i, j), max(i, j))
        for pair, p in zip(self.pairs, self.probs):
            if pair == key:
                return p
        return 0.0


@dataclass(frozen=True)
class HubInstance:
    items: tuple[str, ...]
    utility: UtilityFunction
    arms: tuple[ArmDistribution, ...]
    teachers: tuple[Teacher, ...]
    query_profile: QueryProfile
    gamma: float
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def n_teachers(self) -> int:
        return len(self.teachers)

    @cached_property
    def arm_matrix(self) -> np.ndarray:
        return np.vstack([a.array for a in self.arms])

    @cached_property
    def arm_values(self) -> np.ndarray:
        """True expected utility of every arm."""
        return self.arm_matrix @ self.utility.array

    @cached_property
    def best_arm(self) -> int:
        return int(np.argmax(self.arm_values))

    def with_costs(self, costs) -> "HubInstance":
        teachers = tuple(
            Teacher(t.beta, float(c), t.name) for t, c in zip(self.teachers, costs)
        )
        return HubInstance(
            self.items, self.utility, self.arms, teachers, self.query_profile,
            self.gamma, dict(self.meta),
        )


@dataclass(frozen=True)
class ItemSample:
    arm: int
    item: int


@dataclass(frozen=True)
class PreferenceSample:
    teacher: int
    pair: tuple[int, int]
    preferred_first: bool


AgentObservation = Union[ItemSample, PreferenceSample]


def boltzmann_preference(i: int, j: int, beta: float, u) -> float:
    """Probability that a teacher with rationality ``beta`` prefers item i to j.

    Uses the max-subtracted form so large ``beta * u`` never overflows.
    """
    if i == j:
        raise InvalidParameterError("preference requires two distinct items")
    ui, uj = float(u[i]), float(u[j])
    if not (math.isfinite(beta) and math.isfinite(ui) and math.isfinite(uj)):
        raise InvalidParameterError(f"non-finite beta or utility: beta={beta}, u=({ui}, {uj})")
    if beta < 0:
        raise InvalidParameterError(f"beta must be non-negative, got {beta}")
    a, b = beta * ui, beta * uj
    m = max(a, b)
    ea, eb = math.exp(a - m), math.exp(b - m)
    return ea / (ea + eb)


def preference_matrix(beta: float, utilities: np.ndarray, pairs) -> np.ndarray:
    """Vectorised preference probabilities for many utility rows.

    ``utilities`` has shape (R, N); returns (R, len(pairs)) with the probability
    that the first item of each pair is preferred.
    """
    utilities = np.asarray(utilities, dtype=float)
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    diff = utilities[:, pairs[:, 0]] - utilities[:, pairs[:, 1]]
    # logistic in the branch-free stable form
    z = beta * diff
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def expected_arm_utility(u, d) -> float:
    uv = u.array if isinstance(u, UtilityFunction) else np.asarray(u, dtype=float)
    dv = d.array if isinstance(d, ArmDistribution) else np.asarray(d, dtype=float)
    if uv.shape != dv.shape:
        raise InvalidParameterError(
            f"utility over {uv.shape[0]} items but distribution over {dv.shape[0]}"
        )
    return float(uv @ dv)


def _check_arm(hub: HubInstance, arm: int):
    if not 0 <= arm < hub.n_arms:
        raise InvalidIndexError(f"arm {arm} out of range [0, {hub.n_arms})")


def _check_teacher(hub: HubInstance, teacher: int):
    if not 0 <= teacher < hub.n_teachers:
        raise InvalidIndexError(f"teacher {teacher} out of range [0, {hub.n_teachers})")


def pull_arm(hub: HubInstance, arm: int, rng: np.random.Generator):
    """Sample an item from ``arm``.

    Returns ``(ItemSample, hidden_utility)``. The utility is the reward the
    agent receives but must not be shown to it.
    """
    _check_arm(hub, arm)
    probs = hub.arms[arm].array
    item = int(rng.choice(len(probs), p=probs))
    return ItemSample(arm, item), hub.utility.values[item]


def query_teacher(hub: HubInstance, teacher: int, rng: np.random.Generator):
    """Ask ``teacher`` to compare a pair drawn from the query profile.

    The pair is presented in uniformly random order. Returns
    ``(PreferenceSample, reward)`` where reward is the teacher's cost.
    """
    _check_teacher(hub, teacher)
    qp = hub.query_profile
    a, b = qp.pairs[int(rng.choice(len(qp.pairs), p=qp.array))]
    if rng.random() < 0.5:
        a, b = b, a
    t = hub.teachers[teacher]
    p = boltzmann_preference(a, b, t.beta, hub.utility.values)
    return PreferenceSample(teacher, (a, b), bool(rng.random() < p)), t.cost


def validate_hub(hub: HubInstance) -> list[str]:
    """List every violated invariant; an empty list means the hub is well formed."""
    out = []
    n = hub.n_items
    if n < 2:
        out.append(f"items: need at least 2 items, got {n}")
    u = hub.utility
    if not u.u_min < u.u_max:
        out.append(f"utility: u_min ({u.u_min}) must be < u_max ({u.u_max})")
    if len(u.values) != n:
        out.append(f"utility: defines {len(u.values)} values for {n} items")
    for i, v in enumerate(u.values):
        if not math.isfinite(v) or not u.u_min <= v <= u.u_max:
            out.append(f"utility[{i}]: value {v} outside [{u.u_min}, {u.u_max}]")
    if hub.n_arms < 2:
        out.append(f"arms: need at least 2 arms, got {hub.n_arms}")
    for k, arm in enumerate(hub.arms):
        if len(arm.probs) != n:
            out.append(f"arms[{k}]: {len(arm.probs)} probabilities for {n} items")
        if any(p < 0 for p in arm.probs):
            out.append(f"arms[{k}]: negative probability")
        if abs(sum(arm.probs) - 1.0) > PROB_TOL:
            out.append(f"arms[{k}]: probabilities sum to {sum(arm.probs)!r}, not 1")
    if hub.n_teachers < 1:
        out.append("teachers: need at least one teacher")
    for m, t in enumerate(hub.teachers):
        if not math.isfinite(t.beta) or t.beta < 0:
            out.append(f"teachers[{m}]: beta {t.beta} must be finite and >= 0")
        if not math.isfinite(t.cost) or t.cost > 0:
            out.append(f"teachers[{m}]: cost {t.cost} must be finite and <= 0")
    qp = hub.query_profile
    if len(qp.pairs) != len(qp.probs):
        out.append("query_profile: pairs and probs differ in length")
    seen = set()
    for (i, j), p in zip(qp.pairs, qp.probs):
        if i == j:
            out.append(f"query_profile: self-pair ({i}, {j})")
        if not (0 <= i < n and 0 <= j < n):
            out.append(f"query_profile: pair ({i}, {j}) references unknown item")
        key = (min(i, j), max(i, j))
        if key in seen:
            out.append(f"query_profile: duplicate pair {key}")
        seen.add(key)
        if p < 0:
            out.append(f"query_profile: negative probability for {key}")
    if qp.probs and abs(sum(qp.probs) - 1.0) > PROB_TOL:
        out.append(f"query_profile: probabilities sum to {sum(qp.probs)!r}, not 1")
    if not 0 < hub.gamma < 1:
        out.append(f"gamma: discount {hub.gamma} must lie in (0, 1)")
    return out


# --- config files -----------------------------------------------------------

def hub_to_dict(hub: HubInstance) -> dict:
    names = list(hub.items)
    return {
        "items": names,
        "utility": {
            "u_min": hub.utility.u_min,
            "u_max": hub.utility.u_max,
            "values": {name: v for name, v in zip(names, hub.utility.values)},
        },
        "arms": [
            {"name": a.name, "probs": {name: p for name, p in zip(names, a.probs)}}
            for a in hub.arms
        ],
        "teachers": [{"name": t.name, "beta": t.beta, "cost": t.cost} for t in hub.teachers],
        "query_profile": [
            {"pair": [names[i], names[j]], "prob": p}
            for (i, j), p in zip(hub.query_profile.pairs, hub.query_profile.probs)
        ],
        "gamma": hub.gamma,
        "meta": hub.meta,
    }


def hub_from_dict(data: dict) -> HubInstance:
    names = list(data["items"])
    index = {name: k for k, name in enumerate(names)}
    ud = data["utility"]
    utility = UtilityFunction(
        tuple(float(ud["values"][name]) for name in names),
        float(ud["u_min"]), float(ud["u_max"]),
    )
    arms = tuple(
        ArmDistribution(tuple(float(a["probs"].get(name, 0.0)) for name in names), a.get("name", ""))
        for a in data["arms"]
    )
    teachers = tuple(
        Teacher(float(t["beta"]), float(t.get("cost", 0.0)), t.get("name", ""))
        for t in data["teachers"]
    )
    qp_data = data.get("query_profile")
    if qp_data is None:
        qp = QueryProfile.uniform(len(names))
    else:
        pairs, probs = [], []
        for q in qp_data:
            i, j = (index[x] for x in q["pair"])
            pairs.append((min(i, j), max(i, j)))
            probs.append(float(q["prob"]))
        qp = QueryProfile(tuple(pairs), tuple(probs))
    return HubInstance(
        tuple(names), utility, arms, teachers, qp, float(data["gamma"]), dict(data.get("meta", {}))
    )


def save_hub(hub: HubInstance, path) -> None:
    Path(path).write_text(json.dumps(hub_to_dict(hub), indent=2) + "\n")


def load_hub(path) -> HubInstance:
    return hub_from_dict(json.loads(Path(path).read_text()))
