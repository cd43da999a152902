"""Explore-then-commit baseline with closed-form utility reconstruction.

The agent spends ``T`` steps flipping a fair coin between pulling a uniformly
random arm and querying a uniformly random teacher. Item frequencies estimate
the arm distributions; preference frequencies from one designated teacher are
inverted through the Boltzmann model into utility differences, which are then
anchored to ``[u_min, u_max]``. The remaining steps pull the arm with the
highest estimated expected utility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .episode import EpisodeLog
from .errors import InsufficientDataError, InvalidParameterError
from .hub import ArmDistribution, HubInstance, preference_matrix, pull_arm, query_teacher

CLIP_EPS = 1e-6


@dataclass
class ExplorationCounts:
    """Tallies from the exploration phase.

    Query statistics are kept per unordered pair ``pairs[q] = (i, j)`` with
    ``i < j``; ``preference_sums[m, q]`` counts how often teacher ``m``
    preferred ``i``. Presentation order is uniform, so this loses nothing.
    """

    arm_pulls: np.ndarray         # (K,)
    arm_item_counts: np.ndarray   # (K, N)
    query_counts: np.ndarray      # (M, P)
    preference_sums: np.ndarray   # (M, P)
    pairs: tuple

    @classmethod
    def zeros(cls, n_arms: int, n_items: int, n_teachers: int) -> "ExplorationCounts":
        pairs = tuple(combinations(range(n_items), 2))
        return cls(
            np.zeros(n_arms, dtype=np.int64),
            np.zeros((n_arms, n_items), dtype=np.int64),
            np.zeros((n_teachers, len(pairs)), dtype=np.int64),
            np.zeros((n_teachers, len(pairs)), dtype=np.int64),
            pairs,
        )

    @property
    def total(self) -> int:
        return int(self.arm_pulls.sum() + self.query_counts.sum())

    def pair_index(self, i: int, j: int) -> int:
        return self.pairs.index((min(i, j), max(i, j)))

    def tally_item(self, arm: int, item: int):
        self.arm_pulls[arm] += 1
        self.arm_item_counts[arm, item] += 1

    def tally_preference(self, teacher: int, pair, preferred_first: bool):
        i, j = pair
        q = self.pair_index(i, j)
        self.query_counts[teacher, q] += 1
        # winner of the comparison, re-expressed on the canonical orientation
        winner = i if preferred_first else j
        if winner == min(i, j):
            self.preference_sums[teacher, q] += 1


@dataclass
class NaiveEstimate:
    d_hat: list                 # list[ArmDistribution]
    p_hat: dict                 # (teacher, (i, j)) -> P(i > j)
    delta: dict                 # ordered (i, j) -> U(i) - U(j)
    u_hat: dict                 # item -> utility, items without a delta are absent


def explore(hub: HubInstance, T: int, rng: np.random.Generator) -> ExplorationCounts:
    """Run ``T`` uniform exploration steps and return the tallies."""
    K, N, M = hub.n_arms, hub.n_items, hub.n_teachers
    counts = ExplorationCounts.zeros(K, N, M)
    if T <= 0:
        return counts
    pull = rng.random(T) < 0.5
    n_pull = int(pull.sum())
    n_query = T - n_pull

    arms = rng.integers(K, size=n_pull)
    cdf = np.cumsum(hub.arm_matrix, axis=1)[arms]
    items = np.minimum((rng.random(n_pull)[:, None] >= cdf).sum(axis=1), N - 1)
    np.add.at(counts.arm_pulls, arms, 1)
    np.add.at(counts.arm_item_counts, (arms, items), 1)

    teachers = rng.integers(M, size=n_query)
    qp = hub.query_profile
    drawn = rng.choice(len(qp.pairs), size=n_query, p=qp.array)
    q_idx = np.array([counts.pair_index(*qp.pairs[d]) for d in range(len(qp.pairs))], dtype=np.int64)[drawn]
    pairs = np.array(counts.pairs, dtype=np.int64).reshape(-1, 2)
    betas = np.array([t.beta for t in hub.teachers])
    probs = np.empty((M, len(counts.pairs)))
    for m in range(M):
        probs[m] = preference_matrix(betas[m], hub.utility.array[None, :], pairs)[0]
    prefer_first = rng.random(n_query) < probs[teachers, q_idx]
    np.add.at(counts.query_counts, (teachers, q_idx), 1)
    np.add.at(counts.preference_sums, (teachers, q_idx), prefer_first.astype(np.int64))
    return counts


def estimate_distributions(counts: ExplorationCounts) -> list:
    out = []
    for k, n in enumerate(counts.arm_pulls):
        if n == 0:
            raise InsufficientDataError(f"arm {k} was never pulled")
        out.append(ArmDistribution(tuple(counts.arm_item_counts[k] / n)))
    return out


def estimate_preference_probs(counts: ExplorationCounts) -> dict:
    out = {}
    M, P = counts.query_counts.shape
    for m in range(M):
        for q in range(P):
            n = counts.query_counts[m, q]
            if n:
                out[(m, counts.pairs[q])] = counts.preference_sums[m, q] / n
    return out


def delta_from_preference(p: float, beta: float, eps: float = CLIP_EPS) -> float:
    """Invert the Boltzmann model: utility gap implied by preference rate ``p``."""
    if not math.isfinite(beta) or beta < 0:
        raise InvalidParameterError(f"beta must be finite and >= 0, got {beta}")
    if beta == 0:
        raise InvalidParameterError("beta = 0 teacher carries no utility information")
    p = min(max(float(p), eps), 1.0 - eps)
    return -math.log(1.0 / p - 1.0) / beta


def _complete_deltas(delta: dict) -> tuple[list, dict]:
    items = sorted({i for pair in delta for i in pair})
    full = {}
    for (i, j), v in delta.items():
        full[(i, j)] = float(v)
        full.setdefault((j, i), -float(v))
    for i in items:
        full[(i, i)] = 0.0
    for i in items:
        for j in items:
            if (i, j) in full:
                continue
            for z in items:
                if (i, z) in full and (z, j) in full and z not in (i, j):
                    full[(i, j)] = full[(i, z)] + full[(z, j)]
                    full[(j, i)] = -full[(i, j)]
                    break
    return items, full


def reconstruct_utility(delta: dict, u_min: float, u_max: float) -> dict:
    """Anchor utility differences to absolute utilities.

    The pair ``(x, y)`` with the largest gap fixes ``y`` at ``u_min``; every
    other item gets ``u_max / (u_max - u_min) * delta[i, y] + u_min`` clamped
    to the utility range. Items whose gap to ``y`` cannot be determined, even
    through one intermediate item, are left out.
    """
    if not delta:
        raise InsufficientDataError("no utility differences to reconstruct from")
    items, full = _complete_deltas(delta)
    best, (x, y) = -math.inf, (items[0], items[0])
    for i in items:
        for j in items:
            v = full.get((i, j))
            if v is not None and v > best:
                best, (x, y) = v, (i, j)
    scale = u_max / (u_max - u_min)
    out = {y: float(u_min)}
    for i in items:
        if i == y or (i, y) not in full:
            continue
        out[i] = float(min(max(scale * full[(i, y)] + u_min, u_min), u_max))
    return out


def naive_estimate(counts: ExplorationCounts, beta: float, teacher: int,
                   u_min: float, u_max: float) -> NaiveEstimate:
    """Distribution, preference-rate, gap and utility estimates from one set of tallies.

    Arms that were never pulled get ``None`` in ``d_hat``; if the chosen
    teacher answered no query the utility map is empty.
    """
    d_hat = [
        ArmDistribution(tuple(counts.arm_item_counts[k] / n)) if n else None
        for k, n in enumerate(counts.arm_pulls)
    ]
    p_hat = estimate_preference_probs(counts)
    raw = {pair: delta_from_preference(p, beta) for (m, pair), p in p_hat.items() if m == teacher}
    if raw:
        _, full = _complete_deltas(raw)
        u_hat = reconstruct_utility(raw, u_min, u_max)
    else:
        full, u_hat = {}, {}
    return NaiveEstimate(d_hat, p_hat, full, u_hat)


def filled_utility(u_hat: dict, n_items: int, u_min: float, u_max: float) -> np.ndarray:
    """Utility vector with unestimated items set to the middle of the range."""
    mid = 0.5 * (u_min + u_max)
    return np.array([u_hat.get(i, mid) for i in range(n_items)], dtype=float)


def run_naive_policy(hub: HubInstance, T: int, teacher_for_inference: int,
                     horizon: int, rng: np.random.Generator, name: str = None) -> EpisodeLog:
    """Explore for ``T`` steps, then commit to the best estimated arm."""
    beta = hub.teachers[teacher_for_inference].beta
    if beta <= 0:
        raise InvalidParameterError("inference teacher must have beta > 0")
    if not 0 <= T < horizon:
        raise InvalidParameterError(f"need 0 <= T < horizon, got T={T}, horizon={horizon}")
    log = EpisodeLog(name or f"Naive[{T}]", hub.gamma)
    counts = ExplorationCounts.zeros(hub.n_arms, hub.n_items, hub.n_teachers)
    nan = float("nan")
    for _ in range(T):
        if rng.random() < 0.5:
            arm = int(rng.integers(hub.n_arms))
            obs, u = pull_arm(hub, arm, rng)
            counts.tally_item(arm, obs.item)
            log.append("pull", arm, obs, u, u)
        else:
            m = int(rng.integers(hub.n_teachers))
            obs, cost = query_teacher(hub, m, rng)
            counts.tally_preference(m, obs.pair, obs.preferred_first)
            log.append("query", m, obs, nan, cost)

    u_min, u_max = hub.utility.u_min, hub.utility.u_max
    est = naive_estimate(counts, beta, teacher_for_inference, u_min, u_max)
    fallback = not est.u_hat or any(d is None for d in est.d_hat)
    u_vec = filled_utility(est.u_hat, hub.n_items, u_min, u_max)
    if fallback:
        arm_est = None
        choice = None
    else:
        d = np.vstack([x.array for x in est.d_hat])
        known = np.zeros(hub.n_items)
        for i, v in est.u_hat.items():
            known[i] = v
        mask = np.array([i in est.u_hat for i in range(hub.n_items)], dtype=float)
        scores = d @ (known * mask)
        choice = int(np.argmax(scores))     # argmax returns the lowest index on ties
        arm_est = d @ u_vec
    if fallback:
        log.events.append("insufficient-data: exploit phase uses uniform random arms")
    u_logged = tuple(est.u_hat.get(i, nan) for i in range(hub.n_items))
    for _ in range(horizon - T):
        arm = int(rng.integers(hub.n_arms)) if fallback else choice
        obs, u = pull_arm(hub, arm, rng)
        log.append("pull", arm, obs, u, u, u_logged if est.u_hat else None, arm_est,
                   "fallback" if fallback else "")
    log.estimate = est
    return log
