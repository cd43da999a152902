"""Closed-form teacher rationality estimates.

Preference rates on a single reference pair pin down each teacher's beta up
to a shared scale: ``beta = a * ln(1/P - 1)`` where ``P`` is the rate at which
the lesser item was preferred and ``a = -1 / (U(lesser) - U(greater))``. When
the gap is unknown, estimates are reported on a common scale with the most
rational teacher at 1.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidAnchorError, InvalidParameterError
from .hub import preference_matrix

CLIP_EPS = 1e-6


class BetaClampWarning(UserWarning):
    """An estimate or input had to be clipped into its legal range."""


def _clip(p: float, eps: float = CLIP_EPS) -> float:
    return min(max(float(p), eps), 1.0 - eps)


def beta_from_preference(P: float, a: float, warn: bool = True) -> float:
    """Rationality implied by preferring the lesser item at rate ``P``.

    ``a`` is ``-1 / delta`` for the (negative) utility gap of the pair. Rates
    above one half give a negative raw value, which is clamped to 0.
    """
    if not math.isfinite(a) or a <= 0:
        raise InvalidAnchorError(f"anchor scale a must be positive, got {a}")
    beta = a * math.log(1.0 / _clip(P) - 1.0)
    if beta < 0:
        if warn:
            warnings.warn(f"negative rationality estimate {beta:.4g} clamped to 0", BetaClampWarning)
        return 0.0
    return beta


def affine_anchor(u_lesser: float, u_greater: float) -> tuple[float, float]:
    """``(scale, shift)`` with ``scale * u + shift`` sending the pair to 0 and 1."""
    if not u_lesser < u_greater:
        raise InvalidAnchorError("anchor pair needs strictly ordered utilities")
    scale = 1.0 / (u_greater - u_lesser)
    return scale, -u_lesser * scale


@dataclass(frozen=True)
class PreferenceSampleSet:
    """One teacher's answers on the reference pair ``(lesser, greater)``."""

    pair: tuple[int, int]
    preferred_lesser: int
    total: int
    teacher: int = 0

    def __post_init__(self):
        if self.total < 1:
            raise InvalidParameterError("a sample set needs at least one query")
        if not 0 <= self.preferred_lesser <= self.total:
            raise InvalidParameterError("preferred count must lie in [0, total]")

    @property
    def rate(self) -> float:
        return self.preferred_lesser / self.total


@dataclass(frozen=True)
class BetaEstimate:
    teacher: int
    raw: float
    scaled: float
    scaling_anchor: str


def estimate_betas_from_logs(samples: Sequence[PreferenceSampleSet],
                             known_delta: Optional[float] = None,
                             warn: bool = True) -> list[BetaEstimate]:
    """Estimate every teacher's rationality from answers on one shared pair.

    Raw values use ``a = 1``. With ``known_delta`` (the negative gap
    ``U(lesser) - U(greater)``) they are rescaled to absolute units, otherwise
    divided by the largest raw value.
    """
    if not samples:
        raise InvalidAnchorError("no preference samples")
    pairs = {s.pair for s in samples}
    if len(pairs) != 1:
        raise InvalidAnchorError(f"teachers measured on different pairs: {sorted(pairs)}")
    pair = samples[0].pair
    raw = [beta_from_preference(s.rate, 1.0, warn) for s in samples]
    if known_delta is not None:
        if not known_delta < 0:
            raise InvalidAnchorError("known_delta must be U(lesser) - U(greater) < 0")
        a = -1.0 / known_delta
        scaled = [a * r for r in raw]
        anchor = f"pair {pair}, delta={known_delta!r}"
    else:
        top = max(raw)
        scaled = [r / top if top > 0 else 0.0 for r in raw]
        anchor = f"pair {pair}, max-normalised"
    return [BetaEstimate(s.teacher, r, v, anchor) for s, r, v in zip(samples, raw, scaled)]


def beta_from_sensitivity(sensitivity: float, u_min: float, u_max: float) -> float:
    """Rationality of a diagnostic test with the given true-positive rate.

    A test is read as a teacher comparing a patient at ``u_max`` against one
    at ``u_min``; it ranks them correctly with probability ``sensitivity``.
    """
    if not u_max > u_min:
        raise InvalidParameterError("need u_max > u_min")
    s = float(sensitivity)
    if not 0.0 <= s <= 1.0:
        raise InvalidParameterError(f"sensitivity must lie in [0, 1], got {s}")
    if s <= 0.0 or s >= 1.0:
        warnings.warn(f"degenerate sensitivity {s} clipped", BetaClampWarning)
    s = _clip(s)
    return math.log(s / (1.0 - s)) / (u_max - u_min)


def read_preference_log(path) -> list[tuple[int, int, int, bool]]:
    """Rows ``(teacher, item_i, item_j, preferred)`` from a CSV with that header.

    ``preferred`` is 1 when ``item_i`` won the comparison.
    """
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append((int(row["teacher"]), int(row["item_i"]), int(row["item_j"]),
                        bool(int(row["preferred"]))))
    return out


def sample_sets_from_log(rows, lesser: int, greater: int) -> list[PreferenceSampleSet]:
    """Tally each teacher's answers on the reference pair, in teacher order."""
    wins, totals = {}, {}
    for m, i, j, pref in rows:
        if {i, j} != {lesser, greater}:
            continue
        winner = i if pref else j
        totals[m] = totals.get(m, 0) + 1
        wins[m] = wins.get(m, 0) + int(winner == lesser)
    if not totals:
        raise InvalidAnchorError(f"no queries on pair ({lesser}, {greater})")
    return [PreferenceSampleSet((lesser, greater), wins[m], totals[m], m) for m in sorted(totals)]


def run_beta_recovery_study(true_betas: Sequence[float], steps: int, sims: int,
                            rng: np.random.Generator, n_arms: int = 2) -> float:
    """Mean squared error of max-normalised estimates under a random policy.

    The hub has two items with utilities 0 and 1 and ``n_arms`` arms; each
    step picks uniformly among pulling an arm and querying one of the
    teachers. Pulls carry no rationality information and are only counted.
    A teacher that was never queried is estimated at 0.
    """
    if steps < 1 or sims < 1:
        raise InvalidParameterError("steps and sims must be >= 1")
    betas = np.asarray(true_betas, dtype=float)
    M = len(betas)
    truth = betas / betas.max()
    # lesser item 0 at utility 0, greater item 1 at utility 1
    p_lesser = np.array([preference_matrix(b, np.array([[0.0, 1.0]]), [(0, 1)])[0, 0] for b in betas])
    errs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BetaClampWarning)
        for _ in range(sims):
            actions = rng.integers(n_arms + M, size=steps)
            n_q = np.bincount(actions[actions >= n_arms] - n_arms, minlength=M)
            wins = rng.binomial(n_q, p_lesser)
            sets = [PreferenceSampleSet((0, 1), int(w), int(n), m)
                    for m, (w, n) in enumerate(zip(wins, n_q)) if n > 0]
            est = np.zeros(M)
            for e in estimate_betas_from_logs(sets, warn=False):
                est[e.teacher] = e.scaled
            errs.append(np.mean((est - truth) ** 2))
    return float(np.mean(errs))
