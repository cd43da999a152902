"""Per-step episode records shared by every policy."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .hub import AgentObservation, ItemSample

CSV_COLUMNS = (
    "t", "action", "observation", "hidden_utility", "reward",
    "cumulative_discounted_reward", "u_hat", "arm_estimates", "flags",
)


@dataclass
class StepRecord:
    t: int
    kind: str                 # "pull" or "query"
    index: int                # arm index for pulls, teacher index for queries
    observation: AgentObservation
    hidden_utility: float     # nan for queries
    reward: float
    cumulative_discounted_reward: float
    u_hat: Optional[tuple] = None
    arm_estimates: Optional[tuple] = None
    flags: str = ""

    @property
    def action(self) -> str:
        return f"{self.kind}:{self.index}"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, tuple):
        return " ".join(repr(float(v)) for v in x)
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _fmt_obs(obs: AgentObservation) -> str:
    if isinstance(obs, ItemSample):
        return f"item:{obs.item}"
    return f"pref:{obs.pair[0]}>{obs.pair[1]}:{int(obs.preferred_first)}"


@dataclass
class EpisodeLog:
    algorithm: str
    gamma: float
    seed: Optional[int] = None
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    estimate: object = None

    def append(self, kind, index, observation, hidden_utility, reward,
               u_hat=None, arm_estimates=None, flags="") -> StepRecord:
        t = len(self.rows)
        prev = self.rows[-1].cumulative_discounted_reward if self.rows else 0.0
        rec = StepRecord(
            t, kind, int(index), observation, float(hidden_utility), float(reward),
            prev + self.gamma ** t * float(reward),
            None if u_hat is None else tuple(float(v) for v in u_hat),
            None if arm_estimates is None else tuple(float(v) for v in arm_estimates),
            flags,
        )
        self.rows.append(rec)
        return rec

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.rows])

    def discounted_return(self) -> float:
        r = self.rewards
        return float(np.sum(self.gamma ** np.arange(len(r)) * r))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([
                r.t, r.action, _fmt_obs(r.observation), _fmt(r.hidden_utility),
                repr(r.reward), repr(r.cumulative_discounted_reward),
                _fmt(r.u_hat), _fmt(r.arm_estimates), r.flags,
            ])
        return buf.getvalue()
